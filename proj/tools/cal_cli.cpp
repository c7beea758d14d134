// Experiment driver: dataset generation, variant training, protocol
// evaluation, hyper-parameter sweeps and convergence reports.
//
// Subcommands: generate, train, eval, sweep, stats. All options also load
// from a flat key=value file via --config; command-line flags override file
// values. Every run writes a resolved-config sidecar that reproduces it.
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cal/checkpoint.hpp"
#include "cal/datagen.hpp"
#include "cal/experiment.hpp"
#include "cal/model.hpp"

namespace fs = std::filesystem;
using namespace cal;

namespace {

struct Options {
  GenConfig gen;
  TrainingConfig train;
  std::string data = "data.calds";
  std::string checkpoint;
  std::string out;
  std::string run_id = "run";
  std::string variant = "cal";
  std::string scheme = "epsilon_eq5";
  std::string reduction = "mean";
  std::vector<std::string> protocols = {"all"};
  std::vector<double> epsilon_grid;
  std::vector<double> inv_tau_grid;
  uint64_t seed = 0;
  int clothes_per_identity = 0;  // 0 = keep the min..max range
};

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// Flat key=value provenance dump; feeding it back through --config
// reproduces the run.
std::string resolved_config(const Options& o, const std::string& subcommand) {
  std::ostringstream s;
  s << "# resolved configuration (" << subcommand << ")\n";
  s << "data = " << o.data << "\n";
  if (!o.checkpoint.empty()) s << "checkpoint = " << o.checkpoint << "\n";
  if (!o.out.empty()) s << "out = " << o.out << "\n";
  s << "run-id = " << o.run_id << "\n";
  s << "variant = " << o.variant << "\n";
  s << "seed = " << o.seed << "\n";
  s << "num-identities = " << o.gen.num_identities << "\n";
  s << "train-identities = " << o.gen.train_identities << "\n";
  s << "clothes-min = " << o.gen.clothes_per_identity_min << "\n";
  s << "clothes-max = " << o.gen.clothes_per_identity_max << "\n";
  s << "samples-per-clothes = " << o.gen.samples_per_clothes << "\n";
  s << "input-dim = " << o.gen.input_dim << "\n";
  s << "identity-subspace-dim = " << o.gen.identity_subspace_dim << "\n";
  s << "clothes-subspace-dim = " << o.gen.clothes_subspace_dim << "\n";
  s << "identity-scale = " << fmt_double(o.gen.identity_signal_scale) << "\n";
  s << "clothes-scale = " << fmt_double(o.gen.clothes_signal_scale) << "\n";
  s << "noise = " << fmt_double(o.gen.noise_scale) << "\n";
  s << "num-cameras = " << o.gen.num_cameras << "\n";
  s << "epochs = " << o.train.epochs << "\n";
  s << "cal-start = " << o.train.cal_start_epoch << "\n";
  s << "lr = " << fmt_double(o.train.lr) << "\n";
  s << "lr-decay-epochs = ";
  for (size_t i = 0; i < o.train.lr_decay_epochs.size(); ++i)
    s << (i ? " " : "") << o.train.lr_decay_epochs[i];
  s << "\n";
  s << "lr-decay-factor = " << fmt_double(o.train.lr_decay_factor) << "\n";
  s << "tau = " << fmt_double(o.train.tau) << "\n";
  s << "epsilon = " << fmt_double(o.train.epsilon) << "\n";
  s << "scheme = " << o.scheme << "\n";
  s << "lambda-ca = " << fmt_double(o.train.lambda_ca) << "\n";
  s << "triplet-margin = " << fmt_double(o.train.triplet_margin) << "\n";
  s << "label-smoothing = " << fmt_double(o.train.label_smoothing) << "\n";
  s << "batch-p = " << o.train.batch_identities << "\n";
  s << "batch-q = " << o.train.batch_instances << "\n";
  s << "reduction = " << o.reduction << "\n";
  s << "embed-dim = " << o.train.embed_dim << "\n";
  s << "hidden-dim = " << o.train.hidden_dim << "\n";
  s << "protocol = ";
  for (size_t i = 0; i < o.protocols.size(); ++i) s << (i ? " " : "") << o.protocols[i];
  s << "\n";
  if (!o.epsilon_grid.empty()) {
    s << "epsilon-grid = ";
    for (size_t i = 0; i < o.epsilon_grid.size(); ++i)
      s << (i ? " " : "") << fmt_double(o.epsilon_grid[i]);
    s << "\n";
  }
  if (!o.inv_tau_grid.empty()) {
    s << "inv-tau-grid = ";
    for (size_t i = 0; i < o.inv_tau_grid.size(); ++i)
      s << (i ? " " : "") << fmt_double(o.inv_tau_grid[i]);
    s << "\n";
  }
  return s.str();
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << content;
  if (!out) throw std::runtime_error("write failed: " + path);
}

void finalize(Options& o) {
  o.gen.seed = o.seed;
  o.train.seed = o.seed;
  if (o.clothes_per_identity > 0) {
    o.gen.clothes_per_identity_min = o.clothes_per_identity;
    o.gen.clothes_per_identity_max = o.clothes_per_identity;
  }
  o.train.cal_scheme = o.scheme == "uniform_eq4" ? CalScheme::kUniform : CalScheme::kEpsilon;
  if (o.scheme != "uniform_eq4" && o.scheme != "epsilon_eq5")
    throw std::invalid_argument("unknown scheme: " + o.scheme);
  if (o.reduction == "mean")
    o.train.reduction = Reduction::kMean;
  else if (o.reduction == "sum")
    o.train.reduction = Reduction::kSum;
  else
    throw std::invalid_argument("unknown reduction: " + o.reduction);
}

std::vector<ProtocolMode> parse_protocols(const std::vector<std::string>& names) {
  std::vector<ProtocolMode> modes;
  for (const auto& n : names) {
    if (n == "all") {
      return {ProtocolMode::kGeneral, ProtocolMode::kClothesChanging,
              ProtocolMode::kSameClothes};
    }
    modes.push_back(protocol_from_name(n));
  }
  return modes;
}

std::string out_dir(const Options& o) {
  std::string dir = o.out.empty() ? o.run_id : o.out;
  fs::create_directories(dir);
  return dir;
}

// Hash of the run-defining fields only; output paths and labels are
// excluded so reruns into a different directory produce identical bytes.
uint64_t config_hash(const Options& o, const std::string& subcommand) {
  std::istringstream in(resolved_config(o, subcommand));
  std::ostringstream kept;
  std::string line;
  while (std::getline(in, line))
    if (line.rfind("out =", 0) != 0 && line.rfind("run-id =", 0) != 0 &&
        line.rfind("data =", 0) != 0 && line.rfind("checkpoint =", 0) != 0)
      kept << line << "\n";
  return fnv1a(kept.str());
}

int cmd_generate(Options& o) {
  std::string path = o.out.empty() ? o.data : o.out;
  Dataset ds = generate(o.gen);
  save_dataset(ds, path);

  auto reg = build_registry(ds.samples);
  if (o.gen.clothes_per_identity_max < 2)
    std::fprintf(stderr,
                 "warning: every identity has a single outfit; clothes-changing "
                 "evaluation on this dataset will have no valid queries\n");

  std::ostringstream reg_txt;
  reg_txt << "identities " << reg.num_identities << "\n";
  reg_txt << "clothes_classes " << reg.num_clothes << "\n";
  for (const auto& [id, owned] : reg.owned) {
    reg_txt << "identity " << id << " owns";
    for (int c : owned) reg_txt << " " << c;
    reg_txt << "\n";
  }
  write_file(path + ".registry.txt", reg_txt.str());

  std::map<Split, int> counts;
  std::set<int> train_ids, test_ids;
  for (const auto& s : ds.samples) {
    counts[s.split]++;
    (s.split == Split::kTrain ? train_ids : test_ids).insert(s.identity);
  }
  std::printf("wrote %s (%zu samples, dim %d)\n", path.c_str(), ds.samples.size(), ds.dim);
  std::printf("identities      %d (train %zu / test %zu)\n", reg.num_identities,
              train_ids.size(), test_ids.size());
  std::printf("clothes classes %d\n", reg.num_clothes);
  std::printf("train %d  query %d  gallery %d\n", counts[Split::kTrain],
              counts[Split::kQuery], counts[Split::kGallery]);
  return 0;
}

int cmd_train(Options& o) {
  Dataset ds = load_dataset(o.data);
  Variant variant = variant_from_name(o.variant);
  TrainResult result = train_variant(o.train, ds.samples, variant);

  std::string dir = out_dir(o);
  Checkpoint ckpt{result.params, result.view.identity_map, result.view.clothes_map,
                  config_hash(o, "train")};
  save_checkpoint(ckpt, dir + "/checkpoint.calckpt");
  write_file(dir + "/losses.csv", metrics_csv(result.log));
  write_file(dir + "/config.resolved", resolved_config(o, "train"));
  std::printf("trained %s for %d epochs on %s\n", o.variant.c_str(), o.train.epochs,
              o.data.c_str());
  if (!result.log.empty())
    std::printf("final losses: id %.6g clothes %.6g adversarial %.6g\n",
                result.log.back().loss_id, result.log.back().loss_clothes,
                result.log.back().loss_adversarial);
  std::printf("wrote %s/checkpoint.calckpt, losses.csv, config.resolved\n", dir.c_str());
  return 0;
}

int cmd_eval(Options& o) {
  Dataset ds = load_dataset(o.data);
  Checkpoint ckpt = load_checkpoint(o.checkpoint);
  auto modes = parse_protocols(o.protocols);
  EvalOutcome outcome = evaluate_on_dataset(ckpt.params, ds, modes);

  std::ostringstream report, csv;
  for (ProtocolMode m : modes)
    if (outcome.reports.count(m)) report << format_ranking_report(outcome.reports[m]) << "\n";
  for (const auto& skipped : outcome.skipped_protocols)
    report << "[skipped] " << skipped << "\n";
  csv << "run_id,variant,protocol,metric,value\n";
  for (ProtocolMode m : modes)
    if (outcome.reports.count(m))
      csv << ranking_report_csv(outcome.reports[m], o.run_id, o.variant);

  std::string dir = out_dir(o);
  write_file(dir + "/report.txt", report.str());
  write_file(dir + "/report.csv", csv.str());
  write_file(dir + "/config.resolved", resolved_config(o, "eval"));
  std::fputs(report.str().c_str(), stdout);
  std::printf("wrote %s/report.txt, report.csv, config.resolved\n", dir.c_str());
  return 0;
}

int cmd_sweep(Options& o) {
  if (o.epsilon_grid.empty() && o.inv_tau_grid.empty())
    throw std::invalid_argument("sweep: provide --epsilon-grid and/or --inv-tau-grid");
  Dataset ds = load_dataset(o.data);
  std::string dir = out_dir(o);

  auto run_point = [&](const TrainingConfig& tc) {
    TrainResult r = train_variant(tc, ds.samples, Variant::kCal);
    EvalOutcome out = evaluate_on_dataset(
        r.params, ds, {ProtocolMode::kClothesChanging, ProtocolMode::kSameClothes});
    double cc = out.reports.count(ProtocolMode::kClothesChanging)
                    ? out.reports[ProtocolMode::kClothesChanging].top1
                    : 0.0;
    double sc = out.reports.count(ProtocolMode::kSameClothes)
                    ? out.reports[ProtocolMode::kSameClothes].top1
                    : 0.0;
    return std::pair<double, double>(cc, sc);
  };

  std::ostringstream table;
  auto sweep_axis = [&](const char* axis, const std::vector<double>& grid,
                        auto apply) {
    std::ostringstream cc_dat, sc_dat;
    table << axis << "  cc_top1  sc_top1\n";
    for (double v : grid) {
      TrainingConfig tc = o.train;
      apply(tc, v);
      auto [cc, sc] = run_point(tc);
      char buf[128];
      std::snprintf(buf, sizeof(buf), "%-8g %.4f   %.4f\n", v, cc, sc);
      table << buf;
      cc_dat << fmt_double(v) << " " << fmt_double(cc) << "\n";
      sc_dat << fmt_double(v) << " " << fmt_double(sc) << "\n";
      std::printf("%s %g: cc %.4f sc %.4f\n", axis, v, cc, sc);
      std::fflush(stdout);
    }
    write_file(dir + "/" + axis + "_cc.dat", cc_dat.str());
    write_file(dir + "/" + axis + "_sc.dat", sc_dat.str());
  };

  if (!o.epsilon_grid.empty())
    sweep_axis("epsilon", o.epsilon_grid,
               [](TrainingConfig& tc, double v) { tc.epsilon = v; });
  if (!o.inv_tau_grid.empty())
    sweep_axis("inv_tau", o.inv_tau_grid,
               [](TrainingConfig& tc, double v) { tc.tau = 1.0 / v; });

  write_file(dir + "/sweep_table.txt", table.str());
  write_file(dir + "/config.resolved", resolved_config(o, "sweep"));
  std::printf("wrote %s/sweep_table.txt and plot data files\n", dir.c_str());
  return 0;
}

int cmd_stats(Options& o) {
  Dataset ds = load_dataset(o.data);
  Checkpoint ckpt = load_checkpoint(o.checkpoint);
  ConvergenceStats stats = checkpoint_convergence_stats(ckpt, ds);

  std::string dir = out_dir(o);
  std::string report = convergence_report(stats);
  write_file(dir + "/convergence.txt", report);
  write_file(dir + "/convergence.csv", convergence_csv(stats, o.run_id));
  write_file(dir + "/config.resolved", resolved_config(o, "stats"));
  std::fputs(report.c_str(), stdout);
  std::printf("wrote %s/convergence.txt, convergence.csv, config.resolved\n", dir.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  Options o;
  CLI::App app{"CAL experiment driver"};
  app.set_config("--config", "", "flat key=value configuration file");
  app.require_subcommand(1);

  app.add_option("--data", o.data, "dataset file (CALDS v1)");
  app.add_option("--checkpoint", o.checkpoint, "checkpoint file (CALCKPT v1)");
  app.add_option("--out", o.out,
                 "output path (generate: dataset file; other commands: directory)");
  app.add_option("--run-id", o.run_id, "label used in CSV rows and output directories");
  app.add_option("--seed", o.seed, "seed for generation and training");
  app.add_option("--variant", o.variant,
                 "baseline | with_clothes_classifier | cal | cal_negative | triplet");
  app.add_option("--protocol", o.protocols, "general | cc | sc | all (repeatable)");

  app.add_option("--num-identities", o.gen.num_identities, "total identities");
  app.add_option("--train-identities", o.gen.train_identities, "identities in the train split");
  app.add_option("--clothes-min", o.gen.clothes_per_identity_min, "min outfits per identity");
  app.add_option("--clothes-max", o.gen.clothes_per_identity_max, "max outfits per identity");
  app.add_option("--clothes-per-identity", o.clothes_per_identity,
                 "fixed outfits per identity (overrides min/max)");
  app.add_option("--samples-per-clothes", o.gen.samples_per_clothes, "samples per outfit");
  app.add_option("--input-dim", o.gen.input_dim, "raw feature dimension");
  app.add_option("--identity-subspace-dim", o.gen.identity_subspace_dim,
                 "identity signal subspace width");
  app.add_option("--clothes-subspace-dim", o.gen.clothes_subspace_dim,
                 "clothes signal subspace width");
  app.add_option("--identity-scale", o.gen.identity_signal_scale, "identity signal scale a");
  app.add_option("--clothes-scale", o.gen.clothes_signal_scale, "clothes signal scale b");
  app.add_option("--noise", o.gen.noise_scale, "noise scale sigma");
  app.add_option("--num-cameras", o.gen.num_cameras, "camera count");

  app.add_option("--epochs", o.train.epochs, "training epochs");
  app.add_option("--cal-start", o.train.cal_start_epoch, "epoch at which L_CA activates");
  app.add_option("--lr", o.train.lr, "initial learning rate");
  app.add_option("--lr-decay-epochs", o.train.lr_decay_epochs, "epochs at which lr divides");
  app.add_option("--lr-decay-factor", o.train.lr_decay_factor, "lr division factor");
  app.add_option("--tau", o.train.tau, "cosine logit temperature");
  app.add_option("--epsilon", o.train.epsilon, "CAL weight interpolation");
  app.add_option("--scheme", o.scheme, "uniform_eq4 | epsilon_eq5");
  app.add_option("--lambda-ca", o.train.lambda_ca, "weight of L_CA in the backbone step");
  app.add_option("--triplet-margin", o.train.triplet_margin, "triplet variant margin");
  app.add_option("--label-smoothing", o.train.label_smoothing, "identity CE smoothing");
  app.add_option("--batch-p", o.train.batch_identities, "identities per batch (P)");
  app.add_option("--batch-q", o.train.batch_instances, "instances per identity (Q)");
  app.add_option("--reduction", o.reduction, "mean | sum");
  app.add_option("--embed-dim", o.train.embed_dim, "embedding dimension");
  app.add_option("--hidden-dim", o.train.hidden_dim, "hidden layer width (0 = linear)");

  app.add_option("--epsilon-grid", o.epsilon_grid, "epsilon values for sweep");
  app.add_option("--inv-tau-grid", o.inv_tau_grid, "1/tau values for sweep");

  CLI::App* c_generate = app.add_subcommand("generate", "write a synthetic CALDS dataset");
  CLI::App* c_train = app.add_subcommand("train", "train a variant and write a checkpoint");
  CLI::App* c_eval = app.add_subcommand("eval", "rank query against gallery per protocol");
  CLI::App* c_sweep = app.add_subcommand("sweep", "train/evaluate over an epsilon or 1/tau grid");
  CLI::App* c_stats = app.add_subcommand("stats", "convergence statistics of a checkpoint");
  for (CLI::App* sub : {c_generate, c_train, c_eval, c_sweep, c_stats}) sub->fallthrough();

  CLI11_PARSE(app, argc, argv);

  try {
    finalize(o);
    if (c_generate->parsed()) return cmd_generate(o);
    if (c_train->parsed()) return cmd_train(o);
    if (c_eval->parsed()) return cmd_eval(o);
    if (c_sweep->parsed()) return cmd_sweep(o);
    if (c_stats->parsed()) return cmd_stats(o);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
