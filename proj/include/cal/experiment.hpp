// Glue between training, checkpoints and evaluation: embedding whole splits,
// running the three ranking protocols, and text/CSV emission for logs.
#pragma once

#include <cstdio>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "cal/checkpoint.hpp"
#include "cal/datagen.hpp"
#include "cal/eval.hpp"
#include "cal/model.hpp"

namespace cal {

inline Matrix gather_features(const Dataset& ds, const std::vector<int>& indices) {
  Matrix x(static_cast<int>(indices.size()), ds.dim);
  for (size_t i = 0; i < indices.size(); ++i)
    std::copy(ds.samples[indices[i]].feature.begin(), ds.samples[indices[i]].feature.end(),
              x.row(static_cast<int>(i)));
  return x;
}

inline Matrix embed(const ModelParams& params, const Matrix& raw) {
  return forward_embed(params, raw).f;
}

struct EvalOutcome {
  std::map<ProtocolMode, RankingReport> reports;
  std::vector<std::string> skipped_protocols;  // with reason
};

inline EvalOutcome evaluate_on_dataset(const ModelParams& params, const Dataset& ds,
                                       const std::vector<ProtocolMode>& protocols,
                                       int max_rank = 10) {
  auto q_idx = ds.split_indices(Split::kQuery);
  auto g_idx = ds.split_indices(Split::kGallery);
  if (q_idx.empty() || g_idx.empty())
    throw std::invalid_argument("evaluate: dataset lacks query or gallery split");
  std::vector<Sample> queries, gallery;
  for (int i : q_idx) queries.push_back(ds.samples[i]);
  for (int i : g_idx) gallery.push_back(ds.samples[i]);
  Matrix qf = embed(params, gather_features(ds, q_idx));
  Matrix gf = embed(params, gather_features(ds, g_idx));

  EvalOutcome out;
  for (ProtocolMode mode : protocols) {
    try {
      out.reports[mode] = rank_and_score(qf, gf, queries, gallery, mode, max_rank);
    } catch (const std::runtime_error& e) {
      out.skipped_protocols.push_back(std::string(protocol_name(mode)) + ": " + e.what());
    }
  }
  return out;
}

inline std::string metrics_csv(const MetricsLog& log) {
  std::ostringstream out;
  out << "epoch,lr,loss_id,loss_clothes,loss_adversarial\n";
  char buf[256];
  for (const auto& em : log) {
    std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g,%.17g,%.17g\n", em.epoch, em.lr,
                  em.loss_id, em.loss_clothes, em.loss_adversarial);
    out << buf;
  }
  return out.str();
}

inline std::string convergence_report(const ConvergenceStats& stats) {
  std::ostringstream out;
  char buf[128];
  std::snprintf(buf, sizeof(buf),
                "median p_Pos   %.6g\nmedian p_PPos  %.6g\nmedian p_Neg   %.6g\n",
                stats.median_p_pos, stats.median_p_ppos, stats.median_p_neg);
  out << buf;
  auto hist = [&](const char* name, const std::vector<double>& v) {
    auto bins = decade_histogram(v);
    out << name << " histogram (decade bins, <1e-6 first): ";
    for (size_t i = 0; i < bins.size(); ++i) out << (i ? " " : "") << bins[i];
    out << "\n";
  };
  hist("p_Pos ", stats.p_pos);
  hist("p_PPos", stats.p_ppos);
  hist("p_Neg ", stats.p_neg);
  return out.str();
}

inline std::string convergence_csv(const ConvergenceStats& stats, const std::string& run_id) {
  std::ostringstream out;
  out << "run_id,statistic,median,n\n";
  char buf[160];
  auto row = [&](const char* name, double med, size_t n) {
    std::snprintf(buf, sizeof(buf), "%s,%s,%.17g,%zu\n", run_id.c_str(), name, med, n);
    out << buf;
  };
  row("p_pos", stats.median_p_pos, stats.p_pos.size());
  row("p_ppos", stats.median_p_ppos, stats.p_ppos.size());
  row("p_neg", stats.median_p_neg, stats.p_neg.size());
  return out.str();
}

// Convergence statistics of a trained checkpoint over the train split,
// with labels remapped through the checkpoint's tables.
inline ConvergenceStats checkpoint_convergence_stats(const Checkpoint& ckpt,
                                                     const Dataset& ds) {
  auto idx = ds.split_indices(Split::kTrain);
  if (idx.empty()) throw std::invalid_argument("stats: dataset has no train split");
  std::vector<Sample> dense;
  std::vector<int> ids, clothes;
  for (int i : idx) {
    Sample s = ds.samples[i];
    s.identity = ckpt.identity_map.at(s.identity);
    s.clothes = ckpt.clothes_map.at(s.clothes);
    ids.push_back(s.identity);
    clothes.push_back(s.clothes);
    dense.push_back(std::move(s));
  }
  ClothesRegistry reg = build_registry(dense);
  Matrix raw = gather_features(ds, idx);
  EmbedCache cache = forward_embed(ckpt.params, raw);
  return convergence_stats(cache.pre_norm, ids, clothes, ckpt.params.clothes_head, reg);
}

}  // namespace cal
