// Ranking evaluation: CMC and mAP under the general, clothes-changing and
// same-clothes protocols, plus the convergence-probability statistics of the
// clothes classifier.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "cal/core.hpp"
#include "cal/losses.hpp"
#include "cal/matrix.hpp"

namespace cal {

enum class ProtocolMode { kGeneral, kClothesChanging, kSameClothes };

inline const char* protocol_name(ProtocolMode m) {
  switch (m) {
    case ProtocolMode::kGeneral: return "general";
    case ProtocolMode::kClothesChanging: return "cc";
    case ProtocolMode::kSameClothes: return "sc";
  }
  return "?";
}

inline ProtocolMode protocol_from_name(const std::string& s) {
  if (s == "general") return ProtocolMode::kGeneral;
  if (s == "cc") return ProtocolMode::kClothesChanging;
  if (s == "sc") return ProtocolMode::kSameClothes;
  throw std::invalid_argument("unknown protocol: " + s);
}

struct GalleryMask {
  std::vector<char> valid;
  std::vector<char> positive;  // meaningful only where valid
};

// Gallery filtering rules. Same-identity-same-camera entries are always
// removed (standard re-id convention); the cc/sc modes additionally remove
// same-identity entries of the wrong clothes relation. Different-identity
// entries are always valid negatives.
inline GalleryMask build_gallery_mask(const Sample& query, const std::vector<Sample>& gallery,
                                      ProtocolMode mode) {
  GalleryMask mask;
  mask.valid.resize(gallery.size(), 1);
  mask.positive.resize(gallery.size(), 0);
  for (size_t g = 0; g < gallery.size(); ++g) {
    const Sample& s = gallery[g];
    if (s.identity != query.identity) continue;
    bool same_camera = s.camera == query.camera;
    bool same_clothes = s.clothes == query.clothes;
    bool invalid = same_camera;
    switch (mode) {
      case ProtocolMode::kGeneral:
        break;
      case ProtocolMode::kClothesChanging:
        invalid = invalid || same_clothes;
        break;
      case ProtocolMode::kSameClothes:
        invalid = invalid || !same_clothes;
        break;
    }
    if (invalid) {
      mask.valid[g] = 0;
    } else {
      mask.positive[g] = 1;
    }
  }
  return mask;
}

struct RankingReport {
  ProtocolMode mode = ProtocolMode::kGeneral;
  std::vector<double> cmc;  // cmc[k-1] = top-k accuracy
  double top1 = 0.0;
  double map = 0.0;
  int scored_queries = 0;
  int skipped_queries = 0;
  std::vector<int> valid_gallery_sizes;  // per scored query
};

// Descending cosine-similarity ranking over valid gallery entries, ties
// broken by gallery index. AP is the mean of precision at each positive's
// rank; queries with no valid positive are skipped.
inline RankingReport rank_and_score(const Matrix& query_features,
                                    const Matrix& gallery_features,
                                    const std::vector<Sample>& queries,
                                    const std::vector<Sample>& gallery,
                                    ProtocolMode mode, int max_rank = 10) {
  if (query_features.rows != static_cast<int>(queries.size()) ||
      gallery_features.rows != static_cast<int>(gallery.size()) ||
      query_features.cols != gallery_features.cols)
    throw std::invalid_argument("rank_and_score: shape mismatch");

  RankingReport report;
  report.mode = mode;
  report.cmc.assign(max_rank, 0.0);
  double ap_sum = 0.0;

  for (int qi = 0; qi < query_features.rows; ++qi) {
    GalleryMask mask = build_gallery_mask(queries[qi], gallery, mode);
    std::vector<int> valid_idx;
    for (size_t g = 0; g < gallery.size(); ++g)
      if (mask.valid[g]) valid_idx.push_back(static_cast<int>(g));
    bool has_positive = false;
    for (int g : valid_idx)
      if (mask.positive[g]) has_positive = true;
    if (!has_positive) {
      ++report.skipped_queries;
      continue;
    }

    std::vector<double> sims(valid_idx.size());
    for (size_t k = 0; k < valid_idx.size(); ++k)
      sims[k] = dot(query_features.row(qi), gallery_features.row(valid_idx[k]),
                    query_features.cols);
    std::vector<int> order(valid_idx.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
      if (sims[a] != sims[b]) return sims[a] > sims[b];
      return valid_idx[a] < valid_idx[b];
    });

    int hits = 0;
    int first_positive_rank = -1;
    double ap = 0.0;
    int total_positives = 0;
    for (size_t r = 0; r < order.size(); ++r) {
      if (mask.positive[valid_idx[order[r]]]) {
        ++hits;
        ++total_positives;
        ap += static_cast<double>(hits) / static_cast<double>(r + 1);
        if (first_positive_rank < 0) first_positive_rank = static_cast<int>(r + 1);
      }
    }
    ap /= total_positives;

    ++report.scored_queries;
    report.valid_gallery_sizes.push_back(static_cast<int>(valid_idx.size()));
    ap_sum += ap;
    for (int k = first_positive_rank; k <= max_rank; ++k) report.cmc[k - 1] += 1.0;
  }

  if (report.scored_queries == 0)
    throw std::runtime_error("rank_and_score: zero scored queries under protocol " +
                             std::string(protocol_name(mode)));
  for (auto& v : report.cmc) v /= report.scored_queries;
  report.top1 = report.cmc[0];
  report.map = ap_sum / report.scored_queries;
  return report;
}

struct ConvergenceStats {
  // Per sample: probability of the true clothes class, mean probability over
  // the other clothes of the same identity, mean over other identities'
  // clothes. p_ppos only covers samples whose identity owns >= 2 clothes.
  std::vector<double> p_pos, p_ppos, p_neg;
  std::vector<double> group_mass_sum;  // pos + ppos-mass + neg-mass, per sample
  double median_p_pos = 0.0, median_p_ppos = 0.0, median_p_neg = 0.0;
};

inline double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

inline ConvergenceStats convergence_stats(const Matrix& features,
                                          const std::vector<int>& identities,
                                          const std::vector<int>& clothes,
                                          const CosineHead& head,
                                          const ClothesRegistry& reg) {
  auto np = detail::cosine_logits(features, head);
  int nc = head.weights.rows;
  if (nc != reg.num_clothes)
    throw std::invalid_argument("convergence_stats: head size does not match registry");

  ConvergenceStats stats;
  for (int i = 0; i < features.rows; ++i) {
    std::vector<double> logits(np.logits.row(i), np.logits.row(i) + nc);
    std::vector<double> p = stable_softmax(logits);
    const auto& plus = reg.owned_clothes(identities[i]);
    double mass_pos = p[clothes[i]];
    double mass_ppos = 0.0;
    for (int c : plus)
      if (c != clothes[i]) mass_ppos += p[c];
    double mass_neg = 0.0;
    for (int c = 0; c < nc; ++c)
      if (!std::binary_search(plus.begin(), plus.end(), c)) mass_neg += p[c];

    stats.p_pos.push_back(mass_pos);
    int k = static_cast<int>(plus.size());
    if (k > 1) stats.p_ppos.push_back(mass_ppos / (k - 1));
    if (nc > k) stats.p_neg.push_back(mass_neg / (nc - k));
    stats.group_mass_sum.push_back(mass_pos + mass_ppos + mass_neg);
  }
  stats.median_p_pos = median(stats.p_pos);
  stats.median_p_ppos = median(stats.p_ppos);
  stats.median_p_neg = median(stats.p_neg);
  return stats;
}

// Decade-binned histogram over [1e-6, 1]; bin 0 catches values below 1e-6.
inline std::vector<int> decade_histogram(const std::vector<double>& values) {
  std::vector<int> bins(7, 0);
  for (double v : values) {
    if (v < 1e-6) {
      ++bins[0];
    } else {
      int b = static_cast<int>(std::floor(std::log10(v))) + 7;  // 1e-6 -> 1
      b = std::clamp(b, 1, 6);
      ++bins[b];
    }
  }
  return bins;
}

inline std::string format_ranking_report(const RankingReport& r) {
  char buf[256];
  std::ostringstream out;
  out << "[" << protocol_name(r.mode) << "]\n";
  std::snprintf(buf, sizeof(buf),
                "top-1   %.4f\ntop-5   %.4f\ntop-10  %.4f\nmAP     %.4f\n",
                r.cmc[0], r.cmc[std::min<size_t>(4, r.cmc.size() - 1)],
                r.cmc[std::min<size_t>(9, r.cmc.size() - 1)], r.map);
  out << buf;
  out << "scored queries   " << r.scored_queries << "\n";
  out << "skipped queries  " << r.skipped_queries << "\n";
  return out.str();
}

// Machine-readable rows: run_id,variant,protocol,metric,value
inline std::string ranking_report_csv(const RankingReport& r, const std::string& run_id,
                                      const std::string& variant) {
  char buf[256];
  std::ostringstream out;
  auto row = [&](const char* metric, double value) {
    std::snprintf(buf, sizeof(buf), "%s,%s,%s,%s,%.17g\n", run_id.c_str(), variant.c_str(),
                  protocol_name(r.mode), metric, value);
    out << buf;
  };
  row("top1", r.top1);
  row("top5", r.cmc[std::min<size_t>(4, r.cmc.size() - 1)]);
  row("top10", r.cmc[std::min<size_t>(9, r.cmc.size() - 1)]);
  row("map", r.map);
  row("skipped", r.skipped_queries);
  return out.str();
}

}  // namespace cal
