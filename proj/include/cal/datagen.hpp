// Synthetic clothes-entangled benchmark generator and the CALDS v1 text
// serialization format.
//
// Signal model: raw feature = a * u(identity) + b * v(clothes) + sigma * n.
// Identity directions u and clothes directions v are random unit vectors
// drawn inside two fixed mutually orthogonal subspaces (identity_subspace_dim
// and clothes_subspace_dim wide). The subspace structure is what lets any
// learned suppression or retention of a cue transfer to the unseen test
// identities and clothes. With b > a the clothes cue dominates the raw
// geometry.
#pragma once

#include <cinttypes>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "cal/core.hpp"
#include "cal/matrix.hpp"
#include "cal/rng.hpp"

namespace cal {

struct GenConfig {
  int num_identities = 226;
  int train_identities = 75;
  int clothes_per_identity_min = 2;
  int clothes_per_identity_max = 5;
  int samples_per_clothes = 8;
  int input_dim = 64;
  int identity_subspace_dim = 32;
  int clothes_subspace_dim = 16;
  double identity_signal_scale = 1.0;  // a
  double clothes_signal_scale = 10.0;  // b
  double noise_scale = 0.1;            // sigma
  int num_cameras = 4;
  uint64_t seed = 0;

  void validate() const {
    if (num_identities < 1) throw std::invalid_argument("gen: num_identities < 1");
    if (train_identities < 0 || train_identities > num_identities)
      throw std::invalid_argument("gen: train_identities out of range");
    if (clothes_per_identity_min < 1 ||
        clothes_per_identity_max < clothes_per_identity_min)
      throw std::invalid_argument("gen: bad clothes_per_identity range");
    if (samples_per_clothes < 1) throw std::invalid_argument("gen: samples_per_clothes < 1");
    if (train_identities < num_identities && samples_per_clothes < 2)
      throw std::invalid_argument(
          "gen: test identities need samples_per_clothes >= 2 to fill query and gallery");
    if (input_dim < 1) throw std::invalid_argument("gen: input_dim < 1");
    if (identity_subspace_dim < 1 || clothes_subspace_dim < 1 ||
        identity_subspace_dim + clothes_subspace_dim > input_dim)
      throw std::invalid_argument("gen: subspace dimensions do not fit input_dim");
    if (noise_scale < 0.0) throw std::invalid_argument("gen: noise_scale < 0");
    if (num_cameras < 1) throw std::invalid_argument("gen: num_cameras < 1");
  }
};

struct Dataset {
  std::vector<Sample> samples;
  int dim = 0;

  std::vector<int> split_indices(Split s) const {
    std::vector<int> out;
    for (size_t i = 0; i < samples.size(); ++i)
      if (samples[i].split == s) out.push_back(static_cast<int>(i));
    return out;
  }
};

namespace detail {

// Gram-Schmidt over fresh random vectors; rejects near-dependent draws.
inline std::vector<std::vector<double>> random_orthonormal_basis(Rng& rng, int count,
                                                                 int dim) {
  std::vector<std::vector<double>> basis;
  while (static_cast<int>(basis.size()) < count) {
    std::vector<double> v = rng.normal_vector(dim);
    for (const auto& b : basis) {
      double proj = dot(v.data(), b.data(), dim);
      for (int d = 0; d < dim; ++d) v[d] -= proj * b[d];
    }
    double n = std::sqrt(dot(v.data(), v.data(), dim));
    if (n < 1e-8) continue;
    for (auto& x : v) x /= n;
    basis.push_back(std::move(v));
  }
  return basis;
}

// Random unit vector inside the span of the given orthonormal basis.
inline std::vector<double> random_unit_in_span(Rng& rng,
                                               const std::vector<std::vector<double>>& basis,
                                               int dim) {
  std::vector<double> coeff = rng.normal_vector(static_cast<int>(basis.size()));
  std::vector<double> v(dim, 0.0);
  for (size_t b = 0; b < basis.size(); ++b)
    for (int d = 0; d < dim; ++d) v[d] += coeff[b] * basis[b][d];
  double n = std::sqrt(dot(v.data(), v.data(), dim));
  for (auto& x : v) x /= n;
  return v;
}

}  // namespace detail

inline Dataset generate(const GenConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);

  // One orthonormal frame split into the identity and clothes subspaces,
  // so the two cues never interfere.
  auto frame = detail::random_orthonormal_basis(
      rng, cfg.identity_subspace_dim + cfg.clothes_subspace_dim, cfg.input_dim);
  std::vector<std::vector<double>> identity_basis(
      frame.begin(), frame.begin() + cfg.identity_subspace_dim);
  std::vector<std::vector<double>> clothes_basis(
      frame.begin() + cfg.identity_subspace_dim, frame.end());

  Dataset ds;
  ds.dim = cfg.input_dim;
  int next_clothes = 0;
  int next_sample = 0;
  for (int id = 0; id < cfg.num_identities; ++id) {
    bool is_train = id < cfg.train_identities;
    int span = cfg.clothes_per_identity_max - cfg.clothes_per_identity_min + 1;
    int k = cfg.clothes_per_identity_min + static_cast<int>(rng.uniform_index(span));
    std::vector<double> u = detail::random_unit_in_span(rng, identity_basis, cfg.input_dim);

    for (int ci = 0; ci < k; ++ci) {
      int clothes = next_clothes++;
      std::vector<double> v = detail::random_unit_in_span(rng, clothes_basis, cfg.input_dim);

      for (int s = 0; s < cfg.samples_per_clothes; ++s) {
        Sample sample;
        sample.id = next_sample++;
        sample.identity = id;
        sample.clothes = clothes;
        sample.camera = static_cast<int>(rng.uniform_index(cfg.num_cameras));
        sample.feature.resize(cfg.input_dim);
        for (int d = 0; d < cfg.input_dim; ++d)
          sample.feature[d] = cfg.identity_signal_scale * u[d] +
                              cfg.clothes_signal_scale * v[d] +
                              cfg.noise_scale * rng.normal();
        if (is_train)
          sample.split = Split::kTrain;
        else
          sample.split = (s == 0) ? Split::kQuery : Split::kGallery;
        ds.samples.push_back(std::move(sample));
      }
    }
  }
  return ds;
}

inline void save_dataset(const Dataset& ds, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_dataset: cannot open " + path);
  char buf[64];
  out << "CALDS v1 D=" << ds.dim << " N=" << ds.samples.size() << "\n";
  for (const auto& s : ds.samples) {
    out << s.id << ' ' << s.identity << ' ' << s.clothes << ' ' << s.camera << ' '
        << split_name(s.split);
    for (double v : s.feature) {
      std::snprintf(buf, sizeof(buf), " %a", v);
      out << buf;
    }
    out << "\n";
  }
  if (!out) throw std::runtime_error("save_dataset: write failed for " + path);
}

inline Dataset load_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_dataset: cannot open " + path);
  std::string header;
  std::getline(in, header);
  int dim = 0;
  size_t count = 0;
  if (std::sscanf(header.c_str(), "CALDS v1 D=%d N=%zu", &dim, &count) != 2)
    throw std::runtime_error("load_dataset: malformed header: " + header);
  if (dim < 1) throw std::runtime_error("load_dataset: bad dimension in header");

  Dataset ds;
  ds.dim = dim;
  std::set<int> seen_ids;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    Sample s;
    std::string split;
    if (!(ls >> s.id >> s.identity >> s.clothes >> s.camera >> split))
      throw std::runtime_error("load_dataset: malformed record: " + line);
    s.split = split_from_name(split);
    s.feature.resize(dim);
    for (int d = 0; d < dim; ++d) {
      std::string tok;
      if (!(ls >> tok)) throw std::runtime_error("load_dataset: dimension mismatch in record");
      s.feature[d] = std::strtod(tok.c_str(), nullptr);
    }
    double extra;
    if (ls >> extra) throw std::runtime_error("load_dataset: dimension mismatch in record");
    if (!seen_ids.insert(s.id).second)
      throw std::runtime_error("load_dataset: duplicate sample id " + std::to_string(s.id));
    ds.samples.push_back(std::move(s));
  }
  if (ds.samples.size() != count)
    throw std::runtime_error("load_dataset: record count does not match header");
  if (!ds.samples.empty())
    build_registry(ds.samples);  // validates the ownership invariants
  return ds;
}

}  // namespace cal
