// Versioned text checkpoint: all parameter tensors in hex-float plus the
// label remap tables, so a load reproduces evaluation outputs bit-exactly.
#pragma once

#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "cal/model.hpp"

namespace cal {

struct Checkpoint {
  ModelParams params;
  std::map<int, int> identity_map;  // original label -> classifier row
  std::map<int, int> clothes_map;
  uint64_t config_hash = 0;
};

inline uint64_t fnv1a(const std::string& s) {
  uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

namespace detail {

inline void write_tensor(std::ostream& out, const std::string& name, const Matrix& m) {
  out << "tensor " << name << ' ' << m.rows << ' ' << m.cols << '\n';
  char buf[64];
  for (int i = 0; i < m.rows; ++i) {
    for (int j = 0; j < m.cols; ++j) {
      std::snprintf(buf, sizeof(buf), j ? " %a" : "%a", m(i, j));
      out << buf;
    }
    out << '\n';
  }
}

inline void write_vector(std::ostream& out, const std::string& name,
                         const std::vector<double>& v) {
  Matrix m(1, static_cast<int>(v.size()));
  m.data = v;
  write_tensor(out, name, m);
}

inline Matrix read_tensor(std::istream& in, const std::string& expected_name) {
  std::string tag, name;
  int rows, cols;
  if (!(in >> tag >> name >> rows >> cols) || tag != "tensor" || name != expected_name)
    throw std::runtime_error("checkpoint: expected tensor " + expected_name);
  Matrix m(rows, cols);
  for (auto& v : m.data) {
    std::string tok;
    if (!(in >> tok)) throw std::runtime_error("checkpoint: truncated tensor " + expected_name);
    v = std::strtod(tok.c_str(), nullptr);
  }
  return m;
}

inline void write_map(std::ostream& out, const std::string& name,
                      const std::map<int, int>& m) {
  out << name << ' ' << m.size() << '\n';
  for (const auto& [k, v] : m) out << k << ' ' << v << '\n';
}

inline std::map<int, int> read_map(std::istream& in, const std::string& expected_name) {
  std::string name;
  size_t n;
  if (!(in >> name >> n) || name != expected_name)
    throw std::runtime_error("checkpoint: expected map " + expected_name);
  std::map<int, int> m;
  for (size_t i = 0; i < n; ++i) {
    int k, v;
    if (!(in >> k >> v)) throw std::runtime_error("checkpoint: truncated map " + expected_name);
    m[k] = v;
  }
  return m;
}

}  // namespace detail

inline void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_checkpoint: cannot open " + path);
  out << "CALCKPT v1\n";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(ckpt.config_hash));
  out << "confighash " << buf << '\n';
  std::snprintf(buf, sizeof(buf), "%a", ckpt.params.clothes_head.tau);
  out << "tau " << buf << '\n';
  out << "layers " << ckpt.params.backbone.layers.size() << '\n';
  for (size_t l = 0; l < ckpt.params.backbone.layers.size(); ++l) {
    detail::write_tensor(out, "backbone.w" + std::to_string(l),
                         ckpt.params.backbone.layers[l].weights);
    detail::write_vector(out, "backbone.b" + std::to_string(l),
                         ckpt.params.backbone.layers[l].bias);
  }
  detail::write_tensor(out, "id_head.w", ckpt.params.id_head.weights);
  detail::write_vector(out, "id_head.b", ckpt.params.id_head.bias);
  detail::write_tensor(out, "clothes_head.w", ckpt.params.clothes_head.weights);
  detail::write_map(out, "idmap", ckpt.identity_map);
  detail::write_map(out, "clothesmap", ckpt.clothes_map);
  if (!out) throw std::runtime_error("save_checkpoint: write failed for " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_checkpoint: cannot open " + path);
  std::string magic, version;
  if (!(in >> magic >> version) || magic != "CALCKPT" || version != "v1")
    throw std::runtime_error("load_checkpoint: malformed header in " + path);
  Checkpoint ckpt;
  std::string tag, hex;
  if (!(in >> tag >> hex) || tag != "confighash")
    throw std::runtime_error("load_checkpoint: missing config hash");
  ckpt.config_hash = std::strtoull(hex.c_str(), nullptr, 16);
  std::string tau_tok;
  if (!(in >> tag >> tau_tok) || tag != "tau")
    throw std::runtime_error("load_checkpoint: missing tau");
  ckpt.params.clothes_head.tau = std::strtod(tau_tok.c_str(), nullptr);
  size_t layers;
  if (!(in >> tag >> layers) || tag != "layers")
    throw std::runtime_error("load_checkpoint: missing layer count");
  for (size_t l = 0; l < layers; ++l) {
    AffineLayer layer;
    layer.weights = detail::read_tensor(in, "backbone.w" + std::to_string(l));
    Matrix b = detail::read_tensor(in, "backbone.b" + std::to_string(l));
    layer.bias = b.data;
    ckpt.params.backbone.layers.push_back(std::move(layer));
  }
  ckpt.params.id_head.weights = detail::read_tensor(in, "id_head.w");
  ckpt.params.id_head.bias = detail::read_tensor(in, "id_head.b").data;
  ckpt.params.clothes_head.weights = detail::read_tensor(in, "clothes_head.w");
  ckpt.identity_map = detail::read_map(in, "idmap");
  ckpt.clothes_map = detail::read_map(in, "clothesmap");
  return ckpt;
}

}  // namespace cal
