// Domain types: samples with identity/clothes labels, the identity<->clothes
// registry, and the identity-balanced (PK) batch sampler.
#pragma once

#include <algorithm>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "cal/rng.hpp"

namespace cal {

enum class Split { kTrain, kQuery, kGallery };

inline const char* split_name(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kQuery: return "query";
    case Split::kGallery: return "gallery";
  }
  return "?";
}

inline Split split_from_name(const std::string& s) {
  if (s == "train") return Split::kTrain;
  if (s == "query") return Split::kQuery;
  if (s == "gallery") return Split::kGallery;
  throw std::invalid_argument("unknown split tag: " + s);
}

struct Sample {
  int id = 0;  // unique sample id
  std::vector<double> feature;
  int identity = 0;  // y^ID
  int clothes = 0;   // y^C, globally unique across identities
  int camera = 0;
  Split split = Split::kTrain;
};

// Bidirectional identity<->clothes maps. Immutable after construction.
struct ClothesRegistry {
  int num_identities = 0;
  int num_clothes = 0;
  std::map<int, int> owner;                    // clothes -> identity
  std::map<int, std::vector<int>> owned;       // identity -> ascending clothes ids

  int clothes_count(int identity) const {
    auto it = owned.find(identity);
    if (it == owned.end()) throw std::invalid_argument("registry: unknown identity");
    return static_cast<int>(it->second.size());
  }

  const std::vector<int>& owned_clothes(int identity) const {
    auto it = owned.find(identity);
    if (it == owned.end()) throw std::invalid_argument("registry: unknown identity");
    return it->second;
  }

  int owner_of(int clothes) const {
    auto it = owner.find(clothes);
    if (it == owner.end()) throw std::invalid_argument("registry: unknown clothes class");
    return it->second;
  }

  std::vector<int> all_clothes() const {
    std::vector<int> out;
    out.reserve(owner.size());
    for (const auto& [c, _] : owner) out.push_back(c);
    return out;
  }
};

inline ClothesRegistry build_registry(const std::vector<Sample>& samples) {
  if (samples.empty()) throw std::invalid_argument("build_registry: empty sample list");
  size_t dim = samples.front().feature.size();
  ClothesRegistry reg;
  std::set<int> identities;
  for (const auto& s : samples) {
    if (s.feature.size() != dim)
      throw std::invalid_argument("build_registry: inconsistent feature dimension");
    auto it = reg.owner.find(s.clothes);
    if (it != reg.owner.end()) {
      if (it->second != s.identity)
        throw std::invalid_argument("build_registry: clothes label " +
                                    std::to_string(s.clothes) +
                                    " appears under two identities (corrupt labels)");
    } else {
      reg.owner[s.clothes] = s.identity;
      reg.owned[s.identity].push_back(s.clothes);
    }
    identities.insert(s.identity);
  }
  for (auto& [_, v] : reg.owned) std::sort(v.begin(), v.end());
  reg.num_identities = static_cast<int>(identities.size());
  reg.num_clothes = static_cast<int>(reg.owner.size());
  return reg;
}

// S+ = clothes owned by the identity; S- = every other clothes class.
inline std::pair<std::vector<int>, std::vector<int>> positive_negative_split(
    const ClothesRegistry& reg, int identity) {
  const auto& plus = reg.owned_clothes(identity);
  std::vector<int> minus;
  minus.reserve(reg.num_clothes - plus.size());
  for (const auto& [c, _] : reg.owner)
    if (!std::binary_search(plus.begin(), plus.end(), c)) minus.push_back(c);
  return {plus, minus};
}

struct Batch {
  std::vector<int> indices;  // into the sample list the batch was drawn from
  int identities_per_batch = 0;  // P
  int instances_per_identity = 0;  // Q
};

// Draws P identities, Q instances each; identities with fewer than Q samples
// are upsampled with replacement. Single-owner: holds mutable rng state.
class PkSampler {
 public:
  PkSampler(const std::vector<Sample>& samples, uint64_t seed) : rng_(seed) {
    for (size_t i = 0; i < samples.size(); ++i)
      if (samples[i].split == Split::kTrain)
        by_identity_[samples[i].identity].push_back(static_cast<int>(i));
    for (const auto& [id, _] : by_identity_) identities_.push_back(id);
  }

  size_t num_identities() const { return identities_.size(); }

  Batch draw(int p, int q) {
    if (static_cast<size_t>(p) > identities_.size())
      throw std::invalid_argument("PkSampler: fewer than P identities in the split");
    std::vector<int> ids = identities_;
    rng_.shuffle(ids);
    ids.resize(p);
    Batch b;
    b.identities_per_batch = p;
    b.instances_per_identity = q;
    b.indices.reserve(static_cast<size_t>(p) * q);
    for (int id : ids) {
      const auto& pool = by_identity_.at(id);
      if (static_cast<int>(pool.size()) >= q) {
        std::vector<int> picks = pool;
        rng_.shuffle(picks);
        for (int k = 0; k < q; ++k) b.indices.push_back(picks[k]);
      } else {
        for (int k = 0; k < q; ++k)
          b.indices.push_back(pool[rng_.uniform_index(pool.size())]);
      }
    }
    return b;
  }

 private:
  std::map<int, std::vector<int>> by_identity_;
  std::vector<int> identities_;
  Rng rng_;
};

}  // namespace cal
