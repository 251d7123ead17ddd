#include "linkinfer/vissim.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "linkinfer/error.hpp"

namespace linkinfer::vissim {

using kg::ConceptId;
using kg::KnowledgeStore;
using kg::Relation;

bool is_profile_relation(Relation relation) noexcept {
  return relation == Relation::HasA || relation == Relation::HasProperty || relation == Relation::PartOf ||
         relation == Relation::MemberOf;
}

RelationProfile build_seed_profile(ConceptId seed, const KnowledgeStore& store) {
  RelationProfile profile{seed, {}, {}};
  std::map<ProfileDim, std::size_t> slot;
  std::vector<bool> own;

  auto absorb = [&](ConceptId head, bool is_seed) {
    for (const auto& a : store.assertions_from(head)) {
      if (!is_profile_relation(a.relation)) continue;
      const ProfileDim dim{a.relation, a.tail};
      auto [it, inserted] = slot.try_emplace(dim, profile.dims.size());
      if (inserted) {
        profile.dims.push_back(dim);
        profile.values.push_back(a.weight);
        own.push_back(is_seed);
      } else if (!own[it->second]) {
        profile.values[it->second] = std::max(profile.values[it->second], a.weight);
      }
    }
  };

  absorb(seed, true);
  for (const auto& a : store.assertions_from(seed)) {
    if (a.relation == Relation::IsA && a.tail != seed) absorb(a.tail, false);
  }
  return profile;
}

RelationProfile build_target_profile(ConceptId target, std::span<const ProfileDim> dims, const KnowledgeStore& store) {
  RelationProfile profile{target, {dims.begin(), dims.end()}, std::vector<double>(dims.size(), 0.0)};
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (auto w = store.assertion_weight(target, dims[i].relation, dims[i].word)) profile.values[i] = *w;
  }
  return profile;
}

double visual_similarity(const RelationProfile& seed_profile, ConceptId target, const KnowledgeStore& store) {
  if (seed_profile.empty()) return store.similarity(kg::Space::cn, seed_profile.owner, target);
  if (target == seed_profile.owner) return 1.0;

  double dot = 0.0, tt = 0.0, ss = 0.0;
  for (std::size_t i = 0; i < seed_profile.dims.size(); ++i) {
    const double s = seed_profile.values[i];
    ss += s * s;
    if (auto w = store.assertion_weight(target, seed_profile.dims[i].relation, seed_profile.dims[i].word)) {
      dot += s * *w;
      tt += *w * *w;
    }
  }
  // Zero evidence of kinship either way; also covers an all-zero seed vector.
  if (tt == 0.0 || ss == 0.0) return 0.0;
  const double cosine = std::clamp(dot / (std::sqrt(ss) * std::sqrt(tt)), -1.0, 1.0);
  return kg::map_cosine(cosine);
}

double visual_similarity(ConceptId seed, ConceptId target, const KnowledgeStore& store) {
  return visual_similarity(build_seed_profile(seed, store), target, store);
}

std::size_t default_pool_size(const KnowledgeStore& store) noexcept {
  const std::size_t others = store.size() > 1 ? store.size() - 1 : 1;
  return std::min<std::size_t>(10000, others);
}

std::vector<kg::ScoredConcept> retrieve_targets(ConceptId seed, const KnowledgeStore& store, std::size_t pool_size,
                                                std::size_t keep) {
  if (keep < 1 || pool_size < keep) throw InvalidInput("retrieve_targets: need pool_size >= keep >= 1");
  auto pool = store.top_k_similar(kg::Space::cn, seed, pool_size);
  const auto profile = build_seed_profile(seed, store);
  for (auto& c : pool) c.score = visual_similarity(profile, c.id, store);
  keep = std::min(keep, pool.size());
  std::partial_sort(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(keep), pool.end(), kg::ranks_before);
  pool.resize(keep);
  return pool;
}

}  // namespace linkinfer::vissim
