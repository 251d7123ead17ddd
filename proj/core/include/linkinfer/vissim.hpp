#pragma once

// Knowledge-relational "visual" similarity: a seed is described by the
// (relation, word) pairs it has under HasA, HasProperty, PartOf and MemberOf,
// and a target is compared to it on exactly those dimensions.

#include <compare>
#include <cstddef>
#include <span>
#include <vector>

#include "linkinfer/kgraph.hpp"

namespace linkinfer::vissim {

/// True for the four relations that define profile dimensions.
bool is_profile_relation(kg::Relation relation) noexcept;

struct ProfileDim {
  kg::Relation relation = kg::Relation::HasA;
  kg::ConceptId word;

  friend auto operator<=>(const ProfileDim&, const ProfileDim&) = default;
};

struct RelationProfile {
  kg::ConceptId owner;
  std::vector<ProfileDim> dims;
  std::vector<double> values;  // aligned with dims

  bool empty() const noexcept { return dims.empty(); }
};

/// Dimensions from the seed's own profile assertions, then from those of its
/// direct IsA superclasses, in assertion order. A dimension reached more than
/// once keeps the seed's own weight if it has one, else the largest
/// superclass weight.
RelationProfile build_seed_profile(kg::ConceptId seed, const kg::KnowledgeStore& store);

/// The target's assertion weights on `dims` (0 where it has no such assertion).
RelationProfile build_target_profile(kg::ConceptId target, std::span<const ProfileDim> dims,
                                     const kg::KnowledgeStore& store);

/// Mapped cosine of the two profiles. An empty seed profile falls back to cn
/// similarity; an all-zero target vector scores 0.
double visual_similarity(kg::ConceptId seed, kg::ConceptId target, const kg::KnowledgeStore& store);
/// Same, reusing a seed profile built once for many targets.
double visual_similarity(const RelationProfile& seed_profile, kg::ConceptId target, const kg::KnowledgeStore& store);

/// min(10000, vocabulary - 1), at least 1.
std::size_t default_pool_size(const kg::KnowledgeStore& store) noexcept;

/// The `pool_size` cn neighbours of `seed`, reranked by visual similarity;
/// the best `keep` with their visual scores, ties by ascending id.
std::vector<kg::ScoredConcept> retrieve_targets(kg::ConceptId seed, const kg::KnowledgeStore& store,
                                                std::size_t pool_size, std::size_t keep);

}  // namespace linkinfer::vissim
