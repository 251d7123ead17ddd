#pragma once

// Grounding of the two PSL models into HL-MRF problems.
//
// Stage I (per image): seed confidences are evidence, candidate targets are
// free; rules s -> t weighted by rule_weight, symmetric t <-> t' rules
// weighted by pair_weight, and sum_t I(t) <= sum1.
// Stage II (joint): every image's seeds against the union of surviving
// targets, under sum_t I(t) <= sum2.

#include <cstddef>
#include <span>
#include <vector>

#include "linkinfer/hlmrf.hpp"
#include "linkinfer/kgraph.hpp"
#include "linkinfer/theta.hpp"

namespace linkinfer::rules {

struct Seed {
  kg::ConceptId id;
  double confidence = 0.0;

  friend bool operator==(const Seed&, const Seed&) = default;
};

/// Detected labels of one image with their (possibly reweighted) confidences.
struct SeedSet {
  int image_id = 0;
  std::vector<Seed> seeds;

  /// Throws InvalidInput when empty, when a confidence is outside [0,1] or
  /// when a concept repeats.
  void validate() const;
  std::vector<double> confidences() const;

  friend bool operator==(const SeedSet&, const SeedSet&) = default;
};

/// Ranked candidate targets of one image.
struct TargetCandidateSet {
  int image_id = 0;
  std::vector<kg::ConceptId> targets;
  /// Ranking score of each target (cosine of its similarity column with the
  /// seed confidences).
  std::vector<double> scores;
  /// seeds x targets visual similarities.
  kg::DenseMatrix sim;
};

/// theta.alpha1 * sim_cn + theta.alpha2 * sim_w2v + 1 / C(target).
double rule_weight(kg::ConceptId seed, kg::ConceptId target, const kg::KnowledgeStore& store,
                   const ThetaConfig& theta);
/// theta.alpha1 * sim_cn + theta.alpha2 * sim_w2v.
double pair_weight(kg::ConceptId a, kg::ConceptId b, const kg::KnowledgeStore& store, const ThetaConfig& theta);
/// pair_weight / (alpha1 + alpha2), compared against theta.sim_psl1.
double gating_similarity(kg::ConceptId a, kg::ConceptId b, const kg::KnowledgeStore& store,
                         const ThetaConfig& theta);
bool gated(kg::ConceptId seed, kg::ConceptId target, const kg::KnowledgeStore& store, const ThetaConfig& theta);

enum class RuleKind { seed_target, target_target };

/// One grounded rule body -> head, kept alongside the hinge term it produced.
struct GroundRuleSpec {
  RuleKind kind = RuleKind::seed_target;
  double weight = 0.0;
  hlmrf::VarIndex body = 0;
  hlmrf::VarIndex head = 0;
};

struct StageModel {
  hlmrf::HlMrfProblem problem;
  /// Evidence variables, in input order (Stage II: image by image).
  std::vector<hlmrf::VarIndex> seed_vars;
  /// Free variables; targets[i] is variable target_vars[i].
  std::vector<kg::ConceptId> targets;
  std::vector<hlmrf::VarIndex> target_vars;
  std::vector<GroundRuleSpec> rules;
  std::size_t seed_target_terms = 0;
  std::size_t pair_terms = 0;
};

StageModel build_stage1(const SeedSet& seeds, const TargetCandidateSet& candidates, const kg::KnowledgeStore& store,
                        const ThetaConfig& theta);

/// Stage-I survivors of one image.
struct InferredTargets {
  int image_id = 0;
  std::vector<kg::ScoredConcept> targets;
};

/// Throws InvalidInput when no image has an inferred target.
StageModel build_stage2(std::span<const InferredTargets> inferred, std::span<const SeedSet> seedsets,
                        const kg::KnowledgeStore& store, const ThetaConfig& theta);

/// Target scores of a solved stage, in the order of model.targets.
std::vector<kg::ScoredConcept> target_scores(const StageModel& model, const hlmrf::Assignment& assignment);

}  // namespace linkinfer::rules
