#include "linkinfer/rules.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <string>

#include "linkinfer/error.hpp"

namespace linkinfer::rules {

using hlmrf::VarIndex;
using kg::ConceptId;
using kg::KnowledgeStore;

void SeedSet::validate() const {
  if (seeds.empty()) throw InvalidInput("image " + std::to_string(image_id) + " has no seeds");
  std::set<ConceptId> seen;
  for (const auto& s : seeds) {
    if (!(s.confidence >= 0.0 && s.confidence <= 1.0))
      throw InvalidInput("image " + std::to_string(image_id) + ": seed confidence outside [0,1]");
    if (!seen.insert(s.id).second)
      throw InvalidInput("image " + std::to_string(image_id) + ": repeated seed concept");
  }
}

std::vector<double> SeedSet::confidences() const {
  std::vector<double> out;
  out.reserve(seeds.size());
  for (const auto& s : seeds) out.push_back(s.confidence);
  return out;
}

double pair_weight(ConceptId a, ConceptId b, const KnowledgeStore& store, const ThetaConfig& theta) {
  return theta.alpha1 * store.similarity(kg::Space::cn, a, b) + theta.alpha2 * store.similarity(kg::Space::w2v, a, b);
}

double rule_weight(ConceptId seed, ConceptId target, const KnowledgeStore& store, const ThetaConfig& theta) {
  return pair_weight(seed, target, store, theta) + 1.0 / store.centrality(target);
}

double gating_similarity(ConceptId a, ConceptId b, const KnowledgeStore& store, const ThetaConfig& theta) {
  return pair_weight(a, b, store, theta) / (theta.alpha1 + theta.alpha2);
}

bool gated(ConceptId seed, ConceptId target, const KnowledgeStore& store, const ThetaConfig& theta) {
  return gating_similarity(seed, target, store, theta) >= theta.sim_psl1;
}

namespace {

void add_rule(StageModel& model, RuleKind kind, double weight, VarIndex body, VarIndex head) {
  const VarIndex b[] = {body};
  const VarIndex h[] = {head};
  model.problem.add_term(hlmrf::ground_rule(weight, b, h));
  model.rules.push_back({kind, weight, body, head});
  if (kind == RuleKind::seed_target)
    ++model.seed_target_terms;
  else
    ++model.pair_terms;
}

void add_sum_cap(StageModel& model, double cap) {
  hlmrf::LinearConstraint c;
  c.kind = hlmrf::ConstraintKind::leq;
  c.rhs = cap;
  for (VarIndex v : model.target_vars) c.coeffs.push_back({v, 1.0});
  model.problem.add_constraint(std::move(c));
}

void add_seed_vars(StageModel& model, const SeedSet& seeds) {
  for (const auto& s : seeds.seeds) {
    const VarIndex v = model.problem.add_variable();
    model.problem.set_evidence(v, s.confidence);
    model.seed_vars.push_back(v);
  }
}

}  // namespace

StageModel build_stage1(const SeedSet& seeds, const TargetCandidateSet& candidates, const KnowledgeStore& store,
                        const ThetaConfig& theta) {
  seeds.validate();
  if (candidates.targets.empty()) throw InvalidInput("build_stage1: no candidate targets");
  if (std::set<ConceptId>(candidates.targets.begin(), candidates.targets.end()).size() != candidates.targets.size())
    throw InvalidInput("build_stage1: repeated candidate target");
  StageModel model;
  add_seed_vars(model, seeds);
  for (auto t : candidates.targets) {
    model.targets.push_back(t);
    model.target_vars.push_back(model.problem.add_variable());
  }
  const std::size_t nt = model.targets.size();

  for (std::size_t i = 0; i < seeds.seeds.size(); ++i) {
    const ConceptId s = seeds.seeds[i].id;
    for (std::size_t j = 0; j < nt; ++j) {
      const ConceptId t = model.targets[j];
      if (!gated(s, t, store, theta)) continue;
      add_rule(model, RuleKind::seed_target, rule_weight(s, t, store, theta), model.seed_vars[i], model.target_vars[j]);
    }
  }

  // Each target is tied to its tt most similar fellow targets in both directions.
  if (theta.tt > 0 && nt > 1) {
    const std::size_t partners = std::min(theta.tt, nt - 1);
    std::vector<kg::ScoredConcept> ranked;
    std::map<ConceptId, std::size_t> position;
    for (std::size_t j = 0; j < nt; ++j) position.emplace(model.targets[j], j);
    for (std::size_t a = 0; a < nt; ++a) {
      ranked.clear();
      for (std::size_t b = 0; b < nt; ++b) {
        if (b == a) continue;
        ranked.push_back({model.targets[b], pair_weight(model.targets[a], model.targets[b], store, theta)});
      }
      std::partial_sort(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(partners), ranked.end(),
                        kg::ranks_before);
      for (std::size_t p = 0; p < partners; ++p) {
        const VarIndex va = model.target_vars[a];
        const VarIndex vb = model.target_vars[position.at(ranked[p].id)];
        add_rule(model, RuleKind::target_target, ranked[p].score, va, vb);
        add_rule(model, RuleKind::target_target, ranked[p].score, vb, va);
      }
    }
  }

  add_sum_cap(model, theta.sum1);
  return model;
}

StageModel build_stage2(std::span<const InferredTargets> inferred, std::span<const SeedSet> seedsets,
                        const KnowledgeStore& store, const ThetaConfig& theta) {
  // Targets shared between images become one variable; ascending id keeps
  // the variable layout independent of image order.
  std::set<ConceptId> unified;
  for (const auto& img : inferred)
    for (const auto& t : img.targets) unified.insert(t.id);
  if (unified.empty()) throw InvalidInput("build_stage2: no image has an inferred target");

  StageModel model;
  for (const auto& s : seedsets) {
    s.validate();
    add_seed_vars(model, s);
  }
  for (auto t : unified) {
    model.targets.push_back(t);
    model.target_vars.push_back(model.problem.add_variable());
  }

  std::size_t seed_index = 0;
  for (const auto& set : seedsets) {
    for (const auto& seed : set.seeds) {
      const VarIndex sv = model.seed_vars[seed_index++];
      for (std::size_t j = 0; j < model.targets.size(); ++j) {
        const ConceptId t = model.targets[j];
        if (!gated(seed.id, t, store, theta)) continue;
        add_rule(model, RuleKind::seed_target, rule_weight(seed.id, t, store, theta), sv, model.target_vars[j]);
      }
    }
  }

  add_sum_cap(model, theta.sum2);
  return model;
}

std::vector<kg::ScoredConcept> target_scores(const StageModel& model, const hlmrf::Assignment& assignment) {
  std::vector<kg::ScoredConcept> out;
  out.reserve(model.targets.size());
  for (std::size_t j = 0; j < model.targets.size(); ++j) {
    // Adding 0.0 turns a clamped -0.0 into +0.0 so printed scores never carry a sign.
    out.push_back({model.targets[j], assignment.values.at(model.target_vars[j]) + 0.0});
  }
  return out;
}

}  // namespace linkinfer::rules
