#include "linkinfer/pipeline.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <numeric>
#include <ostream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "linkinfer/error.hpp"
#include "linkinfer/vissim.hpp"
#include "text_util.hpp"

namespace linkinfer::pipeline {

using kg::ConceptId;
using kg::KnowledgeStore;
using kg::ScoredConcept;
using rules::SeedSet;

namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

// Cosine, with 0 standing in when either vector is all zero.
double cosine_or_zero(std::span<const double> a, std::span<const double> b) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

std::vector<double> min_max(std::span<const double> v) {
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  std::vector<double> out(v.size(), 0.0);
  if (*hi > *lo)
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = (v[i] - *lo) / (*hi - *lo);
  return out;
}

SeedSet with_weights(const SeedSet& seeds, std::span<const double> weights) {
  double sum = 0.0;
  for (double w : weights) sum += w;
  if (!(sum > 0.0)) throw InvalidInput("image " + std::to_string(seeds.image_id) + ": seed weights sum to zero");
  SeedSet out = seeds;
  for (std::size_t i = 0; i < out.seeds.size(); ++i) out.seeds[i].confidence = std::clamp(weights[i] / sum, 0.0, 1.0);
  return out;
}

std::vector<ScoredConcept> ranked(std::vector<ScoredConcept> v) {
  std::sort(v.begin(), v.end(), kg::ranks_before);
  return v;
}

StageStats stats_of(const rules::StageModel& model, const hlmrf::Assignment& a) {
  return {model.problem.num_vars(), model.seed_target_terms, model.pair_terms, model.problem.constraints().size(),
          a.stats};
}

}  // namespace

std::string_view to_string(Variant v) noexcept {
  switch (v) {
    case Variant::ur: return "UR";
    case Variant::gur: return "GUR";
    case Variant::bur: return "BUR";
  }
  return "?";
}

std::string_view to_string(StageCut c) noexcept {
  switch (c) {
    case StageCut::vb: return "VB";
    case StageCut::rr: return "RR";
    case StageCut::all: return "All";
  }
  return "?";
}

Variant parse_variant(std::string_view text) {
  const auto t = lower(text);
  if (t == "ur") return Variant::ur;
  if (t == "gur") return Variant::gur;
  if (t == "bur") return Variant::bur;
  throw InvalidInput("unknown variant '" + std::string(text) + "' (expected UR, GUR or BUR)");
}

StageCut parse_stage_cut(std::string_view text) {
  const auto t = lower(text);
  if (t == "vb") return StageCut::vb;
  if (t == "rr") return StageCut::rr;
  if (t == "all") return StageCut::all;
  throw InvalidInput("unknown stage '" + std::string(text) + "' (expected VB, RR or All)");
}

// ---------------------------------------------------------------------------
// Ingestion

namespace {

nlohmann::json parse_json_object(std::string_view json_text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::parse_error& e) {
    throw InvalidInput(std::string("riddle is not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw InvalidInput("riddle must be a JSON object");
  return doc;
}

RiddleHeader header_of(const nlohmann::json& doc, std::string_view fallback_id) {
  RiddleHeader h;
  h.id = std::string(fallback_id);
  if (auto it = doc.find("id"); it != doc.end()) {
    if (it->is_string()) h.id = it->get<std::string>();
    else if (it->is_number_integer()) h.id = std::to_string(it->get<long long>());
    else throw InvalidInput("riddle id must be a string");
  }
  if (h.id.empty()) throw InvalidInput("riddle id is empty");

  if (auto it = doc.find("groundtruth"); it != doc.end() && !it->is_null()) {
    auto add = [&](const nlohmann::json& t) {
      if (!t.is_string()) throw InvalidInput("riddle " + h.id + ": groundtruth tokens must be strings");
      auto tok = kg::normalize_token(detail::trim(t.get<std::string>()));
      if (!tok.empty()) h.groundtruth.push_back(std::move(tok));
    };
    if (it->is_array())
      for (const auto& t : *it) add(t);
    else
      add(*it);
  }
  return h;
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInput("cannot open riddle file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

}  // namespace

RiddleHeader parse_riddle_header(std::string_view json_text, std::string_view fallback_id) {
  return header_of(parse_json_object(json_text), fallback_id);
}

RiddleHeader read_riddle_header(const std::filesystem::path& path) {
  return parse_riddle_header(read_text(path), path.stem().string());
}

Riddle parse_riddle(std::string_view json_text, const KnowledgeStore& store, std::string_view fallback_id) {
  using nlohmann::json;
  const json doc = parse_json_object(json_text);
  auto header = header_of(doc, fallback_id);
  Riddle r;
  r.id = std::move(header.id);
  r.groundtruth = std::move(header.groundtruth);

  auto images = doc.find("images");
  if (images == doc.end() || !images->is_array()) throw InvalidInput("riddle " + r.id + ": missing images array");
  if (images->size() != kImagesPerRiddle)
    throw InvalidInput("riddle " + r.id + ": expected 4 images, found " + std::to_string(images->size()));

  int index = 0;
  for (const auto& img : *images) {
    if (!img.is_object()) throw InvalidInput("riddle " + r.id + ": image entries must be objects");
    std::string tag;
    if (auto t = img.find("classifier_tag"); t != img.end() && t->is_string()) tag = t->get<std::string>();
    auto dets = img.find("detections");
    if (dets == img.end() || !dets->is_array())
      throw InvalidInput("riddle " + r.id + ": image " + std::to_string(index) + " has no detections array");

    SeedSet set;
    set.image_id = index;
    std::map<ConceptId, std::size_t> slot;
    for (const auto& d : *dets) {
      if (!d.is_object() || !d.contains("label") || !d["label"].is_string() || !d.contains("confidence") ||
          !d["confidence"].is_number())
        throw InvalidInput("riddle " + r.id + ": detections need a string label and a numeric confidence");
      const auto label = d["label"].get<std::string>();
      const double conf = std::clamp(d["confidence"].get<double>(), 0.0, 1.0);
      const auto id = store.find(kg::normalize_token(detail::trim(label)));
      if (!id) {
        r.warnings.push_back({index, label, "out of vocabulary"});
        continue;
      }
      if (auto [it, inserted] = slot.try_emplace(*id, set.seeds.size()); !inserted) {
        auto& kept = set.seeds[it->second].confidence;
        kept = std::max(kept, conf);
        r.warnings.push_back({index, label, "repeated label; kept the higher confidence"});
        continue;
      }
      set.seeds.push_back({*id, conf});
    }
    if (set.seeds.empty())
      throw InvalidInput("riddle " + r.id + ": image " + std::to_string(index) + " has no in-vocabulary detection");
    r.images.push_back(std::move(set));
    r.classifier_tags.push_back(std::move(tag));
    ++index;
  }
  return r;
}

Riddle ingest_riddle(const std::filesystem::path& path, const KnowledgeStore& store) {
  return parse_riddle(read_text(path), store, path.stem().string());
}

Riddle canonicalize(Riddle riddle) {
  std::vector<std::size_t> perm(riddle.images.size());
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  for (auto& img : riddle.images)
    std::sort(img.seeds.begin(), img.seeds.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
  auto key = [&](std::size_t i) {
    std::vector<std::pair<std::uint32_t, double>> k;
    for (const auto& s : riddle.images[i].seeds) k.emplace_back(s.id.value, s.confidence);
    return k;
  };
  std::stable_sort(perm.begin(), perm.end(), [&](std::size_t a, std::size_t b) { return key(a) < key(b); });

  Riddle out;
  out.id = std::move(riddle.id);
  out.groundtruth = std::move(riddle.groundtruth);
  out.warnings = std::move(riddle.warnings);
  for (std::size_t i = 0; i < perm.size(); ++i) {
    out.images.push_back(std::move(riddle.images[perm[i]]));
    out.images.back().image_id = static_cast<int>(i);
    out.classifier_tags.push_back(perm[i] < riddle.classifier_tags.size() ? riddle.classifier_tags[perm[i]] : "");
  }
  return out;
}

// ---------------------------------------------------------------------------
// Seed reweighting

SeedSet reweight_ur(const SeedSet& seeds) {
  seeds.validate();
  const auto c = seeds.confidences();
  return with_weights(seeds, c);
}

Riddle reweight_gur(const Riddle& riddle, const KnowledgeStore& store) {
  if (riddle.images.empty()) throw InvalidInput("reweight_gur: riddle has no images");
  Riddle out = riddle;
  const double n_images = static_cast<double>(riddle.images.size());
  std::vector<std::vector<double>> conf;
  for (const auto& img : riddle.images) {
    img.validate();
    conf.push_back(img.confidences());
  }

  for (std::size_t k = 0; k < riddle.images.size(); ++k) {
    const auto& img = riddle.images[k];
    std::vector<double> weights;
    for (const auto& seed : img.seeds) {
      double acc = 0.0;
      for (std::size_t j = 0; j < riddle.images.size(); ++j) {
        const auto& other = riddle.images[j].seeds;
        std::vector<double> profile(other.size());
        for (std::size_t i = 0; i < other.size(); ++i) profile[i] = store.similarity(kg::Space::cn, seed.id, other[i].id);
        acc += cosine_or_zero(profile, conf[j]);
      }
      weights.push_back(acc / n_images);
    }
    out.images[k] = with_weights(img, weights);
  }
  return out;
}

BurScores bur_scores(const SeedSet& seeds, const KnowledgeStore& store) {
  BurScores s;
  std::vector<double> neg_cr;
  for (const auto& seed : seeds.seeds) {
    s.ecs.push_back(store.centrality(seed.id));
    s.cr.push_back(store.concreteness(seed.id).value_or(kDefaultConcreteness));
    neg_cr.push_back(-s.cr.back());
  }
  const auto e = min_max(s.ecs);
  const auto c = min_max(neg_cr);
  for (std::size_t i = 0; i < e.size(); ++i) s.cs.push_back((e[i] + c[i]) / 2.0);
  return s;
}

BurFlowGraph bur_graph(const SeedSet& seeds, const BurScores& scores, const KnowledgeStore& store,
                       const ThetaConfig& theta) {
  BurFlowGraph g;
  const std::size_t n = seeds.seeds.size();
  g.order.resize(n);
  std::iota(g.order.begin(), g.order.end(), std::size_t{0});
  std::sort(g.order.begin(), g.order.end(), [&](std::size_t a, std::size_t b) {
    if (scores.cs[a] != scores.cs[b]) return scores.cs[a] > scores.cs[b];
    return seeds.seeds[a].id < seeds.seeds[b].id;
  });
  for (const auto& s : seeds.seeds) g.resources.push_back(s.confidence);

  for (std::size_t pos = 1; pos < n; ++pos) {
    const std::size_t v = g.order[pos];
    for (std::size_t back = pos; back-- > 0;) {
      const std::size_t u = g.order[back];
      if (store.similarity(kg::Space::cn, seeds.seeds[u].id, seeds.seeds[v].id) > theta.sim_ss) {
        g.edges.emplace_back(u, v);
        break;
      }
    }
  }
  return g;
}

hlmrf::HlMrfProblem bur_problem(const SeedSet& seeds, const BurFlowGraph& graph) {
  const std::size_t n = seeds.seeds.size();
  hlmrf::HlMrfProblem lp(n);
  std::vector<bool> in_graph(n, false);
  for (auto [u, v] : graph.edges) in_graph[u] = in_graph[v] = true;

  hlmrf::LinearConstraint total{{}, 0.0, hlmrf::ConstraintKind::equality};
  for (std::size_t i = 0; i < n; ++i) {
    const auto var = static_cast<hlmrf::VarIndex>(i);
    const double p = seeds.seeds[i].confidence;
    total.coeffs.push_back({var, 1.0});
    total.rhs += p;
    if (!in_graph[i]) {
      lp.set_evidence(var, p);
    } else {
      lp.add_constraint({{{var, -1.0}}, -0.5 * p, hlmrf::ConstraintKind::leq});
    }
  }
  lp.add_constraint(std::move(total));
  for (auto [u, v] : graph.edges) {
    const hlmrf::VarIndex body[] = {static_cast<hlmrf::VarIndex>(u)};
    const hlmrf::VarIndex head[] = {static_cast<hlmrf::VarIndex>(v)};
    lp.add_term(hlmrf::ground_rule(1.0, body, head));
  }
  return lp;
}

BurAnalysis analyze_bur(const SeedSet& seeds, const KnowledgeStore& store, const ThetaConfig& theta) {
  seeds.validate();
  BurAnalysis a;
  a.scores = bur_scores(seeds, store);
  a.graph = bur_graph(seeds, a.scores, store, theta);
  a.lp = bur_problem(seeds, a.graph);
  hlmrf::Assignment sol;
  try {
    sol = hlmrf::solve(a.lp, theta.tol, theta.max_iter);
  } catch (const InfeasibleProblem& e) {
    // w = P satisfies every constraint, so this indicates a bug.
    throw Error(std::string("specificity reweighting: feasible LP reported infeasible: ") + e.what());
  }
  a.weights = std::move(sol.values);
  a.objective = sol.objective;
  return a;
}

SeedSet reweight_bur(const SeedSet& seeds, const KnowledgeStore& store, const ThetaConfig& theta) {
  const auto a = analyze_bur(seeds, store, theta);
  return with_weights(seeds, a.weights);
}

Riddle reweight(const Riddle& riddle, Variant variant, const KnowledgeStore& store, const ThetaConfig& theta) {
  switch (variant) {
    case Variant::gur:
      return reweight_gur(riddle, store);
    case Variant::ur:
    case Variant::bur: {
      Riddle out = riddle;
      for (auto& img : out.images) img = variant == Variant::ur ? reweight_ur(img) : reweight_bur(img, store, theta);
      return out;
    }
  }
  throw InvalidInput("unknown variant");
}

// ---------------------------------------------------------------------------
// Retrieval and ranking

Retrieval retrieve(const SeedSet& seeds, const KnowledgeStore& store, const ThetaConfig& theta) {
  seeds.validate();
  Retrieval r;
  const std::size_t pool = std::min(theta.retrieve_pool, vissim::default_pool_size(store));
  const std::size_t keep = std::min(theta.retrieve_keep, pool);
  std::set<ConceptId> all;
  for (const auto& s : seeds.seeds) {
    r.per_seed.push_back(vissim::retrieve_targets(s.id, store, pool, keep));
    for (const auto& t : r.per_seed.back()) all.insert(t.id);
  }
  r.targets.assign(all.begin(), all.end());
  r.wm = kg::DenseMatrix(seeds.seeds.size(), r.targets.size());
  for (std::size_t i = 0; i < seeds.seeds.size(); ++i) {
    const auto profile = vissim::build_seed_profile(seeds.seeds[i].id, store);
    for (std::size_t j = 0; j < r.targets.size(); ++j) r.wm(i, j) = vissim::visual_similarity(profile, r.targets[j], store);
  }
  return r;
}

rules::TargetCandidateSet rank_targets(const SeedSet& seeds, const Retrieval& retrieval, const ThetaConfig& theta) {
  const std::size_t ns = seeds.seeds.size();
  if (retrieval.wm.rows() != ns || retrieval.wm.cols() != retrieval.targets.size())
    throw DimensionMismatch("rank_targets: W_m shape does not match seeds x targets");
  const auto conf = seeds.confidences();
  double conf_norm2 = 0.0;
  for (double c : conf) conf_norm2 += c * c;
  if (conf_norm2 == 0.0) throw InvalidInput("rank_targets: all seed confidences are zero");

  std::vector<ScoredConcept> scored;
  std::map<ConceptId, std::size_t> col;
  std::vector<double> column(ns);
  for (std::size_t j = 0; j < retrieval.targets.size(); ++j) {
    double norm2 = 0.0;
    for (std::size_t i = 0; i < ns; ++i) {
      column[i] = retrieval.wm(i, j);
      norm2 += column[i] * column[i];
    }
    if (norm2 == 0.0) continue;  // no seed relates to this target
    scored.push_back({retrieval.targets[j], cosine_or_zero(column, conf)});
    col.emplace(retrieval.targets[j], j);
  }
  std::sort(scored.begin(), scored.end(), kg::ranks_before);
  if (scored.size() > theta.num_targets) scored.resize(theta.num_targets);

  rules::TargetCandidateSet out;
  out.image_id = seeds.image_id;
  out.sim = kg::DenseMatrix(ns, scored.size());
  for (std::size_t k = 0; k < scored.size(); ++k) {
    out.targets.push_back(scored[k].id);
    out.scores.push_back(scored[k].score);
    const std::size_t j = col.at(scored[k].id);
    for (std::size_t i = 0; i < ns; ++i) out.sim(i, k) = retrieval.wm(i, j);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Answers

void write_answers(std::ostream& out, const AnswerList& answers, const KnowledgeStore& store) {
  std::size_t rank = 0;
  for (const auto& e : answers.entries)
    out << ++rank << '\t' << store.token(e.id) << '\t' << detail::format_fixed(e.score + 0.0, 6) << '\n';
}

std::vector<std::string> read_answer_tokens(std::istream& in) {
  std::vector<std::string> tokens;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::trim(line).empty()) continue;
    const auto fields = detail::split(line, '\t');
    if (fields.size() < 2 || detail::trim(fields[1]).empty())
      throw InvalidInput("answer file line " + std::to_string(lineno) + ": expected rank TAB token TAB score");
    tokens.emplace_back(detail::trim(fields[1]));
  }
  return tokens;
}

// ---------------------------------------------------------------------------
// Inference

ImageTrace infer_image(const SeedSet& seeds, const KnowledgeStore& store, const ThetaConfig& theta) {
  ImageTrace t;
  t.seeds = seeds;
  t.retrieval = retrieve(seeds, store, theta);
  t.candidates = rank_targets(seeds, t.retrieval, theta);
  if (t.candidates.targets.empty()) return t;

  const auto model = rules::build_stage1(seeds, t.candidates, store, theta);
  const auto sol = hlmrf::solve(model.problem, theta.tol, theta.max_iter);
  t.stage1 = stats_of(model, sol);
  t.stage1_scores = ranked(rules::target_scores(model, sol));
  for (const auto& s : t.stage1_scores) {
    if (t.survivors.size() >= theta.survivor_cap) break;
    if (s.score > theta.survivor_threshold) t.survivors.push_back(s);
  }
  return t;
}

AnswerList solve_riddle(const Riddle& riddle, const KnowledgeStore& store, const ThetaConfig& theta, Variant variant,
                        RiddleTrace* trace) {
  theta.validate();
  if (riddle.images.empty()) throw InvalidInput("riddle " + riddle.id + " has no images");
  RiddleTrace local;
  RiddleTrace& tr = trace ? *trace : local;
  tr = RiddleTrace{};
  tr.weighted = reweight(canonicalize(riddle), variant, store, theta);

  std::vector<rules::InferredTargets> inferred;
  for (const auto& img : tr.weighted.images) {
    tr.images.push_back(infer_image(img, store, theta));
    inferred.push_back({img.image_id, tr.images.back().survivors});
  }

  const auto model = rules::build_stage2(inferred, tr.weighted.images, store, theta);
  const auto sol = hlmrf::solve(model.problem, theta.tol, theta.max_iter);
  tr.stage2 = stats_of(model, sol);
  tr.stage2_scores = ranked(rules::target_scores(model, sol));

  AnswerList answers{tr.stage2_scores};
  if (answers.entries.size() < theta.answer_count) {
    std::map<ConceptId, double> best;
    for (const auto& img : tr.images)
      for (std::size_t k = 0; k < img.candidates.targets.size(); ++k) {
        auto [it, inserted] = best.try_emplace(img.candidates.targets[k], img.candidates.scores[k]);
        if (!inserted) it->second = std::max(it->second, img.candidates.scores[k]);
      }
    std::set<ConceptId> present;
    for (const auto& e : answers.entries) present.insert(e.id);
    std::vector<ScoredConcept> pool;
    for (auto [id, score] : best)
      if (!present.count(id)) pool.push_back({id, score});
    std::sort(pool.begin(), pool.end(), kg::ranks_before);
    for (const auto& p : pool) {
      if (answers.entries.size() >= theta.answer_count) break;
      answers.entries.push_back({p.id, 0.0});
    }
    std::sort(answers.entries.begin(), answers.entries.end(), kg::ranks_before);
  }
  return answers;
}

}  // namespace linkinfer::pipeline
