#include "cli.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "linkinfer/error.hpp"
#include "linkinfer/eval.hpp"
#include "linkinfer/kgraph.hpp"
#include "linkinfer/pipeline.hpp"
#include "linkinfer/theta.hpp"

namespace linkinfer::cli {

namespace fs = std::filesystem;
using pipeline::StageCut;
using pipeline::Variant;

namespace {

constexpr const char* kVersion = "0.1.0";

struct StoreOptions {
  std::string cn;
  std::string w2v;
  std::string assertions;
  std::string concreteness;
};

struct SolveOptions {
  StoreOptions store;
  std::string riddles;
  std::string out;
  std::string variant = "GUR";
  std::string stage = "All";
  std::vector<std::string> theta;
  int jobs = 1;
  bool timings = false;
};

struct EvalOptions {
  StoreOptions store;
  std::string riddles;
  std::string answers;
  std::string out;
};

struct InspectOptions {
  StoreOptions store;
  std::string riddles;
  std::string riddle_id;
  std::string stage;
  std::string variant = "GUR";
  std::vector<std::string> theta;
};

/// A failure that ends the command with kFatal after printing `what`.
struct Fatal {
  std::string what;
};

void add_store_options(CLI::App& cmd, StoreOptions& o, bool need_relations) {
  cmd.add_option("--cn", o.cn, "cn embedding file")->required();
  cmd.add_option("--w2v", o.w2v, "w2v embedding file")->required();
  if (need_relations) {
    cmd.add_option("--assertions", o.assertions, "assertion TSV (head, relation, tail, weight)");
    cmd.add_option("--concreteness", o.concreteness, "concreteness TSV (token, rating)");
  }
}

void require_file(const std::string& path, const char* what) {
  std::error_code ec;
  if (!fs::is_regular_file(path, ec)) throw Fatal{std::string(what) + " not found or not a file: " + path};
}

kg::KnowledgeStore load_store(const StoreOptions& o, std::ostream& err) {
  require_file(o.cn, "--cn");
  require_file(o.w2v, "--w2v");
  kg::StorePaths paths{o.cn, o.w2v, std::nullopt, std::nullopt};
  if (!o.assertions.empty()) {
    require_file(o.assertions, "--assertions");
    paths.assertions = o.assertions;
  }
  if (!o.concreteness.empty()) {
    require_file(o.concreteness, "--concreteness");
    paths.concreteness = o.concreteness;
  }
  kg::LoadReport report;
  try {
    auto store = kg::KnowledgeStore::load(paths, &report);
    const std::size_t skipped = report.cn_only_tokens + report.w2v_only_tokens + report.zero_vectors +
                                report.duplicate_tokens + report.assertions_oov + report.assertions_unknown_relation +
                                report.assertions_duplicate + report.concreteness_oov;
    if (skipped > 0) {
      err << "note: skipped input records: cn-only " << report.cn_only_tokens << ", w2v-only "
          << report.w2v_only_tokens << ", zero vectors " << report.zero_vectors << ", duplicate tokens "
          << report.duplicate_tokens << ", assertions oov " << report.assertions_oov << ", unknown relation "
          << report.assertions_unknown_relation << ", duplicate assertions " << report.assertions_duplicate
          << ", concreteness oov " << report.concreteness_oov << '\n';
    }
    return store;
  } catch (const Error& e) {
    throw Fatal{std::string("cannot load knowledge store: ") + e.what()};
  }
}

std::vector<fs::path> riddle_files(const std::string& where) {
  std::error_code ec;
  std::vector<fs::path> files;
  if (fs::is_directory(where, ec)) {
    for (const auto& entry : fs::directory_iterator(where, ec))
      if (entry.is_regular_file() && entry.path().extension() == ".json") files.push_back(entry.path());
    if (ec) throw Fatal{"cannot list riddle directory " + where + ": " + ec.message()};
    std::sort(files.begin(), files.end());
    if (files.empty()) throw Fatal{"no riddle files (*.json) in " + where};
  } else if (fs::is_regular_file(where, ec)) {
    files.emplace_back(where);
  } else {
    throw Fatal{"--riddles not found: " + where};
  }
  return files;
}

ThetaConfig theta_from(const std::vector<std::string>& assignments) {
  ThetaConfig theta;
  try {
    for (const auto& a : assignments) theta.set(a);
  } catch (const InvalidInput& e) {
    throw Fatal{e.what()};
  }
  return theta;
}

void make_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw Fatal{"cannot create output directory " + dir};
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  f << content;
  if (!f) throw Fatal{"cannot write " + path.string()};
}

std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string file_digest(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  std::ostringstream buf;
  buf << f.rdbuf();
  return hex64(fnv1a(buf.str()));
}

nlohmann::ordered_json input_entry(const std::string& path) {
  nlohmann::ordered_json j;
  j["path"] = path;
  j["fnv1a64"] = path.empty() ? std::string() : file_digest(path);
  return j;
}

// Runs `task(i)` for i in [0, n) on up to `jobs` threads.
template <class Task>
void parallel_for(std::size_t n, int jobs, Task task) {
  const std::size_t workers = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, jobs)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) task(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) task(i);
    });
  for (auto& t : pool) t.join();
}

struct RiddleOutcome {
  std::string id;
  std::string answers_tsv;
  std::vector<std::string> warnings;
  std::string error;
  double seconds = 0.0;
};

RiddleOutcome solve_one(const fs::path& file, const kg::KnowledgeStore& store, const ThetaConfig& theta, Variant variant,
                        StageCut stage) {
  RiddleOutcome r;
  const auto start = std::chrono::steady_clock::now();
  try {
    const auto riddle = pipeline::ingest_riddle(file, store);
    r.id = riddle.id;
    for (const auto& w : riddle.warnings)
      r.warnings.push_back("image " + std::to_string(w.image) + ": '" + w.label + "' " + w.reason);
    pipeline::AnswerList answers;
    if (stage == StageCut::all) {
      answers = pipeline::solve_riddle(riddle, store, theta, variant);
    } else {
      const auto weighted = pipeline::reweight(pipeline::canonicalize(riddle), variant, store, theta);
      answers = stage == StageCut::vb ? eval::baseline_vb(weighted, store, theta.answer_count)
                                      : eval::baseline_rr(weighted, store, theta, theta.answer_count);
    }
    std::ostringstream tsv;
    pipeline::write_answers(tsv, answers, store);
    r.answers_tsv = tsv.str();
  } catch (const std::exception& e) {
    r.error = e.what();
  }
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return r;
}

int cmd_solve(const SolveOptions& o, std::ostream& out, std::ostream& err) {
  Variant variant;
  StageCut stage;
  try {
    variant = pipeline::parse_variant(o.variant);
    stage = pipeline::parse_stage_cut(o.stage);
  } catch (const InvalidInput& e) {
    throw Fatal{e.what()};
  }
  const ThetaConfig theta = theta_from(o.theta);
  if (o.jobs < 0) throw Fatal{"--jobs must be nonnegative"};
  const int jobs = o.jobs == 0 ? static_cast<int>(std::max(1u, std::thread::hardware_concurrency())) : o.jobs;
  const auto files = riddle_files(o.riddles);
  const auto store = load_store(o.store, err);
  make_dir(o.out);

  std::vector<RiddleOutcome> results(files.size());
  parallel_for(files.size(), jobs, [&](std::size_t i) { results[i] = solve_one(files[i], store, theta, variant, stage); });

  std::ostringstream errors, warnings, timings;
  timings << "file\triddle_id\tseconds\n";
  std::map<std::string, std::string> claimed;  // output stem -> file that produced it
  nlohmann::ordered_json riddles = nlohmann::ordered_json::array();
  std::size_t solved = 0;
  for (std::size_t i = 0; i < files.size(); ++i) {
    auto& r = results[i];
    const std::string name = files[i].filename().string();
    for (const auto& w : r.warnings) warnings << name << '\t' << w << '\n';
    if (r.error.empty()) {
      const std::string stem = file_stem_for(r.id);
      if (auto [it, fresh] = claimed.try_emplace(stem, name); !fresh)
        r.error = "riddle id '" + r.id + "' collides with the output of " + it->second;
    }
    nlohmann::ordered_json entry;
    entry["file"] = name;
    entry["id"] = r.id;
    if (r.error.empty()) {
      const std::string output = file_stem_for(r.id) + ".tsv";
      write_file(fs::path(o.out) / output, r.answers_tsv);
      entry["status"] = "ok";
      entry["output"] = output;
      entry["fnv1a64"] = hex64(fnv1a(r.answers_tsv));
      ++solved;
    } else {
      errors << name << '\t' << r.error << '\n';
      err << "error: " << name << ": " << r.error << '\n';
      entry["status"] = "error";
      entry["error"] = r.error;
    }
    riddles.push_back(std::move(entry));
    char secs[32];
    std::snprintf(secs, sizeof secs, "%.6f", r.seconds);
    timings << name << '\t' << r.id << '\t' << secs << '\n';
  }

  // Everything needed to rerun: inputs with digests, parameters, outcome.
  nlohmann::ordered_json manifest;
  manifest["tool"] = "linkinfer";
  manifest["version"] = kVersion;
  manifest["command"] = "solve";
  manifest["variant"] = std::string(pipeline::to_string(variant));
  manifest["stage"] = std::string(pipeline::to_string(stage));
  nlohmann::ordered_json th;
  for (const auto& [k, v] : theta.entries()) th[k] = v;
  manifest["theta"] = th;
  manifest["inputs"] = {{"cn", input_entry(o.store.cn)},
                        {"w2v", input_entry(o.store.w2v)},
                        {"assertions", input_entry(o.store.assertions)},
                        {"concreteness", input_entry(o.store.concreteness)},
                        {"riddles", o.riddles}};
  manifest["riddles"] = riddles;
  manifest["solved"] = solved;
  manifest["failed"] = files.size() - solved;
  write_file(fs::path(o.out) / "manifest.json", manifest.dump(2) + "\n");
  write_file(fs::path(o.out) / "errors.log", errors.str());
  write_file(fs::path(o.out) / "warnings.log", warnings.str());
  if (o.timings) write_file(fs::path(o.out) / "timings.tsv", timings.str());

  out << "solved " << solved << " of " << files.size() << " riddles (" << pipeline::to_string(variant) << "+"
      << pipeline::to_string(stage) << ") into " << o.out << '\n';
  if (solved == files.size()) return kSuccess;
  return solved > 0 ? kPartial : kFatal;
}

int cmd_eval(const EvalOptions& o, std::ostream& out, std::ostream& err) {
  const auto files = riddle_files(o.riddles);
  std::error_code ec;
  if (!fs::is_directory(o.answers, ec)) throw Fatal{"--answers is not a directory: " + o.answers};
  const auto store = load_store(o.store, err);
  make_dir(o.out);

  std::vector<eval::RiddleScore> scores;
  std::size_t unreadable = 0;
  for (const auto& file : files) {
    pipeline::RiddleHeader header;
    try {
      header = pipeline::read_riddle_header(file);
    } catch (const Error& e) {
      err << "warning: " << file.filename().string() << ": " << e.what() << '\n';
      ++unreadable;
      continue;
    }
    const fs::path answer_file = fs::path(o.answers) / (file_stem_for(header.id) + ".tsv");
    std::ifstream in(answer_file);
    if (!in) {
      scores.push_back({header.id, 0.0, "", true, "no answer file"});
      continue;
    }
    try {
      const auto tokens = pipeline::read_answer_tokens(in);
      if (tokens.empty()) {
        scores.push_back({header.id, 0.0, "", true, "empty answer file"});
        continue;
      }
      scores.push_back(eval::score_riddle(header.id, tokens, header.groundtruth, store));
    } catch (const Error& e) {
      scores.push_back({header.id, 0.0, "", true, std::string("bad answer file: ") + e.what()});
    }
  }

  std::ostringstream report;
  eval::write_report(report, scores);
  write_file(fs::path(o.out) / "eval_report.tsv", report.str());

  const auto excluded = static_cast<std::size_t>(std::count_if(scores.begin(), scores.end(), [](const auto& s) { return s.excluded; }));
  const std::size_t scored = scores.size() - excluded;
  if (scored == 0) {
    err << "error: no riddle could be scored (" << excluded << " excluded, " << unreadable << " unreadable)\n";
    return kFatal;
  }
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.1f", eval::dataset_accuracy(scores));
  out << "accuracy " << buf << " (scored " << scored << ", excluded " << excluded + unreadable << ")\n";
  return kSuccess;
}

void print_scored(std::ostream& out, const std::vector<kg::ScoredConcept>& list, std::size_t limit,
                  const kg::KnowledgeStore& store) {
  char buf[32];
  for (std::size_t i = 0; i < std::min(limit, list.size()); ++i) {
    std::snprintf(buf, sizeof buf, "%.6f", list[i].score + 0.0);
    out << "  " << store.token(list[i].id) << '\t' << buf << '\n';
  }
}

int cmd_inspect(const InspectOptions& o, std::ostream& out, std::ostream& err) {
  static const std::vector<std::string> stages = {"reweight", "retrieve", "stage1", "stage2"};
  if (std::find(stages.begin(), stages.end(), o.stage) == stages.end())
    throw Fatal{"unknown stage '" + o.stage + "' (expected reweight, retrieve, stage1 or stage2)"};
  Variant variant;
  try {
    variant = pipeline::parse_variant(o.variant);
  } catch (const InvalidInput& e) {
    throw Fatal{e.what()};
  }
  const ThetaConfig theta = theta_from(o.theta);
  const auto files = riddle_files(o.riddles);
  const auto store = load_store(o.store, err);

  std::optional<pipeline::Riddle> riddle;
  for (const auto& f : files) {
    try {
      if (!o.riddle_id.empty() && pipeline::read_riddle_header(f).id != o.riddle_id) continue;
      riddle = pipeline::ingest_riddle(f, store);
    } catch (const Error& e) {
      if (!o.riddle_id.empty() || files.size() == 1) throw Fatal{f.filename().string() + ": " + e.what()};
      continue;
    }
    break;
  }
  if (!riddle) throw Fatal{"riddle '" + o.riddle_id + "' not found"};

  char buf[64];
  out << "riddle " << riddle->id << " variant " << pipeline::to_string(variant) << '\n';
  try {
    if (o.stage == "reweight") {
      const auto canonical = pipeline::canonicalize(*riddle);
      const auto weighted = pipeline::reweight(canonical, variant, store, theta);
      for (std::size_t k = 0; k < weighted.images.size(); ++k) {
        out << "image " << k << '\n';
        for (std::size_t i = 0; i < weighted.images[k].seeds.size(); ++i) {
          std::snprintf(buf, sizeof buf, "%.6f\t%.6f", canonical.images[k].seeds[i].confidence,
                        weighted.images[k].seeds[i].confidence);
          out << "  " << store.token(weighted.images[k].seeds[i].id) << '\t' << buf << '\n';
        }
      }
      return kSuccess;
    }
    pipeline::RiddleTrace trace;
    if (o.stage == "retrieve") {
      const auto weighted = pipeline::reweight(pipeline::canonicalize(*riddle), variant, store, theta);
      for (const auto& img : weighted.images) {
        const auto ranked = pipeline::rank_targets(img, pipeline::retrieve(img, store, theta), theta);
        std::vector<kg::ScoredConcept> list;
        for (std::size_t i = 0; i < ranked.targets.size(); ++i) list.push_back({ranked.targets[i], ranked.scores[i]});
        out << "image " << img.image_id << " (" << ranked.targets.size() << " ranked targets)\n";
        print_scored(out, list, 20, store);
      }
      return kSuccess;
    }
    const auto answers = pipeline::solve_riddle(*riddle, store, theta, variant, &trace);
    if (o.stage == "stage1") {
      for (const auto& img : trace.images) {
        out << "image " << img.seeds.image_id << ": " << img.candidates.targets.size() << " candidates";
        if (img.stage1) {
          out << ", " << img.stage1->variables << " variables, " << img.stage1->seed_target_terms
              << " seed-target terms, " << img.stage1->pair_terms << " pair terms, " << img.stage1->constraints
              << " constraints, " << img.stage1->solve.iterations << " iterations, " << img.survivors.size()
              << " survivors\n";
          print_scored(out, img.stage1_scores, 10, store);
        } else {
          out << ", no Stage-I model\n";
        }
      }
      return kSuccess;
    }
    const auto& s2 = trace.stage2;
    out << "stage2: " << s2.variables << " variables, " << s2.seed_target_terms << " seed-target terms, "
        << s2.constraints << " constraints, " << s2.solve.iterations << " iterations\n";
    print_scored(out, answers.entries, theta.answer_count, store);
  } catch (const Error& e) {
    throw Fatal{e.what()};
  }
  return kSuccess;
}

}  // namespace

std::string file_stem_for(const std::string& riddle_id) {
  std::string out = riddle_id;
  for (auto& c : out) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '.' ||
                    c == '_' || c == '-';
    if (!ok) c = '_';
  }
  if (out.empty() || out == "." || out == "..") out = "_" + out;
  return out;
}

int run(std::span<const std::string> args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Infer the concept linking a set of images from their detected labels"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  SolveOptions solve;
  auto* s = app.add_subcommand("solve", "Solve riddles and write one answer TSV per riddle");
  add_store_options(*s, solve.store, true);
  s->add_option("--riddles", solve.riddles, "riddle JSON file or directory of *.json")->required();
  s->add_option("--out", solve.out, "output directory")->required();
  s->add_option("--variant", solve.variant, "seed weighting: UR, GUR or BUR")->capture_default_str();
  s->add_option("--stage", solve.stage, "pipeline cut: VB, RR or All")->capture_default_str();
  s->add_option("--theta", solve.theta, "parameter override key=value (repeatable)");
  s->add_option("--jobs", solve.jobs, "riddles solved in parallel (0 = all cores)")->capture_default_str();
  s->add_flag("--timings", solve.timings, "also write timings.tsv");

  EvalOptions ev;
  auto* e = app.add_subcommand("eval", "Score answer files against the riddles' groundtruth");
  add_store_options(*e, ev.store, false);
  e->add_option("--riddles", ev.riddles, "riddle JSON file or directory of *.json")->required();
  e->add_option("--answers", ev.answers, "directory holding <riddle id>.tsv answer files")->required();
  e->add_option("--out", ev.out, "output directory for eval_report.tsv")->required();

  InspectOptions insp;
  auto* i = app.add_subcommand("inspect", "Print intermediate results for one riddle");
  add_store_options(*i, insp.store, true);
  i->add_option("--riddles", insp.riddles, "riddle JSON file or directory")->required();
  i->add_option("--riddle-id", insp.riddle_id, "riddle to inspect (default: the first readable one)");
  i->add_option("--stage", insp.stage, "reweight, retrieve, stage1 or stage2")->required();
  i->add_option("--variant", insp.variant, "seed weighting: UR, GUR or BUR")->capture_default_str();
  i->add_option("--theta", insp.theta, "parameter override key=value (repeatable)");

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  if (argv.empty()) argv.push_back("linkinfer");
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kSuccess;
  } catch (const CLI::CallForVersion&) {
    out << kVersion << '\n';
    return kSuccess;
  } catch (const CLI::ParseError& pe) {
    err << "usage error: " << pe.what() << '\n' << app.help();
    return kFatal;
  }

  try {
    if (s->parsed()) return cmd_solve(solve, out, err);
    if (e->parsed()) return cmd_eval(ev, out, err);
    return cmd_inspect(insp, out, err);
  } catch (const Fatal& f) {
    err << "error: " << f.what << '\n';
    return kFatal;
  } catch (const std::exception& ex) {
    err << "error: " << ex.what() << '\n';
    return kFatal;
  }
}

}  // namespace linkinfer::cli
