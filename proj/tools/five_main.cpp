#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "five/ablation.hpp"
#include "five/baseline.hpp"
#include "five/config.hpp"
#include "five/dataset.hpp"
#include "five/error.hpp"
#include "five/evaluate.hpp"
#include "five/harness.hpp"
#include "five/metrics.hpp"
#include "five/model.hpp"
#include "five/report.hpp"
#include "five/train.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace five;

namespace {

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = "out";
};

void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("failed writing " + path.string());
}

void write_outputs(const Globals& g, const std::string& table, const json& summary) {
  write_file(fs::path(g.out) / "metrics.tsv", table);
  write_file(fs::path(g.out) / "summary.json", summary.dump(2) + "\n");
  std::cout << table;
  std::cout << "wrote " << (fs::path(g.out) / "metrics.tsv").string() << " and summary.json\n";
}

TrainConfig resolve_config(const Globals& g) {
  TrainConfig cfg = g.config.empty() ? desk_preset() : load_config(g.config);
  if (g.seed) cfg.seed = *g.seed;
  cfg.validate();
  return cfg;
}

DatasetManifest require_manifest(const std::string& path) {
  if (path.empty()) throw ValidationError("--data is required");
  return load_manifest(path);
}

std::string fmt(double x) {
  std::ostringstream s;
  s.precision(10);
  s << x;
  return s.str();
}

// ---- gen-data -------------------------------------------------------------

struct GenDataArgs {
  std::string classes = "coarse";
  std::string spec_path;
  std::size_t bags_per_class = 100;
  std::vector<std::size_t> split_counts;
  std::uint64_t standardizer_seed = 0;
};

int run_gen_data(const Globals& g, const GenDataArgs& a) {
  SynthSpec spec;
  if (!a.spec_path.empty()) {
    std::ifstream in(a.spec_path);
    if (!in) throw IoError("cannot open " + a.spec_path);
    try {
      spec = spec_from_json(json::parse(in));
    } catch (const json::exception& e) {
      throw ValidationError(a.spec_path + ": " + e.what());
    }
  } else if (a.classes == "coarse") {
    spec = coarse_spec();
  } else if (a.classes == "subtype") {
    spec = subtype_spec();
  } else {
    throw ValidationError("--classes must be coarse or subtype");
  }
  DatasetOptions opt;
  opt.bags_per_class = a.bags_per_class;
  opt.seed = g.seed.value_or(0);
  opt.standardizer_seed = a.standardizer_seed;
  if (!a.split_counts.empty()) {
    if (a.split_counts.size() != 3) throw ValidationError("--split-counts takes three values: train val test");
    opt.split_counts = std::array<std::size_t, 3>{a.split_counts[0], a.split_counts[1], a.split_counts[2]};
  }
  const DatasetManifest m = gen_dataset(spec, opt, g.out);
  std::ostringstream table;
  table << "split\tbags\n";
  json counts;
  for (Split s : {Split::Train, Split::Val, Split::Test}) {
    table << split_name(s) << '\t' << m.split(s).size() << '\n';
    counts[std::string(split_name(s))] = m.split(s).size();
  }
  std::cout << "manifest " << (fs::path(g.out) / "manifest.json").string() << "\n";
  write_outputs(g, table.str(),
                json{{"command", "gen-data"}, {"seed", m.seed}, {"classes", spec.classes.size()}, {"splits", counts}});
  return 0;
}

// ---- standardize ----------------------------------------------------------

struct StandardizeArgs {
  std::string corpus;
  std::string template_path;
  std::string cache_dir;
  std::string backend = "mock";
  std::uint64_t mock_seed = 0;
  std::string url;
  std::string path = "/v1/chat/completions";
  std::string model;
  std::string api_key_env = "FIVE_API_KEY";
};

int run_standardize(const Globals& g, const StandardizeArgs& a) {
  if (a.corpus.empty()) throw ValidationError("--corpus is required");
  const PromptTemplate tmpl = a.template_path.empty() ? default_template() : load_template(a.template_path);
  const auto reports = read_corpus(a.corpus);

  std::unique_ptr<StandardizerBackend> inner;
  if (a.backend == "mock") {
    inner = std::make_unique<MockStandardizer>(a.mock_seed);
  } else if (a.backend == "http") {
#ifdef FIVE_WITH_HTTP_BACKEND
    if (a.url.empty() || a.model.empty())
      throw ValidationError("--url and --model are required for the http backend");
    const char* key = std::getenv(a.api_key_env.c_str());
    inner = std::make_unique<HttpStandardizer>(a.url, a.path, a.model, key ? key : "");
#else
    throw ValidationError("this build has no http backend (configure with -DFIVE_WITH_HTTP_BACKEND=ON)");
#endif
  } else {
    throw ValidationError("--backend must be mock or http");
  }
  std::unique_ptr<CachingStandardizer> cache;
  StandardizerBackend* backend = inner.get();
  if (!a.cache_dir.empty()) {
    cache = std::make_unique<CachingStandardizer>(*inner, a.cache_dir);
    backend = cache.get();
  }

  std::vector<DescriptionRecord> records;
  std::ostringstream table;
  table << "report_id";
  for (std::size_t f = 0; f < kFieldCount; ++f) table << '\t' << field_name(f);
  table << "\twarnings\n";
  std::size_t warned = 0;
  for (const auto& r : reports) {
    const ParsedAnswer parsed = parse_answer(backend->standardize(r, tmpl));
    table << r.report_id;
    for (std::size_t f = 0; f < kFieldCount; ++f) table << '\t' << verdict_name(f, parsed.description.verdict(f));
    table << '\t' << parsed.warnings.count() << '\n';
    if (parsed.warnings.any()) {
      ++warned;
      std::cerr << "warning: " << r.report_id << " has " << parsed.warnings.count()
                << " unclassifiable segment(s), recorded as Unknown\n";
    }
    records.push_back({r.report_id, parsed.description});
  }
  fs::create_directories(g.out);
  write_descriptions(records, fs::path(g.out) / "descriptions.jsonl");
  json summary = {{"command", "standardize"},
                  {"reports", reports.size()},
                  {"reports_with_warnings", warned},
                  {"template_version", tmpl.version},
                  {"backend", a.backend}};
  if (cache) {
    summary["cache_hits"] = cache->hits();
    summary["cache_misses"] = cache->misses();
  }
  write_outputs(g, table.str(), summary);
  return 0;
}

// ---- train ----------------------------------------------------------------

int run_train(const Globals& g, const std::string& data) {
  const DatasetManifest m = require_manifest(data);
  const TrainConfig cfg = resolve_config(g);
  if (cfg.dim != m.spec.dim)
    throw ValidationError("config dim " + std::to_string(cfg.dim) + " does not match the dataset dim " +
                          std::to_string(m.spec.dim));
  const auto train_bags = load_split(m, Split::Train);
  const auto val_bags = load_split(m, Split::Val);
  FiveModel model(cfg, load_vocabulary(m));
  model.init(cfg.seed);

  fs::create_directories(g.out);
  std::ofstream log(fs::path(g.out) / "train_log.tsv");
  if (!log) throw IoError("cannot write " + (fs::path(g.out) / "train_log.tsv").string());
  const auto start = std::chrono::steady_clock::now();
  const TrainResult r = train(model, train_bags, val_bags, m.spec.class_texts(), &log);
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  save_checkpoint(model, fs::path(g.out) / "checkpoint.fivc");
  save_config(cfg, fs::path(g.out) / "config.json");

  std::ostringstream table;
  table << "epoch\tloss\tseconds\tval_accuracy\n";
  for (std::size_t e = 0; e < r.epoch_losses.size(); ++e)
    table << e + 1 << '\t' << fmt(r.epoch_losses[e]) << '\t' << fmt(r.epoch_seconds[e]) << '\t'
          << (e < r.val_accuracy.size() ? fmt(r.val_accuracy[e]) : "") << '\n';
  json summary = {{"command", "train"},
                  {"steps", r.steps},
                  {"epochs", r.epoch_losses.size()},
                  {"initial_loss", r.step_losses.empty() ? 0.0 : r.step_losses.front()},
                  {"final_epoch_loss", r.epoch_losses.empty() ? 0.0 : r.epoch_losses.back()},
                  {"best_val_accuracy", r.best_val_accuracy},
                  {"best_epoch", r.best_epoch},
                  {"dropped_unknown", r.dropped_unknown},
                  {"tau", model.tau_value()},
                  {"seconds", seconds},
                  {"checkpoint", (fs::path(g.out) / "checkpoint.fivc").string()}};
  write_outputs(g, table.str(), summary);
  return 0;
}

// ---- evaluation -----------------------------------------------------------

int run_eval_zeroshot(const Globals& g, const std::string& checkpoint, const std::string& data,
                      const std::string& split) {
  const DatasetManifest m = require_manifest(data);
  FiveModel model = load_checkpoint(checkpoint);
  const EvalReport rep = eval_zeroshot(model, load_split(m, split_from_name(split)), m.spec.class_texts());
  json summary = report_to_json(rep);
  summary["command"] = "eval-zeroshot";
  summary["split"] = split;
  write_outputs(g, report_to_tsv(rep), summary);
  return 0;
}

struct FewShotArgs {
  std::string checkpoint;
  std::string data;
  std::vector<std::size_t> shots = {0, 1, 4, 16};
  std::size_t seeds = 5;
  std::size_t steps = 40;
  double lr = 1e-3;
  std::vector<std::string> tunables;
};

int run_eval_fewshot(const Globals& g, const FewShotArgs& a) {
  const DatasetManifest m = require_manifest(a.data);
  const FiveModel model = load_checkpoint(a.checkpoint);
  const auto pool = load_split(m, Split::Train);
  const auto test = load_split(m, Split::Test);
  if (a.seeds < 1) throw ValidationError("--seeds must be positive");
  FewShotConfig fc;
  fc.steps = a.steps;
  fc.lr = a.lr;
  if (!a.tunables.empty()) fc.tunables = a.tunables;
  const std::uint64_t base = g.seed.value_or(0);

  std::ostringstream table;
  table << "shots\tseed\taccuracy\tmacro_f1\ttop1\ttop5\n";
  json means = json::object();
  for (std::size_t k : a.shots) {
    double sum = 0.0;
    for (std::size_t s = 0; s < a.seeds; ++s) {
      fc.shots = k;
      fc.seed = base + s;
      const EvalReport rep = eval_fewshot(model, pool, test, m.spec.class_texts(), fc);
      table << k << '\t' << fc.seed << '\t' << fmt(rep.accuracy) << '\t' << fmt(rep.macro_f1) << '\t'
            << fmt(rep.top1) << '\t' << fmt(rep.top5) << '\n';
      sum += rep.accuracy;
    }
    means[std::to_string(k)] = sum / static_cast<double>(a.seeds);
  }
  write_outputs(g, table.str(),
                json{{"command", "eval-fewshot"}, {"seeds", a.seeds}, {"steps", a.steps}, {"mean_accuracy", means}});
  return 0;
}

struct BaselineArgs {
  std::string data;
  std::vector<std::string> poolings = {"mean", "max", "attention"};
  std::size_t epochs = 200;
  double lr = 1e-2;
};

int run_baseline(const Globals& g, const BaselineArgs& a) {
  const DatasetManifest m = require_manifest(a.data);
  const auto train_bags = load_split(m, Split::Train);
  const auto test = load_split(m, Split::Test);
  std::ostringstream table;
  table << "pooling\taccuracy\tmacro_f1\tauc\ttop1\ttop5\n";
  json results = json::object();
  for (const auto& name : a.poolings) {
    ProbeConfig pc;
    pc.pooling = pooling_from_name(name);
    pc.epochs = a.epochs;
    pc.lr = a.lr;
    pc.seed = g.seed.value_or(0);
    const EvalReport rep = baseline_linear_probe(train_bags, test, m.spec.classes.size(), pc);
    table << name << '\t' << fmt(rep.accuracy) << '\t' << fmt(rep.macro_f1) << '\t'
          << (rep.auc ? fmt(*rep.auc) : "") << '\t' << fmt(rep.top1) << '\t' << fmt(rep.top5) << '\n';
    results[name] = report_to_json(rep);
  }
  write_outputs(g, table.str(), json{{"command", "baseline"}, {"results", results}});
  return 0;
}

struct AblateArgs {
  std::string data;
  std::vector<double> ratios = {0.25, 0.5, 1.0};
  std::vector<std::size_t> maxns = {4, 16, 64};
  std::size_t seeds = 3;
  std::size_t epochs = 10;
};

int run_ablate(const Globals& g, const AblateArgs& a) {
  const DatasetManifest m = require_manifest(a.data);
  const TrainConfig cfg = resolve_config(g);
  AblationGrid grid{a.ratios, a.maxns, a.seeds, a.epochs};
  const auto rows = ablate_sampling(load_split(m, Split::Train), load_split(m, Split::Val), load_split(m, Split::Test),
                                    m.spec.class_texts(), load_vocabulary(m), cfg, grid, &std::cerr);
  json jrows = json::array();
  for (const auto& r : rows)
    jrows.push_back({{"ratio", r.ratio},
                     {"maxn", r.maxn},
                     {"mean_accuracy", r.mean_accuracy},
                     {"std_accuracy", r.std_accuracy},
                     {"mean_epoch_seconds", r.mean_epoch_seconds},
                     {"runs", r.runs}});
  write_outputs(g, ablation_to_tsv(rows), json{{"command", "ablate-sampling"}, {"rows", jrows}});
  return 0;
}

int run_gradcheck(const Globals& g, double tolerance) {
  const auto start = std::chrono::steady_clock::now();
  const GradReport r = tiny_grad_check(g.seed.value_or(0));
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  std::ostringstream table;
  table << "param\ttrainable\tchecked\tmax_rel_error\tmax_abs_grad\n";
  for (const auto& p : r.params)
    table << p.name << '\t' << p.trainable << '\t' << p.checked_elements << '\t' << fmt(p.max_rel_error) << '\t'
          << fmt(p.max_abs_grad) << '\n';
  const bool ok = r.passed(tolerance);
  write_outputs(g, table.str(),
                json{{"command", "gradcheck"},
                     {"max_rel_error", r.max_rel_error},
                     {"worst", r.worst},
                     {"tolerance", tolerance},
                     {"passed", ok},
                     {"seconds", seconds}});
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Fine-grained visual-semantic MIL on synthetic slide surrogates"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config, "Training config (JSON)");
  app.add_option("--seed", g.seed, "Seed override");
  app.add_option("--out", g.out, "Output directory")->capture_default_str();
  app.fallthrough();

  GenDataArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Generate a synthetic dataset");
  gen_cmd->add_option("--classes", gen.classes, "coarse or subtype")->capture_default_str();
  gen_cmd->add_option("--spec", gen.spec_path, "Synthetic world spec (JSON), overrides --classes");
  gen_cmd->add_option("--bags-per-class", gen.bags_per_class)->capture_default_str();
  gen_cmd->add_option("--split-counts", gen.split_counts, "Per-class train val test counts")->expected(3);
  gen_cmd->add_option("--standardizer-seed", gen.standardizer_seed)->capture_default_str();

  StandardizeArgs st;
  auto* st_cmd = app.add_subcommand("standardize", "Turn a report corpus into fine-grained descriptions");
  st_cmd->add_option("--corpus", st.corpus, "Report corpus (JSONL)")->required();
  st_cmd->add_option("--template", st.template_path, "Prompt template (JSON)");
  st_cmd->add_option("--cache", st.cache_dir, "Replay cache directory");
  st_cmd->add_option("--backend", st.backend, "mock or http")->capture_default_str();
  st_cmd->add_option("--mock-seed", st.mock_seed)->capture_default_str();
  st_cmd->add_option("--url", st.url, "Base URL of the http backend");
  st_cmd->add_option("--path", st.path)->capture_default_str();
  st_cmd->add_option("--model", st.model)->capture_default_str();
  st_cmd->add_option("--api-key-env", st.api_key_env)->capture_default_str();

  std::string train_data;
  auto* train_cmd = app.add_subcommand("train", "Train a model");
  train_cmd->add_option("--data", train_data, "Dataset manifest")->required();

  std::string zs_ckpt, zs_data, zs_split = "test";
  auto* zs_cmd = app.add_subcommand("eval-zeroshot", "Zero-shot evaluation");
  zs_cmd->add_option("--checkpoint", zs_ckpt)->required();
  zs_cmd->add_option("--data", zs_data)->required();
  zs_cmd->add_option("--split", zs_split)->capture_default_str();

  FewShotArgs fs_args;
  auto* fs_cmd = app.add_subcommand("eval-fewshot", "Few-shot evaluation over several seeds");
  fs_cmd->add_option("--checkpoint", fs_args.checkpoint)->required();
  fs_cmd->add_option("--data", fs_args.data)->required();
  fs_cmd->add_option("--shots", fs_args.shots, "Shots per class")->capture_default_str();
  fs_cmd->add_option("--seeds", fs_args.seeds)->capture_default_str();
  fs_cmd->add_option("--steps", fs_args.steps)->capture_default_str();
  fs_cmd->add_option("--lr", fs_args.lr)->capture_default_str();
  fs_cmd->add_option("--tunables", fs_args.tunables, "Parameter names to fine-tune");

  BaselineArgs bl;
  auto* bl_cmd = app.add_subcommand("baseline", "Linear probes on pooled instance features");
  bl_cmd->add_option("--data", bl.data)->required();
  bl_cmd->add_option("--pooling", bl.poolings, "mean, max and/or attention")->capture_default_str();
  bl_cmd->add_option("--epochs", bl.epochs)->capture_default_str();
  bl_cmd->add_option("--lr", bl.lr)->capture_default_str();

  AblateArgs ab;
  auto* ab_cmd = app.add_subcommand("ablate-sampling", "Sweep sample ratio and MAXN");
  ab_cmd->add_option("--data", ab.data)->required();
  ab_cmd->add_option("--ratios", ab.ratios)->capture_default_str();
  ab_cmd->add_option("--maxns", ab.maxns)->capture_default_str();
  ab_cmd->add_option("--seeds", ab.seeds)->capture_default_str();
  ab_cmd->add_option("--epochs", ab.epochs)->capture_default_str();

  double tolerance = 1e-4;
  auto* gc_cmd = app.add_subcommand("gradcheck", "Finite-difference check on the tiny fixture");
  gc_cmd->add_option("--tolerance", tolerance)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*gen_cmd) return run_gen_data(g, gen);
    if (*st_cmd) return run_standardize(g, st);
    if (*train_cmd) return run_train(g, train_data);
    if (*zs_cmd) return run_eval_zeroshot(g, zs_ckpt, zs_data, zs_split);
    if (*fs_cmd) return run_eval_fewshot(g, fs_args);
    if (*bl_cmd) return run_baseline(g, bl);
    if (*ab_cmd) return run_ablate(g, ab);
    if (*gc_cmd) return run_gradcheck(g, tolerance);
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
