// prime: command-line driver for the priming pipeline. Each subcommand runs
// one stage (or the whole run) and writes its artifacts into --out, together
// with the resolved config and a provenance record.
#include "priming/synth.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace priming;

namespace {

// Everything a run is parameterized by; stage input files (index, pool, head)
// are per-command flags, not config.
struct RunConfig {
  std::optional<std::string> corpus;
  std::optional<std::string> classes;
  std::size_t cap = 100;
  std::size_t k = 10;
  double alpha_n0 = 10.0;
  double alpha_p = 2.0;
  std::string alpha_mode = "per_class";
  std::optional<double> alpha_fixed;
  std::optional<std::string> exclude;
  std::vector<std::uint64_t> seeds;  // empty: fall back to the synth seed
  int workers = 0;                   // 0: take NP_WORKERS, then 1
  std::optional<std::string> out;
  std::optional<SynthConfig> synth;
  std::optional<std::string> test_embeddings;
  std::optional<std::string> test_labels;
};

double as_number(const json& v, const std::string& key) {
  if (!v.is_number()) fail(ErrorKind::TypeError, "key \"" + key + "\" must be a number");
  return v.get<double>();
}

std::int64_t as_integer(const json& v, const std::string& key) {
  if (!v.is_number_integer()) fail(ErrorKind::TypeError, "key \"" + key + "\" must be an integer");
  return v.get<std::int64_t>();
}

std::string as_string(const json& v, const std::string& key) {
  if (!v.is_string()) fail(ErrorKind::TypeError, "key \"" + key + "\" must be a string");
  return v.get<std::string>();
}

SynthConfig parse_synth(const json& j) {
  SynthConfig cfg;
  for (const auto& [key, value] : j.items()) {
    if (key == "n_classes") cfg.n_classes = static_cast<int>(as_integer(value, key));
    else if (key == "dim") cfg.dim = static_cast<int>(as_integer(value, key));
    else if (key == "per_class") cfg.per_class = static_cast<int>(as_integer(value, key));
    else if (key == "separation") cfg.separation = as_number(value, key);
    else if (key == "caption_noise") cfg.caption_noise = as_number(value, key);
    else if (key == "text_noise") cfg.text_noise = as_number(value, key);
    else if (key == "test_per_class") cfg.test_per_class = static_cast<int>(as_integer(value, key));
    else if (key == "seed") {
      if (!value.is_number_unsigned()) {
        fail(ErrorKind::TypeError, "key \"seed\" must be a non-negative integer");
      }
      cfg.seed = value.get<std::uint64_t>();
    } else if (key == "image_noise") cfg.image_noise = as_number(value, key);
    else if (key == "test_shift") cfg.test_shift = as_number(value, key);
    else fail(ErrorKind::UnknownKey, "unknown synth key \"" + key + "\"");
  }
  return cfg;
}

RunConfig parse_config_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::IoError, "cannot open config " + path.string());
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded() || !j.is_object()) {
    fail(ErrorKind::TypeError, path.string() + ": config must be a JSON object");
  }
  RunConfig cfg;
  for (const auto& [key, value] : j.items()) {
    if (key == "corpus") cfg.corpus = as_string(value, key);
    else if (key == "classes") cfg.classes = as_string(value, key);
    else if (key == "cap") {
      const auto v = as_integer(value, key);
      if (v < 0) fail(ErrorKind::TypeError, "key \"cap\" must be non-negative");
      cfg.cap = static_cast<std::size_t>(v);
    } else if (key == "k") {
      const auto v = as_integer(value, key);
      if (v < 1) fail(ErrorKind::TypeError, "key \"k\" must be positive");
      cfg.k = static_cast<std::size_t>(v);
    } else if (key == "alpha_n0") cfg.alpha_n0 = as_number(value, key);
    else if (key == "alpha_p") cfg.alpha_p = as_number(value, key);
    else if (key == "alpha_mode") cfg.alpha_mode = as_string(value, key);
    else if (key == "alpha_fixed") cfg.alpha_fixed = as_number(value, key);
    else if (key == "exclude") cfg.exclude = as_string(value, key);
    else if (key == "seeds") {
      if (!value.is_array()) fail(ErrorKind::TypeError, "key \"seeds\" must be an array");
      for (const auto& s : value) {
        if (!s.is_number_unsigned()) {
          fail(ErrorKind::TypeError, "seeds must be non-negative integers");
        }
        cfg.seeds.push_back(s.get<std::uint64_t>());
      }
    } else if (key == "workers") cfg.workers = static_cast<int>(as_integer(value, key));
    else if (key == "out") cfg.out = as_string(value, key);
    else if (key == "synth") {
      if (!value.is_object()) fail(ErrorKind::TypeError, "key \"synth\" must be an object");
      cfg.synth = parse_synth(value);
    } else if (key == "test_embeddings") cfg.test_embeddings = as_string(value, key);
    else if (key == "test_labels") cfg.test_labels = as_string(value, key);
    else fail(ErrorKind::UnknownKey, "unknown config key \"" + key + "\"");
  }
  return cfg;
}

json dump_config(const RunConfig& cfg) {
  json j;
  if (cfg.corpus) j["corpus"] = *cfg.corpus;
  if (cfg.classes) j["classes"] = *cfg.classes;
  j["cap"] = cfg.cap;
  j["k"] = cfg.k;
  j["alpha_n0"] = cfg.alpha_n0;
  j["alpha_p"] = cfg.alpha_p;
  j["alpha_mode"] = cfg.alpha_mode;
  if (cfg.alpha_fixed) j["alpha_fixed"] = *cfg.alpha_fixed;
  if (cfg.exclude) j["exclude"] = *cfg.exclude;
  if (!cfg.seeds.empty()) j["seeds"] = cfg.seeds;
  j["workers"] = cfg.workers;
  if (cfg.out) j["out"] = *cfg.out;
  if (cfg.synth) {
    const auto& s = *cfg.synth;
    j["synth"] = json{{"n_classes", s.n_classes},
                      {"dim", s.dim},
                      {"per_class", s.per_class},
                      {"separation", s.separation},
                      {"caption_noise", s.caption_noise},
                      {"text_noise", s.text_noise},
                      {"test_per_class", s.test_per_class},
                      {"seed", s.seed},
                      {"image_noise", s.image_noise},
                      {"test_shift", s.test_shift}};
  }
  if (cfg.test_embeddings) j["test_embeddings"] = *cfg.test_embeddings;
  if (cfg.test_labels) j["test_labels"] = *cfg.test_labels;
  return j;
}

std::uint64_t fnv1a64(const std::string& text) {
  std::uint64_t hash = 0xCBF29CE484222325ULL;
  for (const unsigned char ch : text) {
    hash ^= ch;
    hash *= 0x100000001B3ULL;
  }
  return hash;
}

// Hash of the experiment parameters only. Where the artifacts land and how
// many threads computed them must not change what they claim to be.
std::string config_hash(const RunConfig& cfg) {
  json j = dump_config(cfg);
  j.erase("out");
  j.erase("workers");
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(fnv1a64(j.dump())));
  return buf;
}

fs::path require_out(const RunConfig& cfg) {
  if (!cfg.out) fail(ErrorKind::MissingRequired, "an output directory (--out) is required");
  fs::create_directories(*cfg.out);
  return *cfg.out;
}

std::string require_value(const std::optional<std::string>& value, const char* what) {
  if (!value) fail(ErrorKind::MissingRequired, std::string(what) + " is required");
  return *value;
}

std::string require_value(const std::string& value, const char* what) {
  if (value.empty()) fail(ErrorKind::MissingRequired, std::string(what) + " is required");
  return value;
}

void echo_config(const RunConfig& cfg, const std::string& command, const fs::path& out_dir) {
  {
    std::ofstream out(out_dir / "config_resolved.json", std::ios::trunc);
    out << dump_config(cfg).dump() << '\n';
  }
  std::ofstream out(out_dir / "provenance.json", std::ios::trunc);
  out << json{{"tool", kToolVersion}, {"command", command}, {"config_hash", config_hash(cfg)}}
             .dump()
      << '\n';
}

AlphaSchedule schedule_of(const RunConfig& cfg) {
  AlphaSchedule sched;
  sched.n0 = cfg.alpha_n0;
  sched.p = cfg.alpha_p;
  sched.mode = alpha_mode_from_string(cfg.alpha_mode);
  sched.fixed = cfg.alpha_fixed;
  return sched;
}

PipelineParams params_of(const RunConfig& cfg) {
  PipelineParams params;
  params.cap = cfg.cap;
  params.k = cfg.k;
  params.sched = schedule_of(cfg);
  params.workers = cfg.workers;
  if (cfg.exclude) {
    const auto ids = read_id_file(*cfg.exclude);
    params.exclude.insert(ids.begin(), ids.end());
  }
  return params;
}

std::vector<std::string> read_lines(const fs::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::IoError, "cannot open " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  return lines;
}

Corpus load_corpus_from(const RunConfig& cfg) {
  return load_corpus(load_manifest(require_value(cfg.corpus, "a corpus manifest (--corpus)")));
}

std::vector<ClassSpec> load_specs_for(const RunConfig& cfg, const Corpus& corpus) {
  return load_class_specs(require_value(cfg.classes, "a class spec file (--classes)"),
                          static_cast<int>(corpus.dim()));
}

// Caption shards only; index construction never needs the embeddings.
InvertedIndex index_from_manifest(const fs::path& manifest_path, int workers) {
  const auto manifest = load_manifest(manifest_path);
  std::vector<std::vector<CaptionRecord>> shards;
  shards.reserve(manifest.shards.size());
  for (const auto& shard : manifest.shards) {
    shards.push_back(read_caption_shard(shard.captions));
  }
  std::vector<std::span<const CaptionRecord>> spans;
  spans.reserve(shards.size());
  for (const auto& shard : shards) spans.emplace_back(shard.data(), shard.size());
  return build_index(std::span<const std::span<const CaptionRecord>>(spans.data(), spans.size()),
                     workers);
}

json summary_json(const RunSummary& s) {
  json j;
  j["zero_shot_accuracy"] = s.zero_shot_accuracy;
  j["primed_accuracy"] = s.primed_accuracy;
  if (s.transduced_accuracy) j["transduced_accuracy"] = *s.transduced_accuracy;
  j["pool_raw"] = s.pool_raw;
  j["pool_filtered"] = s.pool_filtered;
  j["pool_capped"] = s.pool_capped;
  if (s.pool_transduced) j["pool_transduced"] = *s.pool_transduced;
  j["n_test"] = s.n_test;
  return j;
}

void write_run_artifacts(const PipelineArtifacts& art, const fs::path& dir) {
  fs::create_directories(dir);
  write_pool(art.raw, dir / "pool_raw.jsonl");
  write_pool(art.filtered, dir / "pool_filtered.jsonl");
  write_pool(art.capped, dir / "pool_capped.jsonl");
  if (art.transduced) write_pool(*art.transduced, dir / "pool_transduced.jsonl");
  save_head(as_stored(art.wz), dir / "head_zero_shot.nph");
  save_head(as_stored(art.wft), dir / "head_centroid.nph");
  save_head(as_stored(art.walpha), dir / "head_ensembled.nph");
  if (art.walpha_transduced) {
    save_head(as_stored(*art.walpha_transduced), dir / "head_transduced.nph");
  }
  write_eval_report(art.zero_shot, dir / "eval_zero_shot.json");
  write_eval_report(art.primed, dir / "eval_primed.json");
  if (art.transduced_eval) write_eval_report(*art.transduced_eval, dir / "eval_transduced.json");
  const auto summary = summarize(art);
  write_run_summary(summary, dir / "summary.jsonl");
  write_stage_timings(summary, dir / "timings.jsonl");
}

struct StageInputs {
  std::string index;
  std::string pool;
  std::string head;
  std::string baseline;
  std::string queries;
};

void stamp(PrimingPool& pool, const RunConfig& cfg) {
  pool.created_from = std::string(kToolVersion) + " cfg:" + config_hash(cfg);
}

int cmd_synth(RunConfig& cfg, const fs::path& out_dir) {
  if (!cfg.synth) fail(ErrorKind::MissingRequired, "a synth config block is required");
  SynthConfig synth_cfg = *cfg.synth;
  if (!cfg.seeds.empty()) synth_cfg.seed = cfg.seeds[0];
  const auto synth = generate_corpus(synth_cfg);
  write_synth_corpus(synth, out_dir);
  std::cout << json{{"records", synth.captions.size()},
                    {"classes", synth.specs.size()},
                    {"test", synth.test_y.size()}}
                   .dump()
            << '\n';
  return 0;
}

int cmd_index_build(RunConfig& cfg, const fs::path& out_dir) {
  const auto index = index_from_manifest(require_value(cfg.corpus, "a corpus manifest (--corpus)"),
                                         cfg.workers);
  save_index(index, out_dir / "index.npi");
  std::cout << json{{"records", index.record_count()}, {"tokens", index.token_count()}}.dump()
            << '\n';
  return 0;
}

int cmd_index_stats(const StageInputs& in, const fs::path& out_dir) {
  const auto index = load_index(require_value(in.index, "an index file (--index)"));
  const auto phrases = read_lines(require_value(in.queries, "a query file (--queries)"));
  const auto stats = query_stats(index, phrases);
  write_query_stats(stats, out_dir / "query_stats.jsonl");
  std::cout << json{{"queries", stats.size()}}.dump() << '\n';
  return 0;
}

int cmd_pool_build(RunConfig& cfg, const StageInputs& in, const fs::path& out_dir) {
  const auto corpus = load_corpus_from(cfg);
  const auto specs = load_specs_for(cfg, corpus);
  const auto index = in.index.empty() ? build_index(corpus.captions, cfg.workers)
                                      : load_index(in.index);
  std::vector<std::string> query_errors;
  auto pool = build_pool(index, specs, corpus, &query_errors);
  for (const auto& msg : query_errors) {
    std::cerr << json{{"warning", "empty_query"}, {"message", msg}}.dump() << '\n';
  }
  stamp(pool, cfg);
  write_pool(pool, out_dir / "pool.jsonl");
  std::cout << json{{"pool_size", pool.total_size()}}.dump() << '\n';
  return 0;
}

int cmd_pool_filter(RunConfig& cfg, const StageInputs& in, const fs::path& out_dir) {
  const auto corpus = load_corpus_from(cfg);
  const auto specs = load_specs_for(cfg, corpus);
  const auto pool = read_pool(require_value(in.pool, "a pool file (--pool)"));
  auto filtered = consistency_filter(pool, build_zero_shot_head(specs), corpus);
  stamp(filtered, cfg);
  write_pool(filtered, out_dir / "pool_filtered.jsonl");
  std::cout << json{{"pool_size", filtered.total_size()}}.dump() << '\n';
  return 0;
}

int cmd_pool_cap(RunConfig& cfg, const StageInputs& in, const fs::path& out_dir) {
  const auto pool = read_pool(require_value(in.pool, "a pool file (--pool)"));
  auto capped = cap_per_class(pool, cfg.cap);
  stamp(capped, cfg);
  write_pool(capped, out_dir / "pool_capped.jsonl");
  std::cout << json{{"pool_size", capped.total_size()}}.dump() << '\n';
  return 0;
}

int cmd_pool_exclude(RunConfig& cfg, const StageInputs& in, const fs::path& out_dir) {
  const auto pool = read_pool(require_value(in.pool, "a pool file (--pool)"));
  const auto ids = read_id_file(require_value(cfg.exclude, "an exclusion id file (--exclude)"));
  auto kept = exclude_ids(pool, {ids.begin(), ids.end()});
  stamp(kept, cfg);
  write_pool(kept, out_dir / "pool_excluded.jsonl");
  std::cout << json{{"pool_size", kept.total_size()}}.dump() << '\n';
  return 0;
}

int cmd_transduct(RunConfig& cfg, const StageInputs& in, const fs::path& out_dir) {
  const auto corpus = load_corpus_from(cfg);
  const auto pool = read_pool(require_value(in.pool, "a pool file (--pool)"));
  const auto test = normalize_embeddings(read_embedding_shard(
      require_value(cfg.test_embeddings, "a test embedding shard (--test-embeddings)")));
  auto transduced = transductive_filter(pool, corpus, test, cfg.k, cfg.workers);
  stamp(transduced, cfg);
  write_pool(transduced, out_dir / "pool_transduced.jsonl");
  std::cout << json{{"pool_size", transduced.total_size()}}.dump() << '\n';
  return 0;
}

int cmd_attune(RunConfig& cfg, const StageInputs& in, const fs::path& out_dir) {
  const auto corpus = load_corpus_from(cfg);
  const auto specs = load_specs_for(cfg, corpus);
  const auto pool = read_pool(require_value(in.pool, "a pool file (--pool)"));
  const auto wz = build_zero_shot_head(specs);
  const auto wft = build_centroid_head(gather_clusters(pool, corpus));
  const auto walpha = ensemble_heads(wft, wz, schedule_of(cfg));
  save_head(as_stored(wz), out_dir / "head_zero_shot.nph");
  save_head(as_stored(wft), out_dir / "head_centroid.nph");
  save_head(as_stored(walpha), out_dir / "head_ensembled.nph");
  json alphas = json::array();
  for (const auto a : walpha.alphas) alphas.push_back(a);
  std::cout << json{{"classes", walpha.alphas.size()}, {"alphas", std::move(alphas)}}.dump()
            << '\n';
  return 0;
}

int cmd_eval(RunConfig& cfg, const StageInputs& in, const fs::path& out_dir) {
  const auto head = load_head(require_value(in.head, "a head file (--head)"));
  const auto test = normalize_embeddings(read_embedding_shard(
      require_value(cfg.test_embeddings, "a test embedding shard (--test-embeddings)")));
  const auto labels =
      read_labels(require_value(cfg.test_labels, "a test label file (--test-labels)"));
  if (!in.baseline.empty()) {
    const auto baseline = load_head(in.baseline);
    const auto report = compare_heads(baseline.W, head.W, test, labels, cfg.workers);
    write_delta_report(report, out_dir / "delta_report.json");
    std::cout << json{{"accuracy_a", report.accuracy_a},
                      {"accuracy_b", report.accuracy_b},
                      {"delta", report.delta}}
                     .dump()
              << '\n';
  } else {
    const auto report = top1_accuracy(head.W, test, labels, cfg.workers);
    write_eval_report(report, out_dir / "eval_report.json");
    std::cout << json{{"accuracy", report.accuracy}, {"n_test", report.n_test}}.dump() << '\n';
  }
  return 0;
}

int cmd_bench(RunConfig& cfg, const StageInputs& in, const fs::path& out_dir) {
  const auto corpus = load_corpus_from(cfg);
  const auto pool = read_pool(require_value(in.pool, "a pool file (--pool)"));
  const auto test = normalize_embeddings(read_embedding_shard(
      require_value(cfg.test_embeddings, "a test embedding shard (--test-embeddings)")));
  const auto result = retrieval_bench(pool, corpus, test, cfg.k, cfg.workers);
  write_bench_report(result.report, out_dir / "timing.jsonl");
  std::cout << json{{"queries", result.report.queries},
                    {"pool_size", result.report.pool_size},
                    {"total_micros", result.report.total_micros},
                    {"mean_micros_per_query", result.report.mean_micros_per_query}}
                   .dump()
            << '\n';
  return 0;
}

int cmd_run(RunConfig& cfg, const StageInputs& in, const fs::path& out_dir) {
  const auto params = params_of(cfg);

  if (cfg.synth) {
    std::vector<std::uint64_t> seeds = cfg.seeds;
    if (seeds.empty()) seeds.push_back(cfg.synth->seed);
    std::ofstream summary_out(out_dir / "summary.jsonl", std::ios::trunc);
    for (const auto seed : seeds) {
      SynthConfig synth_cfg = *cfg.synth;
      synth_cfg.seed = seed;
      const auto synth = generate_corpus(synth_cfg);
      const auto corpus = make_corpus(synth.captions, synth.embeddings);
      const auto index = build_index(synth.captions, cfg.workers);
      auto art = run_pipeline(corpus, index, synth.specs, synth.test_x, synth.test_y, params);
      stamp(art.raw, cfg);
      stamp(art.filtered, cfg);
      stamp(art.capped, cfg);
      if (art.transduced) stamp(*art.transduced, cfg);
      write_run_artifacts(art, out_dir / ("seed-" + std::to_string(seed)));
      json line = summary_json(summarize(art));
      line["seed"] = seed;
      summary_out << line.dump() << '\n';
      std::cout << line.dump() << '\n';
    }
    return 0;
  }

  const auto corpus = load_corpus_from(cfg);
  const auto specs = load_specs_for(cfg, corpus);
  const auto test = normalize_embeddings(read_embedding_shard(
      require_value(cfg.test_embeddings, "a test embedding shard (--test-embeddings)")));
  const auto labels =
      read_labels(require_value(cfg.test_labels, "a test label file (--test-labels)"));
  const auto index =
      in.index.empty() ? build_index(corpus.captions, cfg.workers) : load_index(in.index);
  auto art = run_pipeline(corpus, index, specs, test, labels, params);
  stamp(art.raw, cfg);
  stamp(art.filtered, cfg);
  stamp(art.capped, cfg);
  if (art.transduced) stamp(*art.transduced, cfg);
  write_run_artifacts(art, out_dir);
  const auto line = summary_json(summarize(art));
  std::cout << line.dump() << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"priming pipeline driver"};
  app.require_subcommand(1);

  std::string config_path;
  std::string corpus;
  std::string classes;
  std::string alpha_mode;
  std::string exclude;
  std::string out;
  std::string test_embeddings;
  std::string test_labels;
  std::size_t cap = 0;
  std::size_t k = 0;
  double alpha_n0 = 0.0;
  double alpha_p = 0.0;
  double alpha_fixed = 0.0;
  int workers = 0;
  std::vector<std::uint64_t> seeds;
  std::uint64_t seed = 0;
  StageInputs inputs;

  auto* opt_config = app.add_option("--config", config_path, "JSON config file");
  auto* opt_corpus = app.add_option("--corpus", corpus, "corpus manifest path");
  auto* opt_classes = app.add_option("--classes", classes, "class spec path");
  auto* opt_cap = app.add_option("--cap", cap, "per-class pool cap");
  auto* opt_k = app.add_option("--k", k, "transductive top-k");
  auto* opt_n0 = app.add_option("--alpha-n0", alpha_n0, "alpha schedule scale");
  auto* opt_p = app.add_option("--alpha-p", alpha_p, "alpha schedule exponent");
  auto* opt_mode = app.add_option("--alpha-mode", alpha_mode, "per_class or global");
  auto* opt_fixed = app.add_option("--alpha-fixed", alpha_fixed, "fixed alpha override in [0,1]");
  auto* opt_exclude = app.add_option("--exclude", exclude, "record id exclusion file");
  auto* opt_seeds = app.add_option("--seeds", seeds, "seed list")->delimiter(',');
  auto* opt_seed = app.add_option("--seed", seed, "single seed")->excludes(opt_seeds);
  auto* opt_workers = app.add_option("--workers", workers, "worker thread count");
  auto* opt_out = app.add_option("--out", out, "output directory");
  auto* opt_test_emb = app.add_option("--test-embeddings", test_embeddings,
                                      "test embedding shard");
  auto* opt_test_labels = app.add_option("--test-labels", test_labels, "test label file");
  app.add_option("--index", inputs.index, "saved index file");
  app.add_option("--pool", inputs.pool, "pool file");
  app.add_option("--head", inputs.head, "head file to evaluate");
  app.add_option("--baseline", inputs.baseline, "baseline head for a delta report");
  app.add_option("--queries", inputs.queries, "phrase file, one query per line");

  const std::vector<std::string> commands = {
      "index-build", "index-stats",  "pool-build", "pool-filter", "pool-cap", "pool-exclude",
      "transduct",   "attune",       "eval",       "bench",       "synth",    "run"};
  const std::vector<std::string> descriptions = {
      "build the caption phrase index",
      "answer phrase queries and report latencies",
      "build the raw priming pool",
      "apply the zero-shot consistency filter",
      "cap per-class cluster sizes",
      "drop excluded record ids",
      "refine the pool against test embeddings",
      "build centroid and ensembled heads",
      "score a head on a labeled test set",
      "time pool retrieval",
      "generate a synthetic corpus",
      "run the whole pipeline"};
  for (std::size_t i = 0; i < commands.size(); ++i) {
    app.add_subcommand(commands[i], descriptions[i])->fallthrough();
  }

  CLI11_PARSE(app, argc, argv);
  const std::string command = app.get_subcommands().front()->get_name();

  try {
    RunConfig cfg;
    if (opt_config->count() > 0) cfg = parse_config_file(config_path);
    if (opt_corpus->count() > 0) cfg.corpus = corpus;
    if (opt_classes->count() > 0) cfg.classes = classes;
    if (opt_cap->count() > 0) cfg.cap = cap;
    if (opt_k->count() > 0) cfg.k = k;
    if (opt_n0->count() > 0) cfg.alpha_n0 = alpha_n0;
    if (opt_p->count() > 0) cfg.alpha_p = alpha_p;
    if (opt_mode->count() > 0) cfg.alpha_mode = alpha_mode;
    if (opt_fixed->count() > 0) cfg.alpha_fixed = alpha_fixed;
    if (opt_exclude->count() > 0) cfg.exclude = exclude;
    if (opt_seeds->count() > 0) cfg.seeds = seeds;
    if (opt_seed->count() > 0) cfg.seeds = {seed};
    if (opt_workers->count() > 0) cfg.workers = workers;
    if (opt_out->count() > 0) cfg.out = out;
    if (opt_test_emb->count() > 0) cfg.test_embeddings = test_embeddings;
    if (opt_test_labels->count() > 0) cfg.test_labels = test_labels;

    if (cfg.workers <= 0) {
      cfg.workers = 1;
      if (const char* env = std::getenv("NP_WORKERS")) {
        const int parsed = std::atoi(env);
        if (parsed > 0) cfg.workers = parsed;
      }
    }

    const fs::path out_dir = require_out(cfg);
    echo_config(cfg, command, out_dir);

    if (command == "synth") return cmd_synth(cfg, out_dir);
    if (command == "index-build") return cmd_index_build(cfg, out_dir);
    if (command == "index-stats") return cmd_index_stats(inputs, out_dir);
    if (command == "pool-build") return cmd_pool_build(cfg, inputs, out_dir);
    if (command == "pool-filter") return cmd_pool_filter(cfg, inputs, out_dir);
    if (command == "pool-cap") return cmd_pool_cap(cfg, inputs, out_dir);
    if (command == "pool-exclude") return cmd_pool_exclude(cfg, inputs, out_dir);
    if (command == "transduct") return cmd_transduct(cfg, inputs, out_dir);
    if (command == "attune") return cmd_attune(cfg, inputs, out_dir);
    if (command == "eval") return cmd_eval(cfg, inputs, out_dir);
    if (command == "bench") return cmd_bench(cfg, inputs, out_dir);
    if (command == "run") return cmd_run(cfg, inputs, out_dir);
    fail(ErrorKind::InvalidConfig, "unhandled command " + command);
  } catch (const PipelineError& e) {
    std::cerr << json{{"error", to_string(e.kind())}, {"command", command}, {"message", e.what()}}
                     .dump()
              << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << json{{"error", "internal"}, {"command", command}, {"message", e.what()}}.dump()
              << '\n';
    return 3;
  }
}
