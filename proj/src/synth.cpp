#include "priming/synth.hpp"

#include "priming/detail/bytes.hpp"
#include "priming/numeric.hpp"

#include <json.hpp>

#include <algorithm>
#include <array>
#include <chrono>
#include <cstdio>

namespace priming {

namespace {

// Draw-stream tags; each (purpose, class) pair gets an independent sub-seed.
enum : std::uint64_t {
  kStreamBase = 1,
  kStreamClassDir = 2,
  kStreamImages = 3,
  kStreamCaptions = 4,
  kStreamText = 5,
  kStreamShiftDir = 6,
  kStreamTestImages = 7,
};

std::uint64_t stream_tag(std::uint64_t purpose, std::uint64_t c) { return (purpose << 32) | c; }

constexpr std::array<const char*, 16> kAdjectives = {
    "amber", "briny",  "cobalt", "dusky", "ebon",  "fulvous", "glaucous", "hoary",
    "ivory", "jade",   "khaki",  "lilac", "mauve", "ochre",   "pewter",   "russet"};
constexpr std::array<const char*, 16> kNouns = {
    "axolotl", "bandicoot", "capuchin", "dugong",  "echidna", "fossa",  "gavial",   "hoopoe",
    "ibex",    "jacana",    "kinkajou", "lorikeet", "markhor", "numbat", "ocelot",   "pangolin"};

std::string class_name(int c) {
  return std::string(kAdjectives[static_cast<std::size_t>(c) % kAdjectives.size()]) + " " +
         kNouns[static_cast<std::size_t>(c) / kAdjectives.size()];
}

// Even classes also answer to the concatenated single-token form.
std::vector<std::string> class_aliases(int c) {
  if (c % 2 != 0) return {};
  return {std::string(kAdjectives[static_cast<std::size_t>(c) % kAdjectives.size()]) +
          kNouns[static_cast<std::size_t>(c) / kAdjectives.size()]};
}

constexpr std::size_t kFillerVocab = 4096;
constexpr double kAliasRate = 0.2;

// Zipf(1) over the filler vocabulary; cumulative weights precomputed once.
std::size_t draw_filler(SplitMix64& rng) {
  static const std::vector<double> cdf = [] {
    std::vector<double> c(kFillerVocab);
    double total = 0.0;
    for (std::size_t r = 0; r < kFillerVocab; ++r) {
      total += 1.0 / static_cast<double>(r + 1);
      c[r] = total;
    }
    for (auto& v : c) v /= total;
    return c;
  }();
  const double u = rng.next_unit();
  return static_cast<std::size_t>(
      std::lower_bound(cdf.begin(), cdf.end(), u) - cdf.begin());
}

Eigen::VectorXd unit_gaussian(NormalSampler& rng, Eigen::Index d) {
  Eigen::VectorXd v = rng.vector(d);
  return v / v.norm();
}

void validate(const SynthConfig& cfg) {
  if (cfg.n_classes < 1 ||
      cfg.n_classes > static_cast<int>(kAdjectives.size() * kNouns.size())) {
    fail(ErrorKind::InvalidConfig,
         "n_classes must lie in [1, " + std::to_string(kAdjectives.size() * kNouns.size()) + "]");
  }
  if (cfg.dim < 1) fail(ErrorKind::InvalidConfig, "dim must be positive");
  if (cfg.per_class < 1) fail(ErrorKind::InvalidConfig, "per_class must be positive");
  if (cfg.test_per_class < 1) fail(ErrorKind::InvalidConfig, "test_per_class must be positive");
  if (!(cfg.separation >= 0.0)) fail(ErrorKind::InvalidConfig, "separation must be >= 0");
  if (!(cfg.caption_noise >= 0.0 && cfg.caption_noise <= 1.0)) {
    fail(ErrorKind::InvalidConfig, "caption_noise must lie in [0, 1]");
  }
  if (!(cfg.text_noise >= 0.0)) fail(ErrorKind::InvalidConfig, "text_noise must be >= 0");
  if (!(cfg.image_noise >= 0.0)) fail(ErrorKind::InvalidConfig, "image_noise must be >= 0");
  if (!(cfg.test_shift >= 0.0)) fail(ErrorKind::InvalidConfig, "test_shift must be >= 0");
}

double now_micros_since(const std::chrono::steady_clock::time_point& t0) {
  return std::chrono::duration<double, std::micro>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

SynthCorpus generate_corpus(const SynthConfig& cfg) {
  validate(cfg);
  const Eigen::Index d = cfg.dim;
  const auto n = static_cast<std::size_t>(cfg.n_classes);

  NormalSampler base_rng(sub_seed(cfg.seed, stream_tag(kStreamBase, 0)));
  const Eigen::VectorXd base = unit_gaussian(base_rng, d);

  std::vector<Eigen::VectorXd> means(n);
  for (std::size_t c = 0; c < n; ++c) {
    NormalSampler rng(sub_seed(cfg.seed, stream_tag(kStreamClassDir, c)));
    const Eigen::VectorXd dir = unit_gaussian(rng, d);
    Eigen::VectorXd mean = base + cfg.separation * dir;
    means[c] = mean / mean.norm();
  }

  SynthCorpus out;
  const std::size_t total = n * static_cast<std::size_t>(cfg.per_class);
  out.captions.reserve(total);
  out.truth.reserve(total);
  out.embeddings.resize(static_cast<Eigen::Index>(total), d);

  for (std::size_t c = 0; c < n; ++c) {
    NormalSampler img_rng(sub_seed(cfg.seed, stream_tag(kStreamImages, c)));
    SplitMix64 cap_rng(sub_seed(cfg.seed, stream_tag(kStreamCaptions, c)));
    for (int i = 0; i < cfg.per_class; ++i) {
      const RecordId id = c * static_cast<std::size_t>(cfg.per_class) + static_cast<std::size_t>(i);
      Eigen::VectorXd v = means[c] + cfg.image_noise * img_rng.vector(d);
      out.embeddings.row(static_cast<Eigen::Index>(id)) = (v / v.norm()).cast<float>();

      int named = static_cast<int>(c);
      if (cap_rng.next_unit() <= cfg.caption_noise && cfg.n_classes > 1) {
        const auto other = cap_rng.next_below(static_cast<std::uint64_t>(cfg.n_classes - 1));
        named = other >= c ? static_cast<int>(other) + 1 : static_cast<int>(other);
      }
      std::string mention = class_name(named);
      const auto aliases = class_aliases(named);
      if (!aliases.empty() && cap_rng.next_unit() <= kAliasRate) mention = aliases[0];

      std::string caption = "a photo of a " + mention;
      const auto fillers = 2 + cap_rng.next_below(5);
      for (std::uint64_t f = 0; f < fillers; ++f) {
        caption += " w" + std::to_string(draw_filler(cap_rng));
      }
      out.captions.push_back({id, std::move(caption), std::nullopt});
      out.truth.push_back({id, static_cast<int>(c), named});
    }
  }

  out.specs.reserve(n);
  for (std::size_t c = 0; c < n; ++c) {
    NormalSampler rng(sub_seed(cfg.seed, stream_tag(kStreamText, c)));
    Eigen::VectorXd z = means[c] + cfg.text_noise * rng.vector(d);
    out.specs.push_back({static_cast<int>(c), class_name(static_cast<int>(c)),
                         class_aliases(static_cast<int>(c)), (z / z.norm()).cast<float>()});
  }

  out.test_x.resize(static_cast<Eigen::Index>(n) * cfg.test_per_class, d);
  out.test_y.reserve(n * static_cast<std::size_t>(cfg.test_per_class));
  for (std::size_t c = 0; c < n; ++c) {
    Eigen::VectorXd test_mean = means[c];
    if (cfg.test_shift > 0.0) {
      NormalSampler rng(sub_seed(cfg.seed, stream_tag(kStreamShiftDir, c)));
      Eigen::VectorXd shifted = means[c] + cfg.test_shift * unit_gaussian(rng, d);
      test_mean = shifted / shifted.norm();
    }
    NormalSampler rng(sub_seed(cfg.seed, stream_tag(kStreamTestImages, c)));
    for (int i = 0; i < cfg.test_per_class; ++i) {
      Eigen::VectorXd v = test_mean + cfg.image_noise * rng.vector(d);
      out.test_x.row(static_cast<Eigen::Index>(c) * cfg.test_per_class + i) =
          (v / v.norm()).cast<float>();
      out.test_y.push_back(static_cast<int>(c));
    }
  }
  return out;
}

void write_synth_corpus(const SynthCorpus& synth, const std::filesystem::path& dir,
                        std::size_t shard_records) {
  if (shard_records == 0) fail(ErrorKind::InvalidConfig, "shard size must be positive");
  std::filesystem::create_directories(dir);

  CorpusManifest manifest;
  manifest.dim = static_cast<int>(synth.embeddings.cols());
  const std::size_t total = synth.captions.size();
  for (std::size_t begin = 0, shard = 0; begin < total; begin += shard_records, ++shard) {
    const std::size_t end = std::min(total, begin + shard_records);
    char cap_name[32];
    char emb_name[32];
    std::snprintf(cap_name, sizeof cap_name, "captions-%04zu.jsonl", shard);
    std::snprintf(emb_name, sizeof emb_name, "embeddings-%04zu.npe", shard);

    const std::vector<CaptionRecord> chunk(synth.captions.begin() + static_cast<std::ptrdiff_t>(begin),
                                           synth.captions.begin() + static_cast<std::ptrdiff_t>(end));
    write_caption_shard(chunk, dir / cap_name);
    write_embedding_shard(synth.embeddings.middleRows(static_cast<Eigen::Index>(begin),
                                                      static_cast<Eigen::Index>(end - begin)),
                          dir / emb_name);
    manifest.shards.push_back({cap_name, emb_name});
  }
  save_manifest(manifest, dir / "manifest.json");
  save_class_specs(synth.specs, dir / "classes.json");
  write_embedding_shard(synth.test_x, dir / "test_embeddings.npe");
  write_labels(synth.test_y, dir / "test_labels.jsonl");
  write_truth(synth.truth, dir / "truth.jsonl");
}

void write_truth(const std::vector<TruthRow>& rows, const std::filesystem::path& path) {
  auto out = detail::open_output(path, std::ios::out | std::ios::trunc);
  for (const auto& row : rows) {
    nlohmann::json j;
    j["record_id"] = row.record_id;
    j["class_index"] = row.class_index;
    j["caption_class_index"] = row.caption_class_index;
    out << j.dump() << '\n';
  }
  if (!out) fail(ErrorKind::IoError, "write failed: " + path.string());
}

std::vector<TruthRow> read_truth(const std::filesystem::path& path) {
  auto in = detail::open_input(path, std::ios::in);
  std::vector<TruthRow> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object() || !j.contains("record_id") ||
        !j["record_id"].is_number_unsigned() || !j.contains("class_index") ||
        !j["class_index"].is_number_integer() || !j.contains("caption_class_index") ||
        !j["caption_class_index"].is_number_integer()) {
      fail(ErrorKind::MalformedRecord, path.string() + ":" + std::to_string(line_no) +
                                           ": bad truth row");
    }
    rows.push_back({j["record_id"].get<RecordId>(), j["class_index"].get<int>(),
                    j["caption_class_index"].get<int>()});
  }
  return rows;
}

PipelineArtifacts run_pipeline(const Corpus& corpus, const InvertedIndex& index,
                               std::span<const ClassSpec> specs, const RowMatrixXf& test,
                               std::span<const int> labels, const PipelineParams& params) {
  PipelineArtifacts art;
  auto timed = [&](const char* stage, auto&& fn) {
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    art.stage_micros.emplace_back(stage, now_micros_since(t0));
  };

  timed("zero_shot_head", [&] { art.wz = build_zero_shot_head(specs); });
  timed("pool_build", [&] { art.raw = build_pool(index, specs, corpus); });
  timed("consistency_filter",
        [&] { art.filtered = consistency_filter(art.raw, art.wz, corpus); });
  if (!params.exclude.empty()) {
    timed("exclude", [&] { art.filtered = exclude_ids(art.filtered, params.exclude); });
  }
  timed("cap", [&] { art.capped = cap_per_class(art.filtered, params.cap); });
  timed("attune", [&] {
    art.wft = build_centroid_head(gather_clusters(art.capped, corpus));
    art.walpha = ensemble_heads(art.wft, art.wz, params.sched);
  });
  timed("eval_zero_shot",
        [&] { art.zero_shot = top1_accuracy(art.wz.W, test, labels, params.workers); });
  timed("eval_primed",
        [&] { art.primed = top1_accuracy(art.walpha.W, test, labels, params.workers); });

  if (params.transduce && art.capped.total_size() > 0) {
    timed("transduct", [&] {
      art.transduced = transductive_filter(art.capped, corpus, test, params.k, params.workers);
    });
    timed("eval_transduced", [&] {
      const auto wft = build_centroid_head(gather_clusters(*art.transduced, corpus));
      art.walpha_transduced = ensemble_heads(wft, art.wz, params.sched);
      art.transduced_eval =
          top1_accuracy(art.walpha_transduced->W, test, labels, params.workers);
    });
  }
  return art;
}

RunSummary summarize(const PipelineArtifacts& art) {
  RunSummary s;
  s.zero_shot_accuracy = art.zero_shot.accuracy;
  s.primed_accuracy = art.primed.accuracy;
  s.pool_raw = art.raw.total_size();
  s.pool_filtered = art.filtered.total_size();
  s.pool_capped = art.capped.total_size();
  s.n_test = art.zero_shot.n_test;
  if (art.transduced) s.pool_transduced = art.transduced->total_size();
  if (art.transduced_eval) s.transduced_accuracy = art.transduced_eval->accuracy;
  s.stage_micros = art.stage_micros;
  return s;
}

RunSummary run_end_to_end(const SynthConfig& cfg, const PipelineParams& params) {
  std::vector<std::pair<std::string, double>> micros;
  auto t0 = std::chrono::steady_clock::now();
  const SynthCorpus synth = generate_corpus(cfg);
  micros.emplace_back("generate", now_micros_since(t0));

  t0 = std::chrono::steady_clock::now();
  const Corpus corpus = make_corpus(synth.captions, synth.embeddings);
  micros.emplace_back("corpus", now_micros_since(t0));

  t0 = std::chrono::steady_clock::now();
  const InvertedIndex index = build_index(synth.captions, params.workers);
  micros.emplace_back("index_build", now_micros_since(t0));

  const auto art = run_pipeline(corpus, index, synth.specs, synth.test_x, synth.test_y, params);
  RunSummary summary = summarize(art);
  micros.insert(micros.end(), summary.stage_micros.begin(), summary.stage_micros.end());
  summary.stage_micros = std::move(micros);
  return summary;
}

void write_run_summary(const RunSummary& summary, const std::filesystem::path& path) {
  auto out = detail::open_output(path, std::ios::out | std::ios::trunc);
  nlohmann::json j;
  j["zero_shot_accuracy"] = summary.zero_shot_accuracy;
  j["primed_accuracy"] = summary.primed_accuracy;
  if (summary.transduced_accuracy) j["transduced_accuracy"] = *summary.transduced_accuracy;
  j["pool_raw"] = summary.pool_raw;
  j["pool_filtered"] = summary.pool_filtered;
  j["pool_capped"] = summary.pool_capped;
  if (summary.pool_transduced) j["pool_transduced"] = *summary.pool_transduced;
  j["n_test"] = summary.n_test;
  out << j.dump() << '\n';
  if (!out) fail(ErrorKind::IoError, "write failed: " + path.string());
}

void write_stage_timings(const RunSummary& summary, const std::filesystem::path& path) {
  auto out = detail::open_output(path, std::ios::out | std::ios::trunc);
  for (const auto& [stage, micros] : summary.stage_micros) {
    out << nlohmann::json{{"stage", stage}, {"micros", micros}}.dump() << '\n';
  }
  if (!out) fail(ErrorKind::IoError, "write failed: " + path.string());
}

}  // namespace priming
