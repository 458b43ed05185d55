#pragma once

#include "priming/attune.hpp"
#include "priming/eval.hpp"
#include "priming/text_index.hpp"
#include "priming/transduct.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

namespace priming {

// Gaussian-mixture corpus with templated captions. Class mean directions are
// unit vectors whose spread grows with `separation`; every derived quantity
// is a pure function of the config, including the seed.
struct SynthConfig {
  int n_classes = 20;
  int dim = 64;
  int per_class = 200;         // corpus records per class
  double separation = 1.0;     // distance knob between class mean directions
  double caption_noise = 0.0;  // probability a caption names the wrong class
  double text_noise = 0.0;     // perturbation of class text embeddings
  int test_per_class = 20;
  std::uint64_t seed = 0;
  // Generator knobs beyond the core shape: spread of image embeddings around
  // their class mean, and displacement of test-time class means from the
  // train-time ones (0 keeps them identical).
  double image_noise = 0.45;
  double test_shift = 0.0;
};

struct TruthRow {
  RecordId record_id = 0;
  int class_index = 0;          // class the embedding was drawn from
  int caption_class_index = 0;  // class the caption actually names
};

struct SynthCorpus {
  std::vector<CaptionRecord> captions;
  RowMatrixXf embeddings;  // unit rows, aligned with captions
  std::vector<ClassSpec> specs;
  RowMatrixXf test_x;  // unit rows
  std::vector<int> test_y;
  std::vector<TruthRow> truth;
};

SynthCorpus generate_corpus(const SynthConfig& cfg);

// Writes manifest.json, captions-NNNN.jsonl / embeddings-NNNN.npe shard
// pairs, classes.json, test_embeddings.npe, test_labels.jsonl, truth.jsonl.
void write_synth_corpus(const SynthCorpus& synth, const std::filesystem::path& dir,
                        std::size_t shard_records = 250000);

void write_truth(const std::vector<TruthRow>& rows, const std::filesystem::path& path);
std::vector<TruthRow> read_truth(const std::filesystem::path& path);

struct PipelineParams {
  std::size_t cap = 100;
  std::size_t k = 10;
  AlphaSchedule sched;
  int workers = 1;
  bool transduce = true;
  std::unordered_set<RecordId> exclude;
};

struct PipelineArtifacts {
  ZeroShotHead wz;
  PrimingPool raw;
  PrimingPool filtered;
  PrimingPool capped;
  std::optional<PrimingPool> transduced;  // absent when skipped (empty pool)
  CentroidHead wft;
  EnsembleHead walpha;
  std::optional<EnsembleHead> walpha_transduced;
  EvalReport zero_shot;
  EvalReport primed;
  std::optional<EvalReport> transduced_eval;
  std::vector<std::pair<std::string, double>> stage_micros;
};

// index -> pool -> consistency filter -> cap -> exclude -> attune -> eval,
// plus the transductive branch when the pool is non-empty. Shared by
// run_end_to_end and the CLI run command.
PipelineArtifacts run_pipeline(const Corpus& corpus, const InvertedIndex& index,
                               std::span<const ClassSpec> specs, const RowMatrixXf& test,
                               std::span<const int> labels, const PipelineParams& params);

struct RunSummary {
  double zero_shot_accuracy = 0.0;
  double primed_accuracy = 0.0;
  std::optional<double> transduced_accuracy;
  std::size_t pool_raw = 0;
  std::size_t pool_filtered = 0;
  std::size_t pool_capped = 0;
  std::optional<std::size_t> pool_transduced;
  std::uint64_t n_test = 0;
  std::vector<std::pair<std::string, double>> stage_micros;
};

RunSummary summarize(const PipelineArtifacts& artifacts);

RunSummary run_end_to_end(const SynthConfig& cfg, const PipelineParams& params);

// One line, timing-free so reruns are byte-identical; timings go to a
// separate file via write_stage_timings.
void write_run_summary(const RunSummary& summary, const std::filesystem::path& path);
void write_stage_timings(const RunSummary& summary, const std::filesystem::path& path);

}  // namespace priming
