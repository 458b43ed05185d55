#pragma once

#include "priming/attune.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace priming {

// argmax over columns of column·query, ties to the lowest class index.
int predict(const HeadMatrix& head, Eigen::Ref<const Eigen::VectorXf> query);

std::vector<int> predict_all(const HeadMatrix& head, const RowMatrixXf& test, int workers = 1);

struct EvalReport {
  double accuracy = 0.0;
  std::vector<double> per_class;  // 0.0 for classes with no test samples
  std::vector<std::vector<std::uint64_t>> confusion;  // [true][predicted]
  std::uint64_t n_test = 0;
};

EvalReport top1_accuracy(const HeadMatrix& head, const RowMatrixXf& test,
                         std::span<const int> labels, int workers = 1);

struct DeltaReport {
  double accuracy_a = 0.0;
  double accuracy_b = 0.0;
  double delta = 0.0;  // accuracy_b − accuracy_a
  std::vector<double> per_class_delta;
  std::uint64_t disagreements = 0;
  std::uint64_t n_test = 0;
};

DeltaReport compare_heads(const HeadMatrix& a, const HeadMatrix& b, const RowMatrixXf& test,
                          std::span<const int> labels, int workers = 1);

struct FewshotResult {
  std::vector<double> per_seed;
  double mean = 0.0;
  double stddev = 0.0;  // sample standard deviation, 0 for a single seed
};

// For every seed: sample `shots_per_class` train examples per class without
// replacement, mix them into the pool clusters, rebuild the centroid and
// ensemble heads, and score the test set.
//
// Sampling is fixed so runs reproduce across machines: the candidates for
// class c are the positions of its examples in `train`, ascending; they are
// shuffled by a Fisher-Yates pass driven by SplitMix64 seeded with
// sub_seed(seed, c); the first `shots_per_class` positions are taken, in
// shuffled order.
FewshotResult fewshot_trials(const PrimingPool& pool, const Corpus& corpus,
                             std::span<const LabeledExample> train, int shots_per_class,
                             std::span<const std::uint64_t> seeds, const AlphaSchedule& sched,
                             const ZeroShotHead& wz, const RowMatrixXf& test,
                             std::span<const int> labels, int workers = 1);

// One object: {"accuracy","per_class","confusion","n_test"}.
void write_eval_report(const EvalReport& report, const std::filesystem::path& path);
// Adds {"accuracy_a","accuracy_b","delta","disagreements"} alongside the
// per-class deltas.
void write_delta_report(const DeltaReport& report, const std::filesystem::path& path);

}  // namespace priming
