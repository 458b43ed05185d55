#include "priming/eval.hpp"

#include "priming/detail/bytes.hpp"
#include "priming/numeric.hpp"
#include "priming/parallel.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>

namespace priming {

int predict(const HeadMatrix& head, Eigen::Ref<const Eigen::VectorXf> query) {
  if (head.cols() == 0) fail(ErrorKind::ShapeMismatch, "head has no classes");
  if (query.size() != head.rows()) {
    fail(ErrorKind::ShapeMismatch,
         "query dimension " + std::to_string(query.size()) + ", head dimension " +
             std::to_string(head.rows()));
  }
  int best = 0;
  double best_score = ranking_dot(head.col(0).data(), query.data(), head.rows());
  for (int c = 1; c < head.cols(); ++c) {
    const double s = ranking_dot(head.col(c).data(), query.data(), head.rows());
    if (s > best_score) {
      best_score = s;
      best = c;
    }
  }
  return best;
}

std::vector<int> predict_all(const HeadMatrix& head, const RowMatrixXf& test, int workers) {
  if (test.cols() != head.rows()) {
    fail(ErrorKind::ShapeMismatch,
         "test dimension " + std::to_string(test.cols()) + ", head dimension " +
             std::to_string(head.rows()));
  }
  std::vector<int> preds(static_cast<std::size_t>(test.rows()));
  parallel_for(preds.size(), workers, [&](std::size_t i) {
    preds[i] = predict(head, test.row(static_cast<Eigen::Index>(i)).transpose());
  });
  return preds;
}

namespace {

EvalReport aggregate(std::span<const int> preds, std::span<const int> labels, int n_classes) {
  EvalReport report;
  report.n_test = preds.size();
  report.confusion.assign(static_cast<std::size_t>(n_classes),
                          std::vector<std::uint64_t>(static_cast<std::size_t>(n_classes), 0));
  for (std::size_t i = 0; i < preds.size(); ++i) {
    report.confusion[static_cast<std::size_t>(labels[i])][static_cast<std::size_t>(preds[i])]++;
  }
  std::uint64_t correct = 0;
  report.per_class.resize(static_cast<std::size_t>(n_classes), 0.0);
  for (std::size_t c = 0; c < report.confusion.size(); ++c) {
    std::uint64_t row_total = 0;
    for (const auto count : report.confusion[c]) row_total += count;
    correct += report.confusion[c][c];
    if (row_total > 0) {
      report.per_class[c] =
          static_cast<double>(report.confusion[c][c]) / static_cast<double>(row_total);
    }
  }
  report.accuracy = static_cast<double>(correct) / static_cast<double>(report.n_test);
  return report;
}

void check_eval_inputs(const HeadMatrix& head, const RowMatrixXf& test,
                       std::span<const int> labels) {
  if (test.rows() == 0) fail(ErrorKind::EmptyTestSet, "no test samples");
  if (labels.size() != static_cast<std::size_t>(test.rows())) {
    fail(ErrorKind::ShapeMismatch, std::to_string(labels.size()) + " labels for " +
                                       std::to_string(test.rows()) + " test samples");
  }
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= head.cols()) {
      fail(ErrorKind::LabelOutOfRange, "label " + std::to_string(labels[i]) + " at sample " +
                                           std::to_string(i) + " with " +
                                           std::to_string(head.cols()) + " classes");
    }
  }
}

}  // namespace

EvalReport top1_accuracy(const HeadMatrix& head, const RowMatrixXf& test,
                         std::span<const int> labels, int workers) {
  check_eval_inputs(head, test, labels);
  const auto preds = predict_all(head, test, workers);
  return aggregate(preds, labels, static_cast<int>(head.cols()));
}

DeltaReport compare_heads(const HeadMatrix& a, const HeadMatrix& b, const RowMatrixXf& test,
                          std::span<const int> labels, int workers) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    fail(ErrorKind::ShapeMismatch, "heads differ in shape");
  }
  check_eval_inputs(a, test, labels);
  const auto preds_a = predict_all(a, test, workers);
  const auto preds_b = predict_all(b, test, workers);
  const auto report_a = aggregate(preds_a, labels, static_cast<int>(a.cols()));
  const auto report_b = aggregate(preds_b, labels, static_cast<int>(b.cols()));

  DeltaReport out;
  out.accuracy_a = report_a.accuracy;
  out.accuracy_b = report_b.accuracy;
  out.delta = report_b.accuracy - report_a.accuracy;
  out.n_test = report_a.n_test;
  out.per_class_delta.resize(report_a.per_class.size());
  for (std::size_t c = 0; c < out.per_class_delta.size(); ++c) {
    out.per_class_delta[c] = report_b.per_class[c] - report_a.per_class[c];
  }
  for (std::size_t i = 0; i < preds_a.size(); ++i) {
    if (preds_a[i] != preds_b[i]) ++out.disagreements;
  }
  return out;
}

FewshotResult fewshot_trials(const PrimingPool& pool, const Corpus& corpus,
                             std::span<const LabeledExample> train, int shots_per_class,
                             std::span<const std::uint64_t> seeds, const AlphaSchedule& sched,
                             const ZeroShotHead& wz, const RowMatrixXf& test,
                             std::span<const int> labels, int workers) {
  if (shots_per_class < 1) fail(ErrorKind::InvalidConfig, "shots per class must be positive");
  const int n_classes = static_cast<int>(wz.W.cols());

  std::vector<std::vector<std::size_t>> candidates(static_cast<std::size_t>(n_classes));
  for (std::size_t i = 0; i < train.size(); ++i) {
    const int c = train[i].class_index;
    if (c < 0 || c >= n_classes) {
      fail(ErrorKind::UnknownClass, "train example " + std::to_string(i) + " labeled " +
                                        std::to_string(c) + " with " + std::to_string(n_classes) +
                                        " classes");
    }
    candidates[static_cast<std::size_t>(c)].push_back(i);
  }
  for (int c = 0; c < n_classes; ++c) {
    if (candidates[static_cast<std::size_t>(c)].size() <
        static_cast<std::size_t>(shots_per_class)) {
      fail(ErrorKind::InsufficientShots,
           "class " + std::to_string(c) + " has " +
               std::to_string(candidates[static_cast<std::size_t>(c)].size()) +
               " train examples, need " + std::to_string(shots_per_class));
    }
  }

  const auto base_clusters = gather_clusters(pool, corpus);

  FewshotResult result;
  result.per_seed.reserve(seeds.size());
  for (const std::uint64_t seed : seeds) {
    std::vector<LabeledExample> shots;
    shots.reserve(static_cast<std::size_t>(n_classes) * static_cast<std::size_t>(shots_per_class));
    for (int c = 0; c < n_classes; ++c) {
      auto order = candidates[static_cast<std::size_t>(c)];
      SplitMix64 rng(sub_seed(seed, static_cast<std::uint64_t>(c)));
      deterministic_shuffle(order, rng);
      for (int s = 0; s < shots_per_class; ++s) shots.push_back(train[order[static_cast<std::size_t>(s)]]);
    }
    auto clusters = base_clusters;
    mix_shots(clusters, shots);
    const auto wft = build_centroid_head(clusters);
    const auto ensembled = ensemble_heads(wft, wz, sched);
    result.per_seed.push_back(top1_accuracy(ensembled.W, test, labels, workers).accuracy);
  }

  double sum = 0.0;
  for (const double acc : result.per_seed) sum += acc;
  result.mean = sum / static_cast<double>(result.per_seed.size());
  if (result.per_seed.size() > 1) {
    double sq = 0.0;
    for (const double acc : result.per_seed) sq += (acc - result.mean) * (acc - result.mean);
    result.stddev = std::sqrt(sq / static_cast<double>(result.per_seed.size() - 1));
  }
  return result;
}

namespace {

nlohmann::json eval_json(const EvalReport& report) {
  nlohmann::json j;
  j["accuracy"] = report.accuracy;
  j["per_class"] = report.per_class;
  j["confusion"] = report.confusion;
  j["n_test"] = report.n_test;
  return j;
}

}  // namespace

void write_eval_report(const EvalReport& report, const std::filesystem::path& path) {
  auto out = detail::open_output(path, std::ios::out | std::ios::trunc);
  out << eval_json(report).dump() << '\n';
  if (!out) fail(ErrorKind::IoError, "write failed: " + path.string());
}

void write_delta_report(const DeltaReport& report, const std::filesystem::path& path) {
  auto out = detail::open_output(path, std::ios::out | std::ios::trunc);
  nlohmann::json j;
  j["accuracy_a"] = report.accuracy_a;
  j["accuracy_b"] = report.accuracy_b;
  j["delta"] = report.delta;
  j["per_class_delta"] = report.per_class_delta;
  j["disagreements"] = report.disagreements;
  j["n_test"] = report.n_test;
  out << j.dump() << '\n';
  if (!out) fail(ErrorKind::IoError, "write failed: " + path.string());
}

}  // namespace priming
