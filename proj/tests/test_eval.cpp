#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "priming/eval.hpp"
#include "priming/numeric.hpp"

#include <cmath>
#include <vector>

using namespace priming;

namespace {

Eigen::VectorXf unit_from(NormalSampler& normal, int dim) {
  return normal.vector(dim).cast<float>().normalized();
}

HeadMatrix random_head(std::uint64_t seed, int dim, int n_classes) {
  NormalSampler normal(seed);
  HeadMatrix W(dim, n_classes);
  for (int c = 0; c < n_classes; ++c) W.col(c) = unit_from(normal, dim);
  return W;
}

RowMatrixXf random_test(std::uint64_t seed, int rows, int dim) {
  NormalSampler normal(seed);
  RowMatrixXf X(rows, dim);
  for (int r = 0; r < rows; ++r) X.row(r) = unit_from(normal, dim).transpose();
  return X;
}

int loop_argmax(const HeadMatrix& W, const Eigen::VectorXf& v) {
  int best = 0;
  double best_score = -1e300;
  for (Eigen::Index c = 0; c < W.cols(); ++c) {
    const double s = ranking_dot(W.col(c).eval(), v);
    if (s > best_score) {
      best_score = s;
      best = static_cast<int>(c);
    }
  }
  return best;
}

}  // namespace

TEST_CASE("predict matches the loop oracle") {
  const auto W = random_head(3, 12, 7);
  const auto X = random_test(5, 200, 12);
  for (int r = 0; r < 200; ++r) {
    const Eigen::VectorXf v = X.row(r);
    CHECK(predict(W, v) == loop_argmax(W, v));
  }
}

TEST_CASE("predict breaks exact ties toward the lowest class") {
  HeadMatrix W(3, 4);
  NormalSampler normal(7);
  const Eigen::VectorXf shared = unit_from(normal, 3);
  W.col(0) = unit_from(normal, 3);
  W.col(1) = shared;
  W.col(2) = unit_from(normal, 3);
  W.col(3) = shared;  // exact duplicate of column 1
  // A query aligned with the duplicated column ties columns 1 and 3.
  CHECK(predict(W, shared) == 1);
}

TEST_CASE("predict_all equals predict and is worker-invariant") {
  const auto W = random_head(11, 10, 5);
  const auto X = random_test(13, 333, 10);
  const auto base = predict_all(W, X, 1);
  REQUIRE(base.size() == 333);
  for (int r = 0; r < 333; ++r) {
    const Eigen::VectorXf v = X.row(r);
    CHECK(base[static_cast<std::size_t>(r)] == predict(W, v));
  }
  for (const int workers : {2, 4, 8}) {
    CHECK(predict_all(W, X, workers) == base);
  }
}

TEST_CASE("top1_accuracy aggregates accuracy, per-class and confusion") {
  const auto W = random_head(17, 8, 4);
  const auto X = random_test(19, 120, 8);
  std::vector<int> labels(120);
  SplitMix64 rng(23);
  for (auto& label : labels) label = static_cast<int>(rng.next_below(4));

  const auto report = top1_accuracy(W, X, labels);
  const auto preds = predict_all(W, X);

  std::uint64_t correct = 0;
  std::vector<std::uint64_t> class_total(4, 0), class_correct(4, 0);
  std::vector<std::vector<std::uint64_t>> confusion(4, std::vector<std::uint64_t>(4, 0));
  for (int r = 0; r < 120; ++r) {
    ++confusion[labels[r]][preds[r]];
    ++class_total[labels[r]];
    if (preds[r] == labels[r]) {
      ++correct;
      ++class_correct[labels[r]];
    }
  }
  CHECK(report.n_test == 120);
  CHECK(report.accuracy == doctest::Approx(static_cast<double>(correct) / 120.0));
  REQUIRE(report.confusion.size() == 4);
  for (int t = 0; t < 4; ++t) {
    CHECK(report.confusion[t] == confusion[t]);
    const double expect = class_total[t] == 0
                              ? 0.0
                              : static_cast<double>(class_correct[t]) / class_total[t];
    CHECK(report.per_class[t] == doctest::Approx(expect));
  }

  // Row sums of the confusion matrix recover the class totals.
  for (int t = 0; t < 4; ++t) {
    std::uint64_t row_sum = 0;
    for (int p = 0; p < 4; ++p) row_sum += report.confusion[t][p];
    CHECK(row_sum == class_total[t]);
  }
}

TEST_CASE("per_class is zero for classes without samples") {
  const auto W = random_head(29, 6, 3);
  const auto X = random_test(31, 10, 6);
  std::vector<int> labels(10, 0);  // only class 0 appears
  const auto report = top1_accuracy(W, X, labels);
  CHECK(report.per_class[1] == 0.0);
  CHECK(report.per_class[2] == 0.0);
}

TEST_CASE("eval input validation") {
  const auto W = random_head(37, 6, 3);
  const auto X = random_test(41, 10, 6);
  std::vector<int> labels(10, 0);

  RowMatrixXf empty(0, 6);
  CHECK_THROWS_AS(top1_accuracy(W, empty, std::vector<int>{}), PipelineError);

  std::vector<int> short_labels(9, 0);
  CHECK_THROWS_AS(top1_accuracy(W, X, short_labels), PipelineError);

  RowMatrixXf wrong_dim = random_test(43, 10, 7);
  CHECK_THROWS_AS(top1_accuracy(W, wrong_dim, labels), PipelineError);

  std::vector<int> bad_labels(10, 3);  // class 3 of 3
  CHECK_THROWS_AS(top1_accuracy(W, X, bad_labels), PipelineError);
  bad_labels.assign(10, -1);
  CHECK_THROWS_AS(top1_accuracy(W, X, bad_labels), PipelineError);
}

TEST_CASE("compare_heads equals two top1 runs plus disagreement count") {
  const auto A = random_head(47, 9, 5);
  const auto B = random_head(53, 9, 5);
  const auto X = random_test(59, 150, 9);
  std::vector<int> labels(150);
  SplitMix64 rng(61);
  for (auto& label : labels) label = static_cast<int>(rng.next_below(5));

  const auto delta = compare_heads(A, B, X, labels);
  const auto ra = top1_accuracy(A, X, labels);
  const auto rb = top1_accuracy(B, X, labels);
  CHECK(delta.accuracy_a == ra.accuracy);
  CHECK(delta.accuracy_b == rb.accuracy);
  CHECK(delta.delta == doctest::Approx(rb.accuracy - ra.accuracy));
  CHECK(delta.n_test == 150);

  const auto pa = predict_all(A, X);
  const auto pb = predict_all(B, X);
  std::uint64_t disagreements = 0;
  for (int r = 0; r < 150; ++r) {
    if (pa[r] != pb[r]) ++disagreements;
  }
  CHECK(delta.disagreements == disagreements);

  for (int c = 0; c < 5; ++c) {
    CHECK(delta.per_class_delta[c] ==
          doctest::Approx(rb.per_class[c] - ra.per_class[c]));
  }

  CHECK_THROWS_AS(compare_heads(A, random_head(1, 9, 4), X, labels), PipelineError);
}

TEST_CASE("compare_heads of a head with itself is all zeros") {
  const auto A = random_head(67, 7, 4);
  const auto X = random_test(71, 80, 7);
  std::vector<int> labels(80);
  SplitMix64 rng(73);
  for (auto& label : labels) label = static_cast<int>(rng.next_below(4));
  const auto delta = compare_heads(A, A, X, labels);
  CHECK(delta.delta == 0.0);
  CHECK(delta.disagreements == 0);
  for (const double d : delta.per_class_delta) CHECK(d == 0.0);
}

namespace {

// Shared fewshot fixture: a pool over a small corpus plus a train set.
struct FewshotFixture {
  Corpus corpus;
  PrimingPool pool;
  ZeroShotHead wz;
  std::vector<LabeledExample> train;
  RowMatrixXf test;
  std::vector<int> labels;
};

FewshotFixture make_fewshot(std::uint64_t seed, int n_classes, int dim) {
  SplitMix64 rng(seed);
  NormalSampler normal(rng.next());
  FewshotFixture fx;

  std::vector<Eigen::VectorXf> anchors;
  for (int c = 0; c < n_classes; ++c) anchors.push_back(unit_from(normal, dim));

  const int per_class = 12;
  std::vector<CaptionRecord> caps;
  RowMatrixXf embs(n_classes * per_class, dim);
  for (int c = 0; c < n_classes; ++c) {
    for (int i = 0; i < per_class; ++i) {
      const int row = c * per_class + i;
      caps.push_back({static_cast<RecordId>(row), "r" + std::to_string(row), std::nullopt});
      Eigen::VectorXf v = anchors[c] + 0.4f * unit_from(normal, dim);
      embs.row(row) = v.normalized();
    }
  }
  fx.corpus = make_corpus(std::move(caps), std::move(embs));

  fx.pool.stage = PoolStage::ConsistencyFiltered;
  fx.pool.dim = dim;
  fx.pool.clusters.resize(n_classes);
  for (int c = 0; c < n_classes; ++c) {
    for (int i = 0; i < 4; ++i) {
      PoolEntry e;
      e.record_id = static_cast<RecordId>(c * per_class + i);
      e.class_index = c;
      e.score = 0.5f;
      fx.pool.clusters[c].push_back(e);
    }
  }

  fx.wz.W.resize(dim, n_classes);
  for (int c = 0; c < n_classes; ++c) fx.wz.W.col(c) = anchors[c];

  for (int c = 0; c < n_classes; ++c) {
    for (int i = 0; i < 8; ++i) {
      fx.train.push_back({(anchors[c] + 0.4f * unit_from(normal, dim)).normalized(), c});
    }
  }

  const int n_test = n_classes * 10;
  fx.test.resize(n_test, dim);
  fx.labels.resize(n_test);
  for (int t = 0; t < n_test; ++t) {
    const int c = t % n_classes;
    fx.labels[t] = c;
    fx.test.row(t) = (anchors[c] + 0.5f * unit_from(normal, dim)).normalized().transpose();
  }
  return fx;
}

}  // namespace

TEST_CASE("fewshot_trials reproduces and matches a by-hand reimplementation") {
  const auto fx = make_fewshot(79, 3, 10);
  const std::vector<std::uint64_t> seeds = {2, 9};
  AlphaSchedule sched;

  const auto result = fewshot_trials(fx.pool, fx.corpus, fx.train, 2, seeds, sched, fx.wz,
                                     fx.test, fx.labels);
  REQUIRE(result.per_seed.size() == 2);

  const auto again = fewshot_trials(fx.pool, fx.corpus, fx.train, 2, seeds, sched, fx.wz,
                                    fx.test, fx.labels);
  CHECK(result.per_seed == again.per_seed);

  // Independent reimplementation of the documented sampling scheme.
  for (std::size_t si = 0; si < seeds.size(); ++si) {
    auto clusters = gather_clusters(fx.pool, fx.corpus);
    std::vector<LabeledExample> shots;
    for (int c = 0; c < 3; ++c) {
      std::vector<std::size_t> candidates;
      for (std::size_t i = 0; i < fx.train.size(); ++i) {
        if (fx.train[i].class_index == c) candidates.push_back(i);
      }
      SplitMix64 rng(sub_seed(seeds[si], static_cast<std::uint64_t>(c)));
      deterministic_shuffle(candidates, rng);
      for (int s = 0; s < 2; ++s) shots.push_back(fx.train[candidates[s]]);
    }
    mix_shots(clusters, shots, 1);
    const auto wft = build_centroid_head(clusters);
    const auto head = ensemble_heads(wft, fx.wz, sched);
    const auto report = top1_accuracy(head.W, fx.test, fx.labels);
    CHECK(result.per_seed[si] == report.accuracy);
  }

  // Mean and sample stddev against a two-pass oracle.
  double mean = 0.0;
  for (const double a : result.per_seed) mean += a;
  mean /= static_cast<double>(result.per_seed.size());
  double ss = 0.0;
  for (const double a : result.per_seed) ss += (a - mean) * (a - mean);
  const double stddev = std::sqrt(ss / static_cast<double>(result.per_seed.size() - 1));
  CHECK(result.mean == doctest::Approx(mean).epsilon(1e-12));
  CHECK(result.stddev == doctest::Approx(stddev).epsilon(1e-12));
}

TEST_CASE("fewshot_trials single seed has zero stddev") {
  const auto fx = make_fewshot(83, 2, 8);
  const std::vector<std::uint64_t> seeds = {5};
  AlphaSchedule sched;
  const auto result = fewshot_trials(fx.pool, fx.corpus, fx.train, 3, seeds, sched, fx.wz,
                                     fx.test, fx.labels);
  CHECK(result.per_seed.size() == 1);
  CHECK(result.stddev == 0.0);
  CHECK(result.mean == result.per_seed[0]);
}

TEST_CASE("fewshot_trials input validation") {
  const auto fx = make_fewshot(89, 2, 8);
  const std::vector<std::uint64_t> seeds = {1};
  AlphaSchedule sched;

  CHECK_THROWS_AS(fewshot_trials(fx.pool, fx.corpus, fx.train, 0, seeds, sched, fx.wz, fx.test,
                                 fx.labels),
                  PipelineError);
  CHECK_THROWS_AS(fewshot_trials(fx.pool, fx.corpus, fx.train, 9, seeds, sched, fx.wz, fx.test,
                                 fx.labels),
                  PipelineError);  // only 8 per class available

  auto bad_train = fx.train;
  bad_train[0].class_index = 99;
  CHECK_THROWS_AS(fewshot_trials(fx.pool, fx.corpus, bad_train, 1, seeds, sched, fx.wz, fx.test,
                                 fx.labels),
                  PipelineError);
}

TEST_CASE("fewshot_trials is worker-invariant") {
  const auto fx = make_fewshot(97, 3, 8);
  const std::vector<std::uint64_t> seeds = {3, 7, 11};
  AlphaSchedule sched;
  const auto base = fewshot_trials(fx.pool, fx.corpus, fx.train, 2, seeds, sched, fx.wz, fx.test,
                                   fx.labels, 1);
  for (const int workers : {2, 4}) {
    const auto got = fewshot_trials(fx.pool, fx.corpus, fx.train, 2, seeds, sched, fx.wz,
                                    fx.test, fx.labels, workers);
    CHECK(got.per_seed == base.per_seed);
  }
}
