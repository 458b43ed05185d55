#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "priming/numeric.hpp"
#include "priming/transduct.hpp"

#include <algorithm>
#include <set>
#include <vector>

using namespace priming;

namespace {

// A pool plus corpus where cluster membership and scores are synthetic; the
// captions are irrelevant for transduction, only embeddings matter.
struct Fixture {
  Corpus corpus;
  PrimingPool pool;
};

Fixture make_fixture(std::uint64_t seed, int n_classes, int per_class, int dim,
                     bool tie_heavy = false) {
  SplitMix64 rng(seed);
  NormalSampler normal(rng.next());
  Fixture fx;

  const int n = n_classes * per_class;
  std::vector<CaptionRecord> captions(n);
  RowMatrixXf embeddings(n, dim);
  for (int i = 0; i < n; ++i) {
    captions[i].id = static_cast<RecordId>(i * 2);  // gaps in the id space
    captions[i].caption = "r" + std::to_string(i);
    if (tie_heavy && i % 3 != 0) {
      // Duplicate an earlier row so many cosines tie exactly.
      embeddings.row(i) = embeddings.row(i - 1);
    } else {
      Eigen::VectorXf v = normal.vector(dim).cast<float>();
      embeddings.row(i) = v.normalized();
    }
  }
  fx.corpus = make_corpus(std::move(captions), std::move(embeddings));

  fx.pool.stage = PoolStage::ConsistencyFiltered;
  fx.pool.dim = dim;
  fx.pool.clusters.resize(n_classes);
  for (int c = 0; c < n_classes; ++c) {
    for (int i = 0; i < per_class; ++i) {
      PoolEntry e;
      e.record_id = static_cast<RecordId>((c * per_class + i) * 2);
      e.class_index = c;
      e.score = static_cast<float>(rng.next_unit());
      fx.pool.clusters[c].push_back(e);
    }
  }
  return fx;
}

// Full-sort oracle with the pinned comparator.
std::vector<NeighborHit> naive_topk(const PoolEmbeddings& pe, const Eigen::VectorXf& query,
                                    std::size_t k) {
  std::vector<NeighborHit> all;
  for (std::size_t i = 0; i < pe.size(); ++i) {
    NeighborHit hit;
    hit.record_id = pe.ids[i];
    hit.score = ranking_dot(pe.X.row(i).data(), query.data(), pe.X.cols());
    all.push_back(hit);
  }
  std::stable_sort(all.begin(), all.end(), [](const NeighborHit& a, const NeighborHit& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.record_id < b.record_id;
  });
  all.resize(std::min(k, all.size()));
  for (std::size_t i = 0; i < all.size(); ++i) all[i].rank = i;
  return all;
}

}  // namespace

TEST_CASE("gather_pool_embeddings orders rows by id and keeps scores") {
  const auto fx = make_fixture(3, 4, 8, 12);
  const auto pe = gather_pool_embeddings(fx.pool, fx.corpus);
  REQUIRE(pe.size() == 32);
  for (std::size_t i = 1; i < pe.size(); ++i) CHECK(pe.ids[i - 1] < pe.ids[i]);
  for (std::size_t i = 0; i < pe.size(); ++i) {
    const auto row = fx.corpus.row_index(pe.ids[i]);
    CHECK((pe.X.row(i) - fx.corpus.embeddings.row(row)).norm() == 0.0f);
    // Entry lookup: class and score match the pool entry with this id.
    bool found = false;
    for (const auto& cluster : fx.pool.clusters) {
      for (const auto& entry : cluster) {
        if (entry.record_id == pe.ids[i]) {
          CHECK(pe.class_of[i] == entry.class_index);
          CHECK(pe.score_of[i] == entry.score);
          found = true;
        }
      }
    }
    CHECK(found);
  }
}

TEST_CASE("gather_pool_embeddings dedups raw multi-cluster records to lowest class") {
  auto fx = make_fixture(5, 3, 4, 8);
  fx.pool.stage = PoolStage::Raw;
  // Insert record 4 (already in class 0) into class 2 as well.
  PoolEntry dup;
  dup.record_id = 4;
  dup.class_index = 2;
  dup.score = 0.9f;
  fx.pool.clusters[2].insert(fx.pool.clusters[2].begin(), dup);

  const auto pe = gather_pool_embeddings(fx.pool, fx.corpus);
  CHECK(pe.size() == 12);  // still 12 distinct records
  const auto it = std::find(pe.ids.begin(), pe.ids.end(), RecordId{4});
  REQUIRE(it != pe.ids.end());
  CHECK(pe.class_of[static_cast<std::size_t>(it - pe.ids.begin())] == 0);
}

TEST_CASE("topk_neighbors equals the full-sort oracle") {
  SplitMix64 rng(7);
  NormalSampler normal(11);
  for (int trial = 0; trial < 30; ++trial) {
    const bool ties = trial % 2 == 1;
    const auto fx = make_fixture(100 + trial, 3, 20, 10, ties);
    const auto pe = gather_pool_embeddings(fx.pool, fx.corpus);
    for (int q = 0; q < 10; ++q) {
      const Eigen::VectorXf query = normal.vector(10).cast<float>().normalized();
      const std::size_t k = 1 + rng.next_below(70);  // sometimes beyond pool size
      const auto expect = naive_topk(pe, query, k);
      const auto got = topk_neighbors(pe, query, k);
      REQUIRE(got.size() == expect.size());
      for (std::size_t i = 0; i < got.size(); ++i) {
        CHECK(got[i].record_id == expect[i].record_id);  // exact order, ties included
        CHECK(got[i].score == expect[i].score);          // bitwise, same dot
        CHECK(got[i].rank == i);
      }
    }
  }
}

TEST_CASE("topk_neighbors is invariant to workers and chunk size") {
  const auto fx = make_fixture(13, 4, 50, 16, true);
  const auto pe = gather_pool_embeddings(fx.pool, fx.corpus);
  NormalSampler normal(17);
  for (int q = 0; q < 8; ++q) {
    const Eigen::VectorXf query = normal.vector(16).cast<float>().normalized();
    const auto base = topk_neighbors(pe, query, 12, 1, kDefaultChunkRows);
    for (const int workers : {1, 2, 4, 8}) {
      for (const std::size_t chunk : {std::size_t{1}, std::size_t{7}, std::size_t{64},
                                      kDefaultChunkRows}) {
        const auto got = topk_neighbors(pe, query, 12, workers, chunk);
        REQUIRE(got.size() == base.size());
        for (std::size_t i = 0; i < got.size(); ++i) {
          CHECK(got[i].record_id == base[i].record_id);
          CHECK(got[i].score == base[i].score);
        }
      }
    }
  }
}

TEST_CASE("topk_neighbors argument validation") {
  const auto fx = make_fixture(19, 2, 5, 8);
  const auto pe = gather_pool_embeddings(fx.pool, fx.corpus);
  NormalSampler normal(1);
  const Eigen::VectorXf query = normal.vector(8).cast<float>().normalized();

  CHECK_THROWS_AS(topk_neighbors(pe, query, 0), PipelineError);
  CHECK_THROWS_AS(topk_neighbors(pe, query, 5, 1, 0), PipelineError);

  const Eigen::VectorXf wrong = normal.vector(9).cast<float>();
  CHECK_THROWS_AS(topk_neighbors(pe, wrong, 5), PipelineError);

  PoolEmbeddings empty;
  empty.X.resize(0, 8);
  CHECK_THROWS_AS(topk_neighbors(empty, query, 5), PipelineError);
}

TEST_CASE("transductive_filter is the deduplicated union of per-query retrievals") {
  const auto fx = make_fixture(23, 4, 25, 12);
  const auto pe = gather_pool_embeddings(fx.pool, fx.corpus);
  NormalSampler normal(29);
  RowMatrixXf test(6, 12);
  for (int q = 0; q < 6; ++q) {
    test.row(q) = normal.vector(12).cast<float>().normalized().transpose();
  }
  const std::size_t k = 7;
  const auto out = transductive_filter(fx.pool, fx.corpus, test, k);

  CHECK(out.stage == PoolStage::Transduced);
  CHECK(out.n_classes() == fx.pool.n_classes());

  // Oracle union.
  std::set<RecordId> retained;
  for (int q = 0; q < 6; ++q) {
    const Eigen::VectorXf query = test.row(q);
    for (const auto& hit : naive_topk(pe, query, k)) retained.insert(hit.record_id);
  }
  std::set<RecordId> got;
  for (int c = 0; c < out.n_classes(); ++c) {
    for (const auto& entry : out.clusters[c]) {
      CHECK(got.insert(entry.record_id).second);  // no duplicates
      CHECK(retained.contains(entry.record_id));
      // Class and score survive from the input pool.
      bool matched = false;
      for (const auto& src : fx.pool.clusters[c]) {
        if (src.record_id == entry.record_id) {
          CHECK(src.score == entry.score);
          matched = true;
        }
      }
      CHECK(matched);
    }
    // (score desc, id asc) within the output cluster.
    for (std::size_t i = 1; i < out.clusters[c].size(); ++i) {
      const auto& a = out.clusters[c][i - 1];
      const auto& b = out.clusters[c][i];
      const bool ordered = a.score > b.score || (a.score == b.score && a.record_id < b.record_id);
      CHECK(ordered);
    }
  }
  CHECK(got == retained);
}

TEST_CASE("transductive_filter demands a consistency_filtered pool") {
  auto fx = make_fixture(31, 2, 5, 8);
  NormalSampler normal(1);
  RowMatrixXf test(1, 8);
  test.row(0) = normal.vector(8).cast<float>().normalized().transpose();

  fx.pool.stage = PoolStage::Raw;
  CHECK_THROWS_AS(transductive_filter(fx.pool, fx.corpus, test, 3), PipelineError);
  fx.pool.stage = PoolStage::Transduced;
  CHECK_THROWS_AS(transductive_filter(fx.pool, fx.corpus, test, 3), PipelineError);

  fx.pool.stage = PoolStage::ConsistencyFiltered;
  for (auto& cluster : fx.pool.clusters) cluster.clear();
  CHECK_THROWS_AS(transductive_filter(fx.pool, fx.corpus, test, 3), PipelineError);
}

TEST_CASE("transductive_filter rejects an empty test set") {
  const auto fx = make_fixture(37, 2, 5, 8);
  RowMatrixXf test(0, 8);
  CHECK_THROWS_AS(transductive_filter(fx.pool, fx.corpus, test, 3), PipelineError);
}

TEST_CASE("transductive_filter is worker-invariant") {
  const auto fx = make_fixture(41, 5, 40, 16, true);
  NormalSampler normal(43);
  RowMatrixXf test(9, 16);
  for (int q = 0; q < 9; ++q) {
    test.row(q) = normal.vector(16).cast<float>().normalized().transpose();
  }
  const auto base = transductive_filter(fx.pool, fx.corpus, test, 10, 1);
  for (const int workers : {2, 4, 8}) {
    const auto got = transductive_filter(fx.pool, fx.corpus, test, 10, workers);
    CHECK(got.clusters == base.clusters);
  }
}

TEST_CASE("retrieval_bench returns the transductive_filter pool plus timing") {
  const auto fx = make_fixture(47, 3, 30, 12);
  NormalSampler normal(53);
  RowMatrixXf test(5, 12);
  for (int q = 0; q < 5; ++q) {
    test.row(q) = normal.vector(12).cast<float>().normalized().transpose();
  }
  const auto expect = transductive_filter(fx.pool, fx.corpus, test, 6);
  const auto bench = retrieval_bench(fx.pool, fx.corpus, test, 6);
  CHECK(bench.pool.clusters == expect.clusters);
  CHECK(bench.report.queries == 5);
  CHECK(bench.report.pool_size == 90);
  CHECK(bench.report.k == 6);
  CHECK(bench.report.total_micros > 0.0);
  CHECK(bench.report.mean_micros_per_query ==
        doctest::Approx(bench.report.total_micros / 5.0));
}
