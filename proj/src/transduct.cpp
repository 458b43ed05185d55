#include "priming/transduct.hpp"

#include "priming/detail/bytes.hpp"
#include "priming/numeric.hpp"
#include "priming/parallel.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>

namespace priming {

PoolEmbeddings gather_pool_embeddings(const PrimingPool& pool, const Corpus& corpus) {
  if (pool.dim != corpus.dim()) {
    fail(ErrorKind::DimensionMismatch,
         "pool dimension " + std::to_string(pool.dim) + " does not match corpus dimension " +
             std::to_string(corpus.dim()));
  }
  std::vector<PoolEntry> entries;
  entries.reserve(pool.total_size());
  for (const auto& cluster : pool.clusters) {
    entries.insert(entries.end(), cluster.begin(), cluster.end());
  }
  // Classes were appended in ascending order, so stable dedup by id keeps the
  // lowest class index for records present in several raw clusters.
  std::stable_sort(entries.begin(), entries.end(),
                   [](const PoolEntry& a, const PoolEntry& b) { return a.record_id < b.record_id; });
  entries.erase(std::unique(entries.begin(), entries.end(),
                            [](const PoolEntry& a, const PoolEntry& b) {
                              return a.record_id == b.record_id;
                            }),
                entries.end());

  PoolEmbeddings out;
  out.ids.reserve(entries.size());
  out.class_of.reserve(entries.size());
  out.score_of.reserve(entries.size());
  out.X.resize(static_cast<Eigen::Index>(entries.size()), corpus.dim());
  for (std::size_t i = 0; i < entries.size(); ++i) {
    out.ids.push_back(entries[i].record_id);
    out.class_of.push_back(entries[i].class_index);
    out.score_of.push_back(entries[i].score);
    out.X.row(static_cast<Eigen::Index>(i)) =
        corpus.embeddings.row(corpus.row_index(entries[i].record_id));
  }
  return out;
}

namespace {

bool better_hit(const NeighborHit& a, const NeighborHit& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.record_id < b.record_id;
}

}  // namespace

std::vector<NeighborHit> topk_neighbors(const PoolEmbeddings& pool,
                                        Eigen::Ref<const Eigen::VectorXf> query, std::size_t k,
                                        int workers, std::size_t chunk_rows) {
  if (pool.size() == 0) fail(ErrorKind::EmptyPool, "top-k over an empty pool");
  if (k == 0) fail(ErrorKind::InvalidConfig, "k must be positive");
  if (chunk_rows == 0) fail(ErrorKind::InvalidConfig, "chunk size must be positive");
  if (query.size() != pool.X.cols()) {
    fail(ErrorKind::DimensionMismatch,
         "query dimension " + std::to_string(query.size()) + ", pool dimension " +
             std::to_string(pool.X.cols()));
  }

  const std::size_t rows = pool.size();
  const std::size_t n_chunks = (rows + chunk_rows - 1) / chunk_rows;
  std::vector<std::vector<NeighborHit>> per_chunk(n_chunks);
  parallel_for(n_chunks, workers, [&](std::size_t chunk) {
    const std::size_t begin = chunk * chunk_rows;
    const std::size_t end = std::min(rows, begin + chunk_rows);
    auto& hits = per_chunk[chunk];
    hits.reserve(end - begin);
    for (std::size_t r = begin; r < end; ++r) {
      hits.push_back({pool.ids[r],
                      ranking_dot(pool.X.row(static_cast<Eigen::Index>(r)).data(), query.data(),
                                  query.size()),
                      0});
    }
    const std::size_t keep = std::min(k, hits.size());
    std::partial_sort(hits.begin(), hits.begin() + static_cast<std::ptrdiff_t>(keep), hits.end(),
                      better_hit);
    hits.resize(keep);
  });

  std::vector<NeighborHit> merged;
  for (auto& hits : per_chunk) {
    merged.insert(merged.end(), hits.begin(), hits.end());
  }
  const std::size_t keep = std::min(k, merged.size());
  std::partial_sort(merged.begin(), merged.begin() + static_cast<std::ptrdiff_t>(keep),
                    merged.end(), better_hit);
  merged.resize(keep);
  for (std::size_t i = 0; i < merged.size(); ++i) merged[i].rank = i;
  return merged;
}

namespace {

// Union of per-query top-k over the gathered pool, rebuilt as a transduced
// pool. Shared by transductive_filter and retrieval_bench.
PrimingPool retrieve_union(const PoolEmbeddings& pe, const PrimingPool& src,
                           const RowMatrixXf& test, std::size_t k, int workers) {
  if (test.cols() != pe.X.cols()) {
    fail(ErrorKind::DimensionMismatch,
         "test dimension " + std::to_string(test.cols()) + ", pool dimension " +
             std::to_string(pe.X.cols()));
  }
  if (test.rows() == 0) fail(ErrorKind::EmptyTestSet, "no test queries");

  const std::size_t n_queries = static_cast<std::size_t>(test.rows());
  std::vector<std::vector<RecordId>> per_query(n_queries);
  parallel_for(n_queries, workers, [&](std::size_t q) {
    const auto hits = topk_neighbors(pe, test.row(static_cast<Eigen::Index>(q)).transpose(), k);
    auto& ids = per_query[q];
    ids.reserve(hits.size());
    for (const auto& hit : hits) ids.push_back(hit.record_id);
  });

  std::vector<std::uint8_t> retained(pe.size(), 0);
  for (const auto& ids : per_query) {
    for (const RecordId id : ids) {
      const auto it = std::lower_bound(pe.ids.begin(), pe.ids.end(), id);
      retained[static_cast<std::size_t>(it - pe.ids.begin())] = 1;
    }
  }

  PrimingPool out;
  out.stage = PoolStage::Transduced;
  out.dim = src.dim;
  out.created_from = src.created_from;
  out.clusters.resize(src.clusters.size());
  for (std::size_t r = 0; r < pe.size(); ++r) {
    if (!retained[r]) continue;
    out.clusters[static_cast<std::size_t>(pe.class_of[r])].push_back(
        {pe.ids[r], pe.class_of[r], pe.score_of[r]});
  }
  for (auto& cluster : out.clusters) {
    std::sort(cluster.begin(), cluster.end(), [](const PoolEntry& a, const PoolEntry& b) {
      if (a.score != b.score) return a.score > b.score;
      return a.record_id < b.record_id;
    });
  }
  return out;
}

}  // namespace

PrimingPool transductive_filter(const PrimingPool& pool, const Corpus& corpus,
                                const RowMatrixXf& test, std::size_t k, int workers) {
  if (pool.stage != PoolStage::ConsistencyFiltered) {
    fail(ErrorKind::WrongStage, "transductive filter expects a consistency_filtered pool");
  }
  if (pool.total_size() == 0) fail(ErrorKind::EmptyPool, "transductive filter over an empty pool");
  const auto pe = gather_pool_embeddings(pool, corpus);
  return retrieve_union(pe, pool, test, k, workers);
}

BenchResult retrieval_bench(const PrimingPool& pool, const Corpus& corpus,
                            const RowMatrixXf& test, std::size_t k, int workers) {
  if (pool.total_size() == 0) fail(ErrorKind::EmptyPool, "benchmark over an empty pool");
  const auto pe = gather_pool_embeddings(pool, corpus);
  const auto t0 = std::chrono::steady_clock::now();
  auto result = retrieve_union(pe, pool, test, k, workers);
  const auto t1 = std::chrono::steady_clock::now();

  BenchResult out;
  out.pool = std::move(result);
  out.report.queries = static_cast<std::uint64_t>(test.rows());
  out.report.pool_size = pe.size();
  out.report.k = k;
  out.report.total_micros = std::chrono::duration<double, std::micro>(t1 - t0).count();
  out.report.mean_micros_per_query =
      out.report.total_micros / static_cast<double>(out.report.queries);
  return out;
}

void write_bench_report(const BenchReport& report, const std::filesystem::path& path) {
  auto out = detail::open_output(path, std::ios::out | std::ios::trunc);
  nlohmann::json j;
  j["queries"] = report.queries;
  j["pool_size"] = report.pool_size;
  j["k"] = report.k;
  j["total_micros"] = report.total_micros;
  j["mean_micros_per_query"] = report.mean_micros_per_query;
  out << j.dump() << '\n';
  if (!out) fail(ErrorKind::IoError, "write failed: " + path.string());
}

}  // namespace priming
