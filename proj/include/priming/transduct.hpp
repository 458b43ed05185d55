#pragma once

#include "priming/pool.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

namespace priming {

// Rows of the scan kernel: ids ascending, one row per distinct record. When a
// record sits in several clusters (raw pools), the lowest class index wins.
struct PoolEmbeddings {
  RowMatrixXf X;
  std::vector<RecordId> ids;
  std::vector<int> class_of;
  std::vector<float> score_of;

  std::size_t size() const { return ids.size(); }
};

PoolEmbeddings gather_pool_embeddings(const PrimingPool& pool, const Corpus& corpus);

struct NeighborHit {
  RecordId record_id = 0;
  double score = 0.0;
  std::size_t rank = 0;
};

inline constexpr std::size_t kDefaultChunkRows = std::size_t{1} << 16;

// Exact top-k by cosine over the pool, scores descending, ties by ascending
// record id. The scan is chunked; results are identical for any chunk size
// and worker count.
std::vector<NeighborHit> topk_neighbors(const PoolEmbeddings& pool,
                                        Eigen::Ref<const Eigen::VectorXf> query, std::size_t k,
                                        int workers = 1,
                                        std::size_t chunk_rows = kDefaultChunkRows);

// Union of per-query top-k retrievals, de-duplicated, each entry keeping its
// class and zero-shot score from the input pool. Clusters come out in
// (score desc, id asc) order.
PrimingPool transductive_filter(const PrimingPool& pool, const Corpus& corpus,
                                const RowMatrixXf& test, std::size_t k = 10, int workers = 1);

struct BenchReport {
  std::uint64_t queries = 0;
  std::uint64_t pool_size = 0;
  std::uint64_t k = 0;
  double total_micros = 0.0;
  double mean_micros_per_query = 0.0;
};

struct BenchResult {
  PrimingPool pool;  // same retrieval output transductive_filter would produce
  BenchReport report;
};

BenchResult retrieval_bench(const PrimingPool& pool, const Corpus& corpus,
                            const RowMatrixXf& test, std::size_t k, int workers = 1);

// One line: {"queries","pool_size","k","total_micros","mean_micros_per_query"}.
void write_bench_report(const BenchReport& report, const std::filesystem::path& path);

}  // namespace priming
