#pragma once

#include "priming/corpus_io.hpp"
#include "priming/text_index.hpp"
#include "priming/types.hpp"

#include <filesystem>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

namespace priming {

enum class PoolStage { Raw, ConsistencyFiltered, Transduced };

std::string to_string(PoolStage stage);
PoolStage pool_stage_from_string(std::string_view text);

struct PoolEntry {
  RecordId record_id = 0;
  int class_index = 0;
  float score = 0.0f;  // cosine of the entry embedding with its class's zero-shot column

  bool operator==(const PoolEntry&) const = default;
};

// Per-class clusters of retrieved records. At the raw stage a record may sit
// in several clusters; the consistency filter makes clusters disjoint.
struct PrimingPool {
  PoolStage stage = PoolStage::Raw;
  int dim = 0;
  std::string created_from;
  std::vector<std::vector<PoolEntry>> clusters;  // position = class index

  int n_classes() const { return static_cast<int>(clusters.size()); }
  std::size_t total_size() const;
};

// d×n matrix whose column c is the normalized text embedding of class c.
struct ZeroShotHead {
  HeadMatrix W;
};

ZeroShotHead build_zero_shot_head(std::span<const ClassSpec> specs);

// One cluster per class: union of exact phrase-search hits for the class name
// and each alias, ascending record id, scored against the zero-shot column.
// Queries that tokenize to nothing leave the class empty; if `query_errors`
// is given, one message per failed query is appended.
PrimingPool build_pool(const InvertedIndex& index, std::span<const ClassSpec> specs,
                       const Corpus& corpus, std::vector<std::string>* query_errors = nullptr);

// Keeps entry (x, c) iff argmax_{c'} z_{c'}·v_x == c, ties to the lowest class
// index. Entry order within clusters is preserved; output clusters are
// disjoint by record id. Idempotent.
PrimingPool consistency_filter(const PrimingPool& pool, const ZeroShotHead& head,
                               const Corpus& corpus);

// Truncates every cluster to its m highest-score entries, ties broken by
// ascending record id. Clusters with at most m entries pass through
// unchanged; truncated clusters come out in (score desc, id asc) order.
PrimingPool cap_per_class(const PrimingPool& pool, std::size_t m);

// Drops entries whose record id is in `excluded`; everything else, including
// order, is unchanged.
PrimingPool exclude_ids(const PrimingPool& pool, const std::unordered_set<RecordId>& excluded);

// Pool file: one header line {"stage","n_classes","dim","created_from"}
// followed by one line per entry {"record_id","class_index","score"}, classes
// ascending, cluster-internal order preserved.
void write_pool(const PrimingPool& pool, const std::filesystem::path& path);
PrimingPool read_pool(const std::filesystem::path& path);

}  // namespace priming
