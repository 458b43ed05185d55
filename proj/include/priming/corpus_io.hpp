#pragma once

#include "priming/types.hpp"

#include <filesystem>
#include <string>
#include <unordered_map>
#include <vector>

namespace priming {

// File formats
//
// Caption shard: UTF-8 line-delimited JSON objects
//   {"id": <u64>, "caption": <string>, "uri": <string, optional>}
// Embedding shard: binary
//   magic "NPEMB001" | dim u32 LE | count u64 LE | count*dim float32 LE, row-major
// Class spec file: one JSON object
//   {"classes": [{"class_index", "name", "aliases", "text_embedding"}, ...]}
// Corpus manifest: one JSON object
//   {"dim": <int>, "shards": [{"captions": <path>, "embeddings": <path>}, ...]}
// Label file: line-delimited {"class_index": <int>}, row-aligned with its
//   embedding shard.
// Id file: one decimal record id per line.

inline constexpr char kEmbeddingMagic[8] = {'N', 'P', 'E', 'M', 'B', '0', '0', '1'};

std::vector<CaptionRecord> read_caption_shard(const std::filesystem::path& path);
void write_caption_shard(const std::vector<CaptionRecord>& records,
                         const std::filesystem::path& path);

RowMatrixXf read_embedding_shard(const std::filesystem::path& path);
void write_embedding_shard(const RowMatrixXf& matrix, const std::filesystem::path& path);

struct PairedShard {
  std::vector<CaptionRecord> captions;
  RowMatrixXf embeddings;  // row i belongs to captions[i]
};

/// Fails with CountMismatch unless caption count equals embedding row count.
PairedShard validate_shard_pair(std::vector<CaptionRecord> captions, RowMatrixXf embeddings);

/// Rescales every row to unit L2 norm. A row with norm below 1e-12 is a
/// ZeroVector error; silently dropping it would poison cosine scores later.
RowMatrixXf normalize_embeddings(const RowMatrixXf& matrix);

/// Unit-normalizes one vector, same ZeroVector contract as the matrix form.
Eigen::VectorXf normalize_vector(const Eigen::VectorXf& v);

/// expected_dim < 0 skips the dimension check (the corpus manifest usually
/// supplies it). Text embeddings come back unit-normalized.
std::vector<ClassSpec> load_class_specs(const std::filesystem::path& path,
                                        int expected_dim = -1);
void save_class_specs(const std::vector<ClassSpec>& specs, const std::filesystem::path& path);

struct ShardPaths {
  std::filesystem::path captions;
  std::filesystem::path embeddings;
};

struct CorpusManifest {
  int dim = 0;
  std::vector<ShardPaths> shards;
};

CorpusManifest load_manifest(const std::filesystem::path& path);
void save_manifest(const CorpusManifest& manifest, const std::filesystem::path& path);

/// A fully loaded corpus: every shard pair validated, captions concatenated in
/// manifest order, embeddings unit-normalized, ids checked unique corpus-wide.
struct Corpus {
  std::vector<CaptionRecord> captions;
  RowMatrixXf embeddings;  // row i belongs to captions[i]
  std::unordered_map<RecordId, Eigen::Index> row_of_id;

  Eigen::Index dim() const { return embeddings.cols(); }
  Eigen::Index count() const { return embeddings.rows(); }

  /// Row view for a record id; UnknownClass is never the issue here, a missing
  /// id means the pool and corpus disagree, reported as MalformedRecord.
  Eigen::Index row_index(RecordId id) const;
};

Corpus load_corpus(const CorpusManifest& manifest);
Corpus make_corpus(std::vector<CaptionRecord> captions, RowMatrixXf embeddings);

std::vector<int> read_labels(const std::filesystem::path& path);
void write_labels(const std::vector<int>& labels, const std::filesystem::path& path);

std::vector<RecordId> read_id_file(const std::filesystem::path& path);
void write_id_file(const std::vector<RecordId>& ids, const std::filesystem::path& path);

}  // namespace priming
