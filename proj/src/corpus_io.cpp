#include "priming/corpus_io.hpp"

#include "priming/detail/bytes.hpp"

#include <json.hpp>

#include <bit>
#include <cstring>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>
#include <unordered_set>

namespace priming {

using nlohmann::json;

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::MalformedRecord: return "MalformedRecord";
    case ErrorKind::DuplicateId: return "DuplicateId";
    case ErrorKind::MalformedHeader: return "MalformedHeader";
    case ErrorKind::TruncatedPayload: return "TruncatedPayload";
    case ErrorKind::NonFiniteValue: return "NonFiniteValue";
    case ErrorKind::CountMismatch: return "CountMismatch";
    case ErrorKind::ZeroVector: return "ZeroVector";
    case ErrorKind::NonContiguousIndices: return "NonContiguousIndices";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::EmptyQuery: return "EmptyQuery";
    case ErrorKind::EmptyPool: return "EmptyPool";
    case ErrorKind::EmptyCluster: return "EmptyCluster";
    case ErrorKind::DegenerateCentroid: return "DegenerateCentroid";
    case ErrorKind::UnknownClass: return "UnknownClass";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::LabelOutOfRange: return "LabelOutOfRange";
    case ErrorKind::EmptyTestSet: return "EmptyTestSet";
    case ErrorKind::InsufficientShots: return "InsufficientShots";
    case ErrorKind::InvalidConfig: return "InvalidConfig";
    case ErrorKind::WrongStage: return "WrongStage";
    case ErrorKind::UnknownKey: return "UnknownKey";
    case ErrorKind::TypeError: return "TypeError";
    case ErrorKind::MissingRequired: return "MissingRequired";
    case ErrorKind::IoError: return "IoError";
  }
  return "UnknownError";
}

using detail::get_u32le;
using detail::get_u64le;
using detail::open_input;
using detail::open_output;
using detail::put_u32le;
using detail::put_u64le;

namespace {

void byteswap_floats(float* data, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    std::uint32_t bits;
    std::memcpy(&bits, data + i, 4);
    bits = __builtin_bswap32(bits);
    std::memcpy(data + i, &bits, 4);
  }
}

json parse_line(const std::string& line, const std::filesystem::path& path, std::size_t lineno) {
  json j = json::parse(line, nullptr, false);
  if (j.is_discarded() || !j.is_object()) {
    fail(ErrorKind::MalformedRecord,
         path.string() + ":" + std::to_string(lineno) + ": not a JSON object");
  }
  return j;
}

void check_keys(const json& j, const std::set<std::string>& allowed,
                const std::filesystem::path& path, std::size_t lineno) {
  for (const auto& item : j.items()) {
    if (!allowed.count(item.key())) {
      fail(ErrorKind::MalformedRecord, path.string() + ":" + std::to_string(lineno) +
                                           ": unexpected key \"" + item.key() + "\"");
    }
  }
}

}  // namespace

std::vector<CaptionRecord> read_caption_shard(const std::filesystem::path& path) {
  auto in = open_input(path, std::ios::in);
  std::vector<CaptionRecord> records;
  std::unordered_set<RecordId> seen;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j = parse_line(line, path, lineno);
    check_keys(j, {"id", "caption", "uri"}, path, lineno);
    if (!j.contains("id") || !j["id"].is_number_unsigned()) {
      fail(ErrorKind::MalformedRecord,
           path.string() + ":" + std::to_string(lineno) + ": \"id\" must be an unsigned integer");
    }
    if (!j.contains("caption") || !j["caption"].is_string()) {
      fail(ErrorKind::MalformedRecord,
           path.string() + ":" + std::to_string(lineno) + ": \"caption\" must be a string");
    }
    CaptionRecord rec;
    rec.id = j["id"].get<RecordId>();
    rec.caption = j["caption"].get<std::string>();
    if (j.contains("uri")) {
      if (!j["uri"].is_string()) {
        fail(ErrorKind::MalformedRecord,
             path.string() + ":" + std::to_string(lineno) + ": \"uri\" must be a string");
      }
      rec.uri = j["uri"].get<std::string>();
    }
    if (!seen.insert(rec.id).second) {
      fail(ErrorKind::DuplicateId,
           path.string() + ":" + std::to_string(lineno) + ": id " + std::to_string(rec.id));
    }
    records.push_back(std::move(rec));
  }
  return records;
}

void write_caption_shard(const std::vector<CaptionRecord>& records,
                         const std::filesystem::path& path) {
  auto out = open_output(path, std::ios::out | std::ios::trunc);
  for (const auto& rec : records) {
    json j;
    j["id"] = rec.id;
    j["caption"] = rec.caption;
    if (rec.uri) j["uri"] = *rec.uri;
    out << j.dump() << '\n';
  }
  if (!out) fail(ErrorKind::IoError, "write failed: " + path.string());
}

RowMatrixXf read_embedding_shard(const std::filesystem::path& path) {
  auto in = open_input(path, std::ios::in | std::ios::binary);
  const auto file_size = std::filesystem::file_size(path);

  unsigned char header[20];
  if (file_size < sizeof(header)) {
    fail(ErrorKind::MalformedHeader, path.string() + ": file shorter than header");
  }
  in.read(reinterpret_cast<char*>(header), sizeof(header));
  if (std::memcmp(header, kEmbeddingMagic, 8) != 0) {
    fail(ErrorKind::MalformedHeader, path.string() + ": bad magic");
  }
  const std::uint32_t dim = get_u32le(header + 8);
  const std::uint64_t count = get_u64le(header + 12);
  if (dim == 0) fail(ErrorKind::MalformedHeader, path.string() + ": dim must be positive");
  if (count > (std::numeric_limits<std::uint64_t>::max() / 4) / dim ||
      count > static_cast<std::uint64_t>(std::numeric_limits<Eigen::Index>::max())) {
    fail(ErrorKind::MalformedHeader, path.string() + ": count out of range");
  }
  const std::uint64_t payload = count * dim * 4ull;
  if (file_size != sizeof(header) + payload) {
    fail(ErrorKind::TruncatedPayload,
         path.string() + ": expected " + std::to_string(sizeof(header) + payload) +
             " bytes, file has " + std::to_string(file_size));
  }

  RowMatrixXf m(static_cast<Eigen::Index>(count), static_cast<Eigen::Index>(dim));
  in.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(payload));
  if (!in) fail(ErrorKind::TruncatedPayload, path.string() + ": short read");
  if constexpr (std::endian::native == std::endian::big) {
    byteswap_floats(m.data(), static_cast<std::size_t>(m.size()));
  }
  if (!m.allFinite()) {
    fail(ErrorKind::NonFiniteValue, path.string() + ": NaN or Inf in payload");
  }
  return m;
}

void write_embedding_shard(const RowMatrixXf& matrix, const std::filesystem::path& path) {
  if (!matrix.allFinite()) {
    fail(ErrorKind::NonFiniteValue, path.string() + ": refusing to write NaN or Inf");
  }
  auto out = open_output(path, std::ios::out | std::ios::binary | std::ios::trunc);
  out.write(kEmbeddingMagic, 8);
  put_u32le(out, static_cast<std::uint32_t>(matrix.cols()));
  put_u64le(out, static_cast<std::uint64_t>(matrix.rows()));
  if constexpr (std::endian::native == std::endian::big) {
    RowMatrixXf copy = matrix;
    byteswap_floats(copy.data(), static_cast<std::size_t>(copy.size()));
    out.write(reinterpret_cast<const char*>(copy.data()),
              static_cast<std::streamsize>(copy.size() * 4));
  } else {
    out.write(reinterpret_cast<const char*>(matrix.data()),
              static_cast<std::streamsize>(matrix.size() * 4));
  }
  if (!out) fail(ErrorKind::IoError, "write failed: " + path.string());
}

PairedShard validate_shard_pair(std::vector<CaptionRecord> captions, RowMatrixXf embeddings) {
  if (static_cast<Eigen::Index>(captions.size()) != embeddings.rows()) {
    fail(ErrorKind::CountMismatch, std::to_string(captions.size()) + " captions vs " +
                                       std::to_string(embeddings.rows()) + " embedding rows");
  }
  return PairedShard{std::move(captions), std::move(embeddings)};
}

RowMatrixXf normalize_embeddings(const RowMatrixXf& matrix) {
  RowMatrixXf out(matrix.rows(), matrix.cols());
  for (Eigen::Index i = 0; i < matrix.rows(); ++i) {
    const double norm = matrix.row(i).cast<double>().norm();
    if (norm < 1e-12) {
      fail(ErrorKind::ZeroVector, "row " + std::to_string(i) + " has norm below 1e-12");
    }
    out.row(i) = (matrix.row(i).cast<double>() / norm).cast<float>();
  }
  return out;
}

Eigen::VectorXf normalize_vector(const Eigen::VectorXf& v) {
  const double norm = v.cast<double>().norm();
  if (norm < 1e-12) fail(ErrorKind::ZeroVector, "vector has norm below 1e-12");
  return (v.cast<double>() / norm).cast<float>();
}

std::vector<ClassSpec> load_class_specs(const std::filesystem::path& path, int expected_dim) {
  auto in = open_input(path, std::ios::in);
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded() || !j.is_object() || !j.contains("classes") || !j["classes"].is_array()) {
    fail(ErrorKind::MalformedRecord, path.string() + ": expected {\"classes\": [...]}");
  }
  std::vector<ClassSpec> specs;
  int next_index = 0;
  for (const auto& item : j["classes"]) {
    if (!item.is_object() || !item.contains("class_index") || !item.contains("name") ||
        !item.contains("aliases") || !item.contains("text_embedding")) {
      fail(ErrorKind::MalformedRecord, path.string() + ": class entry missing required field");
    }
    if (!item["class_index"].is_number_integer()) {
      fail(ErrorKind::MalformedRecord, path.string() + ": class_index must be an integer");
    }
    ClassSpec spec;
    spec.class_index = item["class_index"].get<int>();
    if (spec.class_index != next_index) {
      fail(ErrorKind::NonContiguousIndices,
           path.string() + ": expected class_index " + std::to_string(next_index) + ", got " +
               std::to_string(spec.class_index));
    }
    ++next_index;
    if (!item["name"].is_string() || item["name"].get<std::string>().empty()) {
      fail(ErrorKind::MalformedRecord, path.string() + ": name must be a non-empty string");
    }
    spec.name = item["name"].get<std::string>();
    if (!item["aliases"].is_array()) {
      fail(ErrorKind::MalformedRecord, path.string() + ": aliases must be an array");
    }
    for (const auto& a : item["aliases"]) {
      if (!a.is_string()) {
        fail(ErrorKind::MalformedRecord, path.string() + ": aliases must be strings");
      }
      spec.aliases.push_back(a.get<std::string>());
    }
    const auto& emb = item["text_embedding"];
    if (!emb.is_array() || emb.empty()) {
      fail(ErrorKind::MalformedRecord, path.string() + ": text_embedding must be a non-empty array");
    }
    Eigen::VectorXf v(static_cast<Eigen::Index>(emb.size()));
    for (Eigen::Index i = 0; i < v.size(); ++i) {
      const auto& x = emb[static_cast<std::size_t>(i)];
      if (!x.is_number()) {
        fail(ErrorKind::MalformedRecord, path.string() + ": text_embedding must be numeric");
      }
      v(i) = static_cast<float>(x.get<double>());
    }
    if (expected_dim >= 0 && v.size() != expected_dim) {
      fail(ErrorKind::DimensionMismatch,
           path.string() + ": class \"" + spec.name + "\" embedding has dim " +
               std::to_string(v.size()) + ", corpus dim is " + std::to_string(expected_dim));
    }
    if (!specs.empty() && v.size() != specs.front().text_embedding.size()) {
      fail(ErrorKind::DimensionMismatch, path.string() + ": inconsistent embedding dimensions");
    }
    spec.text_embedding = normalize_vector(v);
    specs.push_back(std::move(spec));
  }
  return specs;
}

void save_class_specs(const std::vector<ClassSpec>& specs, const std::filesystem::path& path) {
  json classes = json::array();
  for (const auto& spec : specs) {
    json j;
    j["class_index"] = spec.class_index;
    j["name"] = spec.name;
    j["aliases"] = spec.aliases;
    json emb = json::array();
    for (Eigen::Index i = 0; i < spec.text_embedding.size(); ++i) {
      emb.push_back(static_cast<double>(spec.text_embedding(i)));
    }
    j["text_embedding"] = std::move(emb);
    classes.push_back(std::move(j));
  }
  auto out = open_output(path, std::ios::out | std::ios::trunc);
  out << json{{"classes", std::move(classes)}}.dump() << '\n';
  if (!out) fail(ErrorKind::IoError, "write failed: " + path.string());
}

CorpusManifest load_manifest(const std::filesystem::path& path) {
  auto in = open_input(path, std::ios::in);
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded() || !j.is_object() || !j.contains("dim") || !j.contains("shards") ||
      !j["dim"].is_number_integer() || !j["shards"].is_array()) {
    fail(ErrorKind::MalformedRecord, path.string() + ": expected {\"dim\", \"shards\"}");
  }
  CorpusManifest manifest;
  manifest.dim = j["dim"].get<int>();
  if (manifest.dim <= 0) {
    fail(ErrorKind::MalformedRecord, path.string() + ": dim must be positive");
  }
  const auto base = path.parent_path();
  for (const auto& shard : j["shards"]) {
    if (!shard.is_object() || !shard.contains("captions") || !shard.contains("embeddings") ||
        !shard["captions"].is_string() || !shard["embeddings"].is_string()) {
      fail(ErrorKind::MalformedRecord, path.string() + ": shard entries need captions/embeddings");
    }
    // Relative shard paths resolve against the manifest's directory.
    std::filesystem::path c = shard["captions"].get<std::string>();
    std::filesystem::path e = shard["embeddings"].get<std::string>();
    manifest.shards.push_back({c.is_absolute() ? c : base / c, e.is_absolute() ? e : base / e});
  }
  return manifest;
}

void save_manifest(const CorpusManifest& manifest, const std::filesystem::path& path) {
  json shards = json::array();
  for (const auto& shard : manifest.shards) {
    shards.push_back({{"captions", shard.captions.string()},
                      {"embeddings", shard.embeddings.string()}});
  }
  auto out = open_output(path, std::ios::out | std::ios::trunc);
  out << json{{"dim", manifest.dim}, {"shards", std::move(shards)}}.dump() << '\n';
  if (!out) fail(ErrorKind::IoError, "write failed: " + path.string());
}

Eigen::Index Corpus::row_index(RecordId id) const {
  auto it = row_of_id.find(id);
  if (it == row_of_id.end()) {
    fail(ErrorKind::MalformedRecord, "record id " + std::to_string(id) + " not in corpus");
  }
  return it->second;
}

Corpus make_corpus(std::vector<CaptionRecord> captions, RowMatrixXf embeddings) {
  auto pair = validate_shard_pair(std::move(captions), std::move(embeddings));
  Corpus corpus;
  corpus.captions = std::move(pair.captions);
  corpus.embeddings = normalize_embeddings(pair.embeddings);
  corpus.row_of_id.reserve(corpus.captions.size());
  for (std::size_t i = 0; i < corpus.captions.size(); ++i) {
    const RecordId id = corpus.captions[i].id;
    if (!corpus.row_of_id.emplace(id, static_cast<Eigen::Index>(i)).second) {
      fail(ErrorKind::DuplicateId, "record id " + std::to_string(id) + " appears twice in corpus");
    }
  }
  return corpus;
}

Corpus load_corpus(const CorpusManifest& manifest) {
  std::vector<CaptionRecord> captions;
  Eigen::Index total_rows = 0;
  std::vector<RowMatrixXf> blocks;
  for (const auto& shard : manifest.shards) {
    auto pair = validate_shard_pair(read_caption_shard(shard.captions),
                                    read_embedding_shard(shard.embeddings));
    if (pair.embeddings.cols() != manifest.dim && pair.embeddings.rows() > 0) {
      fail(ErrorKind::DimensionMismatch,
           shard.embeddings.string() + ": dim " + std::to_string(pair.embeddings.cols()) +
               " does not match manifest dim " + std::to_string(manifest.dim));
    }
    total_rows += pair.embeddings.rows();
    captions.insert(captions.end(), std::make_move_iterator(pair.captions.begin()),
                    std::make_move_iterator(pair.captions.end()));
    blocks.push_back(std::move(pair.embeddings));
  }
  RowMatrixXf all(total_rows, manifest.dim);
  Eigen::Index row = 0;
  for (const auto& block : blocks) {
    if (block.rows() > 0) all.middleRows(row, block.rows()) = block;
    row += block.rows();
  }
  return make_corpus(std::move(captions), std::move(all));
}

std::vector<int> read_labels(const std::filesystem::path& path) {
  auto in = open_input(path, std::ios::in);
  std::vector<int> labels;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j = parse_line(line, path, lineno);
    check_keys(j, {"class_index"}, path, lineno);
    if (!j.contains("class_index") || !j["class_index"].is_number_integer()) {
      fail(ErrorKind::MalformedRecord,
           path.string() + ":" + std::to_string(lineno) + ": \"class_index\" must be an integer");
    }
    labels.push_back(j["class_index"].get<int>());
  }
  return labels;
}

void write_labels(const std::vector<int>& labels, const std::filesystem::path& path) {
  auto out = open_output(path, std::ios::out | std::ios::trunc);
  for (int label : labels) {
    out << json{{"class_index", label}}.dump() << '\n';
  }
  if (!out) fail(ErrorKind::IoError, "write failed: " + path.string());
}

std::vector<RecordId> read_id_file(const std::filesystem::path& path) {
  auto in = open_input(path, std::ios::in);
  std::vector<RecordId> ids;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::size_t pos = 0;
    RecordId id = 0;
    try {
      id = std::stoull(line, &pos);
    } catch (const std::exception&) {
      pos = 0;
    }
    if (pos != line.size()) {
      fail(ErrorKind::MalformedRecord,
           path.string() + ":" + std::to_string(lineno) + ": expected a decimal record id");
    }
    ids.push_back(id);
  }
  return ids;
}

void write_id_file(const std::vector<RecordId>& ids, const std::filesystem::path& path) {
  auto out = open_output(path, std::ios::out | std::ios::trunc);
  for (RecordId id : ids) out << id << '\n';
  if (!out) fail(ErrorKind::IoError, "write failed: " + path.string());
}

}  // namespace priming
