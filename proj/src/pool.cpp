#include "priming/pool.hpp"

#include "priming/detail/bytes.hpp"
#include "priming/numeric.hpp"

#include <json.hpp>

#include <algorithm>
#include <fstream>

namespace priming {

namespace {

float clamped_cosine(const float* a, const float* b, Eigen::Index n) {
  const double dot = ranking_dot(a, b, n);
  return static_cast<float>(std::clamp(dot, -1.0, 1.0));
}

// argmax_c of head column · v, ties to the lowest class index.
int argmax_class(const HeadMatrix& W, const float* v) {
  int best = 0;
  double best_score = ranking_dot(W.col(0).data(), v, W.rows());
  for (int c = 1; c < W.cols(); ++c) {
    const double s = ranking_dot(W.col(c).data(), v, W.rows());
    if (s > best_score) {
      best_score = s;
      best = c;
    }
  }
  return best;
}

}  // namespace

std::string to_string(PoolStage stage) {
  switch (stage) {
    case PoolStage::Raw: return "raw";
    case PoolStage::ConsistencyFiltered: return "consistency_filtered";
    case PoolStage::Transduced: return "transduced";
  }
  fail(ErrorKind::WrongStage, "unknown pool stage value");
}

PoolStage pool_stage_from_string(std::string_view text) {
  if (text == "raw") return PoolStage::Raw;
  if (text == "consistency_filtered") return PoolStage::ConsistencyFiltered;
  if (text == "transduced") return PoolStage::Transduced;
  fail(ErrorKind::WrongStage, "unknown pool stage \"" + std::string(text) + "\"");
}

std::size_t PrimingPool::total_size() const {
  std::size_t n = 0;
  for (const auto& cluster : clusters) n += cluster.size();
  return n;
}

ZeroShotHead build_zero_shot_head(std::span<const ClassSpec> specs) {
  if (specs.empty()) fail(ErrorKind::InvalidConfig, "no classes given");
  const Eigen::Index d = specs[0].text_embedding.size();
  HeadMatrix W(d, static_cast<Eigen::Index>(specs.size()));
  for (std::size_t c = 0; c < specs.size(); ++c) {
    if (specs[c].text_embedding.size() != d) {
      fail(ErrorKind::DimensionMismatch,
           "class " + std::to_string(c) + " embedding has dimension " +
               std::to_string(specs[c].text_embedding.size()) + ", expected " + std::to_string(d));
    }
    W.col(static_cast<Eigen::Index>(c)) = normalize_vector(specs[c].text_embedding);
  }
  return ZeroShotHead{std::move(W)};
}

PrimingPool build_pool(const InvertedIndex& index, std::span<const ClassSpec> specs,
                       const Corpus& corpus, std::vector<std::string>* query_errors) {
  const ZeroShotHead head = build_zero_shot_head(specs);
  if (head.W.rows() != corpus.dim()) {
    fail(ErrorKind::DimensionMismatch,
         "class embeddings have dimension " + std::to_string(head.W.rows()) +
             ", corpus has " + std::to_string(corpus.dim()));
  }

  PrimingPool pool;
  pool.stage = PoolStage::Raw;
  pool.dim = static_cast<int>(corpus.dim());
  pool.clusters.resize(specs.size());

  for (std::size_t c = 0; c < specs.size(); ++c) {
    std::vector<RecordId> hits;
    std::vector<std::string> phrases;
    phrases.push_back(specs[c].name);
    phrases.insert(phrases.end(), specs[c].aliases.begin(), specs[c].aliases.end());
    for (const auto& phrase : phrases) {
      try {
        auto found = phrase_search(index, phrase);
        hits.insert(hits.end(), found.begin(), found.end());
      } catch (const PipelineError& e) {
        if (e.kind() != ErrorKind::EmptyQuery) throw;
        if (query_errors) {
          query_errors->push_back("class " + std::to_string(c) + ": " + e.what());
        }
      }
    }
    std::sort(hits.begin(), hits.end());
    hits.erase(std::unique(hits.begin(), hits.end()), hits.end());

    auto& cluster = pool.clusters[c];
    cluster.reserve(hits.size());
    const auto col = head.W.col(static_cast<Eigen::Index>(c));
    for (const RecordId id : hits) {
      const auto row = corpus.row_index(id);
      cluster.push_back({id, static_cast<int>(c),
                         clamped_cosine(col.data(), corpus.embeddings.row(row).data(),
                                        corpus.dim())});
    }
  }
  return pool;
}

PrimingPool consistency_filter(const PrimingPool& pool, const ZeroShotHead& head,
                               const Corpus& corpus) {
  if (pool.stage == PoolStage::Transduced) {
    fail(ErrorKind::WrongStage, "consistency filter expects a raw or consistency_filtered pool");
  }
  if (head.W.rows() != corpus.dim()) {
    fail(ErrorKind::DimensionMismatch, "head dimension does not match corpus");
  }
  PrimingPool out;
  out.stage = PoolStage::ConsistencyFiltered;
  out.dim = pool.dim;
  out.created_from = pool.created_from;
  out.clusters.resize(pool.clusters.size());
  for (std::size_t c = 0; c < pool.clusters.size(); ++c) {
    for (const auto& entry : pool.clusters[c]) {
      const auto row = corpus.row_index(entry.record_id);
      if (argmax_class(head.W, corpus.embeddings.row(row).data()) == entry.class_index) {
        out.clusters[c].push_back(entry);
      }
    }
  }
  return out;
}

PrimingPool cap_per_class(const PrimingPool& pool, std::size_t m) {
  PrimingPool out;
  out.stage = pool.stage;
  out.dim = pool.dim;
  out.created_from = pool.created_from;
  out.clusters.resize(pool.clusters.size());
  for (std::size_t c = 0; c < pool.clusters.size(); ++c) {
    const auto& cluster = pool.clusters[c];
    if (cluster.size() <= m) {
      out.clusters[c] = cluster;
      continue;
    }
    auto sorted = cluster;
    std::sort(sorted.begin(), sorted.end(), [](const PoolEntry& a, const PoolEntry& b) {
      if (a.score != b.score) return a.score > b.score;
      return a.record_id < b.record_id;
    });
    sorted.resize(m);
    out.clusters[c] = std::move(sorted);
  }
  return out;
}

PrimingPool exclude_ids(const PrimingPool& pool, const std::unordered_set<RecordId>& excluded) {
  PrimingPool out;
  out.stage = pool.stage;
  out.dim = pool.dim;
  out.created_from = pool.created_from;
  out.clusters.resize(pool.clusters.size());
  for (std::size_t c = 0; c < pool.clusters.size(); ++c) {
    for (const auto& entry : pool.clusters[c]) {
      if (!excluded.contains(entry.record_id)) out.clusters[c].push_back(entry);
    }
  }
  return out;
}

void write_pool(const PrimingPool& pool, const std::filesystem::path& path) {
  auto out = detail::open_output(path, std::ios::out | std::ios::trunc);
  nlohmann::json header;
  header["stage"] = to_string(pool.stage);
  header["n_classes"] = pool.n_classes();
  header["dim"] = pool.dim;
  header["created_from"] = pool.created_from;
  out << header.dump() << '\n';
  for (const auto& cluster : pool.clusters) {
    for (const auto& entry : cluster) {
      nlohmann::json j;
      j["record_id"] = entry.record_id;
      j["class_index"] = entry.class_index;
      j["score"] = entry.score;
      out << j.dump() << '\n';
    }
  }
  if (!out) fail(ErrorKind::IoError, "write failed: " + path.string());
}

PrimingPool read_pool(const std::filesystem::path& path) {
  auto in = detail::open_input(path, std::ios::in);
  std::string line;
  std::size_t line_no = 0;
  auto parse_line = [&](const char* what) {
    ++line_no;
    nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
      fail(ErrorKind::MalformedRecord,
           path.string() + ":" + std::to_string(line_no) + ": not a JSON " + what);
    }
    return j;
  };

  if (!std::getline(in, line)) {
    fail(ErrorKind::MalformedHeader, path.string() + ": missing pool header");
  }
  const auto header = parse_line("header object");
  for (const auto& [key, value] : header.items()) {
    if (key != "stage" && key != "n_classes" && key != "dim" && key != "created_from") {
      fail(ErrorKind::MalformedHeader, path.string() + ": unexpected header key \"" + key + "\"");
    }
  }
  if (!header.contains("stage") || !header["stage"].is_string() || !header.contains("n_classes") ||
      !header["n_classes"].is_number_integer() || !header.contains("dim") ||
      !header["dim"].is_number_integer() || !header.contains("created_from") ||
      !header["created_from"].is_string()) {
    fail(ErrorKind::MalformedHeader, path.string() + ": bad pool header");
  }

  PrimingPool pool;
  pool.stage = pool_stage_from_string(header["stage"].get<std::string>());
  pool.dim = header["dim"].get<int>();
  pool.created_from = header["created_from"].get<std::string>();
  const int n_classes = header["n_classes"].get<int>();
  if (n_classes < 0 || pool.dim < 0) {
    fail(ErrorKind::MalformedHeader, path.string() + ": negative counts in pool header");
  }
  pool.clusters.resize(static_cast<std::size_t>(n_classes));

  while (std::getline(in, line)) {
    const auto j = parse_line("entry object");
    for (const auto& [key, value] : j.items()) {
      if (key != "record_id" && key != "class_index" && key != "score") {
        fail(ErrorKind::MalformedRecord,
             path.string() + ":" + std::to_string(line_no) + ": unexpected key \"" + key + "\"");
      }
    }
    if (!j.contains("record_id") || !j["record_id"].is_number_unsigned() ||
        !j.contains("class_index") || !j["class_index"].is_number_integer() ||
        !j.contains("score") || !j["score"].is_number()) {
      fail(ErrorKind::MalformedRecord,
           path.string() + ":" + std::to_string(line_no) + ": bad pool entry");
    }
    PoolEntry entry;
    entry.record_id = j["record_id"].get<RecordId>();
    entry.class_index = j["class_index"].get<int>();
    entry.score = static_cast<float>(j["score"].get<double>());
    if (entry.class_index < 0 || entry.class_index >= n_classes) {
      fail(ErrorKind::LabelOutOfRange,
           path.string() + ":" + std::to_string(line_no) + ": class_index " +
               std::to_string(entry.class_index) + " out of range");
    }
    pool.clusters[static_cast<std::size_t>(entry.class_index)].push_back(entry);
  }
  return pool;
}

}  // namespace priming
