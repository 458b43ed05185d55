#include "priming/text_index.hpp"

#include "priming/detail/bytes.hpp"
#include "priming/parallel.hpp"
#include "priming/unicode_tables.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cstring>
#include <unordered_map>

namespace priming {

namespace {

bool is_alnum_cp(char32_t cp) {
  if (cp < 0x80) {
    return (cp >= '0' && cp <= '9') || (cp >= 'a' && cp <= 'z') || (cp >= 'A' && cp <= 'Z');
  }
  const auto* begin = detail::kAlnumRanges;
  const auto* end = begin + detail::kAlnumRangeCount;
  auto it = std::upper_bound(begin, end, cp,
                             [](char32_t v, const detail::CpRange& r) { return v < r.lo; });
  return it != begin && cp <= (it - 1)->hi;
}

char32_t lower_cp(char32_t cp) {
  if (cp < 0x80) {
    return (cp >= 'A' && cp <= 'Z') ? cp + 32 : cp;
  }
  const auto* begin = detail::kLowerMap;
  const auto* end = begin + detail::kLowerMapCount;
  auto it = std::lower_bound(begin, end, cp,
                             [](const detail::CpMap& m, char32_t v) { return m.from < v; });
  return (it != end && it->from == cp) ? it->to : cp;
}

constexpr char32_t kInvalidCp = 0xFFFFFFFF;

// Decodes one UTF-8 code point at `i`, advancing it. Malformed sequences
// consume one byte and decode as kInvalidCp (a separator).
char32_t decode_utf8(std::string_view s, std::size_t& i) {
  const unsigned char b0 = static_cast<unsigned char>(s[i]);
  if (b0 < 0x80) {
    ++i;
    return b0;
  }
  int len = 0;
  char32_t cp = 0;
  if ((b0 & 0xE0) == 0xC0) {
    len = 2;
    cp = b0 & 0x1F;
  } else if ((b0 & 0xF0) == 0xE0) {
    len = 3;
    cp = b0 & 0x0F;
  } else if ((b0 & 0xF8) == 0xF0) {
    len = 4;
    cp = b0 & 0x07;
  } else {
    ++i;
    return kInvalidCp;
  }
  if (i + len > s.size()) {
    ++i;
    return kInvalidCp;
  }
  for (int k = 1; k < len; ++k) {
    const unsigned char bk = static_cast<unsigned char>(s[i + k]);
    if ((bk & 0xC0) != 0x80) {
      ++i;
      return kInvalidCp;
    }
    cp = (cp << 6) | (bk & 0x3F);
  }
  // Overlong encodings and surrogates are malformed.
  if ((len == 2 && cp < 0x80) || (len == 3 && cp < 0x800) || (len == 4 && cp < 0x10000) ||
      (cp >= 0xD800 && cp <= 0xDFFF) || cp > 0x10FFFF) {
    ++i;
    return kInvalidCp;
  }
  i += len;
  return cp;
}

void append_utf8(std::string& out, char32_t cp) {
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else if (cp < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
}

}  // namespace

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  std::size_t i = 0;
  while (i < text.size()) {
    const char32_t cp = decode_utf8(text, i);
    if (cp != kInvalidCp && is_alnum_cp(cp)) {
      append_utf8(current, lower_cp(cp));
    } else if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

std::optional<std::uint32_t> InvertedIndex::token_id(std::string_view token) const {
  auto it = std::lower_bound(tokens_.begin(), tokens_.end(), token);
  if (it == tokens_.end() || *it != token) return std::nullopt;
  return static_cast<std::uint32_t>(it - tokens_.begin());
}

InvertedIndex build_index(std::span<const std::span<const CaptionRecord>> shards, int workers) {
  std::vector<const CaptionRecord*> records;
  for (const auto& shard : shards) {
    for (const auto& rec : shard) records.push_back(&rec);
  }

  {
    std::vector<RecordId> ids;
    ids.reserve(records.size());
    for (const auto* rec : records) ids.push_back(rec->id);
    std::sort(ids.begin(), ids.end());
    auto dup = std::adjacent_find(ids.begin(), ids.end());
    if (dup != ids.end()) {
      fail(ErrorKind::DuplicateId, "record id " + std::to_string(*dup) + " appears twice");
    }
  }

  struct Local {
    std::unordered_map<std::string, std::size_t> ids;
    std::vector<std::vector<Posting>> postings;
  };
  const std::size_t n_workers =
      std::max<std::size_t>(1, std::min<std::size_t>(workers <= 0 ? 1 : workers,
                                                     std::max<std::size_t>(records.size(), 1)));
  std::vector<Local> locals(n_workers);
  const std::size_t per_worker = (records.size() + n_workers - 1) / n_workers;
  parallel_for(n_workers, static_cast<int>(n_workers), [&](std::size_t t) {
    Local& local = locals[t];
    const std::size_t begin = t * per_worker;
    const std::size_t end = std::min(records.size(), begin + per_worker);
    for (std::size_t r = begin; r < end; ++r) {
      const auto tokens = tokenize(records[r]->caption);
      for (std::uint32_t pos = 0; pos < tokens.size(); ++pos) {
        auto [it, inserted] = local.ids.emplace(tokens[pos], local.postings.size());
        if (inserted) local.postings.emplace_back();
        local.postings[it->second].push_back({records[r]->id, pos});
      }
    }
  });

  // Canonical token ids: lexicographic order of the merged vocabulary.
  std::vector<std::string> tokens;
  for (const auto& local : locals) {
    for (const auto& [text, id] : local.ids) tokens.push_back(text);
  }
  std::sort(tokens.begin(), tokens.end());
  tokens.erase(std::unique(tokens.begin(), tokens.end()), tokens.end());

  std::vector<std::vector<Posting>> postings(tokens.size());
  for (std::size_t gid = 0; gid < tokens.size(); ++gid) {
    for (auto& local : locals) {
      auto it = local.ids.find(tokens[gid]);
      if (it == local.ids.end()) continue;
      auto& src = local.postings[it->second];
      postings[gid].insert(postings[gid].end(), src.begin(), src.end());
      src.clear();
      src.shrink_to_fit();
    }
    std::sort(postings[gid].begin(), postings[gid].end());
  }

  InvertedIndex index;
  index.tokens_ = std::move(tokens);
  index.postings_ = std::move(postings);
  index.record_count_ = records.size();
  return index;
}

InvertedIndex build_index(const std::vector<CaptionRecord>& records, int workers) {
  const std::span<const CaptionRecord> shard(records.data(), records.size());
  return build_index(std::span<const std::span<const CaptionRecord>>(&shard, 1), workers);
}

std::vector<RecordId> phrase_search(const InvertedIndex& index, std::string_view phrase) {
  const auto tokens = tokenize(phrase);
  if (tokens.empty()) {
    fail(ErrorKind::EmptyQuery, "phrase \"" + std::string(phrase) + "\" has no tokens");
  }

  std::vector<std::span<const Posting>> lists;
  lists.reserve(tokens.size());
  for (const auto& token : tokens) {
    const auto id = index.token_id(token);
    if (!id) return {};
    lists.push_back(index.postings(*id));
  }

  std::vector<RecordId> result;
  if (lists.size() == 1) {
    for (const auto& p : lists[0]) {
      if (result.empty() || result.back() != p.record) result.push_back(p.record);
    }
    return result;
  }

  // Drive from the rarest token; each candidate position needs one binary
  // search per remaining token.
  std::size_t driver = 0;
  for (std::size_t i = 1; i < lists.size(); ++i) {
    if (lists[i].size() < lists[driver].size()) driver = i;
  }
  for (const auto& p : lists[driver]) {
    if (p.position < driver) continue;  // phrase would start before the caption
    const std::uint32_t start = p.position - static_cast<std::uint32_t>(driver);
    if (!result.empty() && result.back() == p.record) continue;
    bool all = true;
    for (std::size_t i = 0; i < lists.size() && all; ++i) {
      if (i == driver) continue;
      const Posting want{p.record, start + static_cast<std::uint32_t>(i)};
      all = std::binary_search(lists[i].begin(), lists[i].end(), want);
    }
    if (all) result.push_back(p.record);
  }
  return result;
}

std::uint64_t count_matches(const InvertedIndex& index, std::string_view phrase) {
  return phrase_search(index, phrase).size();
}

std::vector<QueryStat> query_stats(const InvertedIndex& index,
                                   std::span<const std::string> phrases) {
  std::vector<QueryStat> stats;
  stats.reserve(phrases.size());
  for (const auto& phrase : phrases) {
    QueryStat stat;
    stat.phrase = phrase;
    std::uint64_t min_posting = 0;
    bool first = true;
    for (const auto& token : tokenize(phrase)) {
      const auto id = index.token_id(token);
      const std::uint64_t len = id ? index.postings(*id).size() : 0;
      min_posting = first ? len : std::min(min_posting, len);
      first = false;
    }
    stat.min_posting = min_posting;
    try {
      const auto t0 = std::chrono::steady_clock::now();
      const auto hits = phrase_search(index, phrase);
      const auto t1 = std::chrono::steady_clock::now();
      stat.count = hits.size();
      stat.micros = std::chrono::duration<double, std::micro>(t1 - t0).count();
    } catch (const PipelineError& e) {
      stat.error = to_string(e.kind());
    }
    stats.push_back(std::move(stat));
  }
  return stats;
}

void write_query_stats(const std::vector<QueryStat>& stats, const std::filesystem::path& path) {
  auto out = detail::open_output(path, std::ios::out | std::ios::trunc);
  for (const auto& stat : stats) {
    nlohmann::json j;
    j["phrase"] = stat.phrase;
    if (stat.error) {
      j["error"] = *stat.error;
    } else {
      j["count"] = stat.count;
      j["min_posting"] = stat.min_posting;
      j["micros"] = stat.micros;
    }
    out << j.dump() << '\n';
  }
  if (!out) fail(ErrorKind::IoError, "write failed: " + path.string());
}

void save_index(const InvertedIndex& index, const std::filesystem::path& path) {
  auto out = detail::open_output(path, std::ios::out | std::ios::binary | std::ios::trunc);
  out.write(InvertedIndex::kMagic, 8);
  detail::put_u64le(out, index.record_count());
  detail::put_u64le(out, index.token_count());
  for (std::size_t id = 0; id < index.token_count(); ++id) {
    const auto& text = index.token_text(static_cast<std::uint32_t>(id));
    detail::put_u32le(out, static_cast<std::uint32_t>(text.size()));
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
  }
  for (std::size_t id = 0; id < index.token_count(); ++id) {
    const auto list = index.postings(static_cast<std::uint32_t>(id));
    detail::put_u64le(out, list.size());
    for (const auto& p : list) {
      detail::put_u64le(out, p.record);
      detail::put_u32le(out, p.position);
    }
  }
  if (!out) fail(ErrorKind::IoError, "write failed: " + path.string());
}

InvertedIndex load_index(const std::filesystem::path& path) {
  auto in = detail::open_input(path, std::ios::in | std::ios::binary);
  detail::ByteReader reader(in, path.string());
  char magic[8];
  reader.read(magic, 8);
  if (std::memcmp(magic, InvertedIndex::kMagic, 8) != 0) {
    fail(ErrorKind::MalformedHeader, path.string() + ": bad magic or unsupported version");
  }
  InvertedIndex index;
  index.record_count_ = reader.u64le();
  const std::uint64_t n_tokens = reader.u64le();
  index.tokens_.resize(n_tokens);
  for (auto& token : index.tokens_) {
    const std::uint32_t len = reader.u32le();
    token.resize(len);
    reader.read(token.data(), len);
  }
  index.postings_.resize(n_tokens);
  for (auto& list : index.postings_) {
    const std::uint64_t n = reader.u64le();
    list.resize(n);
    for (auto& p : list) {
      p.record = reader.u64le();
      p.position = reader.u32le();
    }
  }
  return index;
}

}  // namespace priming
