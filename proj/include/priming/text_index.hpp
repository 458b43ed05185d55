#pragma once

#include "priming/types.hpp"

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace priming {

/// Lowercases (Unicode simple mappings) and splits into maximal runs of
/// alphanumeric code points; everything else separates. Invalid UTF-8 bytes
/// act as separators.
std::vector<std::string> tokenize(std::string_view text);

struct Posting {
  RecordId record;
  std::uint32_t position;  // 0-based token offset within the caption

  friend bool operator==(const Posting&, const Posting&) = default;
  friend auto operator<=>(const Posting&, const Posting&) = default;
};

/// Positional inverted index over caption tokens. Immutable once built; token
/// ids are assigned in lexicographic token order so the index is canonical for
/// a given corpus no matter how the build was partitioned.
class InvertedIndex {
 public:
  static constexpr char kMagic[8] = {'N', 'P', 'I', 'D', 'X', '0', '0', '1'};

  std::uint64_t record_count() const { return record_count_; }
  std::size_t token_count() const { return tokens_.size(); }
  const std::string& token_text(std::uint32_t id) const { return tokens_[id]; }
  std::optional<std::uint32_t> token_id(std::string_view token) const;
  std::span<const Posting> postings(std::uint32_t id) const { return postings_[id]; }

 private:
  std::vector<std::string> tokens_;            // sorted; index == token id
  std::vector<std::vector<Posting>> postings_; // each sorted by (record, position)
  std::uint64_t record_count_ = 0;

  friend InvertedIndex build_index(std::span<const std::span<const CaptionRecord>>, int);
  friend InvertedIndex load_index(const std::filesystem::path&);
};

InvertedIndex build_index(std::span<const std::span<const CaptionRecord>> shards,
                          int workers = 1);
InvertedIndex build_index(const std::vector<CaptionRecord>& records, int workers = 1);

/// Record ids whose captions contain the phrase's tokens consecutively and in
/// order, sorted ascending. Fails with EmptyQuery when the phrase has no tokens.
std::vector<RecordId> phrase_search(const InvertedIndex& index, std::string_view phrase);

std::uint64_t count_matches(const InvertedIndex& index, std::string_view phrase);

struct QueryStat {
  std::string phrase;
  std::uint64_t count = 0;
  std::uint64_t min_posting = 0;  // smallest posting-list length among the tokens
  double micros = 0.0;            // phrase_search wall clock
  std::optional<std::string> error;
};

std::vector<QueryStat> query_stats(const InvertedIndex& index,
                                   std::span<const std::string> phrases);

/// Line-delimited {"phrase","count","min_posting","micros"}; errored phrases
/// emit {"phrase","error"} instead.
void write_query_stats(const std::vector<QueryStat>& stats, const std::filesystem::path& path);

void save_index(const InvertedIndex& index, const std::filesystem::path& path);
InvertedIndex load_index(const std::filesystem::path& path);

}  // namespace priming
