#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "docslm/text.hpp"

namespace docslm {

enum class SourceKind { illustration, slide, spreadsheet, generated };

std::string_view to_string(SourceKind kind);
std::optional<SourceKind> parse_source_kind(std::string_view name);

struct Document {
  std::string id;
  std::string text;
  SourceKind source_kind = SourceKind::generated;
};

// A document reduced to at most `chunk_count` chunks of at most `chunk_size`
// tokens each. Chunks concatenate to a prefix of the original encoding.
struct ChunkedDocument {
  std::string doc_id;
  std::vector<TokenSeq> chunks;
  std::int64_t total_tokens = 0;
  // Length of the full encoding before truncation.
  std::int64_t original_tokens = 0;

  bool truncated() const { return original_tokens > total_tokens; }
  TokenSeq flattened() const;
};

struct TokenStats {
  double mean = 0.0;
  double std = 0.0;  // population
  std::int64_t min = 0;
  std::int64_t max = 0;
  std::int64_t count = 0;
};

struct LengthDistribution {
  double mean = 879.0;
  double std = 252.0;
  std::int64_t min = 1;
  std::int64_t max = 1000;
};

enum class ProcessingStage { pre, post };

inline constexpr int kDefaultChunkCount = 5;
inline constexpr int kDefaultChunkSize = 200;

ChunkedDocument chunk_document(const Document& doc, const TokenizerInterface& tok,
                               int chunk_count = kDefaultChunkCount,
                               int chunk_size = kDefaultChunkSize);

ChunkedDocument chunk_tokens(std::string doc_id, std::span<const TokenId> tokens,
                             int chunk_count = kDefaultChunkCount,
                             int chunk_size = kDefaultChunkSize);

// Exact statistics over a non-empty list of counts. Throws std::invalid_argument
// with `empty_message` otherwise.
TokenStats summarize_counts(std::span<const std::int64_t> counts,
                            std::string_view empty_message = "empty input");

TokenStats corpus_stats(std::span<const Document> docs, const TokenizerInterface& tok,
                        ProcessingStage stage, int chunk_count = kDefaultChunkCount,
                        int chunk_size = kDefaultChunkSize);

// Deterministic word-like documents whose fallback-tokenizer lengths follow
// `dist` clipped to [min, max].
std::vector<Document> generate_synthetic_corpus(std::uint64_t seed, int n_docs,
                                                const LengthDistribution& dist);

// Table layout: "Processing Stage | Mean ± STD | Token Range".
std::string format_token_stats_table(const TokenStats& pre, const TokenStats& post);

// JSON-lines persistence.
std::vector<Document> read_corpus(const std::filesystem::path& path);
void write_corpus(const std::filesystem::path& path, std::span<const Document> docs);

// Each line carries the token ids plus the decoded chunk texts so that readers
// do not need the tokenizer instance that produced the ids.
struct ChunkedRecord {
  ChunkedDocument doc;
  std::vector<std::string> chunk_texts;
};

void write_chunked_corpus(const std::filesystem::path& path,
                          std::span<const ChunkedDocument> docs, const TokenizerInterface& tok);
std::vector<ChunkedRecord> read_chunked_corpus(const std::filesystem::path& path);

}  // namespace docslm
