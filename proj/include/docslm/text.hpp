#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <shared_mutex>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

namespace docslm {

using TokenId = std::int32_t;
using TokenSeq = std::vector<TokenId>;

// Abstract tokenizer. Implementations must be deterministic and safe to call
// concurrently.
class TokenizerInterface {
 public:
  virtual ~TokenizerInterface() = default;

  virtual TokenSeq encode(std::string_view text) const = 0;
  virtual std::string decode(std::span<const TokenId> tokens) const = 0;
  virtual std::size_t vocab_size() const = 0;
  virtual std::string name() const = 0;

  std::size_t count(std::string_view text) const { return encode(text).size(); }
};

// Splits text into pieces whose concatenation is the input:
//   - a run of word bytes ([A-Za-z0-9_] or any byte >= 0x80), optionally
//     preceded by exactly one ' ' that is glued to it,
//   - a run of whitespace not consumed as a glued space,
//   - any other byte on its own.
// Re-splitting any concatenation of a prefix of the pieces yields the same
// prefix pieces.
std::vector<std::string_view> split_pieces(std::string_view text);

std::uint64_t fnv1a64(std::string_view bytes);

// Deterministic built-in tokenizer. Piece ids are FNV-1a buckets offset past
// the 256 raw-byte ids. Each instance remembers the piece that owns a bucket so
// that decode is exact; a piece whose bucket is owned by a different piece is
// spelled out as raw byte ids instead.
class FallbackTokenizer final : public TokenizerInterface {
 public:
  static constexpr std::size_t kByteIds = 256;
  static constexpr std::size_t kDefaultBuckets = std::size_t{1} << 20;

  explicit FallbackTokenizer(std::size_t buckets = kDefaultBuckets);

  TokenSeq encode(std::string_view text) const override;
  std::string decode(std::span<const TokenId> tokens) const override;
  std::size_t vocab_size() const override { return kByteIds + buckets_; }
  std::string name() const override { return "fallback"; }

 private:
  std::size_t buckets_;
  mutable std::shared_mutex mutex_;
  mutable std::unordered_map<TokenId, std::string> owners_;
};

// Closed-vocabulary tokenizer for the model: ids 0..255 are raw bytes, 256 is
// the end-of-sequence marker, and the rest are frequent pieces learned from a
// text sample. Immutable after construction.
class VocabTokenizer final : public TokenizerInterface {
 public:
  static constexpr TokenId kEos = 256;
  static constexpr TokenId kFirstPiece = 257;

  explicit VocabTokenizer(std::vector<std::string> pieces);

  static VocabTokenizer build(std::span<const std::string> texts,
                              std::size_t max_pieces = 4096,
                              std::size_t min_count = 1);

  TokenSeq encode(std::string_view text) const override;
  // EOS decodes to nothing.
  std::string decode(std::span<const TokenId> tokens) const override;
  std::size_t vocab_size() const override { return kFirstPiece + pieces_.size(); }
  std::string name() const override { return "vocab"; }

  const std::vector<std::string>& pieces() const { return pieces_; }

  nlohmann::json to_json() const;
  static VocabTokenizer from_json(const nlohmann::json& j);

 private:
  std::vector<std::string> pieces_;
  std::unordered_map<std::string, TokenId> index_;
};

// "fallback" or "vocab:<path to JSON>". Anything else throws.
std::unique_ptr<TokenizerInterface> make_tokenizer(std::string_view spec);

// Lowercased whitespace split used by the n-gram metrics.
std::vector<std::string> metric_tokens(std::string_view text);

std::size_t count_words(std::string_view text);

}  // namespace docslm
