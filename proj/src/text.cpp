#include "docslm/text.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <mutex>
#include <stdexcept>

namespace docslm {
namespace {

bool is_word_byte(unsigned char c) {
  return std::isalnum(c) != 0 || c == '_' || c >= 0x80;
}

bool is_space_byte(unsigned char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f';
}

void append_bytes(std::string_view piece, TokenSeq& out) {
  for (unsigned char c : piece) out.push_back(static_cast<TokenId>(c));
}

}  // namespace

std::vector<std::string_view> split_pieces(std::string_view text) {
  std::vector<std::string_view> pieces;
  const auto at = [&](std::size_t i) { return static_cast<unsigned char>(text[i]); };
  std::size_t i = 0;
  const std::size_t n = text.size();
  while (i < n) {
    const std::size_t start = i;
    if (at(i) == ' ' && i + 1 < n && is_word_byte(at(i + 1))) {
      ++i;
      while (i < n && is_word_byte(at(i))) ++i;
    } else if (is_word_byte(at(i))) {
      while (i < n && is_word_byte(at(i))) ++i;
    } else if (is_space_byte(at(i))) {
      while (i < n && is_space_byte(at(i))) {
        // Leave a final ' ' to be glued onto the following word.
        if (at(i) == ' ' && i + 1 < n && is_word_byte(at(i + 1)) && i > start) break;
        ++i;
      }
    } else {
      ++i;
    }
    pieces.push_back(text.substr(start, i - start));
  }
  return pieces;
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// ---------------------------------------------------------------------------

FallbackTokenizer::FallbackTokenizer(std::size_t buckets) : buckets_(buckets) {
  if (buckets_ == 0) throw std::invalid_argument("tokenizer bucket count must be positive");
  if (kByteIds + buckets_ > static_cast<std::size_t>(INT32_MAX)) {
    throw std::invalid_argument("tokenizer bucket count exceeds the token id range");
  }
}

TokenSeq FallbackTokenizer::encode(std::string_view text) const {
  TokenSeq out;
  out.reserve(text.size() / 4 + 1);
  for (std::string_view piece : split_pieces(text)) {
    const auto id = static_cast<TokenId>(kByteIds + fnv1a64(piece) % buckets_);
    {
      std::shared_lock lock(mutex_);
      auto it = owners_.find(id);
      if (it != owners_.end()) {
        if (it->second == piece) {
          out.push_back(id);
        } else {
          append_bytes(piece, out);
        }
        continue;
      }
    }
    std::unique_lock lock(mutex_);
    auto [it, inserted] = owners_.try_emplace(id, piece);
    if (inserted || it->second == piece) {
      out.push_back(id);
    } else {
      append_bytes(piece, out);
    }
  }
  return out;
}

std::string FallbackTokenizer::decode(std::span<const TokenId> tokens) const {
  std::string out;
  std::shared_lock lock(mutex_);
  for (TokenId id : tokens) {
    if (id >= 0 && static_cast<std::size_t>(id) < kByteIds) {
      out.push_back(static_cast<char>(id));
      continue;
    }
    auto it = owners_.find(id);
    if (it == owners_.end()) {
      throw std::out_of_range("unknown token id " + std::to_string(id));
    }
    out += it->second;
  }
  return out;
}

// ---------------------------------------------------------------------------

VocabTokenizer::VocabTokenizer(std::vector<std::string> pieces) : pieces_(std::move(pieces)) {
  index_.reserve(pieces_.size());
  for (std::size_t i = 0; i < pieces_.size(); ++i) {
    if (pieces_[i].empty()) throw std::invalid_argument("vocabulary contains an empty piece");
    auto [it, inserted] =
        index_.emplace(pieces_[i], static_cast<TokenId>(kFirstPiece + static_cast<TokenId>(i)));
    if (!inserted) throw std::invalid_argument("duplicate vocabulary piece '" + pieces_[i] + "'");
  }
}

VocabTokenizer VocabTokenizer::build(std::span<const std::string> texts, std::size_t max_pieces,
                                     std::size_t min_count) {
  std::map<std::string, std::size_t, std::less<>> counts;
  for (const auto& text : texts) {
    for (std::string_view piece : split_pieces(text)) {
      // Single bytes are already covered by the byte ids.
      if (piece.size() < 2) continue;
      auto it = counts.find(piece);
      if (it == counts.end()) {
        counts.emplace(std::string(piece), 1);
      } else {
        ++it->second;
      }
    }
  }
  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> pieces;
  for (auto& [piece, count] : ranked) {
    if (pieces.size() >= max_pieces || count < min_count) break;
    pieces.push_back(piece);
  }
  return VocabTokenizer(std::move(pieces));
}

TokenSeq VocabTokenizer::encode(std::string_view text) const {
  TokenSeq out;
  out.reserve(text.size() / 4 + 1);
  std::string key;
  for (std::string_view piece : split_pieces(text)) {
    key.assign(piece);
    auto it = index_.find(key);
    if (it != index_.end()) {
      out.push_back(it->second);
    } else {
      append_bytes(piece, out);
    }
  }
  return out;
}

std::string VocabTokenizer::decode(std::span<const TokenId> tokens) const {
  std::string out;
  for (TokenId id : tokens) {
    if (id >= 0 && id < 256) {
      out.push_back(static_cast<char>(id));
    } else if (id == kEos) {
      continue;
    } else if (id >= kFirstPiece && static_cast<std::size_t>(id - kFirstPiece) < pieces_.size()) {
      out += pieces_[static_cast<std::size_t>(id - kFirstPiece)];
    } else {
      throw std::out_of_range("unknown token id " + std::to_string(id));
    }
  }
  return out;
}

nlohmann::json VocabTokenizer::to_json() const {
  return nlohmann::json{{"kind", "vocab"}, {"pieces", pieces_}};
}

VocabTokenizer VocabTokenizer::from_json(const nlohmann::json& j) {
  if (j.value("kind", std::string{}) != "vocab") {
    throw std::invalid_argument("not a vocab tokenizer description");
  }
  return VocabTokenizer(j.at("pieces").get<std::vector<std::string>>());
}

std::unique_ptr<TokenizerInterface> make_tokenizer(std::string_view spec) {
  if (spec == "fallback" || spec.empty()) return std::make_unique<FallbackTokenizer>();
  constexpr std::string_view kVocabPrefix = "vocab:";
  if (spec.starts_with(kVocabPrefix)) {
    const std::string path(spec.substr(kVocabPrefix.size()));
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open tokenizer file " + path);
    return std::make_unique<VocabTokenizer>(VocabTokenizer::from_json(nlohmann::json::parse(in)));
  }
  throw std::invalid_argument("tokenizer '" + std::string(spec) +
                              "' is not available (use 'fallback' or 'vocab:<path>')");
}

std::vector<std::string> metric_tokens(std::string_view text) {
  std::vector<std::string> out;
  std::string current;
  for (unsigned char c : text) {
    if (is_space_byte(c)) {
      if (!current.empty()) out.push_back(std::move(current));
      current.clear();
    } else {
      current.push_back(static_cast<char>(std::tolower(c)));
    }
  }
  if (!current.empty()) out.push_back(std::move(current));
  return out;
}

std::size_t count_words(std::string_view text) {
  std::size_t words = 0;
  bool in_word = false;
  for (unsigned char c : text) {
    if (is_space_byte(c)) {
      in_word = false;
    } else if (!in_word) {
      in_word = true;
      ++words;
    }
  }
  return words;
}

}  // namespace docslm
