#include "docslm/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>
#include <unordered_set>

#include "docslm/format.hpp"
#include "docslm/jsonl.hpp"
#include "docslm/random.hpp"

namespace docslm {

std::string_view to_string(SourceKind kind) {
  switch (kind) {
    case SourceKind::illustration: return "illustration";
    case SourceKind::slide: return "slide";
    case SourceKind::spreadsheet: return "spreadsheet";
    case SourceKind::generated: return "generated";
  }
  return "generated";
}

std::optional<SourceKind> parse_source_kind(std::string_view name) {
  for (SourceKind k : {SourceKind::illustration, SourceKind::slide, SourceKind::spreadsheet,
                       SourceKind::generated}) {
    if (to_string(k) == name) return k;
  }
  return std::nullopt;
}

TokenSeq ChunkedDocument::flattened() const {
  TokenSeq out;
  out.reserve(static_cast<std::size_t>(total_tokens));
  for (const auto& chunk : chunks) out.insert(out.end(), chunk.begin(), chunk.end());
  return out;
}

ChunkedDocument chunk_tokens(std::string doc_id, std::span<const TokenId> tokens, int chunk_count,
                             int chunk_size) {
  if (chunk_count < 1) throw std::invalid_argument("chunk_count must be at least 1");
  if (chunk_size < 1) throw std::invalid_argument("chunk_size must be at least 1");
  ChunkedDocument cd;
  cd.doc_id = std::move(doc_id);
  cd.original_tokens = static_cast<std::int64_t>(tokens.size());
  const std::size_t cap = static_cast<std::size_t>(chunk_count) * static_cast<std::size_t>(chunk_size);
  const std::size_t kept = std::min(tokens.size(), cap);
  for (std::size_t begin = 0; begin < kept; begin += static_cast<std::size_t>(chunk_size)) {
    const std::size_t end = std::min(kept, begin + static_cast<std::size_t>(chunk_size));
    cd.chunks.emplace_back(tokens.begin() + static_cast<std::ptrdiff_t>(begin),
                           tokens.begin() + static_cast<std::ptrdiff_t>(end));
  }
  cd.total_tokens = static_cast<std::int64_t>(kept);
  return cd;
}

ChunkedDocument chunk_document(const Document& doc, const TokenizerInterface& tok, int chunk_count,
                               int chunk_size) {
  const TokenSeq tokens = tok.encode(doc.text);
  return chunk_tokens(doc.id, tokens, chunk_count, chunk_size);
}

TokenStats summarize_counts(std::span<const std::int64_t> counts, std::string_view empty_message) {
  if (counts.empty()) throw std::invalid_argument(std::string(empty_message));
  TokenStats s;
  s.count = static_cast<std::int64_t>(counts.size());
  s.min = *std::min_element(counts.begin(), counts.end());
  s.max = *std::max_element(counts.begin(), counts.end());
  double sum = 0.0;
  for (auto c : counts) sum += static_cast<double>(c);
  s.mean = sum / static_cast<double>(counts.size());
  double sq = 0.0;
  for (auto c : counts) {
    const double d = static_cast<double>(c) - s.mean;
    sq += d * d;
  }
  s.std = std::sqrt(sq / static_cast<double>(counts.size()));
  // Guard the documented ordering against rounding in the mean.
  s.mean = std::clamp(s.mean, static_cast<double>(s.min), static_cast<double>(s.max));
  return s;
}

TokenStats corpus_stats(std::span<const Document> docs, const TokenizerInterface& tok,
                        ProcessingStage stage, int chunk_count, int chunk_size) {
  if (docs.empty()) throw std::invalid_argument("empty corpus");
  std::vector<std::int64_t> counts;
  counts.reserve(docs.size());
  for (const auto& doc : docs) {
    if (stage == ProcessingStage::pre) {
      counts.push_back(static_cast<std::int64_t>(tok.encode(doc.text).size()));
    } else {
      counts.push_back(chunk_document(doc, tok, chunk_count, chunk_size).total_tokens);
    }
  }
  return summarize_counts(counts, "empty corpus");
}

// ---------------------------------------------------------------------------
// Synthetic corpus

namespace {

// Word inventory shared by every seed. Words whose fallback-tokenizer buckets
// would collide with an earlier word (bare or space-glued form) or with the
// punctuation the generator emits are skipped, so every emitted piece is one
// token under a fresh default FallbackTokenizer.
const std::vector<std::string>& synthetic_words() {
  static const std::vector<std::string> words = [] {
    static constexpr const char* kOnsets[] = {"b", "c", "d", "f", "g", "h", "j", "k", "l", "m",
                                              "n", "p", "r", "s", "t", "v", "w", "z", "st", "tr",
                                              "pl", "gr", "ch", "sh"};
    static constexpr const char* kVowels[] = {"a", "e", "i", "o", "u", "ai", "ou", "ea"};
    static constexpr const char* kCodas[] = {"", "n", "r", "s", "t", "l", "m", "x"};
    std::vector<std::string> syllables;
    for (const char* o : kOnsets)
      for (const char* v : kVowels)
        for (const char* c : kCodas) syllables.push_back(std::string(o) + v + c);

    std::unordered_set<std::uint64_t> used;
    const std::uint64_t buckets = FallbackTokenizer::kDefaultBuckets;
    for (const char* p : {".", ","}) used.insert(fnv1a64(p) % buckets);

    Rng rng(0x5eed);
    std::vector<std::string> out;
    std::set<std::string> seen;
    while (out.size() < 3000) {
      const std::size_t n_syll = 1 + rng.below(3);
      std::string w;
      for (std::size_t i = 0; i < n_syll; ++i) w += syllables[rng.below(syllables.size())];
      if (!seen.insert(w).second) continue;
      const std::uint64_t a = fnv1a64(w) % buckets;
      const std::uint64_t b = fnv1a64(" " + w) % buckets;
      if (a == b || used.count(a) || used.count(b)) continue;
      used.insert(a);
      used.insert(b);
      out.push_back(std::move(w));
    }
    return out;
  }();
  return words;
}

std::string synthetic_text(Rng& rng, std::int64_t n_tokens) {
  const auto& words = synthetic_words();
  std::string text;
  std::int64_t emitted = 0;
  std::int64_t sentence_len = 0;
  std::int64_t sentence_target = 4 + static_cast<std::int64_t>(rng.below(9));
  while (emitted < n_tokens) {
    if (sentence_len >= sentence_target) {
      text += rng.below(4) == 0 ? "," : ".";
      sentence_len = 0;
      sentence_target = 4 + static_cast<std::int64_t>(rng.below(9));
    } else {
      if (emitted > 0) text.push_back(' ');
      text += words[rng.below(words.size())];
      ++sentence_len;
    }
    ++emitted;
  }
  return text;
}

}  // namespace

std::vector<Document> generate_synthetic_corpus(std::uint64_t seed, int n_docs,
                                                const LengthDistribution& dist) {
  if (n_docs < 1) throw std::invalid_argument("n_docs must be at least 1");
  if (dist.min < 1) throw std::invalid_argument("length distribution min must be at least 1");
  if (dist.max < dist.min) throw std::invalid_argument("length distribution max is below min");
  if (!(dist.std >= 0.0) || !std::isfinite(dist.mean)) {
    throw std::invalid_argument("length distribution needs a finite mean and std >= 0");
  }
  static constexpr SourceKind kKinds[] = {SourceKind::illustration, SourceKind::slide,
                                          SourceKind::spreadsheet, SourceKind::generated};
  Rng rng(seed);
  std::vector<Document> docs;
  docs.reserve(static_cast<std::size_t>(n_docs));
  for (int i = 0; i < n_docs; ++i) {
    const double draw = std::round(rng.normal(dist.mean, dist.std));
    const auto length = static_cast<std::int64_t>(
        std::clamp(draw, static_cast<double>(dist.min), static_cast<double>(dist.max)));
    char id[64];
    std::snprintf(id, sizeof id, "doc-%llu-%06d", static_cast<unsigned long long>(seed), i);
    Document doc;
    doc.id = id;
    doc.source_kind = kKinds[rng.below(4)];
    doc.text = synthetic_text(rng, length);
    docs.push_back(std::move(doc));
  }
  return docs;
}

std::string format_token_stats_table(const TokenStats& pre, const TokenStats& post) {
  const auto row = [](const char* label, const TokenStats& s) {
    return std::vector<std::string>{
        label, with_commas(s.mean, 0) + " ± " + with_commas(s.std, 0),
        with_commas(static_cast<double>(s.min), 0) + " -- " +
            with_commas(static_cast<double>(s.max), 0)};
  };
  return render_table({{"Processing Stage", "Mean ± STD", "Token Range"},
                       row("Pre-processing", pre),
                       row("Post-processing", post)});
}

// ---------------------------------------------------------------------------
// Persistence

std::vector<Document> read_corpus(const std::filesystem::path& path) {
  std::vector<Document> docs;
  std::unordered_set<std::string> ids;
  for_each_jsonl(path, [&](const json& row, std::size_t line) {
    Document doc;
    doc.id = row.at("id").get<std::string>();
    doc.text = row.value("text", std::string{});
    const auto kind = parse_source_kind(row.value("source_kind", std::string("generated")));
    if (!kind) {
      throw std::runtime_error(path.string() + ":" + std::to_string(line) + ": unknown source_kind");
    }
    doc.source_kind = *kind;
    if (!ids.insert(doc.id).second) {
      throw std::runtime_error(path.string() + ":" + std::to_string(line) + ": duplicate id " + doc.id);
    }
    docs.push_back(std::move(doc));
  });
  return docs;
}

void write_corpus(const std::filesystem::path& path, std::span<const Document> docs) {
  std::vector<json> rows;
  rows.reserve(docs.size());
  for (const auto& doc : docs) {
    rows.push_back({{"id", doc.id}, {"text", doc.text}, {"source_kind", to_string(doc.source_kind)}});
  }
  write_jsonl(path, rows);
}

void write_chunked_corpus(const std::filesystem::path& path, std::span<const ChunkedDocument> docs,
                          const TokenizerInterface& tok) {
  std::vector<json> rows;
  rows.reserve(docs.size());
  for (const auto& cd : docs) {
    json texts = json::array();
    for (const auto& chunk : cd.chunks) texts.push_back(tok.decode(chunk));
    rows.push_back({{"doc_id", cd.doc_id},
                    {"chunks", cd.chunks},
                    {"chunk_texts", std::move(texts)},
                    {"total_tokens", cd.total_tokens},
                    {"original_tokens", cd.original_tokens}});
  }
  write_jsonl(path, rows);
}

std::vector<ChunkedRecord> read_chunked_corpus(const std::filesystem::path& path) {
  std::vector<ChunkedRecord> out;
  for_each_jsonl(path, [&](const json& row, std::size_t) {
    ChunkedRecord rec;
    rec.doc.doc_id = row.at("doc_id").get<std::string>();
    rec.doc.chunks = row.at("chunks").get<std::vector<TokenSeq>>();
    std::int64_t total = 0;
    for (const auto& c : rec.doc.chunks) total += static_cast<std::int64_t>(c.size());
    rec.doc.total_tokens = total;
    rec.doc.original_tokens = row.value("original_tokens", total);
    if (row.contains("chunk_texts")) {
      rec.chunk_texts = row.at("chunk_texts").get<std::vector<std::string>>();
    }
    out.push_back(std::move(rec));
  });
  return out;
}

}  // namespace docslm
