#pragma once

// Brute-force reference implementations of the n-gram metrics, written
// directly from their definitions and sharing no code with the library.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <string>
#include <vector>

namespace docslm::oracle {

using Tokens = std::vector<std::string>;

inline Tokens tokenize(const std::string& text) {
  Tokens out;
  std::string cur;
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else {
      cur += static_cast<char>(std::tolower(c));
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

inline bool gram_at(const Tokens& t, std::size_t i, const Tokens& other, std::size_t j, std::size_t n) {
  for (std::size_t k = 0; k < n; ++k) {
    if (t[i + k] != other[j + k]) return false;
  }
  return true;
}

inline std::size_t occurrences(const Tokens& hay, const Tokens& needle_src, std::size_t at, std::size_t n) {
  std::size_t c = 0;
  for (std::size_t j = 0; j + n <= hay.size(); ++j) c += gram_at(needle_src, at, hay, j, n) ? 1 : 0;
  return c;
}

// Sum over distinct candidate n-grams of min(count in candidate, max count in any reference).
inline std::size_t clipped_matches(const Tokens& cand, const std::vector<Tokens>& refs, std::size_t n) {
  std::size_t total = 0;
  for (std::size_t i = 0; i + n <= cand.size(); ++i) {
    bool first = true;
    for (std::size_t p = 0; p < i; ++p) {
      if (gram_at(cand, p, cand, i, n)) first = false;
    }
    if (!first) continue;
    std::size_t best = 0;
    for (const auto& r : refs) best = std::max(best, occurrences(r, cand, i, n));
    total += std::min(occurrences(cand, cand, i, n), best);
  }
  return total;
}

inline double bleu(const std::string& candidate, const std::vector<std::string>& references, int max_n = 4) {
  const Tokens c = tokenize(candidate);
  std::vector<Tokens> refs;
  for (const auto& r : references) refs.push_back(tokenize(r));
  if (c.empty() || refs.empty()) return 0.0;
  double product = 1.0;
  for (int n = 1; n <= max_n; ++n) {
    const std::size_t un = static_cast<std::size_t>(n);
    const double total = c.size() >= un ? static_cast<double>(c.size() - un + 1) : 0.0;
    const auto m = static_cast<double>(clipped_matches(c, refs, un));
    if (m == 0.0 && n == 1) return 0.0;
    product *= m > 0.0 ? m / total : 1.0 / (total + 1.0);
  }
  // Closest reference length, shorter on ties.
  std::size_t r = refs[0].size();
  for (const auto& ref : refs) {
    const auto d = [&](std::size_t len) { return len > c.size() ? len - c.size() : c.size() - len; };
    if (d(ref.size()) < d(r) || (d(ref.size()) == d(r) && ref.size() < r)) r = ref.size();
  }
  const double bp = c.size() < r ? std::exp(1.0 - static_cast<double>(r) / static_cast<double>(c.size())) : 1.0;
  return bp * std::pow(product, 1.0 / max_n);
}

inline double f1(double overlap, double cand_total, double ref_total) {
  if (overlap == 0.0) return 0.0;
  const double p = overlap / cand_total;
  const double r = overlap / ref_total;
  return 2.0 * p * r / (p + r);
}

inline double rouge_n(const std::string& candidate, const std::string& reference, std::size_t n) {
  const Tokens c = tokenize(candidate);
  const Tokens r = tokenize(reference);
  if (c.empty() || r.empty()) return 0.0;
  const std::size_t ct = c.size() >= n ? c.size() - n + 1 : 0;
  const std::size_t rt = r.size() >= n ? r.size() - n + 1 : 0;
  if (ct == 0 && rt == 0) return c == r ? 1.0 : 0.0;
  if (ct == 0 || rt == 0) return 0.0;
  return f1(static_cast<double>(clipped_matches(c, {r}, n)), static_cast<double>(ct), static_cast<double>(rt));
}

inline bool is_subsequence(const Tokens& sub, const Tokens& seq) {
  std::size_t j = 0;
  for (const auto& t : seq) {
    if (j < sub.size() && sub[j] == t) ++j;
  }
  return j == sub.size();
}

// Enumerates every subsequence of the shorter side; meant for short inputs.
inline std::size_t lcs_length(const Tokens& a, const Tokens& b) {
  const Tokens& s = a.size() <= b.size() ? a : b;
  const Tokens& l = a.size() <= b.size() ? b : a;
  std::size_t best = 0;
  for (std::size_t mask = 0; mask < (std::size_t{1} << s.size()); ++mask) {
    Tokens sub;
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (mask & (std::size_t{1} << i)) sub.push_back(s[i]);
    }
    if (sub.size() > best && is_subsequence(sub, l)) best = sub.size();
  }
  return best;
}

inline double rouge_l(const std::string& candidate, const std::string& reference) {
  const Tokens c = tokenize(candidate);
  const Tokens r = tokenize(reference);
  if (c.empty() || r.empty()) return 0.0;
  return f1(static_cast<double>(lcs_length(c, r)), static_cast<double>(c.size()), static_cast<double>(r.size()));
}

}  // namespace docslm::oracle
