#pragma once

#include <filesystem>
#include <string>

#include "docslm/random.hpp"

namespace docslm::testing {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    Rng rng(static_cast<std::uint64_t>(std::hash<std::string>{}(tag)) ^
            static_cast<std::uint64_t>(reinterpret_cast<std::uintptr_t>(this)));
    path_ = std::filesystem::temp_directory_path() / ("docslm_" + tag + "_" + std::to_string(rng.next_u64() % 1000000007));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline std::string random_bytes(Rng& rng, std::size_t max_len) {
  std::string s(static_cast<std::size_t>(rng.below(max_len + 1)), '\0');
  for (auto& c : s) c = static_cast<char>(rng.below(256));
  return s;
}

// Lowercase words drawn from a small alphabet so that n-grams repeat.
inline std::string random_words(Rng& rng, std::size_t max_words, std::size_t alphabet = 6) {
  std::string s;
  const std::size_t n = static_cast<std::size_t>(rng.below(max_words + 1));
  for (std::size_t i = 0; i < n; ++i) {
    if (i > 0) s += rng.below(5) == 0 ? "  " : " ";
    s += static_cast<char>('a' + rng.below(alphabet));
    if (rng.below(3) == 0) s += static_cast<char>('a' + rng.below(alphabet));
  }
  return s;
}

}  // namespace docslm::testing
