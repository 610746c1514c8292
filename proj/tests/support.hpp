#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "hydradoc/corpus.hpp"
#include "hydradoc/hydranet.hpp"
#include "hydradoc/layers.hpp"
#include "hydradoc/utf8.hpp"

namespace hydradoc::testing {

inline Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed, double scale = 1.0) {
  SeededRng rng(seed);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = scale * rng.uniform(-1.0, 1.0);
  return m;
}

// Features with the first `valid` rows random and the rest zero, plus the mask.
inline EncodedDocument random_document(Eigen::Index rows, Eigen::Index cols, Eigen::Index valid, std::uint64_t seed) {
  EncodedDocument d{random_matrix(rows, cols, seed), std::vector<std::uint8_t>(static_cast<std::size_t>(rows), 0)};
  d.features.bottomRows(rows - valid).setZero();
  for (Eigen::Index i = 0; i < valid; ++i) d.mask[static_cast<std::size_t>(i)] = 1;
  return d;
}

inline std::vector<KeywordClass> keyword_classes() {
  return {
      {"politics", {"election", "minister", "parliament", "vote", "government", "policy", "campaign", "senate"}},
      {"sports", {"football", "match", "goal", "coach", "league", "injury", "season", "tournament"}},
      {"business", {"market", "shares", "profit", "investor", "economy", "bank", "revenue", "merger"}},
      {"tech", {"software", "internet", "computer", "digital", "mobile", "network", "broadband", "gadget"}},
  };
}

// The first n characters of a UTF-8 string.
inline std::string prefix_chars(const std::string& text, std::size_t n) {
  std::u32string cps = utf8::decode(text);
  if (cps.size() > n) cps.resize(n);
  return utf8::encode(cps);
}

class TempDir {
 public:
  TempDir() {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("hydradoc-test-" + std::to_string(rd()) + std::to_string(rd()));
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

}  // namespace hydradoc::testing
