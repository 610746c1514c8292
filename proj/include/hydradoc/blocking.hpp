#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "hydradoc/tensor.hpp"

namespace hydradoc {

// Block size s_b and maximum document length L, both in unicode characters.
// Capacity n_b = ceil(L / s_b).
class BlockingConfig {
 public:
  static constexpr std::size_t kDefaultBlockSize = 100;
  static constexpr std::size_t kDefaultMaxDocChars = 5000;

  BlockingConfig() : BlockingConfig(kDefaultBlockSize, kDefaultMaxDocChars) {}
  BlockingConfig(std::size_t block_size_chars, std::size_t max_doc_chars);

  std::size_t block_size() const noexcept { return block_size_; }
  std::size_t max_doc_chars() const noexcept { return max_doc_chars_; }
  std::size_t capacity() const noexcept { return capacity_; }

  friend bool operator==(const BlockingConfig&, const BlockingConfig&) = default;

 private:
  std::size_t block_size_;
  std::size_t max_doc_chars_;
  std::size_t capacity_;
};

// A document as exactly n_b blocks. Non-empty blocks form a prefix; the rest are
// empty-string padding with mask 0.
struct BlockedDocument {
  std::vector<std::string> blocks;
  std::vector<std::uint8_t> mask;
  std::size_t block_size = BlockingConfig::kDefaultBlockSize;

  std::size_t capacity() const noexcept { return blocks.size(); }
  std::size_t valid_blocks() const noexcept;
  // Character offset of block i in the (truncated) source text.
  std::size_t char_offset(std::size_t i) const noexcept { return i * block_size; }
};

BlockedDocument segment(std::string_view text, const BlockingConfig& cfg);

// Keeps the first `keep` non-empty blocks and pads the remainder.
BlockedDocument truncate_blocks(const BlockedDocument& doc, std::size_t keep);

// Rows of valid blocks are all ones, padded rows all zeros.
FeatureMatrix mask_matrix(const BlockedDocument& doc, std::size_t n_d);

// X (.) X_m. Throws ShapeError on mismatched shapes.
FeatureMatrix apply_mask(const FeatureMatrix& features, const FeatureMatrix& mask);

}  // namespace hydradoc
