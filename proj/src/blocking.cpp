#include "hydradoc/blocking.hpp"

#include <algorithm>

#include "hydradoc/error.hpp"
#include "hydradoc/utf8.hpp"

namespace hydradoc {

BlockingConfig::BlockingConfig(std::size_t block_size_chars, std::size_t max_doc_chars)
    : block_size_(block_size_chars), max_doc_chars_(max_doc_chars), capacity_(0) {
  if (block_size_ < 1) throw InvalidArgument("block size must be >= 1");
  if (max_doc_chars_ < block_size_) throw InvalidArgument("max document length must be >= block size");
  capacity_ = (max_doc_chars_ + block_size_ - 1) / block_size_;
}

std::size_t BlockedDocument::valid_blocks() const noexcept {
  return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), std::uint8_t{1}));
}

BlockedDocument segment(std::string_view text, const BlockingConfig& cfg) {
  std::u32string chars = utf8::decode(text);
  if (chars.size() > cfg.max_doc_chars()) chars.resize(cfg.max_doc_chars());

  BlockedDocument doc;
  doc.block_size = cfg.block_size();
  doc.blocks.reserve(cfg.capacity());
  doc.mask.reserve(cfg.capacity());
  for (std::size_t start = 0; start < chars.size(); start += cfg.block_size()) {
    const std::size_t len = std::min(cfg.block_size(), chars.size() - start);
    doc.blocks.push_back(utf8::encode(std::u32string_view(chars).substr(start, len)));
    doc.mask.push_back(1);
  }
  doc.blocks.resize(cfg.capacity());
  doc.mask.resize(cfg.capacity(), 0);
  return doc;
}

BlockedDocument truncate_blocks(const BlockedDocument& doc, std::size_t keep) {
  BlockedDocument out = doc;
  for (std::size_t i = std::min(keep, doc.capacity()); i < doc.capacity(); ++i) {
    out.blocks[i].clear();
    out.mask[i] = 0;
  }
  return out;
}

FeatureMatrix mask_matrix(const BlockedDocument& doc, std::size_t n_d) {
  if (n_d < 1) throw InvalidArgument("mask width must be >= 1");
  FeatureMatrix m(static_cast<Eigen::Index>(doc.capacity()), static_cast<Eigen::Index>(n_d));
  for (std::size_t i = 0; i < doc.capacity(); ++i) {
    m.row(static_cast<Eigen::Index>(i)).setConstant(doc.mask[i] ? 1.0f : 0.0f);
  }
  return m;
}

FeatureMatrix apply_mask(const FeatureMatrix& features, const FeatureMatrix& mask) {
  if (features.rows() != mask.rows() || features.cols() != mask.cols()) {
    throw ShapeError("apply_mask: feature matrix and mask differ in shape");
  }
  // select() rather than a product so masked entries are +0.0, never -0.0.
  return (mask.array() != 0.0f).select(features, 0.0f);
}

}  // namespace hydradoc
