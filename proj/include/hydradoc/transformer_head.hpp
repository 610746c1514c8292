#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hydradoc/autodiff.hpp"
#include "hydradoc/layers.hpp"

namespace hydradoc {

// Attention window width tau in blocks, or GLOBAL (unrestricted).
class AttentionWindow {
 public:
  static AttentionWindow global() { return AttentionWindow(); }
  // Throws InvalidArgument for tau < 0.
  static AttentionWindow band(long long tau);
  // "global" or a nonnegative integer.
  static AttentionWindow parse(const std::string& text);

  bool is_global() const noexcept { return !tau_.has_value(); }
  std::size_t tau() const { return tau_.value(); }
  std::string to_string() const;

  friend bool operator==(const AttentionWindow&, const AttentionWindow&) = default;

 private:
  AttentionWindow() = default;
  std::optional<std::size_t> tau_;
};

// mask[i][j] = 1 iff 0 <= j - i <= tau; all ones for GLOBAL.
Matrix band_mask(std::size_t n, const AttentionWindow& window);
Matrix band_mask(std::size_t n, long long tau);

struct SelfAttentionParams {
  std::vector<ad::Parameter> query;  // per head: n_in x d_k
  std::vector<ad::Parameter> key;    // per head: n_in x d_k
  ad::Parameter output;              // (heads * n_in) x d_model

  SelfAttentionParams() = default;
  SelfAttentionParams(Eigen::Index n_in, std::size_t heads, Eigen::Index key_dim, Eigen::Index model_dim,
                      SeededRng& rng);

  std::size_t heads() const noexcept { return query.size(); }
  Eigen::Index key_dim() const { return query.front().value.cols(); }

  template <class F>
  void for_each_parameter(const std::string& prefix, F&& f) {
    for (std::size_t h = 0; h < query.size(); ++h) {
      f(prefix + ".q" + std::to_string(h), query[h]);
      f(prefix + ".k" + std::to_string(h), key[h]);
    }
    f(prefix + ".o", output);
  }
  template <class F>
  void for_each_parameter(const std::string& prefix, F&& f) const {
    for (std::size_t h = 0; h < query.size(); ++h) {
      f(prefix + ".q" + std::to_string(h), query[h]);
      f(prefix + ".k" + std::to_string(h), key[h]);
    }
    f(prefix + ".o", output);
  }
};

// Per head: softmax over row i of (H Q)(H K)^T / sqrt(d_k), restricted to keys j
// that are inside the window and not padding (others are filled with -1e9), then
// applied to the unprojected H. Heads are concatenated and projected by the
// output matrix. Padded output rows are zero. H: n x n_in -> n x d_model.
ad::Var masked_self_attention(ad::Tape& tape, const ad::Var& h, std::span<const std::uint8_t> pad_mask,
                              SelfAttentionParams& p, const AttentionWindow& window);
ad::Var masked_self_attention(ad::Tape& tape, const ad::Var& h, std::span<const std::uint8_t> pad_mask,
                              const SelfAttentionParams& p, const AttentionWindow& window);

struct TransformerConfig {
  Eigen::Index input_dim = 512;
  std::size_t heads = 3;
  Eigen::Index key_dim = 32;
  Eigen::Index dense = 20;
  double dropout = 0.1;
  Eigen::Index outputs = 1;  // >1: softmax over a label group
  AttentionWindow window = AttentionWindow::global();

  Eigen::Index model_dim() const { return static_cast<Eigen::Index>(heads) * key_dim; }

  friend bool operator==(const TransformerConfig&, const TransformerConfig&) = default;
};

// Self-attention (3 x 32) -> masked average pool -> ReLU -> dropout ->
// Dense(20, ReLU) -> dropout -> Dense(outputs, sigmoid | softmax).
class TransformerHead {
 public:
  TransformerHead(const TransformerConfig& cfg, std::uint64_t seed);

  const TransformerConfig& config() const noexcept { return cfg_; }
  // tau carries no parameters, so it can be changed on a trained head.
  void set_window(const AttentionWindow& w) { cfg_.window = w; }

  ad::Var forward(ad::Tape& tape, const ad::Var& features, std::span<const std::uint8_t> mask, bool training = false,
                  std::uint64_t seed = 0);
  ad::Var forward(ad::Tape& tape, const ad::Var& features, std::span<const std::uint8_t> mask, bool training = false,
                  std::uint64_t seed = 0) const;

  template <class F>
  void for_each_parameter(F&& f) {
    attention_.for_each_parameter("attention", f);
    dense_.for_each_parameter("dense", f);
    out_.for_each_parameter("out", f);
  }
  template <class F>
  void for_each_parameter(F&& f) const {
    attention_.for_each_parameter("attention", f);
    dense_.for_each_parameter("dense", f);
    out_.for_each_parameter("out", f);
  }

 private:
  template <class Self>
  static ad::Var forward_impl(Self& self, ad::Tape& tape, const ad::Var& features, std::span<const std::uint8_t> mask,
                              bool training, std::uint64_t seed);

  TransformerConfig cfg_;
  SelfAttentionParams attention_;
  Dense dense_;
  Dense out_;
};

}  // namespace hydradoc
