#include "hydradoc/transformer_head.hpp"

#include <cmath>

#include "hydradoc/bilstm_head.hpp"
#include "hydradoc/error.hpp"

namespace hydradoc {

AttentionWindow AttentionWindow::band(long long tau) {
  if (tau < 0) throw InvalidArgument("attention window must be >= 0, got " + std::to_string(tau));
  AttentionWindow w;
  w.tau_ = static_cast<std::size_t>(tau);
  return w;
}

AttentionWindow AttentionWindow::parse(const std::string& text) {
  if (text == "global" || text == "GLOBAL") return global();
  std::size_t used = 0;
  long long tau = 0;
  try {
    tau = std::stoll(text, &used);
  } catch (const std::exception&) {
    throw InvalidArgument("attention window must be 'global' or an integer: '" + text + "'");
  }
  if (used != text.size()) throw InvalidArgument("attention window must be 'global' or an integer: '" + text + "'");
  return band(tau);
}

std::string AttentionWindow::to_string() const { return is_global() ? "global" : std::to_string(*tau_); }

Matrix band_mask(std::size_t n, const AttentionWindow& window) {
  if (n < 1) throw InvalidArgument("band_mask: n must be >= 1");
  const auto size = static_cast<Eigen::Index>(n);
  if (window.is_global()) return Matrix::Ones(size, size);
  Matrix m = Matrix::Zero(size, size);
  const auto tau = static_cast<Eigen::Index>(window.tau());
  for (Eigen::Index i = 0; i < size; ++i) {
    for (Eigen::Index j = i; j < size && j - i <= tau; ++j) m(i, j) = 1.0;
  }
  return m;
}

Matrix band_mask(std::size_t n, long long tau) { return band_mask(n, AttentionWindow::band(tau)); }

SelfAttentionParams::SelfAttentionParams(Eigen::Index n_in, std::size_t heads, Eigen::Index key_dim,
                                         Eigen::Index model_dim, SeededRng& rng) {
  for (std::size_t h = 0; h < heads; ++h) {
    query.emplace_back(glorot_uniform(n_in, key_dim, rng));
    key.emplace_back(glorot_uniform(n_in, key_dim, rng));
  }
  output = ad::Parameter(glorot_uniform(static_cast<Eigen::Index>(heads) * n_in, model_dim, rng));
}

namespace {

template <class P>
ad::Var masked_self_attention_impl(ad::Tape& tape, const ad::Var& h, std::span<const std::uint8_t> pad_mask, P& p,
                                   const AttentionWindow& window) {
  const Eigen::Index n = h.rows();
  if (static_cast<Eigen::Index>(pad_mask.size()) != n) throw ShapeError("self-attention: mask length mismatch");
  if (p.heads() == 0) throw ShapeError("self-attention: no heads");
  if (h.cols() * static_cast<Eigen::Index>(p.heads()) != p.output.value.rows()) {
    throw ShapeError("self-attention: input width does not match the output projection");
  }

  Matrix allowed = band_mask(static_cast<std::size_t>(n), window);
  Matrix row_mask(n, 1);
  for (Eigen::Index j = 0; j < n; ++j) {
    row_mask(j, 0) = pad_mask[static_cast<std::size_t>(j)] ? 1.0 : 0.0;
    if (!pad_mask[static_cast<std::size_t>(j)]) allowed.col(j).setZero();
  }

  const double scale = 1.0 / std::sqrt(static_cast<double>(p.key_dim()));
  std::vector<ad::Var> contexts;
  contexts.reserve(p.heads());
  for (std::size_t k = 0; k < p.heads(); ++k) {
    ad::Var q = ad::matmul(h, tape.parameter(p.query[k]));
    ad::Var key = ad::matmul(h, tape.parameter(p.key[k]));
    ad::Var scores = ad::affine(ad::matmul(q, ad::transpose(key)), scale);
    // Fully masked rows become uniform; they belong to padded queries and are
    // zeroed below.
    ad::Var weights = ad::softmax(ad::masked_fill(scores, allowed, -1e9), ad::Axis::Cols);
    contexts.push_back(ad::matmul(weights, h));
  }
  ad::Var projected = ad::matmul(ad::concat_cols(contexts), tape.parameter(p.output));
  if (row_mask.minCoeff() == 1.0) return projected;
  Matrix keep = row_mask.replicate(1, projected.cols());
  return ad::mul(projected, tape.constant(std::move(keep)));
}

}  // namespace

ad::Var masked_self_attention(ad::Tape& tape, const ad::Var& h, std::span<const std::uint8_t> pad_mask,
                              SelfAttentionParams& p, const AttentionWindow& window) {
  return masked_self_attention_impl(tape, h, pad_mask, p, window);
}

ad::Var masked_self_attention(ad::Tape& tape, const ad::Var& h, std::span<const std::uint8_t> pad_mask,
                              const SelfAttentionParams& p, const AttentionWindow& window) {
  return masked_self_attention_impl(tape, h, pad_mask, p, window);
}

TransformerHead::TransformerHead(const TransformerConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  if (cfg.input_dim < 1 || cfg.heads < 1 || cfg.key_dim < 1 || cfg.dense < 1 || cfg.outputs < 1) {
    throw InvalidArgument("transformer head dimensions must be positive");
  }
  if (!(cfg.dropout >= 0.0 && cfg.dropout < 1.0)) throw InvalidArgument("dropout must lie in [0, 1)");
  SeededRng rng(seed);
  attention_ = SelfAttentionParams(cfg.input_dim, cfg.heads, cfg.key_dim, cfg.model_dim(), rng);
  dense_ = Dense(cfg.model_dim(), cfg.dense, Activation::Relu, rng);
  out_ = Dense(cfg.dense, cfg.outputs, cfg.outputs == 1 ? Activation::Sigmoid : Activation::Softmax, rng);
}

template <class Self>
ad::Var TransformerHead::forward_impl(Self& self, ad::Tape& tape, const ad::Var& features,
                                      std::span<const std::uint8_t> mask, bool training, std::uint64_t seed) {
  if (features.cols() != self.cfg_.input_dim) throw ShapeError("transformer head: feature width mismatch");
  if (static_cast<Eigen::Index>(mask.size()) != features.rows()) {
    throw ShapeError("transformer head: mask length mismatch");
  }
  const std::size_t n = prefix_length(mask);
  if (n == 0) throw InvalidArgument("transformer head: document has no content blocks");

  // Padded keys are never attended to and padded rows are excluded from the
  // pool, so evaluating the valid prefix alone gives the same result.
  ad::Var x = n == mask.size() ? features : ad::slice_rows(features, 0, static_cast<Eigen::Index>(n));
  const std::vector<std::uint8_t> valid(n, 1);
  ad::Var attended = masked_self_attention(tape, x, valid, self.attention_, self.cfg_.window);
  ad::Var pooled = ad::relu(ad::mean_pool(attended, ad::Axis::Rows, valid));
  pooled = ad::dropout(pooled, self.cfg_.dropout, training, ad::mix64(seed ^ 0x1));
  ad::Var hidden = ad::dropout(self.dense_(tape, pooled), self.cfg_.dropout, training, ad::mix64(seed ^ 0x2));
  return self.out_(tape, hidden);
}

ad::Var TransformerHead::forward(ad::Tape& tape, const ad::Var& features, std::span<const std::uint8_t> mask,
                                 bool training, std::uint64_t seed) {
  return forward_impl(*this, tape, features, mask, training, seed);
}

ad::Var TransformerHead::forward(ad::Tape& tape, const ad::Var& features, std::span<const std::uint8_t> mask,
                                 bool training, std::uint64_t seed) const {
  return forward_impl(*this, tape, features, mask, training, seed);
}

}  // namespace hydradoc
