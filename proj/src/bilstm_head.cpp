#include "hydradoc/bilstm_head.hpp"

#include <vector>

#include "hydradoc/error.hpp"

namespace hydradoc {

std::size_t prefix_length(std::span<const std::uint8_t> mask) {
  std::size_t n = 0;
  while (n < mask.size() && mask[n]) ++n;
  for (std::size_t i = n; i < mask.size(); ++i) {
    if (mask[i]) throw InvalidArgument("mask is not a prefix mask");
  }
  return n;
}

LstmCellParams::LstmCellParams(Eigen::Index n_in, Eigen::Index units, SeededRng& rng)
    : input_weights(glorot_uniform(n_in, 4 * units, rng)),
      recurrent_weights(glorot_uniform(units, 4 * units, rng)),
      bias(Matrix::Zero(1, 4 * units)) {}

LstmState zero_state(ad::Tape& tape, Eigen::Index units) {
  return {tape.constant(Matrix::Zero(1, units)), tape.constant(Matrix::Zero(1, units))};
}

namespace {

// One step given the already projected input row x W (1 x 4u).
template <class P>
LstmState lstm_step(ad::Tape& tape, const ad::Var& projected, const LstmState& prev, P& p) {
  const Eigen::Index u = p.units();
  ad::Var z = ad::add(ad::add(projected, ad::matmul(prev.h, tape.parameter(p.recurrent_weights))),
                      tape.parameter(p.bias));
  ad::Var gates = ad::sigmoid(ad::slice_cols(z, 0, 3 * u));
  ad::Var in_gate = ad::slice_cols(gates, 0, u);
  ad::Var out_gate = ad::slice_cols(gates, u, u);
  ad::Var forget_gate = ad::slice_cols(gates, 2 * u, u);
  ad::Var candidate = ad::tanh(ad::slice_cols(z, 3 * u, u));
  ad::Var c = ad::add(ad::mul(forget_gate, prev.c), ad::mul(in_gate, candidate));
  ad::Var h = ad::mul(out_gate, ad::tanh(c));
  return {h, c};
}

template <class P>
LstmState lstm_cell_impl(ad::Tape& tape, const ad::Var& x_t, const LstmState& prev, P& p) {
  if (x_t.rows() != 1 || x_t.cols() != p.input_dim()) throw ShapeError("lstm_cell: input width mismatch");
  if (prev.h.cols() != p.units() || prev.c.cols() != p.units()) throw ShapeError("lstm_cell: state width mismatch");
  return lstm_step(tape, ad::matmul(x_t, tape.parameter(p.input_weights)), prev, p);
}

template <class P>
std::vector<ad::Var> run_direction(ad::Tape& tape, const ad::Var& x, std::size_t n, bool reverse, P& p) {
  ad::Var projected = ad::matmul(x, tape.parameter(p.input_weights));
  std::vector<ad::Var> out(n);
  LstmState state = zero_state(tape, p.units());
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t t = reverse ? n - 1 - k : k;
    ad::Var row = n == 1 ? projected : ad::slice_rows(projected, static_cast<Eigen::Index>(t), 1);
    state = lstm_step(tape, row, state, p);
    out[t] = state.h;
  }
  return out;
}

template <class L>
ad::Var bilstm_layer_impl(ad::Tape& tape, const ad::Var& x, std::span<const std::uint8_t> mask, L& p) {
  if (static_cast<Eigen::Index>(mask.size()) != x.rows()) throw ShapeError("bilstm_layer: mask length mismatch");
  if (x.cols() != p.forward.input_dim()) throw ShapeError("bilstm_layer: input width mismatch");
  const std::size_t n = prefix_length(mask);
  const Eigen::Index u = p.forward.units();
  if (n == 0) return tape.constant(Matrix::Zero(x.rows(), 2 * u));

  ad::Var valid = n == mask.size() ? x : ad::slice_rows(x, 0, static_cast<Eigen::Index>(n));
  std::vector<ad::Var> fwd = run_direction(tape, valid, n, false, p.forward);
  std::vector<ad::Var> bwd = run_direction(tape, valid, n, true, p.backward);
  std::vector<ad::Var> rows;
  rows.reserve(n + 1);
  for (std::size_t t = 0; t < n; ++t) {
    const ad::Var pair[] = {fwd[t], bwd[t]};
    rows.push_back(ad::concat_cols(pair));
  }
  if (n < mask.size()) rows.push_back(tape.constant(Matrix::Zero(static_cast<Eigen::Index>(mask.size() - n), 2 * u)));
  return ad::concat_rows(rows);
}

template <class P>
TemporalAttentionResult temporal_attention_impl(ad::Tape& tape, const ad::Var& h, std::span<const std::uint8_t> mask,
                                                P& omega) {
  if (static_cast<Eigen::Index>(mask.size()) != h.rows()) throw ShapeError("temporal_attention: mask length mismatch");
  if (omega.value.rows() != h.cols() || omega.value.cols() != 1) throw ShapeError("temporal_attention: omega shape");
  Matrix allowed(1, h.rows());
  bool any = false;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    allowed(0, static_cast<Eigen::Index>(i)) = mask[i] ? 1.0 : 0.0;
    any = any || mask[i];
  }
  if (!any) throw InvalidArgument("temporal_attention: every timestep is masked");
  ad::Var scores = ad::transpose(ad::matmul(ad::tanh(h), tape.parameter(omega)));  // 1 x n
  ad::Var weights = ad::softmax(ad::masked_fill(scores, allowed, -1e9), ad::Axis::Cols);
  // exp(-1e9 - max) underflows to exactly 0, so padded steps carry no weight.
  return {ad::matmul(weights, h), weights};
}

}  // namespace

LstmState lstm_cell(ad::Tape& tape, const ad::Var& x_t, const LstmState& prev, LstmCellParams& p) {
  return lstm_cell_impl(tape, x_t, prev, p);
}
LstmState lstm_cell(ad::Tape& tape, const ad::Var& x_t, const LstmState& prev, const LstmCellParams& p) {
  return lstm_cell_impl(tape, x_t, prev, p);
}

ad::Var bilstm_layer(ad::Tape& tape, const ad::Var& x, std::span<const std::uint8_t> mask, BiLstmLayerParams& p) {
  return bilstm_layer_impl(tape, x, mask, p);
}
ad::Var bilstm_layer(ad::Tape& tape, const ad::Var& x, std::span<const std::uint8_t> mask,
                     const BiLstmLayerParams& p) {
  return bilstm_layer_impl(tape, x, mask, p);
}

TemporalAttentionResult temporal_attention(ad::Tape& tape, const ad::Var& h, std::span<const std::uint8_t> mask,
                                           ad::Parameter& omega) {
  return temporal_attention_impl(tape, h, mask, omega);
}
TemporalAttentionResult temporal_attention(ad::Tape& tape, const ad::Var& h, std::span<const std::uint8_t> mask,
                                           const ad::Parameter& omega) {
  return temporal_attention_impl(tape, h, mask, omega);
}

BiLstmHead::BiLstmHead(const BiLstmConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  if (cfg.input_dim < 1 || cfg.units < 1 || cfg.dense1 < 1 || cfg.dense2 < 1 || cfg.outputs < 1) {
    throw InvalidArgument("Bi-LSTM head dimensions must be positive");
  }
  SeededRng rng(seed);
  layer1_.forward = LstmCellParams(cfg.input_dim, cfg.units, rng);
  layer1_.backward = LstmCellParams(cfg.input_dim, cfg.units, rng);
  layer2_.forward = LstmCellParams(2 * cfg.units, cfg.units, rng);
  layer2_.backward = LstmCellParams(2 * cfg.units, cfg.units, rng);
  attention_ = ad::Parameter(glorot_uniform(2 * cfg.units, 1, rng));
  dense1_ = Dense(2 * cfg.units, cfg.dense1, Activation::Relu, rng);
  dense2_ = Dense(cfg.dense1, cfg.dense2, Activation::Relu, rng);
  out_ = Dense(cfg.dense2, cfg.outputs, cfg.outputs == 1 ? Activation::Sigmoid : Activation::Softmax, rng);
}

template <class Self>
ad::Var BiLstmHead::forward_impl(Self& self, ad::Tape& tape, const ad::Var& features,
                                 std::span<const std::uint8_t> mask) {
  if (features.cols() != self.cfg_.input_dim) throw ShapeError("Bi-LSTM head: feature width mismatch");
  if (static_cast<Eigen::Index>(mask.size()) != features.rows()) throw ShapeError("Bi-LSTM head: mask length mismatch");
  const std::size_t n = prefix_length(mask);
  if (n == 0) throw InvalidArgument("Bi-LSTM head: document has no content blocks");

  // Everything past the valid prefix is masked in every layer, so only the
  // prefix is evaluated.
  ad::Var x = n == mask.size() ? features : ad::slice_rows(features, 0, static_cast<Eigen::Index>(n));
  const std::vector<std::uint8_t> valid(n, 1);
  ad::Var h1 = ad::relu(bilstm_layer(tape, x, valid, self.layer1_));
  ad::Var h2 = ad::relu(bilstm_layer(tape, h1, valid, self.layer2_));
  ad::Var pooled = temporal_attention(tape, h2, valid, self.attention_).pooled;
  return self.out_(tape, self.dense2_(tape, self.dense1_(tape, pooled)));
}

ad::Var BiLstmHead::forward(ad::Tape& tape, const ad::Var& features, std::span<const std::uint8_t> mask, bool,
                            std::uint64_t) {
  return forward_impl(*this, tape, features, mask);
}

ad::Var BiLstmHead::forward(ad::Tape& tape, const ad::Var& features, std::span<const std::uint8_t> mask, bool,
                            std::uint64_t) const {
  return forward_impl(*this, tape, features, mask);
}

}  // namespace hydradoc
