#pragma once

#include <cstdint>
#include <span>
#include <string>

#include "hydradoc/autodiff.hpp"
#include "hydradoc/layers.hpp"

namespace hydradoc {

// Fused gate weights, column blocks in gate order [input | output | forget | candidate].
struct LstmCellParams {
  ad::Parameter input_weights;      // n_in x 4u
  ad::Parameter recurrent_weights;  // u x 4u
  ad::Parameter bias;               // 1 x 4u

  LstmCellParams() = default;
  LstmCellParams(Eigen::Index n_in, Eigen::Index units, SeededRng& rng);

  Eigen::Index units() const { return recurrent_weights.value.rows(); }
  Eigen::Index input_dim() const { return input_weights.value.rows(); }

  template <class F>
  void for_each_parameter(const std::string& prefix, F&& f) {
    f(prefix + ".W", input_weights);
    f(prefix + ".U", recurrent_weights);
    f(prefix + ".b", bias);
  }
  template <class F>
  void for_each_parameter(const std::string& prefix, F&& f) const {
    f(prefix + ".W", input_weights);
    f(prefix + ".U", recurrent_weights);
    f(prefix + ".b", bias);
  }
};

struct LstmState {
  ad::Var h;  // 1 x u
  ad::Var c;  // 1 x u
};

LstmState zero_state(ad::Tape& tape, Eigen::Index units);

// i,o,f = sigmoid(x W + h U + b), c~ = tanh(...), c = f*c + i*c~, h = o*tanh(c).
LstmState lstm_cell(ad::Tape& tape, const ad::Var& x_t, const LstmState& prev, LstmCellParams& p);
LstmState lstm_cell(ad::Tape& tape, const ad::Var& x_t, const LstmState& prev, const LstmCellParams& p);

struct BiLstmLayerParams {
  LstmCellParams forward;
  LstmCellParams backward;

  template <class F>
  void for_each_parameter(const std::string& prefix, F&& f) {
    forward.for_each_parameter(prefix + ".fwd", f);
    backward.for_each_parameter(prefix + ".bwd", f);
  }
  template <class F>
  void for_each_parameter(const std::string& prefix, F&& f) const {
    forward.for_each_parameter(prefix + ".fwd", f);
    backward.for_each_parameter(prefix + ".bwd", f);
  }
};

// n x n_in -> n x 2u. Row t is [h_t, h~_t]: the forward pass runs over the valid
// prefix, the backward pass over the same prefix reversed. Padded rows are zero.
ad::Var bilstm_layer(ad::Tape& tape, const ad::Var& x, std::span<const std::uint8_t> mask, BiLstmLayerParams& p);
ad::Var bilstm_layer(ad::Tape& tape, const ad::Var& x, std::span<const std::uint8_t> mask, const BiLstmLayerParams& p);

struct TemporalAttentionResult {
  ad::Var pooled;   // 1 x 2u
  ad::Var weights;  // 1 x n, zero at padded steps
};

// score_t = tanh(H_t) . omega over valid steps, softmax-normalized, pooled as the
// weighted sum of rows of H. Throws InvalidArgument when every step is masked.
TemporalAttentionResult temporal_attention(ad::Tape& tape, const ad::Var& h, std::span<const std::uint8_t> mask,
                                           ad::Parameter& omega);
TemporalAttentionResult temporal_attention(ad::Tape& tape, const ad::Var& h, std::span<const std::uint8_t> mask,
                                           const ad::Parameter& omega);

struct BiLstmConfig {
  Eigen::Index input_dim = 512;
  Eigen::Index units = 10;
  Eigen::Index dense1 = 10;
  Eigen::Index dense2 = 5;
  Eigen::Index outputs = 1;  // >1: softmax over a label group

  friend bool operator==(const BiLstmConfig&, const BiLstmConfig&) = default;
};

// Bi-LSTM(u) -> ReLU -> Bi-LSTM(u) -> ReLU -> temporal attention ->
// Dense(10, ReLU) -> Dense(5, ReLU) -> Dense(outputs, sigmoid | softmax).
class BiLstmHead {
 public:
  BiLstmHead(const BiLstmConfig& cfg, std::uint64_t seed);

  const BiLstmConfig& config() const noexcept { return cfg_; }

  // features: n x input_dim, already masked. Returns 1 x outputs probabilities.
  // The head has no stochastic layers; `training` and `seed` exist for a uniform
  // interface with the transformer head.
  ad::Var forward(ad::Tape& tape, const ad::Var& features, std::span<const std::uint8_t> mask, bool training = false,
                  std::uint64_t seed = 0);
  ad::Var forward(ad::Tape& tape, const ad::Var& features, std::span<const std::uint8_t> mask, bool training = false,
                  std::uint64_t seed = 0) const;

  template <class F>
  void for_each_parameter(F&& f) {
    visit(*this, f);
  }
  template <class F>
  void for_each_parameter(F&& f) const {
    visit(*this, f);
  }

 private:
  template <class Self, class F>
  static void visit(Self& self, F& f) {
    self.layer1_.for_each_parameter("lstm1", f);
    self.layer2_.for_each_parameter("lstm2", f);
    f(std::string("attention.omega"), self.attention_);
    self.dense1_.for_each_parameter("dense1", f);
    self.dense2_.for_each_parameter("dense2", f);
    self.out_.for_each_parameter("out", f);
  }
  template <class Self>
  static ad::Var forward_impl(Self& self, ad::Tape& tape, const ad::Var& features, std::span<const std::uint8_t> mask);

  BiLstmConfig cfg_;
  BiLstmLayerParams layer1_;
  BiLstmLayerParams layer2_;
  ad::Parameter attention_;  // 2u x 1
  Dense dense1_;
  Dense dense2_;
  Dense out_;
};

// Length of the leading run of ones; throws InvalidArgument if a 1 follows a 0.
std::size_t prefix_length(std::span<const std::uint8_t> mask);

}  // namespace hydradoc
