#pragma once

#include <cstdint>
#include <string>

#include "hydradoc/autodiff.hpp"

namespace hydradoc {

// splitmix64 stream. Platform independent, unlike the std distributions.
class SeededRng {
 public:
  explicit SeededRng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() noexcept {
    state_ += 0x9e3779b97f4a7c15ULL;
    return ad::mix64(state_);
  }
  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * ad::unit_interval(next()); }
  // Uniform integer in [0, n), n > 0.
  std::size_t below(std::size_t n) noexcept;

 private:
  std::uint64_t state_;
};

// Stable 64-bit hash of a string, used to derive per-head seeds.
std::uint64_t stable_hash(std::string_view s) noexcept;

// uniform(-sqrt(6/(fan_in+fan_out)), +sqrt(6/(fan_in+fan_out)))
Matrix glorot_uniform(Eigen::Index fan_in, Eigen::Index fan_out, SeededRng& rng);

enum class Activation { Identity, Relu, Sigmoid, Softmax };

// y = act(x W + b), x is n x in.
struct Dense {
  ad::Parameter weight;  // in x out
  ad::Parameter bias;    // 1 x out
  Activation activation = Activation::Identity;

  Dense() = default;
  Dense(Eigen::Index in, Eigen::Index out, Activation act, SeededRng& rng);

  Eigen::Index input_dim() const { return weight.value.rows(); }
  Eigen::Index output_dim() const { return weight.value.cols(); }

  ad::Var operator()(ad::Tape& tape, const ad::Var& x) { return apply(tape, x, weight, bias, activation); }
  ad::Var operator()(ad::Tape& tape, const ad::Var& x) const { return apply(tape, x, weight, bias, activation); }

  template <class F>
  void for_each_parameter(const std::string& prefix, F&& f) {
    f(prefix + ".weight", weight);
    f(prefix + ".bias", bias);
  }
  template <class F>
  void for_each_parameter(const std::string& prefix, F&& f) const {
    f(prefix + ".weight", weight);
    f(prefix + ".bias", bias);
  }

 private:
  template <class P>
  static ad::Var apply(ad::Tape& tape, const ad::Var& x, P& w, P& b, Activation act) {
    ad::Var y = ad::add(ad::matmul(x, tape.parameter(w)), tape.parameter(b));
    return activate(y, act);
  }
  static ad::Var activate(const ad::Var& y, Activation act);
};

}  // namespace hydradoc
