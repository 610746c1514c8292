#include "hydradoc/layers.hpp"

#include <cmath>

namespace hydradoc {

std::size_t SeededRng::below(std::size_t n) noexcept {
  // Lemire's multiply-shift; the bias for n far below 2^64 is negligible.
  return static_cast<std::size_t>((static_cast<unsigned __int128>(next()) * n) >> 64);
}

std::uint64_t stable_hash(std::string_view s) noexcept {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return ad::mix64(h);
}

Matrix glorot_uniform(Eigen::Index fan_in, Eigen::Index fan_out, SeededRng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Matrix m(fan_in, fan_out);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-limit, limit);
  return m;
}

Dense::Dense(Eigen::Index in, Eigen::Index out, Activation act, SeededRng& rng)
    : weight(glorot_uniform(in, out, rng)), bias(Matrix::Zero(1, out)), activation(act) {}

ad::Var Dense::activate(const ad::Var& y, Activation act) {
  switch (act) {
    case Activation::Relu:
      return ad::relu(y);
    case Activation::Sigmoid:
      return ad::sigmoid(y);
    case Activation::Softmax:
      return ad::softmax(y, ad::Axis::Cols);
    case Activation::Identity:
      break;
  }
  return y;
}

}  // namespace hydradoc
