#pragma once

#include <Eigen/Dense>

namespace hydradoc {

// Training math runs in double; embeddings and files use float.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using FloatMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// n_b x n_d block embeddings, one row per block.
using FeatureMatrix = FloatMatrix;

}  // namespace hydradoc
