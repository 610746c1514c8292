#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "hydradoc/autodiff.hpp"
#include "hydradoc/corpus.hpp"
#include "hydradoc/embedding.hpp"
#include "hydradoc/hydranet.hpp"

namespace hydradoc {

// w0 = N / ((N - N_k) K), w1 = N / (N_k K).
struct ClassWeights {
  double negative = 1.0;
  double positive = 1.0;
};

// Throws DegenerateClassError unless 0 < n_k < n; InvalidArgument if k == 0.
ClassWeights class_weights(std::size_t n, std::size_t n_k, std::size_t k, const std::string& label = "");

inline constexpr double kProbabilityClip = 1e-7;

// -(1/N) sum_n [w0 (1-y) log(1-p) + w1 y log p], p clipped to [1e-7, 1-1e-7].
double weighted_bce(std::span<const double> y, std::span<const double> y_hat, const ClassWeights& w);
// Differentiable form; y and y_hat are matching 1 x n rows.
ad::Var weighted_bce(const ad::Var& y_hat, const Matrix& y, const ClassWeights& w);
// -log p[target] with the same clipping; y_hat is 1 x m.
ad::Var categorical_cross_entropy(const ad::Var& y_hat, Eigen::Index target);

enum class LossKind { WeightedBce, Bce };

struct TrainConfig {
  std::size_t batch_size = 16;
  std::size_t epochs = 5;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.99;
  double epsilon = 1e-8;
  std::uint64_t seed = 0;
  LossKind loss = LossKind::WeightedBce;  // binary heads; group heads use cross-entropy
  // Worker threads for independent heads (identity or frozen neck).
  std::size_t parallel_heads = 1;
};

// Encoded documents with n x K targets and label-presence flags. Entries whose
// presence is 0 are excluded from losses and metrics.
struct TrainingSet {
  std::vector<std::string> labels;
  std::vector<EncodedDocument> docs;
  Matrix targets;
  Matrix presence;

  std::size_t size() const noexcept { return docs.size(); }
};

TrainingSet encode_corpus(const Corpus& corpus, const std::vector<std::string>& labels, const BlockingConfig& blocking,
                          const EmbeddingBackend& backend, EmbeddingCache* cache = nullptr);

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  std::string head;
  double loss = 0.0;
  double accuracy = 0.0;
};

struct TrainResult {
  std::vector<EpochRecord> history;  // epoch-major, heads in model order
};

// Mini-batch Adam on every trainable head (and the neck, if trainable). Each head
// trains on the documents where its labels are present, shuffled per epoch with
// a seeded generator, so its result depends only on its own data. Heads with no
// present documents are left untouched. Throws DegenerateClassError naming the
// label when a trainable binary head lacks positives or negatives.
TrainResult train(HydranetModel& model, const TrainingSet& data, const TrainConfig& cfg);

// Freezes the neck and every head not named, trains, then restores the previous
// trainable flags. Throws InvalidArgument for unknown head names.
TrainResult finetune_heads(HydranetModel& model, const std::vector<std::string>& heads, const TrainingSet& data,
                           const TrainConfig& cfg);

// One JSON object per line: {"epoch":..,"head":..,"loss":..,"accuracy":..}.
void write_history(std::ostream& os, const std::vector<EpochRecord>& history);

struct LabelMetrics {
  double precision = 0.0;
  double recall = 0.0;
  std::size_t support = 0;  // positives
};

struct Metrics {
  std::size_t documents = 0;
  // Share of documents whose highest-probability label is one of their labels.
  double accuracy = 0.0;
  // Pooled over every present (document, label) pair at threshold 0.5.
  double micro_f1 = 0.0;
  std::map<std::string, LabelMetrics> per_label;
};

// predictions, targets, presence: n x K. Throws InvalidArgument for n == 0.
Metrics compute_metrics(const Matrix& predictions, const Matrix& targets, const Matrix& presence,
                        const std::vector<std::string>& labels);

// Predicts every document; columns follow model.labels(), and dataset labels the
// model lacks are ignored.
Metrics evaluate(const HydranetModel& model, const TrainingSet& data);

}  // namespace hydradoc
