#include "hydradoc/training.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <optional>
#include <set>
#include <thread>

#include <json.hpp>

#include "hydradoc/error.hpp"
#include "hydradoc/layers.hpp"

namespace hydradoc {

ClassWeights class_weights(std::size_t n, std::size_t n_k, std::size_t k, const std::string& label) {
  if (k == 0) throw InvalidArgument("class_weights: K must be >= 1");
  if (n_k == 0 || n_k >= n) throw DegenerateClassError(label.empty() ? "<unnamed>" : label);
  const double N = static_cast<double>(n);
  const double Nk = static_cast<double>(n_k);
  const double K = static_cast<double>(k);
  return {N / ((N - Nk) * K), N / (Nk * K)};
}

double weighted_bce(std::span<const double> y, std::span<const double> y_hat, const ClassWeights& w) {
  if (y.size() != y_hat.size()) throw ShapeError("weighted_bce: targets and predictions differ in length");
  if (y.empty()) throw ShapeError("weighted_bce: empty batch");
  double total = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double p = std::clamp(y_hat[i], kProbabilityClip, 1.0 - kProbabilityClip);
    total += w.negative * (1.0 - y[i]) * std::log(1.0 - p) + w.positive * y[i] * std::log(p);
  }
  return -total / static_cast<double>(y.size());
}

ad::Var weighted_bce(const ad::Var& y_hat, const Matrix& y, const ClassWeights& w) {
  if (y_hat.rows() != y.rows() || y_hat.cols() != y.cols()) throw ShapeError("weighted_bce: shape mismatch");
  ad::Tape& tape = *y_hat.tape();
  ad::Var p = ad::clamp(y_hat, kProbabilityClip, 1.0 - kProbabilityClip);
  ad::Var pos = ad::mul(tape.constant(w.positive * y), ad::log(p));
  ad::Var neg = ad::mul(tape.constant(w.negative * (1.0 - y.array()).matrix()), ad::log(ad::affine(p, -1.0, 1.0)));
  return ad::affine(ad::sum(ad::add(pos, neg)), -1.0 / static_cast<double>(y.size()));
}

ad::Var categorical_cross_entropy(const ad::Var& y_hat, Eigen::Index target) {
  if (y_hat.rows() != 1 || target < 0 || target >= y_hat.cols()) throw ShapeError("cross-entropy: bad target");
  ad::Var p = ad::clamp(ad::slice_cols(y_hat, target, 1), kProbabilityClip, 1.0 - kProbabilityClip);
  return ad::affine(ad::log(p), -1.0);
}

TrainingSet encode_corpus(const Corpus& corpus, const std::vector<std::string>& labels, const BlockingConfig& blocking,
                          const EmbeddingBackend& backend, EmbeddingCache* cache) {
  TrainingSet out;
  out.labels = labels;
  const auto n = static_cast<Eigen::Index>(corpus.size());
  const auto k = static_cast<Eigen::Index>(labels.size());
  out.targets = Matrix::Zero(n, k);
  out.presence = Matrix::Zero(n, k);
  const std::set<std::string> vocab(corpus.vocabulary.begin(), corpus.vocabulary.end());
  out.docs.reserve(corpus.size());
  for (Eigen::Index i = 0; i < n; ++i) {
    const Document& d = corpus.documents[static_cast<std::size_t>(i)];
    out.docs.push_back(encode_text(d.text, blocking, backend, cache));
    for (Eigen::Index c = 0; c < k; ++c) {
      const std::string& l = labels[static_cast<std::size_t>(c)];
      const bool known = d.known_labels ? std::find(d.known_labels->begin(), d.known_labels->end(), l) !=
                                              d.known_labels->end()
                                        : vocab.count(l) != 0;
      out.presence(i, c) = known ? 1.0 : 0.0;
      out.targets(i, c) = std::find(d.labels.begin(), d.labels.end(), l) != d.labels.end() ? 1.0 : 0.0;
    }
  }
  return out;
}

namespace {

struct AdamState {
  std::vector<Matrix> m;
  std::vector<Matrix> v;
  std::size_t step = 0;
};

std::vector<ad::Parameter*> trainable_parameters(Head& h) {
  std::vector<ad::Parameter*> out;
  h.for_each_parameter([&](const std::string&, ad::Parameter& p) {
    if (p.requires_grad) out.push_back(&p);
  });
  return out;
}

std::vector<ad::Parameter*> trainable_parameters(Neck& n) {
  std::vector<ad::Parameter*> out;
  n.for_each_parameter([&](const std::string&, ad::Parameter& p) {
    if (p.requires_grad) out.push_back(&p);
  });
  return out;
}

void zero_grads(const std::vector<ad::Parameter*>& params) {
  for (auto* p : params) p->zero_grad();
}

void adam_step(const std::vector<ad::Parameter*>& params, AdamState& s, const TrainConfig& cfg) {
  if (s.m.empty()) {
    for (auto* p : params) {
      s.m.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
      s.v.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
    }
  }
  ++s.step;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(s.step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(s.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Matrix& g = params[i]->grad;
    s.m[i] = cfg.beta1 * s.m[i] + (1.0 - cfg.beta1) * g;
    s.v[i] = cfg.beta2 * s.v[i] + (1.0 - cfg.beta2) * g.cwiseProduct(g);
    params[i]->value.array() -=
        cfg.learning_rate * (s.m[i].array() / c1) / ((s.v[i].array() / c2).sqrt() + cfg.epsilon);
  }
}

void shuffle(std::vector<std::size_t>& order, std::uint64_t seed) {
  SeededRng rng(seed);
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
}

std::uint64_t epoch_seed(const TrainConfig& cfg, std::size_t epoch) {
  return ad::mix64(cfg.seed ^ ad::mix64(0x5eed0000ULL + epoch));
}

std::uint64_t dropout_seed(const TrainConfig& cfg, std::uint64_t head_tag, std::size_t epoch, std::size_t position) {
  return ad::mix64(cfg.seed ^ head_tag ^ ad::mix64((static_cast<std::uint64_t>(epoch) << 32) ^ position));
}

// One trainable head's view of the data.
struct HeadTask {
  Head* head = nullptr;
  std::vector<Eigen::Index> columns;
  std::vector<std::size_t> examples;
  std::vector<char> present;              // per document
  std::vector<Eigen::Index> group_target;  // per document, group heads only
  ClassWeights weights;
  std::uint64_t tag = 0;
  std::vector<ad::Parameter*> params;
  AdamState adam;
  std::vector<EpochRecord> history;
};

std::optional<HeadTask> make_task(Head& head, const TrainingSet& data, std::size_t total_labels,
                                  const TrainConfig& cfg) {
  HeadTask t;
  t.head = &head;
  t.tag = stable_hash(head.name());
  t.params = trainable_parameters(head);
  if (t.params.empty()) return std::nullopt;
  for (const auto& l : head.labels()) {
    auto it = std::find(data.labels.begin(), data.labels.end(), l);
    t.columns.push_back(it == data.labels.end() ? -1 : static_cast<Eigen::Index>(it - data.labels.begin()));
  }
  t.present.assign(data.size(), 0);
  t.group_target.assign(data.size(), -1);
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto row = static_cast<Eigen::Index>(i);
    bool ok = true;
    Eigen::Index positives = 0, target = -1;
    for (std::size_t c = 0; c < t.columns.size(); ++c) {
      const Eigen::Index col = t.columns[c];
      if (col < 0 || data.presence(row, col) == 0.0) {
        ok = false;
        break;
      }
      if (data.targets(row, col) != 0.0) ++positives, target = static_cast<Eigen::Index>(c);
    }
    if (ok && head.is_group() && positives != 1) ok = false;
    if (!ok) continue;
    t.present[i] = 1;
    t.group_target[i] = target;
    t.examples.push_back(i);
  }
  if (t.examples.empty()) return std::nullopt;
  if (!head.is_group()) {
    std::size_t pos = 0;
    for (std::size_t i : t.examples) pos += data.targets(static_cast<Eigen::Index>(i), t.columns[0]) != 0.0;
    const ClassWeights w = class_weights(t.examples.size(), pos, total_labels, head.labels()[0]);
    t.weights = cfg.loss == LossKind::WeightedBce ? w : ClassWeights{1.0, 1.0};
  }
  return t;
}

// Loss of one document for one head, plus whether the prediction was right.
std::pair<ad::Var, bool> head_loss(HeadTask& t, const TrainingSet& data, std::size_t doc, const ad::Var& probs) {
  const Matrix& p = probs.value();
  if (t.head->is_group()) {
    Eigen::Index best = 0;
    p.row(0).maxCoeff(&best);
    return {categorical_cross_entropy(probs, t.group_target[doc]), best == t.group_target[doc]};
  }
  Matrix y(1, 1);
  y(0, 0) = data.targets(static_cast<Eigen::Index>(doc), t.columns[0]);
  const bool right = (p(0, 0) > 0.5) == (y(0, 0) != 0.0);
  return {weighted_bce(probs, y, t.weights), right};
}

void train_independent(HeadTask& t, const TrainingSet& data, const std::vector<const Matrix*>& inputs,
                       const TrainConfig& cfg) {
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::vector<std::size_t> order = t.examples;
    shuffle(order, epoch_seed(cfg, epoch));
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      const double scale = 1.0 / static_cast<double>(end - start);
      zero_grads(t.params);
      for (std::size_t j = start; j < end; ++j) {
        const std::size_t doc = order[j];
        ad::Tape tape;
        ad::Var x = tape.view(*inputs[doc]);
        ad::Var probs = t.head->forward(tape, x, data.docs[doc].mask, true, dropout_seed(cfg, t.tag, epoch, j));
        auto [loss, right] = head_loss(t, data, doc, probs);
        tape.backward(ad::affine(loss, scale));
        loss_sum += loss.scalar();
        correct += right;
      }
      adam_step(t.params, t.adam, cfg);
    }
    const double n = static_cast<double>(order.size());
    t.history.push_back({epoch, t.head->name(), loss_sum / n, static_cast<double>(correct) / n});
  }
}

// Trainable neck: every document runs the neck once and all heads present for it
// on a single tape, so the neck gradient accumulates across heads.
void train_shared(std::vector<HeadTask>& tasks, Neck& neck, const TrainingSet& data, const TrainConfig& cfg) {
  const std::vector<ad::Parameter*> neck_params = trainable_parameters(neck);
  AdamState neck_adam;
  std::vector<std::size_t> all;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (std::any_of(tasks.begin(), tasks.end(), [&](const HeadTask& t) { return t.present[i] != 0; })) {
      all.push_back(i);
    }
  }
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::vector<std::size_t> order = all;
    shuffle(order, epoch_seed(cfg, epoch));
    std::vector<double> loss_sum(tasks.size(), 0.0);
    std::vector<std::size_t> correct(tasks.size(), 0), seen(tasks.size(), 0);
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      std::vector<std::size_t> count(tasks.size(), 0);
      for (std::size_t j = start; j < end; ++j) {
        for (std::size_t h = 0; h < tasks.size(); ++h) count[h] += tasks[h].present[order[j]] != 0;
      }
      zero_grads(neck_params);
      for (auto& t : tasks) zero_grads(t.params);
      for (std::size_t j = start; j < end; ++j) {
        const std::size_t doc = order[j];
        ad::Tape tape;
        ad::Var x = neck.forward(tape, tape.view(data.docs[doc].features), data.docs[doc].mask);
        std::optional<ad::Var> total;
        for (std::size_t h = 0; h < tasks.size(); ++h) {
          HeadTask& t = tasks[h];
          if (!t.present[doc]) continue;
          ad::Var probs = t.head->forward(tape, x, data.docs[doc].mask, true, dropout_seed(cfg, t.tag, epoch, j));
          auto [loss, right] = head_loss(t, data, doc, probs);
          loss_sum[h] += loss.scalar();
          correct[h] += right;
          ++seen[h];
          ad::Var scaled = ad::affine(loss, 1.0 / static_cast<double>(count[h]));
          total = total ? ad::add(*total, scaled) : scaled;
        }
        if (total) tape.backward(*total);
      }
      for (auto& t : tasks) {
        if (std::any_of(order.begin() + static_cast<std::ptrdiff_t>(start), order.begin() + static_cast<std::ptrdiff_t>(end),
                        [&](std::size_t d) { return t.present[d] != 0; })) {
          adam_step(t.params, t.adam, cfg);
        }
      }
      adam_step(neck_params, neck_adam, cfg);
    }
    for (std::size_t h = 0; h < tasks.size(); ++h) {
      const double n = static_cast<double>(std::max<std::size_t>(seen[h], 1));
      tasks[h].history.push_back({epoch, tasks[h].head->name(), loss_sum[h] / n, static_cast<double>(correct[h]) / n});
    }
  }
}

}  // namespace

TrainResult train(HydranetModel& model, const TrainingSet& data, const TrainConfig& cfg) {
  if (cfg.batch_size < 1) throw InvalidArgument("batch size must be >= 1");
  if (cfg.epochs < 1) throw InvalidArgument("epochs must be >= 1");
  if (cfg.parallel_heads < 1) throw InvalidArgument("parallel_heads must be >= 1");
  if (!(cfg.learning_rate > 0.0)) throw InvalidArgument("learning rate must be positive");
  if (!(cfg.beta1 >= 0.0 && cfg.beta1 < 1.0 && cfg.beta2 >= 0.0 && cfg.beta2 < 1.0)) {
    throw InvalidArgument("Adam betas must lie in [0, 1)");
  }
  if (!(cfg.epsilon > 0.0)) throw InvalidArgument("Adam epsilon must be positive");
  if (data.size() == 0) throw InvalidArgument("training set is empty");
  if (static_cast<std::size_t>(data.targets.rows()) != data.size() ||
      static_cast<std::size_t>(data.presence.rows()) != data.size()) {
    throw ShapeError("training set targets do not match its documents");
  }
  for (const auto& d : data.docs) {
    if (d.features.cols() != model.embedding_dim()) throw ShapeError("training documents do not match the model width");
  }

  // K counts the dataset's labels, not the model's, so attaching or detaching
  // heads leaves the other heads' losses unchanged.
  const std::size_t total_labels = data.labels.size();
  std::vector<HeadTask> tasks;
  for (Head& h : model.heads()) {
    if (auto t = make_task(h, data, total_labels, cfg)) tasks.push_back(std::move(*t));
  }

  TrainResult result;
  const bool shared_neck = model.neck().trainable();
  if (shared_neck) {
    train_shared(tasks, model.neck(), data, cfg);
  } else {
    // Identity or frozen neck: its output is a constant per document.
    std::vector<Matrix> neck_outputs;
    std::vector<const Matrix*> inputs(data.size());
    if (model.neck().mode() == Neck::Mode::Identity) {
      for (std::size_t i = 0; i < data.size(); ++i) inputs[i] = &data.docs[i].features;
    } else {
      neck_outputs.reserve(data.size());
      for (const auto& d : data.docs) {
        ad::Tape tape;
        neck_outputs.push_back(std::as_const(model.neck()).forward(tape, tape.view(d.features), d.mask).value());
      }
      for (std::size_t i = 0; i < data.size(); ++i) inputs[i] = &neck_outputs[i];
    }

    const std::size_t workers = std::min(cfg.parallel_heads, tasks.size());
    if (workers <= 1) {
      for (auto& t : tasks) train_independent(t, data, inputs, cfg);
    } else {
      std::atomic<std::size_t> next{0};
      std::vector<std::exception_ptr> errors(tasks.size());
      std::vector<std::thread> pool;
      for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
          for (std::size_t i = next++; i < tasks.size(); i = next++) {
            try {
              train_independent(tasks[i], data, inputs, cfg);
            } catch (...) {
              errors[i] = std::current_exception();
            }
          }
        });
      }
      for (auto& th : pool) th.join();
      for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
      }
    }
  }

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    for (const auto& t : tasks) result.history.push_back(t.history[epoch - 1]);
  }
  return result;
}

TrainResult finetune_heads(HydranetModel& model, const std::vector<std::string>& heads, const TrainingSet& data,
                           const TrainConfig& cfg) {
  for (const auto& name : heads) {
    if (model.find_head(name) == nullptr) throw InvalidArgument("unknown head '" + name + "'");
  }
  const bool neck_flag = model.neck().trainable();
  std::vector<bool> flags;
  for (const Head& h : model.heads()) flags.push_back(h.trainable());

  model.neck().set_trainable(false);
  for (Head& h : model.heads()) {
    h.set_trainable(std::find(heads.begin(), heads.end(), h.name()) != heads.end());
  }
  TrainResult result;
  try {
    result = train(model, data, cfg);
  } catch (...) {
    model.neck().set_trainable(neck_flag);
    for (std::size_t i = 0; i < flags.size(); ++i) model.heads()[i].set_trainable(flags[i]);
    throw;
  }
  model.neck().set_trainable(neck_flag);
  for (std::size_t i = 0; i < flags.size(); ++i) model.heads()[i].set_trainable(flags[i]);
  return result;
}

void write_history(std::ostream& os, const std::vector<EpochRecord>& history) {
  for (const auto& r : history) {
    os << nlohmann::json{{"epoch", r.epoch}, {"head", r.head}, {"loss", r.loss}, {"accuracy", r.accuracy}}.dump()
       << '\n';
  }
}

}  // namespace hydradoc
