#include "hydradoc/hydranet.hpp"

#include <algorithm>
#include <set>

#include "hydradoc/error.hpp"

namespace hydradoc {

std::string to_string(Architecture a) { return a == Architecture::BiLstm ? "bilstm" : "transformer"; }

Architecture parse_architecture(std::string_view s) {
  if (s == "bilstm") return Architecture::BiLstm;
  if (s == "transformer") return Architecture::Transformer;
  throw InvalidArgument("unknown head architecture '" + std::string(s) + "' (expected bilstm or transformer)");
}

// ---- Neck -------------------------------------------------------------------

Neck Neck::identity() { return Neck(); }

Neck Neck::dense(Eigen::Index dim, std::uint64_t seed) {
  Neck n;
  n.mode_ = Mode::Dense;
  n.trainable_ = true;
  SeededRng rng(seed);
  n.layer_ = Dense(dim, dim, Activation::Relu, rng);
  return n;
}

void Neck::set_trainable(bool flag) {
  trainable_ = mode_ == Mode::Dense && flag;
  layer_.weight.requires_grad = trainable_;
  layer_.bias.requires_grad = trainable_;
}

template <class Self>
ad::Var Neck::forward_impl(Self& self, ad::Tape& tape, const ad::Var& x, std::span<const std::uint8_t> mask) {
  if (self.mode_ == Mode::Identity) return x;
  if (static_cast<Eigen::Index>(mask.size()) != x.rows()) throw ShapeError("neck: mask length mismatch");
  ad::Var y = self.layer_(tape, x);
  // relu(b) is generally nonzero, so padding has to be re-masked.
  Matrix keep(x.rows(), y.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) keep.row(i).setConstant(mask[static_cast<std::size_t>(i)] ? 1.0 : 0.0);
  return ad::mul(y, tape.constant(std::move(keep)));
}

ad::Var Neck::forward(ad::Tape& tape, const ad::Var& x, std::span<const std::uint8_t> mask) {
  return forward_impl(*this, tape, x, mask);
}
ad::Var Neck::forward(ad::Tape& tape, const ad::Var& x, std::span<const std::uint8_t> mask) const {
  return forward_impl(*this, tape, x, mask);
}

// ---- Head -------------------------------------------------------------------

Head::Head(std::string name, std::vector<std::string> labels, HeadNetwork network, bool trainable)
    : name_(std::move(name)), labels_(std::move(labels)), network_(std::move(network)) {
  if (name_.empty()) throw InvalidArgument("head name must not be empty");
  if (labels_.empty()) throw InvalidArgument("head '" + name_ + "' has no labels");
  const auto outputs = std::visit([](const auto& n) { return n.config().outputs; }, network_);
  if (outputs != static_cast<Eigen::Index>(labels_.size())) {
    throw ShapeError("head '" + name_ + "' has " + std::to_string(outputs) + " outputs for " +
                     std::to_string(labels_.size()) + " labels");
  }
  set_trainable(trainable);
}

void Head::set_trainable(bool flag) {
  trainable_ = flag;
  for_each_parameter([flag](const std::string&, ad::Parameter& p) { p.requires_grad = flag; });
}

Architecture Head::architecture() const noexcept {
  return std::holds_alternative<BiLstmHead>(network_) ? Architecture::BiLstm : Architecture::Transformer;
}

Eigen::Index Head::input_dim() const {
  return std::visit([](const auto& n) { return n.config().input_dim; }, network_);
}

ad::Var Head::forward(ad::Tape& tape, const ad::Var& features, std::span<const std::uint8_t> mask, bool training,
                      std::uint64_t seed) {
  return std::visit([&](auto& n) { return n.forward(tape, features, mask, training, seed); }, network_);
}

ad::Var Head::forward(ad::Tape& tape, const ad::Var& features, std::span<const std::uint8_t> mask, bool training,
                      std::uint64_t seed) const {
  return std::visit([&](const auto& n) { return n.forward(tape, features, mask, training, seed); }, network_);
}

Head make_head(std::string name, std::vector<std::string> labels, const HeadOptions& opts, Eigen::Index input_dim,
               std::uint64_t seed) {
  const auto outputs = static_cast<Eigen::Index>(labels.size());
  if (opts.architecture == Architecture::BiLstm) {
    BiLstmConfig cfg = opts.bilstm;
    cfg.input_dim = input_dim;
    cfg.outputs = outputs;
    return Head(std::move(name), std::move(labels), BiLstmHead(cfg, seed));
  }
  TransformerConfig cfg = opts.transformer;
  cfg.input_dim = input_dim;
  cfg.outputs = outputs;
  return Head(std::move(name), std::move(labels), TransformerHead(cfg, seed));
}

Component Component::parse(const std::string& text) {
  if (text == "neck") return neck();
  if (text.rfind("head:", 0) == 0) return head_named(text.substr(5));
  if (text.empty()) throw InvalidArgument("empty component name");
  return head_named(text);
}

// ---- HydranetModel ------------------------------------------------------------

HydranetModel::HydranetModel(std::string backbone_id, Eigen::Index embedding_dim, BlockingConfig blocking, Neck neck)
    : backbone_id_(std::move(backbone_id)),
      embedding_dim_(embedding_dim),
      blocking_(blocking),
      neck_(std::move(neck)) {
  if (embedding_dim_ < 1) throw InvalidArgument("embedding dimension must be positive");
}

std::vector<std::string> HydranetModel::labels() const {
  std::vector<std::string> out;
  for (const auto& h : heads_) out.insert(out.end(), h.labels().begin(), h.labels().end());
  return out;
}

Head* HydranetModel::find_head(std::string_view name) {
  auto it = std::find_if(heads_.begin(), heads_.end(), [&](const Head& h) { return h.name() == name; });
  return it == heads_.end() ? nullptr : &*it;
}

const Head* HydranetModel::find_head(std::string_view name) const {
  auto it = std::find_if(heads_.begin(), heads_.end(), [&](const Head& h) { return h.name() == name; });
  return it == heads_.end() ? nullptr : &*it;
}

void HydranetModel::add_head(Head head, std::optional<std::size_t> position) {
  if (find_head(head.name()) != nullptr) throw InvalidArgument("duplicate head '" + head.name() + "'");
  const auto existing = labels();
  const std::set<std::string> taken(existing.begin(), existing.end());
  for (const auto& l : head.labels()) {
    if (taken.count(l) != 0) throw InvalidArgument("duplicate label '" + l + "'");
  }
  if (std::set<std::string>(head.labels().begin(), head.labels().end()).size() != head.labels().size()) {
    throw InvalidArgument("head '" + head.name() + "' repeats a label");
  }
  if (head.input_dim() != embedding_dim_) {
    throw ShapeError("head '" + head.name() + "' expects width " + std::to_string(head.input_dim()) +
                     ", neck produces " + std::to_string(embedding_dim_));
  }
  const std::size_t at = std::min(position.value_or(heads_.size()), heads_.size());
  heads_.insert(heads_.begin() + static_cast<std::ptrdiff_t>(at), std::move(head));
}

Head HydranetModel::remove_head(std::string_view name) {
  auto it = std::find_if(heads_.begin(), heads_.end(), [&](const Head& h) { return h.name() == name; });
  if (it == heads_.end()) throw InvalidArgument("unknown head '" + std::string(name) + "'");
  Head removed = std::move(*it);
  heads_.erase(it);
  return removed;
}

HydranetModel attach_head(HydranetModel model, Head head, std::optional<std::size_t> position) {
  model.add_head(std::move(head), position);
  return model;
}

HydranetModel attach_head(HydranetModel model, const std::string& label, const HeadOptions& opts,
                          std::uint64_t init_seed) {
  model.add_head(make_head(label, {label}, opts, model.embedding_dim(), init_seed));
  return model;
}

HydranetModel detach_head(HydranetModel model, std::string_view name, std::optional<Head>* removed) {
  Head h = model.remove_head(name);
  if (removed != nullptr) removed->emplace(std::move(h));
  return model;
}

HydranetModel set_trainable(HydranetModel model, const Component& component, bool flag) {
  if (component.kind == Component::Kind::Neck) {
    if (flag && model.neck().mode() == Neck::Mode::Identity) {
      throw InvalidArgument("the identity neck has no parameters to train");
    }
    model.neck().set_trainable(flag);
    return model;
  }
  Head* h = model.find_head(component.head);
  if (h == nullptr) throw InvalidArgument("unknown head '" + component.head + "'");
  h->set_trainable(flag);
  return model;
}

// ---- Prediction -------------------------------------------------------------

EncodedDocument encode_blocks(const BlockedDocument& doc, const EmbeddingBackend& backend, EmbeddingCache* cache) {
  const FeatureMatrix raw = embed_blocks(doc, backend, cache);
  const FeatureMatrix masked = apply_mask(raw, mask_matrix(doc, backend.dim()));
  return {masked.cast<double>(), doc.mask};
}

EncodedDocument encode_text(std::string_view text, const BlockingConfig& cfg, const EmbeddingBackend& backend,
                            EmbeddingCache* cache) {
  return encode_blocks(segment(text, cfg), backend, cache);
}

std::vector<double> predict_encoded(const HydranetModel& model, const EncodedDocument& doc) {
  if (model.heads().empty()) throw InvalidArgument("model has no heads");
  if (doc.features.cols() != model.embedding_dim()) throw ShapeError("document width does not match the model");
  ad::Tape tape;
  ad::Var x = tape.constant(doc.features);
  ad::Var neck_out = model.neck().forward(tape, x, doc.mask);
  std::vector<double> out;
  for (const Head& h : model.heads()) {
    const Matrix& p = h.forward(tape, neck_out, doc.mask).value();
    out.insert(out.end(), p.data(), p.data() + p.size());
  }
  return out;
}

std::vector<double> predict(const HydranetModel& model, const EmbeddingBackend& backend, std::string_view text,
                            EmbeddingCache* cache) {
  if (backend.backend_id() != model.backbone_id()) {
    throw InvalidArgument("model was trained on backbone '" + model.backbone_id() + "', got '" +
                          backend.backend_id() + "'");
  }
  return predict_encoded(model, encode_text(text, model.blocking(), backend, cache));
}

}  // namespace hydradoc
