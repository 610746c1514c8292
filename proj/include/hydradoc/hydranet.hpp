#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "hydradoc/autodiff.hpp"
#include "hydradoc/bilstm_head.hpp"
#include "hydradoc/blocking.hpp"
#include "hydradoc/embedding.hpp"
#include "hydradoc/layers.hpp"
#include "hydradoc/transformer_head.hpp"

namespace hydradoc {

enum class Architecture { BiLstm, Transformer };

std::string to_string(Architecture a);
Architecture parse_architecture(std::string_view s);

// Shared layer between backbone and heads. Identity has no parameters.
class Neck {
 public:
  enum class Mode { Identity, Dense };

  static Neck identity();
  // Dense(n_d -> n_d, ReLU).
  static Neck dense(Eigen::Index dim, std::uint64_t seed);

  Mode mode() const noexcept { return mode_; }
  bool trainable() const noexcept { return trainable_; }
  void set_trainable(bool flag);

  // Padded rows of the output are zero in both modes.
  ad::Var forward(ad::Tape& tape, const ad::Var& x, std::span<const std::uint8_t> mask);
  ad::Var forward(ad::Tape& tape, const ad::Var& x, std::span<const std::uint8_t> mask) const;

  template <class F>
  void for_each_parameter(F&& f) {
    if (mode_ == Mode::Dense) layer_.for_each_parameter("neck", f);
  }
  template <class F>
  void for_each_parameter(F&& f) const {
    if (mode_ == Mode::Dense) layer_.for_each_parameter("neck", f);
  }

 private:
  template <class Self>
  static ad::Var forward_impl(Self& self, ad::Tape& tape, const ad::Var& x, std::span<const std::uint8_t> mask);

  Mode mode_ = Mode::Identity;
  bool trainable_ = false;
  Dense layer_;
};

using HeadNetwork = std::variant<BiLstmHead, TransformerHead>;

// A detachable classifier branch. A binary head owns one label and ends in a
// sigmoid; a group head owns several mutually exclusive labels and ends in a
// softmax.
class Head {
 public:
  Head(std::string name, std::vector<std::string> labels, HeadNetwork network, bool trainable = true);

  const std::string& name() const noexcept { return name_; }
  const std::vector<std::string>& labels() const noexcept { return labels_; }
  bool is_group() const noexcept { return labels_.size() > 1; }
  bool trainable() const noexcept { return trainable_; }
  void set_trainable(bool flag);
  Architecture architecture() const noexcept;
  Eigen::Index input_dim() const;

  HeadNetwork& network() noexcept { return network_; }
  const HeadNetwork& network() const noexcept { return network_; }

  // 1 x labels().size() probabilities.
  ad::Var forward(ad::Tape& tape, const ad::Var& features, std::span<const std::uint8_t> mask, bool training = false,
                  std::uint64_t seed = 0);
  ad::Var forward(ad::Tape& tape, const ad::Var& features, std::span<const std::uint8_t> mask, bool training = false,
                  std::uint64_t seed = 0) const;

  template <class F>
  void for_each_parameter(F&& f) {
    std::visit([&](auto& net) { net.for_each_parameter(f); }, network_);
  }
  template <class F>
  void for_each_parameter(F&& f) const {
    std::visit([&](const auto& net) { net.for_each_parameter(f); }, network_);
  }

 private:
  std::string name_;
  std::vector<std::string> labels_;
  bool trainable_ = true;
  HeadNetwork network_;
};

struct HeadOptions {
  Architecture architecture = Architecture::BiLstm;
  BiLstmConfig bilstm;            // input_dim/outputs are overwritten by make_head
  TransformerConfig transformer;  // likewise
};

// Group heads are made by passing more than one label.
Head make_head(std::string name, std::vector<std::string> labels, const HeadOptions& opts, Eigen::Index input_dim,
               std::uint64_t seed);

// Which part set_trainable addresses.
struct Component {
  enum class Kind { Neck, Head };
  Kind kind = Kind::Neck;
  std::string head;

  static Component neck() { return {Kind::Neck, {}}; }
  static Component head_named(std::string name) { return {Kind::Head, std::move(name)}; }
  // "neck", "head:<name>" or a bare head name.
  static Component parse(const std::string& text);
};

// Backbone id + optional neck + ordered heads. No gating: every head runs.
class HydranetModel {
 public:
  static constexpr std::uint32_t kFormatVersion = 1;

  HydranetModel(std::string backbone_id, Eigen::Index embedding_dim, BlockingConfig blocking,
                Neck neck = Neck::identity());

  const std::string& backbone_id() const noexcept { return backbone_id_; }
  Eigen::Index embedding_dim() const noexcept { return embedding_dim_; }
  const BlockingConfig& blocking() const noexcept { return blocking_; }
  Neck& neck() noexcept { return neck_; }
  const Neck& neck() const noexcept { return neck_; }

  std::vector<Head>& heads() noexcept { return heads_; }
  const std::vector<Head>& heads() const noexcept { return heads_; }
  // Labels of all heads, in head order; this is the prediction vector order.
  std::vector<std::string> labels() const;

  Head* find_head(std::string_view name);
  const Head* find_head(std::string_view name) const;

  // In-place surgery; the free functions below wrap these.
  void add_head(Head head, std::optional<std::size_t> position = std::nullopt);
  Head remove_head(std::string_view name);

 private:
  std::string backbone_id_;
  Eigen::Index embedding_dim_;
  BlockingConfig blocking_;
  Neck neck_;
  std::vector<Head> heads_;
};

// Throws InvalidArgument on a duplicate head name or label, ShapeError on a width
// mismatch. Positions past the end append.
HydranetModel attach_head(HydranetModel model, Head head, std::optional<std::size_t> position = std::nullopt);
HydranetModel attach_head(HydranetModel model, const std::string& label, const HeadOptions& opts,
                          std::uint64_t init_seed);
// Throws InvalidArgument for an unknown head. `removed`, if given, receives the head.
HydranetModel detach_head(HydranetModel model, std::string_view name, std::optional<Head>* removed = nullptr);
HydranetModel set_trainable(HydranetModel model, const Component& component, bool flag);

// A document ready for the network: masked features plus its block mask.
struct EncodedDocument {
  Matrix features;  // n_b x n_d, padded rows zero
  std::vector<std::uint8_t> mask;
};

// segment -> embed -> mask.
EncodedDocument encode_blocks(const BlockedDocument& doc, const EmbeddingBackend& backend, EmbeddingCache* cache);
EncodedDocument encode_text(std::string_view text, const BlockingConfig& cfg, const EmbeddingBackend& backend,
                            EmbeddingCache* cache);

// Neck then every head, eval mode. Throws InvalidArgument when the model has no heads.
std::vector<double> predict_encoded(const HydranetModel& model, const EncodedDocument& doc);
// Checks that `backend` is the model's backbone.
std::vector<double> predict(const HydranetModel& model, const EmbeddingBackend& backend, std::string_view text,
                            EmbeddingCache* cache = nullptr);

// Single self-describing file:
//   "HYDR" | u32 format_version | u64 manifest_len | manifest (UTF-8 JSON) |
//   tensors as little-endian float32, in manifest order.
// The manifest records every tensor's name, shape and CRC-32.
void save_model(const HydranetModel& model, const std::filesystem::path& path);
// Throws VersionError, ShapeMismatchError or CorruptError as appropriate.
HydranetModel load_model(const std::filesystem::path& path);

}  // namespace hydradoc
