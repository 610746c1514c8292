#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "hydradoc/blocking.hpp"
#include "hydradoc/corpus.hpp"
#include "hydradoc/embedding.hpp"
#include "hydradoc/hydranet.hpp"
#include "hydradoc/remote_embedder.hpp"
#include "hydradoc/training.hpp"

namespace hydradoc {

struct BackendConfig {
  enum class Kind { Hash, Remote };
  Kind kind = Kind::Hash;
  std::size_t dim = HashingEmbedder::kDefaultDim;
  std::uint64_t hash_seed = 0;
  RemoteOptions remote;
  std::optional<std::filesystem::path> cache;
};

struct DataConfig {
  enum class Format { Directory, Delimited };
  Format format = Format::Directory;
  std::optional<std::filesystem::path> train;
  // Without a test path, `test_fraction` of train is held out by stratified split.
  std::optional<std::filesystem::path> test;
  double test_fraction = 0.2;
  DelimitedFormat delimited;
};

struct ModelConfig {
  HeadOptions head;
  bool dense_neck = false;
  bool neck_trainable = false;
  // Mutually exclusive label groups, each trained as one softmax head.
  std::vector<std::vector<std::string>> groups;
};

// Everything a CLI run needs. Defaults: n_d 512, L 5000, s_b 100, batch 16,
// epochs 5, Adam(1e-3, 0.9, 0.99, 1e-8), Bi-LSTM heads, global window.
struct RunConfig {
  std::uint64_t seed = 0;
  BlockingConfig blocking;
  BackendConfig backend;
  ModelConfig model;
  TrainConfig training;
  DataConfig data;
};

// JSON object whose keys mirror RunConfig. Missing keys keep their defaults;
// unknown keys, wrong types and out-of-range values throw InvalidArgument.
RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::filesystem::path& path);

std::unique_ptr<EmbeddingBackend> make_backend(const BackendConfig& cfg);
// Rebuilds the backend a model was trained with from its backbone id.
std::unique_ptr<EmbeddingBackend> backend_from_id(const std::string& backbone_id, const RemoteOptions& remote = {});

// Applies a "--backend" override: "hash" or an http:// endpoint.
void apply_backend_override(BackendConfig& cfg, const std::string& value);

Corpus load_corpus(const DataConfig& cfg, const std::filesystem::path& path);

}  // namespace hydradoc
