#pragma once

#include <chrono>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "hydradoc/embedding.hpp"

namespace hydradoc {

struct RemoteOptions {
  // Base URL, e.g. "http://localhost:8501" or "http://host:8080/encoder".
  std::string endpoint;
  // Expected vector length; 0 accepts whatever the service returns as long as it
  // is consistent within a response.
  std::size_t dim = 0;
  std::chrono::milliseconds timeout{10000};
  int retries = 3;
  std::chrono::milliseconds backoff{100};
};

inline constexpr std::size_t kMaxRemoteBatch = 64;

// POST {endpoint}/v1/embed {"texts": [...]} -> {"embeddings": [[...], ...]}.
// Transport failures and non-200 replies are retried with exponential backoff
// (backoff, 2*backoff, ...). Dimension mismatches are not retried.
std::vector<std::vector<float>> remote_embed(std::span<const std::string> texts, const RemoteOptions& opts);

class RemoteEmbedder final : public EmbeddingBackend {
 public:
  explicit RemoteEmbedder(RemoteOptions opts);

  std::string backend_id() const override;
  std::size_t dim() const override { return opts_.dim; }
  std::vector<std::vector<float>> embed(std::span<const std::string> texts) const override;

 private:
  RemoteOptions opts_;
};

}  // namespace hydradoc
