#pragma once

#include <array>
#include <atomic>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "hydradoc/blocking.hpp"
#include "hydradoc/tensor.hpp"

namespace hydradoc {

// Seat of the sentence encoder. Implementations must be deterministic and must
// return a dense vector for the empty string (masking happens downstream).
class EmbeddingBackend {
 public:
  virtual ~EmbeddingBackend() = default;

  virtual std::string backend_id() const = 0;
  virtual std::size_t dim() const = 0;

  // One vector per text, same order. Throws on failure.
  virtual std::vector<std::vector<float>> embed(std::span<const std::string> texts) const = 0;
};

// Lowercases (ASCII, Latin-1, Greek, Cyrillic) and collapses whitespace runs to a
// single space, trimming both ends.
std::string normalize_text(std::string_view text);

// Signed feature hashing of character trigrams into n_d buckets, L2-normalized.
// Text that normalizes to nothing hashes the "<empty>" sentinel instead.
std::vector<float> hash_embed(std::string_view text, std::size_t n_d, std::uint64_t seed);

class HashingEmbedder final : public EmbeddingBackend {
 public:
  static constexpr std::size_t kDefaultDim = 512;

  explicit HashingEmbedder(std::size_t dim = kDefaultDim, std::uint64_t seed = 0);

  std::string backend_id() const override;
  std::size_t dim() const override { return dim_; }
  std::vector<std::vector<float>> embed(std::span<const std::string> texts) const override;

 private:
  std::size_t dim_;
  std::uint64_t seed_;
};

using Digest = std::array<std::uint8_t, 16>;

// BLAKE2b-128 of the UTF-8 bytes.
Digest text_digest(std::string_view text);

struct DigestHash {
  std::size_t operator()(const Digest& d) const noexcept;
};

// Persistent map from block-text digest to vector, bound to one backend.
// Concurrent readers, serialized writers.
//
// File layout (little-endian):
//   "HDEC1" | u32 id_len | id bytes | u32 n_d | records...
//   record = 16-byte digest | n_d x float32
class EmbeddingCache {
 public:
  EmbeddingCache(std::string backend_id, std::size_t dim);
  EmbeddingCache(const EmbeddingCache&) = delete;
  EmbeddingCache& operator=(const EmbeddingCache&) = delete;

  const std::string& backend_id() const noexcept { return backend_id_; }
  std::size_t dim() const noexcept { return dim_; }
  std::size_t size() const;

  std::optional<std::vector<float>> get(std::string_view text) const;
  void put(std::string_view text, std::span<const float> vec);

  // Merges entries from a cache file; throws FormatError on a header that does
  // not match this cache's backend or dimension.
  void load(const std::filesystem::path& path);
  // Writes every entry, sorted by digest, via a temporary file and rename.
  void save(const std::filesystem::path& path) const;

  std::size_t hits() const noexcept { return hits_.load(); }
  std::size_t misses() const noexcept { return misses_.load(); }

 private:
  std::string backend_id_;
  std::size_t dim_;
  mutable std::shared_mutex mutex_;
  std::unordered_map<Digest, std::vector<float>, DigestHash> entries_;
  mutable std::atomic<std::size_t> hits_{0};
  mutable std::atomic<std::size_t> misses_{0};
};

// Row i = backend(blocks[i]), padded rows included (they hold the backend's
// empty-string vector). Missing vectors are fetched in batches of at most 64
// distinct texts and written to the cache.
FeatureMatrix embed_blocks(const BlockedDocument& doc, const EmbeddingBackend& backend,
                           EmbeddingCache* cache = nullptr);

}  // namespace hydradoc
