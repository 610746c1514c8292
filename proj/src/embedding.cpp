#include "hydradoc/embedding.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <map>

#include "hydradoc/error.hpp"
#include "hydradoc/utf8.hpp"

namespace hydradoc {

namespace {

constexpr std::uint64_t kFnvOffset = 14695981039346656037ULL;
constexpr std::uint64_t kFnvPrime = 1099511628211ULL;
constexpr std::size_t kMaxBackendBatch = 64;

std::uint64_t mix64(std::uint64_t x) {
  x ^= x >> 30;
  x *= 0xbf58476d1ce4e5b9ULL;
  x ^= x >> 27;
  x *= 0x94d049bb133111ebULL;
  x ^= x >> 31;
  return x;
}

char32_t fold_case(char32_t c) {
  if (c >= U'A' && c <= U'Z') return c + 0x20;
  if (c >= 0xC0 && c <= 0xDE && c != 0xD7) return c + 0x20;
  if (c >= 0x391 && c <= 0x3A9 && c != 0x3A2) return c + 0x20;
  if (c >= 0x410 && c <= 0x42F) return c + 0x20;
  if (c >= 0x400 && c <= 0x40F) return c + 0x50;
  return c;
}

bool is_space(char32_t c) {
  switch (c) {
    case U' ': case U'\t': case U'\n': case U'\r': case U'\v': case U'\f':
    case 0xA0: case 0x1680: case 0x2028: case 0x2029: case 0x202F: case 0x205F: case 0x3000:
      return true;
    default:
      return c >= 0x2000 && c <= 0x200A;
  }
}

}  // namespace

std::string normalize_text(std::string_view text) {
  std::u32string out;
  bool pending_space = false;
  for (char32_t c : utf8::decode(text)) {
    if (is_space(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(U' ');
    pending_space = false;
    out.push_back(fold_case(c));
  }
  return utf8::encode(out);
}

std::vector<float> hash_embed(std::string_view text, std::size_t n_d, std::uint64_t seed) {
  if (n_d < 2) throw InvalidArgument("hash_embed: n_d must be >= 2");
  std::string normalized = normalize_text(text);
  if (normalized.empty()) normalized = "<empty>";

  // Word boundaries at both ends so short texts still produce trigrams.
  std::u32string chars = U" " + utf8::decode(normalized) + U" ";
  std::vector<double> acc(n_d, 0.0);
  const std::uint64_t basis = kFnvOffset ^ mix64(seed + 0x9e3779b97f4a7c15ULL);
  std::string gram;
  for (std::size_t i = 0; i + 3 <= chars.size(); ++i) {
    gram.clear();
    for (std::size_t k = 0; k < 3; ++k) utf8::append(gram, chars[i + k]);
    std::uint64_t h = basis;
    for (unsigned char b : gram) {
      h ^= b;
      h *= kFnvPrime;
    }
    h = mix64(h);
    const double sign = (h >> 63) ? -1.0 : 1.0;
    acc[h % n_d] += sign;
  }

  double norm2 = 0.0;
  for (double v : acc) norm2 += v * v;
  std::vector<float> out(n_d, 0.0f);
  if (norm2 == 0.0) {
    // Every trigram cancelled out; fall back to a fixed unit vector.
    out[0] = 1.0f;
    return out;
  }
  const double inv = 1.0 / std::sqrt(norm2);
  for (std::size_t i = 0; i < n_d; ++i) out[i] = static_cast<float>(acc[i] * inv);
  return out;
}

HashingEmbedder::HashingEmbedder(std::size_t dim, std::uint64_t seed) : dim_(dim), seed_(seed) {
  if (dim_ < 2) throw InvalidArgument("hashing embedder dimension must be >= 2");
}

std::string HashingEmbedder::backend_id() const {
  return "hash-trigram-v1:dim=" + std::to_string(dim_) + ":seed=" + std::to_string(seed_);
}

std::vector<std::vector<float>> HashingEmbedder::embed(std::span<const std::string> texts) const {
  std::vector<std::vector<float>> out;
  out.reserve(texts.size());
  for (const auto& t : texts) out.push_back(hash_embed(t, dim_, seed_));
  return out;
}

FeatureMatrix embed_blocks(const BlockedDocument& doc, const EmbeddingBackend& backend,
                           EmbeddingCache* cache) {
  const std::size_t n_d = backend.dim();
  if (cache != nullptr && (cache->backend_id() != backend.backend_id() || cache->dim() != n_d)) {
    throw InvalidArgument("embedding cache belongs to backend '" + cache->backend_id() +
                          "', not '" + backend.backend_id() + "'");
  }

  // Distinct texts -> block indices using them.
  std::map<std::string, std::vector<std::size_t>> wanted;
  for (std::size_t i = 0; i < doc.blocks.size(); ++i) wanted[doc.blocks[i]].push_back(i);

  std::map<std::string, std::vector<float>> vectors;
  std::vector<std::string> missing;
  for (const auto& [text, _] : wanted) {
    if (cache != nullptr) {
      if (auto hit = cache->get(text)) {
        vectors.emplace(text, std::move(*hit));
        continue;
      }
    }
    missing.push_back(text);
  }

  for (std::size_t start = 0; start < missing.size(); start += kMaxBackendBatch) {
    const std::size_t len = std::min(kMaxBackendBatch, missing.size() - start);
    std::span<const std::string> batch(missing.data() + start, len);
    auto failed_indices = [&] {
      std::vector<std::size_t> idx;
      for (const auto& t : batch) idx.insert(idx.end(), wanted[t].begin(), wanted[t].end());
      std::sort(idx.begin(), idx.end());
      return idx;
    };
    std::vector<std::vector<float>> got;
    try {
      got = backend.embed(batch);
    } catch (const DimensionMismatchError& e) {
      throw DimensionMismatchError(e.what(), failed_indices());
    } catch (const std::exception& e) {
      throw EmbeddingError(std::string("embedding backend failed: ") + e.what(), failed_indices());
    }
    if (got.size() != len) {
      throw EmbeddingError("embedding backend returned " + std::to_string(got.size()) +
                               " vectors for " + std::to_string(len) + " texts",
                           failed_indices());
    }
    for (std::size_t k = 0; k < len; ++k) {
      if (got[k].size() != n_d) {
        throw DimensionMismatchError("embedding backend returned dimension " +
                                         std::to_string(got[k].size()) + ", expected " +
                                         std::to_string(n_d),
                                     failed_indices());
      }
      if (cache != nullptr) cache->put(batch[k], got[k]);
      vectors.emplace(batch[k], std::move(got[k]));
    }
  }

  FeatureMatrix out(static_cast<Eigen::Index>(doc.blocks.size()), static_cast<Eigen::Index>(n_d));
  for (const auto& [text, rows] : wanted) {
    const auto& v = vectors.at(text);
    for (std::size_t r : rows) {
      std::memcpy(out.row(static_cast<Eigen::Index>(r)).data(), v.data(), n_d * sizeof(float));
    }
  }
  return out;
}

}  // namespace hydradoc
