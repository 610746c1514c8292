#include <algorithm>
#include <fstream>
#include <mutex>

#include <sodium.h>

#include "binary_io.hpp"
#include "hydradoc/embedding.hpp"
#include "hydradoc/error.hpp"

namespace hydradoc {

namespace {
constexpr char kMagic[5] = {'H', 'D', 'E', 'C', '1'};
}

Digest text_digest(std::string_view text) {
  static const bool ready = sodium_init() >= 0;
  if (!ready) throw Error("libsodium initialisation failed");
  Digest d{};
  crypto_generichash(d.data(), d.size(), reinterpret_cast<const unsigned char*>(text.data()),
                     text.size(), nullptr, 0);
  return d;
}

std::size_t DigestHash::operator()(const Digest& d) const noexcept {
  std::size_t h = 0;
  std::memcpy(&h, d.data(), sizeof(h));
  return h;
}

EmbeddingCache::EmbeddingCache(std::string backend_id, std::size_t dim)
    : backend_id_(std::move(backend_id)), dim_(dim) {
  if (dim_ == 0) throw InvalidArgument("embedding cache dimension must be positive");
}

std::size_t EmbeddingCache::size() const {
  std::shared_lock lock(mutex_);
  return entries_.size();
}

std::optional<std::vector<float>> EmbeddingCache::get(std::string_view text) const {
  const Digest key = text_digest(text);
  std::shared_lock lock(mutex_);
  auto it = entries_.find(key);
  if (it == entries_.end()) {
    ++misses_;
    return std::nullopt;
  }
  ++hits_;
  return it->second;
}

void EmbeddingCache::put(std::string_view text, std::span<const float> vec) {
  if (vec.size() != dim_) throw DimensionMismatchError("cache entry has wrong dimension");
  const Digest key = text_digest(text);
  std::unique_lock lock(mutex_);
  entries_.insert_or_assign(key, std::vector<float>(vec.begin(), vec.end()));
}

void EmbeddingCache::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open embedding cache " + path.string());

  char magic[5];
  detail::read_exact(in, magic, 5, "cache magic");
  if (std::memcmp(magic, kMagic, 5) != 0) throw FormatError("not an embedding cache file: " + path.string());
  const std::uint32_t id_len = detail::read_u32(in, "backend id length");
  if (id_len > (1u << 16)) throw CorruptError("implausible backend id length in cache header");
  std::string id(id_len, '\0');
  detail::read_exact(in, id.data(), id_len, "backend id");
  const std::uint32_t n_d = detail::read_u32(in, "dimension");
  if (id != backend_id_) throw FormatError("cache file is for backend '" + id + "', expected '" + backend_id_ + "'");
  if (n_d != dim_) throw ShapeMismatchError("cache file dimension " + std::to_string(n_d) + " != " + std::to_string(dim_));

  std::unordered_map<Digest, std::vector<float>, DigestHash> loaded;
  while (in.peek() != std::char_traits<char>::eof()) {
    Digest key{};
    detail::read_exact(in, key.data(), key.size(), "record digest");
    std::vector<float> vec(dim_);
    detail::read_exact(in, vec.data(), dim_ * sizeof(float), "record vector");
    loaded.insert_or_assign(key, std::move(vec));
  }
  std::unique_lock lock(mutex_);
  for (auto& [k, v] : loaded) entries_.insert_or_assign(k, std::move(v));
}

void EmbeddingCache::save(const std::filesystem::path& path) const {
  std::vector<std::pair<Digest, const std::vector<float>*>> sorted;
  std::shared_lock lock(mutex_);
  sorted.reserve(entries_.size());
  for (const auto& [k, v] : entries_) sorted.emplace_back(k, &v);
  std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) { return a.first < b.first; });

  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write embedding cache " + tmp.string());
    out.write(kMagic, 5);
    detail::write_u32(out, static_cast<std::uint32_t>(backend_id_.size()));
    out.write(backend_id_.data(), static_cast<std::streamsize>(backend_id_.size()));
    detail::write_u32(out, static_cast<std::uint32_t>(dim_));
    for (const auto& [k, v] : sorted) {
      out.write(reinterpret_cast<const char*>(k.data()), static_cast<std::streamsize>(k.size()));
      out.write(reinterpret_cast<const char*>(v->data()), static_cast<std::streamsize>(v->size() * sizeof(float)));
    }
    if (!out) throw IoError("failed writing embedding cache " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace hydradoc
