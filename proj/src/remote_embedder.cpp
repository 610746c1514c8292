#include "hydradoc/remote_embedder.hpp"

#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "hydradoc/error.hpp"

namespace hydradoc {

namespace {

struct ParsedEndpoint {
  std::string origin;  // scheme://host[:port]
  std::string base_path;
};

ParsedEndpoint parse_endpoint(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw InvalidArgument("endpoint must be an http:// URL: " + url);
  if (url.compare(0, scheme_end, "http") != 0) throw InvalidArgument("only http endpoints are supported: " + url);
  const auto path_start = url.find('/', scheme_end + 3);
  ParsedEndpoint p;
  if (path_start == std::string::npos) {
    p.origin = url;
  } else {
    p.origin = url.substr(0, path_start);
    p.base_path = url.substr(path_start);
  }
  while (!p.base_path.empty() && p.base_path.back() == '/') p.base_path.pop_back();
  return p;
}

std::vector<std::vector<float>> parse_reply(const std::string& body, std::size_t n_texts, std::size_t dim) {
  nlohmann::json reply;
  try {
    reply = nlohmann::json::parse(body);
  } catch (const nlohmann::json::exception& e) {
    throw EmbeddingError(std::string("malformed embedding reply: ") + e.what());
  }
  if (!reply.is_object() || !reply.contains("embeddings") || !reply["embeddings"].is_array()) {
    throw EmbeddingError("embedding reply lacks an 'embeddings' array");
  }
  const auto& rows = reply["embeddings"];
  if (rows.size() != n_texts) {
    throw EmbeddingError("embedding reply has " + std::to_string(rows.size()) + " vectors for " +
                         std::to_string(n_texts) + " texts");
  }
  std::vector<std::vector<float>> out;
  out.reserve(rows.size());
  std::size_t expected = dim;
  for (const auto& row : rows) {
    if (!row.is_array()) throw EmbeddingError("embedding reply row is not an array");
    if (expected == 0) expected = row.size();
    if (row.size() != expected) {
      throw DimensionMismatchError("embedding reply dimension " + std::to_string(row.size()) +
                                   ", expected " + std::to_string(expected));
    }
    std::vector<float> v;
    v.reserve(row.size());
    for (const auto& x : row) {
      if (!x.is_number()) throw EmbeddingError("embedding reply contains a non-number");
      v.push_back(x.get<float>());
    }
    out.push_back(std::move(v));
  }
  return out;
}

}  // namespace

std::vector<std::vector<float>> remote_embed(std::span<const std::string> texts, const RemoteOptions& opts) {
  if (texts.size() > kMaxRemoteBatch) {
    throw InvalidArgument("remote batch of " + std::to_string(texts.size()) + " exceeds " +
                          std::to_string(kMaxRemoteBatch));
  }
  if (opts.retries < 0) throw InvalidArgument("retries must be >= 0");
  if (texts.empty()) return {};

  const ParsedEndpoint ep = parse_endpoint(opts.endpoint);
  const std::string body = nlohmann::json{{"texts", std::vector<std::string>(texts.begin(), texts.end())}}.dump();
  const std::string path = ep.base_path + "/v1/embed";

  std::string last_error;
  for (int attempt = 0; attempt <= opts.retries; ++attempt) {
    if (attempt > 0) std::this_thread::sleep_for(opts.backoff * (1LL << (attempt - 1)));
    httplib::Client client(ep.origin);
    const auto secs = std::chrono::duration_cast<std::chrono::seconds>(opts.timeout);
    const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(opts.timeout - secs);
    client.set_connection_timeout(secs.count(), usecs.count());
    client.set_read_timeout(secs.count(), usecs.count());
    client.set_write_timeout(secs.count(), usecs.count());

    auto res = client.Post(path, body, "application/json; charset=utf-8");
    if (!res) {
      last_error = "transport error: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status != 200) {
      last_error = "HTTP status " + std::to_string(res->status);
      continue;
    }
    return parse_reply(res->body, texts.size(), opts.dim);
  }
  throw EmbeddingError("remote embedding failed after " + std::to_string(opts.retries + 1) +
                       " attempts: " + last_error);
}

RemoteEmbedder::RemoteEmbedder(RemoteOptions opts) : opts_(std::move(opts)) {
  if (opts_.dim == 0) throw InvalidArgument("remote embedder needs the service dimension");
  parse_endpoint(opts_.endpoint);
}

std::string RemoteEmbedder::backend_id() const {
  return "remote:" + opts_.endpoint + ":dim=" + std::to_string(opts_.dim);
}

std::vector<std::vector<float>> RemoteEmbedder::embed(std::span<const std::string> texts) const {
  std::vector<std::vector<float>> out;
  out.reserve(texts.size());
  for (std::size_t start = 0; start < texts.size(); start += kMaxRemoteBatch) {
    const std::size_t len = std::min(kMaxRemoteBatch, texts.size() - start);
    auto part = remote_embed(texts.subspan(start, len), opts_);
    for (auto& v : part) out.push_back(std::move(v));
  }
  return out;
}

}  // namespace hydradoc
