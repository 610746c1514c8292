#include "hydradoc/run_config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "hydradoc/error.hpp"

namespace hydradoc {

namespace {

using nlohmann::json;

void check_keys(const json& obj, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) throw InvalidArgument("config: '" + where + "' must be an object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, _] : obj.items()) {
    if (ok.count(key) == 0) throw InvalidArgument("config: unknown key '" + where + (where.empty() ? "" : ".") + key + "'");
  }
}

template <class T>
void read(const json& obj, const char* key, T& out, const std::string& where) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw InvalidArgument("config: '" + where + "." + key + "' has the wrong type");
  }
}

std::size_t read_count(const json& obj, const char* key, std::size_t fallback, const std::string& where,
                       std::size_t min = 1) {
  if (!obj.contains(key)) return fallback;
  const json& v = obj.at(key);
  if (!v.is_number_integer() || v.get<long long>() < static_cast<long long>(min)) {
    throw InvalidArgument("config: '" + where + "." + key + "' must be an integer >= " + std::to_string(min));
  }
  return v.get<std::size_t>();
}

double read_real(const json& obj, const char* key, double fallback, const std::string& where, double lo, double hi,
                 bool lo_open = true) {
  if (!obj.contains(key)) return fallback;
  const json& v = obj.at(key);
  if (!v.is_number()) throw InvalidArgument("config: '" + where + "." + key + "' must be a number");
  const double d = v.get<double>();
  if ((lo_open ? d <= lo : d < lo) || d >= hi) {
    throw InvalidArgument("config: '" + where + "." + key + "' is out of range");
  }
  return d;
}

char read_char(const json& obj, const char* key, char fallback, const std::string& where) {
  if (!obj.contains(key)) return fallback;
  std::string s;
  read(obj, key, s, where);
  if (s.size() != 1) throw InvalidArgument("config: '" + where + "." + key + "' must be one character");
  return s[0];
}

void parse_blocking(const json& j, RunConfig& rc) {
  check_keys(j, "blocking", {"block_size", "max_doc_chars"});
  const std::size_t sb = read_count(j, "block_size", rc.blocking.block_size(), "blocking");
  const std::size_t l = read_count(j, "max_doc_chars", rc.blocking.max_doc_chars(), "blocking");
  rc.blocking = BlockingConfig(sb, l);
}

void parse_backend(const json& j, BackendConfig& b) {
  check_keys(j, "backend", {"kind", "dim", "seed", "endpoint", "timeout_ms", "retries", "backoff_ms", "cache"});
  if (j.contains("kind")) {
    std::string kind;
    read(j, "kind", kind, "backend");
    if (kind == "hash") {
      b.kind = BackendConfig::Kind::Hash;
    } else if (kind == "remote") {
      b.kind = BackendConfig::Kind::Remote;
    } else {
      throw InvalidArgument("config: backend.kind must be 'hash' or 'remote'");
    }
  }
  b.dim = read_count(j, "dim", b.dim, "backend", 2);
  read(j, "seed", b.hash_seed, "backend");
  read(j, "endpoint", b.remote.endpoint, "backend");
  b.remote.timeout = std::chrono::milliseconds(read_count(j, "timeout_ms", b.remote.timeout.count(), "backend"));
  b.remote.retries = static_cast<int>(read_count(j, "retries", static_cast<std::size_t>(b.remote.retries), "backend", 0));
  b.remote.backoff = std::chrono::milliseconds(read_count(j, "backoff_ms", b.remote.backoff.count(), "backend", 0));
  if (j.contains("cache")) {
    std::string p;
    read(j, "cache", p, "backend");
    b.cache = p;
  }
  if (b.kind == BackendConfig::Kind::Remote && b.remote.endpoint.empty()) {
    throw InvalidArgument("config: a remote backend needs backend.endpoint");
  }
}

void parse_model(const json& j, ModelConfig& m) {
  check_keys(j, "model", {"architecture", "window", "neck", "neck_trainable", "groups", "bilstm", "transformer"});
  if (j.contains("architecture")) {
    std::string a;
    read(j, "architecture", a, "model");
    try {
      m.head.architecture = parse_architecture(a);
    } catch (const Error&) {
      throw InvalidArgument("config: model.architecture must be 'bilstm' or 'transformer'");
    }
  }
  if (j.contains("window")) {
    const json& w = j.at("window");
    try {
      m.head.transformer.window =
          w.is_number_integer() ? AttentionWindow::band(w.get<long long>()) : AttentionWindow::parse(w.get<std::string>());
    } catch (const std::exception&) {
      throw InvalidArgument("config: model.window must be 'global' or a non-negative integer");
    }
  }
  if (j.contains("neck")) {
    std::string n;
    read(j, "neck", n, "model");
    if (n != "identity" && n != "dense") throw InvalidArgument("config: model.neck must be 'identity' or 'dense'");
    m.dense_neck = n == "dense";
  }
  read(j, "neck_trainable", m.neck_trainable, "model");
  if (m.neck_trainable && !m.dense_neck) throw InvalidArgument("config: an identity neck cannot be trainable");
  read(j, "groups", m.groups, "model");
  for (const auto& g : m.groups) {
    if (g.size() < 2) throw InvalidArgument("config: every label group needs at least two labels");
  }
  if (j.contains("bilstm")) {
    const json& b = j.at("bilstm");
    check_keys(b, "model.bilstm", {"units", "dense1", "dense2"});
    auto& c = m.head.bilstm;
    c.units = static_cast<Eigen::Index>(read_count(b, "units", static_cast<std::size_t>(c.units), "model.bilstm"));
    c.dense1 = static_cast<Eigen::Index>(read_count(b, "dense1", static_cast<std::size_t>(c.dense1), "model.bilstm"));
    c.dense2 = static_cast<Eigen::Index>(read_count(b, "dense2", static_cast<std::size_t>(c.dense2), "model.bilstm"));
  }
  if (j.contains("transformer")) {
    const json& t = j.at("transformer");
    check_keys(t, "model.transformer", {"heads", "key_dim", "dense", "dropout"});
    auto& c = m.head.transformer;
    c.heads = static_cast<Eigen::Index>(read_count(t, "heads", static_cast<std::size_t>(c.heads), "model.transformer"));
    c.key_dim =
        static_cast<Eigen::Index>(read_count(t, "key_dim", static_cast<std::size_t>(c.key_dim), "model.transformer"));
    c.dense = static_cast<Eigen::Index>(read_count(t, "dense", static_cast<std::size_t>(c.dense), "model.transformer"));
    c.dropout = read_real(t, "dropout", c.dropout, "model.transformer", 0.0, 1.0, false);
  }
}

void parse_training(const json& j, TrainConfig& t) {
  check_keys(j, "training",
             {"batch_size", "epochs", "learning_rate", "beta1", "beta2", "epsilon", "loss", "parallel_heads"});
  t.batch_size = read_count(j, "batch_size", t.batch_size, "training");
  t.epochs = read_count(j, "epochs", t.epochs, "training");
  t.learning_rate = read_real(j, "learning_rate", t.learning_rate, "training", 0.0, 1e9);
  t.beta1 = read_real(j, "beta1", t.beta1, "training", 0.0, 1.0, false);
  t.beta2 = read_real(j, "beta2", t.beta2, "training", 0.0, 1.0, false);
  t.epsilon = read_real(j, "epsilon", t.epsilon, "training", 0.0, 1.0);
  t.parallel_heads = read_count(j, "parallel_heads", t.parallel_heads, "training");
  if (j.contains("loss")) {
    std::string l;
    read(j, "loss", l, "training");
    if (l == "weighted_bce") {
      t.loss = LossKind::WeightedBce;
    } else if (l == "bce") {
      t.loss = LossKind::Bce;
    } else {
      throw InvalidArgument("config: training.loss must be 'weighted_bce' or 'bce'");
    }
  }
}

void parse_data(const json& j, DataConfig& d) {
  check_keys(j, "data",
             {"format", "train", "test", "test_fraction", "delimiter", "text_column", "label_column", "label_separator"});
  if (j.contains("format")) {
    std::string f;
    read(j, "format", f, "data");
    if (f == "directory") {
      d.format = DataConfig::Format::Directory;
    } else if (f == "delimited") {
      d.format = DataConfig::Format::Delimited;
    } else {
      throw InvalidArgument("config: data.format must be 'directory' or 'delimited'");
    }
  }
  std::string p;
  if (j.contains("train")) read(j, "train", p, "data"), d.train = p;
  if (j.contains("test")) read(j, "test", p, "data"), d.test = p;
  d.test_fraction = read_real(j, "test_fraction", d.test_fraction, "data", 0.0, 1.0);
  d.delimited.delimiter = read_char(j, "delimiter", d.delimited.delimiter, "data");
  read(j, "text_column", d.delimited.text_column, "data");
  read(j, "label_column", d.delimited.label_column, "data");
  read(j, "label_separator", d.delimited.label_separator, "data");
}

}  // namespace

RunConfig parse_run_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw InvalidArgument(std::string("config: not valid JSON: ") + e.what());
  }
  RunConfig rc;
  check_keys(j, "", {"seed", "blocking", "backend", "model", "training", "data"});
  read(j, "seed", rc.seed, "");
  if (j.contains("blocking")) parse_blocking(j.at("blocking"), rc);
  if (j.contains("backend")) parse_backend(j.at("backend"), rc.backend);
  if (j.contains("model")) parse_model(j.at("model"), rc.model);
  if (j.contains("training")) parse_training(j.at("training"), rc.training);
  if (j.contains("data")) parse_data(j.at("data"), rc.data);
  rc.training.seed = rc.seed;
  return rc;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw InvalidArgument("config: cannot read " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_run_config(ss.str());
}

std::unique_ptr<EmbeddingBackend> make_backend(const BackendConfig& cfg) {
  if (cfg.kind == BackendConfig::Kind::Hash) return std::make_unique<HashingEmbedder>(cfg.dim, cfg.hash_seed);
  RemoteOptions opts = cfg.remote;
  opts.dim = cfg.dim;
  return std::make_unique<RemoteEmbedder>(opts);
}

std::unique_ptr<EmbeddingBackend> backend_from_id(const std::string& id, const RemoteOptions& remote) {
  const std::string hash_prefix = "hash-trigram-v1:dim=";
  if (id.rfind(hash_prefix, 0) == 0) {
    const auto seed_at = id.find(":seed=", hash_prefix.size());
    if (seed_at != std::string::npos) {
      try {
        const std::size_t dim = std::stoull(id.substr(hash_prefix.size(), seed_at - hash_prefix.size()));
        const std::uint64_t seed = std::stoull(id.substr(seed_at + 6));
        auto b = std::make_unique<HashingEmbedder>(dim, seed);
        if (b->backend_id() == id) return b;
      } catch (const std::exception&) {
      }
    }
  } else if (id.rfind("remote:", 0) == 0) {
    const auto dim_at = id.rfind(":dim=");
    if (dim_at != std::string::npos && dim_at > 7) {
      RemoteOptions opts = remote;
      opts.endpoint = id.substr(7, dim_at - 7);
      try {
        opts.dim = std::stoull(id.substr(dim_at + 5));
      } catch (const std::exception&) {
        throw InvalidArgument("unrecognised backbone id '" + id + "'");
      }
      return std::make_unique<RemoteEmbedder>(opts);
    }
  }
  throw InvalidArgument("unrecognised backbone id '" + id + "'");
}

void apply_backend_override(BackendConfig& cfg, const std::string& value) {
  if (value == "hash") {
    cfg.kind = BackendConfig::Kind::Hash;
  } else if (value.rfind("http://", 0) == 0) {
    cfg.kind = BackendConfig::Kind::Remote;
    cfg.remote.endpoint = value;
  } else {
    throw InvalidArgument("--backend must be 'hash' or an http:// endpoint");
  }
}

Corpus load_corpus(const DataConfig& cfg, const std::filesystem::path& path) {
  return cfg.format == DataConfig::Format::Directory ? load_directory_corpus(path)
                                                     : load_delimited_corpus(path, cfg.delimited);
}

}  // namespace hydradoc
