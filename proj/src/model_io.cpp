#include <cstring>
#include <fstream>
#include <optional>
#include <sstream>

#include <json.hpp>
#include <zlib.h>

#include "binary_io.hpp"
#include "hydradoc/error.hpp"
#include "hydradoc/hydranet.hpp"

namespace hydradoc {

namespace {

using nlohmann::json;

constexpr char kMagic[4] = {'H', 'Y', 'D', 'R'};

std::vector<float> to_float(const Matrix& m) {
  std::vector<float> out(static_cast<std::size_t>(m.size()));
  for (Eigen::Index i = 0; i < m.size(); ++i) out[static_cast<std::size_t>(i)] = static_cast<float>(m.data()[i]);
  return out;
}

std::uint32_t crc_of(const std::vector<float>& v) {
  return static_cast<std::uint32_t>(
      crc32(0L, reinterpret_cast<const Bytef*>(v.data()), static_cast<uInt>(v.size() * sizeof(float))));
}

struct PendingTensor {
  std::string name;
  std::vector<float> data;
};

template <class Owner>
json describe_tensors(const Owner& owner, std::vector<PendingTensor>& blobs) {
  json list = json::array();
  owner.for_each_parameter([&](const std::string& name, const ad::Parameter& p) {
    auto data = to_float(p.value);
    list.push_back({{"name", name}, {"shape", {p.value.rows(), p.value.cols()}}, {"crc32", crc_of(data)}});
    blobs.push_back({name, std::move(data)});
  });
  return list;
}

json head_config(const Head& h) {
  if (const auto* b = std::get_if<BiLstmHead>(&h.network())) {
    const auto& c = b->config();
    return {{"input_dim", c.input_dim}, {"units", c.units}, {"dense1", c.dense1}, {"dense2", c.dense2},
            {"outputs", c.outputs}};
  }
  const auto& c = std::get<TransformerHead>(h.network()).config();
  return {{"input_dim", c.input_dim}, {"heads", c.heads},     {"key_dim", c.key_dim},
          {"dense", c.dense},         {"dropout", c.dropout}, {"outputs", c.outputs},
          {"window", c.window.to_string()}};
}

template <class T>
T field(const json& j, const char* key) {
  if (!j.contains(key)) throw CorruptError(std::string("manifest lacks '") + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw CorruptError(std::string("manifest field '") + key + "': " + e.what());
  }
}

HeadNetwork build_network(Architecture arch, const json& cfg) {
  if (arch == Architecture::BiLstm) {
    BiLstmConfig c;
    c.input_dim = field<Eigen::Index>(cfg, "input_dim");
    c.units = field<Eigen::Index>(cfg, "units");
    c.dense1 = field<Eigen::Index>(cfg, "dense1");
    c.dense2 = field<Eigen::Index>(cfg, "dense2");
    c.outputs = field<Eigen::Index>(cfg, "outputs");
    return BiLstmHead(c, 0);
  }
  TransformerConfig c;
  c.input_dim = field<Eigen::Index>(cfg, "input_dim");
  c.heads = field<std::size_t>(cfg, "heads");
  c.key_dim = field<Eigen::Index>(cfg, "key_dim");
  c.dense = field<Eigen::Index>(cfg, "dense");
  c.dropout = field<double>(cfg, "dropout");
  c.outputs = field<Eigen::Index>(cfg, "outputs");
  c.window = AttentionWindow::parse(field<std::string>(cfg, "window"));
  return TransformerHead(c, 0);
}

// Reads tensors listed in `manifest` into the parameters of `owner`, which must
// enumerate exactly the same names and shapes.
template <class Owner>
void read_tensors(std::istream& in, const json& manifest, Owner& owner, const std::string& where) {
  std::vector<std::pair<std::string, ad::Parameter*>> params;
  owner.for_each_parameter([&](const std::string& name, ad::Parameter& p) { params.emplace_back(name, &p); });
  if (!manifest.is_array() || manifest.size() != params.size()) {
    throw ShapeMismatchError(where + ": manifest lists " + std::to_string(manifest.is_array() ? manifest.size() : 0) +
                             " tensors, architecture has " + std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const json& t = manifest[i];
    const auto name = field<std::string>(t, "name");
    const auto shape = field<std::vector<long long>>(t, "shape");
    ad::Parameter& p = *params[i].second;
    if (name != params[i].first) {
      throw ShapeMismatchError(where + ": tensor " + std::to_string(i) + " is '" + name + "', expected '" +
                               params[i].first + "'");
    }
    if (shape.size() != 2 || shape[0] != p.value.rows() || shape[1] != p.value.cols()) {
      throw ShapeMismatchError(where + ": tensor '" + name + "' has shape [" +
                               (shape.size() == 2 ? std::to_string(shape[0]) + "," + std::to_string(shape[1]) : "?") +
                               "], expected [" + std::to_string(p.value.rows()) + "," +
                               std::to_string(p.value.cols()) + "]");
    }
    std::vector<float> data(static_cast<std::size_t>(p.value.size()));
    detail::read_exact(in, data.data(), data.size() * sizeof(float), "tensor data");
    if (crc_of(data) != field<std::uint32_t>(t, "crc32")) {
      throw CorruptError(where + ": checksum mismatch in tensor '" + name + "'");
    }
    for (std::size_t k = 0; k < data.size(); ++k) p.value.data()[k] = static_cast<double>(data[k]);
  }
}

}  // namespace

void save_model(const HydranetModel& model, const std::filesystem::path& path) {
  std::vector<PendingTensor> blobs;
  json manifest;
  manifest["backbone_id"] = model.backbone_id();
  manifest["embedding_dim"] = model.embedding_dim();
  manifest["blocking"] = {{"block_size", model.blocking().block_size()},
                          {"max_doc_chars", model.blocking().max_doc_chars()}};
  manifest["neck"] = {{"mode", model.neck().mode() == Neck::Mode::Identity ? "identity" : "dense"},
                      {"trainable", model.neck().trainable()},
                      {"tensors", describe_tensors(model.neck(), blobs)}};
  json heads = json::array();
  for (const Head& h : model.heads()) {
    heads.push_back({{"name", h.name()},
                     {"labels", h.labels()},
                     {"architecture", to_string(h.architecture())},
                     {"trainable", h.trainable()},
                     {"config", head_config(h)},
                     {"tensors", describe_tensors(h, blobs)}});
  }
  manifest["heads"] = std::move(heads);
  const std::string text = manifest.dump();

  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write model file " + tmp.string());
    out.write(kMagic, 4);
    detail::write_u32(out, HydranetModel::kFormatVersion);
    detail::write_u64(out, text.size());
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& b : blobs) {
      out.write(reinterpret_cast<const char*>(b.data.data()), static_cast<std::streamsize>(b.data.size() * sizeof(float)));
    }
    if (!out) throw IoError("failed writing model file " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

HydranetModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open model file " + path.string());
  char magic[4];
  detail::read_exact(in, magic, 4, "magic");
  if (std::memcmp(magic, kMagic, 4) != 0) throw CorruptError("not a hydranet model file: " + path.string());
  const std::uint32_t version = detail::read_u32(in, "format version");
  if (version != HydranetModel::kFormatVersion) {
    throw VersionError("unsupported model format version " + std::to_string(version) + " (this build reads " +
                       std::to_string(HydranetModel::kFormatVersion) + ")");
  }
  const std::uint64_t len = detail::read_u64(in, "manifest length");
  if (len > (1ULL << 32)) throw CorruptError("implausible manifest length");
  std::string text(len, '\0');
  detail::read_exact(in, text.data(), len, "manifest");
  json manifest;
  try {
    manifest = json::parse(text);
  } catch (const json::exception& e) {
    throw CorruptError(std::string("unreadable manifest: ") + e.what());
  }

  const json& blocking = manifest.value("blocking", json::object());
  BlockingConfig cfg(field<std::size_t>(blocking, "block_size"), field<std::size_t>(blocking, "max_doc_chars"));
  const auto dim = field<Eigen::Index>(manifest, "embedding_dim");

  const json& neck_json = manifest.value("neck", json::object());
  const auto neck_mode = field<std::string>(neck_json, "mode");
  Neck neck = Neck::identity();
  if (neck_mode == "dense") {
    neck = Neck::dense(dim, 0);
  } else if (neck_mode != "identity") {
    throw CorruptError("unknown neck mode '" + neck_mode + "'");
  }
  read_tensors(in, neck_json.value("tensors", json::array()), neck, "neck");
  neck.set_trainable(field<bool>(neck_json, "trainable"));

  HydranetModel model(field<std::string>(manifest, "backbone_id"), dim, cfg, std::move(neck));
  const json& heads = manifest.value("heads", json::array());
  for (const json& hj : heads) {
    const auto name = field<std::string>(hj, "name");
    Architecture arch;
    try {
      arch = parse_architecture(field<std::string>(hj, "architecture"));
    } catch (const InvalidArgument& e) {
      throw CorruptError(e.what());
    }
    const json& cfg_json = hj.contains("config") ? hj["config"] : json::object();
    if (field<Eigen::Index>(cfg_json, "input_dim") != dim) {
      throw ShapeMismatchError("head '" + name + "' input width does not match the embedding dimension");
    }
    std::optional<Head> head;
    try {
      head.emplace(name, field<std::vector<std::string>>(hj, "labels"), build_network(arch, cfg_json));
    } catch (const ShapeError& e) {
      throw ShapeMismatchError(e.what());
    } catch (const InvalidArgument& e) {
      throw CorruptError(e.what());
    }
    read_tensors(in, hj.value("tensors", json::array()), *head, "head '" + name + "'");
    head->set_trainable(field<bool>(hj, "trainable"));
    try {
      model.add_head(std::move(*head));
    } catch (const InvalidArgument& e) {
      throw CorruptError(e.what());
    }
  }
  if (in.peek() != std::char_traits<char>::eof()) throw CorruptError("trailing bytes after the last tensor");
  return model;
}

}  // namespace hydradoc
