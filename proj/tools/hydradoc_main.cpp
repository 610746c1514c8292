// hydradoc command-line interface.
//
// Exit codes: 0 success, 2 invalid config/input/label, 3 degenerate class,
// 1 anything else.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <iterator>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "hydradoc/error.hpp"
#include "hydradoc/explain.hpp"
#include "hydradoc/hydranet.hpp"
#include "hydradoc/layers.hpp"
#include "hydradoc/run_config.hpp"
#include "hydradoc/training.hpp"

namespace fs = std::filesystem;
using namespace hydradoc;

namespace {

constexpr int kExitInvalid = 2;
constexpr int kExitDegenerate = 3;

std::string read_input(const std::string& path) {
  if (path.empty() || path == "-") {
    return {std::istreambuf_iterator<char>(std::cin), std::istreambuf_iterator<char>()};
  }
  std::ifstream f(path, std::ios::binary);
  if (!f) throw InvalidArgument("cannot read " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

std::string format_prob(double p) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", p);
  return buf;
}

void apply_tau(HydranetModel& model, const std::optional<std::string>& tau) {
  if (!tau) return;
  const AttentionWindow w = AttentionWindow::parse(*tau);
  for (Head& h : model.heads()) {
    if (auto* t = std::get_if<TransformerHead>(&h.network())) t->set_window(w);
  }
}

// Optional on-disk embedding cache bound to a backend, saved on scope exit.
class CacheFile {
 public:
  CacheFile(const std::optional<fs::path>& path, const EmbeddingBackend& backend) : path_(path) {
    if (!path_) return;
    cache_.emplace(backend.backend_id(), backend.dim());
    if (fs::exists(*path_)) cache_->load(*path_);
  }
  ~CacheFile() {
    try {
      if (cache_) cache_->save(*path_);
    } catch (const std::exception& e) {
      std::cerr << "warning: could not save embedding cache: " << e.what() << '\n';
    }
  }
  EmbeddingCache* get() { return cache_ ? &*cache_ : nullptr; }

 private:
  std::optional<fs::path> path_;
  std::optional<EmbeddingCache> cache_;
};

nlohmann::json metrics_json(const Metrics& m) {
  nlohmann::json per = nlohmann::json::object();
  for (const auto& [label, lm] : m.per_label) {
    per[label] = {{"precision", lm.precision}, {"recall", lm.recall}, {"support", lm.support}};
  }
  return {{"documents", m.documents}, {"accuracy", m.accuracy}, {"micro_f1", m.micro_f1}, {"per_label", per}};
}

void print_metrics(const Metrics& m, bool as_json) {
  if (as_json) {
    std::cout << metrics_json(m).dump() << '\n';
    return;
  }
  std::printf("documents\t%zu\naccuracy\t%.6f\nmicro_f1\t%.6f\n", m.documents, m.accuracy, m.micro_f1);
  for (const auto& [label, lm] : m.per_label) {
    std::printf("%s\tprecision=%.6f\trecall=%.6f\tsupport=%zu\n", label.c_str(), lm.precision, lm.recall, lm.support);
  }
}

HydranetModel build_model(const RunConfig& rc, const EmbeddingBackend& backend, const std::vector<std::string>& labels) {
  const auto dim = static_cast<Eigen::Index>(backend.dim());
  Neck neck = rc.model.dense_neck ? Neck::dense(dim, ad::mix64(rc.seed ^ stable_hash("neck"))) : Neck::identity();
  if (rc.model.neck_trainable) neck.set_trainable(true);
  HydranetModel model(backend.backend_id(), dim, rc.blocking, std::move(neck));

  std::vector<std::string> grouped;
  for (const auto& g : rc.model.groups) {
    for (const auto& l : g) {
      if (std::find(labels.begin(), labels.end(), l) == labels.end()) {
        throw InvalidArgument("label group mentions unknown label '" + l + "'");
      }
      grouped.push_back(l);
    }
    std::string name;
    for (const auto& l : g) name += (name.empty() ? "" : "+") + l;
    model.add_head(make_head(name, g, rc.model.head, dim, ad::mix64(rc.seed ^ stable_hash(name))));
  }
  for (const auto& l : labels) {
    if (std::find(grouped.begin(), grouped.end(), l) != grouped.end()) continue;
    model.add_head(make_head(l, {l}, rc.model.head, dim, ad::mix64(rc.seed ^ stable_hash(l))));
  }
  return model;
}

struct Options {
  std::string config;
  std::string model;
  std::string out;
  std::string input;
  std::string data;
  std::string format;
  std::string history;
  std::string backend;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> tau;
  std::optional<std::size_t> parallel_heads;
  std::optional<std::size_t> epochs;
  std::vector<std::string> heads;
  bool json = false;
  // surgery
  std::string head;
  std::string label;
  std::string architecture = "bilstm";
  std::string from;
  std::string save_head;
  std::string component;
  std::optional<std::size_t> position;
};

RunConfig config_for(const Options& o) {
  RunConfig rc = o.config.empty() ? RunConfig{} : load_run_config(o.config);
  if (o.seed) rc.seed = rc.training.seed = *o.seed;
  if (o.tau) rc.model.head.transformer.window = AttentionWindow::parse(*o.tau);
  if (o.parallel_heads) rc.training.parallel_heads = *o.parallel_heads;
  if (o.epochs) rc.training.epochs = *o.epochs;
  if (!o.backend.empty()) apply_backend_override(rc.backend, o.backend);
  if (!o.data.empty()) rc.data.train = o.data;
  if (!o.format.empty()) {
    if (o.format == "directory") {
      rc.data.format = DataConfig::Format::Directory;
    } else if (o.format == "delimited") {
      rc.data.format = DataConfig::Format::Delimited;
    } else {
      throw InvalidArgument("--format must be 'directory' or 'delimited'");
    }
  }
  return rc;
}

Corpus require_corpus(const RunConfig& rc, const std::optional<fs::path>& path, const char* what) {
  if (!path) throw InvalidArgument(std::string("no ") + what + " dataset given");
  if (!fs::exists(*path)) throw InvalidArgument(std::string(what) + " dataset not found: " + path->string());
  Corpus corpus = load_corpus(rc.data, *path);
  for (const auto& w : corpus.warnings) std::cerr << "warning: " << w << '\n';
  return corpus;
}

void write_history_file(const std::string& path, const TrainResult& r) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path);
  write_history(f, r.history);
}

int cmd_train(const Options& o) {
  const RunConfig rc = config_for(o);
  Corpus train_set = require_corpus(rc, rc.data.train, "training");
  std::optional<Corpus> test_set;
  if (rc.data.test) {
    test_set = require_corpus(rc, rc.data.test, "test");
  } else {
    auto [tr, te] = split(train_set, rc.data.test_fraction, rc.seed);
    train_set = std::move(tr);
    test_set = std::move(te);
  }

  auto backend = make_backend(rc.backend);
  CacheFile cache(rc.backend.cache, *backend);
  HydranetModel model = build_model(rc, *backend, train_set.vocabulary);
  const TrainingSet data = encode_corpus(train_set, model.labels(), rc.blocking, *backend, cache.get());
  const TrainResult result = train(model, data, rc.training);

  save_model(model, o.out);
  write_history_file(o.history.empty() ? o.out + ".history.jsonl" : o.history, result);
  const TrainingSet test = encode_corpus(*test_set, model.labels(), rc.blocking, *backend, cache.get());
  print_metrics(evaluate(model, test), o.json);
  return 0;
}

int cmd_finetune(const Options& o) {
  RunConfig rc = config_for(o);
  HydranetModel model = load_model(o.model);
  apply_tau(model, o.tau);
  const Corpus corpus = require_corpus(rc, rc.data.train, "training");
  auto backend = backend_from_id(model.backbone_id(), rc.backend.remote);
  CacheFile cache(rc.backend.cache, *backend);
  const TrainingSet data = encode_corpus(corpus, model.labels(), model.blocking(), *backend, cache.get());
  const TrainResult result = finetune_heads(model, o.heads, data, rc.training);
  save_model(model, o.out);
  write_history_file(o.history.empty() ? o.out + ".history.jsonl" : o.history, result);
  return 0;
}

int cmd_eval(const Options& o) {
  const RunConfig rc = config_for(o);
  HydranetModel model = load_model(o.model);
  apply_tau(model, o.tau);
  const Corpus corpus = require_corpus(rc, rc.data.train, "evaluation");
  auto backend = backend_from_id(model.backbone_id(), rc.backend.remote);
  CacheFile cache(rc.backend.cache, *backend);
  const TrainingSet data = encode_corpus(corpus, model.labels(), model.blocking(), *backend, cache.get());
  print_metrics(evaluate(model, data), o.json);
  return 0;
}

int cmd_predict(const Options& o) {
  HydranetModel model = load_model(o.model);
  apply_tau(model, o.tau);
  const std::string text = read_input(o.input);
  auto backend = backend_from_id(model.backbone_id());
  const std::vector<double> p = predict(model, *backend, text);
  const std::vector<std::string> labels = model.labels();
  for (std::size_t i = 0; i < labels.size(); ++i) std::cout << labels[i] << '\t' << format_prob(p[i]) << '\n';
  return 0;
}

int cmd_explain(const Options& o) {
  HydranetModel model = load_model(o.model);
  apply_tau(model, o.tau);
  const std::string text = read_input(o.input);
  auto backend = backend_from_id(model.backbone_id());
  const PrefixPredictionMatrix m = time_distributed_predict(model, *backend, text);
  render_heatmap(m, o.out + ".csv", o.out + ".svg");
  std::cout << "label\tblock\tchar_begin\tchar_end\tprobability\n";
  for (const TriggerSpan& s : trigger_spans(m)) {
    std::printf("%s\t%zu\t%zu\t%zu\t%.6f\n", s.label.c_str(), s.block, s.char_begin, s.char_end, s.probability);
  }
  return 0;
}

int cmd_attach(const Options& o) {
  HydranetModel model = load_model(o.model);
  if (!o.from.empty()) {
    // Import a head from another model file with the same backbone.
    HydranetModel donor = load_model(o.from);
    if (donor.backbone_id() != model.backbone_id()) {
      throw InvalidArgument("head was trained on backbone '" + donor.backbone_id() + "'");
    }
    std::string name = o.head;
    if (name.empty()) {
      if (donor.heads().size() != 1) throw InvalidArgument("--head is required when the source has several heads");
      name = donor.heads().front().name();
    }
    std::optional<Head> h;
    donor = detach_head(std::move(donor), name, &h);
    model = attach_head(std::move(model), std::move(*h), o.position);
  } else {
    if (o.label.empty()) throw InvalidArgument("attach needs --label or --from");
    HeadOptions opts;
    opts.architecture = parse_architecture(o.architecture);
    if (o.tau) opts.transformer.window = AttentionWindow::parse(*o.tau);
    const std::uint64_t seed = ad::mix64(o.seed.value_or(0) ^ stable_hash(o.label));
    model = attach_head(std::move(model), make_head(o.label, {o.label}, opts, model.embedding_dim(), seed), o.position);
  }
  save_model(model, o.out);
  return 0;
}

int cmd_detach(const Options& o) {
  HydranetModel model = load_model(o.model);
  std::optional<Head> removed;
  model = detach_head(std::move(model), o.head, &removed);
  if (!o.save_head.empty()) {
    HydranetModel holder(model.backbone_id(), model.embedding_dim(), model.blocking());
    holder.add_head(std::move(*removed));
    save_model(holder, o.save_head);
  }
  save_model(model, o.out);
  return 0;
}

int cmd_freeze(const Options& o, bool flag) {
  HydranetModel model = load_model(o.model);
  model = set_trainable(std::move(model), Component::parse(o.component), flag);
  save_model(model, o.out);
  return 0;
}

int run(int argc, char** argv) {
  CLI::App app{"Long-document multi-label classification with detachable heads"};
  app.require_subcommand(1);
  Options o;

  auto common = [&](CLI::App* c) {
    c->add_option("--seed", o.seed, "Random seed");
    c->add_option("--tau", o.tau, "Attention window: 'global' or a non-negative integer");
  };

  auto* train_cmd = app.add_subcommand("train", "Train a model from a config file");
  train_cmd->add_option("--config", o.config, "JSON run config")->required();
  train_cmd->add_option("--out", o.out, "Model file to write")->required();
  train_cmd->add_option("--data", o.data, "Training dataset (overrides data.train)");
  train_cmd->add_option("--format", o.format, "directory | delimited");
  train_cmd->add_option("--backend", o.backend, "hash | http://endpoint");
  train_cmd->add_option("--parallel-heads", o.parallel_heads, "Train up to N heads concurrently");
  train_cmd->add_option("--epochs", o.epochs, "Override training.epochs");
  train_cmd->add_option("--history", o.history, "History JSONL path (default <out>.history.jsonl)");
  train_cmd->add_flag("--json", o.json, "Print test metrics as JSON");
  common(train_cmd);

  auto* finetune_cmd = app.add_subcommand("finetune", "Train only the named heads; everything else stays frozen");
  finetune_cmd->add_option("--model", o.model)->required();
  finetune_cmd->add_option("--out", o.out)->required();
  finetune_cmd->add_option("--heads", o.heads, "Heads to train")->required()->delimiter(',');
  finetune_cmd->add_option("--config", o.config, "JSON run config (training and data sections)");
  finetune_cmd->add_option("--data", o.data);
  finetune_cmd->add_option("--format", o.format);
  finetune_cmd->add_option("--epochs", o.epochs);
  finetune_cmd->add_option("--history", o.history);
  common(finetune_cmd);

  auto* eval_cmd = app.add_subcommand("eval", "Report accuracy and micro-F1 on a dataset");
  eval_cmd->add_option("--model", o.model)->required();
  eval_cmd->add_option("--data", o.data, "Dataset path (overrides data.train)");
  eval_cmd->add_option("--format", o.format, "directory | delimited");
  eval_cmd->add_option("--config", o.config);
  eval_cmd->add_flag("--json", o.json, "Print metrics as JSON");
  common(eval_cmd);

  auto* predict_cmd = app.add_subcommand("predict", "Print one 'label<TAB>probability' line per label");
  predict_cmd->add_option("--model", o.model)->required();
  predict_cmd->add_option("input", o.input, "Text file, or '-' for stdin");
  common(predict_cmd);

  auto* explain_cmd = app.add_subcommand("explain", "Write prefix-prediction heatmaps and trigger spans");
  explain_cmd->add_option("--model", o.model)->required();
  explain_cmd->add_option("--out", o.out, "Output prefix for .csv and .svg")->required();
  explain_cmd->add_option("input", o.input, "Text file, or '-' for stdin");
  common(explain_cmd);

  auto* surgery = app.add_subcommand("surgery", "Attach, detach, freeze or unfreeze parts of a model");
  surgery->require_subcommand(1);
  auto surgery_io = [&](CLI::App* c) {
    c->add_option("--model", o.model)->required();
    c->add_option("--out", o.out)->required();
  };
  auto* attach = surgery->add_subcommand("attach", "Add a fresh head, or import one from another model file");
  surgery_io(attach);
  attach->add_option("--label", o.label, "Label for a new binary head");
  attach->add_option("--arch", o.architecture, "bilstm | transformer");
  attach->add_option("--from", o.from, "Model file to take a head from");
  attach->add_option("--head", o.head, "Head name within --from");
  attach->add_option("--position", o.position, "Insert position (default: end)");
  common(attach);
  auto* detach = surgery->add_subcommand("detach", "Remove a head");
  surgery_io(detach);
  detach->add_option("--head", o.head)->required();
  detach->add_option("--save-head", o.save_head, "Also write the removed head to this model file");
  auto* freeze = surgery->add_subcommand("freeze", "Mark 'neck' or 'head:<name>' as not trainable");
  surgery_io(freeze);
  freeze->add_option("component", o.component)->required();
  auto* unfreeze = surgery->add_subcommand("unfreeze", "Mark 'neck' or 'head:<name>' as trainable");
  surgery_io(unfreeze);
  unfreeze->add_option("component", o.component)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitInvalid;
  }

  try {
    if (*train_cmd) return cmd_train(o);
    if (*finetune_cmd) return cmd_finetune(o);
    if (*eval_cmd) return cmd_eval(o);
    if (*predict_cmd) return cmd_predict(o);
    if (*explain_cmd) return cmd_explain(o);
    if (*attach) return cmd_attach(o);
    if (*detach) return cmd_detach(o);
    if (*freeze) return cmd_freeze(o, false);
    if (*unfreeze) return cmd_freeze(o, true);
  } catch (const DegenerateClassError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitDegenerate;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInvalid;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return kExitInvalid;
}

}  // namespace

int main(int argc, char** argv) { return run(argc, argv); }
