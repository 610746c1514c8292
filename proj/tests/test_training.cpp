#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <sstream>

#include "hydradoc/error.hpp"
#include "hydradoc/training.hpp"
#include "json.hpp"
#include "support.hpp"

using namespace hydradoc;
using hydradoc::testing::keyword_classes;

namespace {

constexpr Eigen::Index kDim = 64;

BlockingConfig small_blocking() { return BlockingConfig(60, 600); }

HeadOptions small_options(Architecture arch) {
  HeadOptions o;
  o.architecture = arch;
  o.bilstm.units = 6;
  o.bilstm.dense1 = 6;
  o.bilstm.dense2 = 4;
  o.transformer.heads = 2;
  o.transformer.key_dim = 8;
  o.transformer.dense = 8;
  return o;
}

struct Fixture {
  HashingEmbedder backend{static_cast<std::size_t>(kDim)};
  Corpus corpus;
  TrainingSet data;
};

Fixture make_fixture(std::size_t classes, std::size_t per_class, std::uint64_t seed) {
  Fixture f;
  auto kc = keyword_classes();
  kc.resize(classes);
  SyntheticOptions opts;
  opts.docs_per_class = per_class;
  opts.doc_len_chars = 500;
  opts.seed = seed;
  f.corpus = synthetic_corpus(kc, opts);
  f.data = encode_corpus(f.corpus, f.corpus.vocabulary, small_blocking(), f.backend);
  return f;
}

HydranetModel make_model(const Fixture& f, const std::vector<std::string>& labels, Architecture arch,
                         std::uint64_t seed = 1) {
  HydranetModel m(f.backend.backend_id(), kDim, small_blocking());
  for (const auto& l : labels) {
    m.add_head(make_head(l, {l}, small_options(arch), kDim, ad::mix64(seed ^ stable_hash(l))));
  }
  return m;
}

std::map<std::string, Matrix> head_params(const Head& h) {
  std::map<std::string, Matrix> out;
  h.for_each_parameter([&](const std::string& n, const ad::Parameter& p) { out[n] = p.value; });
  return out;
}

TrainConfig quick(std::size_t epochs) {
  TrainConfig c;
  c.epochs = epochs;
  c.learning_rate = 1e-2;
  c.batch_size = 8;
  c.seed = 5;
  return c;
}

}  // namespace

TEST(ClassWeights, Example) {
  const ClassWeights w = class_weights(100, 20, 4);
  EXPECT_DOUBLE_EQ(w.negative, 100.0 / (80.0 * 4.0));
  EXPECT_DOUBLE_EQ(w.positive, 100.0 / (20.0 * 4.0));
}

TEST(ClassWeights, EachSideCarriesNOverK) {
  for (std::size_t n = 2; n < 60; n += 7) {
    for (std::size_t nk = 1; nk < n; nk += 3) {
      for (std::size_t k = 1; k < 6; ++k) {
        const ClassWeights w = class_weights(n, nk, k);
        EXPECT_NEAR(w.positive * static_cast<double>(nk), static_cast<double>(n) / static_cast<double>(k), 1e-12);
        EXPECT_NEAR(w.negative * static_cast<double>(n - nk), static_cast<double>(n) / static_cast<double>(k), 1e-12);
      }
    }
  }
}

TEST(ClassWeights, BalancedTwoLabelsGiveUnitWeights) {
  const ClassWeights w = class_weights(10, 5, 2);
  EXPECT_DOUBLE_EQ(w.negative, 1.0);
  EXPECT_DOUBLE_EQ(w.positive, 1.0);
}

TEST(ClassWeights, DegenerateInputs) {
  try {
    class_weights(10, 0, 2, "sport");
    FAIL();
  } catch (const DegenerateClassError& e) {
    EXPECT_EQ(e.label(), "sport");
  }
  EXPECT_THROW(class_weights(10, 10, 2, "x"), DegenerateClassError);
  EXPECT_THROW(class_weights(10, 3, 0), InvalidArgument);
}

TEST(WeightedBce, PlainExample) {
  const std::vector<double> y{1.0, 0.0}, p{0.8, 0.3};
  EXPECT_NEAR(weighted_bce(y, p, {}), -(std::log(0.8) + std::log(0.7)) / 2.0, 1e-15);
}

TEST(WeightedBce, WeightsScaleTheirSide) {
  const std::vector<double> y{1.0, 0.0}, p{0.8, 0.3};
  EXPECT_NEAR(weighted_bce(y, p, {2.0, 3.0}), -(3.0 * std::log(0.8) + 2.0 * std::log(0.7)) / 2.0, 1e-15);
}

TEST(WeightedBce, ClipsProbabilities) {
  const std::vector<double> y{1.0, 0.0}, p{0.0, 1.0};
  const double v = weighted_bce(y, p, {});
  EXPECT_TRUE(std::isfinite(v));
  EXPECT_NEAR(v, -std::log(1e-7), 1e-6);
}

TEST(WeightedBce, MismatchedLengths) {
  const std::vector<double> y{1.0}, p{0.5, 0.5};
  EXPECT_THROW(weighted_bce(y, p, {}), ShapeError);
}

TEST(WeightedBce, VarFormAgreesWithScalarForm) {
  SeededRng rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> y(7), p(7);
    for (std::size_t i = 0; i < 7; ++i) {
      y[i] = rng.below(2) ? 1.0 : 0.0;
      p[i] = rng.uniform(0.0, 1.0);
    }
    const ClassWeights w{rng.uniform(0.1, 3.0), rng.uniform(0.1, 3.0)};
    ad::Tape t;
    const ad::Var yhat = t.variable(Eigen::Map<const Matrix>(p.data(), 1, 7));
    const ad::Var l = weighted_bce(yhat, Eigen::Map<const Matrix>(y.data(), 1, 7), w);
    EXPECT_NEAR(l.scalar(), weighted_bce(y, p, w), 1e-14);
    t.backward(l);
    for (std::size_t i = 0; i < 7; ++i) {
      const double expected = y[i] == 1.0 ? -w.positive / (7.0 * p[i]) : w.negative / (7.0 * (1.0 - p[i]));
      EXPECT_NEAR((*t.grad(yhat))(0, static_cast<Eigen::Index>(i)), expected, 1e-9 * std::abs(expected));
    }
  }
}

TEST(CategoricalCrossEntropy, NegativeLogOfTarget) {
  ad::Tape t;
  Matrix p(1, 3);
  p << 0.2, 0.5, 0.3;
  const ad::Var v = t.variable(p);
  const ad::Var l = categorical_cross_entropy(v, 1);
  EXPECT_NEAR(l.scalar(), -std::log(0.5), 1e-15);
  t.backward(l);
  EXPECT_NEAR((*t.grad(v))(0, 1), -2.0, 1e-12);
  EXPECT_EQ((*t.grad(v))(0, 0), 0.0);
  EXPECT_THROW(categorical_cross_entropy(v, 3), ShapeError);
}

TEST(EncodeCorpus, TargetsAndPresence) {
  const HashingEmbedder backend(16);
  Corpus c;
  c.vocabulary = {"a", "b", "c"};
  c.documents.push_back({"first text", {"a"}, std::nullopt, "1"});
  c.documents.push_back({"second text", {"b", "c"}, std::vector<std::string>{"b", "c"}, "2"});
  const TrainingSet s = encode_corpus(c, {"c", "a"}, BlockingConfig(5, 20), backend);
  ASSERT_EQ(s.size(), 2u);
  EXPECT_EQ(s.labels, (std::vector<std::string>{"c", "a"}));
  Matrix targets(2, 2), presence(2, 2);
  targets << 0, 1, 1, 0;
  presence << 1, 1, 1, 0;
  EXPECT_EQ(s.targets, targets);
  EXPECT_EQ(s.presence, presence);
  EXPECT_EQ(s.docs[0].features.rows(), 4);
  EXPECT_EQ(s.docs[0].mask, (std::vector<std::uint8_t>{1, 1, 0, 0}));
}

TEST(Metrics, HandComputedExample) {
  Matrix pred(3, 2), targets(3, 2), presence = Matrix::Ones(3, 2);
  pred << 0.9, 0.2,  //
      0.6, 0.7,      //
      0.1, 0.4;
  targets << 1, 0,  //
      1, 0,         //
      0, 1;
  const Metrics m = compute_metrics(pred, targets, presence, {"x", "y"});
  EXPECT_EQ(m.documents, 3u);
  EXPECT_NEAR(m.accuracy, 2.0 / 3.0, 1e-15);
  // tp: (0,x),(1,x) ; fp: (1,y) ; fn: (2,y)
  EXPECT_NEAR(m.micro_f1, 4.0 / 6.0, 1e-15);
  EXPECT_NEAR(m.per_label.at("x").precision, 1.0, 1e-15);
  EXPECT_NEAR(m.per_label.at("x").recall, 1.0, 1e-15);
  EXPECT_NEAR(m.per_label.at("y").precision, 0.0, 1e-15);
  EXPECT_NEAR(m.per_label.at("y").recall, 0.0, 1e-15);
  EXPECT_EQ(m.per_label.at("y").support, 1u);
}

TEST(Metrics, AbsentEntriesAreIgnored) {
  Matrix pred(1, 2), targets(1, 2), presence(1, 2);
  pred << 0.1, 0.9;
  targets << 1, 0;
  presence << 1, 0;
  const Metrics m = compute_metrics(pred, targets, presence, {"x", "y"});
  EXPECT_EQ(m.accuracy, 1.0);
  EXPECT_EQ(m.per_label.at("y").support, 0u);
}

TEST(Metrics, NoDocumentsIsAnError) {
  EXPECT_THROW(compute_metrics(Matrix(0, 1), Matrix(0, 1), Matrix(0, 1), {"x"}), InvalidArgument);
}

TEST(Training, LearnsSeparableKeywordClasses) {
  for (Architecture arch : {Architecture::BiLstm, Architecture::Transformer}) {
    const Fixture f = make_fixture(2, 30, 11);
    HydranetModel model = make_model(f, f.corpus.vocabulary, arch);
    const TrainResult r = train(model, f.data, quick(8));
    ASSERT_EQ(r.history.size(), 16u);
    EXPECT_EQ(r.history.front().epoch, 1u);
    EXPECT_EQ(r.history.front().head, f.corpus.vocabulary[0]);
    EXPECT_EQ(r.history[1].head, f.corpus.vocabulary[1]);
    EXPECT_LT(r.history.back().loss, r.history.front().loss) << to_string(arch);
    EXPECT_GE(evaluate(model, f.data).accuracy, 0.95) << to_string(arch);
  }
}

TEST(Training, DeterministicForFixedSeed) {
  const Fixture f = make_fixture(2, 10, 3);
  HydranetModel a = make_model(f, f.corpus.vocabulary, Architecture::Transformer);
  HydranetModel b = make_model(f, f.corpus.vocabulary, Architecture::Transformer);
  const TrainResult ra = train(a, f.data, quick(2));
  const TrainResult rb = train(b, f.data, quick(2));
  for (std::size_t i = 0; i < ra.history.size(); ++i) EXPECT_EQ(ra.history[i].loss, rb.history[i].loss);
  for (std::size_t h = 0; h < a.heads().size(); ++h) EXPECT_EQ(head_params(a.heads()[h]), head_params(b.heads()[h]));
}

TEST(Training, HeadResultDoesNotDependOnOtherHeads) {
  const Fixture f = make_fixture(3, 8, 4);
  const std::string target = f.corpus.vocabulary[1];
  HydranetModel all = make_model(f, f.corpus.vocabulary, Architecture::Transformer);
  HydranetModel alone = make_model(f, {target}, Architecture::Transformer);
  train(all, f.data, quick(2));
  train(alone, f.data, quick(2));
  EXPECT_EQ(head_params(*all.find_head(target)), head_params(*alone.find_head(target)));
}

TEST(Training, ParallelHeadsMatchSequential) {
  const Fixture f = make_fixture(3, 8, 5);
  HydranetModel seq = make_model(f, f.corpus.vocabulary, Architecture::BiLstm);
  HydranetModel par = make_model(f, f.corpus.vocabulary, Architecture::BiLstm);
  TrainConfig cfg = quick(2);
  const TrainResult rs = train(seq, f.data, cfg);
  cfg.parallel_heads = 3;
  const TrainResult rp = train(par, f.data, cfg);
  ASSERT_EQ(rs.history.size(), rp.history.size());
  for (std::size_t i = 0; i < rs.history.size(); ++i) {
    EXPECT_EQ(rs.history[i].head, rp.history[i].head);
    EXPECT_EQ(rs.history[i].loss, rp.history[i].loss);
  }
  for (std::size_t h = 0; h < seq.heads().size(); ++h) EXPECT_EQ(head_params(seq.heads()[h]), head_params(par.heads()[h]));
}

TEST(Training, DocumentsWithUnknownLabelDoNotAffectThatHead) {
  const Fixture f = make_fixture(2, 10, 6);
  const std::string a = f.corpus.vocabulary[0];
  Corpus extended = f.corpus;
  Corpus extra = synthetic_corpus(std::vector<KeywordClass>{keyword_classes()[0], keyword_classes()[1]},
                                  SyntheticOptions{5, 500, 77, 0.3});
  for (Document d : extra.documents) {
    d.known_labels = std::vector<std::string>{f.corpus.vocabulary[1]};
    if (d.labels.front() == a) d.labels.clear();
    extended.documents.push_back(d);
  }
  const TrainingSet ext = encode_corpus(extended, extended.vocabulary, small_blocking(), f.backend);
  HydranetModel base = make_model(f, {a}, Architecture::Transformer);
  HydranetModel more = make_model(f, {a}, Architecture::Transformer);
  train(base, f.data, quick(2));
  train(more, ext, quick(2));
  EXPECT_EQ(head_params(base.heads()[0]), head_params(more.heads()[0]));
}

TEST(Training, FrozenHeadIsUntouched) {
  const Fixture f = make_fixture(2, 8, 7);
  HydranetModel m = make_model(f, f.corpus.vocabulary, Architecture::BiLstm);
  m.heads()[0].set_trainable(false);
  const auto before0 = head_params(m.heads()[0]);
  const auto before1 = head_params(m.heads()[1]);
  const TrainResult r = train(m, f.data, quick(1));
  EXPECT_EQ(head_params(m.heads()[0]), before0);
  EXPECT_NE(head_params(m.heads()[1]), before1);
  ASSERT_EQ(r.history.size(), 1u);
  EXPECT_EQ(r.history[0].head, m.heads()[1].name());
}

TEST(Training, DegenerateLabelNamesTheLabel) {
  const Fixture f = make_fixture(2, 6, 8);
  TrainingSet data = f.data;
  data.targets.col(0).setZero();
  HydranetModel m = make_model(f, f.corpus.vocabulary, Architecture::BiLstm);
  try {
    train(m, data, quick(1));
    FAIL();
  } catch (const DegenerateClassError& e) {
    EXPECT_EQ(e.label(), f.corpus.vocabulary[0]);
  }
}

TEST(Training, RejectsBadConfig) {
  const Fixture f = make_fixture(2, 4, 9);
  HydranetModel m = make_model(f, f.corpus.vocabulary, Architecture::BiLstm);
  TrainConfig cfg = quick(1);
  cfg.batch_size = 0;
  EXPECT_THROW(train(m, f.data, cfg), InvalidArgument);
  cfg = quick(1);
  cfg.learning_rate = -1.0;
  EXPECT_THROW(train(m, f.data, cfg), InvalidArgument);
}

TEST(Training, TrainableNeckIsUpdated) {
  const Fixture f = make_fixture(2, 8, 10);
  HydranetModel m(f.backend.backend_id(), kDim, small_blocking(), Neck::dense(kDim, 3));
  m.neck().set_trainable(true);
  for (const auto& l : f.corpus.vocabulary) m.add_head(make_head(l, {l}, small_options(Architecture::BiLstm), kDim, 4));
  std::vector<Matrix> before;
  m.neck().for_each_parameter([&](const std::string&, const ad::Parameter& p) { before.push_back(p.value); });
  const auto head_before = head_params(m.heads()[0]);
  train(m, f.data, quick(1));
  std::size_t i = 0;
  m.neck().for_each_parameter([&](const std::string&, const ad::Parameter& p) { EXPECT_NE(p.value, before[i++]); });
  EXPECT_NE(head_params(m.heads()[0]), head_before);
}

TEST(Training, GroupHeadLearnsExclusiveLabels) {
  const Fixture f = make_fixture(3, 12, 12);
  HydranetModel m(f.backend.backend_id(), kDim, small_blocking());
  const auto& v = f.corpus.vocabulary;
  m.add_head(make_head(v[0] + "+" + v[1] + "+" + v[2], v, small_options(Architecture::Transformer), kDim, 2));
  train(m, f.data, quick(10));
  const auto p = predict_encoded(m, f.data.docs[0]);
  EXPECT_NEAR(p[0] + p[1] + p[2], 1.0, 1e-12);
  EXPECT_GE(evaluate(m, f.data).accuracy, 0.9);
}

TEST(Finetune, OnlyNamedHeadsChangeAndFlagsAreRestored) {
  const Fixture f = make_fixture(2, 8, 13);
  HydranetModel m = make_model(f, f.corpus.vocabulary, Architecture::Transformer);
  m.heads()[1].set_trainable(false);
  const auto before0 = head_params(m.heads()[0]);
  const auto before1 = head_params(m.heads()[1]);
  finetune_heads(m, {m.heads()[1].name()}, f.data, quick(1));
  EXPECT_EQ(head_params(m.heads()[0]), before0);
  EXPECT_NE(head_params(m.heads()[1]), before1);
  EXPECT_TRUE(m.heads()[0].trainable());
  EXPECT_FALSE(m.heads()[1].trainable());
  EXPECT_THROW(finetune_heads(m, {"nope"}, f.data, quick(1)), InvalidArgument);
}

TEST(History, WritesOneJsonObjectPerLine) {
  std::ostringstream os;
  write_history(os, {{1, "a", 0.5, 0.75}, {2, "a", 0.25, 1.0}});
  std::istringstream is(os.str());
  std::string line;
  std::vector<nlohmann::json> rows;
  while (std::getline(is, line)) rows.push_back(nlohmann::json::parse(line));
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0]["epoch"], 1);
  EXPECT_EQ(rows[0]["head"], "a");
  EXPECT_EQ(rows[1]["loss"], 0.25);
  EXPECT_EQ(rows[1]["accuracy"], 1.0);
}

TEST(Evaluate, IgnoresLabelsTheModelDoesNotHave) {
  const Fixture f = make_fixture(3, 4, 14);
  HydranetModel m = make_model(f, {f.corpus.vocabulary[2]}, Architecture::BiLstm);
  const Metrics met = evaluate(m, f.data);
  EXPECT_EQ(met.per_label.size(), 1u);
  EXPECT_EQ(met.documents, f.data.size());
}
