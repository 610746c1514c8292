#include <gtest/gtest.h>

#include <fstream>
#include <set>

#include "hydradoc/corpus.hpp"
#include "hydradoc/error.hpp"
#include "support.hpp"

using namespace hydradoc;
using hydradoc::testing::keyword_classes;
using hydradoc::testing::TempDir;

namespace {

void write(const std::filesystem::path& p, const std::string& s) {
  std::filesystem::create_directories(p.parent_path());
  std::ofstream f(p, std::ios::binary);
  f << s;
}

std::size_t count_keywords(const std::string& text, const KeywordClass& cls) {
  std::size_t n = 0;
  std::set<std::string> kw(cls.keywords.begin(), cls.keywords.end());
  std::string word;
  for (char c : text + " ") {
    if (c == ' ') {
      n += kw.count(word);
      word.clear();
    } else {
      word += c;
    }
  }
  return n;
}

}  // namespace

TEST(DirectoryCorpus, ReadsClassesInOrder) {
  TempDir dir;
  write(dir / "sport" / "b.txt", "second sport");
  write(dir / "sport" / "a.txt", "first sport");
  write(dir / "business" / "001.txt", "money \xff bytes");
  write(dir / "business" / ".hidden", "ignored");
  std::filesystem::create_directories(dir / "empty");
  const Corpus c = load_directory_corpus(dir.path());
  EXPECT_EQ(c.vocabulary, (std::vector<std::string>{"business", "sport"}));
  ASSERT_EQ(c.size(), 3u);
  EXPECT_EQ(c.documents[0].labels, (std::vector<std::string>{"business"}));
  EXPECT_EQ(c.documents[0].text, "money \xEF\xBF\xBD bytes");
  EXPECT_EQ(c.documents[1].text, "first sport");
  EXPECT_EQ(c.documents[2].text, "second sport");
  ASSERT_EQ(c.warnings.size(), 1u);
  EXPECT_NE(c.warnings[0].find("empty"), std::string::npos);
  EXPECT_NO_THROW(c.validate());
}

TEST(DirectoryCorpus, MissingOrEmptyRoot) {
  TempDir dir;
  EXPECT_THROW(load_directory_corpus(dir / "absent"), IoError);
  EXPECT_THROW(load_directory_corpus(dir.path()), IoError);
}

TEST(DelimitedCorpus, SingleAndMultiLabel) {
  TempDir dir;
  write(dir / "d.tsv", "id\ttext\tlabel\n1\thello there\ta\n2\tgeneral news\tb|c\n");
  const Corpus single = load_delimited_corpus(dir / "d.tsv");
  EXPECT_EQ(single.documents[1].labels, (std::vector<std::string>{"b|c"}));
  DelimitedFormat fmt;
  fmt.label_separator = "|";
  const Corpus multi = load_delimited_corpus(dir / "d.tsv", fmt);
  EXPECT_EQ(multi.vocabulary, (std::vector<std::string>{"a", "b", "c"}));
  EXPECT_EQ(multi.documents[1].labels, (std::vector<std::string>{"b", "c"}));
  EXPECT_EQ(multi.documents[0].text, "hello there");
}

TEST(DelimitedCorpus, CustomColumnsAndDelimiter) {
  TempDir dir;
  write(dir / "d.csv", "topic,body\r\nx,some body text\r\n");
  DelimitedFormat fmt;
  fmt.delimiter = ',';
  fmt.text_column = "body";
  fmt.label_column = "topic";
  const Corpus c = load_delimited_corpus(dir / "d.csv", fmt);
  ASSERT_EQ(c.size(), 1u);
  EXPECT_EQ(c.documents[0].text, "some body text");
  EXPECT_EQ(c.documents[0].labels, (std::vector<std::string>{"x"}));
}

TEST(DelimitedCorpus, ErrorsCarryLineNumbers) {
  TempDir dir;
  auto line_of = [&](const std::string& content) -> std::size_t {
    write(dir / "e.tsv", content);
    try {
      load_delimited_corpus(dir / "e.tsv");
    } catch (const ParseError& e) {
      return e.line();
    }
    return 0;
  };
  EXPECT_EQ(line_of("text\tlabel\nok\ta\ttoo many\n"), 2u);
  EXPECT_EQ(line_of("text\tlabel\nok\ta\ntext\tlabel\n"), 3u);
  EXPECT_EQ(line_of("text\tlabel\nok\ta\n  \tb\n"), 3u);
  EXPECT_EQ(line_of("body\tlabel\n"), 1u);
  EXPECT_EQ(line_of(""), 1u);
}

TEST(Split, StratifiedAndDeterministic) {
  SyntheticOptions o;
  o.docs_per_class = 20;
  o.doc_len_chars = 100;
  const auto kc = keyword_classes();
  const Corpus c = synthetic_corpus(kc, o);
  const auto [train, test] = split(c, 0.25, 9);
  EXPECT_EQ(train.size(), 60u);
  EXPECT_EQ(test.size(), 20u);
  std::map<std::string, int> per_label;
  for (const auto& d : test.documents) per_label[d.labels[0]]++;
  for (const auto& [l, n] : per_label) EXPECT_EQ(n, 5) << l;
  const auto again = split(c, 0.25, 9);
  for (std::size_t i = 0; i < test.size(); ++i) EXPECT_EQ(test.documents[i].text, again.second.documents[i].text);
  std::set<std::string> all;
  for (const auto& d : train.documents) all.insert(d.source + d.text);
  for (const auto& d : test.documents) EXPECT_EQ(all.count(d.source + d.text), 0u);
}

TEST(Split, RejectsUnsplittableStrata) {
  Corpus c;
  c.vocabulary = {"a", "b"};
  c.documents = {{"x", {"a"}, std::nullopt, ""}, {"y", {"a"}, std::nullopt, ""}, {"z", {"b"}, std::nullopt, ""}};
  EXPECT_THROW(split(c, 0.5, 1), InvalidArgument);
  EXPECT_THROW(split(c, 0.0, 1), InvalidArgument);
}

TEST(Synthetic, DocumentsCarryTheirClassKeywords) {
  SyntheticOptions o;
  o.docs_per_class = 15;
  o.doc_len_chars = 400;
  o.seed = 3;
  const auto kc = keyword_classes();
  const Corpus c = synthetic_corpus(kc, o);
  ASSERT_EQ(c.size(), 60u);
  EXPECT_NO_THROW(c.validate());
  for (const auto& d : c.documents) {
    const auto& cls = *std::find_if(kc.begin(), kc.end(), [&](const auto& k) { return k.label == d.labels[0]; });
    EXPECT_GE(count_keywords(d.text, cls), 3u);
    EXPECT_LE(d.text.size(), 400u);
    for (const auto& other : kc) {
      if (other.label != cls.label) {
        EXPECT_EQ(count_keywords(d.text, other), 0u);
      }
    }
  }
  const Corpus again = synthetic_corpus(kc, o);
  EXPECT_EQ(again.documents[17].text, c.documents[17].text);
}

TEST(Synthetic, RejectsBadClasses) {
  const auto kc = keyword_classes();
  EXPECT_THROW(synthetic_corpus(std::span(kc).first(1), {}), InvalidArgument);
  std::vector<KeywordClass> shared{kc[0], {"other", {kc[0].keywords[0]}}};
  EXPECT_THROW(synthetic_corpus(shared, {}), InvalidArgument);
}

TEST(Synthetic, ConcatenatedDocumentHasBothLabels) {
  const auto kc = keyword_classes();
  const auto cd = concatenated_document(kc[0], kc[1], 500, 0.3, 4);
  EXPECT_EQ(cd.document.labels, (std::vector<std::string>{kc[0].label, kc[1].label}));
  EXPECT_EQ(cd.document.text.substr(0, cd.boundary_chars), synthetic_text(kc[0], 500, 0.3, ad::mix64(4 ^ 0xA)));
  EXPECT_EQ(cd.document.text[cd.boundary_chars], ' ');
  EXPECT_GE(count_keywords(cd.document.text.substr(0, cd.boundary_chars), kc[0]), 3u);
  EXPECT_EQ(count_keywords(cd.document.text.substr(0, cd.boundary_chars), kc[1]), 0u);
  EXPECT_GE(count_keywords(cd.document.text.substr(cd.boundary_chars + 1), kc[1]), 3u);
  EXPECT_EQ(count_keywords(cd.document.text.substr(cd.boundary_chars + 1), kc[0]), 0u);
}

TEST(Corpus, ValidateCatchesProblems) {
  Corpus c;
  c.vocabulary = {"a"};
  c.documents = {{"", {"a"}, std::nullopt, "s"}};
  EXPECT_THROW(c.validate(), InvalidArgument);
  c.documents = {{"t", {"b"}, std::nullopt, "s"}};
  EXPECT_THROW(c.validate(), InvalidArgument);
}
