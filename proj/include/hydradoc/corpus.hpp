#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace hydradoc {

struct Document {
  std::string text;
  std::vector<std::string> labels;
  // Labels whose presence/absence is actually known for this document. Unset
  // means every vocabulary label is known.
  std::optional<std::vector<std::string>> known_labels;
  std::string source;
};

struct Corpus {
  std::vector<Document> documents;
  std::vector<std::string> vocabulary;  // sorted
  std::string provenance;
  std::vector<std::string> warnings;

  std::size_t size() const noexcept { return documents.size(); }
  // Throws InvalidArgument if a text is empty or a label is outside the vocabulary.
  void validate() const;
};

// One subdirectory per class holding plain-text files (the BBC layout). Label is
// the directory name; files are read in lexicographic order and decoded as lossy
// UTF-8. Empty class directories produce a warning, not an error.
Corpus load_directory_corpus(const std::filesystem::path& root);

struct DelimitedFormat {
  char delimiter = '\t';
  std::string text_column = "text";
  std::string label_column = "label";
  // Non-empty: the label field holds several labels separated by this string.
  std::string label_separator;
};

// Header line with column names, then one record per line. Throws ParseError
// (with the 1-based line) on a wrong field count, a repeated header or an empty
// text.
Corpus load_delimited_corpus(const std::filesystem::path& file, const DelimitedFormat& format = {});

// Stratified by label set, seeded shuffle within each stratum. Throws
// InvalidArgument when a stratum has fewer than 2 documents or would leave one
// side empty.
std::pair<Corpus, Corpus> split(const Corpus& corpus, double test_fraction, std::uint64_t seed);

struct KeywordClass {
  std::string label;
  std::vector<std::string> keywords;
};

struct SyntheticOptions {
  std::size_t docs_per_class = 100;
  std::size_t doc_len_chars = 1000;
  std::uint64_t seed = 0;
  // Probability that a word slot holds a class keyword instead of filler.
  double keyword_rate = 0.3;
};

// Filler words shared by every class.
const std::vector<std::string>& default_filler_words();

// Documents of filler words with class keywords planted at random positions;
// each has at least 3 keywords of its class. Throws InvalidArgument for fewer
// than 2 classes or keywords shared between classes.
Corpus synthetic_corpus(std::span<const KeywordClass> classes, const SyntheticOptions& opts);

// One synthetic document of roughly `len_chars` characters.
std::string synthetic_text(const KeywordClass& cls, std::size_t len_chars, double keyword_rate, std::uint64_t seed);

// Two single-class documents joined by a space, labelled with both classes.
struct ConcatenatedDocument {
  Document document;
  std::size_t boundary_chars = 0;  // length of the first part
};

ConcatenatedDocument concatenated_document(const KeywordClass& first, const KeywordClass& second,
                                           std::size_t part_len_chars, double keyword_rate, std::uint64_t seed);

}  // namespace hydradoc
