#include "hydradoc/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "hydradoc/error.hpp"
#include "hydradoc/layers.hpp"
#include "hydradoc/utf8.hpp"

namespace hydradoc {

namespace fs = std::filesystem;

namespace {

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw IoError("cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

bool blank(const std::string& s) {
  return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c) != 0; });
}

std::vector<std::string> split_fields(const std::string& line, char delim) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == delim) {
      out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(std::move(cur));
  return out;
}

std::vector<std::string> split_labels(const std::string& field, const std::string& sep) {
  std::vector<std::string> out;
  if (sep.empty()) {
    out.push_back(field);
  } else {
    std::size_t start = 0;
    while (true) {
      const auto pos = field.find(sep, start);
      out.push_back(field.substr(start, pos == std::string::npos ? std::string::npos : pos - start));
      if (pos == std::string::npos) break;
      start = pos + sep.size();
    }
  }
  for (auto& l : out) {
    l.erase(0, l.find_first_not_of(" \t"));
    l.erase(l.find_last_not_of(" \t") + 1);
  }
  out.erase(std::remove(out.begin(), out.end(), std::string()), out.end());
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

void finalize_vocabulary(Corpus& c) {
  std::set<std::string> vocab(c.vocabulary.begin(), c.vocabulary.end());
  for (const auto& d : c.documents) vocab.insert(d.labels.begin(), d.labels.end());
  c.vocabulary.assign(vocab.begin(), vocab.end());
}

}  // namespace

void Corpus::validate() const {
  const std::set<std::string> vocab(vocabulary.begin(), vocabulary.end());
  for (const auto& d : documents) {
    if (d.text.empty()) throw InvalidArgument("document '" + d.source + "' is empty");
    for (const auto& l : d.labels) {
      if (vocab.count(l) == 0) throw InvalidArgument("label '" + l + "' is not in the vocabulary");
    }
  }
}

Corpus load_directory_corpus(const fs::path& root) {
  if (!fs::is_directory(root)) throw IoError("corpus root is not a directory: " + root.string());
  std::vector<fs::path> classes;
  for (const auto& e : fs::directory_iterator(root)) {
    if (e.is_directory() && e.path().filename().string().front() != '.') classes.push_back(e.path());
  }
  if (classes.empty()) throw IoError("corpus root has no class directories: " + root.string());
  std::sort(classes.begin(), classes.end());

  Corpus c;
  c.provenance = "directory:" + root.string();
  for (const auto& dir : classes) {
    const std::string label = dir.filename().string();
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir)) {
      if (e.is_regular_file() && e.path().filename().string().front() != '.') files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) {
      c.warnings.push_back("class directory '" + label + "' is empty");
      continue;
    }
    c.vocabulary.push_back(label);
    for (const auto& f : files) {
      std::string text = utf8::sanitize(read_file(f));
      if (blank(text)) {
        c.warnings.push_back("skipped empty file " + f.string());
        continue;
      }
      c.documents.push_back({std::move(text), {label}, std::nullopt, f.string()});
    }
  }
  finalize_vocabulary(c);
  return c;
}

Corpus load_delimited_corpus(const fs::path& file, const DelimitedFormat& format) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw IoError("cannot read " + file.string());

  std::string line;
  std::size_t line_no = 0;
  auto next_line = [&]() -> bool {
    if (!std::getline(in, line)) return false;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return true;
  };
  if (!next_line()) throw ParseError("file has no header", 1);
  const std::vector<std::string> header = split_fields(line, format.delimiter);
  const std::string header_line = line;
  auto column = [&](const std::string& name) {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw ParseError("missing column '" + name + "'", 1);
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t text_col = column(format.text_column);
  const std::size_t label_col = column(format.label_column);

  Corpus c;
  c.provenance = "delimited:" + file.string();
  while (next_line()) {
    if (line.empty()) continue;
    if (line == header_line) throw ParseError("repeated header row", line_no);
    const auto fields = split_fields(line, format.delimiter);
    if (fields.size() != header.size()) {
      throw ParseError("expected " + std::to_string(header.size()) + " fields, found " + std::to_string(fields.size()),
                       line_no);
    }
    std::string text = utf8::sanitize(fields[text_col]);
    if (blank(text)) throw ParseError("empty text field", line_no);
    auto labels = split_labels(fields[label_col], format.label_separator);
    if (labels.empty()) throw ParseError("empty label field", line_no);
    c.documents.push_back({std::move(text), std::move(labels), std::nullopt, file.string() + ":" + std::to_string(line_no)});
  }
  finalize_vocabulary(c);
  return c;
}

std::pair<Corpus, Corpus> split(const Corpus& corpus, double test_fraction, std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw InvalidArgument("test fraction must lie in (0, 1)");
  std::map<std::string, std::vector<std::size_t>> strata;
  for (std::size_t i = 0; i < corpus.documents.size(); ++i) {
    std::string key;
    for (const auto& l : corpus.documents[i].labels) key += l + '\x1f';
    strata[key].push_back(i);
  }
  std::vector<std::size_t> train_idx, test_idx;
  for (auto& [key, members] : strata) {
    const std::size_t n = members.size();
    const auto n_test = static_cast<std::size_t>(std::llround(static_cast<double>(n) * test_fraction));
    if (n < 2 || n_test == 0 || n_test == n) {
      throw InvalidArgument("cannot stratify: label set of " + std::to_string(n) + " document(s) at fraction " +
                            std::to_string(test_fraction));
    }
    SeededRng rng(seed ^ stable_hash(key));
    for (std::size_t i = n; i > 1; --i) std::swap(members[i - 1], members[rng.below(i)]);
    test_idx.insert(test_idx.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(n_test));
    train_idx.insert(train_idx.end(), members.begin() + static_cast<std::ptrdiff_t>(n_test), members.end());
  }
  std::sort(train_idx.begin(), train_idx.end());
  std::sort(test_idx.begin(), test_idx.end());
  auto take = [&](const std::vector<std::size_t>& idx, const char* tag) {
    Corpus out;
    out.vocabulary = corpus.vocabulary;
    out.provenance = corpus.provenance + ":" + tag;
    for (std::size_t i : idx) out.documents.push_back(corpus.documents[i]);
    return out;
  };
  return {take(train_idx, "train"), take(test_idx, "test")};
}

const std::vector<std::string>& default_filler_words() {
  static const std::vector<std::string> words = {
      "the",     "a",       "of",      "and",     "to",      "in",      "is",     "was",     "for",
      "on",      "that",    "with",    "as",      "it",      "by",      "at",     "from",    "this",
      "said",    "after",   "new",     "year",    "people",  "time",    "week",   "last",    "first",
      "would",   "could",   "about",   "there",   "their",   "which",   "been",   "more",    "also",
      "report",  "today",   "later",   "early",   "many",    "some",    "other",  "over",    "under",
      "while",   "during",  "before",  "still",   "around",  "number",  "public", "between", "group",
      "state",   "local",   "since",   "told",    "added",   "recent",  "plans",  "future",  "city",
      "country", "morning", "evening", "monday",  "friday",  "several", "major",  "general", "level"};
  return words;
}

std::string synthetic_text(const KeywordClass& cls, std::size_t len_chars, double keyword_rate, std::uint64_t seed) {
  if (cls.keywords.empty()) throw InvalidArgument("class '" + cls.label + "' has no keywords");
  const auto& filler = default_filler_words();
  SeededRng rng(seed);
  std::vector<std::string> words;
  std::vector<bool> is_keyword;
  std::size_t len = 0;
  while (true) {
    const bool kw = rng.uniform(0.0, 1.0) < keyword_rate;
    const std::string& w = kw ? cls.keywords[rng.below(cls.keywords.size())] : filler[rng.below(filler.size())];
    const std::size_t add = w.size() + (words.empty() ? 0 : 1);
    if (!words.empty() && len + add > len_chars) break;
    words.push_back(w);
    is_keyword.push_back(kw);
    len += add;
  }
  std::size_t planted = static_cast<std::size_t>(std::count(is_keyword.begin(), is_keyword.end(), true));
  // Top up to three keywords by overwriting filler slots.
  for (std::size_t i = 0; planted < 3 && i < words.size(); ++i) {
    const std::size_t slot = (i * 7 + 3) % words.size();
    if (is_keyword[slot]) continue;
    words[slot] = cls.keywords[rng.below(cls.keywords.size())];
    is_keyword[slot] = true;
    ++planted;
  }
  std::string out;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (i) out.push_back(' ');
    out += words[i];
  }
  return out;
}

Corpus synthetic_corpus(std::span<const KeywordClass> classes, const SyntheticOptions& opts) {
  if (classes.size() < 2) throw InvalidArgument("synthetic corpus needs at least 2 classes");
  std::set<std::string> seen_kw, seen_labels;
  for (const auto& c : classes) {
    if (!seen_labels.insert(c.label).second) throw InvalidArgument("duplicate class '" + c.label + "'");
    for (const auto& k : c.keywords) {
      if (!seen_kw.insert(k).second) throw InvalidArgument("keyword '" + k + "' appears in more than one class");
    }
  }
  Corpus c;
  c.provenance = "synthetic:seed=" + std::to_string(opts.seed);
  for (std::size_t k = 0; k < classes.size(); ++k) {
    for (std::size_t i = 0; i < opts.docs_per_class; ++i) {
      const std::uint64_t doc_seed = ad::mix64(opts.seed ^ ad::mix64(k * 1000003ULL + i));
      c.documents.push_back({synthetic_text(classes[k], opts.doc_len_chars, opts.keyword_rate, doc_seed),
                             {classes[k].label},
                             std::nullopt,
                             classes[k].label + "#" + std::to_string(i)});
    }
  }
  finalize_vocabulary(c);
  return c;
}

ConcatenatedDocument concatenated_document(const KeywordClass& first, const KeywordClass& second,
                                           std::size_t part_len_chars, double keyword_rate, std::uint64_t seed) {
  const std::string a = synthetic_text(first, part_len_chars, keyword_rate, ad::mix64(seed ^ 0xA));
  const std::string b = synthetic_text(second, part_len_chars, keyword_rate, ad::mix64(seed ^ 0xB));
  ConcatenatedDocument out;
  out.boundary_chars = utf8::length(a);
  std::vector<std::string> labels = {first.label, second.label};
  std::sort(labels.begin(), labels.end());
  out.document = {a + " " + b, std::move(labels), std::nullopt, first.label + "+" + second.label};
  return out;
}

}  // namespace hydradoc
