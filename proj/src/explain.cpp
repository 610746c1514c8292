#include "hydradoc/explain.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "hydradoc/error.hpp"
#include "hydradoc/utf8.hpp"

namespace hydradoc {

std::vector<BlockedDocument> prefix_matrix(const BlockedDocument& doc) {
  const std::size_t n_t = doc.valid_blocks();
  if (n_t == 0) throw InvalidArgument("prefix_matrix: document has no text");
  std::vector<BlockedDocument> rows;
  rows.reserve(n_t);
  for (std::size_t i = 1; i <= n_t; ++i) rows.push_back(truncate_blocks(doc, i));
  return rows;
}

PrefixPredictionMatrix time_distributed_predict(const HydranetModel& model, const EmbeddingBackend& backend,
                                                std::string_view text, EmbeddingCache* cache) {
  if (backend.backend_id() != model.backbone_id()) {
    throw InvalidArgument("model was trained on backbone '" + model.backbone_id() + "', got '" +
                          backend.backend_id() + "'");
  }
  PrefixPredictionMatrix out;
  out.labels = model.labels();
  out.document = segment(text, model.blocking());
  const std::vector<BlockedDocument> prefixes = prefix_matrix(out.document);
  const EncodedDocument full = encode_blocks(out.document, backend, cache);

  out.values.resize(static_cast<Eigen::Index>(prefixes.size()), static_cast<Eigen::Index>(out.labels.size()));
  for (std::size_t i = 0; i < prefixes.size(); ++i) {
    EncodedDocument row{full.features, prefixes[i].mask};
    row.features.bottomRows(row.features.rows() - static_cast<Eigen::Index>(i + 1)).setZero();
    const std::vector<double> p = predict_encoded(model, row);
    for (std::size_t c = 0; c < p.size(); ++c) {
      out.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = p[c];
    }
  }
  return out;
}

std::string heat_color(double v) {
  const double t = std::clamp(std::isnan(v) ? 0.0 : v, 0.0, 1.0);
  const auto gb = static_cast<unsigned>(std::lround(255.0 * (1.0 - t)));
  char buf[8];
  std::snprintf(buf, sizeof buf, "#FF%02X%02X", gb, gb);
  return buf;
}

std::string heatmap_csv(const PrefixPredictionMatrix& m) {
  std::string out = "prefix_blocks";
  for (const auto& l : m.labels) out += "," + l;
  out += '\n';
  char buf[32];
  for (Eigen::Index r = 0; r < m.values.rows(); ++r) {
    out += std::to_string(r + 1);
    for (Eigen::Index c = 0; c < m.values.cols(); ++c) {
      std::snprintf(buf, sizeof buf, ",%.6f", m.values(r, c));
      out += buf;
    }
    out += '\n';
  }
  return out;
}

namespace {

std::string xml_escape(std::string_view s) {
  std::string out;
  for (char ch : s) {
    switch (ch) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += ch;
    }
  }
  return out;
}

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path.string());
  f << content;
  f.flush();
  if (!f) throw IoError("cannot write " + path.string());
}

}  // namespace

std::string heatmap_svg(const PrefixPredictionMatrix& m) {
  constexpr int kCell = 24;
  constexpr int kLeft = 48;  // row labels
  constexpr int kTop = 120;  // rotated column labels
  const auto rows = static_cast<int>(m.values.rows());
  const auto cols = static_cast<int>(m.values.cols());
  const int width = kLeft + cols * kCell;
  const int height = kTop + rows * kCell;

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
     << "\" font-family=\"sans-serif\" font-size=\"10\">\n";
  for (int c = 0; c < cols; ++c) {
    const int x = kLeft + c * kCell + kCell / 2;
    os << "  <text x=\"" << x << "\" y=\"" << kTop - 4 << "\" transform=\"rotate(-90 " << x << ' ' << kTop - 4
       << ")\">" << xml_escape(m.labels[static_cast<std::size_t>(c)]) << "</text>\n";
  }
  for (int r = 0; r < rows; ++r) {
    const int y = kTop + r * kCell;
    os << "  <text x=\"" << kLeft - 4 << "\" y=\"" << y + kCell / 2 + 4 << "\" text-anchor=\"end\">" << r + 1
       << "</text>\n";
    for (int c = 0; c < cols; ++c) {
      const double v = m.values(r, c);
      os << "  <rect x=\"" << kLeft + c * kCell << "\" y=\"" << y << "\" width=\"" << kCell << "\" height=\"" << kCell
         << "\" fill=\"" << heat_color(v) << "\"><title>" << v << "</title></rect>\n";
    }
  }
  os << "</svg>\n";
  return os.str();
}

void render_heatmap(const PrefixPredictionMatrix& m, const std::filesystem::path& csv_path,
                    const std::filesystem::path& svg_path) {
  if (m.values.size() == 0) throw InvalidArgument("render_heatmap: empty matrix");
  if (static_cast<std::size_t>(m.values.cols()) != m.labels.size()) {
    throw ShapeError("render_heatmap: label count does not match the matrix");
  }
  write_file(csv_path, heatmap_csv(m));
  write_file(svg_path, heatmap_svg(m));
}

std::vector<TriggerSpan> trigger_spans(const PrefixPredictionMatrix& m) {
  std::vector<TriggerSpan> spans;
  for (Eigen::Index c = 0; c < m.values.cols(); ++c) {
    for (Eigen::Index r = 0; r < m.values.rows(); ++r) {
      const bool above = m.values(r, c) > 0.5;
      const bool before = r > 0 && m.values(r - 1, c) > 0.5;
      if (!above || before) continue;
      const auto block = static_cast<std::size_t>(r);
      TriggerSpan s;
      s.label = m.labels[static_cast<std::size_t>(c)];
      s.block = block;
      s.char_begin = m.document.char_offset(block);
      s.char_end = s.char_begin + (block < m.document.blocks.size() ? utf8::length(m.document.blocks[block]) : 0);
      s.probability = m.values(r, c);
      spans.push_back(std::move(s));
    }
  }
  return spans;
}

}  // namespace hydradoc
