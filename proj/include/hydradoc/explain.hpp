#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "hydradoc/blocking.hpp"
#include "hydradoc/embedding.hpp"
#include "hydradoc/hydranet.hpp"

namespace hydradoc {

// Predictions on growing prefixes of a document: row i (0-based) sees blocks 0..i.
struct PrefixPredictionMatrix {
  std::vector<std::string> labels;
  Matrix values;  // n_t x K, n_t = number of non-empty blocks
  BlockedDocument document;

  Eigen::Index rows() const noexcept { return values.rows(); }
};

// n_t documents; document i keeps the first i+1 blocks. Throws InvalidArgument
// for a document without text.
std::vector<BlockedDocument> prefix_matrix(const BlockedDocument& doc);

// Embeds the document once and evaluates the model on every prefix. Row i is
// identical to predict() on the text cut after block i.
PrefixPredictionMatrix time_distributed_predict(const HydranetModel& model, const EmbeddingBackend& backend,
                                                std::string_view text, EmbeddingCache* cache = nullptr);

// "prefix_blocks,<labels>" header, then one row per prefix with 6 decimals.
std::string heatmap_csv(const PrefixPredictionMatrix& m);
// n_t x K grid of 24px cells, white (0) to red (1).
std::string heatmap_svg(const PrefixPredictionMatrix& m);
// "#RRGGBB" on the white to red ramp; v is clamped to [0, 1].
std::string heat_color(double v);
// Writes both files; throws IoError when either cannot be written.
void render_heatmap(const PrefixPredictionMatrix& m, const std::filesystem::path& csv_path,
                    const std::filesystem::path& svg_path);

// Block at which a label's probability rises above 0.5.
struct TriggerSpan {
  std::string label;
  std::size_t block = 0;  // 0-based
  std::size_t char_begin = 0;
  std::size_t char_end = 0;  // exclusive, in characters
  double probability = 0.0;
};

// One span per rising edge: row i > 0.5 while row i-1 (or nothing, for i = 0) is not.
std::vector<TriggerSpan> trigger_spans(const PrefixPredictionMatrix& m);

}  // namespace hydradoc
