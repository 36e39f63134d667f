#pragma once

#include <string>
#include <vector>

#include "gem/matcher.h"

namespace gem {

struct AttributeHeatmap {
  std::vector<std::string> rows;  // left attribute names
  std::vector<std::string> cols;  // right attribute names
  Tensor values;                  // rows x cols euclidean distances

  Json to_json() const;
  static AttributeHeatmap from_json(const Json& j);
};

// Throws UsageError when either side has no anchors (anchor tags disabled).
AttributeHeatmap attribute_distance_matrix(const AttributeVectors& left, const AttributeVectors& right);
AttributeHeatmap attribute_distance_matrix(const EncodedEntity& left, const EncodedEntity& right);

struct TokenHighlight {
  std::string token;
  std::size_t position = 0;
  std::string side;  // "left" or "right"
  bool highlighted = false;
  std::vector<double> scores;  // one per inspected layer
};

// Default number of inspected layers: the first six, or all of a shallower stack.
int default_inspected_layers(int n_layers);

// Score of a token in a layer is its attention column sum over heads and
// query positions. The top ceil(0.1 * n) non-pad tokens of any inspected
// layer are highlighted, earlier positions winning ties. Tokens at or past
// side_boundary are labeled "right".
std::vector<TokenHighlight> word_level_highlights(const EncodedEntity& enc, int layers_to_inspect,
                                                  const std::vector<std::string>& tokens,
                                                  std::size_t side_boundary = static_cast<std::size_t>(-1),
                                                  const std::string& first_side = "left");

struct Explanation {
  std::string pair_id;
  bool prediction = false;
  Vec probabilities;
  AttributeHeatmap heatmap;
  std::vector<TokenHighlight> highlights;

  Json to_json() const;
  static Explanation from_json(const Json& j);
};

// Runs the model on one pair. layers_to_inspect <= 0 picks the default.
Explanation explain_pair(const MatchModel& model, const std::string& pair_id, const EntityEntry& left,
                         const EntityEntry& right, int layers_to_inspect = 0);

// format is "json" or "html".
std::string render_explanation(const Explanation& e, const std::string& format);

std::string html_escape(const std::string& s);

}  // namespace gem
