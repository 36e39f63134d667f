#include "gem/explain.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "gem/error.h"

namespace gem {
namespace {

AttributeVectors anchors_in(const EncodedEntity& e, std::size_t lo, std::size_t hi) {
  AttributeVectors out;
  for (const auto& a : e.anchor_vectors) {
    if (a.anchor.position >= lo && a.anchor.position < hi) out.emplace_back(a.anchor.attribute, a.vector);
  }
  return out;
}

Json vec_json(const Vec& v) {
  Json j = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) j.push_back(v(i));
  return j;
}

}  // namespace

Json AttributeHeatmap::to_json() const {
  Json vals = Json::array();
  for (Eigen::Index i = 0; i < values.rows(); ++i) {
    Json row = Json::array();
    for (Eigen::Index k = 0; k < values.cols(); ++k) row.push_back(values(i, k));
    vals.push_back(row);
  }
  return {{"rows", rows}, {"cols", cols}, {"values", vals}};
}

AttributeHeatmap AttributeHeatmap::from_json(const Json& j) {
  AttributeHeatmap h;
  h.rows = j.at("rows").get<std::vector<std::string>>();
  h.cols = j.at("cols").get<std::vector<std::string>>();
  const auto& vals = j.at("values");
  if (vals.size() != h.rows.size()) throw DataError("heatmap values do not match rows");
  h.values.resize(static_cast<Eigen::Index>(h.rows.size()), static_cast<Eigen::Index>(h.cols.size()));
  for (std::size_t i = 0; i < h.rows.size(); ++i) {
    if (vals[i].size() != h.cols.size()) throw DataError("heatmap values do not match cols");
    for (std::size_t k = 0; k < h.cols.size(); ++k) {
      h.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = vals[i][k].get<double>();
    }
  }
  return h;
}

AttributeHeatmap attribute_distance_matrix(const AttributeVectors& left, const AttributeVectors& right) {
  if (left.empty() || right.empty()) {
    throw UsageError("attribute explanations need anchor vectors on both sides; enable anchor tags");
  }
  AttributeHeatmap h;
  h.values.resize(static_cast<Eigen::Index>(left.size()), static_cast<Eigen::Index>(right.size()));
  for (const auto& l : left) h.rows.push_back(l.first);
  for (const auto& r : right) h.cols.push_back(r.first);
  for (std::size_t i = 0; i < left.size(); ++i) {
    for (std::size_t k = 0; k < right.size(); ++k) {
      if (left[i].second.size() != right[k].second.size()) throw UsageError("anchor vector dimension mismatch");
      h.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = (left[i].second - right[k].second).norm();
    }
  }
  return h;
}

AttributeHeatmap attribute_distance_matrix(const EncodedEntity& left, const EncodedEntity& right) {
  constexpr auto all = static_cast<std::size_t>(-1);
  return attribute_distance_matrix(anchors_in(left, 0, all), anchors_in(right, 0, all));
}

int default_inspected_layers(int n_layers) { return std::min(6, n_layers); }

std::vector<TokenHighlight> word_level_highlights(const EncodedEntity& enc, int layers_to_inspect,
                                                  const std::vector<std::string>& tokens,
                                                  std::size_t side_boundary, const std::string& first_side) {
  const auto n_layers = static_cast<int>(enc.attentions.size());
  if (layers_to_inspect < 0 || layers_to_inspect > n_layers) {
    throw UsageError("layers_to_inspect must be between 0 and " + std::to_string(n_layers));
  }
  const auto n = static_cast<std::size_t>(enc.token_vectors.rows());
  if (tokens.size() != n) throw UsageError("token list does not match the encoded sequence");

  std::vector<TokenHighlight> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i].token = tokens[i];
    out[i].position = i;
    out[i].side = i < side_boundary ? first_side : "right";
  }
  std::vector<std::size_t> candidates;
  for (std::size_t i = 0; i < n; ++i) {
    if (tokens[i] != "[PAD]") candidates.push_back(i);
  }
  const auto top = std::min(candidates.size(), static_cast<std::size_t>(std::ceil(0.1 * static_cast<double>(n))));

  for (int l = 0; l < layers_to_inspect; ++l) {
    // Same summation order for every column, so equal columns score equal.
    Vec score = Vec::Zero(static_cast<Eigen::Index>(n));
    for (const auto& head : enc.attentions[static_cast<std::size_t>(l)]) {
      for (Eigen::Index q = 0; q < head.rows(); ++q) {
        for (Eigen::Index k = 0; k < head.cols(); ++k) score(k) += head(q, k);
      }
    }
    for (std::size_t i = 0; i < n; ++i) out[i].scores.push_back(score(static_cast<Eigen::Index>(i)));

    auto order = candidates;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return score(static_cast<Eigen::Index>(a)) > score(static_cast<Eigen::Index>(b));
    });
    for (std::size_t r = 0; r < top; ++r) out[order[r]].highlighted = true;
  }
  return out;
}

Json Explanation::to_json() const {
  Json hl = Json::array();
  for (const auto& t : highlights) {
    hl.push_back({{"token", t.token}, {"pos", t.position}, {"side", t.side}, {"highlighted", t.highlighted},
                  {"scores", t.scores}});
  }
  return {{"pair_id", pair_id},
          {"prediction", prediction ? "match" : "nomatch"},
          {"probabilities", vec_json(probabilities)},
          {"heatmap", heatmap.to_json()},
          {"highlights", hl}};
}

Explanation Explanation::from_json(const Json& j) {
  Explanation e;
  e.pair_id = j.at("pair_id").get<std::string>();
  const auto pred = j.at("prediction").get<std::string>();
  if (pred != "match" && pred != "nomatch") throw DataError("bad prediction '" + pred + "'");
  e.prediction = pred == "match";
  const auto probs = j.at("probabilities").get<std::vector<double>>();
  e.probabilities = Eigen::Map<const Vec>(probs.data(), static_cast<Eigen::Index>(probs.size()));
  e.heatmap = AttributeHeatmap::from_json(j.at("heatmap"));
  for (const auto& h : j.at("highlights")) {
    TokenHighlight t;
    t.token = h.at("token").get<std::string>();
    t.position = h.at("pos").get<std::size_t>();
    t.side = h.at("side").get<std::string>();
    t.highlighted = h.at("highlighted").get<bool>();
    t.scores = h.at("scores").get<std::vector<double>>();
    e.highlights.push_back(std::move(t));
  }
  return e;
}

Explanation explain_pair(const MatchModel& model, const std::string& pair_id, const EntityEntry& left,
                         const EntityEntry& right, int layers_to_inspect) {
  if (layers_to_inspect <= 0) layers_to_inspect = default_inspected_layers(model.encoder.config.n_layers);
  const ForwardResult f = forward(model, left, right);
  Explanation e;
  e.pair_id = pair_id;
  e.prediction = f.predicted_match();
  e.probabilities = f.probabilities;

  auto tokens_of = [&](const SerializedSequence& s) {
    std::vector<std::string> t;
    for (int id : s.token_ids) t.push_back(model.vocab.token(id));
    return t;
  };
  if (model.config.architecture == Architecture::Sequenced) {
    const auto& seq = f.sequences[0];
    const auto& enc = f.encodings[0];
    const std::size_t boundary = seq.side_boundary.value_or(seq.token_ids.size());
    e.heatmap = attribute_distance_matrix(anchors_in(enc, 0, boundary),
                                          anchors_in(enc, boundary, static_cast<std::size_t>(-1)));
    e.highlights = word_level_highlights(enc, layers_to_inspect, tokens_of(seq), boundary);
  } else {
    e.heatmap = attribute_distance_matrix(f.encodings[0], f.encodings[1]);
    e.highlights = word_level_highlights(f.encodings[0], layers_to_inspect, tokens_of(f.sequences[0]));
    auto right = word_level_highlights(f.encodings[1], layers_to_inspect, tokens_of(f.sequences[1]), 0);
    e.highlights.insert(e.highlights.end(), right.begin(), right.end());
  }
  return e;
}

std::string html_escape(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      case '\'': out += "&#39;"; break;
      default: out += c;
    }
  }
  return out;
}

namespace {

// Cell intensity in [0, 1], proportional to distance.
std::string heat_cell(double v, double max_v) {
  const double t = max_v > 0.0 ? v / max_v : 0.0;
  char buf[160];
  std::snprintf(buf, sizeof buf, "<td data-intensity=\"%.6f\" style=\"background: rgba(200, 40, 40, %.6f)\">%.4f</td>",
                t, t, v);
  return buf;
}

std::string render_html(const Explanation& e) {
  std::ostringstream os;
  os << "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\"><title>" << html_escape(e.pair_id)
     << "</title>\n<style>mark{background:#ffe066} td,th{padding:2px 6px} .side{margin:8px 0}</style>"
     << "</head><body>\n";
  os << "<h1>" << html_escape(e.pair_id) << "</h1>\n<p>prediction: " << (e.prediction ? "match" : "nomatch");
  if (e.probabilities.size() == 2) os << " (p(match) = " << e.probabilities(1) << ")";
  os << "</p>\n<table class=\"heatmap\"><tr><th></th>";
  for (const auto& c : e.heatmap.cols) os << "<th>" << html_escape(c) << "</th>";
  os << "</tr>\n";
  const double max_v = e.heatmap.values.size() ? e.heatmap.values.maxCoeff() : 0.0;
  for (std::size_t i = 0; i < e.heatmap.rows.size(); ++i) {
    os << "<tr><th>" << html_escape(e.heatmap.rows[i]) << "</th>";
    for (std::size_t k = 0; k < e.heatmap.cols.size(); ++k) {
      os << heat_cell(e.heatmap.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)), max_v);
    }
    os << "</tr>\n";
  }
  os << "</table>\n";
  std::string side;
  for (const auto& t : e.highlights) {
    if (t.side != side) {
      if (!side.empty()) os << "</div>\n";
      side = t.side;
      os << "<div class=\"side\"><b>" << html_escape(side) << ":</b> ";
    }
    if (t.highlighted) {
      os << "<mark>" << html_escape(t.token) << "</mark> ";
    } else {
      os << html_escape(t.token) << " ";
    }
  }
  if (!side.empty()) os << "</div>\n";
  os << "</body></html>\n";
  return os.str();
}

}  // namespace

std::string render_explanation(const Explanation& e, const std::string& format) {
  if (format == "json") return e.to_json().dump(2) + "\n";
  if (format == "html") return render_html(e);
  throw UsageError("unknown explanation format '" + format + "' (expected json or html)");
}

}  // namespace gem
