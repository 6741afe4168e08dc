#pragma once

#include <cmath>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "spanlab/corpus.hpp"
#include "spanlab/error.hpp"
#include "spanlab/matrix.hpp"
#include "spanlab/tagcodec.hpp"

namespace spanlab {

// Per-token log-scores for one document, as exported by an upstream model.
struct EmissionMatrix {
  std::string doc_id;
  std::vector<Tag> tag_order;
  std::vector<TokenSpan> tokens;
  Matrix scores;  // T x K
  // Positions excluded from scoring; they are bridged by the CRF.
  std::optional<std::vector<bool>> ignore_mask;

  std::size_t length() const noexcept { return scores.rows(); }
  std::size_t num_tags() const noexcept { return tag_order.size(); }
  bool ignored(std::size_t t) const { return ignore_mask && (*ignore_mask)[t]; }

  bool operator==(const EmissionMatrix&) const = default;
};

// Narrowest scheme that admits every tag in the list.
inline Scheme infer_scheme(const std::vector<Tag>& tags) {
  bool has_b = false;
  for (const auto& t : tags) {
    if (t.prefix == Prefix::E || t.prefix == Prefix::S) return Scheme::BIOES;
    has_b = has_b || t.prefix == Prefix::B;
  }
  return has_b ? Scheme::BIO : Scheme::IO;
}

inline std::vector<std::string> classes_of(const std::vector<Tag>& tags) {
  std::vector<std::string> out;
  for (const auto& t : tags)
    if (!t.is_outside() && std::find(out.begin(), out.end(), t.cls) == out.end())
      out.push_back(t.cls);
  return out;
}

inline std::optional<std::size_t> tag_index(const std::vector<Tag>& order, const Tag& t) {
  auto it = std::find(order.begin(), order.end(), t);
  if (it == order.end()) return std::nullopt;
  return static_cast<std::size_t>(it - order.begin());
}

inline void check_emission(const EmissionMatrix& em) {
  const std::string where = "document '" + em.doc_id + "'";
  if (em.doc_id.empty()) throw ValidationError("emission record without doc_id");
  if (em.tag_order.empty()) throw ValidationError(where + ": empty tag_order");
  if (em.scores.cols() != em.tag_order.size() && em.scores.rows() > 0)
    throw ValidationError(where + ": score rows must have K entries");
  if (em.tokens.size() != em.scores.rows())
    throw ValidationError(where + ": token count differs from score rows");
  if (em.ignore_mask && em.ignore_mask->size() != em.scores.rows())
    throw ValidationError(where + ": ignore_mask length differs from token count");
  for (double v : em.scores.data())
    if (!std::isfinite(v)) throw ValidationError(where + ": non-finite emission score");
  std::vector<Tag> sorted = em.tag_order;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
    throw ValidationError(where + ": duplicate tag in tag_order");
}

inline nlohmann::json to_json(const EmissionMatrix& em) {
  nlohmann::json j;
  j["doc_id"] = em.doc_id;
  auto& order = j["tag_order"] = nlohmann::json::array();
  for (const auto& t : em.tag_order) order.push_back(to_string(t));
  auto& toks = j["tokens"] = nlohmann::json::array();
  for (const auto& t : em.tokens) toks.push_back({{"text", t.text}, {"start", t.start}, {"end", t.end}});
  auto& rows = j["scores"] = nlohmann::json::array();
  for (std::size_t r = 0; r < em.scores.rows(); ++r) {
    auto row = em.scores.row(r);
    rows.push_back(std::vector<double>(row.begin(), row.end()));
  }
  if (em.ignore_mask) j["ignore_mask"] = *em.ignore_mask;
  return j;
}

inline EmissionMatrix emission_from_json(const nlohmann::json& j) {
  EmissionMatrix em;
  try {
    em.doc_id = j.at("doc_id").get<std::string>();
    for (const auto& t : j.at("tag_order")) em.tag_order.push_back(parse_tag(t.get<std::string>()));
    for (const auto& t : j.at("tokens")) {
      em.tokens.push_back({em.tokens.size(), t.at("start").get<std::size_t>(),
                           t.at("end").get<std::size_t>(), t.at("text").get<std::string>()});
    }
    const auto& rows = j.at("scores");
    const std::size_t k = em.tag_order.size();
    em.scores = Matrix(rows.size(), k);
    for (std::size_t r = 0; r < rows.size(); ++r) {
      const auto& row = rows[r];
      if (!row.is_array() || row.size() != k)
        throw ValidationError("document '" + em.doc_id + "': score row " + std::to_string(r) +
                              " has " + std::to_string(row.size()) + " entries, expected " +
                              std::to_string(k));
      for (std::size_t c = 0; c < k; ++c) em.scores(r, c) = row[c].get<double>();
    }
    if (j.contains("ignore_mask")) em.ignore_mask = j.at("ignore_mask").get<std::vector<bool>>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("emission schema violation: ") + e.what());
  }
  check_emission(em);
  return em;
}

namespace detail {

template <typename F>
void for_each_jsonl(const std::filesystem::path& path, F&& f) {
  std::size_t index = 0;
  for (const auto& line : read_lines(path)) {
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    try {
      f(nlohmann::json::parse(line), index);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(path.string() + ": record " + std::to_string(index) + ": " + e.what());
    } catch (const ValidationError& e) {
      throw ValidationError(path.string() + ": record " + std::to_string(index) + ": " + e.what());
    } catch (const ParseError& e) {
      throw ParseError(path.string() + ": record " + std::to_string(index) + ": " + e.what());
    }
    ++index;
  }
}

}  // namespace detail

inline std::vector<EmissionMatrix> load_emissions(const std::filesystem::path& path) {
  std::vector<EmissionMatrix> out;
  detail::for_each_jsonl(path, [&](const nlohmann::json& j, std::size_t) {
    out.push_back(emission_from_json(j));
  });
  return out;
}

inline void save_emissions(const std::vector<EmissionMatrix>& ems, const std::filesystem::path& path) {
  std::string content;
  for (const auto& em : ems) content += to_json(em).dump() + "\n";
  detail::write_file(path, content);
}

// Class name -> probability (or boosted score). Ordered by class name, which
// is also the tie-breaking order used throughout.
using SpanProbs = std::map<std::string, double>;

struct SpanProbRecord {
  std::string doc_id;
  std::size_t start = 0;
  std::size_t end = 0;
  SpanProbs probs;

  bool operator==(const SpanProbRecord&) const = default;
};

inline SpanProbRecord span_probs_from_json(const nlohmann::json& j) {
  SpanProbRecord r;
  try {
    r.doc_id = j.at("doc_id").get<std::string>();
    r.start = j.at("start").get<std::size_t>();
    r.end = j.at("end").get<std::size_t>();
    for (const auto& [k, v] : j.at("probs").items()) r.probs[k] = v.get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("span-probability schema violation: ") + e.what());
  }
  if (r.doc_id.empty()) throw ValidationError("span-probability record without doc_id");
  if (r.end <= r.start) throw ValidationError("span end must exceed start");
  if (r.probs.empty()) throw ValidationError("empty probability map");
  for (const auto& [k, v] : r.probs)
    if (!std::isfinite(v) || v < 0.0)
      throw ValidationError("probability for class '" + k + "' is not a finite non-negative value");
  return r;
}

inline nlohmann::json to_json(const SpanProbRecord& r) {
  nlohmann::json probs = nlohmann::json::object();
  for (const auto& [k, v] : r.probs) probs[k] = v;
  return {{"doc_id", r.doc_id}, {"start", r.start}, {"end", r.end}, {"probs", probs}};
}

inline std::vector<SpanProbRecord> load_span_probs(const std::filesystem::path& path) {
  std::vector<SpanProbRecord> out;
  detail::for_each_jsonl(path, [&](const nlohmann::json& j, std::size_t) {
    out.push_back(span_probs_from_json(j));
  });
  return out;
}

inline void save_span_probs(const std::vector<SpanProbRecord>& recs,
                            const std::filesystem::path& path) {
  std::string content;
  for (const auto& r : recs) content += to_json(r).dump() + "\n";
  detail::write_file(path, content);
}

}  // namespace spanlab
