#pragma once

#include <cmath>
#include <filesystem>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "spanlab/error.hpp"
#include "spanlab/interchange.hpp"
#include "spanlab/matrix.hpp"
#include "spanlab/numeric.hpp"
#include "spanlab/tagcodec.hpp"

namespace spanlab {

// Linear-chain CRF parameters. transitions(i, j) scores tag i followed by j.
struct CrfModel {
  Scheme scheme = Scheme::BIO;
  std::vector<Tag> tag_order;
  std::vector<double> start;
  std::vector<double> end;
  Matrix transitions;

  static CrfModel zeros(std::vector<Tag> tags, Scheme scheme) {
    const std::size_t k = tags.size();
    return {scheme, std::move(tags), std::vector<double>(k, 0.0), std::vector<double>(k, 0.0),
            Matrix(k, k)};
  }

  std::size_t num_tags() const noexcept { return tag_order.size(); }

  // Flattened parameter vector: start, end, then transitions row-major.
  std::vector<double> parameters() const {
    std::vector<double> p(start);
    p.insert(p.end(), end.begin(), end.end());
    p.insert(p.end(), transitions.data().begin(), transitions.data().end());
    return p;
  }

  void set_parameters(std::span<const double> p) {
    const std::size_t k = num_tags();
    if (p.size() != 2 * k + k * k) throw ValidationError("parameter vector has wrong size");
    std::copy(p.begin(), p.begin() + k, start.begin());
    std::copy(p.begin() + k, p.begin() + 2 * k, end.begin());
    std::copy(p.begin() + 2 * k, p.end(), transitions.data().begin());
  }

  bool operator==(const CrfModel&) const = default;
};

// Allowed transitions, derived from the tag legality rules of a scheme.
struct TransitionMask {
  std::vector<bool> start;
  std::vector<bool> end;
  std::vector<bool> pair;  // K*K row-major
  std::size_t k = 0;

  static TransitionMask for_scheme(const std::vector<Tag>& tags, Scheme scheme) {
    TransitionMask m;
    m.k = tags.size();
    m.start.resize(m.k);
    m.end.resize(m.k);
    m.pair.resize(m.k * m.k);
    for (std::size_t i = 0; i < m.k; ++i) {
      m.start[i] = legal_transition(nullptr, &tags[i], scheme);
      m.end[i] = legal_transition(&tags[i], nullptr, scheme);
      for (std::size_t j = 0; j < m.k; ++j)
        m.pair[i * m.k + j] = legal_transition(&tags[i], &tags[j], scheme);
    }
    return m;
  }

  bool allowed(std::size_t i, std::size_t j) const { return pair[i * k + j]; }
};

struct ViterbiResult {
  std::vector<std::size_t> path;
  double score = 0.0;
};

struct CrfGradient {
  std::vector<double> start;
  std::vector<double> end;
  Matrix transitions;
  std::vector<Matrix> emissions;  // one per batch item, filled on request

  std::vector<double> flat() const {
    std::vector<double> p(start);
    p.insert(p.end(), end.begin(), end.end());
    p.insert(p.end(), transitions.data().begin(), transitions.data().end());
    return p;
  }
};

struct LossAndGradient {
  double loss = 0.0;
  CrfGradient gradient;
};

struct TrainConfig {
  double learning_rate = 0.05;
  int epochs = 30;
  double l2 = 0.0;
  std::uint64_t seed = 13;
  std::size_t batch_size = 8;
};

struct LabeledEmission {
  EmissionMatrix emissions;
  std::vector<std::size_t> gold_path;
};

namespace detail {

inline void check_dims(const CrfModel& m, const EmissionMatrix& em) {
  const std::size_t k = m.num_tags();
  if (m.start.size() != k || m.end.size() != k || m.transitions.rows() != k ||
      m.transitions.cols() != k)
    throw ValidationError("CRF model dimensions are inconsistent");
  if (em.length() > 0 && em.scores.cols() != k)
    throw ValidationError("emission matrix for '" + em.doc_id + "' has " +
                          std::to_string(em.scores.cols()) + " tags, model has " +
                          std::to_string(k));
  if (em.ignore_mask && em.ignore_mask->size() != em.length())
    throw ValidationError("ignore_mask length differs from emission length");
}

inline std::vector<std::size_t> active_positions(const EmissionMatrix& em) {
  std::vector<std::size_t> out;
  for (std::size_t t = 0; t < em.length(); ++t)
    if (!em.ignored(t)) out.push_back(t);
  return out;
}

// Forward/backward tables over the non-ignored positions, in log space.
struct Lattice {
  std::vector<std::size_t> active;
  Matrix alpha;
  Matrix beta;
  double log_z = 0.0;
};

inline Lattice forward_backward(const CrfModel& m, const EmissionMatrix& em, bool need_beta) {
  check_dims(m, em);
  Lattice lat;
  lat.active = active_positions(em);
  const std::size_t n = lat.active.size();
  const std::size_t k = m.num_tags();
  if (n == 0) return lat;
  lat.alpha = Matrix(n, k);
  std::vector<double> buf(k);
  for (std::size_t y = 0; y < k; ++y) lat.alpha(0, y) = m.start[y] + em.scores(lat.active[0], y);
  for (std::size_t i = 1; i < n; ++i) {
    const auto e = em.scores.row(lat.active[i]);
    for (std::size_t y = 0; y < k; ++y) {
      for (std::size_t x = 0; x < k; ++x) buf[x] = lat.alpha(i - 1, x) + m.transitions(x, y);
      lat.alpha(i, y) = log_sum_exp(buf) + e[y];
    }
  }
  for (std::size_t y = 0; y < k; ++y) buf[y] = lat.alpha(n - 1, y) + m.end[y];
  lat.log_z = log_sum_exp(buf);
  if (!need_beta) return lat;
  lat.beta = Matrix(n, k);
  for (std::size_t y = 0; y < k; ++y) lat.beta(n - 1, y) = m.end[y];
  for (std::size_t i = n - 1; i-- > 0;) {
    const auto e = em.scores.row(lat.active[i + 1]);
    for (std::size_t x = 0; x < k; ++x) {
      for (std::size_t y = 0; y < k; ++y)
        buf[y] = m.transitions(x, y) + e[y] + lat.beta(i + 1, y);
      lat.beta(i, x) = log_sum_exp(buf);
    }
  }
  return lat;
}

// Tags for ignored positions: inside a span when the surrounding active tags
// continue the same entity, O otherwise. Keeps the full path legal.
inline void fill_ignored(std::vector<std::size_t>& path, const EmissionMatrix& em,
                         const std::vector<Tag>& order) {
  if (!em.ignore_mask) return;
  const std::size_t t_len = path.size();
  const auto outside = tag_index(order, Tag::outside());
  std::optional<std::size_t> prev;
  for (std::size_t t = 0; t < t_len; ++t) {
    if (!em.ignored(t)) {
      prev = t;
      continue;
    }
    std::optional<std::size_t> next;
    for (std::size_t u = t + 1; u < t_len; ++u)
      if (!em.ignored(u)) {
        next = u;
        break;
      }
    bool inside = false;
    std::string cls;
    if (prev && next) {
      const Tag& a = order[path[*prev]];
      const Tag& b = order[path[*next]];
      inside = (a.prefix == Prefix::B || a.prefix == Prefix::I) &&
               (b.prefix == Prefix::I || b.prefix == Prefix::E) && a.cls == b.cls;
      cls = a.cls;
    }
    auto inner = inside ? tag_index(order, Tag::make(Prefix::I, cls)) : std::nullopt;
    if (inner) path[t] = *inner;
    else if (outside) path[t] = *outside;
    else path[t] = prev ? path[*prev] : 0;
  }
}

}  // namespace detail

inline double score_path(const CrfModel& m, const EmissionMatrix& em,
                         std::span<const std::size_t> path) {
  detail::check_dims(m, em);
  if (path.size() != em.length())
    throw ValidationError("path length " + std::to_string(path.size()) +
                          " differs from sequence length " + std::to_string(em.length()));
  for (auto y : path)
    if (y >= m.num_tags()) throw ValidationError("tag index out of range in path");
  double s = 0.0;
  std::optional<std::size_t> prev;
  for (std::size_t t = 0; t < path.size(); ++t) {
    if (em.ignored(t)) continue;
    s += em.scores(t, path[t]);
    s += prev ? m.transitions(path[*prev], path[t]) : m.start[path[t]];
    prev = t;
  }
  if (prev) s += m.end[path[*prev]];
  return s;
}

inline double log_partition(const CrfModel& m, const EmissionMatrix& em) {
  return detail::forward_backward(m, em, false).log_z;
}

// Best path, optionally restricted to transitions allowed by `mask`.
// Throws DecodeError when the mask leaves no legal path.
inline ViterbiResult viterbi(const CrfModel& m, const EmissionMatrix& em,
                             const TransitionMask* mask = nullptr) {
  detail::check_dims(m, em);
  const std::size_t k = m.num_tags();
  if (mask && mask->k != k) throw ValidationError("transition mask size differs from model");
  const auto active = detail::active_positions(em);
  const std::size_t n = active.size();
  ViterbiResult res;
  res.path.assign(em.length(), 0);
  if (n == 0) {
    detail::fill_ignored(res.path, em, m.tag_order);
    return res;
  }
  Matrix delta(n, k, kNegInf);
  std::vector<std::size_t> back(n * k, 0);
  for (std::size_t y = 0; y < k; ++y)
    if (!mask || mask->start[y]) delta(0, y) = m.start[y] + em.scores(active[0], y);
  for (std::size_t i = 1; i < n; ++i) {
    for (std::size_t y = 0; y < k; ++y) {
      double best = kNegInf;
      std::size_t arg = 0;
      for (std::size_t x = 0; x < k; ++x) {
        if (mask && !mask->allowed(x, y)) continue;
        double v = delta(i - 1, x) + m.transitions(x, y);
        if (v > best) best = v, arg = x;
      }
      if (best != kNegInf) delta(i, y) = best + em.scores(active[i], y);
      back[i * k + y] = arg;
    }
  }
  double best = kNegInf;
  std::size_t arg = 0;
  for (std::size_t y = 0; y < k; ++y) {
    if (mask && !mask->end[y]) continue;
    double v = delta(n - 1, y) + m.end[y];
    if (v > best) best = v, arg = y;
  }
  if (best == kNegInf) throw DecodeError("no legal tag path for document '" + em.doc_id + "'");
  res.score = best;
  for (std::size_t i = n; i-- > 0;) {
    res.path[active[i]] = arg;
    arg = back[i * k + arg];
  }
  detail::fill_ignored(res.path, em, m.tag_order);
  return res;
}

// Posterior tag probabilities per position. Ignored rows copy the nearest
// preceding active row (or the following one at the start).
inline Matrix marginals(const CrfModel& m, const EmissionMatrix& em) {
  auto lat = detail::forward_backward(m, em, true);
  const std::size_t k = m.num_tags();
  Matrix out(em.length(), k, k ? 1.0 / static_cast<double>(k) : 0.0);
  for (std::size_t i = 0; i < lat.active.size(); ++i)
    for (std::size_t y = 0; y < k; ++y)
      out(lat.active[i], y) = std::exp(lat.alpha(i, y) + lat.beta(i, y) - lat.log_z);
  if (!lat.active.empty()) {
    std::size_t src = lat.active.front();
    for (std::size_t t = 0; t < em.length(); ++t) {
      if (!em.ignored(t)) {
        src = t;
        continue;
      }
      auto from = out.row(src);
      std::copy(from.begin(), from.end(), out.row(t).begin());
    }
  }
  return out;
}

inline void check_gold_path(const CrfModel& m, const EmissionMatrix& em,
                            std::span<const std::size_t> path) {
  std::vector<Tag> tags;
  for (std::size_t t = 0; t < path.size(); ++t) {
    if (path[t] >= m.num_tags()) throw ValidationError("gold tag index out of range");
    if (!em.ignored(t)) tags.push_back(m.tag_order[path[t]]);
  }
  auto v = validate(tags, m.scheme);
  if (!v.empty())
    throw ValidationError("gold path for '" + em.doc_id + "' is illegal under " +
                          std::string(to_string(m.scheme)) + " at position " +
                          std::to_string(v.front().position));
}

// Summed negative log-likelihood plus l2 * ||params||^2, with gradients taken
// as expected minus observed feature counts.
inline LossAndGradient nll_and_gradient(const CrfModel& m,
                                        const std::vector<LabeledEmission>& batch,
                                        double l2 = 0.0, bool emission_gradients = false) {
  const std::size_t k = m.num_tags();
  LossAndGradient out;
  auto& g = out.gradient;
  g.start.assign(k, 0.0);
  g.end.assign(k, 0.0);
  g.transitions = Matrix(k, k);
  for (const auto& item : batch) {
    const auto& em = item.emissions;
    check_gold_path(m, em, item.gold_path);
    const double gold = score_path(m, em, item.gold_path);
    auto lat = detail::forward_backward(m, em, true);
    out.loss += lat.log_z - gold;

    Matrix eg;
    if (emission_gradients) eg = Matrix(em.length(), k);
    const auto& act = lat.active;
    const std::size_t n = act.size();
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t y = 0; y < k; ++y) {
        const double p = std::exp(lat.alpha(i, y) + lat.beta(i, y) - lat.log_z);
        if (i == 0) g.start[y] += p;
        if (i + 1 == n) g.end[y] += p;
        if (emission_gradients) eg(act[i], y) += p;
      }
      if (emission_gradients) eg(act[i], item.gold_path[act[i]]) -= 1.0;
      if (i > 0) {
        const auto e = em.scores.row(act[i]);
        for (std::size_t x = 0; x < k; ++x)
          for (std::size_t y = 0; y < k; ++y)
            g.transitions(x, y) += std::exp(lat.alpha(i - 1, x) + m.transitions(x, y) + e[y] +
                                            lat.beta(i, y) - lat.log_z);
        g.transitions(item.gold_path[act[i - 1]], item.gold_path[act[i]]) -= 1.0;
      }
    }
    if (n > 0) {
      g.start[item.gold_path[act.front()]] -= 1.0;
      g.end[item.gold_path[act.back()]] -= 1.0;
    }
    if (emission_gradients) g.emissions.push_back(std::move(eg));
  }
  if (l2 > 0.0) {
    const auto p = m.parameters();
    double sq = 0.0;
    for (double v : p) sq += v * v;
    out.loss += l2 * sq;
    for (std::size_t y = 0; y < k; ++y) {
      g.start[y] += 2.0 * l2 * m.start[y];
      g.end[y] += 2.0 * l2 * m.end[y];
    }
    for (std::size_t i = 0; i < k * k; ++i)
      g.transitions.data()[i] += 2.0 * l2 * m.transitions.data()[i];
  }
  return out;
}

// Mini-batch gradient descent with a fixed step on the mean NLL plus the l2
// term. Starts from zero parameters; the seed drives batch order. Returns the
// parameters with the lowest full-data objective seen, so the final loss
// never exceeds the initial one.
inline CrfModel train(const std::vector<LabeledEmission>& data, Scheme scheme,
                      const TrainConfig& cfg) {
  if (data.empty()) throw ValidationError("cannot train a CRF on an empty dataset");
  if (cfg.epochs < 1) throw ConfigError("epochs must be at least 1");
  if (!(cfg.learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (cfg.l2 < 0.0) throw ConfigError("l2 must be non-negative");
  if (cfg.batch_size == 0) throw ConfigError("batch_size must be positive");
  const auto& order = data.front().emissions.tag_order;
  for (const auto& d : data)
    if (d.emissions.tag_order != order)
      throw ValidationError("inconsistent tag_order in training data ('" + d.emissions.doc_id + "')");

  CrfModel model = CrfModel::zeros(order, scheme);
  const double n = static_cast<double>(data.size());
  auto objective = [&](const CrfModel& m) {
    return nll_and_gradient(m, data, 0.0).loss / n + [&] {
      double sq = 0.0;
      for (double v : m.parameters()) sq += v * v;
      return cfg.l2 * sq;
    }();
  };

  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> idx(data.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  double best_loss = objective(model);
  CrfModel best = model;
  std::vector<LabeledEmission> batch;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    deterministic_shuffle(idx, rng);
    for (std::size_t b = 0; b < idx.size(); b += cfg.batch_size) {
      batch.clear();
      for (std::size_t i = b; i < std::min(idx.size(), b + cfg.batch_size); ++i)
        batch.push_back(data[idx[i]]);
      auto lg = nll_and_gradient(model, batch, 0.0);
      auto params = model.parameters();
      const auto grad = lg.gradient.flat();
      const double scale = 1.0 / static_cast<double>(batch.size());
      for (std::size_t i = 0; i < params.size(); ++i)
        params[i] -= cfg.learning_rate * (grad[i] * scale + 2.0 * cfg.l2 * params[i]);
      model.set_parameters(params);
    }
    const double loss = objective(model);
    if (!std::isfinite(loss))
      throw TrainingError("CRF training diverged (non-finite loss) in epoch " +
                              std::to_string(epoch),
                          epoch);
    if (loss < best_loss) {
      best_loss = loss;
      best = model;
    }
  }
  return best;
}

// Plain-text model file: header lines, then start, end and K transition rows.
inline std::string format_model(const CrfModel& m) {
  std::ostringstream os;
  os << "spanlab-crf 1\n";
  os << "scheme " << to_string(m.scheme) << '\n';
  os << "K " << m.num_tags() << '\n';
  os << "tags";
  for (const auto& t : m.tag_order) os << ' ' << to_string(t);
  os << "\nstart";
  for (double v : m.start) os << ' ' << format_double(v);
  os << "\nend";
  for (double v : m.end) os << ' ' << format_double(v);
  os << "\ntransitions\n";
  for (std::size_t i = 0; i < m.num_tags(); ++i) {
    for (std::size_t j = 0; j < m.num_tags(); ++j)
      os << (j ? " " : "") << format_double(m.transitions(i, j));
    os << '\n';
  }
  return os.str();
}

inline CrfModel parse_model(std::string_view content) {
  std::istringstream in{std::string(content)};
  std::string word;
  auto expect = [&](std::string_view w) {
    if (!(in >> word) || word != w)
      throw ParseError("model file: expected '" + std::string(w) + "'");
  };
  auto number = [&] {
    if (!(in >> word)) throw ParseError("model file: truncated");
    return parse_double(word);
  };
  expect("spanlab-crf");
  expect("1");
  expect("scheme");
  in >> word;
  CrfModel m;
  m.scheme = parse_scheme(word);
  expect("K");
  std::size_t k = 0;
  if (!(in >> k) || k == 0) throw ParseError("model file: bad K");
  expect("tags");
  for (std::size_t i = 0; i < k; ++i) {
    if (!(in >> word)) throw ParseError("model file: truncated tag list");
    m.tag_order.push_back(parse_tag(word));
  }
  m = CrfModel::zeros(m.tag_order, m.scheme);
  expect("start");
  for (auto& v : m.start) v = number();
  expect("end");
  for (auto& v : m.end) v = number();
  expect("transitions");
  for (auto& v : m.transitions.data()) v = number();
  for (double v : m.parameters())
    if (!std::isfinite(v)) throw ValidationError("model file: non-finite parameter");
  return m;
}

inline void save_model(const CrfModel& m, const std::filesystem::path& path) {
  detail::write_file(path, format_model(m));
}

inline CrfModel load_model(const std::filesystem::path& path) {
  return parse_model(detail::read_file(path));
}

// Gold tag indices for `em` from labeled token ranges.
inline std::vector<std::size_t> gold_path_for(const EmissionMatrix& em,
                                              const std::vector<LabeledRange>& spans,
                                              Scheme scheme) {
  auto seq = encode(spans, em.length(), scheme);
  std::vector<std::size_t> path;
  path.reserve(seq.size());
  for (const auto& t : seq.tags) {
    auto i = tag_index(em.tag_order, t);
    if (!i)
      throw ValidationError("tag " + to_string(t) + " missing from tag_order of '" + em.doc_id + "'");
    path.push_back(*i);
  }
  return path;
}

inline TagSequence path_to_tags(const std::vector<std::size_t>& path,
                                const std::vector<Tag>& order, Scheme scheme) {
  TagSequence seq{{}, scheme};
  seq.tags.reserve(path.size());
  for (auto y : path) seq.tags.push_back(order.at(y));
  return seq;
}

// Per-token argmax of the emission scores (no transition model).
inline std::vector<std::size_t> argmax_path(const EmissionMatrix& em) {
  std::vector<std::size_t> path(em.length(), 0);
  for (std::size_t t = 0; t < em.length(); ++t) {
    auto row = em.scores.row(t);
    path[t] = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
  }
  return path;
}

}  // namespace spanlab
