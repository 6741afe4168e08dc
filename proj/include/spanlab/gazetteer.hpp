#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "spanlab/corpus.hpp"
#include "spanlab/interchange.hpp"
#include "spanlab/porter.hpp"

namespace spanlab {

// Stemmed word tokens joined by single spaces; punctuation is dropped.
inline std::string make_key(std::string_view span_text) {
  std::string key;
  for (const auto& tok : tokenize(span_text)) {
    if (!utf8::is_word_char(utf8::decode(tok.text).front())) continue;
    if (!key.empty()) key += ' ';
    key += stem(tok.text);
  }
  return key;
}

// Training-set map from stemmed span text to the classes it was labeled with.
class Gazetteer {
 public:
  struct Entry {
    std::map<std::string, long> counts;
    SpanProbs distribution;

    bool operator==(const Entry&) const = default;
  };

  void add(const std::string& key, const std::string& cls, long count = 1) {
    if (key.empty() || count <= 0) return;
    auto& e = entries_[key];
    e.counts[cls] += count;
    normalize(e);
  }

  void add_span(std::string_view span_text, const std::string& cls) { add(make_key(span_text), cls); }

  std::optional<SpanProbs> lookup(std::string_view span_text) const {
    return lookup_key(make_key(span_text));
  }

  std::optional<SpanProbs> lookup_key(const std::string& key) const {
    auto it = entries_.find(key);
    if (it == entries_.end()) return std::nullopt;
    return it->second.distribution;
  }

  const std::map<std::string, Entry>& entries() const noexcept { return entries_; }
  std::size_t size() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }

  bool operator==(const Gazetteer&) const = default;

 private:
  static void normalize(Entry& e) {
    long total = 0;
    for (const auto& [c, n] : e.counts) total += n;
    e.distribution.clear();
    for (const auto& [c, n] : e.counts)
      e.distribution[c] = static_cast<double>(n) / static_cast<double>(total);
  }

  std::map<std::string, Entry> entries_;
};

inline Gazetteer build_gazetteer(const Corpus& corpus) {
  Gazetteer g;
  for (const auto& a : corpus.annotations())
    g.add_span(corpus.document(a.doc_id).slice(a.start, a.end), a.label);
  return g;
}

// TSV: key TAB class:count[,class:count...], sorted by key.
inline std::string format_gazetteer(const Gazetteer& g) {
  std::string out;
  for (const auto& [key, e] : g.entries()) {
    out += key;
    out += '\t';
    bool first = true;
    for (const auto& [c, n] : e.counts) {
      if (!first) out += ',';
      out += c + ':' + std::to_string(n);
      first = false;
    }
    out += '\n';
  }
  return out;
}

inline Gazetteer parse_gazetteer(std::string_view content, const std::string& source = "<input>") {
  Gazetteer g;
  std::size_t pos = 0, line_no = 0;
  while (pos < content.size()) {
    auto nl = content.find('\n', pos);
    if (nl == std::string_view::npos) nl = content.size();
    std::string_view line = content.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    if (line.empty()) continue;
    const std::string where = source + ":" + std::to_string(line_no);
    auto tab = line.find('\t');
    if (tab == std::string_view::npos || tab == 0) throw ParseError(where + ": expected key<TAB>counts");
    std::string key(line.substr(0, tab));
    for (auto item : detail::split(line.substr(tab + 1), ',')) {
      auto colon = item.rfind(':');
      if (colon == std::string_view::npos || colon == 0)
        throw ParseError(where + ": expected class:count");
      auto n = detail::parse_size(item.substr(colon + 1));
      if (!n || *n == 0) throw ParseError(where + ": bad count");
      g.add(key, std::string(item.substr(0, colon)), static_cast<long>(*n));
    }
  }
  return g;
}

inline void save_gazetteer(const Gazetteer& g, const std::filesystem::path& path) {
  detail::write_file(path, format_gazetteer(g));
}

inline Gazetteer load_gazetteer(const std::filesystem::path& path) {
  return parse_gazetteer(detail::read_file(path), path.string());
}

}  // namespace spanlab
