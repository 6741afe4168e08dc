#pragma once

#include <algorithm>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "spanlab/error.hpp"
#include "spanlab/utf8.hpp"

namespace spanlab {

// Label given to annotations read from files without a label column.
inline constexpr std::string_view kDefaultSpanLabel = "PROP";

// An article. Offsets everywhere in the toolkit index into chars(), i.e. they
// count Unicode scalar values, not bytes.
class Document {
 public:
  Document(std::string id, std::string text)
      : id_(std::move(id)), text_(std::move(text)), chars_(utf8::decode(text_)) {
    if (id_.empty()) throw ValidationError("document id must not be empty");
  }

  const std::string& id() const noexcept { return id_; }
  const std::string& text() const noexcept { return text_; }
  const std::u32string& chars() const noexcept { return chars_; }
  std::size_t size() const noexcept { return chars_.size(); }

  // UTF-8 text of the half-open character range [start, end).
  std::string slice(std::size_t start, std::size_t end) const {
    end = std::min(end, chars_.size());
    if (start >= end) return {};
    return utf8::encode(std::u32string_view(chars_).substr(start, end - start));
  }

  bool operator==(const Document& o) const { return id_ == o.id_ && text_ == o.text_; }

 private:
  std::string id_;
  std::string text_;
  std::u32string chars_;
};

struct TokenSpan {
  std::size_t index = 0;
  std::size_t start = 0;
  std::size_t end = 0;
  std::string text;

  bool operator==(const TokenSpan&) const = default;
};

struct Annotation {
  std::string doc_id;
  std::string label;
  std::size_t start = 0;
  std::size_t end = 0;

  bool operator==(const Annotation&) const = default;
};

inline bool annotation_less(const Annotation& a, const Annotation& b) {
  return std::tie(a.doc_id, a.start, a.end, a.label) <
         std::tie(b.doc_id, b.start, b.end, b.label);
}

// Half-open token index range [begin, end).
struct TokenRange {
  std::size_t begin = 0;
  std::size_t end = 0;

  bool empty() const noexcept { return begin >= end; }
  bool operator==(const TokenRange&) const = default;
};

class Corpus {
 public:
  Corpus() = default;

  // Checks that every annotation resolves to a document and fits inside it.
  Corpus(std::map<std::string, Document> documents, std::vector<Annotation> annotations)
      : documents_(std::move(documents)), annotations_(std::move(annotations)) {
    for (const auto& a : annotations_) {
      auto it = documents_.find(a.doc_id);
      if (it == documents_.end())
        throw ValidationError("annotation refers to unknown document '" + a.doc_id + "'");
      if (a.start >= a.end || a.end > it->second.size())
        throw ValidationError("annotation [" + std::to_string(a.start) + "," +
                              std::to_string(a.end) + ") out of bounds for document '" +
                              a.doc_id + "'");
    }
    std::stable_sort(annotations_.begin(), annotations_.end(), annotation_less);
  }

  const std::map<std::string, Document>& documents() const noexcept { return documents_; }
  const std::vector<Annotation>& annotations() const noexcept { return annotations_; }

  const Document& document(const std::string& id) const {
    auto it = documents_.find(id);
    if (it == documents_.end()) throw ValidationError("unknown document '" + id + "'");
    return it->second;
  }

  std::vector<Annotation> annotations_for(const std::string& doc_id) const {
    std::vector<Annotation> out;
    for (const auto& a : annotations_)
      if (a.doc_id == doc_id) out.push_back(a);
    return out;
  }

  bool operator==(const Corpus&) const = default;

 private:
  std::map<std::string, Document> documents_;
  std::vector<Annotation> annotations_;
};

namespace detail {

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw IoError("error while reading " + path.string());
  return ss.str();
}

inline void write_file(const std::filesystem::path& path, std::string_view content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write file " + path.string());
  out << content;
  if (!out) throw IoError("error while writing " + path.string());
}

inline std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  while (true) {
    auto next = line.find(sep, pos);
    if (next == std::string_view::npos) {
      out.push_back(line.substr(pos));
      return out;
    }
    out.push_back(line.substr(pos, next - pos));
    pos = next + 1;
  }
}

inline std::optional<std::size_t> parse_size(std::string_view s) {
  std::size_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size() || s.empty()) return std::nullopt;
  return v;
}

// Reads a text file line by line, dropping a trailing '\r'.
inline std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::string content = read_file(path);
  std::vector<std::string> lines;
  std::size_t pos = 0;
  while (pos < content.size()) {
    auto nl = content.find('\n', pos);
    if (nl == std::string::npos) nl = content.size();
    std::string line = content.substr(pos, nl - pos);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(std::move(line));
    pos = nl + 1;
  }
  return lines;
}

}  // namespace detail

// Loads every `article<ID>.txt` in `dir`. Either all files load or an error
// naming the offending file is thrown.
inline std::map<std::string, Document> load_documents(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const std::string name = entry.path().filename().string();
    if (name.size() > 11 && name.starts_with("article") && name.ends_with(".txt"))
      files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  std::map<std::string, Document> docs;
  for (const auto& path : files) {
    const std::string name = path.filename().string();
    std::string id = name.substr(7, name.size() - 11);
    std::string text = detail::read_file(path);
    try {
      Document doc(id, std::move(text));
      docs.emplace(id, std::move(doc));
    } catch (const EncodingError& e) {
      throw EncodingError(path.string() + ": " + e.what(), e.byte_offset());
    }
  }
  return docs;
}

inline void save_documents(const std::map<std::string, Document>& docs,
                           const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  for (const auto& [id, doc] : docs)
    detail::write_file(dir / ("article" + id + ".txt"), doc.text());
}

// TSV: doc_id [TAB label] TAB start TAB end. Three-column lines get the
// default "PROP" label.
inline std::vector<Annotation> parse_annotations(std::string_view content,
                                                 const std::string& source = "<input>") {
  std::vector<Annotation> out;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < content.size()) {
    auto nl = content.find('\n', pos);
    if (nl == std::string_view::npos) nl = content.size();
    std::string_view line = content.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    auto fields = detail::split(line, '\t');
    auto where = source + ":" + std::to_string(line_no);
    if (fields.size() != 3 && fields.size() != 4)
      throw ParseError(where + ": expected 3 or 4 tab-separated fields, got " +
                       std::to_string(fields.size()));
    Annotation a;
    a.doc_id = std::string(fields[0]);
    a.label = fields.size() == 4 ? std::string(fields[1]) : std::string(kDefaultSpanLabel);
    auto start = detail::parse_size(fields[fields.size() - 2]);
    auto end = detail::parse_size(fields[fields.size() - 1]);
    if (a.doc_id.empty() || a.label.empty() || !start || !end)
      throw ParseError(where + ": malformed annotation line");
    a.start = *start;
    a.end = *end;
    if (a.end <= a.start)
      throw ValidationError(where + ": span end " + std::to_string(a.end) +
                            " must be greater than start " + std::to_string(a.start));
    out.push_back(std::move(a));
  }
  return out;
}

inline std::vector<Annotation> load_annotations(const std::filesystem::path& path) {
  return parse_annotations(detail::read_file(path), path.string());
}

inline std::string format_annotations(const std::vector<Annotation>& anns, bool with_label = true) {
  std::string out;
  for (const auto& a : anns) {
    out += a.doc_id;
    out += '\t';
    if (with_label) {
      out += a.label;
      out += '\t';
    }
    out += std::to_string(a.start) + '\t' + std::to_string(a.end) + '\n';
  }
  return out;
}

inline void save_annotations(const std::vector<Annotation>& anns,
                             const std::filesystem::path& path, bool with_label = true) {
  detail::write_file(path, format_annotations(anns, with_label));
}

// Maximal runs of letters/digits become tokens; every other non-space
// character is a token on its own.
inline std::vector<TokenSpan> tokenize(std::u32string_view chars) {
  std::vector<TokenSpan> out;
  std::size_t i = 0;
  const std::size_t n = chars.size();
  while (i < n) {
    if (utf8::is_space(chars[i])) {
      ++i;
      continue;
    }
    std::size_t j = i + 1;
    if (utf8::is_word_char(chars[i]))
      while (j < n && utf8::is_word_char(chars[j])) ++j;
    out.push_back({out.size(), i, j, utf8::encode(chars.substr(i, j - i))});
    i = j;
  }
  return out;
}

inline std::vector<TokenSpan> tokenize(const Document& doc) { return tokenize(doc.chars()); }

inline std::vector<TokenSpan> tokenize(std::string_view utf8_text) {
  return tokenize(std::u32string_view(utf8::decode(utf8_text)));
}

// Smallest token range covering every token that overlaps [start, end).
// Returns nullopt when the span only touches whitespace.
inline std::optional<TokenRange> align_span(std::size_t start, std::size_t end,
                                            const std::vector<TokenSpan>& tokens,
                                            std::size_t doc_length) {
  if (start >= end || end > doc_length)
    throw ValidationError("span [" + std::to_string(start) + "," + std::to_string(end) +
                          ") out of document bounds (length " + std::to_string(doc_length) +
                          ")");
  auto first = std::partition_point(tokens.begin(), tokens.end(),
                                    [&](const TokenSpan& t) { return t.end <= start; });
  auto last = std::partition_point(first, tokens.end(),
                                   [&](const TokenSpan& t) { return t.start < end; });
  if (first == last) return std::nullopt;
  return TokenRange{static_cast<std::size_t>(first - tokens.begin()),
                    static_cast<std::size_t>(last - tokens.begin())};
}

inline std::optional<TokenRange> align_span(const Annotation& a,
                                            const std::vector<TokenSpan>& tokens,
                                            const Document& doc) {
  return align_span(a.start, a.end, tokens, doc.size());
}

// Whitespace-collapsed, case-folded text of a span.
inline std::string normalize_text(std::string_view utf8_text) {
  std::u32string cps = utf8::decode(utf8_text);
  std::u32string out;
  bool pending_space = false;
  for (char32_t c : cps) {
    if (utf8::is_space(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(U' ');
    pending_space = false;
    out.push_back(utf8::to_lower(c));
  }
  return utf8::encode(out);
}

}  // namespace spanlab
