#pragma once

// Text interchange: class-map CSV, event TSV and per-clip score TSVs.
//
//   class map:  index,class_id,name,in_eval   (header line required)
//   events:     filename<TAB>onset<TAB>offset<TAB>event_label
//   scores:     onset<TAB>offset<TAB><label>...   one file per clip, one row per frame

#include <algorithm>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "fmnsed/assembly.hpp"
#include "fmnsed/postprocess.hpp"

namespace fmnsed {

inline constexpr const char* kEventTsvHeader = "filename\tonset\toffset\tevent_label";

struct ClassInfo {
  std::string id;
  std::string name;
  bool in_eval = true;
};

class ClassMap {
 public:
  ClassMap() = default;
  explicit ClassMap(std::vector<ClassInfo> classes) : classes_(std::move(classes)) {
    for (std::size_t i = 0; i < classes_.size(); ++i) {
      if (!by_label_.emplace(classes_[i].name, i).second) {
        throw DataError("class map: duplicate class label '" + classes_[i].name + "'");
      }
    }
  }

  std::size_t size() const { return classes_.size(); }
  const ClassInfo& operator[](std::size_t i) const { return classes_.at(i); }
  const std::string& label(std::size_t i) const { return classes_.at(i).name; }

  std::optional<std::size_t> find(std::string_view label) const {
    const auto it = by_label_.find(std::string(label));
    if (it == by_label_.end()) return std::nullopt;
    return it->second;
  }

  std::size_t index_of(std::string_view label) const {
    if (auto i = find(label)) return *i;
    throw DataError("event label '" + std::string(label) + "' is not in the class map");
  }

  /// Strictly increasing indices of the evaluation subset.
  std::vector<std::size_t> eval_indices() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < classes_.size(); ++i) {
      if (classes_[i].in_eval) out.push_back(i);
    }
    return out;
  }

 private:
  std::vector<ClassInfo> classes_;
  std::unordered_map<std::string, std::size_t> by_label_;
};

/// Stand-in vocabulary used when no class-map CSV is supplied: `class_{i}`,
/// with the first 407 of 447 flagged for evaluation.
inline ClassMap default_class_map(std::size_t classes = kTrainClasses, std::size_t eval = kEvalClasses) {
  std::vector<ClassInfo> v(classes);
  for (std::size_t i = 0; i < classes; ++i) {
    v[i].id = "class_" + std::to_string(i);
    v[i].name = v[i].id;
    v[i].in_eval = i < eval;
  }
  return ClassMap(std::move(v));
}

namespace detail {

inline std::vector<std::string> split(std::string_view line, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(sep, start);
    out.emplace_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline std::string_view trim_cr(std::string_view s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == '\n')) s.remove_suffix(1);
  return s;
}

inline double parse_double(std::string_view s, const std::string& where) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) {
    throw DataError(where + ": expected a number, got '" + std::string(s) + "'");
  }
  return v;
}

inline std::string format_seconds(double s) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(3) << s;
  return os.str();
}

}  // namespace detail

inline ClassMap parse_class_map(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw DataError("class map: empty file");
  std::vector<ClassInfo> classes;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    const auto row = detail::trim_cr(line);
    if (row.empty()) continue;
    const auto f = detail::split(row, ',');
    const std::string where = "class map line " + std::to_string(lineno);
    if (f.size() != 4) throw DataError(where + ": expected 4 fields");
    const auto idx = static_cast<std::size_t>(detail::parse_double(f[0], where));
    if (idx != classes.size()) throw DataError(where + ": indices must be 0, 1, 2, ... in order");
    if (f[3] != "0" && f[3] != "1") throw DataError(where + ": in_eval must be 0 or 1");
    classes.push_back({f[1], f[2], f[3] == "1"});
  }
  return ClassMap(std::move(classes));
}

inline ClassMap load_class_map(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open class map '" + path.string() + "'");
  return parse_class_map(in);
}

inline void write_class_map(std::ostream& out, const ClassMap& map) {
  out << "index,class_id,name,in_eval\n";
  for (std::size_t i = 0; i < map.size(); ++i) {
    out << i << ',' << map[i].id << ',' << map[i].name << ',' << (map[i].in_eval ? 1 : 0) << '\n';
  }
}

/// Events grouped by clip, in order of first appearance. Clips listed with an
/// empty label (DCASE convention for "no events") are kept with no events.
inline std::vector<EventList> parse_event_tsv(std::istream& in, const ClassMap& classes) {
  std::string line;
  if (!std::getline(in, line) || detail::trim_cr(line) != kEventTsvHeader) {
    throw DataError(std::string("event TSV must start with the header '") + kEventTsvHeader + "'");
  }
  std::vector<EventList> out;
  std::map<std::string, std::size_t> slot;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    const auto row = detail::trim_cr(line);
    if (row.empty()) continue;
    const auto f = detail::split(row, '\t');
    const std::string where = "event TSV line " + std::to_string(lineno);
    if (f.empty() || f[0].empty()) throw DataError(where + ": missing filename");
    auto [it, fresh] = slot.emplace(f[0], out.size());
    if (fresh) out.push_back({f[0], {}});
    if (f.size() == 1 || (f.size() == 4 && f[3].empty())) continue;
    if (f.size() != 4) throw DataError(where + ": expected 4 tab-separated fields");
    const double on = detail::parse_double(f[1], where);
    const double off = detail::parse_double(f[2], where);
    out[it->second].events.push_back({classes.index_of(f[3]), on, off});
  }
  for (auto& list : out) sort_events(list);
  return out;
}

inline std::vector<EventList> load_event_tsv(const std::filesystem::path& path, const ClassMap& classes) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open event file '" + path.string() + "'");
  return parse_event_tsv(in, classes);
}

inline void write_event_tsv(std::ostream& out, std::span<const EventList> lists, const ClassMap& classes) {
  out << kEventTsvHeader << '\n';
  for (const auto& list : lists) {
    EventList sorted = list;
    std::sort(sorted.events.begin(), sorted.events.end(), [](const Event& a, const Event& b) {
      return a.onset != b.onset ? a.onset < b.onset : a.class_index < b.class_index;
    });
    for (const auto& e : sorted.events) {
      out << list.clip_id << '\t' << detail::format_seconds(e.onset) << '\t' << detail::format_seconds(e.offset)
          << '\t' << classes.label(e.class_index) << '\n';
    }
  }
}

inline void write_scores_tsv(std::ostream& out, const Tensor& probs, std::span<const std::string> labels,
                             double frame_seconds = kFrameSeconds) {
  detail::require_rank(probs, 2, "scores");
  if (labels.size() != probs.dim(1)) throw ShapeError("write_scores_tsv: label count does not match columns");
  out << "onset\toffset";
  for (const auto& l : labels) out << '\t' << l;
  out << '\n';
  out << std::setprecision(7);
  for (std::size_t t = 0; t < probs.dim(0); ++t) {
    out << detail::format_seconds(static_cast<double>(t) * frame_seconds) << '\t'
        << detail::format_seconds(static_cast<double>(t + 1) * frame_seconds);
    for (std::size_t c = 0; c < probs.dim(1); ++c) out << '\t' << probs.at(t, c);
    out << '\n';
  }
}

/// Reads one scores TSV; returns the class-map index of each column and the
/// [T, columns] probabilities.
inline std::pair<std::vector<std::size_t>, Tensor> parse_scores_tsv(std::istream& in, const ClassMap& classes,
                                                                   const std::string& where) {
  std::string line;
  if (!std::getline(in, line)) throw DataError(where + ": empty scores file");
  const auto head = detail::split(detail::trim_cr(line), '\t');
  if (head.size() < 3 || head[0] != "onset" || head[1] != "offset") {
    throw DataError(where + ": scores header must be onset<TAB>offset<TAB><labels...>");
  }
  std::vector<std::size_t> columns;
  for (std::size_t i = 2; i < head.size(); ++i) columns.push_back(classes.index_of(head[i]));
  std::vector<float> values;
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    const auto row = detail::trim_cr(line);
    if (row.empty()) continue;
    const auto f = detail::split(row, '\t');
    if (f.size() != head.size()) throw DataError(where + ": ragged scores row " + std::to_string(rows + 2));
    for (std::size_t i = 2; i < f.size(); ++i) values.push_back(static_cast<float>(detail::parse_double(f[i], where)));
    ++rows;
  }
  if (rows == 0) throw DataError(where + ": scores file has no frames");
  return {columns, Tensor({rows, columns.size()}, std::move(values))};
}

}  // namespace fmnsed
