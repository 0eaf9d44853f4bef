#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <tuple>

#include "mmctr/datapipe/types.hpp"
#include "mmctr/error.hpp"
#include "mmctr/text.hpp"

namespace mmctr::data {

namespace detail {

inline std::string at_line(const std::string& source, std::size_t line) {
  return source + ":" + std::to_string(line) + ": ";
}

/// Parses `#<tag> key=value key=value` into the two requested integers.
inline std::pair<std::size_t, std::size_t> parse_header(std::string_view line, std::string_view tag,
                                                        std::string_view key_a, std::string_view key_b,
                                                        const std::string& source) {
  const auto fields = text::split_nonempty(text::trim(line), ' ');
  if (fields.empty() || fields[0] != tag) {
    throw ParseError(at_line(source, 1) + "expected header starting with '" + std::string(tag) + "'");
  }
  std::optional<std::size_t> a, b;
  for (std::size_t i = 1; i < fields.size(); ++i) {
    const auto eq = fields[i].find('=');
    if (eq == std::string_view::npos) throw ParseError(at_line(source, 1) + "malformed header field '" + std::string(fields[i]) + "'");
    const auto key = fields[i].substr(0, eq);
    const auto value = text::parse_number<std::size_t>(fields[i].substr(eq + 1));
    if (!value) throw ParseError(at_line(source, 1) + "header value for '" + std::string(key) + "' is not an integer");
    if (key == key_a) a = value;
    else if (key == key_b) b = value;
    else throw ParseError(at_line(source, 1) + "unknown header key '" + std::string(key) + "'");
  }
  if (!a || !b) {
    throw ParseError(at_line(source, 1) + "header must declare " + std::string(key_a) + " and " + std::string(key_b));
  }
  return {*a, *b};
}

inline std::vector<std::int64_t> parse_ids(std::string_view field, char sep, const std::string& where) {
  std::vector<std::int64_t> ids;
  for (auto tok : text::split_nonempty(field, sep)) {
    auto v = text::parse_number<std::int64_t>(tok);
    if (!v) throw ParseError(where + "bad integer '" + std::string(tok) + "'");
    ids.push_back(*v);
  }
  return ids;
}

inline std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  return in;
}

}  // namespace detail

/// Reads items.tsv: header `#items |T|=<int> d_mm=<int>`, then rows
/// `item_id<TAB>cat1,cat2,...<TAB>f1 f2 ... f_dmm`.
inline ItemTable parse_items(std::istream& in, const std::string& source = "items.tsv") {
  std::string line;
  if (!std::getline(in, line)) throw ParseError(detail::at_line(source, 1) + "missing header");
  const auto [n_features, d_mm] = detail::parse_header(line, "#items", "|T|", "d_mm", source);
  ItemTable table(n_features, d_mm);
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (text::trim(line).empty()) continue;
    const auto where = detail::at_line(source, lineno);
    const auto cols = text::split(line, '\t');
    if (cols.size() != 3) throw ParseError(where + "expected 3 tab-separated columns, got " + std::to_string(cols.size()));
    const auto id = text::parse_number<std::int64_t>(cols[0]);
    if (!id) throw ParseError(where + "bad item id '" + std::string(cols[0]) + "'");
    ItemRecord rec;
    rec.item_id = *id;
    rec.cat_features = detail::parse_ids(cols[1], ',', where);
    if (rec.cat_features.size() != table.n_cat()) {
      throw ParseError(where + "expected " + std::to_string(table.n_cat()) + " categorical codes, got " +
                       std::to_string(rec.cat_features.size()));
    }
    for (auto tok : text::split_nonempty(cols[2], ' ')) {
      auto v = text::parse_number<float>(tok);
      if (!v) throw ParseError(where + "bad float '" + std::string(tok) + "'");
      rec.mm_embedding.push_back(*v);
    }
    if (rec.mm_embedding.size() != d_mm) {
      throw ParseError(where + "expected " + std::to_string(d_mm) + " multimodal floats, got " +
                       std::to_string(rec.mm_embedding.size()));
    }
    try {
      table.add(std::move(rec));
    } catch (const DataError& e) {
      throw DataError(where + e.what());
    }
  }
  return table;
}

inline ItemTable load_items(const std::filesystem::path& path) {
  auto in = detail::open_input(path);
  return parse_items(in, path.string());
}

/// Reads samples.tsv: header `#samples N=<int> n_side=<int>`, then rows
/// `user_id<TAB>h1 h2 ...<TAB>target_id<TAB>s1,s2,...<TAB>label` with the
/// history oldest first.
inline SampleSet parse_samples(std::istream& in, const std::string& source = "samples.tsv") {
  std::string line;
  if (!std::getline(in, line)) throw ParseError(detail::at_line(source, 1) + "missing header");
  SampleSet set;
  std::tie(set.max_history, set.n_side) = detail::parse_header(line, "#samples", "N", "n_side", source);
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (text::trim(line).empty()) continue;
    const auto where = detail::at_line(source, lineno);
    const auto cols = text::split(line, '\t');
    if (cols.size() != 5) throw ParseError(where + "expected 5 tab-separated columns, got " + std::to_string(cols.size()));
    ImpressionSample s;
    auto user = text::parse_number<std::int64_t>(cols[0]);
    auto target = text::parse_number<std::int64_t>(cols[2]);
    auto label = text::parse_number<int>(cols[4]);
    if (!user) throw ParseError(where + "bad user id");
    if (!target) throw ParseError(where + "bad target id");
    if (!label || (*label != 0 && *label != 1)) throw ParseError(where + "label must be 0 or 1");
    s.user_id = *user;
    s.target_item = *target;
    s.label = *label;
    s.history = detail::parse_ids(cols[1], ' ', where);
    s.side_features = detail::parse_ids(cols[3], ',', where);
    if (s.history.size() > set.max_history) {
      throw ParseError(where + "history of length " + std::to_string(s.history.size()) + " exceeds N=" +
                       std::to_string(set.max_history));
    }
    if (s.side_features.size() != set.n_side) {
      throw ParseError(where + "expected " + std::to_string(set.n_side) + " side features, got " +
                       std::to_string(s.side_features.size()));
    }
    for (auto c : s.side_features) {
      if (c < 0) throw ParseError(where + "side feature codes must be non-negative");
    }
    set.samples.push_back(std::move(s));
  }
  return set;
}

inline SampleSet load_samples(const std::filesystem::path& path) {
  auto in = detail::open_input(path);
  return parse_samples(in, path.string());
}

inline void write_items(std::ostream& out, const ItemTable& table) {
  out << "#items |T|=" << table.n_features() << " d_mm=" << table.d_mm() << '\n';
  for (const auto& [id, rec] : table) {
    out << id << '\t';
    for (std::size_t i = 0; i < rec.cat_features.size(); ++i) out << (i ? "," : "") << rec.cat_features[i];
    out << '\t';
    for (std::size_t i = 0; i < rec.mm_embedding.size(); ++i) {
      out << (i ? " " : "") << text::format_number(rec.mm_embedding[i]);
    }
    out << '\n';
  }
}

inline void write_samples(std::ostream& out, const SampleSet& set) {
  out << "#samples N=" << set.max_history << " n_side=" << set.n_side << '\n';
  for (const auto& s : set.samples) {
    out << s.user_id << '\t';
    for (std::size_t i = 0; i < s.history.size(); ++i) out << (i ? " " : "") << s.history[i];
    out << '\t' << s.target_item << '\t';
    for (std::size_t i = 0; i < s.side_features.size(); ++i) out << (i ? "," : "") << s.side_features[i];
    out << '\t' << s.label << '\n';
  }
}

template <typename Writer, typename Value>
void write_file(const std::filesystem::path& path, Writer writer, const Value& value) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  writer(out, value);
  if (!out) throw Error("write failed for " + path.string());
}

inline void save_items(const std::filesystem::path& path, const ItemTable& table) {
  write_file(path, [](std::ostream& o, const ItemTable& t) { write_items(o, t); }, table);
}

inline void save_samples(const std::filesystem::path& path, const SampleSet& set) {
  write_file(path, [](std::ostream& o, const SampleSet& s) { write_samples(o, s); }, set);
}

}  // namespace mmctr::data
