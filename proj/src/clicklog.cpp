#include "chromalog/clicklog.hpp"

#include <algorithm>
#include <cctype>
#include <istream>
#include <ostream>
#include <unordered_map>

#include <json.hpp>

#include "chromalog/error.hpp"
#include "chromalog/random.hpp"
#include "chromalog/textio.hpp"

namespace chromalog {

using nlohmann::json;

std::size_t ImpressionRecord::clicked_count() const {
  return static_cast<std::size_t>(std::count_if(results.begin(), results.end(), [](const auto& r) { return r.clicked; }));
}

void ImpressionRecord::validate() const {
  if (results.empty()) throw ValidationError("impression for '" + query + "' has no results");
  for (std::size_t i = 1; i < results.size(); ++i) {
    if (results[i].position <= results[i - 1].position) {
      throw ValidationError("impression for '" + query + "' has non-increasing positions");
    }
  }
}

std::vector<std::string> preprocess_query(std::string_view raw) {
  std::vector<std::string> tokens;
  std::string cur;
  for (char ch : raw) {
    const auto u = static_cast<unsigned char>(ch);
    if (std::isspace(u)) {
      if (!cur.empty()) tokens.push_back(std::move(cur));
      cur.clear();
      continue;
    }
    const char lo = static_cast<char>(std::tolower(u));
    if ((lo >= 'a' && lo <= 'z') || (lo >= '0' && lo <= '9')) cur.push_back(lo);
  }
  if (!cur.empty()) tokens.push_back(std::move(cur));
  return tokens;
}

std::string normalise_query(std::string_view raw) {
  std::string out;
  for (const auto& t : preprocess_query(raw)) {
    if (!out.empty()) out.push_back(' ');
    out += t;
  }
  return out;
}

std::vector<ImpressionRecord> filter_queries(std::span<const ImpressionRecord> log, const FilterThresholds& t) {
  std::vector<ImpressionRecord> merged;
  std::unordered_map<std::string, std::size_t> index;
  for (const auto& rec : log) {
    std::string key = normalise_query(rec.query);
    auto [it, fresh] = index.try_emplace(key, merged.size());
    if (fresh) {
      merged.push_back({std::move(key), rec.results});
      continue;
    }
    auto& dst = merged[it->second].results;
    const int offset = dst.empty() ? 0 : dst.back().position;
    for (auto r : rec.results) {
      r.position += offset;
      dst.push_back(std::move(r));
    }
  }
  std::vector<ImpressionRecord> out;
  for (auto& rec : merged) {
    const std::size_t words = preprocess_query(rec.query).size();
    if (rec.results.size() >= t.min_displayed && rec.clicked_count() >= t.min_clicked && words <= t.max_words) {
      out.push_back(std::move(rec));
    }
  }
  return out;
}

QueryColourLabel compute_query_label(const ImpressionRecord& rec, const HistogramTable& hists) {
  std::vector<ColourHistogram> clicked;
  for (const auto& r : rec.results) {
    if (!r.clicked) continue;
    auto it = hists.find(r.image_id);
    if (it == hists.end()) throw ValidationError("no histogram for clicked image '" + r.image_id + "'");
    clicked.push_back(it->second);
  }
  if (clicked.empty()) throw ValidationError("query '" + rec.query + "' has no clicked images");
  return {normalise_query(rec.query), average_histograms(clicked), clicked.size()};
}

std::vector<QueryColourLabel> build_labels(std::span<const ImpressionRecord> records, const HistogramTable& hists) {
  std::vector<QueryColourLabel> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(compute_query_label(r, hists));
  return out;
}

DatasetSplit split_dataset(std::span<const std::string> queries, std::uint64_t seed) {
  const std::size_t n = queries.size();
  if (n < 5) throw ValidationError("need at least 5 queries to split");
  std::vector<std::string> order(queries.begin(), queries.end());
  Rng rng(seed);
  for (std::size_t i = n - 1; i > 0; --i) std::swap(order[i], order[rng.index(i + 1)]);

  const std::size_t n_val = std::max<std::size_t>(1, n * 16 / 100);
  const std::size_t n_test = std::max<std::size_t>(1, n * 20 / 100);
  const std::size_t n_train = n - n_val - n_test;
  DatasetSplit s;
  s.train.assign(order.begin(), order.begin() + n_train);
  s.validation.assign(order.begin() + n_train, order.begin() + n_train + n_val);
  s.test.assign(order.begin() + n_train + n_val, order.end());
  return s;
}

namespace {

template <typename T>
T field(const json& j, const char* name, std::size_t line) {
  auto it = j.find(name);
  if (it == j.end()) throw FormatError(std::string("missing field '") + name + "'", line);
  try {
    return it->get<T>();
  } catch (const json::exception&) {
    throw FormatError(std::string("field '") + name + "' has the wrong type", line);
  }
}

template <typename F>
void for_each_json_line(std::istream& is, F&& fn) {
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw FormatError(std::string("invalid JSON: ") + e.what(), lineno);
    }
    if (!j.is_object()) throw FormatError("expected a JSON object", lineno);
    fn(j, lineno);
  }
}

}  // namespace

std::vector<ImpressionRecord> read_impressions(std::istream& is) {
  std::vector<ImpressionRecord> out;
  for_each_json_line(is, [&](const json& j, std::size_t line) {
    ImpressionRecord rec;
    rec.query = field<std::string>(j, "query", line);
    const auto results = field<json>(j, "results", line);
    if (!results.is_array()) throw FormatError("'results' must be an array", line);
    for (const auto& r : results) {
      if (!r.is_object()) throw FormatError("result entries must be objects", line);
      rec.results.push_back({field<std::string>(r, "image_id", line), field<int>(r, "position", line),
                             field<bool>(r, "clicked", line)});
    }
    try {
      rec.validate();
    } catch (const ValidationError& e) {
      throw FormatError(e.what(), line);
    }
    out.push_back(std::move(rec));
  });
  return out;
}

void write_impressions(std::ostream& os, std::span<const ImpressionRecord> log) {
  for (const auto& rec : log) {
    json results = json::array();
    for (const auto& r : rec.results) {
      results.push_back({{"image_id", r.image_id}, {"position", r.position}, {"clicked", r.clicked}});
    }
    os << json{{"query", rec.query}, {"results", std::move(results)}}.dump() << '\n';
  }
}

std::vector<ImageMeta> read_catalog(std::istream& is) {
  std::vector<ImageMeta> out;
  std::unordered_map<std::string, std::size_t> seen;
  for_each_json_line(is, [&](const json& j, std::size_t line) {
    ImageMeta m;
    m.image_id = field<std::string>(j, "image_id", line);
    m.tags = field<std::vector<std::string>>(j, "tags", line);
    m.caption = field<std::string>(j, "caption", line);
    if (j.contains("path")) m.path = field<std::string>(j, "path", line);
    if (!seen.emplace(m.image_id, line).second) throw FormatError("duplicate image_id '" + m.image_id + "'", line);
    out.push_back(std::move(m));
  });
  return out;
}

void write_catalog(std::ostream& os, std::span<const ImageMeta> catalog) {
  for (const auto& m : catalog) {
    os << json{{"image_id", m.image_id}, {"tags", m.tags}, {"caption", m.caption}, {"path", m.path}}.dump() << '\n';
  }
}

std::vector<ImpressionRecord> load_impressions(const std::string& path) {
  auto in = textio::open_in(path);
  return read_impressions(in);
}

void save_impressions(const std::string& path, std::span<const ImpressionRecord> log) {
  auto out = textio::open_out(path);
  write_impressions(out, log);
  if (!out) throw IoError("write failed: " + path);
}

std::vector<ImageMeta> load_catalog(const std::string& path) {
  auto in = textio::open_in(path);
  return read_catalog(in);
}

void save_catalog(const std::string& path, std::span<const ImageMeta> catalog) {
  auto out = textio::open_out(path);
  write_catalog(out, catalog);
  if (!out) throw IoError("write failed: " + path);
}

HistogramTable labels_to_table(std::span<const QueryColourLabel> labels) {
  HistogramTable t;
  for (const auto& l : labels) t.insert_or_assign(l.query, l.label);
  return t;
}

}  // namespace chromalog
