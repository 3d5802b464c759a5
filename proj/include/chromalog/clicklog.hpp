#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "chromalog/histogram.hpp"

namespace chromalog {

struct ImpressionResult {
  std::string image_id;
  int position = 0;  // 1-based rank in the displayed list
  bool clicked = false;

  friend bool operator==(const ImpressionResult&, const ImpressionResult&) = default;
};

struct ImpressionRecord {
  std::string query;
  std::vector<ImpressionResult> results;

  std::size_t clicked_count() const;
  // Throws ValidationError unless results are non-empty with strictly
  // increasing positions.
  void validate() const;

  friend bool operator==(const ImpressionRecord&, const ImpressionRecord&) = default;
};

struct ImageMeta {
  std::string image_id;
  std::vector<std::string> tags;
  std::string caption;
  std::string path;

  friend bool operator==(const ImageMeta&, const ImageMeta&) = default;
};

struct QueryColourLabel {
  std::string query;  // preprocessed, tokens joined by single spaces
  ColourHistogram label;
  std::size_t clicked = 0;
};

struct DatasetSplit {
  std::vector<std::string> train;
  std::vector<std::string> validation;
  std::vector<std::string> test;
};

struct FilterThresholds {
  std::size_t min_displayed = 10;
  std::size_t min_clicked = 4;
  std::size_t max_words = 6;
};

// Lowercases, drops everything outside [a-z0-9 ], splits on whitespace.
std::vector<std::string> preprocess_query(std::string_view raw);
std::string normalise_query(std::string_view raw);

// Merges records whose preprocessed queries match (results concatenated,
// later positions shifted past earlier ones), then keeps records meeting all
// thresholds. Output queries are normalised; order follows first appearance.
std::vector<ImpressionRecord> filter_queries(std::span<const ImpressionRecord> log, const FilterThresholds& t = {});

// Mean of the clicked images' histograms. Throws ValidationError naming the
// first clicked image without a histogram, or if nothing was clicked.
QueryColourLabel compute_query_label(const ImpressionRecord& rec, const HistogramTable& hists);

std::vector<QueryColourLabel> build_labels(std::span<const ImpressionRecord> records, const HistogramTable& hists);

// Seeded shuffle, then 16% validation and 20% test (floored, at least one
// each) with the remainder in train.
DatasetSplit split_dataset(std::span<const std::string> queries, std::uint64_t seed);

// JSON-lines formats.
std::vector<ImpressionRecord> read_impressions(std::istream& is);
void write_impressions(std::ostream& os, std::span<const ImpressionRecord> log);
std::vector<ImageMeta> read_catalog(std::istream& is);
void write_catalog(std::ostream& os, std::span<const ImageMeta> catalog);

std::vector<ImpressionRecord> load_impressions(const std::string& path);
void save_impressions(const std::string& path, std::span<const ImpressionRecord> log);
std::vector<ImageMeta> load_catalog(const std::string& path);
void save_catalog(const std::string& path, std::span<const ImageMeta> catalog);

HistogramTable labels_to_table(std::span<const QueryColourLabel> labels);

}  // namespace chromalog
