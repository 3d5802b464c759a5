#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "chromalog/clicklog.hpp"
#include "chromalog/colour.hpp"
#include "chromalog/histogram.hpp"

namespace chromalog {

struct NamedColour {
  const char* name;
  RgbColour rgb;
};

std::span<const NamedColour> synth_colour_words();
std::span<const char* const> synth_object_words();

struct SynthConfig {
  std::uint64_t seed = 0;
  int colour_words = 12;
  int object_words = 10;
  int queries_per_concept = 1;  // impression records per query in the ranking log
  int history_sessions = 2;     // impression records per query in the label log
  int images_per_query = 20;
  double beta = 20.0;           // click sharpness; 0 clicks uniformly
  double click_budget = 6.0;    // expected clicks when beta = 0
  double near_fraction = 1.0 / 3.0;  // displayed images drawn near the query colour
  int image_size = 16;
  bool bare_colour_queries = false;  // also emit the colour word alone as a query

  void validate() const;
};

struct SynthQuery {
  std::string query;
  std::string colour;
  std::string object;  // empty for bare colour queries
  RgbColour anchor;
};

struct SynthCorpus {
  std::vector<ImageMeta> catalog;
  std::vector<PixelImage> images;             // parallel to catalog
  std::vector<ImpressionRecord> history;      // source of colour labels
  std::vector<ImpressionRecord> impressions;  // clicks the rankers learn from
  std::vector<SynthQuery> queries;
};

// Queries pair a colour word with an object word. Each displayed list shares
// the query's object; a fixed share of its images is dominated by a jittered
// version of the query colour, the rest by other colours. An image is clicked
// with probability min(1, budget * softmax(-beta * d)_i), d being the LUV
// distance (in units of 100) between its dominant colour and the query colour.
SynthCorpus generate_corpus(const SynthConfig& cfg);

// One-hot histogram of each query's anchor colour.
HistogramTable truth_histograms(const SynthCorpus& corpus, const Palette& palette);

// Writes images/<id>.ppm, catalog.jsonl, history.jsonl, impressions.jsonl
// and truth.tsv (`query<TAB>#rrggbb`) under `dir`.
void write_corpus(const std::string& dir, const SynthCorpus& corpus);

}  // namespace chromalog
