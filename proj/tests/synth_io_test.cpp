#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <regex>
#include <sstream>

#include "chromalog/error.hpp"
#include "chromalog/image_io.hpp"
#include "chromalog/svg.hpp"
#include "chromalog/synth.hpp"

namespace chromalog {
namespace {

std::size_t count_rects(const std::string& svg) {
  const std::regex rect("<rect ");
  return static_cast<std::size_t>(std::distance(std::sregex_iterator(svg.begin(), svg.end(), rect),
                                                std::sregex_iterator()));
}

TEST(Ppm, RoundTrip) {
  const PixelImage img(3, 2, {{1, 2, 3}, {4, 5, 6}, {7, 8, 9}, {10, 11, 12}, {255, 0, 128}, {0, 0, 0}});
  std::stringstream ss;
  write_ppm(ss, img);
  const auto back = read_ppm(ss);
  EXPECT_EQ(back.width, 3);
  EXPECT_EQ(back.height, 2);
  EXPECT_EQ(back.pixels, img.pixels);
}

TEST(Ppm, SkipsCommentsAndRejectsOtherFormats) {
  std::string data = "P6\n# made by hand\n1 1\n255\n";
  data += std::string("\x10\x20\x30", 3);
  std::stringstream ok(data);
  EXPECT_EQ(read_ppm(ok).pixels[0], (RgbColour{0x10, 0x20, 0x30}));
  std::stringstream p3("P3\n1 1\n255\n1 2 3\n");
  EXPECT_THROW(read_ppm(p3), FormatError);
  std::stringstream deep("P6\n1 1\n65535\n");
  EXPECT_THROW(read_ppm(deep), FormatError);
  std::stringstream truncated("P6\n2 2\n255\nabc");
  EXPECT_THROW(read_ppm(truncated), FormatError);
}

TEST(Svg, PaletteHasOneRectPerBin) {
  const Palette p = generate_palette({});
  const auto svg = palette_svg(p);
  EXPECT_EQ(count_rects(svg), p.size());
  EXPECT_EQ(svg.rfind("<svg", 0), 0u);
}

TEST(Svg, StripShowsTopTenBins) {
  const Palette p = generate_palette({});
  std::vector<double> w(p.size(), 0.0);
  for (std::size_t k = 0; k < 20; ++k) w[k * 7] = (k + 1) / 210.0;
  const auto svg = histogram_strip_svg(ColourHistogram(w), p);
  EXPECT_EQ(count_rects(svg), 10u);
  EXPECT_NE(svg.find(format_hex(p[19 * 7].rgb)), std::string::npos);
  EXPECT_EQ(svg.find(format_hex(p[0].rgb) + "\""), std::string::npos);
}

TEST(Synth, DeterministicForSeed) {
  SynthConfig c;
  c.colour_words = 3;
  c.object_words = 2;
  const auto a = generate_corpus(c), b = generate_corpus(c);
  EXPECT_EQ(a.catalog, b.catalog);
  EXPECT_EQ(a.history, b.history);
  EXPECT_EQ(a.impressions, b.impressions);
  ASSERT_EQ(a.images.size(), b.images.size());
  for (std::size_t i = 0; i < a.images.size(); ++i) EXPECT_EQ(a.images[i].pixels, b.images[i].pixels);
  c.seed = 1;
  EXPECT_NE(generate_corpus(c).history, a.history);
}

TEST(Synth, ShapeOfCorpus) {
  SynthConfig c;
  c.colour_words = 4;
  c.object_words = 3;
  c.bare_colour_queries = true;
  const auto corpus = generate_corpus(c);
  EXPECT_EQ(corpus.queries.size(), 4u * 4u);
  EXPECT_EQ(corpus.history.size(), corpus.queries.size() * 2);
  EXPECT_EQ(corpus.impressions.size(), corpus.queries.size());
  EXPECT_EQ(corpus.catalog.size(), corpus.images.size());
  for (const auto& rec : corpus.history) {
    EXPECT_NO_THROW(rec.validate());
    EXPECT_EQ(rec.results.size(), 20u);
    const auto clicks = rec.clicked_count();
    EXPECT_GT(clicks, 0u);
    EXPECT_LT(clicks, rec.results.size());
  }
  SynthConfig bad;
  bad.colour_words = 1;
  EXPECT_THROW(generate_corpus(bad), ValidationError);
  bad = {};
  bad.beta = -1;
  EXPECT_THROW(bad.validate(), ValidationError);
}

// With a very sharp click model, clicks fall on the images whose dominant
// colour is closest to the query colour.
TEST(Synth, SharpClicksPreferQueryColour) {
  SynthConfig c;
  c.colour_words = 6;
  c.object_words = 4;
  c.beta = 200;
  c.click_budget = 1.0;
  const auto corpus = generate_corpus(c);
  const Palette p = generate_palette({});
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < corpus.catalog.size(); ++i) index[corpus.catalog[i].image_id] = i;
  double clicked_gap = 0, skipped_gap = 0;
  std::size_t nc = 0, ns = 0;
  for (std::size_t q = 0; q < corpus.queries.size(); ++q) {
    const auto anchor = rgb_to_luv(corpus.queries[q].anchor);
    for (const auto& r : corpus.impressions[q].results) {
      const auto& img = corpus.images[index.at(r.image_id)];
      const double gap = std::sqrt(luv_distance_sq(anchor, rgb_to_luv(img.pixels[img.pixels.size() / 2])));
      (r.clicked ? clicked_gap : skipped_gap) += gap;
      (r.clicked ? nc : ns) += 1;
    }
  }
  EXPECT_LT(clicked_gap / nc, 0.5 * skipped_gap / ns);
}

TEST(Synth, WriteCorpusLaysOutFiles) {
  SynthConfig c;
  c.colour_words = 2;
  c.object_words = 1;
  c.images_per_query = 3;
  const auto corpus = generate_corpus(c);
  const auto dir = std::filesystem::temp_directory_path() / "chromalog_synth_test";
  std::filesystem::remove_all(dir);
  write_corpus(dir.string(), corpus);
  EXPECT_EQ(load_catalog((dir / "catalog.jsonl").string()), corpus.catalog);
  EXPECT_EQ(load_impressions((dir / "history.jsonl").string()), corpus.history);
  EXPECT_EQ(load_impressions((dir / "impressions.jsonl").string()), corpus.impressions);
  EXPECT_EQ(load_ppm((dir / corpus.catalog[0].path).string()).pixels, corpus.images[0].pixels);
  std::ifstream truth(dir / "truth.tsv");
  std::string line;
  std::getline(truth, line);
  EXPECT_EQ(line, corpus.queries[0].query + "\t" + format_hex(corpus.queries[0].anchor));
  std::filesystem::remove_all(dir);
}

TEST(Synth, TruthHistogramsAreOneHot) {
  SynthConfig c;
  c.colour_words = 3;
  c.object_words = 2;
  const auto corpus = generate_corpus(c);
  const Palette p = generate_palette({});
  const auto t = truth_histograms(corpus, p);
  EXPECT_EQ(t.size(), corpus.queries.size());
  EXPECT_EQ(t.at("red car")[p.nearest(RgbColour{255, 0, 0})], 1.0);
}

}  // namespace
}  // namespace chromalog
