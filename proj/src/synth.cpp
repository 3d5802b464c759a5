#include "chromalog/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>

#include "chromalog/error.hpp"
#include "chromalog/image_io.hpp"
#include "chromalog/random.hpp"
#include "chromalog/textio.hpp"

namespace chromalog {

namespace {

constexpr NamedColour kColourWords[] = {
    {"red", {255, 0, 0}},       {"blue", {0, 60, 230}},       {"green", {0, 160, 0}},
    {"yellow", {255, 230, 0}},  {"orange", {255, 140, 0}},    {"purple", {128, 0, 160}},
    {"pink", {255, 130, 190}},  {"brown", {130, 70, 20}},     {"teal", {0, 128, 128}},
    {"navy", {20, 20, 120}},    {"lime", {150, 230, 30}},     {"magenta", {230, 0, 200}},
    {"beige", {225, 205, 160}}, {"maroon", {120, 0, 20}},     {"olive", {120, 120, 0}},
    {"cyan", {0, 220, 230}},    {"gold", {212, 175, 55}},     {"coral", {255, 110, 90}},
    {"lavender", {180, 150, 230}}, {"turquoise", {60, 220, 190}}, {"indigo", {75, 0, 130}},
    {"tan", {200, 160, 110}},   {"violet", {150, 60, 220}},   {"crimson", {200, 10, 50}},
};

constexpr const char* kObjectWords[] = {"car",   "flower", "dress", "house",    "bird",  "cake",  "shoe",
                                        "chair", "umbrella", "balloon", "lamp", "boat",  "bag",   "hat",
                                        "door",  "bicycle", "cup",   "shirt",    "kite",  "sofa"};

constexpr const char* kFillerWords[] = {"photo", "stock", "image", "design", "closeup", "studio"};

std::uint8_t clamp_channel(double v) { return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L)); }

RgbColour jitter(RgbColour anchor, Rng& rng) {
  HclColour h = rgb_to_hcl(anchor);
  h.h = std::fmod(h.h + rng.uniform(-8.0, 8.0) + 360.0, 360.0);
  h.c *= rng.uniform(0.85, 1.0);
  h.l = std::clamp(h.l + rng.uniform(-6.0, 6.0), 0.0, kMaxLuminance);
  return hcl_to_rgb(h);
}

double colour_gap(RgbColour a, RgbColour b) { return std::sqrt(luv_distance_sq(rgb_to_luv(a), rgb_to_luv(b))) / 100.0; }

class Builder {
 public:
  Builder(const SynthConfig& cfg, SynthCorpus& out) : cfg_(cfg), out_(out) {
    colours_.assign(kColourWords, kColourWords + cfg.colour_words);
    objects_.assign(kObjectWords, kObjectWords + cfg.object_words);
  }

  const std::vector<NamedColour>& colours() const { return colours_; }
  const std::vector<const char*>& objects() const { return objects_; }

  ImpressionRecord session(const SynthQuery& q, Rng& rng) {
    const auto m = static_cast<std::size_t>(cfg_.images_per_query);
    const auto near = std::clamp<std::size_t>(static_cast<std::size_t>(std::lround(m * cfg_.near_fraction)), 1, m);
    std::vector<char> is_near(m, 0);
    std::fill(is_near.begin(), is_near.begin() + static_cast<std::ptrdiff_t>(near), char{1});
    for (std::size_t i = m - 1; i > 0; --i) std::swap(is_near[i], is_near[rng.index(i + 1)]);

    ImpressionRecord rec;
    rec.query = q.query;
    std::vector<double> gap(m);
    for (std::size_t i = 0; i < m; ++i) {
      RgbColour dom;
      if (is_near[i]) {
        dom = jitter(q.anchor, rng);
      } else if (rng.bernoulli(0.2)) {
        dom = {static_cast<std::uint8_t>(rng.index(256)), static_cast<std::uint8_t>(rng.index(256)),
               static_cast<std::uint8_t>(rng.index(256))};
      } else {
        std::size_t k = rng.index(colours_.size() - 1);
        if (colours_[k].name == q.colour) k = colours_.size() - 1;
        dom = jitter(colours_[k].rgb, rng);
      }
      const std::string object = q.object.empty() ? objects_[rng.index(objects_.size())] : q.object;
      rec.results.push_back({make_image(dom, object, rng), static_cast<int>(i + 1), false});
      gap[i] = colour_gap(dom, q.anchor);
    }

    // Softmax over -beta * gap, shifted for stability.
    const double lo = *std::min_element(gap.begin(), gap.end());
    std::vector<double> w(m);
    double z = 0.0;
    for (std::size_t i = 0; i < m; ++i) z += (w[i] = std::exp(-cfg_.beta * (gap[i] - lo)));
    std::vector<double> p(m);
    std::size_t clicks = 0;
    for (std::size_t i = 0; i < m; ++i) {
      p[i] = std::min(1.0, cfg_.click_budget * w[i] / z);
      rec.results[i].clicked = rng.bernoulli(p[i]);
      clicks += rec.results[i].clicked;
    }
    if (clicks == 0) rec.results[static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin())].clicked = true;
    if (clicks == m) rec.results[static_cast<std::size_t>(std::min_element(p.begin(), p.end()) - p.begin())].clicked = false;
    return rec;
  }

 private:
  std::string make_image(RgbColour dom, const std::string& object, Rng& rng) {
    char id[32];
    std::snprintf(id, sizeof id, "img%06zu", out_.catalog.size());
    const int side = cfg_.image_size;
    const double share = rng.uniform(0.85, 1.0);
    const auto bg = static_cast<std::uint8_t>(240 + rng.index(16));
    std::vector<RgbColour> px(static_cast<std::size_t>(side) * static_cast<std::size_t>(side));
    for (auto& p : px) {
      if (rng.bernoulli(share)) {
        p = {clamp_channel(dom.r + 6.0 * rng.normal()), clamp_channel(dom.g + 6.0 * rng.normal()),
             clamp_channel(dom.b + 6.0 * rng.normal())};
      } else {
        p = {bg, bg, bg};
      }
    }
    ImageMeta meta;
    meta.image_id = id;
    const char* filler = kFillerWords[rng.index(std::size(kFillerWords))];
    meta.tags = {object, filler};
    meta.caption = "a " + object + " " + kFillerWords[rng.index(std::size(kFillerWords))];
    meta.path = "images/" + meta.image_id + ".ppm";
    out_.catalog.push_back(std::move(meta));
    out_.images.emplace_back(side, side, std::move(px));
    return id;
  }

  const SynthConfig& cfg_;
  SynthCorpus& out_;
  std::vector<NamedColour> colours_;
  std::vector<const char*> objects_;
};

}  // namespace

std::span<const NamedColour> synth_colour_words() { return kColourWords; }
std::span<const char* const> synth_object_words() { return kObjectWords; }

void SynthConfig::validate() const {
  if (colour_words < 2 || colour_words > static_cast<int>(std::size(kColourWords))) {
    throw ValidationError("colour_words must be in [2, " + std::to_string(std::size(kColourWords)) + "]");
  }
  if (object_words < 1 || object_words > static_cast<int>(std::size(kObjectWords))) {
    throw ValidationError("object_words must be in [1, " + std::to_string(std::size(kObjectWords)) + "]");
  }
  if (queries_per_concept < 1 || history_sessions < 1 || images_per_query < 2 || image_size < 1) {
    throw ValidationError("synthetic corpus counts must be positive");
  }
  if (!(beta >= 0.0) || !std::isfinite(beta)) throw ValidationError("beta must be finite and non-negative");
  if (!(click_budget > 0.0)) throw ValidationError("click budget must be positive");
  if (!(near_fraction > 0.0 && near_fraction <= 1.0)) throw ValidationError("near_fraction must be in (0, 1]");
}

SynthCorpus generate_corpus(const SynthConfig& cfg) {
  cfg.validate();
  SynthCorpus out;
  Builder b(cfg, out);
  for (const auto& c : b.colours()) {
    if (cfg.bare_colour_queries) out.queries.push_back({c.name, c.name, "", c.rgb});
    for (const char* o : b.objects()) out.queries.push_back({std::string(c.name) + " " + o, c.name, o, c.rgb});
  }
  Rng history(derive_seed(cfg.seed, 1));
  for (const auto& q : out.queries) {
    for (int s = 0; s < cfg.history_sessions; ++s) out.history.push_back(b.session(q, history));
  }
  Rng ranking(derive_seed(cfg.seed, 2));
  for (const auto& q : out.queries) {
    for (int s = 0; s < cfg.queries_per_concept; ++s) out.impressions.push_back(b.session(q, ranking));
  }
  return out;
}

HistogramTable truth_histograms(const SynthCorpus& corpus, const Palette& palette) {
  HistogramTable t;
  for (const auto& q : corpus.queries) t.insert_or_assign(q.query, point_to_onehot(q.anchor, palette));
  return t;
}

void write_corpus(const std::string& dir, const SynthCorpus& corpus) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(fs::path(dir) / "images", ec);
  if (ec) throw IoError("cannot create " + dir + ": " + ec.message());
  for (std::size_t i = 0; i < corpus.catalog.size(); ++i) {
    save_ppm((fs::path(dir) / corpus.catalog[i].path).string(), corpus.images[i]);
  }
  save_catalog((fs::path(dir) / "catalog.jsonl").string(), corpus.catalog);
  save_impressions((fs::path(dir) / "history.jsonl").string(), corpus.history);
  save_impressions((fs::path(dir) / "impressions.jsonl").string(), corpus.impressions);
  auto out = textio::open_out((fs::path(dir) / "truth.tsv").string());
  for (const auto& q : corpus.queries) out << q.query << '\t' << format_hex(q.anchor) << '\n';
  if (!out) throw IoError("write failed: " + (fs::path(dir) / "truth.tsv").string());
}

}  // namespace chromalog
