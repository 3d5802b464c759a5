// Acceptance run: one PASS/FAIL line per criterion, exit status 0 only when
// all pass. Pass criterion numbers as arguments to run a subset.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "chromalog/clicklog.hpp"
#include "chromalog/colour.hpp"
#include "chromalog/distance.hpp"
#include "chromalog/encoder.hpp"
#include "chromalog/histogram.hpp"
#include "chromalog/random.hpp"
#include "chromalog/ranker.hpp"
#include "chromalog/synth.hpp"

#ifndef CHROMALOG_TEST_DATA
#define CHROMALOG_TEST_DATA "tests/data"
#endif

using namespace chromalog;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;

  void check(bool ok, const std::string& what) {
    if (!ok) pass = false;
    if (!detail.empty()) detail += "; ";
    detail += what + (ok ? "" : " [miss]");
  }
};

std::string fmt(double x, int prec = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", prec, x);
  return buf;
}

const Palette& full_palette() {
  static const Palette p = generate_palette({});
  return p;
}

RgbColour random_rgb(Rng& rng) {
  return {static_cast<std::uint8_t>(rng.index(256)), static_cast<std::uint8_t>(rng.index(256)),
          static_cast<std::uint8_t>(rng.index(256))};
}

std::vector<double> random_simplex(Rng& rng, std::size_t n, double floor) {
  std::vector<double> v(n);
  double s = 0;
  for (auto& x : v) s += (x = floor + rng.uniform());
  for (auto& x : v) x /= s;
  return v;
}

HistogramTable histogram_table(const SynthCorpus& c, const Palette& p) {
  const auto hs = images_to_histograms(c.images, p);
  HistogramTable t;
  for (std::size_t i = 0; i < hs.size(); ++i) t[c.catalog[i].image_id] = hs[i];
  return t;
}

std::vector<std::string> keys(std::span<const QueryColourLabel> ls) {
  std::vector<std::string> out;
  for (const auto& l : ls) out.push_back(l.query);
  return out;
}

std::vector<QueryColourLabel> subset(std::span<const QueryColourLabel> ls, const std::vector<std::string>& want) {
  const std::set<std::string> w(want.begin(), want.end());
  std::vector<QueryColourLabel> out;
  for (const auto& l : ls)
    if (w.count(l.query)) out.push_back(l);
  return out;
}

// ---------------------------------------------------------------- 1

Outcome colour_kernels() {
  Outcome o;
  Rng rng(1);
  int worst = 0;
  for (int i = 0; i < 10000; ++i) {
    const RgbColour c = random_rgb(rng);
    const RgbColour back = hcl_to_rgb(rgb_to_hcl(c));
    worst = std::max({worst, std::abs(back.r - c.r), std::abs(back.g - c.g), std::abs(back.b - c.b)});
  }
  o.check(worst <= 1, "round trip max channel error " + std::to_string(worst));
  bool grey = true;
  for (int k = 0; k < 256; ++k) {
    const auto v = static_cast<std::uint8_t>(k);
    grey = grey && rgb_to_hcl(RgbColour{v, v, v}).c == 0.0;
  }
  o.check(grey, "grey chroma exactly 0");
  const double L = rgb_to_luv(RgbColour{255, 255, 255}).L;
  o.check(std::abs(L - 100.0) <= 1e-3, "white L " + fmt(L, 10));
  return o;
}

// ---------------------------------------------------------------- 2

Outcome quantisation() {
  Outcome o;
  const auto& p = full_palette();
  o.check(p.size() == 327, std::to_string(p.size()) + " bins");
  Rng rng(2);
  int mismatches = 0;
  for (int i = 0; i < 1000; ++i) {
    const RgbColour c = random_rgb(rng);
    const LuvColour luv = rgb_to_luv(c);
    std::size_t best = 0;
    for (std::size_t k = 1; k < p.size(); ++k)
      if (luv_distance_sq(p[k].luv, luv) < luv_distance_sq(p[best].luv, luv)) best = k;
    mismatches += nearest_bin(p, rgb_to_hcl(c)) != best || p.nearest(c) != best;
  }
  o.check(mismatches == 0, std::to_string(mismatches) + " brute-force mismatches over 1000 colours");
  return o;
}

// ---------------------------------------------------------------- 3

Outcome distance_axioms() {
  Outcome o;
  const auto& pal = full_palette();
  Rng rng(3);
  double kl_min = 1e300, kl_self = 0, hi_asym = 0, hi_lo = 1e300, hi_hi = -1e300, luv_self = 0;
  for (int t = 0; t < 100; ++t) {
    const auto p = random_simplex(rng, pal.size(), 0.0), q = random_simplex(rng, pal.size(), 0.0);
    kl_min = std::min(kl_min, d_kl(p, q));
    kl_self = std::max(kl_self, std::abs(d_kl(p, p)));
    hi_asym = std::max(hi_asym, std::abs(d_hi(p, q) - d_hi(q, p)));
    hi_lo = std::min(hi_lo, d_hi(p, q));
    hi_hi = std::max(hi_hi, d_hi(p, q));
    luv_self = std::max(luv_self, std::abs(d_luv(p, p, pal)));
  }
  o.check(kl_min >= 0.0 && kl_self <= 1e-9, "kl min " + fmt(kl_min) + ", |kl(P,P)| " + fmt(kl_self));
  double disjoint = 1.0;
  for (std::size_t j = 0; j + 1 < pal.size(); j += 37) {
    disjoint = std::min(disjoint, d_hi(ColourHistogram::one_hot(pal.size(), j), ColourHistogram::one_hot(pal.size(), j + 1)));
  }
  o.check(hi_asym == 0.0 && hi_lo >= 0.0 && hi_hi <= 1.0 && disjoint == 1.0,
          "hi range [" + fmt(hi_lo) + ", " + fmt(hi_hi) + "], disjoint " + fmt(disjoint));
  o.check(luv_self == 0.0, "luv(P,P) " + fmt(luv_self));
  const Gaussian2 n;
  const double h = hellinger_gauss2d(n, n);
  o.check(std::abs(h - (1.0 - std::exp(-0.25))) <= 1e-4, "N(0,I) Hellinger self " + fmt(h, 8));
  return o;
}

// ---------------------------------------------------------------- 4

double rel_err(double a, double n) { return std::abs(a - n) / std::max({std::abs(a), std::abs(n), 1e-6}); }

Palette ten_bins() {
  std::vector<PaletteBin> bins;
  for (std::size_t k = 0; k < 10; ++k) bins.push_back(full_palette()[k * 32 + 3]);
  return Palette(bins);
}

double distance_fd_error(DistanceKind kind, const Palette& pal) {
  const ColourDistance metric(kind, &pal);
  Rng rng(4);
  const double h = 1e-5;
  double worst = 0;
  for (int t = 0; t < 20; ++t) {
    auto p = random_simplex(rng, 10, 0.05), q = random_simplex(rng, 10, 0.05);
    const auto g = metric.gradients(p, q);
    for (int side = 0; side < 2; ++side) {
      auto& v = side == 0 ? p : q;
      const auto& analytic = side == 0 ? g.dp : g.dq;
      for (std::size_t i = 0; i < v.size(); ++i) {
        if (kind == DistanceKind::HistogramIntersection && std::abs(p[i] - q[i]) < 2 * h) continue;
        const double keep = v[i];
        v[i] = keep + h;
        const double up = metric(p, q);
        v[i] = keep - h;
        const double down = metric(p, q);
        v[i] = keep;
        worst = std::max(worst, rel_err(analytic[i], (up - down) / (2 * h)));
      }
    }
  }
  return worst;
}

Outcome gradient_correctness() {
  Outcome o;
  const Palette pal = ten_bins();
  for (auto k : kAllDistanceKinds) {
    const double e = distance_fd_error(k, pal);
    o.check(e <= 1e-4, "d_" + to_string(k) + " " + fmt(e, 3));
  }

  Rng rng(5);
  double rn = 0;
  for (int t = 0; t < 20; ++t) {
    std::vector<double> s(4);
    for (auto& x : s) x = rng.uniform(-2, 2);
    const std::vector<char> c{1, 0, static_cast<char>(t % 2), 0};
    std::vector<double> g;
    ranknet_loss(s, c, g);
    for (std::size_t i = 0; i < s.size(); ++i) {
      auto up = s, down = s;
      up[i] += 1e-5;
      down[i] -= 1e-5;
      rn = std::max(rn, rel_err(g[i], (ranknet_loss(up, c) - ranknet_loss(down, c)) / 2e-5));
    }
  }
  o.check(rn <= 1e-4, "ranknet " + fmt(rn, 3));

  // Joint objective through the whole model: 4 images, 3 tokens, 10 bins.
  SynthConfig sc;
  sc.colour_words = 3;
  sc.object_words = 2;
  sc.images_per_query = 6;
  sc.image_size = 6;
  const auto corpus = generate_corpus(sc);
  const auto hists = histogram_table(corpus, pal);
  const auto words = std::make_shared<HashEmbedding>(6);
  const HistogramProjectionContent content(10, 4, 4, 1);
  const auto store = build_feature_store(corpus.catalog, hists, content, *words);
  RankingQuery q;
  q.query = "red flower photo";
  q.tokens = preprocess_query(q.query);
  q.images = {0, 1, 2, 3};
  q.clicked = {1, 0, 0, 1};
  const ColourHistogram label(random_simplex(rng, 10, 0.05));
  double joint = 0;
  for (auto obj : kAllDistanceKinds) {
    for (const char* v : {"baseline", "repr", "dist:kl"}) {
      JointConfig jc;
      jc.colour_objective = obj;
      jc.head_layers = {5};
      RankerConfig rc;
      rc.hidden = 3;
      rc.fusion_layers = {6, 4};
      rc.bins = 10;
      rc.variant = parse_feature_variant(v);
      CrossModalRanker r(words, rc, store.feature_dim(), &pal, 7, &jc);
      joint = std::max(joint, grad_check(
                                  r.params(), [&] { return r.query_loss(q, store, &label, false).total; },
                                  [&] {
                                    zero_grads(r.params());
                                    r.query_loss(q, store, &label, true);
                                  }));
    }
  }
  o.check(joint <= 1e-4, "joint objective " + fmt(joint, 3));
  return o;
}

// ---------------------------------------------------------------- 5

Outcome label_pipeline() {
  Outcome o;
  Rng rng(6);
  HistogramTable hists;
  for (int i = 0; i < 40; ++i) hists["img" + std::to_string(i)] = ColourHistogram(random_simplex(rng, 327, 0.0));
  double worst = 0;
  for (int t = 0; t < 50; ++t) {
    ImpressionRecord rec{"query " + std::to_string(t), {}};
    std::vector<const ColourHistogram*> clicked;
    for (int pos = 1; pos <= 12; ++pos) {
      const auto id = "img" + std::to_string(rng.index(40));
      const bool c = pos == 1 || rng.bernoulli(0.4);
      rec.results.push_back({id, pos, c});
      if (c) clicked.push_back(&hists.at(id));
    }
    const auto label = compute_query_label(rec, hists);
    for (std::size_t b = 0; b < 327; ++b) {
      double s = 0;
      for (const auto* h : clicked) s += (*h)[b];
      worst = std::max(worst, std::abs(label.label[b] - s / static_cast<double>(clicked.size())));
    }
  }
  o.check(worst <= 1e-12, "label vs brute-force mean " + fmt(worst, 3));

  auto record = [](const std::string& q, int shown, int clicks) {
    ImpressionRecord r{q, {}};
    for (int i = 0; i < shown; ++i) r.results.push_back({"img" + std::to_string(i), i + 1, i < clicks});
    return r;
  };
  const std::vector<ImpressionRecord> log{record("boundary query", 10, 4), record("one two three four five six", 12, 5),
                                          record("too few shown", 9, 5), record("too few clicks", 12, 3),
                                          record("one two three four five six seven", 12, 5)};
  const auto kept = filter_queries(log);
  std::vector<std::string> names;
  for (const auto& r : kept) names.push_back(r.query);
  o.check(names == std::vector<std::string>{"boundary query", "one two three four five six"},
          std::to_string(kept.size()) + " of 5 records kept at the 10/4/6 boundary");
  return o;
}

// ---------------------------------------------------------------- 6

Outcome encoder_overfit() {
  Outcome o;
  const auto& pal = full_palette();
  SynthConfig sc;
  sc.colour_words = 10;
  sc.object_words = 5;
  sc.seed = 1;
  const auto corpus = generate_corpus(sc);
  const auto labels = build_labels(filter_queries(corpus.history), histogram_table(corpus, pal));
  o.check(labels.size() == 50, std::to_string(labels.size()) + " queries");
  DatasetSplit split;
  split.train = keys(labels);
  TrainConfig tc;
  tc.learning_rate = 0.1;
  tc.batch_size = 4;
  tc.max_epochs = 500;
  tc.seed = 3;
  EncoderConfig arch;
  arch.hidden = 32;
  arch.head_layers = {128, 64};
  const auto r = train_encoder(labels, split, DistanceKind::KL, tc, std::make_shared<HashEmbedding>(32), arch, pal);
  const double loss = *std::min_element(r.curves.train.begin(), r.curves.train.end());
  o.check(loss <= 0.1, "best train KL " + fmt(loss));

  const double med = pal.median_chroma();
  const double red_axis = rgb_to_hcl(RgbColour{255, 0, 0}).h;
  double worst = 1.0;
  int reds = 0;
  for (const auto& q : corpus.queries) {
    if (q.colour != "red") continue;
    const auto h = r.model.predict(q.query);
    double m = 0;
    for (std::size_t b = 0; b < pal.size(); ++b)
      if (hue_difference(pal[b].hcl.h, red_axis) <= 30.0 && pal[b].hcl.c > med) m += h[b];
    worst = std::min(worst, m);
    ++reds;
  }
  o.check(reds > 0 && worst >= 0.8, "least red mass over " + std::to_string(reds) + " red queries " + fmt(worst));
  return o;
}

// ---------------------------------------------------------------- 7

Outcome diagonal_dominance() {
  Outcome o;
  const auto& pal = full_palette();
  SynthConfig sc;
  sc.colour_words = 24;
  sc.object_words = 20;
  sc.seed = 21;
  sc.beta = 2.0;
  sc.history_sessions = 3;
  const auto corpus = generate_corpus(sc);
  const auto labels = build_labels(filter_queries(corpus.history), histogram_table(corpus, pal));
  const auto split = split_dataset(keys(labels), 5);
  EncoderConfig arch;
  arch.hidden = 32;
  arch.head_layers = {128, 64};
  const auto words = std::make_shared<HashEmbedding>(32);
  // Per-objective step sizes: the three losses differ in scale by orders of
  // magnitude, so one rate cannot suit all of them.
  const double lr[3] = {0.1, 0.3, 0.003};
  std::vector<EncoderTrainResult> runs;
  std::vector<TrainCurves> curves;
  for (std::size_t k = 0; k < 3; ++k) {
    TrainConfig tc;
    tc.learning_rate = lr[k];
    tc.batch_size = 4;
    tc.max_epochs = 1000;
    runs.push_back(train_encoder(labels, split, kAllDistanceKinds[k], tc, words, arch, pal));
    curves.push_back(runs.back().curves);
  }
  std::vector<const ColourEncoderModel*> ms;
  for (const auto& r : runs) ms.push_back(&r.model);
  const auto m = evaluate_encoder(ms, subset(labels, split.test), pal, {}, curves);
  std::cout << format_eval_matrix(m);
  for (std::size_t j = 0; j < 3; ++j) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < 3; ++i)
      if (m.test[i][j] < m.test[best][j]) best = i;
    o.check(best == j, "test_" + to_string(kAllDistanceKinds[j]) + " column minimised by " +
                           to_string(kAllDistanceKinds[best]) + " (" + fmt(m.test[best][j]) + " vs diagonal " +
                           fmt(m.test[j][j]) + ")");
  }
  return o;
}

// ---------------------------------------------------------------- 8

Outcome xkcd_metric() {
  Outcome o;
  const auto& pal = full_palette();
  const auto entries = load_xkcd(std::string(CHROMALOG_TEST_DATA) + "/xkcd_rgb.tsv");
  const double perfect = xkcd_mean(entries, pal, [&](const std::string& name) {
    const auto it = std::find_if(entries.begin(), entries.end(), [&](const XkcdEntry& e) { return e.name == name; });
    const auto h = point_to_onehot(it->rgb, pal);
    return std::vector<double>(h.weights().begin(), h.weights().end());
  });
  o.check(perfect == 0.0, "perfect predictor " + fmt(perfect) + " over " + std::to_string(entries.size()) + " entries");
  const std::vector<double> uniform(pal.size(), 1.0 / static_cast<double>(pal.size()));
  double worst = 0;
  for (const auto& e : entries)
    worst = std::max(worst, std::abs(d_xkcd(point_to_onehot(e.rgb, pal).weights(), uniform) - std::log(327.0)));
  o.check(worst <= 1e-6, "uniform predictor max |D - log 327| " + fmt(worst, 3));
  return o;
}

// ---------------------------------------------------------------- 9, 10

struct RankingBench {
  Palette palette = full_palette();
  std::shared_ptr<const EmbeddingProvider> words = std::make_shared<HashEmbedding>(32);
  std::vector<QueryColourLabel> labels;
  HistogramTable label_table;
  DatasetSplit split;
  FeatureStore store;
  RankingData data;

  // 15 colours x 20 objects = 300 queries: 200 train, 50 validation, 50 test.
  RankingBench(double beta, std::uint64_t seed) {
    SynthConfig sc;
    sc.colour_words = 15;
    sc.object_words = 20;
    sc.seed = 11 + seed;
    sc.beta = beta;
    const auto corpus = generate_corpus(sc);
    const auto hists = histogram_table(corpus, palette);
    labels = build_labels(filter_queries(corpus.history), hists);
    label_table = labels_to_table(labels);
    std::vector<std::string> qs;
    for (const auto& q : corpus.queries) qs.push_back(q.query);
    Rng rng(derive_seed(seed, 99));
    for (std::size_t i = qs.size() - 1; i > 0; --i) std::swap(qs[i], qs[rng.index(i + 1)]);
    split.train.assign(qs.begin(), qs.begin() + 200);
    split.validation.assign(qs.begin() + 200, qs.begin() + 250);
    split.test.assign(qs.begin() + 250, qs.end());
    std::unordered_map<std::string, PixelImage> px;
    for (std::size_t i = 0; i < corpus.images.size(); ++i) px[corpus.catalog[i].image_id] = corpus.images[i];
    const HistogramProjectionContent content(327, 64, 8, 5);
    store = build_feature_store(corpus.catalog, hists, content, *words, &px);
    data = build_ranking_data(filter_queries(corpus.impressions, {2, 1, 6}), split, store);
  }

  RankerConfig config(FeatureVariant v) const {
    RankerConfig rc;
    rc.hidden = 16;
    rc.fusion_layers = {64, 32};
    rc.variant = v;
    return rc;
  }

  RankingMetrics test_metrics(const CrossModalRanker& r) const {
    return evaluate_ranking(r, data.test, store, &label_table).mean;
  }
};

Outcome ranking_direction() {
  Outcome o;
  for (double beta : {20.0, 0.0}) {
    double gain = 0, base_auc = 0;
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
      const RankingBench b(beta, seed);
      TrainConfig tc;
      tc.learning_rate = 0.01;
      tc.max_epochs = 15;
      tc.seed = seed;
      const auto base = train_ranker(b.data, b.store, b.config(FeatureVariant::baseline()), nullptr, tc, b.words,
                                     b.palette);
      const auto dist = train_ranker(b.data, b.store, b.config(FeatureVariant::dist(DistanceKind::KL)), &b.label_table,
                                     tc, b.words, b.palette);
      const double a0 = b.test_metrics(base.ranker).auc, a1 = b.test_metrics(dist.ranker).auc;
      base_auc += a0 / 3.0;
      gain += (a1 - a0) / 3.0;
    }
    if (beta > 0)
      o.check(gain >= 0.05, "beta 20: baseline AUC " + fmt(base_auc) + ", dist:kl gain " + fmt(gain));
    else
      o.check(gain <= 0.02, "beta 0: baseline AUC " + fmt(base_auc) + ", dist:kl gain " + fmt(gain));
  }
  return o;
}

Outcome joint_training() {
  Outcome o;
  const RankingBench b(20.0, 0);
  TrainConfig tc;
  tc.learning_rate = 0.05;
  tc.max_epochs = 200;
  const auto base =
      train_ranker(b.data, b.store, b.config(FeatureVariant::baseline()), nullptr, tc, b.words, b.palette);
  JointConfig jc;
  jc.alpha = 0.5;
  jc.colour_objective = DistanceKind::KL;
  jc.head_layers = {128, 64};
  jc.train = tc;
  const auto joint = train_joint(b.data, b.store, b.config(FeatureVariant::dist(DistanceKind::KL)), b.label_table, jc,
                                 b.words, b.palette);
  EncoderConfig arch;
  arch.hidden = 16;
  arch.head_layers = jc.head_layers;
  TrainConfig etc = tc;
  etc.batch_size = 1;
  const auto iso = train_encoder(b.labels, b.split, DistanceKind::KL, etc, b.words, arch, b.palette);

  const auto test = subset(b.labels, b.split.test);
  const ColourDistance kl(DistanceKind::KL, &b.palette);
  const double cj = joint_colour_loss(joint.ranker, test, kl), ci = mean_encoder_loss(iso.model, test, kl);
  o.check(std::abs(cj - ci) <= 0.1 * ci, "colour test KL joint " + fmt(cj) + " vs isolated " + fmt(ci));
  const auto mb = b.test_metrics(base.ranker), mj = b.test_metrics(joint.ranker);
  o.check(mj.map > mb.map && mj.mrr > mb.mrr, "MAP " + fmt(mj.map) + " vs baseline " + fmt(mb.map) + ", MRR " +
                                                  fmt(mj.mrr) + " vs baseline " + fmt(mb.mrr));
  return o;
}

// ---------------------------------------------------------------- 11

Outcome metric_correctness() {
  Outcome o;
  const std::vector<RankingQuery> qs{
      {"q1", {}, {0, 1, 2, 3}, {1, 0, 1, 0}},
      {"q2", {}, {0, 1, 2}, {1, 0, 0}},
      {"q3", {}, {0, 1, 2}, {0, 1, 0}},
  };
  const std::vector<std::vector<double>> scores{{0.9, 0.8, 0.3, 0.1}, {0.2, 0.5, 0.4}, {0.5, 0.5, 0.1}};
  std::size_t i = 0;
  const auto rep = evaluate_scores_serial(qs, [&](const RankingQuery&) { return scores[i++]; });
  // AP 5/6, 1/3, 1/2; RR 1, 1/3, 1/2; AUC 3/4, 0, 3/4. Compared to within
  // the last bit, since summation order differs from the hand fractions.
  const std::vector<double> ap{5.0 / 6.0, 1.0 / 3.0, 0.5}, rr{1.0, 1.0 / 3.0, 0.5}, auc{0.75, 0.0, 0.75};
  auto close = [](double a, double b) { return std::abs(a - b) <= 1e-15; };
  bool per_query = rep.ap.size() == 3;
  for (std::size_t k = 0; per_query && k < 3; ++k)
    per_query = close(rep.ap[k], ap[k]) && close(rep.rr[k], rr[k]) && close(rep.auc[k], auc[k]);
  o.check(per_query && close(rep.mean.map, 5.0 / 9.0) && close(rep.mean.mrr, 11.0 / 18.0) && close(rep.mean.auc, 0.5),
          "fixture MAP " + fmt(rep.mean.map, 10) + " MRR " + fmt(rep.mean.mrr, 10) + " AUC " + fmt(rep.mean.auc, 10));

  Rng rng(11);
  std::vector<RankingQuery> random(200);
  for (auto& q : random) {
    q.images.resize(20);
    q.clicked.assign(20, 0);
    for (auto& c : q.clicked) c = rng.bernoulli(0.3);
    q.clicked[0] = 1;
    q.clicked[1] = 0;
  }
  const auto r = evaluate_scores(random, [](const RankingQuery& q) {
    Rng local(derive_seed(17, q.clicked.size(), std::count(q.clicked.begin(), q.clicked.end(), 1)));
    std::vector<double> s(q.clicked.size());
    for (auto& x : s) x = local.uniform();
    return s;
  });
  o.check(std::abs(r.mean.auc - 0.5) <= 0.05, "random scorer AUC " + fmt(r.mean.auc));
  return o;
}

// ---------------------------------------------------------------- 12

template <typename T>
std::string serialised(const T& model) {
  std::ostringstream os;
  model.to_checkpoint().write(os);
  return os.str();
}

Outcome determinism() {
  Outcome o;
  SynthConfig sc;
  sc.colour_words = 4;
  sc.object_words = 4;
  sc.images_per_query = 10;
  sc.image_size = 12;
  const auto corpus = generate_corpus(sc);
  const auto& pal = full_palette();

  const auto h1 = images_to_histograms(corpus.images, pal, 1), h8 = images_to_histograms(corpus.images, pal, 8);
  bool same_hist = h1 == h8;
  for (std::size_t i = 0; i < corpus.images.size() && same_hist; ++i)
    same_hist = image_to_histogram(corpus.images[i], pal) == image_to_histogram_serial(corpus.images[i], pal);
  o.check(same_hist, "extraction independent of worker count");

  const auto hists = histogram_table(corpus, pal);
  const auto labels = build_labels(filter_queries(corpus.history, {10, 2, 6}), hists);
  const auto split = split_dataset(keys(labels), 1);
  const auto words = std::make_shared<HashEmbedding>(8);
  EncoderConfig arch;
  arch.hidden = 6;
  arch.head_layers = {16};
  TrainConfig tc;
  tc.learning_rate = 0.05;
  tc.batch_size = 4;
  tc.max_epochs = 20;
  tc.seed = 9;
  bool enc_same = true;
  for (auto k : kAllDistanceKinds) {
    const auto a = train_encoder(labels, split, k, tc, words, arch, pal);
    const auto b = train_encoder(labels, split, k, tc, words, arch, pal);
    const std::vector<const ColourEncoderModel*> ma{&a.model, &a.model, &a.model}, mb{&b.model, &b.model, &b.model};
    enc_same = enc_same && serialised(a.model) == serialised(b.model) && a.curves.train == b.curves.train &&
               format_eval_matrix(evaluate_encoder(ma, labels, pal)) ==
                   format_eval_matrix(evaluate_encoder(mb, labels, pal));
  }
  o.check(enc_same, "encoder checkpoints and reports repeat");

  const HistogramProjectionContent content(327, 8, 4, 2);
  const auto store = build_feature_store(corpus.catalog, hists, content, *words);
  const auto table = labels_to_table(labels);
  const auto data = build_ranking_data(filter_queries(corpus.impressions, {2, 1, 6}), split, store);
  RankerConfig rc;
  rc.hidden = 4;
  rc.fusion_layers = {8, 4};
  bool rank_same = true;
  for (const char* v : {"baseline", "repr", "dist:luv"}) {
    rc.variant = parse_feature_variant(v);
    const auto a = train_ranker(data, store, rc, &table, tc, words, pal);
    const auto b = train_ranker(data, store, rc, &table, tc, words, pal);
    const std::vector<NamedReport> ra{{v, evaluate_ranking(a.ranker, data.test, store, &table, 1)}};
    const std::vector<NamedReport> rb{{v, evaluate_ranking(b.ranker, data.test, store, &table, 8)}};
    rank_same = rank_same && serialised(a.ranker) == serialised(b.ranker) &&
                format_ranking_keyvalues(ra) == format_ranking_keyvalues(rb);
  }
  JointConfig jc;
  jc.head_layers = {8};
  jc.train = tc;
  rc.variant = FeatureVariant::dist(DistanceKind::KL);
  const auto ja = train_joint(data, store, rc, table, jc, words, pal);
  const auto jb = train_joint(data, store, rc, table, jc, words, pal);
  rank_same = rank_same && serialised(ja.ranker) == serialised(jb.ranker) && ja.curves.train_loss == jb.curves.train_loss;
  o.check(rank_same, "ranker and joint checkpoints and reports repeat");
  return o;
}

struct Criterion {
  int id;
  const char* name;
  double budget_s;  // 0 = no stated limit
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> all{
      {1, "colour kernels", 5, colour_kernels},
      {2, "quantisation", 5, quantisation},
      {3, "distance axioms", 1, distance_axioms},
      {4, "gradient correctness", 60, gradient_correctness},
      {5, "label pipeline", 0, label_pipeline},
      {6, "encoder overfit", 600, encoder_overfit},
      {7, "diagonal dominance", 1800, diagonal_dominance},
      {8, "xkcd metric", 0, xkcd_metric},
      {9, "ranking direction", 1200, ranking_direction},
      {10, "joint training", 1200, joint_training},
      {11, "metric correctness", 0, metric_correctness},
      {12, "determinism", 0, determinism},
  };
  std::set<int> wanted;
  for (int i = 1; i < argc; ++i) wanted.insert(std::atoi(argv[i]));

  full_palette();
  int failed = 0;
  for (const auto& c : all) {
    if (!wanted.empty() && !wanted.count(c.id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (c.budget_s > 0) o.check(secs < c.budget_s, "runtime " + fmt(secs, 3) + " s of " + fmt(c.budget_s) + " s");
    failed += !o.pass;
    std::cout << "criterion " << c.id << " (" << c.name << "): " << (o.pass ? "PASS" : "FAIL") << "  " << o.detail
              << std::endl;
  }
  return failed ? 1 : 0;
}
