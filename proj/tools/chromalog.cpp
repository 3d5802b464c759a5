// Command-line front end: palette, extraction, synthetic corpora, labels,
// encoder and ranker training/evaluation, XKCD scoring.

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "chromalog/clicklog.hpp"
#include "chromalog/colour.hpp"
#include "chromalog/encoder.hpp"
#include "chromalog/error.hpp"
#include "chromalog/histogram.hpp"
#include "chromalog/image_io.hpp"
#include "chromalog/ranker.hpp"
#include "chromalog/svg.hpp"
#include "chromalog/synth.hpp"
#include "chromalog/textio.hpp"

namespace fs = std::filesystem;
using namespace chromalog;
using namespace chromalog::textio;

namespace {

enum ExitCode { kOk = 0, kUsage = 1, kFormat = 2, kIo = 3, kValidation = 4, kPartial = 5 };

std::string g_data_dir = ".";

std::string in_data(const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? p : (fs::path(g_data_dir) / path).string();
}

void write_text(const std::string& path, const std::string& text) {
  auto os = open_out(path);
  os << text;
  if (!os) throw IoError("cannot write " + path);
}

// Word vectors are either hashed (`hash:<dim>`) or read from a table file.
std::shared_ptr<const EmbeddingProvider> make_words(const std::string& spec) {
  if (spec.rfind("hash:", 0) == 0) return std::make_shared<HashEmbedding>(parse_int<int>(spec.substr(5)));
  return std::make_shared<TableEmbedding>(TableEmbedding::load(spec));
}

std::string words_spec(const std::string& table, int dim) {
  return table.empty() ? "hash:" + std::to_string(dim) : fs::absolute(in_data(table)).string();
}

std::vector<int> parse_layers(const std::string& s) {
  std::vector<int> out;
  std::stringstream ss(s);
  for (std::string tok; std::getline(ss, tok, ',');) out.push_back(parse_int<int>(tok));
  if (out.empty()) throw ValidationError("empty layer list");
  return out;
}

std::vector<QueryColourLabel> load_labels(const std::string& path) {
  std::vector<QueryColourLabel> out;
  for (auto& [q, h] : load_histograms(path)) out.push_back({q, h, 0});
  return out;
}

std::vector<QueryColourLabel> select(const std::vector<QueryColourLabel>& labels, const std::vector<std::string>& keys) {
  const std::set<std::string> want(keys.begin(), keys.end());
  std::vector<QueryColourLabel> out;
  for (const auto& l : labels)
    if (want.count(l.query)) out.push_back(l);
  return out;
}

std::vector<std::string> label_keys(const std::vector<QueryColourLabel>& labels) {
  std::vector<std::string> out;
  for (const auto& l : labels) out.push_back(l.query);
  return out;
}

void write_curves(const std::string& path, const std::vector<std::string>& names,
                  const std::vector<const std::vector<double>*>& cols) {
  auto os = open_out(path);
  os << "epoch";
  for (const auto& n : names) os << '\t' << n;
  os << '\n';
  const std::size_t rows = cols.empty() ? 0 : cols.front()->size();
  for (std::size_t e = 0; e < rows; ++e) {
    os << e;
    for (const auto* c : cols) os << '\t' << (e < c->size() ? format_double((*c)[e]) : "");
    os << '\n';
  }
  if (!os) throw IoError("cannot write " + path);
}

// ---------------------------------------------------------------- palette

struct PaletteOpts {
  std::string out = "palette.txt";
  std::string palette = "palette.txt";
  std::string svg = "palette.svg";
  PaletteConfig cfg;
};

void add_palette_commands(CLI::App& app, PaletteOpts& o) {
  auto* pal = app.add_subcommand("palette", "Quantised colour palette");
  pal->require_subcommand(1);
  auto* gen = pal->add_subcommand("gen", "Generate the palette file");
  gen->add_option("--out", o.out, "Output palette file")->capture_default_str();
  gen->add_option("--bins", o.cfg.bins, "Number of bins")->capture_default_str();
  gen->add_option("--hue-steps", o.cfg.hue_steps)->capture_default_str();
  gen->add_option("--chroma-steps", o.cfg.chroma_steps)->capture_default_str();
  gen->add_option("--luminance-steps", o.cfg.luminance_steps)->capture_default_str();
  gen->add_option("--seed", o.cfg.seed)->capture_default_str();
  gen->callback([&o] {
    const Palette p = generate_palette(o.cfg);
    save_palette(in_data(o.out), p);
    std::cout << "wrote " << p.size() << " bins to " << in_data(o.out) << "\n";
  });
  auto* svg = pal->add_subcommand("export-svg", "Render the palette as an SVG swatch grid");
  svg->add_option("--palette", o.palette, "Palette file")->capture_default_str();
  svg->add_option("--out", o.svg, "Output SVG")->capture_default_str();
  svg->callback([&o] {
    write_text(in_data(o.svg), palette_svg(load_palette(in_data(o.palette))));
    std::cout << "wrote " << in_data(o.svg) << "\n";
  });
}

// ---------------------------------------------------------------- extract

struct ExtractOpts {
  std::string images = "images";
  std::string palette = "palette.txt";
  std::string out = "histograms.txt";
  int workers = 0;
};

int g_status = kOk;

void add_extract_command(CLI::App& app, ExtractOpts& o) {
  auto* cmd = app.add_subcommand("extract", "Colour histograms for a directory of PPM images");
  cmd->add_option("--images", o.images, "Directory of .ppm files; the file stem is the image id")->capture_default_str();
  cmd->add_option("--palette", o.palette)->capture_default_str();
  cmd->add_option("--out", o.out, "Histogram cache")->capture_default_str();
  cmd->add_option("--workers", o.workers, "Worker threads (0 = all cores)")->capture_default_str();
  cmd->callback([&o] {
    const Palette palette = load_palette(in_data(o.palette));
    const fs::path dir = in_data(o.images);
    if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir.string());
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir))
      if (e.is_regular_file() && e.path().extension() == ".ppm") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    std::vector<std::string> ids;
    std::vector<PixelImage> images;
    for (const auto& f : files) {
      try {
        images.push_back(load_ppm(f.string()));
        ids.push_back(f.stem().string());
      } catch (const std::exception& e) {
        std::cerr << "warning: skipping " << f.string() << ": " << e.what() << "\n";
        g_status = kPartial;
      }
    }
    const auto hs = images_to_histograms(images, palette, o.workers);
    HistogramTable t;
    for (std::size_t i = 0; i < hs.size(); ++i) t.emplace(ids[i], hs[i]);
    save_histograms(in_data(o.out), t, palette.size());
    std::cout << "wrote " << t.size() << " histograms to " << in_data(o.out) << "\n";
  });
}

// ---------------------------------------------------------------- synth

struct SynthOpts {
  std::string out = "corpus";
  SynthConfig cfg;
};

void add_synth_command(CLI::App& app, SynthOpts& o) {
  auto* cmd = app.add_subcommand("synth", "Generate a synthetic click-log corpus");
  cmd->add_option("--out", o.out, "Output directory")->capture_default_str();
  cmd->add_option("--seed", o.cfg.seed)->capture_default_str();
  cmd->add_option("--colour-words", o.cfg.colour_words)->capture_default_str();
  cmd->add_option("--object-words", o.cfg.object_words)->capture_default_str();
  cmd->add_option("--queries-per-concept", o.cfg.queries_per_concept)->capture_default_str();
  cmd->add_option("--history-sessions", o.cfg.history_sessions)->capture_default_str();
  cmd->add_option("--images-per-query", o.cfg.images_per_query)->capture_default_str();
  cmd->add_option("--beta", o.cfg.beta, "Click sharpness")->capture_default_str();
  cmd->add_option("--click-budget", o.cfg.click_budget)->capture_default_str();
  cmd->add_option("--near-fraction", o.cfg.near_fraction)->capture_default_str();
  cmd->add_option("--image-size", o.cfg.image_size)->capture_default_str();
  cmd->add_flag("--bare-colour-queries", o.cfg.bare_colour_queries);
  cmd->callback([&o] {
    const auto corpus = generate_corpus(o.cfg);
    write_corpus(in_data(o.out), corpus);
    std::cout << "wrote " << corpus.queries.size() << " queries, " << corpus.images.size() << " images to "
              << in_data(o.out) << "\n";
  });
}

// ---------------------------------------------------------------- labels

struct LabelOpts {
  std::string log = "corpus/history.jsonl";
  std::string histograms = "histograms.txt";
  std::string out = "labels.txt";
  FilterThresholds filter;
};

void add_labels_command(CLI::App& app, LabelOpts& o) {
  auto* cmd = app.add_subcommand("labels", "Query colour labels from a click log");
  cmd->add_option("--log", o.log, "Impression log (JSON lines)")->capture_default_str();
  cmd->add_option("--histograms", o.histograms)->capture_default_str();
  cmd->add_option("--out", o.out)->capture_default_str();
  cmd->add_option("--min-displayed", o.filter.min_displayed)->capture_default_str();
  cmd->add_option("--min-clicked", o.filter.min_clicked)->capture_default_str();
  cmd->add_option("--max-words", o.filter.max_words)->capture_default_str();
  cmd->callback([&o] {
    std::size_t bins = 0;
    const auto hists = load_histograms(in_data(o.histograms), &bins);
    const auto log = load_impressions(in_data(o.log));
    const auto labels = build_labels(filter_queries(log, o.filter), hists);
    save_histograms(in_data(o.out), labels_to_table(labels), bins);
    std::cout << "wrote " << labels.size() << " labels from " << log.size() << " records to " << in_data(o.out)
              << "\n";
  });
}

// ---------------------------------------------------------------- encoder

struct EncoderOpts {
  std::string labels = "labels.txt";
  std::string palette = "palette.txt";
  std::string out = "encoder.ckpt";
  std::string curves;
  std::string objective = "kl";
  std::string embeddings;
  int embed_dim = 300;
  EncoderConfig arch;
  std::string head = "1024,512";
  TrainConfig train;
  std::uint64_t split_seed = 0;

  std::vector<std::string> models;
  std::string xkcd;
  std::string report;

  std::string model = "encoder.ckpt";
  std::vector<std::string> queries;
  std::string dump;
  std::string svg;
};

Checkpoint tag_checkpoint(Checkpoint ck, const std::string& words) {
  ck.meta["cli.words"] = words;
  return ck;
}

// Curves saved next to a checkpoint by `encoder train`, if still there.
std::optional<TrainCurves> load_curves(const std::string& ckpt_path) {
  const auto path = in_data(ckpt_path) + ".curves.tsv";
  if (!fs::exists(path)) return std::nullopt;
  const auto ck = Checkpoint::load(in_data(ckpt_path));
  if (!ck.meta.count("cli.best_epoch")) return std::nullopt;
  TrainCurves c;
  c.best_epoch = parse_int<std::size_t>(ck.get("cli.best_epoch"));
  auto is = open_in(path);
  std::string line;
  std::getline(is, line);
  for (std::size_t n = 2; std::getline(is, line); ++n) {
    const auto f = split_ws(line);
    if (f.size() != 3) throw FormatError("expected epoch, train, validation in " + path, n);
    c.train.push_back(parse_double(f[1], n));
    c.validation.push_back(parse_double(f[2], n));
  }
  if (c.best_epoch >= c.train.size()) throw FormatError("best epoch outside curves in " + path);
  return c;
}

ColourEncoderModel load_encoder(const std::string& path) {
  const auto ck = Checkpoint::load(in_data(path));
  return ColourEncoderModel::from_checkpoint(ck, make_words(ck.get("cli.words")));
}

void add_encoder_commands(CLI::App& app, EncoderOpts& o) {
  auto* enc = app.add_subcommand("encoder", "Query to colour encoder");
  enc->require_subcommand(1);

  auto* train = enc->add_subcommand("train", "Train on query colour labels");
  train->add_option("--labels", o.labels)->capture_default_str();
  train->add_option("--palette", o.palette)->capture_default_str();
  train->add_option("--out", o.out, "Checkpoint")->capture_default_str();
  train->add_option("--curves", o.curves, "Loss curves TSV (default: <out>.curves.tsv)");
  train->add_option("--objective", o.objective)->check(CLI::IsMember({"kl", "hi", "luv"}))->capture_default_str();
  train->add_option("--embeddings", o.embeddings, "Word vector table (default: hashed vectors)");
  train->add_option("--embed-dim", o.embed_dim, "Hashed vector dimension")->capture_default_str();
  train->add_option("--hidden", o.arch.hidden)->capture_default_str();
  train->add_option("--head", o.head, "Rectifier layer widths")->capture_default_str();
  train->add_option("--lr", o.train.learning_rate)->capture_default_str();
  train->add_option("--batch-size", o.train.batch_size)->capture_default_str();
  train->add_option("--epochs", o.train.max_epochs)->capture_default_str();
  train->add_option("--seed", o.train.seed)->capture_default_str();
  train->add_option("--split-seed", o.split_seed)->capture_default_str();
  train->callback([&o] {
    const Palette palette = load_palette(in_data(o.palette));
    const auto labels = load_labels(in_data(o.labels));
    const auto split = split_dataset(label_keys(labels), o.split_seed);
    const auto spec = words_spec(o.embeddings, o.embed_dim);
    EncoderConfig arch = o.arch;
    arch.head_layers = parse_layers(o.head);
    arch.bins = static_cast<int>(palette.size());
    const auto r =
        train_encoder(labels, split, parse_distance_kind(o.objective), o.train, make_words(spec), arch, palette);
    auto ck = tag_checkpoint(r.model.to_checkpoint(), spec);
    ck.meta["cli.best_epoch"] = std::to_string(r.curves.best_epoch);
    ck.save(in_data(o.out));
    const auto curves = o.curves.empty() ? o.out + ".curves.tsv" : o.curves;
    write_curves(in_data(curves), {"train", "validation"}, {&r.curves.train, &r.curves.validation});
    const ColourDistance metric(parse_distance_kind(o.objective), &palette);
    std::cout << "best epoch " << r.curves.best_epoch << "\n"
              << "test " << o.objective << " " << format_double(mean_encoder_loss(r.model, select(labels, split.test), metric))
              << "\n";
  });

  auto* eval = enc->add_subcommand("eval", "Test-metric matrix for kl, hi and luv models");
  eval->add_option("--models", o.models, "Checkpoints trained on kl, hi, luv (in that order)")->expected(3)->required();
  eval->add_option("--labels", o.labels)->capture_default_str();
  eval->add_option("--palette", o.palette)->capture_default_str();
  eval->add_option("--split-seed", o.split_seed)->capture_default_str();
  eval->add_option("--xkcd", o.xkcd, "XKCD colour list (name<TAB>#rrggbb)");
  eval->add_option("--report", o.report, "Also write the matrix here");
  eval->callback([&o] {
    const Palette palette = load_palette(in_data(o.palette));
    const auto labels = load_labels(in_data(o.labels));
    const auto split = split_dataset(label_keys(labels), o.split_seed);
    std::vector<ColourEncoderModel> ms;
    std::vector<TrainCurves> curves;
    for (const auto& m : o.models) {
      ms.push_back(load_encoder(m));
      if (auto c = load_curves(m)) curves.push_back(std::move(*c));
    }
    if (curves.size() != ms.size()) curves.clear();
    std::vector<const ColourEncoderModel*> ptrs;
    for (const auto& m : ms) ptrs.push_back(&m);
    std::vector<XkcdEntry> xkcd;
    if (!o.xkcd.empty()) xkcd = load_xkcd(in_data(o.xkcd));
    const auto m = evaluate_encoder(ptrs, select(labels, split.test), palette, xkcd, curves);
    const auto text = format_eval_matrix(m) + "diagonal_dominant " + (m.diagonal_dominant() ? "yes" : "no") + "\n";
    std::cout << text;
    if (!o.report.empty()) write_text(in_data(o.report), text);
  });

  auto* predict = enc->add_subcommand("predict", "Colour histogram of queries");
  predict->add_option("queries", o.queries, "Query strings")->required();
  predict->add_option("--model", o.model)->capture_default_str();
  predict->add_option("--palette", o.palette)->capture_default_str();
  predict->add_option("--out", o.dump, "Histogram dump (default: stdout)");
  predict->add_option("--svg", o.svg, "SVG strip of the top 10 bins (first query)");
  predict->callback([&o] {
    const Palette palette = load_palette(in_data(o.palette));
    const auto model = load_encoder(o.model);
    if (static_cast<std::size_t>(model.bins()) != palette.size())
      throw ValidationError("model has " + std::to_string(model.bins()) + " bins, palette " +
                            std::to_string(palette.size()));
    PredictionTable preds;
    for (const auto& q : o.queries) {
      const auto h = model.predict(q);
      preds.emplace_back(normalise_query(q), std::vector<double>(h.weights().begin(), h.weights().end()));
    }
    if (o.dump.empty()) {
      write_predictions(std::cout, preds);
    } else {
      auto os = open_out(in_data(o.dump));
      write_predictions(os, preds);
    }
    if (!o.svg.empty()) write_text(in_data(o.svg), histogram_strip_svg(ColourHistogram(preds.front().second), palette));
  });
}

// ---------------------------------------------------------------- ranker

struct RankerOpts {
  std::string catalog = "corpus/catalog.jsonl";
  std::string log = "corpus/impressions.jsonl";
  std::string histograms = "histograms.txt";
  std::string labels = "labels.txt";
  std::string palette = "palette.txt";
  std::string images;
  std::string out = "ranker.ckpt";
  std::string curves;
  std::string variant = "baseline";
  std::string objective = "kl";
  std::string embeddings;
  int embed_dim = 300;
  int hidden = 300;
  std::string fusion = "512,128";
  std::string head = "1024,512";
  int content_dim = 64;
  int content_side = 8;
  std::uint64_t content_seed = 0;
  bool joint = false;
  double alpha = 0.5;
  TrainConfig train;
  std::uint64_t split_seed = 0;
  FilterThresholds filter{2, 1, 6};
  int workers = 0;

  std::vector<std::string> models;
  std::string report;
  std::string per_query;
};

struct RankingSetup {
  Palette palette;
  std::vector<QueryColourLabel> labels;
  HistogramTable label_table;
  FeatureStore store;
  RankingData data;
};

RankingSetup prepare_ranking(const RankerOpts& o, const EmbeddingProvider& words, bool need_labels) {
  RankingSetup s{load_palette(in_data(o.palette)), {}, {}, {}, {}};
  const auto catalog = load_catalog(in_data(o.catalog));
  const auto hists = load_histograms(in_data(o.histograms));
  if (need_labels || fs::exists(in_data(o.labels))) {
    s.labels = load_labels(in_data(o.labels));
    s.label_table = labels_to_table(s.labels);
  }
  std::unordered_map<std::string, PixelImage> pixels;
  if (!o.images.empty()) {
    const fs::path root = in_data(o.images);
    for (const auto& m : catalog) pixels.emplace(m.image_id, load_ppm((root / m.path).string()));
  }
  const HistogramProjectionContent content(static_cast<int>(s.palette.size()), o.content_dim, o.content_side,
                                           o.content_seed);
  s.store = build_feature_store(catalog, hists, content, words, o.images.empty() ? nullptr : &pixels);
  const auto records = filter_queries(load_impressions(in_data(o.log)), o.filter);
  std::vector<std::string> queries;
  for (const auto& r : records) queries.push_back(r.query);
  s.data = build_ranking_data(records, split_dataset(queries, o.split_seed), s.store);
  return s;
}

void add_ranker_options(CLI::App* cmd, RankerOpts& o) {
  cmd->add_option("--catalog", o.catalog)->capture_default_str();
  cmd->add_option("--log", o.log, "Impression log (JSON lines)")->capture_default_str();
  cmd->add_option("--histograms", o.histograms)->capture_default_str();
  cmd->add_option("--labels", o.labels, "Query colour labels")->capture_default_str();
  cmd->add_option("--palette", o.palette)->capture_default_str();
  cmd->add_option("--images", o.images, "Root for catalog image paths (enables pixel features)");
  cmd->add_option("--embeddings", o.embeddings, "Word vector table (default: hashed vectors)");
  cmd->add_option("--embed-dim", o.embed_dim)->capture_default_str();
  cmd->add_option("--content-dim", o.content_dim)->capture_default_str();
  cmd->add_option("--content-side", o.content_side)->capture_default_str();
  cmd->add_option("--content-seed", o.content_seed)->capture_default_str();
  cmd->add_option("--split-seed", o.split_seed)->capture_default_str();
  cmd->add_option("--min-displayed", o.filter.min_displayed)->capture_default_str();
  cmd->add_option("--min-clicked", o.filter.min_clicked)->capture_default_str();
  cmd->add_option("--max-words", o.filter.max_words)->capture_default_str();
  cmd->add_option("--workers", o.workers)->capture_default_str();
}

void add_ranker_commands(CLI::App& app, RankerOpts& o) {
  auto* rk = app.add_subcommand("ranker", "Cross-modal click ranker");
  rk->require_subcommand(1);

  auto* train = rk->add_subcommand("train", "Train a ranker on impressions");
  add_ranker_options(train, o);
  train->add_option("--out", o.out)->capture_default_str();
  train->add_option("--curves", o.curves, "Curves TSV (default: <out>.curves.tsv)");
  train->add_option("--variant", o.variant, "baseline | repr | dist:<kl|hi|luv>")->capture_default_str();
  train->add_flag("--joint", o.joint, "Train a colour head alongside the ranker");
  train->add_option("--alpha", o.alpha, "Colour loss weight for joint training")->capture_default_str();
  train->add_option("--objective", o.objective, "Colour loss for joint training")
      ->check(CLI::IsMember({"kl", "hi", "luv"}))
      ->capture_default_str();
  train->add_option("--hidden", o.hidden)->capture_default_str();
  train->add_option("--fusion", o.fusion)->capture_default_str();
  train->add_option("--head", o.head, "Joint colour head widths")->capture_default_str();
  train->add_option("--lr", o.train.learning_rate)->capture_default_str();
  train->add_option("--batch-size", o.train.batch_size, "Accepted for symmetry; the ranker steps per query")
      ->capture_default_str();
  train->add_option("--epochs", o.train.max_epochs)->capture_default_str();
  train->add_option("--seed", o.train.seed)->capture_default_str();
  train->callback([&o] {
    const auto spec = words_spec(o.embeddings, o.embed_dim);
    const auto words = make_words(spec);
    auto s = prepare_ranking(o, *words, o.joint || o.variant != "baseline");
    RankerConfig cfg;
    cfg.hidden = o.hidden;
    cfg.fusion_layers = parse_layers(o.fusion);
    cfg.bins = static_cast<int>(s.palette.size());
    cfg.variant = parse_feature_variant(o.variant);
    std::optional<RankerTrainResult> r;
    if (o.joint) {
      JointConfig jc;
      jc.alpha = o.alpha;
      jc.colour_objective = parse_distance_kind(o.objective);
      jc.head_layers = parse_layers(o.head);
      jc.train = o.train;
      r.emplace(train_joint(s.data, s.store, cfg, s.label_table, jc, words, s.palette));
    } else {
      r.emplace(train_ranker(s.data, s.store, cfg, cfg.variant.needs_colour() ? &s.label_table : nullptr, o.train,
                             words, s.palette));
    }
    auto ck = tag_checkpoint(r->ranker.to_checkpoint(), spec);
    ck.meta["cli.content"] = std::to_string(o.content_dim) + " " + std::to_string(o.content_side) + " " +
                             std::to_string(o.content_seed);
    ck.save(in_data(o.out));
    const auto curves = o.curves.empty() ? o.out + ".curves.tsv" : o.curves;
    std::vector<std::string> names{"train_loss", "validation_map"};
    std::vector<const std::vector<double>*> cols{&r->curves.train_loss, &r->curves.validation_map};
    if (o.joint) {
      names.push_back("colour_loss");
      cols.push_back(&r->curves.colour_loss);
    }
    write_curves(in_data(curves), names, cols);
    const auto rep = evaluate_ranking(r->ranker, s.data.test, s.store, &s.label_table, o.workers);
    const std::vector<NamedReport> rows{{to_string(cfg.variant) + (o.joint ? "+joint" : ""), rep}};
    std::cout << "best epoch " << r->curves.best_epoch << "\n" << format_ranking_table(rows);
  });

  auto* eval = rk->add_subcommand("eval", "Test-split metrics, one row per checkpoint");
  add_ranker_options(eval, o);
  eval->add_option("--models", o.models, "Ranker checkpoints")->required();
  eval->add_option("--report", o.report, "key=value metrics file");
  eval->add_option("--per-query", o.per_query, "Per-query metrics of the first model");
  eval->callback([&o] {
    std::vector<NamedReport> rows;
    for (const auto& path : o.models) {
      const auto ck = Checkpoint::load(in_data(path));
      const auto words = make_words(ck.get("cli.words"));
      RankerOpts local = o;
      std::istringstream content(ck.get("cli.content"));
      content >> local.content_dim >> local.content_side >> local.content_seed;
      auto s = prepare_ranking(local, *words, false);
      const auto ranker = CrossModalRanker::from_checkpoint(ck, words, &s.palette);
      if (ranker.variant().needs_colour() && !ranker.joint() && s.label_table.empty())
        throw ValidationError(path + " needs colour labels (--labels)");
      auto rep = evaluate_ranking(ranker, s.data.test, s.store, &s.label_table, o.workers);
      if (rows.empty() && !o.per_query.empty()) {
        auto os = open_out(in_data(o.per_query));
        write_per_query(os, rep);
      }
      rows.push_back({to_string(ranker.variant()) + (ranker.joint() ? "+joint" : ""), std::move(rep)});
    }
    std::cout << format_ranking_table(rows);
    if (!o.report.empty()) write_text(in_data(o.report), format_ranking_keyvalues(rows));
  });
}

// ---------------------------------------------------------------- xkcd

struct XkcdOpts {
  std::string model = "encoder.ckpt";
  std::string palette = "palette.txt";
  std::string list = "xkcd.tsv";
  bool joint = false;
};

void add_xkcd_command(CLI::App& app, XkcdOpts& o) {
  auto* cmd = app.add_subcommand("xkcd", "Mean D_XKCD of an encoder over the XKCD colour list");
  cmd->add_option("--model", o.model, "Encoder checkpoint, or a joint ranker with --joint")->capture_default_str();
  cmd->add_option("--palette", o.palette)->capture_default_str();
  cmd->add_option("--list", o.list, "name<TAB>#rrggbb lines")->capture_default_str();
  cmd->add_flag("--joint", o.joint, "Score the colour head of a joint ranker");
  cmd->callback([&o] {
    const Palette palette = load_palette(in_data(o.palette));
    const auto entries = load_xkcd(in_data(o.list));
    double score = 0.0;
    if (o.joint) {
      const auto ck = Checkpoint::load(in_data(o.model));
      const auto ranker = CrossModalRanker::from_checkpoint(ck, make_words(ck.get("cli.words")), &palette);
      if (!ranker.joint()) throw ValidationError(o.model + " is not a joint model");
      score = xkcd_mean(entries, palette, [&](const std::string& name) {
        const Vec v = predict_joint_colour(ranker, name);
        return std::vector<double>(v.data(), v.data() + v.size());
      });
    } else {
      score = xkcd_evaluate(load_encoder(o.model), entries, palette);
    }
    std::cout << "xkcd " << format_double(score) << " over " << entries.size() << " entries\n";
  });
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Colour representations of search queries"};
  app.require_subcommand(1);
  app.add_option("--data-dir", g_data_dir, "Base for relative paths")->envname("CHROMALOG_DATA")->capture_default_str();

  PaletteOpts palette;
  ExtractOpts extract;
  SynthOpts synth;
  LabelOpts labels;
  EncoderOpts encoder;
  RankerOpts ranker;
  XkcdOpts xkcd;
  add_palette_commands(app, palette);
  add_extract_command(app, extract);
  add_synth_command(app, synth);
  add_labels_command(app, labels);
  add_encoder_commands(app, encoder);
  add_ranker_commands(app, ranker);
  add_xkcd_command(app, xkcd);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kUsage;
  } catch (const FormatError& e) {
    std::cerr << "format error: " << e.what() << "\n";
    return kFormat;
  } catch (const IoError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return kIo;
  } catch (const ValidationError& e) {
    std::cerr << "invalid input: " << e.what() << "\n";
    return kValidation;
  }
  return g_status;
}
