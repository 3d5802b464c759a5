#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "chromalog/clicklog.hpp"
#include "chromalog/distance.hpp"
#include "chromalog/encoder.hpp"
#include "chromalog/histogram.hpp"
#include "chromalog/netcore.hpp"

namespace chromalog {

struct FeatureVariant {
  enum class Kind { Baseline, ColourRepr, ColourDistance };
  Kind kind = Kind::Baseline;
  DistanceKind distance = DistanceKind::KL;  // used by ColourDistance only

  static FeatureVariant baseline() { return {}; }
  static FeatureVariant repr() { return {Kind::ColourRepr, DistanceKind::KL}; }
  static FeatureVariant dist(DistanceKind k) { return {Kind::ColourDistance, k}; }

  bool needs_colour() const { return kind != Kind::Baseline; }
  // Extra fusion inputs: 2B for the representation variant, 1 for distance.
  int extra_width(int bins) const;

  friend bool operator==(const FeatureVariant&, const FeatureVariant&) = default;
};

std::string to_string(const FeatureVariant& v);  // "baseline", "repr", "dist:kl"
FeatureVariant parse_feature_variant(std::string_view s);

// ---------------------------------------------------------------- image side

struct ImageFeatures {
  Vec content;
  Vec caption;  // mean caption word vector
  Vec tags;     // mean tag word vector
  ColourHistogram histogram;
};

class ContentProvider {
 public:
  virtual ~ContentProvider() = default;
  virtual int dimension() const = 0;
  // `pixels` may be null when only the histogram is known.
  virtual Vec embed(const std::string& image_id, const PixelImage* pixels, const ColourHistogram& hist) const = 0;
};

// The image's colour histogram followed by a fixed random projection of its
// pixels downsampled to side x side (zero when pixels are unavailable).
class HistogramProjectionContent : public ContentProvider {
 public:
  HistogramProjectionContent(int bins, int proj_dim = 64, int side = 8, std::uint64_t seed = 0);
  int dimension() const override { return bins_ + proj_dim_; }
  Vec embed(const std::string& image_id, const PixelImage* pixels, const ColourHistogram& hist) const override;

 private:
  int bins_, proj_dim_, side_;
  Mat projection_;
};

// Vectors supplied from outside (e.g. a CNN embedding dump).
class PrecomputedContent : public ContentProvider {
 public:
  PrecomputedContent(std::unordered_map<std::string, Vec> vectors, int dim);
  int dimension() const override { return dim_; }
  Vec embed(const std::string& image_id, const PixelImage* pixels, const ColourHistogram& hist) const override;

 private:
  std::unordered_map<std::string, Vec> vectors_;
  int dim_;
};

struct FeatureStore {
  std::vector<std::string> ids;
  std::vector<ImageFeatures> features;
  std::unordered_map<std::string, std::size_t> index;

  std::size_t size() const { return ids.size(); }
  int feature_dim() const;  // content + caption + tags
  std::optional<std::size_t> find(const std::string& id) const;
};

// Catalog images lacking a histogram are left out. `pixels` is optional and
// keyed by image id.
FeatureStore build_feature_store(std::span<const ImageMeta> catalog, const HistogramTable& hists,
                                 const ContentProvider& content, const EmbeddingProvider& words,
                                 const std::unordered_map<std::string, PixelImage>* pixels = nullptr);

// ---------------------------------------------------------------- data

struct RankingQuery {
  std::string query;  // normalised
  std::vector<std::string> tokens;
  std::vector<std::size_t> images;  // indices into the feature store
  std::vector<char> clicked;

  std::size_t clicked_count() const;
  bool usable() const;  // at least one clicked and one unclicked
};

struct RankingData {
  std::vector<RankingQuery> train, validation, test;
  std::size_t dropped_images = 0;  // impressions whose image has no features
};

// Assigns each record to its split by normalised query; records outside the
// split are ignored.
RankingData build_ranking_data(std::span<const ImpressionRecord> records, const DatasetSplit& split,
                               const FeatureStore& store);

// ---------------------------------------------------------------- model

struct RankerConfig {
  int hidden = 300;
  std::vector<int> fusion_layers{512, 128};
  int bins = 327;
  FeatureVariant variant;
  // Ablation: hold the fusion weights reading the colour inputs at zero.
  bool zero_colour_weights = false;
};

struct JointConfig {
  double alpha = 0.5;
  DistanceKind colour_objective = DistanceKind::KL;
  std::vector<int> head_layers{1024, 512};
  TrainConfig train;

  void validate() const;
};

// Sum over (clicked j, unclicked k) of -log sigmoid(s_j - s_k), divided by m^2
// with m the number of images. Throws ValidationError unless both classes occur.
double ranknet_loss(std::span<const double> scores, std::span<const char> clicked);
// Loss and dL/ds.
double ranknet_loss(std::span<const double> scores, std::span<const char> clicked, std::vector<double>& grad);

class CrossModalRanker {
 public:
  CrossModalRanker(std::shared_ptr<const EmbeddingProvider> words, const RankerConfig& cfg, int image_feature_dim,
                   const Palette* palette, std::uint64_t seed, const JointConfig* joint = nullptr);

  const RankerConfig& config() const { return cfg_; }
  const FeatureVariant& variant() const { return cfg_.variant; }
  bool joint() const { return joint_.has_value(); }
  const JointConfig* joint_config() const { return joint_ ? &*joint_ : nullptr; }
  int image_feature_dim() const { return image_dim_; }
  int fusion_input_dim() const { return fusion_.input_dim(); }

  // Colour the ranker will use for a query: the head's prediction for joint
  // models, otherwise `label` (required when the variant needs colour).
  std::optional<Vec> query_colour(std::span<const std::string> tokens, const ColourHistogram* label) const;

  std::vector<double> score_images(std::span<const std::string> tokens, std::span<const ImageFeatures* const> images,
                                   const ColourHistogram* colour) const;
  double score(std::string_view raw_query, const ImageFeatures& image, const ColourHistogram* colour) const;

  struct QueryLoss {
    double ranking = 0.0;
    double colour = 0.0;  // joint models only, unweighted
    double total = 0.0;
  };
  // With `accumulate`, adds dL/dtheta to the grads. `label` is the query's
  // colour label (features for non-joint variants, target for joint models).
  QueryLoss query_loss(const RankingQuery& q, const FeatureStore& store, const ColourHistogram* label,
                       bool accumulate);

  ParamList params();
  ParamList colour_head_params();
  QueryTrunk& trunk() { return trunk_; }
  DenseStack& fusion() { return fusion_; }
  // Columns [first, first + count) of the first fusion layer read the colour inputs.
  std::pair<int, int> colour_input_columns() const;

  Checkpoint to_checkpoint() const;
  static CrossModalRanker from_checkpoint(const Checkpoint& ck, std::shared_ptr<const EmbeddingProvider> words,
                                          const Palette* palette);

 private:
  Mat build_inputs(const Vec& qfeat, std::span<const ImageFeatures* const> images, const Vec* colour) const;
  void mask_colour_grads();

  RankerConfig cfg_;
  int image_dim_;
  const Palette* palette_;
  QueryTrunk trunk_;
  DenseStack fusion_;
  std::optional<JointConfig> joint_;
  DenseStack head_;
};

// Positives stay; each skipped image is kept with probability 0.9, otherwise
// swapped for a uniformly drawn catalog image.
RankingQuery sample_training_negatives(const RankingQuery& q, std::size_t catalog_size, std::uint64_t seed);

// ---------------------------------------------------------------- metrics

struct RankingMetrics {
  double auc = 0.0;
  double map = 0.0;
  double mrr = 0.0;
};

// Fraction of (clicked, unclicked) pairs ordered correctly; ties count half.
double query_auc(std::span<const double> scores, std::span<const char> clicked);
// Ranking by descending score, ties broken by displayed order.
double average_precision(std::span<const double> scores, std::span<const char> clicked);
double reciprocal_rank(std::span<const double> scores, std::span<const char> clicked);

struct RankingReport {
  RankingMetrics mean;
  std::vector<std::string> queries;
  std::vector<double> auc, ap, rr;  // per evaluated query
  std::size_t excluded = 0;         // degenerate or lacking a colour
};

using ScoreFn = std::function<std::vector<double>(const RankingQuery&)>;

// Parallel over queries.
RankingReport evaluate_scores(std::span<const RankingQuery> queries, const ScoreFn& score, int workers = 0);
RankingReport evaluate_scores_serial(std::span<const RankingQuery> queries, const ScoreFn& score);

RankingReport evaluate_ranking(const CrossModalRanker& ranker, std::span<const RankingQuery> queries,
                               const FeatureStore& store, const HistogramTable* colours, int workers = 0);

// ---------------------------------------------------------------- training

struct RankerCurves {
  std::vector<double> train_loss;      // mean per-query loss over each epoch
  std::vector<double> colour_loss;     // joint only: mean unweighted colour term
  std::vector<double> validation_map;
  std::size_t best_epoch = 0;
  std::size_t skipped = 0;  // training queries unusable after sampling or lacking colour
};

struct RankerTrainResult {
  CrossModalRanker ranker;
  RankerCurves curves;
};

// Batch size one: an SGD step after every query, in a seeded per-epoch order.
// Keeps the parameters with the best validation MAP.
RankerTrainResult train_ranker(const RankingData& data, const FeatureStore& store, const RankerConfig& cfg,
                               const HistogramTable* colours, const TrainConfig& train,
                               std::shared_ptr<const EmbeddingProvider> words, const Palette& palette);

RankerTrainResult train_joint(const RankingData& data, const FeatureStore& store, const RankerConfig& cfg,
                              const HistogramTable& labels, const JointConfig& jc,
                              std::shared_ptr<const EmbeddingProvider> words, const Palette& palette);

// Colour-head prediction of a joint model.
Vec predict_joint_colour(const CrossModalRanker& ranker, std::string_view raw_query);
double joint_colour_loss(const CrossModalRanker& ranker, std::span<const QueryColourLabel> labels,
                         const ColourDistance& metric);

// ---------------------------------------------------------------- reports

struct NamedReport {
  std::string name;
  RankingReport report;
};

// Variant rows by AUC/MAP/MRR columns.
std::string format_ranking_table(std::span<const NamedReport> rows);
// `name.auc=...` lines.
std::string format_ranking_keyvalues(std::span<const NamedReport> rows);
// One line per query: `query<TAB>auc<TAB>ap<TAB>rr`.
void write_per_query(std::ostream& os, const RankingReport& r);

}  // namespace chromalog
