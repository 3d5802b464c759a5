#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "chromalog/clicklog.hpp"
#include "chromalog/distance.hpp"
#include "chromalog/error.hpp"
#include "chromalog/histogram.hpp"
#include "chromalog/netcore.hpp"

namespace chromalog {

struct EncoderConfig {
  int hidden = 300;                       // LSTM units per direction
  std::vector<int> head_layers{1024, 512};  // rectifier layers before the B-way output
  int bins = 327;
};

// Embedding lookup followed by the bidirectional LSTM; shared between the
// colour encoder and the ranker.
class QueryTrunk {
 public:
  struct Trace {
    BiLstm::Trace lstm;
  };

  QueryTrunk() = default;
  QueryTrunk(std::shared_ptr<const EmbeddingProvider> provider, int hidden);

  int output_dim() const { return lstm_.output_dim(); }
  const EmbeddingProvider& provider() const { return *provider_; }
  std::shared_ptr<const EmbeddingProvider> provider_ptr() const { return provider_; }

  Vec forward(std::span<const std::string> tokens, Trace* trace = nullptr) const;
  void backward(const Trace& trace, const Vec& d_out) { lstm_.backward(trace.lstm, d_out); }
  void flush_grads() { lstm_.flush_grads(); }
  ParamList params() { return lstm_.params(); }
  BiLstm& lstm() { return lstm_; }

 private:
  std::shared_ptr<const EmbeddingProvider> provider_;
  BiLstm lstm_;
};

// Rectifier stack ending in a B-way linear layer; softmax is applied by the
// callers so that losses can backpropagate through it explicitly.
DenseStack make_colour_head(int input_dim, const EncoderConfig& cfg);

// Column-wise softmax.
Mat softmax_columns(const Mat& logits);

class ColourEncoderModel {
 public:
  ColourEncoderModel(std::shared_ptr<const EmbeddingProvider> provider, const EncoderConfig& cfg, std::uint64_t seed);

  const EncoderConfig& config() const { return cfg_; }
  int bins() const { return cfg_.bins; }

  ColourHistogram predict(std::string_view raw_query) const;
  Vec predict_tokens(std::span<const std::string> tokens) const;

  // Mean loss over the batch; with `accumulate`, adds the gradient of that
  // mean to every parameter's grad (grads are not zeroed here).
  double batch_loss(std::span<const std::vector<std::string>> tokens, std::span<const ColourHistogram> targets,
                    const ColourDistance& objective, bool accumulate);

  ParamList params();
  QueryTrunk& trunk() { return trunk_; }
  DenseStack& head() { return head_; }

  Checkpoint to_checkpoint() const;
  static ColourEncoderModel from_checkpoint(const Checkpoint& ck, std::shared_ptr<const EmbeddingProvider> provider);

 private:
  EncoderConfig cfg_;
  QueryTrunk trunk_;
  DenseStack head_;
};

struct TrainCurves {
  std::vector<double> train;       // mean train loss after each epoch
  std::vector<double> validation;  // mean validation loss after each epoch
  std::size_t best_epoch = 0;      // 0-based index into the curves
};

struct EncoderTrainResult {
  ColourEncoderModel model;
  TrainCurves curves;
};

// Minibatch SGD on the chosen distance, keeping the parameters from the epoch
// with the lowest validation loss (train loss when validation is empty).
// Queries whose token list is empty are left out of the training set.
EncoderTrainResult train_encoder(std::span<const QueryColourLabel> labels, const DatasetSplit& split,
                                 DistanceKind objective, const TrainConfig& cfg,
                                 std::shared_ptr<const EmbeddingProvider> provider, const EncoderConfig& arch,
                                 const Palette& palette);

// Mean distance over labelled queries.
double mean_encoder_loss(const ColourEncoderModel& model, std::span<const QueryColourLabel> labels,
                         const ColourDistance& metric);

struct XkcdEntry {
  std::string name;
  RgbColour rgb;
};

std::vector<XkcdEntry> read_xkcd(std::istream& is);
std::vector<XkcdEntry> load_xkcd(const std::string& path);

// Mean D_XKCD of a predictor over XKCD entries.
template <typename Predict>
double xkcd_mean(std::span<const XkcdEntry> entries, const Palette& palette, Predict&& predict) {
  if (entries.empty()) throw ValidationError("no XKCD entries");
  double acc = 0.0;
  for (const auto& e : entries) {
    const ColourHistogram label = point_to_onehot(e.rgb, palette);
    const auto q = predict(e.name);
    acc += d_xkcd(label.weights(), q);
  }
  return acc / static_cast<double>(entries.size());
}

double xkcd_evaluate(const ColourEncoderModel& model, std::span<const XkcdEntry> entries, const Palette& palette);

// Rows: training objective; columns: test metric. Both indexed in
// kAllDistanceKinds order (kl, hi, luv).
struct EvalMatrix {
  std::array<std::array<double, 3>, 3> test{};
  std::array<std::optional<double>, 3> xkcd{};
  std::array<double, 3> train_loss{};
  std::array<double, 3> validation_loss{};

  // True when every column is minimised on the diagonal.
  bool diagonal_dominant() const;
};

// Saved predictions: one `query<TAB>w_0 ... w_{B-1}` line per query.
using PredictionTable = std::vector<std::pair<std::string, std::vector<double>>>;

PredictionTable predict_all(const ColourEncoderModel& model, std::span<const QueryColourLabel> labels);
void write_predictions(std::ostream& os, const PredictionTable& preds);
PredictionTable read_predictions(std::istream& is);

// Test-metric row from stored predictions.
std::array<double, 3> metric_row(const PredictionTable& preds, std::span<const QueryColourLabel> labels,
                                 const Palette& palette);

// `models` in kl, hi, luv order. When curves are given, the train and
// validation columns take the losses at each run's selected epoch.
EvalMatrix evaluate_encoder(std::span<const ColourEncoderModel* const> models, std::span<const QueryColourLabel> test,
                            const Palette& palette, std::span<const XkcdEntry> xkcd = {},
                            std::span<const TrainCurves> curves = {});

std::string format_eval_matrix(const EvalMatrix& m);

}  // namespace chromalog
