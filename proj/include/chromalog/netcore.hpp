#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <Eigen/Core>

namespace chromalog {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// A trainable tensor and its gradient accumulator.
struct Parameter {
  std::string name;
  Mat value;
  Mat grad;
  int fan_in = 1;

  Parameter() = default;
  Parameter(std::string n, Eigen::Index rows, Eigen::Index cols, int fan)
      : name(std::move(n)), value(Mat::Zero(rows, cols)), grad(Mat::Zero(rows, cols)), fan_in(fan) {}
  void zero_grad() { grad.setZero(); }
};

using ParamList = std::vector<Parameter*>;

// Uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)]; each tensor draws from a
// stream keyed by the seed and its name.
void init_uniform(const ParamList& params, std::uint64_t seed);

// ---------------------------------------------------------------- embeddings

class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  virtual int dimension() const = 0;
  virtual Vec lookup(std::string_view token) const = 0;
};

// Deterministic pseudo-random unit vectors seeded from the token hash.
class HashEmbedding : public EmbeddingProvider {
 public:
  explicit HashEmbedding(int dim = 300, std::uint64_t salt = 0) : dim_(dim), salt_(salt) {}
  int dimension() const override { return dim_; }
  Vec lookup(std::string_view token) const override;

 private:
  int dim_;
  std::uint64_t salt_;
};

// Table loaded from `token v_1 ... v_D` lines; unknown tokens fall back to a
// HashEmbedding of the same dimension.
class TableEmbedding : public EmbeddingProvider {
 public:
  TableEmbedding(std::unordered_map<std::string, Vec> table, int dim);
  static TableEmbedding load(const std::string& path);
  static TableEmbedding read(std::istream& is);

  int dimension() const override { return dim_; }
  Vec lookup(std::string_view token) const override;
  std::size_t vocabulary_size() const { return table_.size(); }

 private:
  std::unordered_map<std::string, Vec> table_;
  int dim_;
  HashEmbedding fallback_;
};

// One vector per token; an empty sequence yields a single zero vector.
std::vector<Vec> embed_tokens(std::span<const std::string> tokens, const EmbeddingProvider& provider);
// Mean of the token vectors, zero for no tokens.
Vec mean_embedding(std::span<const std::string> tokens, const EmbeddingProvider& provider);

// ---------------------------------------------------------------- recurrent

// Single-direction LSTM. Gate rows are stacked [input; forget; output; cell].
class Lstm {
 public:
  struct Trace {
    std::vector<Vec> in;  // [x_t; h_{t-1}]
    std::vector<Vec> i, f, o, g, c, h;
  };

  Lstm() = default;
  Lstm(int input_dim, int hidden, std::string name);

  int input_dim() const { return input_dim_; }
  int hidden() const { return hidden_; }

  // Runs the sequence in the given order; returns the final hidden state.
  Vec forward(std::span<const Vec> seq, Trace* trace) const;
  // Backpropagates dL/dh_final. Weight gradients are queued and folded into
  // the parameters' grad by flush_grads().
  void backward(const Trace& trace, const Vec& dh_final);
  void flush_grads();

  ParamList params() { return {&w_, &b_}; }
  Parameter& weights() { return w_; }
  Parameter& bias() { return b_; }

 private:
  int input_dim_ = 0;
  int hidden_ = 0;
  Parameter w_, b_;
  std::vector<Vec> pending_dz_, pending_in_;
};

// Bidirectional encoder: concatenation of the forward pass's final state and
// the backward pass's final state (after consuming the first token).
class BiLstm {
 public:
  struct Trace {
    Lstm::Trace fwd, bwd;
  };

  BiLstm() = default;
  BiLstm(int input_dim, int hidden);

  int output_dim() const { return 2 * fwd_.hidden(); }
  int hidden() const { return fwd_.hidden(); }
  int input_dim() const { return fwd_.input_dim(); }

  // Throws ValidationError on an empty sequence.
  Vec encode(std::span<const Vec> seq, Trace* trace = nullptr) const;
  void backward(const Trace& trace, const Vec& d_out);
  void flush_grads();

  ParamList params();
  Lstm& forward_cell() { return fwd_; }
  Lstm& backward_cell() { return bwd_; }

 private:
  Lstm fwd_, bwd_;
};

Vec birnn_encode(std::span<const Vec> seq, const BiLstm& enc);

// ---------------------------------------------------------------- dense

enum class Activation { Identity, Relu };

struct LayerSpec {
  int units;
  Activation act;
};

// Affine layers over column batches (one sample per column).
class DenseStack {
 public:
  struct Cache {
    std::vector<Mat> inputs;  // input to each layer
    std::vector<Mat> pre;     // pre-activation of each layer
  };

  DenseStack() = default;
  DenseStack(int input_dim, std::vector<LayerSpec> layers, const std::string& name);

  int input_dim() const { return input_dim_; }
  int output_dim() const { return layers_.empty() ? input_dim_ : layers_.back().units; }
  std::size_t depth() const { return layers_.size(); }

  Mat forward(const Mat& x, Cache* cache = nullptr) const;
  // Accumulates parameter gradients; returns dL/dx.
  Mat backward(const Cache& cache, const Mat& dy);

  ParamList params();
  Parameter& weight(std::size_t layer) { return weights_[layer]; }
  Parameter& bias(std::size_t layer) { return biases_[layer]; }
  const std::vector<LayerSpec>& layers() const { return layers_; }

 private:
  int input_dim_ = 0;
  std::vector<LayerSpec> layers_;
  std::vector<Parameter> weights_, biases_;
};

Mat dense_forward(const Mat& x, const DenseStack& stack, DenseStack::Cache* cache = nullptr);

// ---------------------------------------------------------------- utilities

Vec softmax(const Vec& z);
// Back through softmax: given y = softmax(z) and dL/dy, returns dL/dz.
Vec softmax_backward(const Vec& y, const Vec& dy);

// p <- p - lr * g. Throws ValidationError on shape mismatch.
void sgd_step(std::span<double> params, std::span<const double> grads, double lr);
void sgd_step(const ParamList& params, double lr);
void zero_grads(const ParamList& params);

// Central finite differences over every scalar of every parameter, compared
// with the analytic gradients produced by `compute_grads` (which must zero,
// then fill, each parameter's grad). Relative error per entry is
// |a - n| / max(|a|, |n|, 1e-6); returns the maximum.
double grad_check(const ParamList& params, const std::function<double()>& loss,
                  const std::function<void()>& compute_grads, double step = 1e-5);

struct TrainConfig {
  double learning_rate = 0.01;
  int batch_size = 64;
  int max_epochs = 1000;
  std::uint64_t seed = 0;

  void validate() const;
};

// ---------------------------------------------------------------- checkpoints

// Metadata plus named tensors. Stored as a text header followed by raw
// little-endian doubles, so save/load reproduces every bit.
struct Checkpoint {
  std::map<std::string, std::string> meta;
  std::vector<std::pair<std::string, Mat>> tensors;

  const Mat& tensor(const std::string& name) const;
  const std::string& get(const std::string& key) const;

  void write(std::ostream& os) const;
  static Checkpoint read(std::istream& is);
  void save(const std::string& path) const;
  static Checkpoint load(const std::string& path);
};

void store_params(Checkpoint& ck, const ParamList& params);
// Copies tensors into params by name; shapes must match.
void restore_params(const Checkpoint& ck, const ParamList& params);

// Value snapshot used for best-checkpoint tracking during training.
std::vector<Mat> snapshot(const ParamList& params);
void restore(const ParamList& params, const std::vector<Mat>& snap);

}  // namespace chromalog
