#include "chromalog/netcore.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <istream>
#include <ostream>

#include "chromalog/error.hpp"
#include "chromalog/random.hpp"
#include "chromalog/textio.hpp"

namespace chromalog {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

void init_uniform(const ParamList& params, std::uint64_t seed) {
  for (Parameter* p : params) {
    Rng rng(derive_seed(seed, fnv1a(p->name)));
    const double bound = 1.0 / std::sqrt(static_cast<double>(std::max(p->fan_in, 1)));
    // Column-major fill order keeps the stream layout independent of Eigen internals.
    for (Eigen::Index c = 0; c < p->value.cols(); ++c) {
      for (Eigen::Index r = 0; r < p->value.rows(); ++r) p->value(r, c) = rng.uniform(-bound, bound);
    }
    p->zero_grad();
  }
}

// ---------------------------------------------------------------- embeddings

Vec HashEmbedding::lookup(std::string_view token) const {
  Rng rng(derive_seed(fnv1a(token), salt_));
  Vec v(dim_);
  for (int i = 0; i < dim_; ++i) v[i] = rng.uniform(-1.0, 1.0);
  const double n = v.norm();
  if (n > 0.0) v /= n;
  return v;
}

TableEmbedding::TableEmbedding(std::unordered_map<std::string, Vec> table, int dim)
    : table_(std::move(table)), dim_(dim), fallback_(dim) {
  if (dim <= 0) throw ValidationError("embedding dimension must be positive");
  for (const auto& [tok, v] : table_) {
    if (v.size() != dim) throw ValidationError("embedding for '" + tok + "' has the wrong dimension");
  }
}

TableEmbedding TableEmbedding::read(std::istream& is) {
  std::unordered_map<std::string, Vec> table;
  int dim = -1;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto f = textio::split_ws(line);
    if (f.empty()) continue;
    const int d = static_cast<int>(f.size()) - 1;
    if (dim < 0) dim = d;
    if (d != dim || d <= 0) throw FormatError("embedding line has " + std::to_string(d) + " values, expected " +
                                              std::to_string(dim), lineno);
    Vec v(dim);
    for (int i = 0; i < dim; ++i) v[i] = textio::parse_double(f[static_cast<std::size_t>(i) + 1], lineno);
    table.insert_or_assign(std::string(f[0]), std::move(v));
  }
  if (dim <= 0) throw FormatError("embedding file is empty");
  return TableEmbedding(std::move(table), dim);
}

TableEmbedding TableEmbedding::load(const std::string& path) {
  auto in = textio::open_in(path);
  return read(in);
}

Vec TableEmbedding::lookup(std::string_view token) const {
  auto it = table_.find(std::string(token));
  return it != table_.end() ? it->second : fallback_.lookup(token);
}

std::vector<Vec> embed_tokens(std::span<const std::string> tokens, const EmbeddingProvider& provider) {
  std::vector<Vec> out;
  if (tokens.empty()) {
    out.push_back(Vec::Zero(provider.dimension()));
    return out;
  }
  out.reserve(tokens.size());
  for (const auto& t : tokens) out.push_back(provider.lookup(t));
  return out;
}

Vec mean_embedding(std::span<const std::string> tokens, const EmbeddingProvider& provider) {
  Vec acc = Vec::Zero(provider.dimension());
  if (tokens.empty()) return acc;
  for (const auto& t : tokens) acc += provider.lookup(t);
  return acc / static_cast<double>(tokens.size());
}

// ---------------------------------------------------------------- recurrent

namespace {

Vec sigmoid(const Vec& z) { return (1.0 / (1.0 + (-z.array()).exp())).matrix(); }

}  // namespace

Lstm::Lstm(int input_dim, int hidden, std::string name)
    : input_dim_(input_dim),
      hidden_(hidden),
      w_(name + ".w", 4 * hidden, input_dim + hidden, input_dim + hidden),
      b_(name + ".b", 4 * hidden, 1, input_dim + hidden) {
  if (input_dim <= 0 || hidden <= 0) throw ValidationError("LSTM dimensions must be positive");
}

Vec Lstm::forward(std::span<const Vec> seq, Trace* trace) const {
  const int H = hidden_;
  Vec h = Vec::Zero(H), c = Vec::Zero(H);
  Vec in(input_dim_ + H);
  for (const Vec& x : seq) {
    if (x.size() != input_dim_) throw ValidationError("LSTM input has the wrong dimension");
    in.head(input_dim_) = x;
    in.tail(H) = h;
    const Vec z = w_.value * in + b_.value.col(0);
    Vec i = sigmoid(z.segment(0, H));
    Vec f = sigmoid(z.segment(H, H));
    Vec o = sigmoid(z.segment(2 * H, H));
    Vec g = z.segment(3 * H, H).array().tanh().matrix();
    c = (f.array() * c.array() + i.array() * g.array()).matrix();
    h = (o.array() * c.array().tanh()).matrix();
    if (trace) {
      trace->in.push_back(in);
      trace->i.push_back(std::move(i));
      trace->f.push_back(std::move(f));
      trace->o.push_back(std::move(o));
      trace->g.push_back(std::move(g));
      trace->c.push_back(c);
      trace->h.push_back(h);
    }
  }
  return h;
}

void Lstm::backward(const Trace& tr, const Vec& dh_final) {
  const int H = hidden_;
  const auto T = tr.h.size();
  Vec dh = dh_final;
  Vec dc = Vec::Zero(H);
  Vec dz(4 * H);
  for (std::size_t s = T; s-- > 0;) {
    const auto& i = tr.i[s].array();
    const auto& f = tr.f[s].array();
    const auto& o = tr.o[s].array();
    const auto& g = tr.g[s].array();
    const Eigen::ArrayXd tc = tr.c[s].array().tanh();
    const Eigen::ArrayXd c_prev = s > 0 ? Eigen::ArrayXd(tr.c[s - 1].array()) : Eigen::ArrayXd(Eigen::ArrayXd::Zero(H));

    const Eigen::ArrayXd d_o = dh.array() * tc;
    dc.array() += dh.array() * o * (1.0 - tc.square());
    dz.segment(0, H) = (dc.array() * g * i * (1.0 - i)).matrix();
    dz.segment(H, H) = (dc.array() * c_prev * f * (1.0 - f)).matrix();
    dz.segment(2 * H, H) = (d_o * o * (1.0 - o)).matrix();
    dz.segment(3 * H, H) = (dc.array() * i * (1.0 - g.square())).matrix();
    dc.array() *= f;
    dh.noalias() = w_.value.rightCols(H).transpose() * dz;
    pending_dz_.push_back(dz);
    pending_in_.push_back(tr.in[s]);
  }
}

void Lstm::flush_grads() {
  if (pending_dz_.empty()) return;
  const auto n = static_cast<Eigen::Index>(pending_dz_.size());
  Mat dz(4 * hidden_, n), in(input_dim_ + hidden_, n);
  for (Eigen::Index k = 0; k < n; ++k) {
    dz.col(k) = pending_dz_[static_cast<std::size_t>(k)];
    in.col(k) = pending_in_[static_cast<std::size_t>(k)];
  }
  w_.grad.noalias() += dz * in.transpose();
  b_.grad.col(0) += dz.rowwise().sum();
  pending_dz_.clear();
  pending_in_.clear();
}

BiLstm::BiLstm(int input_dim, int hidden) : fwd_(input_dim, hidden, "lstm.fwd"), bwd_(input_dim, hidden, "lstm.bwd") {}

Vec BiLstm::encode(std::span<const Vec> seq, Trace* trace) const {
  if (seq.empty()) throw ValidationError("cannot encode an empty sequence");
  std::vector<Vec> rev(seq.rbegin(), seq.rend());
  Vec out(output_dim());
  out.head(hidden()) = fwd_.forward(seq, trace ? &trace->fwd : nullptr);
  out.tail(hidden()) = bwd_.forward(rev, trace ? &trace->bwd : nullptr);
  return out;
}

void BiLstm::backward(const Trace& trace, const Vec& d_out) {
  fwd_.backward(trace.fwd, d_out.head(hidden()));
  bwd_.backward(trace.bwd, d_out.tail(hidden()));
}

void BiLstm::flush_grads() {
  fwd_.flush_grads();
  bwd_.flush_grads();
}

ParamList BiLstm::params() {
  ParamList p = fwd_.params();
  for (auto* q : bwd_.params()) p.push_back(q);
  return p;
}

Vec birnn_encode(std::span<const Vec> seq, const BiLstm& enc) { return enc.encode(seq); }

// ---------------------------------------------------------------- dense

DenseStack::DenseStack(int input_dim, std::vector<LayerSpec> layers, const std::string& name)
    : input_dim_(input_dim), layers_(std::move(layers)) {
  if (input_dim <= 0) throw ValidationError("dense input dimension must be positive");
  int in = input_dim;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const int out = layers_[l].units;
    if (out <= 0) throw ValidationError("dense layer sizes must be positive");
    weights_.emplace_back(name + ".w" + std::to_string(l), out, in, in);
    biases_.emplace_back(name + ".b" + std::to_string(l), out, 1, in);
    in = out;
  }
}

Mat DenseStack::forward(const Mat& x, Cache* cache) const {
  if (x.rows() != input_dim_) {
    throw ValidationError("dense input has " + std::to_string(x.rows()) + " rows, expected " +
                          std::to_string(input_dim_));
  }
  if (cache) {
    cache->inputs.clear();
    cache->pre.clear();
  }
  Mat a = x;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    Mat pre = weights_[l].value * a;
    pre.colwise() += biases_[l].value.col(0);
    if (cache) {
      cache->inputs.push_back(std::move(a));
      cache->pre.push_back(pre);
    }
    a = layers_[l].act == Activation::Relu ? Mat(pre.cwiseMax(0.0)) : std::move(pre);
  }
  return a;
}

Mat DenseStack::backward(const Cache& cache, const Mat& dy) {
  Mat d = dy;
  for (std::size_t l = layers_.size(); l-- > 0;) {
    if (layers_[l].act == Activation::Relu) d = (cache.pre[l].array() > 0.0).select(d, 0.0);
    weights_[l].grad.noalias() += d * cache.inputs[l].transpose();
    biases_[l].grad.col(0) += d.rowwise().sum();
    d = weights_[l].value.transpose() * d;
  }
  return d;
}

ParamList DenseStack::params() {
  ParamList p;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    p.push_back(&weights_[l]);
    p.push_back(&biases_[l]);
  }
  return p;
}

Mat dense_forward(const Mat& x, const DenseStack& stack, DenseStack::Cache* cache) { return stack.forward(x, cache); }

// ---------------------------------------------------------------- utilities

Vec softmax(const Vec& z) {
  const double m = z.maxCoeff();
  Vec e = (z.array() - m).exp().matrix();
  return e / e.sum();
}

Vec softmax_backward(const Vec& y, const Vec& dy) { return (y.array() * (dy.array() - y.dot(dy))).matrix(); }

void sgd_step(std::span<double> params, std::span<const double> grads, double lr) {
  if (params.size() != grads.size()) throw ValidationError("parameter and gradient shapes differ");
  for (std::size_t i = 0; i < params.size(); ++i) params[i] -= lr * grads[i];
}

void sgd_step(const ParamList& params, double lr) {
  for (Parameter* p : params) {
    if (p->value.rows() != p->grad.rows() || p->value.cols() != p->grad.cols()) {
      throw ValidationError("parameter and gradient shapes differ for " + p->name);
    }
    p->value.noalias() -= lr * p->grad;
  }
}

void zero_grads(const ParamList& params) {
  for (Parameter* p : params) p->zero_grad();
}

double grad_check(const ParamList& params, const std::function<double()>& loss,
                  const std::function<void()>& compute_grads, double step) {
  compute_grads();
  std::vector<Mat> analytic;
  analytic.reserve(params.size());
  for (Parameter* p : params) analytic.push_back(p->grad);

  double worst = 0.0;
  for (std::size_t k = 0; k < params.size(); ++k) {
    Mat& v = params[k]->value;
    for (Eigen::Index i = 0; i < v.size(); ++i) {
      const double orig = v.data()[i];
      v.data()[i] = orig + step;
      const double lp = loss();
      v.data()[i] = orig - step;
      const double lm = loss();
      v.data()[i] = orig;
      const double num = (lp - lm) / (2.0 * step);
      const double a = analytic[k].data()[i];
      const double err = std::abs(a - num) / std::max({std::abs(a), std::abs(num), 1e-6});
      worst = std::max(worst, err);
    }
  }
  return worst;
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ValidationError("learning rate must be positive");
  if (batch_size < 1) throw ValidationError("batch size must be >= 1");
  if (max_epochs < 1) throw ValidationError("epochs must be >= 1");
}

// ---------------------------------------------------------------- checkpoints

const Mat& Checkpoint::tensor(const std::string& name) const {
  for (const auto& [n, m] : tensors) {
    if (n == name) return m;
  }
  throw FormatError("checkpoint has no tensor '" + name + "'");
}

const std::string& Checkpoint::get(const std::string& key) const {
  auto it = meta.find(key);
  if (it == meta.end()) throw FormatError("checkpoint is missing '" + key + "'");
  return it->second;
}

void Checkpoint::write(std::ostream& os) const {
  os << "chromalog-ckpt v1\n";
  os << "meta " << meta.size() << '\n';
  for (const auto& [k, v] : meta) {
    if (k.find_first_of("=\n") != std::string::npos || v.find('\n') != std::string::npos) {
      throw ValidationError("checkpoint metadata may not contain newlines or '=' in keys");
    }
    os << k << '=' << v << '\n';
  }
  os << "tensors " << tensors.size() << '\n';
  for (const auto& [name, m] : tensors) {
    os << name << ' ' << m.rows() << ' ' << m.cols() << '\n';
    os.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
    os << '\n';
  }
}

Checkpoint Checkpoint::read(std::istream& is) {
  using namespace textio;
  Checkpoint ck;
  std::string line;
  std::size_t lineno = 1;
  if (!std::getline(is, line) || line != "chromalog-ckpt v1") throw FormatError("not a chromalog checkpoint", 1);
  auto expect_count = [&](const char* what) {
    ++lineno;
    if (!std::getline(is, line)) throw FormatError("truncated checkpoint", lineno);
    const auto f = split_ws(line);
    if (f.size() != 2 || f[0] != what) throw FormatError(std::string("expected '") + what + " <n>'", lineno);
    return parse_int<std::size_t>(f[1], lineno);
  };
  const std::size_t n_meta = expect_count("meta");
  for (std::size_t i = 0; i < n_meta; ++i) {
    ++lineno;
    if (!std::getline(is, line)) throw FormatError("truncated checkpoint metadata", lineno);
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw FormatError("metadata line without '='", lineno);
    ck.meta[line.substr(0, eq)] = line.substr(eq + 1);
  }
  const std::size_t n_tensors = expect_count("tensors");
  for (std::size_t i = 0; i < n_tensors; ++i) {
    ++lineno;
    if (!std::getline(is, line)) throw FormatError("truncated checkpoint tensors", lineno);
    const auto f = split_ws(line);
    if (f.size() != 3) throw FormatError("expected '<name> <rows> <cols>'", lineno);
    const auto rows = parse_int<Eigen::Index>(f[1], lineno);
    const auto cols = parse_int<Eigen::Index>(f[2], lineno);
    Mat m(rows, cols);
    is.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
    if (!is || is.get() != '\n') throw FormatError("truncated tensor data for '" + std::string(f[0]) + "'", lineno);
    ck.tensors.emplace_back(std::string(f[0]), std::move(m));
  }
  return ck;
}

void Checkpoint::save(const std::string& path) const {
  auto out = textio::open_out(path, true);
  write(out);
  if (!out) throw IoError("write failed: " + path);
}

Checkpoint Checkpoint::load(const std::string& path) {
  auto in = textio::open_in(path, true);
  return read(in);
}

void store_params(Checkpoint& ck, const ParamList& params) {
  for (const Parameter* p : params) ck.tensors.emplace_back(p->name, p->value);
}

void restore_params(const Checkpoint& ck, const ParamList& params) {
  for (Parameter* p : params) {
    const Mat& m = ck.tensor(p->name);
    if (m.rows() != p->value.rows() || m.cols() != p->value.cols()) {
      throw FormatError("tensor '" + p->name + "' has shape " + std::to_string(m.rows()) + "x" +
                        std::to_string(m.cols()) + ", model expects " + std::to_string(p->value.rows()) + "x" +
                        std::to_string(p->value.cols()));
    }
    p->value = m;
    p->zero_grad();
  }
}

std::vector<Mat> snapshot(const ParamList& params) {
  std::vector<Mat> out;
  out.reserve(params.size());
  for (const Parameter* p : params) out.push_back(p->value);
  return out;
}

void restore(const ParamList& params, const std::vector<Mat>& snap) {
  for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = snap[i];
}

}  // namespace chromalog
