#pragma once

// Dense kernels with hand-written backward passes, a named parameter store
// and Adam. Kernels are free functions templated on Eigen expressions so they
// accept blocks and maps as readily as owning matrices.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "coffee/errors.hpp"

namespace coffee {

template <typename Scalar>
using MatrixT = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using RowVectorT = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

using Matrix = MatrixT<double>;
using RowVector = RowVectorT<double>;

namespace detail {
inline void require(bool ok, const char* what) {
  if (!ok) throw DimensionError(what);
}
}  // namespace detail

// ---------------------------------------------------------------------------
// linear: y = x W + b

template <typename X, typename W, typename B>
MatrixT<typename X::Scalar> linear_forward(const Eigen::MatrixBase<X>& x,
                                           const Eigen::MatrixBase<W>& w,
                                           const Eigen::MatrixBase<B>& b) {
  detail::require(x.cols() == w.rows(), "linear_forward: x.cols != W.rows");
  detail::require(b.rows() == 1 && b.cols() == w.cols(), "linear_forward: bias shape");
  MatrixT<typename X::Scalar> y = x * w;
  y.rowwise() += b.row(0);
  return y;
}

template <typename Scalar>
struct LinearGrads {
  MatrixT<Scalar> dx;
  MatrixT<Scalar> dw;
  RowVectorT<Scalar> db;
};

template <typename X, typename W, typename U>
LinearGrads<typename X::Scalar> linear_backward(const Eigen::MatrixBase<X>& x,
                                                const Eigen::MatrixBase<W>& w,
                                                const Eigen::MatrixBase<U>& upstream) {
  detail::require(x.cols() == w.rows(), "linear_backward: x.cols != W.rows");
  detail::require(upstream.rows() == x.rows() && upstream.cols() == w.cols(),
                  "linear_backward: upstream shape");
  return {upstream * w.transpose(), x.transpose() * upstream, upstream.colwise().sum()};
}

// ---------------------------------------------------------------------------
// embedding lookup

template <typename T>
MatrixT<typename T::Scalar> embedding_lookup(const Eigen::MatrixBase<T>& table,
                                             std::span<const std::int32_t> ids) {
  MatrixT<typename T::Scalar> out(static_cast<Eigen::Index>(ids.size()), table.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= table.rows())
      throw RangeError("embedding_lookup: id " + std::to_string(ids[i]) + " outside vocabulary of " +
                       std::to_string(table.rows()));
    out.row(static_cast<Eigen::Index>(i)) = table.row(ids[i]);
  }
  return out;
}

// Scatter-add upstream rows into the table gradient; duplicate ids accumulate.
template <typename G, typename U>
void embedding_backward(Eigen::MatrixBase<G>& table_grad, std::span<const std::int32_t> ids,
                        const Eigen::MatrixBase<U>& upstream) {
  detail::require(upstream.rows() == static_cast<Eigen::Index>(ids.size()) &&
                      upstream.cols() == table_grad.cols(),
                  "embedding_backward: upstream shape");
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= table_grad.rows())
      throw RangeError("embedding_backward: id out of range");
    table_grad.row(ids[i]) += upstream.row(static_cast<Eigen::Index>(i));
  }
}

// ---------------------------------------------------------------------------
// single-query scaled dot-product attention

template <typename Scalar>
struct AttentionOutput {
  RowVectorT<Scalar> context;
  RowVectorT<Scalar> weights;
};

template <typename Scalar>
struct AttentionGrads {
  RowVectorT<Scalar> dq;
  MatrixT<Scalar> dk;
  MatrixT<Scalar> dv;
};

template <typename Q, typename K, typename V>
AttentionOutput<typename Q::Scalar> scaled_dot_attention(const Eigen::MatrixBase<Q>& q,
                                                         const Eigen::MatrixBase<K>& k,
                                                         const Eigen::MatrixBase<V>& v) {
  using Scalar = typename Q::Scalar;
  if (k.rows() == 0) throw DataError("scaled_dot_attention: empty sequence");
  detail::require(q.rows() == 1 && q.cols() == k.cols(), "scaled_dot_attention: query/key dim");
  detail::require(v.rows() == k.rows(), "scaled_dot_attention: key/value length");
  const Scalar scale = Scalar(1) / std::sqrt(static_cast<Scalar>(k.cols()));
  RowVectorT<Scalar> scores = (k * q.row(0).transpose()).transpose() * scale;
  const Scalar top = scores.maxCoeff();
  RowVectorT<Scalar> w = (scores.array() - top).exp().matrix();
  w /= w.sum();
  RowVectorT<Scalar> ctx = w * v;
  return {std::move(ctx), std::move(w)};
}

template <typename Q, typename K, typename V, typename W, typename U>
AttentionGrads<typename Q::Scalar> scaled_dot_attention_backward(
    const Eigen::MatrixBase<Q>& q, const Eigen::MatrixBase<K>& k, const Eigen::MatrixBase<V>& v,
    const Eigen::MatrixBase<W>& weights, const Eigen::MatrixBase<U>& dcontext) {
  using Scalar = typename Q::Scalar;
  const Scalar scale = Scalar(1) / std::sqrt(static_cast<Scalar>(k.cols()));
  AttentionGrads<Scalar> g;
  g.dv = weights.transpose() * dcontext;
  RowVectorT<Scalar> dw = (v * dcontext.transpose()).transpose();
  const Scalar mean = dw.dot(weights);
  RowVectorT<Scalar> dscores = (weights.array() * (dw.array() - mean)).matrix() * scale;
  g.dq = dscores * k;
  g.dk = dscores.transpose() * q;
  return g;
}

// ---------------------------------------------------------------------------
// sigmoid + binary cross-entropy in logit form

struct BceResult {
  double p;
  double loss;
  double dlogit;
};

inline double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

inline BceResult sigmoid_bce(double logit, int label) {
  if (label != 0 && label != 1) throw RangeError("sigmoid_bce: label must be 0 or 1");
  const double p = sigmoid(logit);
  const double loss = std::max(logit, 0.0) - logit * label + std::log1p(std::exp(-std::abs(logit)));
  return {p, loss, p - label};
}

// ---------------------------------------------------------------------------
// initialization

inline void init_xavier_uniform(Matrix& w, std::mt19937_64& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(w.rows() + w.cols()));
  std::uniform_real_distribution<double> dist(-a, a);
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = dist(rng);
}

inline void init_normal(Matrix& w, std::mt19937_64& rng, double stddev) {
  std::normal_distribution<double> dist(0.0, stddev);
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = dist(rng);
}

// ---------------------------------------------------------------------------
// parameter store

struct Parameter {
  Matrix value;
  Matrix grad;
  Matrix m;
  Matrix v;
};

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class ParamStore {
 public:
  // Registers a zero-initialized parameter. Re-adding an existing name with
  // the same shape returns the existing entry.
  Parameter& add(const std::string& name, Eigen::Index rows, Eigen::Index cols);

  Parameter& at(const std::string& name);
  const Parameter& at(const std::string& name) const;
  bool contains(const std::string& name) const { return params_.count(name) != 0; }

  std::map<std::string, Parameter>& entries() { return params_; }
  const std::map<std::string, Parameter>& entries() const { return params_; }

  std::int64_t step() const { return step_; }
  std::size_t size() const;

  void zero_grad();
  void zero_values();

  // Writes the COF1 checkpoint: magic, parameter section, then Adam state.
  void save(std::ostream& out) const;
  void save(const std::string& path) const;
  static ParamStore load(std::istream& in);
  static ParamStore load(const std::string& path);

  bool operator==(const ParamStore& other) const;

 private:
  friend void adam_step(ParamStore&, const AdamConfig&);

  std::map<std::string, Parameter> params_;
  std::int64_t step_ = 0;
};

// Bias-corrected Adam over every parameter; zeroes gradients afterwards.
// Throws PoisonedGradientError naming the first non-finite gradient.
void adam_step(ParamStore& store, const AdamConfig& config);

// ---------------------------------------------------------------------------
// COF1 primitives, shared with the enrichment index/codebook files.

namespace cof1 {
inline constexpr char kMagic[4] = {'C', 'O', 'F', '1'};

void write_magic(std::ostream& out);
void read_magic(std::istream& in);
void write_tag(std::ostream& out, const char (&tag)[5]);
void expect_tag(std::istream& in, const char (&tag)[5]);
void write_u32(std::ostream& out, std::uint32_t v);
void write_u64(std::ostream& out, std::uint64_t v);
std::uint32_t read_u32(std::istream& in);
std::uint64_t read_u64(std::istream& in);
void write_matrix(std::ostream& out, const std::string& name, const Matrix& m);
std::pair<std::string, Matrix> read_matrix(std::istream& in);
}  // namespace cof1

// ---------------------------------------------------------------------------
// finite-difference gradient check

struct GradCheckOptions {
  double step = 1e-5;
  int coords_per_param = 16;
  std::uint64_t seed = 0;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_param;
  Eigen::Index worst_index = -1;
  std::size_t coords_checked = 0;

  bool passed(double tolerance) const { return max_rel_error < tolerance; }
};

// `loss` evaluates the objective at the store's current values; when its
// argument is true it must also leave analytic gradients in the store's grad
// buffers. Up to `coords_per_param` coordinates per parameter are sampled.
GradCheckReport grad_check(ParamStore& store, const std::function<double(bool)>& loss,
                           const GradCheckOptions& options = {});

// |a - n| / max(|a| + |n|, 1e-7)
double relative_error(double analytic, double numeric);

}  // namespace coffee
