#include "revgraph/numerics.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace revgraph {

namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMajor>;
using Map = Eigen::Map<RowMajor>;

ConstMap view(const DenseMatrix& m) {
  return ConstMap(m.data(), static_cast<Eigen::Index>(m.rows()),
                  static_cast<Eigen::Index>(m.cols()));
}

Map view(DenseMatrix& m) {
  return Map(m.data(), static_cast<Eigen::Index>(m.rows()), static_cast<Eigen::Index>(m.cols()));
}

std::string shape_str(const DenseMatrix& m) {
  std::ostringstream os;
  os << m.rows() << "x" << m.cols();
  return os.str();
}

}  // namespace

DenseMatrix::DenseMatrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

DenseMatrix::DenseMatrix(std::size_t rows, std::size_t cols, const std::vector<double>& data)
    : rows_(rows), cols_(cols), data_(data.begin(), data.end()) {
  if (data_.size() != rows * cols) {
    throw ShapeError("DenseMatrix: data length does not match rows*cols");
  }
}

DenseMatrix::DenseMatrix(std::initializer_list<std::initializer_list<double>> rows) {
  rows_ = rows.size();
  cols_ = rows_ == 0 ? 0 : rows.begin()->size();
  data_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    if (r.size() != cols_) throw ShapeError("DenseMatrix: ragged initializer");
    data_.insert(data_.end(), r.begin(), r.end());
  }
}

DenseMatrix DenseMatrix::identity(std::size_t n) {
  DenseMatrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

DenseMatrix DenseMatrix::transposed() const {
  DenseMatrix t(cols_, rows_);
  for (std::size_t r = 0; r < rows_; ++r)
    for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
  return t;
}

bool DenseMatrix::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

void DenseMatrix::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: " + shape_str(a) + " * " + shape_str(b));
  }
  DenseMatrix out(a.rows(), b.cols());
  if (out.empty() || a.cols() == 0) return out;
  view(out).noalias() = view(a) * view(b);
  return out;
}

DenseMatrix matmul_tn(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.rows() != b.rows()) {
    throw ShapeError("matmul_tn: " + shape_str(a) + "^T * " + shape_str(b));
  }
  DenseMatrix out(a.cols(), b.cols());
  if (out.empty() || a.rows() == 0) return out;
  view(out).noalias() = view(a).transpose() * view(b);
  return out;
}

DenseMatrix matmul_nt(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.cols() != b.cols()) {
    throw ShapeError("matmul_nt: " + shape_str(a) + " * " + shape_str(b) + "^T");
  }
  DenseMatrix out(a.rows(), b.rows());
  if (out.empty() || a.cols() == 0) return out;
  view(out).noalias() = view(a) * view(b).transpose();
  return out;
}

void softmax_inplace(std::span<double> x) {
  if (x.empty()) return;
  const double mx = *std::max_element(x.begin(), x.end());
  double sum = 0.0;
  for (double& v : x) {
    v = std::exp(v - mx);
    sum += v;
  }
  for (double& v : x) v /= sum;
}

double log_sum_exp(std::span<const double> x) {
  if (x.empty()) return -std::numeric_limits<double>::infinity();
  const double mx = *std::max_element(x.begin(), x.end());
  double sum = 0.0;
  for (double v : x) sum += std::exp(v - mx);
  return mx + std::log(sum);
}

DenseMatrix softmax_rows(const DenseMatrix& x) {
  DenseMatrix out = x;
  for (std::size_t r = 0; r < out.rows(); ++r) softmax_inplace(out.row(r));
  return out;
}

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ShapeError("dot: length mismatch");
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
  return s;
}

double squared_norm(std::span<const double> a) { return dot(a, a); }

double softplus(double x) {
  // log(1 + exp(x)) evaluated on the stable branch.
  return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

void require_shape(const DenseMatrix& m, std::size_t rows, std::size_t cols, const char* what) {
  if (m.rows() != rows || m.cols() != cols) {
    std::ostringstream os;
    os << what << ": expected " << rows << "x" << cols << ", got " << shape_str(m);
    throw ShapeError(os.str());
  }
}

DenseMatrix fan_in_uniform(std::size_t rows, std::size_t cols, std::size_t fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(std::max<std::size_t>(fan_in, 1)));
  std::uniform_real_distribution<double> dist(-bound, bound);
  DenseMatrix m(rows, cols);
  for (double& v : m.values()) v = dist(rng);
  return m;
}

// ---------------------------------------------------------------------------

void MlpParams::validate() const {
  const std::size_t h = w1.rows();
  require_shape(b1, 1, h, "mlp b1");
  if (w2.cols() != h) throw ShapeError("mlp: w2 columns must equal hidden width");
  require_shape(b2, 1, w2.rows(), "mlp b2");
}

double MlpParams::squared_norm() const {
  return revgraph::squared_norm(w1.values()) + revgraph::squared_norm(b1.values()) +
         revgraph::squared_norm(w2.values()) + revgraph::squared_norm(b2.values());
}

MlpParams make_mlp(std::size_t in, std::size_t hidden, std::size_t out, Rng& rng) {
  MlpParams p;
  p.w1 = fan_in_uniform(hidden, in, in, rng);
  p.b1 = fan_in_uniform(1, hidden, in, rng);
  p.w2 = fan_in_uniform(out, hidden, hidden, rng);
  p.b2 = fan_in_uniform(1, out, hidden, rng);
  return p;
}

DenseMatrix mlp_forward(const MlpParams& p, const DenseMatrix& x, MlpCache* cache) {
  p.validate();
  if (x.cols() != p.input_dim()) {
    throw ShapeError("mlp_forward: input width " + std::to_string(x.cols()) + " != " +
                     std::to_string(p.input_dim()));
  }
  DenseMatrix z1 = matmul_nt(x, p.w1);
  view(z1).rowwise() += view(p.b1).row(0);
  DenseMatrix h = z1;
  for (double& v : h.values()) v = std::max(v, 0.0);
  DenseMatrix y = matmul_nt(h, p.w2);
  view(y).rowwise() += view(p.b2).row(0);
  if (cache != nullptr) {
    cache->input = x;
    cache->pre_activation = std::move(z1);
    cache->hidden = std::move(h);
  }
  return y;
}

std::vector<double> mlp_forward(const MlpParams& p, std::span<const double> x, MlpCache* cache) {
  DenseMatrix xm(1, x.size(), std::vector<double>(x.begin(), x.end()));
  DenseMatrix y = mlp_forward(p, xm, cache);
  return {y.values().begin(), y.values().end()};
}

MlpGrads mlp_backward(const MlpParams& p, const MlpCache& cache, const DenseMatrix& grad_y,
                      DenseMatrix* grad_x) {
  p.validate();
  const std::size_t batch = cache.input.rows();
  require_shape(cache.input, batch, p.input_dim(), "mlp_backward cache input");
  require_shape(cache.pre_activation, batch, p.hidden_dim(), "mlp_backward cache pre-activation");
  require_shape(cache.hidden, batch, p.hidden_dim(), "mlp_backward cache hidden");
  require_shape(grad_y, batch, p.output_dim(), "mlp_backward grad_y");

  MlpGrads g;
  g.w2 = matmul_tn(grad_y, cache.hidden);
  g.b2 = DenseMatrix(1, p.output_dim());
  view(g.b2).row(0) = view(grad_y).colwise().sum();

  DenseMatrix grad_h = matmul(grad_y, p.w2);
  for (std::size_t k = 0; k < grad_h.size(); ++k) {
    if (cache.pre_activation.data()[k] <= 0.0) grad_h.data()[k] = 0.0;
  }
  g.w1 = matmul_tn(grad_h, cache.input);
  g.b1 = DenseMatrix(1, p.hidden_dim());
  view(g.b1).row(0) = view(grad_h).colwise().sum();
  if (grad_x != nullptr) *grad_x = matmul(grad_h, p.w1);
  return g;
}

// ---------------------------------------------------------------------------

AdamWState::AdamWState(AdamWConfig cfg, const std::vector<std::size_t>& block_sizes)
    : config(cfg) {
  m.reserve(block_sizes.size());
  v.reserve(block_sizes.size());
  decay.assign(block_sizes.size(), true);
  for (std::size_t n : block_sizes) {
    m.emplace_back(n, 0.0);
    v.emplace_back(n, 0.0);
  }
}

void adamw_step(AdamWState& state, std::span<const std::span<double>> params,
                std::span<const std::span<const double>> grads) {
  if (params.size() != grads.size() || params.size() != state.m.size()) {
    throw ShapeError("adamw_step: parameter/gradient/state block count mismatch");
  }
  for (std::size_t b = 0; b < params.size(); ++b) {
    if (params[b].size() != state.m[b].size()) {
      throw ShapeError("adamw_step: block " + std::to_string(b) + " size mismatch");
    }
    if (!grads[b].empty() && grads[b].size() != params[b].size()) {
      throw ShapeError("adamw_step: gradient block " + std::to_string(b) + " size mismatch");
    }
  }
  const AdamWConfig& c = state.config;
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bias1 = 1.0 - std::pow(c.beta1, t);
  const double bias2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t b = 0; b < params.size(); ++b) {
    if (grads[b].empty()) continue;
    std::span<double> theta = params[b];
    std::span<const double> g = grads[b];
    std::vector<double>& m = state.m[b];
    std::vector<double>& v = state.v[b];
    const double wd = state.decay.empty() || state.decay[b] ? c.weight_decay : 0.0;
    for (std::size_t k = 0; k < theta.size(); ++k) {
      m[k] = c.beta1 * m[k] + (1.0 - c.beta1) * g[k];
      v[k] = c.beta2 * v[k] + (1.0 - c.beta2) * g[k] * g[k];
      const double m_hat = m[k] / bias1;
      const double v_hat = v[k] / bias2;
      theta[k] -= c.lr * (m_hat / (std::sqrt(v_hat) + c.eps) + wd * theta[k]);
    }
  }
}

}  // namespace revgraph
