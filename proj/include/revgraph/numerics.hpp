#pragma once

// Dense kernels shared by every trainable component: a row-major matrix,
// products, a max-shifted softmax, a two-layer ReLU MLP with hand-written
// backprop, and AdamW with decoupled weight decay.

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <new>
#include <vector>

namespace revgraph {

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

using Rng = std::mt19937_64;

// 64-byte aligned storage. Eigen peels a different number of leading
// elements depending on buffer alignment, which changes summation order; a
// fixed alignment keeps results independent of where the heap puts a matrix.
template <class T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlign{64};
  AlignedAllocator() = default;
  template <class U>
  AlignedAllocator(const AlignedAllocator<U>&) {}
  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
  void deallocate(T* p, std::size_t) { ::operator delete(p, kAlign); }
  template <class U>
  bool operator==(const AlignedAllocator<U>&) const { return true; }
};

class DenseMatrix {
 public:
  DenseMatrix() = default;
  DenseMatrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  DenseMatrix(std::size_t rows, std::size_t cols, const std::vector<double>& data);
  DenseMatrix(std::initializer_list<std::initializer_list<double>> rows);

  static DenseMatrix identity(std::size_t n);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }
  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  DenseMatrix transposed() const;
  bool all_finite() const;
  void fill(double v);

  bool operator==(const DenseMatrix& other) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double, AlignedAllocator<double>> data_;
};

// a * b
DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b);
// a^T * b
DenseMatrix matmul_tn(const DenseMatrix& a, const DenseMatrix& b);
// a * b^T
DenseMatrix matmul_nt(const DenseMatrix& a, const DenseMatrix& b);

DenseMatrix softmax_rows(const DenseMatrix& x);
void softmax_inplace(std::span<double> x);
double log_sum_exp(std::span<const double> x);

double dot(std::span<const double> a, std::span<const double> b);
double squared_norm(std::span<const double> a);
// -ln(sigmoid(x)) without overflow.
double softplus(double x);
double sigmoid(double x);

void require_shape(const DenseMatrix& m, std::size_t rows, std::size_t cols,
                   const char* what);

// uniform(-1/sqrt(fan_in), +1/sqrt(fan_in))
DenseMatrix fan_in_uniform(std::size_t rows, std::size_t cols, std::size_t fan_in,
                           Rng& rng);

// ---------------------------------------------------------------------------
// Two-layer perceptron: y = w2 * relu(w1 * x + b1) + b2.
// w1 is hidden x in, w2 is out x hidden. Biases are stored as 1 x n rows.

struct MlpParams {
  DenseMatrix w1, b1, w2, b2;

  std::size_t input_dim() const { return w1.cols(); }
  std::size_t hidden_dim() const { return w1.rows(); }
  std::size_t output_dim() const { return w2.rows(); }

  void validate() const;
  double squared_norm() const;
  std::size_t num_params() const { return w1.size() + b1.size() + w2.size() + b2.size(); }
};

MlpParams make_mlp(std::size_t in, std::size_t hidden, std::size_t out, Rng& rng);

// Rows of the cache are batch samples.
struct MlpCache {
  DenseMatrix input;
  DenseMatrix pre_activation;
  DenseMatrix hidden;
};

struct MlpGrads {
  DenseMatrix w1, b1, w2, b2;
};

// Batched forward: each row of x is one sample.
DenseMatrix mlp_forward(const MlpParams& p, const DenseMatrix& x, MlpCache* cache = nullptr);
std::vector<double> mlp_forward(const MlpParams& p, std::span<const double> x,
                                MlpCache* cache = nullptr);

// Gradients of sum over rows of <grad_y_row, y_row>.
MlpGrads mlp_backward(const MlpParams& p, const MlpCache& cache, const DenseMatrix& grad_y,
                      DenseMatrix* grad_x = nullptr);

// ---------------------------------------------------------------------------

struct AdamWConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-2;
};

// Moments are kept per parameter block, in the order the blocks are passed
// to adamw_step.
struct AdamWState {
  AdamWConfig config;
  std::uint64_t step = 0;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  // Blocks with decay[b] == false skip the weight-decay term.
  std::vector<bool> decay;

  AdamWState() = default;
  AdamWState(AdamWConfig cfg, const std::vector<std::size_t>& block_sizes);
};

// theta <- theta - lr * (m_hat / (sqrt(v_hat) + eps) + weight_decay * theta)
// A block whose gradient span is empty is skipped (frozen).
void adamw_step(AdamWState& state, std::span<const std::span<double>> params,
                std::span<const std::span<const double>> grads);

}  // namespace revgraph
