#pragma once

#include <cstddef>
#include <iosfwd>
#include <string>
#include <vector>

#include "o2o/rng.hpp"

namespace o2o {

// Dense row-major matrix of doubles. Everything in the lab is 64-bit: the
// scale is small and the finite-difference checks need the precision.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double value = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, value) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  double* row(std::size_t r) { return data_.data() + r * cols_; }
  const double* row(std::size_t r) const { return data_.data() + r * cols_; }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

  bool same_shape(const Matrix& o) const {
    return rows_ == o.rows_ && cols_ == o.cols_;
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// Throws NumericError if any entry is non-finite. `what` names the producer.
void ensure_finite(const Matrix& m, const char* what);
void ensure_finite(double v, const char* what);

// c = a * b
Matrix matmul(const Matrix& a, const Matrix& b);
// c = a * b^T
Matrix matmul_nt(const Matrix& a, const Matrix& b);
// c = a^T * b
Matrix matmul_tn(const Matrix& a, const Matrix& b);

Matrix transpose(const Matrix& m);
void add_inplace(Matrix& a, const Matrix& b);
void sub_inplace(Matrix& a, const Matrix& b);
void scale_inplace(Matrix& a, double s);

enum class Activation { kRelu, kTanh };

// Per-parameter gradients mirroring an Mlp, plus the cached global norm.
struct GradBundle {
  std::vector<Matrix> dw;
  std::vector<Matrix> db;

  bool empty() const { return dw.empty(); }
  double global_norm() const;
  void add_scaled(const GradBundle& other, double s);
  void scale(double s);
};

// Activations recorded by a forward pass; consumed by backward. A tape is
// valid only for the net and input batch that produced it.
struct Tape {
  std::vector<Matrix> post;  // post[0] = input, post[l] = activation out of layer l
  std::vector<Matrix> pre;   // pre-activation per layer
  bool empty() const { return post.empty(); }
};

// Fixed-topology fully connected net. Hidden layers use `activation`, the
// output layer is linear. Weights are (out x in) row-major.
class Mlp {
 public:
  Mlp() = default;
  // sizes include input and output widths, e.g. {6, 64, 64, 1}.
  Mlp(std::vector<std::size_t> sizes, Activation activation, Rng& rng);

  const std::vector<std::size_t>& sizes() const { return sizes_; }
  std::size_t input_dim() const { return sizes_.front(); }
  std::size_t output_dim() const { return sizes_.back(); }
  std::size_t num_layers() const { return weights_.size(); }
  Activation activation() const { return activation_; }
  std::size_t param_count() const;

  std::vector<Matrix>& weights() { return weights_; }
  std::vector<Matrix>& biases() { return biases_; }
  const std::vector<Matrix>& weights() const { return weights_; }
  const std::vector<Matrix>& biases() const { return biases_; }

  // input is (batch x input_dim); returns (batch x output_dim).
  Matrix forward(const Matrix& input) const;
  // Same, recording activations into `tape` for a later backward pass.
  Matrix forward(const Matrix& input, Tape& tape) const;

  // upstream is dLoss/dOutput with the output's shape. If `input_grad` is
  // non-null it receives dLoss/dInput (needed for dQ/da paths).
  GradBundle backward(const Tape& tape, const Matrix& upstream,
                      Matrix* input_grad = nullptr) const;

  GradBundle zero_grad() const;

 private:
  std::vector<std::size_t> sizes_;
  std::vector<Matrix> weights_;
  std::vector<Matrix> biases_;
  Activation activation_ = Activation::kRelu;
};

// Adam with bias correction. Moment buffers mirror the parameter shapes.
struct AdamState {
  explicit AdamState(const Mlp& net, double lr);
  AdamState() = default;

  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t step = 0;
  std::vector<Matrix> mw, vw, mb, vb;
};

// Scales the bundle so its global norm is at most `max_norm`. Direction is
// preserved; a bundle already within the bound is returned untouched.
GradBundle clip_global_norm(GradBundle g, double max_norm);

void adam_step(Mlp& net, const GradBundle& grad, AdamState& state);

// Scalar Adam, used for the entropy temperature and the CQL dual variable.
struct ScalarAdam {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t step = 0;
  double m = 0.0;
  double v = 0.0;

  void update(double& param, double grad);
};

// Checkpoint I/O. Little-endian layout: magic "O2ONET\n", format version,
// activation id, layer count, layer sizes, then per layer the raw 64-bit
// weight matrix (row-major) followed by the bias row. See docs/formats.md.
void save_net(const Mlp& net, const std::string& path);
Mlp load_net(const std::string& path);

// Stream variants, used for embedded nets inside trainer checkpoints.
void write_net(std::ostream& out, const Mlp& net);
Mlp read_net(std::istream& in);

}  // namespace o2o
