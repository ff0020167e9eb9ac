#include "o2o/ndmath.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "o2o/errors.hpp"

namespace o2o {

static_assert(std::endian::native == std::endian::little,
              "checkpoint and dataset files assume a little-endian host");

void ensure_finite(const Matrix& m, const char* what) {
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (!std::isfinite(m.data()[i])) {
      throw NumericError(std::string(what) + ": non-finite value at index " +
                         std::to_string(i));
    }
  }
}

void ensure_finite(double v, const char* what) {
  if (!std::isfinite(v)) {
    throw NumericError(std::string(what) + ": non-finite value");
  }
}

static void check_mul(std::size_t inner_a, std::size_t inner_b, const char* op) {
  if (inner_a != inner_b) {
    throw ShapeError(std::string(op) + ": inner dimensions " +
                     std::to_string(inner_a) + " and " + std::to_string(inner_b) +
                     " do not match");
  }
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  check_mul(a.cols(), b.rows(), "matmul");
  Matrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const double* arow = a.row(i);
    double* crow = c.row(i);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = arow[k];
      const double* brow = b.row(k);
      for (std::size_t j = 0; j < b.cols(); ++j) crow[j] += aik * brow[j];
    }
  }
  return c;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  check_mul(a.cols(), b.cols(), "matmul_nt");
  Matrix c(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const double* arow = a.row(i);
    double* crow = c.row(i);
    for (std::size_t j = 0; j < b.rows(); ++j) {
      const double* brow = b.row(j);
      double acc = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) acc += arow[k] * brow[k];
      crow[j] = acc;
    }
  }
  return c;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  check_mul(a.rows(), b.rows(), "matmul_tn");
  Matrix c(a.cols(), b.cols());
  for (std::size_t k = 0; k < a.rows(); ++k) {
    const double* arow = a.row(k);
    const double* brow = b.row(k);
    for (std::size_t i = 0; i < a.cols(); ++i) {
      const double aki = arow[i];
      double* crow = c.row(i);
      for (std::size_t j = 0; j < b.cols(); ++j) crow[j] += aki * brow[j];
    }
  }
  return c;
}

Matrix transpose(const Matrix& m) {
  Matrix t(m.cols(), m.rows());
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) t(j, i) = m(i, j);
  return t;
}

void add_inplace(Matrix& a, const Matrix& b) {
  if (!a.same_shape(b)) throw ShapeError("add_inplace: shape mismatch");
  for (std::size_t i = 0; i < a.size(); ++i) a.data()[i] += b.data()[i];
}

void sub_inplace(Matrix& a, const Matrix& b) {
  if (!a.same_shape(b)) throw ShapeError("sub_inplace: shape mismatch");
  for (std::size_t i = 0; i < a.size(); ++i) a.data()[i] -= b.data()[i];
}

void scale_inplace(Matrix& a, double s) {
  for (std::size_t i = 0; i < a.size(); ++i) a.data()[i] *= s;
}

double GradBundle::global_norm() const {
  double sq = 0.0;
  for (const auto& m : dw)
    for (std::size_t i = 0; i < m.size(); ++i) sq += m.data()[i] * m.data()[i];
  for (const auto& m : db)
    for (std::size_t i = 0; i < m.size(); ++i) sq += m.data()[i] * m.data()[i];
  return std::sqrt(sq);
}

void GradBundle::add_scaled(const GradBundle& other, double s) {
  if (dw.size() != other.dw.size()) throw ShapeError("GradBundle: layer count mismatch");
  for (std::size_t l = 0; l < dw.size(); ++l) {
    if (!dw[l].same_shape(other.dw[l]) || !db[l].same_shape(other.db[l]))
      throw ShapeError("GradBundle: shape mismatch");
    for (std::size_t i = 0; i < dw[l].size(); ++i)
      dw[l].data()[i] += s * other.dw[l].data()[i];
    for (std::size_t i = 0; i < db[l].size(); ++i)
      db[l].data()[i] += s * other.db[l].data()[i];
  }
}

void GradBundle::scale(double s) {
  for (auto& m : dw) scale_inplace(m, s);
  for (auto& m : db) scale_inplace(m, s);
}

Mlp::Mlp(std::vector<std::size_t> sizes, Activation activation, Rng& rng)
    : sizes_(std::move(sizes)), activation_(activation) {
  if (sizes_.size() < 2) throw ShapeError("Mlp: need at least input and output widths");
  for (std::size_t s : sizes_)
    if (s == 0) throw ShapeError("Mlp: zero-width layer");
  for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
    std::size_t in = sizes_[l], out = sizes_[l + 1];
    Matrix w(out, in), b(1, out);
    // Uniform fan-in init, like torch's Linear default.
    double bound = 1.0 / std::sqrt(static_cast<double>(in));
    for (std::size_t i = 0; i < w.size(); ++i) w.data()[i] = rng.uniform(-bound, bound);
    for (std::size_t i = 0; i < b.size(); ++i) b.data()[i] = rng.uniform(-bound, bound);
    weights_.push_back(std::move(w));
    biases_.push_back(std::move(b));
  }
}

std::size_t Mlp::param_count() const {
  std::size_t n = 0;
  for (std::size_t l = 0; l < weights_.size(); ++l)
    n += weights_[l].size() + biases_[l].size();
  return n;
}

static double activate(double x, Activation a) {
  return a == Activation::kRelu ? (x > 0.0 ? x : 0.0) : std::tanh(x);
}

static double activate_grad(double pre, Activation a) {
  if (a == Activation::kRelu) return pre > 0.0 ? 1.0 : 0.0;
  double t = std::tanh(pre);
  return 1.0 - t * t;
}

Matrix Mlp::forward(const Matrix& input) const {
  Tape scratch;
  return forward(input, scratch);
}

Matrix Mlp::forward(const Matrix& input, Tape& tape) const {
  if (input.cols() != input_dim()) {
    throw ShapeError("Mlp::forward: input has " + std::to_string(input.cols()) +
                     " columns, net expects " + std::to_string(input_dim()));
  }
  tape.post.clear();
  tape.pre.clear();
  tape.post.push_back(input);
  Matrix h = input;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    Matrix z = matmul_nt(h, weights_[l]);
    for (std::size_t r = 0; r < z.rows(); ++r)
      for (std::size_t c = 0; c < z.cols(); ++c) z(r, c) += biases_[l](0, c);
    tape.pre.push_back(z);
    if (l + 1 < weights_.size()) {
      for (std::size_t i = 0; i < z.size(); ++i)
        z.data()[i] = activate(z.data()[i], activation_);
    }
    ensure_finite(z, "Mlp::forward");
    tape.post.push_back(z);
    h = std::move(z);
  }
  return h;
}

GradBundle Mlp::backward(const Tape& tape, const Matrix& upstream,
                         Matrix* input_grad) const {
  if (tape.empty()) {
    throw StateError("Mlp::backward: no recorded forward pass (empty tape)");
  }
  if (tape.post.size() != weights_.size() + 1 || tape.pre.size() != weights_.size()) {
    throw StateError("Mlp::backward: tape does not match this net's topology");
  }
  if (upstream.rows() != tape.post.back().rows() || upstream.cols() != output_dim()) {
    throw ShapeError("Mlp::backward: upstream gradient shape mismatch");
  }

  GradBundle g = zero_grad();
  Matrix delta = upstream;
  for (std::size_t l = weights_.size(); l-- > 0;) {
    if (l + 1 < weights_.size()) {
      const Matrix& pre = tape.pre[l];
      for (std::size_t i = 0; i < delta.size(); ++i)
        delta.data()[i] *= activate_grad(pre.data()[i], activation_);
    }
    // dW = delta^T * h_in ; db = column sums of delta
    g.dw[l] = matmul_tn(delta, tape.post[l]);
    for (std::size_t r = 0; r < delta.rows(); ++r)
      for (std::size_t c = 0; c < delta.cols(); ++c) g.db[l](0, c) += delta(r, c);
    if (l > 0 || input_grad) {
      delta = matmul(delta, weights_[l]);
    }
    ensure_finite(g.dw[l], "Mlp::backward");
  }
  if (input_grad) *input_grad = std::move(delta);
  return g;
}

GradBundle Mlp::zero_grad() const {
  GradBundle g;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    g.dw.emplace_back(weights_[l].rows(), weights_[l].cols());
    g.db.emplace_back(1, biases_[l].cols());
  }
  return g;
}

AdamState::AdamState(const Mlp& net, double lr_) : lr(lr_) {
  for (std::size_t l = 0; l < net.weights().size(); ++l) {
    mw.emplace_back(net.weights()[l].rows(), net.weights()[l].cols());
    vw.emplace_back(net.weights()[l].rows(), net.weights()[l].cols());
    mb.emplace_back(1, net.biases()[l].cols());
    vb.emplace_back(1, net.biases()[l].cols());
  }
}

GradBundle clip_global_norm(GradBundle g, double max_norm) {
  if (max_norm <= 0.0) throw ConfigError("clip_global_norm: max_norm must be > 0");
  double norm = g.global_norm();
  if (!std::isfinite(norm)) {
    throw NumericError("clip_global_norm: non-finite gradient norm, aborting training");
  }
  if (norm > max_norm) g.scale(max_norm / norm);
  return g;
}

static void adam_update_block(Matrix& param, const Matrix& grad, Matrix& m,
                              Matrix& v, const AdamState& st, double bc1,
                              double bc2) {
  for (std::size_t i = 0; i < param.size(); ++i) {
    double gi = grad.data()[i];
    double& mi = m.data()[i];
    double& vi = v.data()[i];
    mi = st.beta1 * mi + (1.0 - st.beta1) * gi;
    vi = st.beta2 * vi + (1.0 - st.beta2) * gi * gi;
    double mhat = mi / bc1;
    double vhat = vi / bc2;
    param.data()[i] -= st.lr * mhat / (std::sqrt(vhat) + st.eps);
  }
}

void adam_step(Mlp& net, const GradBundle& grad, AdamState& state) {
  if (grad.dw.size() != net.weights().size())
    throw ShapeError("adam_step: gradient does not match net");
  state.step += 1;
  double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t l = 0; l < net.weights().size(); ++l) {
    adam_update_block(net.weights()[l], grad.dw[l], state.mw[l], state.vw[l],
                      state, bc1, bc2);
    adam_update_block(net.biases()[l], grad.db[l], state.mb[l], state.vb[l],
                      state, bc1, bc2);
    ensure_finite(net.weights()[l], "adam_step");
  }
}

void ScalarAdam::update(double& param, double grad) {
  step += 1;
  m = beta1 * m + (1.0 - beta1) * grad;
  v = beta2 * v + (1.0 - beta2) * grad * grad;
  double mhat = m / (1.0 - std::pow(beta1, static_cast<double>(step)));
  double vhat = v / (1.0 - std::pow(beta2, static_cast<double>(step)));
  param -= lr * mhat / (std::sqrt(vhat) + eps);
  ensure_finite(param, "ScalarAdam::update");
}

static constexpr char kNetMagic[8] = {'O', '2', 'O', 'N', 'E', 'T', '\n', '\0'};
static constexpr std::uint32_t kNetVersion = 1;

template <typename T>
static void write_pod(std::ostream& f, const T& v) {
  f.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
static void read_pod(std::istream& f, T& v) {
  f.read(reinterpret_cast<char*>(&v), sizeof(T));
}

void write_net(std::ostream& f, const Mlp& net) {
  f.write(kNetMagic, sizeof(kNetMagic));
  write_pod(f, kNetVersion);
  std::uint32_t act = net.activation() == Activation::kRelu ? 0 : 1;
  write_pod(f, act);
  std::uint32_t nsizes = static_cast<std::uint32_t>(net.sizes().size());
  write_pod(f, nsizes);
  for (std::size_t s : net.sizes()) {
    std::uint32_t s32 = static_cast<std::uint32_t>(s);
    write_pod(f, s32);
  }
  for (std::size_t l = 0; l < net.weights().size(); ++l) {
    const Matrix& w = net.weights()[l];
    const Matrix& b = net.biases()[l];
    f.write(reinterpret_cast<const char*>(w.data()),
            static_cast<std::streamsize>(w.size() * sizeof(double)));
    f.write(reinterpret_cast<const char*>(b.data()),
            static_cast<std::streamsize>(b.size() * sizeof(double)));
  }
}

Mlp read_net(std::istream& f) {
  char magic[8];
  f.read(magic, sizeof(magic));
  if (!f || std::memcmp(magic, kNetMagic, sizeof(magic)) != 0)
    throw IoError("read_net: stream is not a net checkpoint");
  std::uint32_t version = 0, act = 0, nsizes = 0;
  read_pod(f, version);
  if (version != kNetVersion)
    throw IoError("read_net: unsupported version " + std::to_string(version));
  read_pod(f, act);
  read_pod(f, nsizes);
  if (nsizes < 2 || nsizes > 64) throw IoError("read_net: corrupt layer count");
  std::vector<std::size_t> sizes(nsizes);
  for (auto& s : sizes) {
    std::uint32_t s32 = 0;
    read_pod(f, s32);
    s = s32;
  }
  Rng dummy(0);
  Mlp net(sizes, act == 0 ? Activation::kRelu : Activation::kTanh, dummy);
  for (std::size_t l = 0; l < net.weights().size(); ++l) {
    Matrix& w = net.weights()[l];
    Matrix& b = net.biases()[l];
    f.read(reinterpret_cast<char*>(w.data()),
           static_cast<std::streamsize>(w.size() * sizeof(double)));
    f.read(reinterpret_cast<char*>(b.data()),
           static_cast<std::streamsize>(b.size() * sizeof(double)));
  }
  if (!f) throw IoError("read_net: truncated stream");
  return net;
}

void save_net(const Mlp& net, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("save_net: cannot open " + path);
  write_net(f, net);
  if (!f) throw IoError("save_net: write failed for " + path);
}

Mlp load_net(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("load_net: cannot open " + path);
  return read_net(f);
}

}  // namespace o2o
