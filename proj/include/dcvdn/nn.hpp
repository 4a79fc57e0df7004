#pragma once

// Dense layers, multilayer perceptrons and the Adam optimizer. Activations are
// row-sample matrices (batch x features) throughout.

#include <cmath>
#include <string>
#include <vector>

#include "dcvdn/binio.hpp"
#include "dcvdn/error.hpp"
#include "dcvdn/numkit.hpp"

namespace dcvdn::nn {

enum class Activation : std::uint32_t { identity = 0, tanh = 1 };

inline Matrix activate(const Matrix& z, Activation a) {
  if (a == Activation::tanh) return z.array().tanh().matrix();
  return z;
}

struct Dense {
  Matrix weight;  // in x out
  Matrix bias;    // 1 x out
  Activation act = Activation::identity;

  Eigen::Index in_dim() const noexcept { return weight.rows(); }
  Eigen::Index out_dim() const noexcept { return weight.cols(); }

  /// Glorot-uniform weights, zero bias.
  static Dense init(Eigen::Index in, Eigen::Index out, Activation act, SeededRng& rng) {
    const double r = std::sqrt(6.0 / static_cast<double>(in + out));
    return Dense{random_uniform(in, out, rng, -r, r), Matrix::Zero(1, out), act};
  }

  Matrix forward(const Matrix& x) const {
    Matrix z = x * weight;
    z.rowwise() += bias.row(0);
    return activate(z, act);
  }
};

/// Chain of dense layers; caches per-layer outputs for backprop.
struct Mlp {
  std::vector<Dense> layers;

  /// sizes = {in, h1, ..., out}; hidden layers use tanh, the output layer `out_act`.
  static Mlp init(const std::vector<Eigen::Index>& sizes, Activation out_act, SeededRng& rng) {
    if (sizes.size() < 2) throw Error(ErrorKind::InvalidInput, "Mlp needs at least input and output sizes");
    Mlp m;
    for (std::size_t i = 0; i + 1 < sizes.size(); ++i) {
      const auto act = i + 2 == sizes.size() ? out_act : Activation::tanh;
      m.layers.push_back(Dense::init(sizes[i], sizes[i + 1], act, rng));
    }
    return m;
  }

  Eigen::Index in_dim() const { return layers.front().in_dim(); }
  Eigen::Index out_dim() const { return layers.back().out_dim(); }

  Matrix forward(const Matrix& x) const {
    Matrix h = x;
    for (const auto& l : layers) h = l.forward(h);
    return h;
  }

  struct Cache {
    std::vector<Matrix> outputs;  // outputs[0] = input, outputs[i+1] = layer i output
  };

  Matrix forward(const Matrix& x, Cache& cache) const {
    cache.outputs.clear();
    cache.outputs.push_back(x);
    for (const auto& l : layers) cache.outputs.push_back(l.forward(cache.outputs.back()));
    return cache.outputs.back();
  }

  /// Accumulates parameter gradients into `grads` (2 per layer: weight, bias)
  /// and returns the gradient with respect to the input (empty when not requested).
  Matrix backward(const Cache& cache, const Matrix& d_out, std::vector<Matrix>& grads,
                  bool want_input_grad = true) const {
    if (grads.size() != 2 * layers.size()) {
      grads.clear();
      for (const auto& l : layers) {
        grads.push_back(Matrix::Zero(l.weight.rows(), l.weight.cols()));
        grads.push_back(Matrix::Zero(1, l.bias.cols()));
      }
    }
    Matrix d = d_out;
    for (std::size_t i = layers.size(); i-- > 0;) {
      const auto& l = layers[i];
      const Matrix& out = cache.outputs[i + 1];
      if (l.act == Activation::tanh) d = d.cwiseProduct((1.0 - out.array().square()).matrix());
      grads[2 * i] += cache.outputs[i].transpose() * d;
      grads[2 * i + 1] += d.colwise().sum();
      if (i == 0 && !want_input_grad) return {};
      d = d * l.weight.transpose();
    }
    return d;
  }

  std::vector<Matrix*> params() {
    std::vector<Matrix*> out;
    for (auto& l : layers) {
      out.push_back(&l.weight);
      out.push_back(&l.bias);
    }
    return out;
  }

  void write(binio::Writer& w) const {
    w.u64(layers.size());
    for (const auto& l : layers) {
      w.u32(static_cast<std::uint32_t>(l.act));
      w.matrix(l.weight);
      w.matrix(l.bias);
    }
  }

  static Mlp read(binio::Reader& r) {
    Mlp m;
    const auto n = r.u64();
    for (std::uint64_t i = 0; i < n; ++i) {
      Dense d;
      d.act = static_cast<Activation>(r.u32());
      d.weight = r.matrix();
      d.bias = r.matrix();
      m.layers.push_back(std::move(d));
    }
    return m;
  }
};

/// Per-column standardization fitted on training rows.
struct Standardizer {
  Matrix mean;  // 1 x d
  Matrix inv_std;

  static Standardizer fit(const Matrix& x) {
    Standardizer s;
    s.mean = x.colwise().mean();
    const Matrix c = x.rowwise() - s.mean.row(0);
    s.inv_std = Matrix(1, x.cols());
    const double denom = static_cast<double>(std::max<Eigen::Index>(1, x.rows() - 1));
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      const double sd = std::sqrt(c.col(j).squaredNorm() / denom);
      s.inv_std(0, j) = sd > 1e-12 ? 1.0 / sd : 1.0;
    }
    return s;
  }

  static Standardizer identity(Eigen::Index d) { return {Matrix::Zero(1, d), Matrix::Ones(1, d)}; }

  Matrix apply(const Matrix& x) const {
    Matrix out = x.rowwise() - mean.row(0);
    return out.array().rowwise() * inv_std.row(0).array();
  }
};

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

  void step(const std::vector<Matrix*>& params, const std::vector<Matrix>& grads) {
    if (m_.empty()) {
      for (auto* p : params) {
        m_.push_back(Matrix::Zero(p->rows(), p->cols()));
        v_.push_back(Matrix::Zero(p->rows(), p->cols()));
      }
    }
    ++t_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
      m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * grads[i];
      v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * grads[i].cwiseProduct(grads[i]);
      params[i]->array() -= cfg_.lr * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + cfg_.eps);
    }
  }

 private:
  AdamConfig cfg_;
  std::vector<Matrix> m_, v_;
  std::size_t t_ = 0;
};

/// Checks every parameter block of a model with central differences.
/// `eval` must return the loss and the gradients in `params` order.
template <typename Eval>
double grad_check_blocks(const std::vector<Matrix*>& params, Eval&& eval, double eps = 1e-6,
                         std::vector<double>* per_block = nullptr) {
  double worst = 0.0;
  for (std::size_t b = 0; b < params.size(); ++b) {
    Matrix* block = params[b];
    const Matrix saved = *block;
    ObjectiveFn f = [&](const Matrix& p) {
      *block = p;
      auto [loss, grads] = eval();
      return std::make_pair(loss, grads[b]);
    };
    const double err = grad_check(f, saved, eps);
    *block = saved;
    if (per_block) per_block->push_back(err);
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace dcvdn::nn
