#pragma once

// Dense linear algebra, deterministic RNG and finite-difference gradient checks
// shared by every training module.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "dcvdn/error.hpp"

namespace dcvdn {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

// ---------------------------------------------------------------------------
// SeededRng

/// xoshiro256** seeded through splitmix64. Identical seed, identical stream.
class SeededRng {
 public:
  explicit SeededRng(std::uint64_t seed = 0) : seed_(seed) {
    std::uint64_t x = seed;
    for (auto& s : state_) s = splitmix64(x);
  }

  std::uint64_t seed() const noexcept { return seed_; }

  std::uint64_t next_u64() noexcept {
    const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() noexcept { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n). Lemire's multiply-shift with rejection.
  std::size_t below(std::size_t n) noexcept {
    if (n <= 1) return 0;
    const auto bound = static_cast<std::uint64_t>(n);
    const std::uint64_t threshold = (0 - bound) % bound;
    for (;;) {
      const std::uint64_t r = next_u64();
      const unsigned __int128 m = static_cast<unsigned __int128>(r) * bound;
      if (static_cast<std::uint64_t>(m) >= threshold) return static_cast<std::size_t>(m >> 64);
    }
  }

  /// Standard normal via Box-Muller; the spare value is cached.
  double normal() noexcept {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * M_PI * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  /// Index drawn proportionally to non-negative weights (need not sum to 1).
  std::size_t categorical(std::span<const double> weights) noexcept {
    double total = 0.0;
    for (double w : weights) total += w;
    double u = uniform() * total;
    for (std::size_t i = 0; i < weights.size(); ++i) {
      u -= weights[i];
      if (u < 0.0) return i;
    }
    return weights.empty() ? 0 : weights.size() - 1;
  }

  template <typename T>
  void shuffle(std::span<T> items) noexcept {
    for (std::size_t i = items.size(); i > 1; --i) std::swap(items[i - 1], items[below(i)]);
  }

  template <typename T>
  void shuffle(std::vector<T>& items) noexcept {
    shuffle(std::span<T>(items));
  }

  /// Independent child generator keyed by a tag; used to fan one seed out to stages.
  SeededRng derive(std::uint64_t tag) const noexcept {
    std::uint64_t x = seed_ ^ (tag * 0x9E3779B97F4A7C15ULL);
    return SeededRng(splitmix64(x));
  }

  SeededRng derive(std::string_view tag) const noexcept { return derive(fnv1a(tag)); }

  static std::uint64_t fnv1a(std::string_view s) noexcept {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
      h ^= c;
      h *= 0x100000001b3ULL;
    }
    return h;
  }

  static std::uint64_t splitmix64(std::uint64_t& x) noexcept {
    std::uint64_t z = (x += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) noexcept { return (x << k) | (x >> (64 - k)); }

  std::uint64_t seed_;
  std::uint64_t state_[4]{};
  double spare_ = 0.0;
  bool has_spare_ = false;
};

// ---------------------------------------------------------------------------
// helpers

inline bool all_finite(const Matrix& a) { return a.allFinite(); }

inline void require_finite(const Matrix& a, const char* what) {
  if (!a.allFinite()) throw Error(ErrorKind::InvalidInput, std::string(what) + ": non-finite entry");
}

inline Matrix random_normal(Eigen::Index rows, Eigen::Index cols, SeededRng& rng, double scale = 1.0) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = scale * rng.normal();
  return m;
}

inline Matrix random_uniform(Eigen::Index rows, Eigen::Index cols, SeededRng& rng, double lo, double hi) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = rng.uniform(lo, hi);
  return m;
}

/// Random matrix with orthonormal columns (QR of a Gaussian matrix).
inline Matrix random_orthogonal(Eigen::Index n, SeededRng& rng) {
  Matrix g = random_normal(n, n, rng);
  Eigen::HouseholderQR<Matrix> qr(g);
  Matrix q = qr.householderQ();
  Matrix r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (Eigen::Index j = 0; j < n; ++j)
    if (r(j, j) < 0) q.col(j) *= -1.0;
  return q;
}

// ---------------------------------------------------------------------------
// eigen / svd

/// Eigenvalues in descending order; eigenvectors in the matching columns.
struct SymEigen {
  Vector values;
  Matrix vectors;
};

/// Deterministic per-column sign: the largest-magnitude entry is positive.
inline void fix_column_signs(Matrix& v, Matrix* paired = nullptr) {
  for (Eigen::Index j = 0; j < v.cols(); ++j) {
    Eigen::Index arg = 0;
    v.col(j).cwiseAbs().maxCoeff(&arg);
    if (v(arg, j) < 0) {
      v.col(j) *= -1.0;
      if (paired) paired->col(j) *= -1.0;
    }
  }
}

inline void require_square(const Matrix& a, const char* what) {
  if (a.rows() != a.cols()) throw Error(ErrorKind::InvalidInput, std::string(what) + ": matrix not square");
}

/// Symmetric eigendecomposition (Eigen's tridiagonal QR solver).
inline SymEigen sym_eigen(const Matrix& a) {
  require_square(a, "sym_eigen");
  require_finite(a, "sym_eigen");
  const Eigen::MatrixXd sym = 0.5 * (a + a.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(sym);
  if (solver.info() != Eigen::Success) throw Error(ErrorKind::InvalidInput, "sym_eigen: no convergence");
  const Eigen::Index n = a.rows();
  SymEigen out{Vector(n), Matrix(n, n)};
  for (Eigen::Index j = 0; j < n; ++j) {
    out.values(j) = solver.eigenvalues()(n - 1 - j);
    out.vectors.col(j) = solver.eigenvectors().col(n - 1 - j);
  }
  fix_column_signs(out.vectors);
  return out;
}

/// Cyclic Jacobi eigendecomposition. Slower than sym_eigen; kept as an
/// independent route for cross-checking.
inline SymEigen jacobi_eigen(const Matrix& a, int max_sweeps = 100, double tol = 1e-15) {
  require_square(a, "jacobi_eigen");
  require_finite(a, "jacobi_eigen");
  const Eigen::Index n = a.rows();
  Matrix m = 0.5 * (a + a.transpose());
  Matrix v = Matrix::Identity(n, n);
  const double scale = std::max(m.norm(), 1e-300);
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    double off = 0.0;
    for (Eigen::Index p = 0; p < n; ++p)
      for (Eigen::Index q = p + 1; q < n; ++q) off += m(p, q) * m(p, q);
    if (std::sqrt(off) <= tol * scale) break;
    for (Eigen::Index p = 0; p < n; ++p) {
      for (Eigen::Index q = p + 1; q < n; ++q) {
        const double apq = m(p, q);
        if (std::abs(apq) < 1e-300) continue;
        const double theta = (m(q, q) - m(p, p)) / (2.0 * apq);
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (Eigen::Index k = 0; k < n; ++k) {
          const double mkp = m(k, p), mkq = m(k, q);
          m(k, p) = c * mkp - s * mkq;
          m(k, q) = s * mkp + c * mkq;
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          const double mpk = m(p, k), mqk = m(q, k);
          m(p, k) = c * mpk - s * mqk;
          m(q, k) = s * mpk + c * mqk;
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          const double vkp = v(k, p), vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto i, auto j) { return m(i, i) > m(j, j); });
  SymEigen out{Vector(n), Matrix(n, n)};
  for (Eigen::Index j = 0; j < n; ++j) {
    out.values(j) = m(order[j], order[j]);
    out.vectors.col(j) = v.col(order[j]);
  }
  fix_column_signs(out.vectors);
  return out;
}

/// Thin SVD: a = U * diag(s) * Vt with s descending, r = min(rows, cols).
struct Svd {
  Matrix U;
  Vector s;
  Matrix Vt;
};

inline Svd svd(const Matrix& a) {
  require_finite(a, "svd");
  Eigen::BDCSVD<Eigen::MatrixXd> solver(Eigen::MatrixXd(a), Eigen::ComputeThinU | Eigen::ComputeThinV);
  Svd out;
  out.U = solver.matrixU();
  out.s = solver.singularValues();
  Matrix v = solver.matrixV();
  fix_column_signs(v, &out.U);
  out.Vt = v.transpose();
  return out;
}

/// One-sided (Hestenes) Jacobi SVD; independent route used by tests.
inline Svd jacobi_svd(const Matrix& a, int max_sweeps = 100) {
  require_finite(a, "jacobi_svd");
  if (a.rows() < a.cols()) {
    Svd t = jacobi_svd(a.transpose(), max_sweeps);
    return Svd{t.Vt.transpose(), t.s, t.U.transpose()};
  }
  const Eigen::Index m = a.rows(), n = a.cols();
  Matrix w = a;
  Matrix v = Matrix::Identity(n, n);
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    bool rotated = false;
    for (Eigen::Index p = 0; p < n; ++p) {
      for (Eigen::Index q = p + 1; q < n; ++q) {
        const double alpha = w.col(p).squaredNorm();
        const double beta = w.col(q).squaredNorm();
        const double gamma = w.col(p).dot(w.col(q));
        if (std::abs(gamma) <= 1e-15 * std::sqrt(alpha * beta) || gamma == 0.0) continue;
        rotated = true;
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = (zeta >= 0 ? 1.0 : -1.0) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        for (Eigen::Index k = 0; k < m; ++k) {
          const double wp = w(k, p), wq = w(k, q);
          w(k, p) = c * wp - s * wq;
          w(k, q) = s * wp + c * wq;
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          const double vp = v(k, p), vq = v(k, q);
          v(k, p) = c * vp - s * vq;
          v(k, q) = s * vp + c * vq;
        }
      }
    }
    if (!rotated) break;
  }
  Vector norms(n);
  for (Eigen::Index j = 0; j < n; ++j) norms(j) = w.col(j).norm();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto i, auto j) { return norms(i) > norms(j); });
  Svd out{Matrix::Zero(m, n), Vector(n), Matrix(n, n)};
  Matrix vs(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const Eigen::Index src = order[j];
    out.s(j) = norms(src);
    vs.col(j) = v.col(src);
    if (norms(src) > 0) out.U.col(j) = w.col(src) / norms(src);
  }
  // Complete U for zero singular values with an orthonormal basis.
  for (Eigen::Index j = 0; j < n; ++j) {
    if (out.s(j) > 0) continue;
    for (Eigen::Index e = 0; e < m; ++e) {
      Vector cand = Vector::Unit(m, e);
      for (Eigen::Index k = 0; k < n; ++k)
        if (k != j) cand -= out.U.col(k).dot(cand) * out.U.col(k);
      if (cand.norm() > 1e-6) {
        out.U.col(j) = cand.normalized();
        break;
      }
    }
  }
  fix_column_signs(vs, &out.U);
  out.Vt = vs.transpose();
  return out;
}

/// (a + ridge*I)^(-1/2) through the symmetric eigendecomposition.
inline Matrix sym_inv_sqrt(const Matrix& a, double ridge) {
  require_square(a, "sym_inv_sqrt");
  const SymEigen eig = sym_eigen(a);
  const Eigen::Index n = a.rows();
  Vector inv_sqrt(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double lam = eig.values(i) + ridge;
    if (!(lam > 0.0))
      throw Error(ErrorKind::SingularCovariance,
                  "eigenvalue " + std::to_string(eig.values(i)) + " + ridge " + std::to_string(ridge) + " <= 0");
    inv_sqrt(i) = 1.0 / std::sqrt(lam);
  }
  Matrix out = eig.vectors * inv_sqrt.asDiagonal() * eig.vectors.transpose();
  return 0.5 * (out + out.transpose());
}

// ---------------------------------------------------------------------------
// gradient checking

/// Scalar objective returning its value and analytic gradient (same shape as params).
using ObjectiveFn = std::function<std::pair<double, Matrix>(const Matrix&)>;

/// Max elementwise relative error between the analytic gradient and central
/// differences; denominator max(|analytic|, |numeric|, floor).
inline double grad_check(const ObjectiveFn& f, const Matrix& params, double eps = 1e-6, double floor = 1e-8) {
  if (!(eps > 0.0 && eps <= 1e-3)) throw Error(ErrorKind::InvalidInput, "grad_check: eps must lie in (0, 1e-3]");
  const Matrix analytic = f(params).second;
  Matrix p = params;
  double worst = 0.0;
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    for (Eigen::Index j = 0; j < p.cols(); ++j) {
      const double orig = p(i, j);
      p(i, j) = orig + eps;
      const double up = f(p).first;
      p(i, j) = orig - eps;
      const double down = f(p).first;
      p(i, j) = orig;
      const double numeric = (up - down) / (2.0 * eps);
      const double a = analytic(i, j);
      const double denom = std::max({std::abs(a), std::abs(numeric), floor});
      worst = std::max(worst, std::abs(a - numeric) / denom);
    }
  }
  return worst;
}

// ---------------------------------------------------------------------------
// small shared math

inline double sigmoid(double x) noexcept {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

/// Numerically stable softmax of a vector.
inline Vector softmax(const Vector& logits) {
  const double mx = logits.maxCoeff();
  Vector e = (logits.array() - mx).exp();
  return e / e.sum();
}

inline double cosine(const Vector& a, const Vector& b) {
  const double na = a.norm(), nb = b.norm();
  if (na == 0.0 || nb == 0.0) return 0.0;
  return a.dot(b) / (na * nb);
}

/// Sample covariance with 1/(M-1) of two row-sample matrices (columns centered here).
inline Matrix cross_covariance(const Matrix& a, const Matrix& b) {
  const Matrix ac = a.rowwise() - a.colwise().mean();
  const Matrix bc = b.rowwise() - b.colwise().mean();
  return ac.transpose() * bc / static_cast<double>(a.rows() - 1);
}

}  // namespace dcvdn
