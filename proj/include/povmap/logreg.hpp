#pragma once

// L1-regularized logistic regression fitted by proximal gradient descent
// with backtracking. Objective:
//   (1/n) sum_i log(1 + exp(-s_i (x_i.w + b)))  +  lambda * |w|_1,  s_i = 2y_i - 1
// The intercept is not penalized.

#include <Eigen/Dense>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>
#include <vector>

#include "povmap/error.hpp"
#include "povmap/features.hpp"

namespace povmap {

using DMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using DVec = Eigen::VectorXd;

struct Standardizer {
  std::vector<double> mean, scale;  // scale is the population std, 1 for constant columns

  static Standardizer fit(const DMat& X) {
    Standardizer s;
    const auto n = static_cast<double>(X.rows());
    for (Eigen::Index j = 0; j < X.cols(); ++j) {
      const double mu = X.col(j).sum() / n;
      const double var = (X.col(j).array() - mu).square().sum() / n;
      s.mean.push_back(mu);
      s.scale.push_back(var > 1e-24 ? std::sqrt(var) : 1.0);
    }
    return s;
  }

  DMat apply(const DMat& X) const {
    require(static_cast<std::size_t>(X.cols()) == mean.size(), ErrorKind::dimension,
            "standardizer width " + std::to_string(mean.size()) + " vs data width " +
                std::to_string(X.cols()));
    DMat out(X.rows(), X.cols());
    for (Eigen::Index j = 0; j < X.cols(); ++j)
      out.col(j) = (X.col(j).array() - mean[j]) / scale[j];
    return out;
  }
};

struct LogRegModel {
  DVec weights;
  double intercept = 0.0;
  double lambda = 0.0;
  std::optional<Standardizer> standardizer;  // applied by predict_proba when present
  std::vector<double> objective;             // per accepted step, starting at the initial point
  std::size_t iterations = 0;
  bool converged = false;
};

struct LogRegOptions {
  std::size_t max_iters = 5000;
  double tol = 1e-10;
  const LogRegModel* warm_start = nullptr;
};

namespace detail_logreg {

inline void check_inputs(const DMat& X, const std::vector<int>& y) {
  require(static_cast<std::size_t>(X.rows()) == y.size(), ErrorKind::dimension,
          "feature rows " + std::to_string(X.rows()) + " vs labels " + std::to_string(y.size()));
  require(X.rows() > 0, ErrorKind::insufficient_data, "logistic regression on no rows");
  for (int v : y) require(v == 0 || v == 1, ErrorKind::invalid_argument, "labels must be 0 or 1");
  require(X.allFinite(), ErrorKind::numeric, "feature matrix has non-finite values");
}

inline double log1pexp(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

inline double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

/// Mean logistic loss for margins z = Xw + b.
inline double loss(const DVec& z, const DVec& yv) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < z.size(); ++i) s += log1pexp(z[i]) - yv[i] * z[i];
  return s / static_cast<double>(z.size());
}

inline double soft(double v, double t) { return v > t ? v - t : (v < -t ? v + t : 0.0); }

}  // namespace detail_logreg

/// Smallest lambda at which all weights are zero: max_j |X_j^T (y - ybar)| / n.
inline double kill_threshold(const DMat& X, const std::vector<int>& y) {
  detail_logreg::check_inputs(X, y);
  DVec yv(X.rows());
  for (Eigen::Index i = 0; i < X.rows(); ++i) yv[i] = y[static_cast<std::size_t>(i)];
  const double ybar = yv.mean();
  const DVec g = X.transpose() * (yv.array() - ybar).matrix();
  return g.cwiseAbs().maxCoeff() / static_cast<double>(X.rows());
}

inline double logreg_objective(const DMat& X, const std::vector<int>& y, const DVec& w, double b,
                               double lambda) {
  DVec yv(X.rows());
  for (Eigen::Index i = 0; i < X.rows(); ++i) yv[i] = y[static_cast<std::size_t>(i)];
  const DVec z = (X * w).array() + b;
  return detail_logreg::loss(z, yv) + lambda * w.cwiseAbs().sum();
}

/// X is used as given; standardize beforehand (see Standardizer).
inline LogRegModel fit_l1_logreg(const DMat& X, const std::vector<int>& y, double lambda,
                                 const LogRegOptions& opt = {}) {
  using namespace detail_logreg;
  check_inputs(X, y);
  require(lambda >= 0.0 && std::isfinite(lambda), ErrorKind::invalid_argument,
          "lambda must be finite and >= 0");
  const Eigen::Index n = X.rows(), d = X.cols();
  const double inv_n = 1.0 / static_cast<double>(n);
  DVec yv(n);
  for (Eigen::Index i = 0; i < n; ++i) yv[i] = y[static_cast<std::size_t>(i)];

  LogRegModel m;
  m.lambda = lambda;
  if (opt.warm_start && opt.warm_start->weights.size() == d) {
    m.weights = opt.warm_start->weights;
    m.intercept = opt.warm_start->intercept;
  } else {
    m.weights = DVec::Zero(d);
    const double p = std::clamp(yv.mean(), 1e-12, 1.0 - 1e-12);
    m.intercept = std::log(p / (1.0 - p));
  }

  // Lipschitz bound of the smooth part: (||X||_F^2 + n) / (4n).
  double step = 4.0 / (X.squaredNorm() * inv_n + 1.0);
  DVec z = (X * m.weights).array() + m.intercept;
  double f = loss(z, yv);
  double F = f + lambda * m.weights.cwiseAbs().sum();
  m.objective.push_back(F);

  DVec r(n), gw(d), w_new(d), z_new(n);
  for (std::size_t it = 0; it < opt.max_iters; ++it) {
    for (Eigen::Index i = 0; i < n; ++i) r[i] = sigmoid(z[i]) - yv[i];
    gw.noalias() = X.transpose() * r;
    gw *= inv_n;
    const double gb = r.sum() * inv_n;

    double f_new = 0.0, b_new = 0.0;
    for (int bt = 0; bt < 60; ++bt) {
      for (Eigen::Index j = 0; j < d; ++j) w_new[j] = soft(m.weights[j] - step * gw[j], step * lambda);
      b_new = m.intercept - step * gb;
      z_new.noalias() = X * w_new;
      z_new.array() += b_new;
      f_new = loss(z_new, yv);
      const DVec dw = w_new - m.weights;
      const double db = b_new - m.intercept;
      const double quad = f + gw.dot(dw) + gb * db + (dw.squaredNorm() + db * db) / (2.0 * step);
      if (f_new <= quad + 1e-15) break;
      step *= 0.5;
    }
    const double F_new = f_new + lambda * w_new.cwiseAbs().sum();
    if (F_new > F) {  // roundoff at the optimum
      m.converged = true;
      break;
    }
    m.weights.swap(w_new);
    m.intercept = b_new;
    z.swap(z_new);
    f = f_new;
    const double improvement = F - F_new;
    F = F_new;
    m.objective.push_back(F);
    m.iterations = it + 1;
    if (improvement < opt.tol) {
      m.converged = true;
      break;
    }
    step *= 1.25;
  }
  require(m.weights.allFinite() && std::isfinite(m.intercept), ErrorKind::numeric,
          "logistic regression produced non-finite weights");
  return m;
}

/// sigma(Xw + b), standardizing X first when the model carries a standardizer.
inline std::vector<double> predict_proba(const LogRegModel& m, const DMat& X) {
  require(X.cols() == m.weights.size(), ErrorKind::dimension,
          "model expects " + std::to_string(m.weights.size()) + " features, got " +
              std::to_string(X.cols()));
  const DVec z = m.standardizer ? DVec((m.standardizer->apply(X) * m.weights).array() + m.intercept)
                                : DVec((X * m.weights).array() + m.intercept);
  std::vector<double> p(static_cast<std::size_t>(z.size()));
  for (Eigen::Index i = 0; i < z.size(); ++i) p[static_cast<std::size_t>(i)] = detail_logreg::sigmoid(z[i]);
  return p;
}

inline DMat to_eigen(const Matrix& m) {
  DMat out(m.rows, m.cols);
  for (std::size_t r = 0; r < m.rows; ++r)
    for (std::size_t c = 0; c < m.cols; ++c) out(r, c) = m(r, c);
  return out;
}

/// Text format: "povmap-logreg 1", then lines "lambda", "intercept",
/// "weights", "mean", "scale" each followed by numbers (%.17g).
inline void save_logreg(const LogRegModel& m, const std::string& path) {
  require(m.standardizer.has_value(), ErrorKind::invalid_argument,
          "only models carrying their standardizer can be saved");
  std::ofstream os(path);
  require(static_cast<bool>(os), ErrorKind::io, "cannot write " + path);
  os << std::setprecision(17) << "povmap-logreg 1\n";
  os << "lambda " << m.lambda << "\nintercept " << m.intercept << "\nweights";
  for (Eigen::Index j = 0; j < m.weights.size(); ++j) os << ' ' << m.weights[j];
  os << "\nmean";
  for (double v : m.standardizer->mean) os << ' ' << v;
  os << "\nscale";
  for (double v : m.standardizer->scale) os << ' ' << v;
  os << '\n';
}

inline LogRegModel load_logreg(const std::string& path) {
  std::ifstream is(path);
  require(static_cast<bool>(is), ErrorKind::missing_input, "missing classifier file: " + path);
  std::string line;
  std::getline(is, line);
  require(line == "povmap-logreg 1", ErrorKind::malformed_input, path + ": not a classifier file");
  auto numbers = [&](const std::string& key) {
    std::getline(is, line);
    std::istringstream ls(line);
    std::string k;
    ls >> k;
    require(k == key, ErrorKind::malformed_input, path + ": expected '" + key + "'");
    std::vector<double> v;
    double x;
    while (ls >> x) v.push_back(x);
    require(ls.eof(), ErrorKind::malformed_input, path + ": bad number after '" + key + "'");
    return v;
  };
  LogRegModel m;
  const auto lam = numbers("lambda"), icpt = numbers("intercept");
  require(lam.size() == 1 && icpt.size() == 1, ErrorKind::malformed_input, path + ": bad header values");
  m.lambda = lam[0];
  m.intercept = icpt[0];
  const auto w = numbers("weights");
  m.weights = Eigen::Map<const DVec>(w.data(), static_cast<Eigen::Index>(w.size()));
  Standardizer st;
  st.mean = numbers("mean");
  st.scale = numbers("scale");
  require(st.mean.size() == w.size() && st.scale.size() == w.size(), ErrorKind::malformed_input,
          path + ": weight and standardizer widths differ");
  m.standardizer = std::move(st);
  return m;
}

}  // namespace povmap
