#pragma once

// One-dimensional Gaussian mixture fitted by expectation-maximization.

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <random>
#include <span>
#include <vector>

#include "povmap/error.hpp"

namespace povmap {

inline constexpr double kGmmVarianceFloor = 1e-4;

struct GmmModel {
  std::vector<double> weights;
  std::vector<double> means;      // increasing
  std::vector<double> variances;  // >= kGmmVarianceFloor
  std::vector<double> log_likelihood;  // total log-likelihood per EM iteration
  std::size_t iterations = 0;

  std::size_t k() const noexcept { return means.size(); }
  bool fitted() const noexcept { return !means.empty(); }

  double log_component(std::size_t j, double x) const {
    const double d = x - means[j];
    return std::log(weights[j]) - 0.5 * std::log(2.0 * std::numbers::pi * variances[j]) -
           0.5 * d * d / variances[j];
  }

  std::vector<double> responsibilities(double x) const {
    require(fitted(), ErrorKind::unfitted_model, "GMM has not been fitted");
    std::vector<double> r(k());
    double mx = -INFINITY;
    for (std::size_t j = 0; j < k(); ++j) mx = std::max(mx, r[j] = log_component(j, x));
    double sum = 0.0;
    for (auto& v : r) sum += v = std::exp(v - mx);
    for (auto& v : r) v /= sum;
    return r;
  }

  /// Component with the largest responsibility (lowest index on ties).
  std::size_t assign(double x) const {
    require(fitted(), ErrorKind::unfitted_model, "GMM has not been fitted");
    std::size_t best = 0;
    double best_v = log_component(0, x);
    for (std::size_t j = 1; j < k(); ++j) {
      const double v = log_component(j, x);
      if (v > best_v) {
        best_v = v;
        best = j;
      }
    }
    return best;
  }
};

namespace detail_gmm {

struct Weighted {
  std::vector<double> x;
  std::vector<double> w;  // multiplicities
  double total = 0.0;
};

inline Weighted collapse(std::span<const double> values) {
  std::map<double, double> counts;
  for (double v : values) {
    require(std::isfinite(v), ErrorKind::numeric, "GMM input contains a non-finite value");
    counts[v] += 1.0;
  }
  Weighted out;
  for (auto [v, c] : counts) {
    out.x.push_back(v);
    out.w.push_back(c);
    out.total += c;
  }
  return out;
}

}  // namespace detail_gmm

/// EM on the empirical multiset (distinct values weighted by frequency).
/// Initialization is k-means++ seeding followed by one hard assignment.
/// Stops when the total log-likelihood improves by less than `tol` or after
/// `max_iters` iterations. Components are returned sorted by mean.
inline GmmModel fit_gmm1d(std::span<const double> values, std::size_t k, std::uint64_t seed,
                          std::size_t max_iters = 500, double tol = 1e-8) {
  require(k >= 1, ErrorKind::invalid_argument, "GMM needs k >= 1");
  const auto data = detail_gmm::collapse(values);
  const std::size_t m = data.x.size();
  require(m >= 1, ErrorKind::insufficient_data, "GMM fit on empty data");
  require(!(k > 1 && m == 1), ErrorKind::degenerate_data,
          "all values are identical; cannot fit " + std::to_string(k) + " components");
  require(m >= k, ErrorKind::insufficient_data,
          "need at least " + std::to_string(k) + " distinct values, found " + std::to_string(m));

  GmmModel g;
  g.weights.assign(k, 1.0 / static_cast<double>(k));
  g.means.assign(k, 0.0);
  g.variances.assign(k, 1.0);

  // k-means++ seeding over distinct values weighted by multiplicity.
  std::mt19937_64 rng(seed);
  {
    std::discrete_distribution<std::size_t> first(data.w.begin(), data.w.end());
    g.means[0] = data.x[first(rng)];
    for (std::size_t j = 1; j < k; ++j) {
      std::vector<double> d2(m);
      for (std::size_t i = 0; i < m; ++i) {
        double best = INFINITY;
        for (std::size_t c = 0; c < j; ++c) best = std::min(best, std::pow(data.x[i] - g.means[c], 2));
        d2[i] = data.w[i] * best;
      }
      std::discrete_distribution<std::size_t> next(d2.begin(), d2.end());
      g.means[j] = data.x[next(rng)];
    }
    // hard assignment to nearest seed for initial weights and variances
    std::vector<double> w(k, 0.0), s(k, 0.0), ss(k, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
      std::size_t c = 0;
      for (std::size_t j = 1; j < k; ++j)
        if (std::abs(data.x[i] - g.means[j]) < std::abs(data.x[i] - g.means[c])) c = j;
      w[c] += data.w[i];
      s[c] += data.w[i] * data.x[i];
      ss[c] += data.w[i] * data.x[i] * data.x[i];
    }
    for (std::size_t j = 0; j < k; ++j) {
      if (w[j] <= 0.0) continue;
      g.weights[j] = w[j] / data.total;
      g.means[j] = s[j] / w[j];
      g.variances[j] = std::max(kGmmVarianceFloor, ss[j] / w[j] - g.means[j] * g.means[j]);
    }
    double norm = 0.0;
    for (auto& v : g.weights) norm += v = std::max(v, 1e-12);
    for (auto& v : g.weights) v /= norm;
  }

  std::vector<double> resp(m * k);
  double prev = -INFINITY;
  for (std::size_t it = 0; it < max_iters; ++it) {
    // E-step; the log-likelihood is that of the current parameters.
    double ll = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      double mx = -INFINITY;
      for (std::size_t j = 0; j < k; ++j)
        mx = std::max(mx, resp[i * k + j] = g.log_component(j, data.x[i]));
      double sum = 0.0;
      for (std::size_t j = 0; j < k; ++j) sum += resp[i * k + j] = std::exp(resp[i * k + j] - mx);
      for (std::size_t j = 0; j < k; ++j) resp[i * k + j] /= sum;
      ll += data.w[i] * (mx + std::log(sum));
    }
    g.log_likelihood.push_back(ll);
    g.iterations = it + 1;
    if (ll - prev < tol) break;
    prev = ll;

    // M-step
    for (std::size_t j = 0; j < k; ++j) {
      double nj = 0.0, s = 0.0;
      for (std::size_t i = 0; i < m; ++i) {
        nj += data.w[i] * resp[i * k + j];
        s += data.w[i] * resp[i * k + j] * data.x[i];
      }
      if (nj <= 1e-300) continue;  // empty component keeps its parameters
      const double mu = s / nj;
      double v = 0.0;
      for (std::size_t i = 0; i < m; ++i) v += data.w[i] * resp[i * k + j] * std::pow(data.x[i] - mu, 2);
      g.weights[j] = nj / data.total;
      g.means[j] = mu;
      g.variances[j] = std::max(kGmmVarianceFloor, v / nj);
    }
    double norm = 0.0;
    for (double w : g.weights) norm += w;
    for (auto& w : g.weights) w /= norm;
  }

  std::vector<std::size_t> order(k);
  for (std::size_t j = 0; j < k; ++j) order[j] = j;
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return g.means[a] < g.means[b]; });
  GmmModel sorted = g;
  for (std::size_t j = 0; j < k; ++j) {
    sorted.weights[j] = g.weights[order[j]];
    sorted.means[j] = g.means[order[j]];
    sorted.variances[j] = g.variances[order[j]];
  }
  return sorted;
}

inline GmmModel fit_gmm1d(const std::vector<double>& values, std::size_t k, std::uint64_t seed,
                          std::size_t max_iters = 500, double tol = 1e-8) {
  return fit_gmm1d(std::span<const double>(values), k, seed, max_iters, tol);
}

}  // namespace povmap
