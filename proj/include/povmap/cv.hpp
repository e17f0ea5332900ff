#pragma once

// Nested stratified cross-validation for the L1 logistic model: the inner
// loop tunes lambda on a coarse then a fine linear grid, the outer loop
// scores the tuned model once per held-out fold.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "povmap/logreg.hpp"
#include "povmap/metrics.hpp"
#include "povmap/parallel.hpp"
#include "povmap/seed.hpp"

namespace povmap {

struct CvOptions {
  std::size_t k_outer = 10;
  std::size_t coarse_points = 20;
  std::size_t fine_points = 20;
  std::uint64_t seed = 1;
  std::size_t threads = 1;
  LogRegOptions fit{2000, 1e-9, nullptr};
};

struct FoldResult {
  std::size_t fold = 0;
  double lambda = 0.0;
  double lambda_max = 0.0;
  Metrics metrics;
  std::vector<std::size_t> test_rows;
  std::vector<std::size_t> tuning_rows;  // every row read while tuning and standardizing
};

struct CvReport {
  std::vector<FoldResult> folds;
  Metrics mean;                  // arithmetic mean over folds (AUC over folds where defined)
  std::vector<double> oof_proba;  // out-of-fold probability for every row
  std::vector<int> oof_pred;

  /// Rows both held out and read during tuning (should be empty).
  std::vector<std::size_t> leakage() const {
    std::vector<std::size_t> out;
    for (const auto& f : folds) {
      std::vector<std::size_t> a = f.test_rows, b = f.tuning_rows, both;
      std::sort(a.begin(), a.end());
      std::sort(b.begin(), b.end());
      std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(both));
      out.insert(out.end(), both.begin(), both.end());
    }
    return out;
  }
};

/// Fold index per row. Each class is shuffled and dealt round-robin, so every
/// fold holds floor or ceil of class_count / k rows of each class.
inline std::vector<std::size_t> stratified_folds(const std::vector<int>& y, std::size_t k,
                                                 std::uint64_t seed) {
  require(k >= 2, ErrorKind::invalid_argument, "need at least 2 folds");
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < y.size(); ++i) by_class[y[i]].push_back(i);
  require(by_class.size() >= 2, ErrorKind::fold, "only one class present");
  std::vector<std::size_t> fold(y.size());
  std::mt19937_64 rng(derive_seed(seed, "cv/folds"));
  std::size_t offset = 0;
  for (auto& [label, rows] : by_class) {
    require(rows.size() >= k, ErrorKind::fold,
            "class " + std::to_string(label) + " has " + std::to_string(rows.size()) +
                " rows, fewer than " + std::to_string(k) + " folds");
    std::shuffle(rows.begin(), rows.end(), rng);
    for (std::size_t i = 0; i < rows.size(); ++i) fold[rows[i]] = (offset + i) % k;
    offset += rows.size();
  }
  return fold;
}

namespace detail_cv {

/// Row gather that records every row it touches.
struct AuditedSource {
  const DMat& X;
  const std::vector<int>& y;
  std::set<std::size_t>* audit;

  DMat rows(const std::vector<std::size_t>& idx) const {
    DMat out(static_cast<Eigen::Index>(idx.size()), X.cols());
    for (std::size_t r = 0; r < idx.size(); ++r) {
      if (audit) audit->insert(idx[r]);
      out.row(static_cast<Eigen::Index>(r)) = X.row(static_cast<Eigen::Index>(idx[r]));
    }
    return out;
  }
  std::vector<int> labels(const std::vector<std::size_t>& idx) const {
    std::vector<int> out;
    for (std::size_t i : idx) {
      if (audit) audit->insert(i);
      out.push_back(y[i]);
    }
    return out;
  }
};

inline std::vector<double> linspace(double a, double b, std::size_t n) {
  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i)
    v[i] = n == 1 ? a : a + (b - a) * static_cast<double>(i) / static_cast<double>(n - 1);
  return v;
}

/// Correct inner-validation predictions for each lambda, pooled over the
/// inner folds. Lambdas are fitted from largest to smallest with warm starts.
inline std::vector<std::size_t> inner_hits(const AuditedSource& src,
                                           const std::vector<std::vector<std::size_t>>& inner_folds,
                                           const std::vector<double>& lambdas,
                                           const LogRegOptions& fit) {
  std::vector<std::size_t> order(lambdas.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return lambdas[a] > lambdas[b]; });
  std::vector<std::size_t> hits(lambdas.size(), 0);
  for (std::size_t v = 0; v < inner_folds.size(); ++v) {
    std::vector<std::size_t> tr;
    for (std::size_t u = 0; u < inner_folds.size(); ++u)
      if (u != v) tr.insert(tr.end(), inner_folds[u].begin(), inner_folds[u].end());
    const DMat Xtr_raw = src.rows(tr);
    const auto st = Standardizer::fit(Xtr_raw);
    const DMat Xtr = st.apply(Xtr_raw);
    const auto ytr = src.labels(tr);
    const DMat Xva = st.apply(src.rows(inner_folds[v]));
    const auto yva = src.labels(inner_folds[v]);
    LogRegModel prev;
    bool have_prev = false;
    for (std::size_t li : order) {
      LogRegOptions o = fit;
      o.warm_start = have_prev ? &prev : nullptr;
      LogRegModel m = fit_l1_logreg(Xtr, ytr, lambdas[li], o);
      const auto p = predict_proba(m, Xva);
      for (std::size_t r = 0; r < p.size(); ++r) hits[li] += (p[r] >= 0.5 ? 1 : 0) == yva[r];
      prev = std::move(m);
      have_prev = true;
    }
  }
  return hits;
}

/// Best lambda; ties go to the larger lambda.
inline double pick(const std::vector<double>& lambdas, const std::vector<std::size_t>& hits) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < lambdas.size(); ++i)
    if (hits[i] > hits[best] || (hits[i] == hits[best] && lambdas[i] > lambdas[best])) best = i;
  return lambdas[best];
}

}  // namespace detail_cv

/// Outer folds are stratified; the inner folds of each outer split are the
/// remaining k_outer - 1 outer folds. Standardization is fitted on training
/// rows only, at both levels.
inline CvReport nested_cv(const DMat& X, const std::vector<int>& y, const CvOptions& opt = {}) {
  detail_logreg::check_inputs(X, y);
  const std::size_t K = opt.k_outer;
  const auto fold_of = stratified_folds(y, K, opt.seed);
  std::vector<std::vector<std::size_t>> folds(K);
  for (std::size_t i = 0; i < y.size(); ++i) folds[fold_of[i]].push_back(i);

  CvReport rep;
  rep.folds.resize(K);
  rep.oof_proba.assign(y.size(), 0.0);
  rep.oof_pred.assign(y.size(), 0);
  parallel_for(K, opt.threads, [&](std::size_t k) {
    FoldResult& fr = rep.folds[k];
    fr.fold = k;
    fr.test_rows = folds[k];
    std::set<std::size_t> audit;
    const detail_cv::AuditedSource tuning{X, y, &audit};

    std::vector<std::vector<std::size_t>> inner;
    std::vector<std::size_t> outer_train;
    for (std::size_t u = 0; u < K; ++u)
      if (u != k) {
        inner.push_back(folds[u]);
        outer_train.insert(outer_train.end(), folds[u].begin(), folds[u].end());
      }
    const DMat Xtr_raw = tuning.rows(outer_train);
    const auto ytr = tuning.labels(outer_train);
    const auto st = Standardizer::fit(Xtr_raw);
    const DMat Xtr = st.apply(Xtr_raw);
    fr.lambda_max = kill_threshold(Xtr, ytr);

    const auto coarse = detail_cv::linspace(0.0, fr.lambda_max, opt.coarse_points);
    const double c_best = detail_cv::pick(coarse, detail_cv::inner_hits(tuning, inner, coarse, opt.fit));
    const double step = opt.coarse_points > 1 ? fr.lambda_max / static_cast<double>(opt.coarse_points - 1) : 0.0;
    auto fine = detail_cv::linspace(std::max(0.0, c_best - step), c_best + step, opt.fine_points);
    const double f_best = detail_cv::pick(fine, detail_cv::inner_hits(tuning, inner, fine, opt.fit));
    fr.lambda = f_best;
    fr.tuning_rows.assign(audit.begin(), audit.end());

    LogRegModel m = fit_l1_logreg(Xtr, ytr, fr.lambda, opt.fit);
    m.standardizer = st;
    // The held-out fold is read exactly once, here.
    const detail_cv::AuditedSource held{X, y, nullptr};
    const auto p = predict_proba(m, held.rows(folds[k]));
    const auto yte = held.labels(folds[k]);
    std::vector<int> pred;
    for (std::size_t r = 0; r < p.size(); ++r) {
      pred.push_back(p[r] >= 0.5 ? 1 : 0);
      rep.oof_proba[folds[k][r]] = p[r];
      rep.oof_pred[folds[k][r]] = pred.back();
    }
    fr.metrics = compute_metrics(yte, pred, p);
  });

  double auc_sum = 0.0;
  std::size_t auc_n = 0;
  for (const auto& f : rep.folds) {
    rep.mean.accuracy += f.metrics.accuracy;
    rep.mean.f1 += f.metrics.f1;
    rep.mean.precision += f.metrics.precision;
    rep.mean.recall += f.metrics.recall;
    if (f.metrics.auc) {
      auc_sum += *f.metrics.auc;
      ++auc_n;
    }
  }
  const double k = static_cast<double>(K);
  rep.mean.accuracy /= k;
  rep.mean.f1 /= k;
  rep.mean.precision /= k;
  rep.mean.recall /= k;
  if (auc_n) rep.mean.auc = auc_sum / static_cast<double>(auc_n);
  return rep;
}

// ---------------------------------------------------------------------------
// Reports

inline std::string fmt_metric(std::optional<double> v, int digits = 4) {
  if (!v) return "undefined";
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << *v;
  return os.str();
}

/// One row per fold plus a final "mean" row.
inline void write_cv_csv(const CvReport& r, const std::string& path) {
  std::ofstream os(path);
  require(static_cast<bool>(os), ErrorKind::io, "cannot write " + path);
  os << std::setprecision(17) << "fold,lambda,accuracy,f1,precision,recall,auc\n";
  auto auc = [](const std::optional<double>& a) {
    std::ostringstream s;
    if (a) s << std::setprecision(17) << *a;
    else s << "undefined";
    return s.str();
  };
  for (const auto& f : r.folds)
    os << f.fold << ',' << f.lambda << ',' << f.metrics.accuracy << ',' << f.metrics.f1 << ','
       << f.metrics.precision << ',' << f.metrics.recall << ',' << auc(f.metrics.auc) << '\n';
  os << "mean,," << r.mean.accuracy << ',' << r.mean.f1 << ',' << r.mean.precision << ','
     << r.mean.recall << ',' << auc(r.mean.auc) << '\n';
}

/// Metrics as rows, model families as columns.
inline std::string format_family_table(const std::vector<std::pair<std::string, CvReport>>& fams) {
  std::ostringstream os;
  os << std::left << std::setw(12) << "";
  for (const auto& [name, _] : fams) os << std::right << std::setw(14) << name;
  os << '\n';
  auto row = [&](const char* label, auto get) {
    os << std::left << std::setw(12) << label;
    for (const auto& [_, r] : fams) os << std::right << std::setw(14) << fmt_metric(get(r.mean));
    os << '\n';
  };
  row("Accuracy", [](const Metrics& m) { return std::optional<double>(m.accuracy); });
  row("F1 Score", [](const Metrics& m) { return std::optional<double>(m.f1); });
  row("Precision", [](const Metrics& m) { return std::optional<double>(m.precision); });
  row("Recall", [](const Metrics& m) { return std::optional<double>(m.recall); });
  row("AUC", [](const Metrics& m) { return m.auc; });
  return os.str();
}

// ---------------------------------------------------------------------------
// Zero-light conditional rates

struct Rate {
  std::optional<double> value;  // undefined when count is 0
  std::size_t count = 0;        // size of the conditioning set
};

struct ConditionalRates {
  Rate pred_poor_given_dark;
  Rate poor_given_dark;
  Rate poor_given_lit;
};

inline ConditionalRates conditional_analysis(const std::vector<double>& mean_intensity,
                                             const std::vector<int>& labels,
                                             const std::vector<int>& predictions) {
  require(mean_intensity.size() == labels.size() && labels.size() == predictions.size(),
          ErrorKind::dimension, "conditional analysis inputs differ in length");
  std::size_t dark = 0, lit = 0, dark_pred = 0, dark_poor = 0, lit_poor = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (mean_intensity[i] == 0.0) {
      ++dark;
      dark_pred += predictions[i] == 1;
      dark_poor += labels[i] == 1;
    } else {
      ++lit;
      lit_poor += labels[i] == 1;
    }
  }
  auto rate = [](std::size_t num, std::size_t den) {
    return Rate{den ? std::optional<double>(static_cast<double>(num) / static_cast<double>(den))
                    : std::nullopt,
                den};
  };
  return {rate(dark_pred, dark), rate(dark_poor, dark), rate(lit_poor, lit)};
}

}  // namespace povmap
