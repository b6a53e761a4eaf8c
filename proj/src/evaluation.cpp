#include "cadx/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "cadx/common.hpp"

namespace cadx::eval {

BinaryCounts& BinaryCounts::operator+=(const BinaryCounts& o) {
  tp += o.tp;
  tn += o.tn;
  fp += o.fp;
  fn += o.fn;
  return *this;
}

double accuracy(const BinaryCounts& c) {
  if (c.total() == 0) throw UndefinedMetricError("accuracy undefined: no samples");
  return static_cast<double>(c.tp + c.tn) / static_cast<double>(c.total());
}

double sensitivity(const BinaryCounts& c) {
  if (c.tp + c.fn == 0) throw UndefinedMetricError("sensitivity undefined: TP + FN = 0");
  return static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
}

double specificity(const BinaryCounts& c) {
  if (c.tn + c.fp == 0) throw UndefinedMetricError("specificity undefined: TN + FP = 0");
  return static_cast<double>(c.tn) / static_cast<double>(c.tn + c.fp);
}

BinaryMetrics metrics(const BinaryCounts& c) { return {accuracy(c), sensitivity(c), specificity(c)}; }

// ---------------------------------------------------------------------------
// Binomial tails and Clopper-Pearson

namespace {

double log_binomial_term(std::int64_t n, std::int64_t i, double log_p, double log_q) {
  const double dn = static_cast<double>(n);
  const double di = static_cast<double>(i);
  return std::lgamma(dn + 1.0) - std::lgamma(di + 1.0) - std::lgamma(dn - di + 1.0) + di * log_p + (dn - di) * log_q;
}

/// Sum of pmf over [from, to].
double binomial_range(std::int64_t from, std::int64_t to, std::int64_t n, double p) {
  from = std::max<std::int64_t>(from, 0);
  to = std::min(to, n);
  if (from > to) return 0.0;
  if (p <= 0.0) return from == 0 ? 1.0 : 0.0;
  if (p >= 1.0) return to == n ? 1.0 : 0.0;
  const double log_p = std::log(p);
  const double log_q = std::log1p(-p);
  double sum = 0.0;
  for (std::int64_t i = from; i <= to; ++i) sum += std::exp(log_binomial_term(n, i, log_p, log_q));
  return std::min(sum, 1.0);
}

/// Root of a monotone function on [0,1] by bisection; `increasing` gives the
/// direction of f(p) - target.
template <typename F>
double bisect(F f, double target, bool increasing) {
  double lo = 0.0;
  double hi = 1.0;
  for (int iter = 0; iter < 200 && hi - lo > 1e-15; ++iter) {
    const double mid = 0.5 * (lo + hi);
    const bool above = f(mid) > target;
    if (above == increasing) hi = mid;
    else lo = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace

double binomial_upper_tail(std::int64_t k, std::int64_t n, double p) {
  if (k <= 0) return 1.0;
  // Sum the shorter side for accuracy.
  if (k > n / 2) return binomial_range(k, n, n, p);
  return std::max(0.0, 1.0 - binomial_range(0, k - 1, n, p));
}

double binomial_lower_tail(std::int64_t k, std::int64_t n, double p) {
  if (k >= n) return 1.0;
  if (k < n / 2) return binomial_range(0, k, n, p);
  return std::max(0.0, 1.0 - binomial_range(k + 1, n, n, p));
}

Interval clopper_pearson(std::int64_t k, std::int64_t n, double alpha) {
  if (n < 1) throw DataError("clopper_pearson: need n >= 1");
  if (k < 0 || k > n) throw DataError("clopper_pearson: need 0 <= k <= n");
  if (!(alpha > 0.0 && alpha < 1.0)) throw DataError("clopper_pearson: need 0 < alpha < 1");
  const double half = alpha / 2.0;
  Interval ci;
  ci.lower = k == 0 ? 0.0 : bisect([&](double p) { return binomial_upper_tail(k, n, p); }, half, true);
  ci.upper = k == n ? 1.0 : bisect([&](double p) { return binomial_lower_tail(k, n, p); }, half, false);
  return ci;
}

// ---------------------------------------------------------------------------
// Confusion matrices

std::int64_t ConfusionMatrix::total() const { return std::accumulate(counts.begin(), counts.end(), std::int64_t{0}); }

std::int64_t ConfusionMatrix::trace() const {
  std::int64_t t = 0;
  for (int i = 0; i < classes; ++i) t += at(i, i);
  return t;
}

std::vector<double> ConfusionMatrix::normalized() const {
  std::vector<double> out(counts.size(), 0.0);
  for (int i = 0; i < classes; ++i) {
    std::int64_t row = 0;
    for (int j = 0; j < classes; ++j) row += at(i, j);
    if (row == 0) continue;
    for (int j = 0; j < classes; ++j)
      out[static_cast<std::size_t>(i) * classes + j] = static_cast<double>(at(i, j)) / static_cast<double>(row);
  }
  return out;
}

ConfusionMatrix& ConfusionMatrix::operator+=(const ConfusionMatrix& o) {
  if (o.classes != classes) throw DataError("confusion matrices differ in size");
  for (std::size_t i = 0; i < counts.size(); ++i) counts[i] += o.counts[i];
  return *this;
}

ConfusionMatrix confusion(std::span<const int> actual, std::span<const int> predicted, int classes) {
  if (actual.size() != predicted.size()) throw DataError("confusion: length mismatch");
  if (actual.empty()) throw DataError("confusion: no samples");
  if (classes < 1) throw DataError("confusion: need at least one class");
  ConfusionMatrix m;
  m.classes = classes;
  m.counts.assign(static_cast<std::size_t>(classes) * classes, 0);
  for (std::size_t i = 0; i < actual.size(); ++i) {
    if (actual[i] < 0 || actual[i] >= classes || predicted[i] < 0 || predicted[i] >= classes)
      throw DataError("confusion: label out of range");
    ++m.at(actual[i], predicted[i]);
  }
  return m;
}

// ---------------------------------------------------------------------------
// ROC

namespace {

void check_binary_inputs(std::span<const double> scores, std::span<const int> truth, std::int64_t& pos,
                         std::int64_t& neg) {
  if (scores.size() != truth.size()) throw DataError("roc: length mismatch");
  pos = neg = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!std::isfinite(scores[i])) throw DataError("roc: non-finite score");
    if (truth[i] == 1) ++pos;
    else if (truth[i] == 0) ++neg;
    else throw DataError("roc: truth labels must be 0 or 1");
  }
  if (pos == 0 || neg == 0) throw DataError("roc: both classes must be present");
}

}  // namespace

RocCurve roc_and_auc(std::span<const double> scores, std::span<const int> truth) {
  std::int64_t pos, neg;
  check_binary_inputs(scores, truth, pos, neg);
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  RocCurve roc;
  // At threshold = max score nothing is strictly above it.
  roc.points.push_back({scores[order.front()], 0.0, 0.0});
  std::int64_t tp = 0, fp = 0;
  std::int64_t prev_tp = 0, prev_fp = 0;
  // Twice the area in units of one positive-negative pair.
  std::int64_t area2 = 0;
  for (std::size_t k = 0; k < order.size();) {
    const double s = scores[order[k]];
    while (k < order.size() && scores[order[k]] == s) {
      (truth[order[k]] == 1 ? tp : fp) += 1;
      ++k;
    }
    area2 += (fp - prev_fp) * (tp + prev_tp);
    prev_tp = tp;
    prev_fp = fp;
    // Everything scored >= s is now positive, i.e. score > the next lower
    // distinct value (or the sentinel).
    const double next = k < order.size() ? scores[order[k]] : scores[order.back()] - 1.0;
    roc.points.push_back({next, static_cast<double>(fp) / static_cast<double>(neg),
                          static_cast<double>(tp) / static_cast<double>(pos)});
  }
  roc.auc = static_cast<double>(area2) / (2.0 * static_cast<double>(pos) * static_cast<double>(neg));
  return roc;
}

double mann_whitney_auc(std::span<const double> scores, std::span<const int> truth) {
  std::int64_t pos, neg;
  check_binary_inputs(scores, truth, pos, neg);
  // Midranks over ascending scores.
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double rank_sum_twice = 0.0;  // twice the positive rank sum, exact in integers
  for (std::size_t k = 0; k < order.size();) {
    std::size_t end = k;
    while (end < order.size() && scores[order[end]] == scores[order[k]]) ++end;
    const double twice_mid = static_cast<double>(k + 1 + end);  // 2 * average of ranks k+1..end
    for (std::size_t t = k; t < end; ++t)
      if (truth[order[t]] == 1) rank_sum_twice += twice_mid;
    k = end;
  }
  const double u = rank_sum_twice / 2.0 - static_cast<double>(pos) * static_cast<double>(pos + 1) / 2.0;
  return u / (static_cast<double>(pos) * static_cast<double>(neg));
}

MeanSd mean_sd(std::span<const double> values) {
  MeanSd r;
  r.n = static_cast<int>(values.size());
  if (values.empty()) return r;
  r.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - r.mean) * (v - r.mean);
    r.sd = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return r;
}

}  // namespace cadx::eval
