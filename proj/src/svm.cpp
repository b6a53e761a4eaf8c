#include "cadx/svm.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include <json.hpp>

#include "cadx/common.hpp"

namespace cadx::svm {

void SvmConfig::validate() const {
  if (!(C > 0.0) || !std::isfinite(C)) throw UsageError("svm: C must be positive");
  if (gamma && !(*gamma > 0.0)) throw UsageError("svm: gamma must be positive");
  if (!(tolerance > 0.0)) throw UsageError("svm: tolerance must be positive");
  if (max_iterations < 1) throw UsageError("svm: max_iterations must be positive");
}

double Kernel::operator()(std::span<const double> a, std::span<const double> b) const {
  if (type == KernelType::Linear) {
    double dot = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) dot += a[i] * b[i];
    return dot;
  }
  double d2 = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    d2 += d * d;
  }
  return std::exp(-gamma * d2);
}

// ---------------------------------------------------------------------------
// SMO

BinarySolution solve_binary(std::span<const std::vector<double>> x, std::span<const int> y, const Kernel& kernel,
                            double C, double tolerance, std::int64_t max_iterations) {
  const std::size_t n = x.size();
  if (n == 0 || y.size() != n) throw DataError("svm: feature and label counts differ or are zero");
  for (int yi : y)
    if (yi != 1 && yi != -1) throw DataError("svm: binary labels must be +1 or -1");

  // Full Q matrix, Q_ij = y_i y_j K(x_i, x_j).
  std::vector<double> Q(n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i; j < n; ++j) {
      const double q = y[i] * y[j] * kernel(x[i], x[j]);
      Q[i * n + j] = q;
      Q[j * n + i] = q;
    }

  constexpr double kTau = 1e-12;
  BinarySolution sol;
  sol.alpha.assign(n, 0.0);
  std::vector<double>& alpha = sol.alpha;
  std::vector<double> grad(n, -1.0);  // grad of 1/2 a'Qa - e'a

  auto in_up = [&](std::size_t t) { return (y[t] == 1 && alpha[t] < C) || (y[t] == -1 && alpha[t] > 0.0); };
  auto in_low = [&](std::size_t t) { return (y[t] == 1 && alpha[t] > 0.0) || (y[t] == -1 && alpha[t] < C); };

  while (sol.iterations < max_iterations) {
    // i maximizes -y_t grad_t over I_up.
    double gmax = -std::numeric_limits<double>::infinity();
    std::size_t i = n;
    for (std::size_t t = 0; t < n; ++t)
      if (in_up(t) && -y[t] * grad[t] > gmax) {
        gmax = -y[t] * grad[t];
        i = t;
      }
    // j minimizes the second-order objective decrease over I_low.
    double gmax2 = -std::numeric_limits<double>::infinity();
    double best = std::numeric_limits<double>::infinity();
    std::size_t j = n;
    for (std::size_t t = 0; t < n; ++t) {
      if (!in_low(t)) continue;
      gmax2 = std::max(gmax2, y[t] * grad[t]);
      if (i == n) continue;
      const double b = gmax + y[t] * grad[t];
      if (b > 0.0) {
        double a = Q[i * n + i] + Q[t * n + t] - 2.0 * y[i] * y[t] * Q[i * n + t];
        if (a <= 0.0) a = kTau;
        const double score = -(b * b) / a;
        if (score < best) {
          best = score;
          j = t;
        }
      }
    }
    if (i == n || j == n || gmax + gmax2 < tolerance) break;
    ++sol.iterations;

    const double old_ai = alpha[i];
    const double old_aj = alpha[j];
    const double* Qi = &Q[i * n];
    const double* Qj = &Q[j * n];
    if (y[i] != y[j]) {
      double quad = Qi[i] + Qj[j] + 2.0 * Qi[j];
      if (quad <= 0.0) quad = kTau;
      const double delta = (-grad[i] - grad[j]) / quad;
      const double diff = alpha[i] - alpha[j];
      alpha[i] += delta;
      alpha[j] += delta;
      if (diff > 0.0) {
        if (alpha[j] < 0.0) {
          alpha[j] = 0.0;
          alpha[i] = diff;
        }
      } else if (alpha[i] < 0.0) {
        alpha[i] = 0.0;
        alpha[j] = -diff;
      }
      if (diff > 0.0) {
        if (alpha[i] > C) {
          alpha[i] = C;
          alpha[j] = C - diff;
        }
      } else if (alpha[j] > C) {
        alpha[j] = C;
        alpha[i] = C + diff;
      }
    } else {
      double quad = Qi[i] + Qj[j] - 2.0 * Qi[j];
      if (quad <= 0.0) quad = kTau;
      const double delta = (grad[i] - grad[j]) / quad;
      const double sum = alpha[i] + alpha[j];
      alpha[i] -= delta;
      alpha[j] += delta;
      if (sum > C) {
        if (alpha[i] > C) {
          alpha[i] = C;
          alpha[j] = sum - C;
        }
      } else if (alpha[j] < 0.0) {
        alpha[j] = 0.0;
        alpha[i] = sum;
      }
      if (sum > C) {
        if (alpha[j] > C) {
          alpha[j] = C;
          alpha[i] = sum - C;
        }
      } else if (alpha[i] < 0.0) {
        alpha[i] = 0.0;
        alpha[j] = sum;
      }
    }
    const double dai = alpha[i] - old_ai;
    const double daj = alpha[j] - old_aj;
    for (std::size_t t = 0; t < n; ++t) grad[t] += Qi[t] * dai + Qj[t] * daj;
  }

  // Bias from free vectors, else the midpoint of the feasible interval.
  double upper = std::numeric_limits<double>::infinity();
  double lower = -std::numeric_limits<double>::infinity();
  double free_sum = 0.0;
  int free_count = 0;
  for (std::size_t t = 0; t < n; ++t) {
    const double yg = y[t] * grad[t];
    if (alpha[t] >= C) {
      if (y[t] == -1) upper = std::min(upper, yg);
      else lower = std::max(lower, yg);
    } else if (alpha[t] <= 0.0) {
      if (y[t] == 1) upper = std::min(upper, yg);
      else lower = std::max(lower, yg);
    } else {
      ++free_count;
      free_sum += yg;
    }
  }
  const double rho = free_count > 0 ? free_sum / free_count : (upper + lower) / 2.0;
  sol.bias = -rho;
  return sol;
}

double dual_objective(std::span<const std::vector<double>> x, std::span<const int> y, const Kernel& kernel,
                      std::span<const double> alpha) {
  double linear = 0.0;
  double quad = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    linear += alpha[i];
    for (std::size_t j = 0; j < x.size(); ++j) quad += alpha[i] * alpha[j] * y[i] * y[j] * kernel(x[i], x[j]);
  }
  return linear - 0.5 * quad;
}

// ---------------------------------------------------------------------------
// Platt calibration

double PlattParams::probability(double score) const {
  const double f = a * score + b;
  if (f >= 0.0) return std::exp(-f) / (1.0 + std::exp(-f));
  return 1.0 / (1.0 + std::exp(f));
}

PlattParams fit_platt(std::span<const double> scores, std::span<const int> positive) {
  const std::size_t n = scores.size();
  if (n == 0 || positive.size() != n) throw DataError("platt: need matching non-empty inputs");
  double prior1 = 0.0;
  double prior0 = 0.0;
  for (int p : positive) (p ? prior1 : prior0) += 1.0;

  constexpr int kMaxIter = 100;
  constexpr double kMinStep = 1e-10;
  constexpr double kSigma = 1e-12;
  constexpr double kEps = 1e-5;
  const double hi_target = (prior1 + 1.0) / (prior1 + 2.0);
  const double lo_target = 1.0 / (prior0 + 2.0);
  std::vector<double> t(n);
  for (std::size_t i = 0; i < n; ++i) t[i] = positive[i] ? hi_target : lo_target;

  double A = 0.0;
  double B = std::log((prior0 + 1.0) / (prior1 + 1.0));
  auto objective = [&](double a, double b) {
    double f = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double z = scores[i] * a + b;
      f += z >= 0.0 ? t[i] * z + std::log1p(std::exp(-z)) : (t[i] - 1.0) * z + std::log1p(std::exp(z));
    }
    return f;
  };
  double fval = objective(A, B);

  for (int iter = 0; iter < kMaxIter; ++iter) {
    double h11 = kSigma, h22 = kSigma, h21 = 0.0, g1 = 0.0, g2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double z = scores[i] * A + B;
      double p, q;
      if (z >= 0.0) {
        p = std::exp(-z) / (1.0 + std::exp(-z));
        q = 1.0 / (1.0 + std::exp(-z));
      } else {
        p = 1.0 / (1.0 + std::exp(z));
        q = std::exp(z) / (1.0 + std::exp(z));
      }
      const double d2 = p * q;
      h11 += scores[i] * scores[i] * d2;
      h22 += d2;
      h21 += scores[i] * d2;
      const double d1 = t[i] - p;
      g1 += scores[i] * d1;
      g2 += d1;
    }
    if (std::abs(g1) < kEps && std::abs(g2) < kEps) break;

    const double det = h11 * h22 - h21 * h21;
    const double dA = -(h22 * g1 - h21 * g2) / det;
    const double dB = -(-h21 * g1 + h11 * g2) / det;
    const double gd = g1 * dA + g2 * dB;
    double step = 1.0;
    while (step >= kMinStep) {
      const double newA = A + step * dA;
      const double newB = B + step * dB;
      const double newf = objective(newA, newB);
      if (newf < fval + 1e-4 * step * gd) {
        A = newA;
        B = newB;
        fval = newf;
        break;
      }
      step /= 2.0;
    }
    if (step < kMinStep) break;
  }
  return PlattParams{A, B};
}

// ---------------------------------------------------------------------------
// Multi-class model

std::vector<double> FeatureScaler::apply(std::span<const double> x) const {
  if (x.size() != mean.size()) throw DataError("feature dimension mismatch");
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = (x[i] - mean[i]) / scale[i];
  return out;
}

double PairModel::decision(std::span<const double> scaled_x, const Kernel& kernel) const {
  double f = bias;
  for (std::size_t i = 0; i < support_vectors.size(); ++i) f += coefficients[i] * kernel(support_vectors[i], scaled_x);
  return f;
}

namespace {

void check_feature(const SvmModel& model, std::span<const double> x) {
  if (static_cast<int>(x.size()) != model.dimension)
    throw DataError("feature has dimension " + std::to_string(x.size()) + ", model expects " +
                    std::to_string(model.dimension));
  for (double v : x)
    if (!std::isfinite(v)) throw DataError("non-finite feature value");
}

std::array<double, kNumClasses> scores_scaled(const SvmModel& model, std::span<const double> z) {
  std::array<double, kNumClasses> s{};
  for (const auto& p : model.pairs) {
    const double f = p.decision(z, model.kernel);
    s[p.class_a] += f;
    s[p.class_b] -= f;
  }
  return s;
}

}  // namespace

SvmModel train_svm(std::span<const std::vector<double>> features, std::span<const int> labels,
                   const SvmConfig& config) {
  config.validate();
  if (features.empty() || features.size() != labels.size())
    throw DataError("svm: feature and label counts differ or are zero");
  const std::size_t dim = features.front().size();
  if (dim == 0) throw DataError("svm: empty feature vectors");
  for (const auto& f : features) {
    if (f.size() != dim) throw DataError("svm: inconsistent feature dimensions");
    for (double v : f)
      if (!std::isfinite(v)) throw DataError("svm: non-finite feature value");
  }

  SvmModel model;
  model.config = config;
  model.dimension = static_cast<int>(dim);
  for (int l : labels) {
    if (l < 0 || l >= kNumClasses) throw DataError("svm: label out of range");
    model.class_present[l] = true;
  }
  if (std::count(model.class_present.begin(), model.class_present.end(), true) < 2)
    throw DataError("svm: training data must contain at least two classes");

  const double n = static_cast<double>(features.size());
  model.scaler.mean.assign(dim, 0.0);
  model.scaler.scale.assign(dim, 1.0);
  for (const auto& f : features)
    for (std::size_t k = 0; k < dim; ++k) model.scaler.mean[k] += f[k] / n;
  for (std::size_t k = 0; k < dim; ++k) {
    double var = 0.0;
    for (const auto& f : features) var += (f[k] - model.scaler.mean[k]) * (f[k] - model.scaler.mean[k]);
    var /= n;
    model.scaler.scale[k] = var > 1e-24 ? std::sqrt(var) : 1.0;
  }
  std::vector<std::vector<double>> scaled;
  scaled.reserve(features.size());
  for (const auto& f : features) scaled.push_back(model.scaler.apply(f));

  model.kernel.type = config.kernel;
  if (config.gamma) {
    model.kernel.gamma = *config.gamma;
  } else {
    double sum = 0.0, sum_sq = 0.0;
    for (const auto& f : scaled)
      for (double v : f) {
        sum += v;
        sum_sq += v * v;
      }
    const double count = n * static_cast<double>(dim);
    const double var = sum_sq / count - (sum / count) * (sum / count);
    model.kernel.gamma = var > 1e-24 ? 1.0 / (static_cast<double>(dim) * var) : 1.0 / static_cast<double>(dim);
  }

  for (int a = 0; a < kNumClasses; ++a) {
    for (int b = a + 1; b < kNumClasses; ++b) {
      if (!model.class_present[a] || !model.class_present[b]) continue;
      std::vector<std::vector<double>> px;
      std::vector<int> py;
      for (std::size_t i = 0; i < scaled.size(); ++i) {
        if (labels[i] == a || labels[i] == b) {
          px.push_back(scaled[i]);
          py.push_back(labels[i] == a ? 1 : -1);
        }
      }
      const BinarySolution sol =
          solve_binary(px, py, model.kernel, config.C, config.tolerance, config.max_iterations);
      PairModel pm;
      pm.class_a = a;
      pm.class_b = b;
      pm.bias = sol.bias;
      for (std::size_t i = 0; i < px.size(); ++i) {
        if (sol.alpha[i] > 0.0) {
          pm.support_vectors.push_back(px[i]);
          pm.coefficients.push_back(sol.alpha[i] * py[i]);
        }
      }
      model.pairs.push_back(std::move(pm));
    }
  }

  std::vector<std::array<double, kNumClasses>> train_scores;
  train_scores.reserve(scaled.size());
  for (const auto& z : scaled) train_scores.push_back(scores_scaled(model, z));
  for (int c = 0; c < kNumClasses; ++c) {
    if (!model.class_present[c]) continue;
    std::vector<double> s(scaled.size());
    std::vector<int> positive(scaled.size());
    for (std::size_t i = 0; i < scaled.size(); ++i) {
      s[i] = train_scores[i][c];
      positive[i] = labels[i] == c ? 1 : 0;
    }
    model.platt[c] = fit_platt(s, positive);
  }
  return model;
}

std::array<double, kNumClasses> class_scores(const SvmModel& model, std::span<const double> feature) {
  check_feature(model, feature);
  return scores_scaled(model, model.scaler.apply(feature));
}

int predict_label(const SvmModel& model, std::span<const double> feature) {
  check_feature(model, feature);
  const std::vector<double> z = model.scaler.apply(feature);
  std::array<int, kNumClasses> votes{};
  for (const auto& p : model.pairs) {
    const double f = p.decision(z, model.kernel);
    ++votes[f > 0.0 ? p.class_a : p.class_b];
  }
  int best = -1;
  for (int c = 0; c < kNumClasses; ++c) {
    if (!model.class_present[c]) continue;
    if (best < 0 || votes[c] >= votes[best]) best = c;
  }
  return best;
}

std::array<double, kNumClasses> predict_proba(const SvmModel& model, std::span<const double> feature) {
  const auto scores = class_scores(model, feature);
  std::array<double, kNumClasses> p{};
  double total = 0.0;
  for (int c = 0; c < kNumClasses; ++c) {
    if (!model.class_present[c]) continue;
    if (!model.platt[c]) throw DataError("svm model lacks probability calibration");
    p[c] = model.platt[c]->probability(scores[c]);
    total += p[c];
  }
  if (!(total > 0.0)) throw NumericError("svm probabilities underflowed");
  for (auto& v : p) v /= total;
  return p;
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

constexpr std::string_view kMagic = "CADXSVM1";

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t get_u64(std::string_view bytes, std::size_t pos) {
  if (bytes.size() < pos + 8) throw DataError("svm model truncated");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[pos + i])) << (8 * i);
  return v;
}

}  // namespace

std::string encode_svm_model(const SvmModel& model) {
  using nlohmann::json;
  json pairs = json::array();
  for (const auto& p : model.pairs)
    pairs.push_back({{"class_a", p.class_a}, {"class_b", p.class_b}, {"bias", p.bias},
                     {"support_vectors", p.support_vectors.size()}});
  json platt = json::array();
  for (const auto& pp : model.platt) platt.push_back(pp ? json{{"a", pp->a}, {"b", pp->b}} : json(nullptr));
  json header = {
      {"version", 1},
      {"kernel", model.kernel.type == KernelType::Rbf ? "rbf" : "linear"},
      {"gamma", model.kernel.gamma},
      {"C", model.config.C},
      {"tolerance", model.config.tolerance},
      {"dimension", model.dimension},
      {"class_present", model.class_present},
      {"scaler", {{"mean", model.scaler.mean}, {"scale", model.scaler.scale}}},
      {"platt", platt},
      {"pairs", pairs},
  };
  const std::string text = header.dump();
  std::string out(kMagic);
  put_u64(out, text.size());
  out += text;
  for (const auto& p : model.pairs) {
    for (double c : p.coefficients) put_u64(out, std::bit_cast<std::uint64_t>(c));
    for (const auto& sv : p.support_vectors)
      for (double v : sv) put_u64(out, std::bit_cast<std::uint64_t>(v));
  }
  return out;
}

SvmModel decode_svm_model(std::string_view bytes) {
  using nlohmann::json;
  if (bytes.substr(0, kMagic.size()) != kMagic) throw DataError("not an svm model: bad magic");
  const std::uint64_t len = get_u64(bytes, kMagic.size());
  std::size_t pos = kMagic.size() + 8;
  if (bytes.size() - pos < len) throw DataError("svm model truncated");
  SvmModel model;
  try {
    const json header = json::parse(bytes.substr(pos, len));
    pos += len;
    if (header.at("version").get<int>() != 1) throw DataError("unsupported svm model version");
    model.kernel.type = header.at("kernel").get<std::string>() == "rbf" ? KernelType::Rbf : KernelType::Linear;
    model.config.kernel = model.kernel.type;
    model.kernel.gamma = header.at("gamma").get<double>();
    model.config.gamma = model.kernel.gamma;
    model.config.C = header.at("C").get<double>();
    model.config.tolerance = header.at("tolerance").get<double>();
    model.dimension = header.at("dimension").get<int>();
    model.class_present = header.at("class_present").get<std::array<bool, kNumClasses>>();
    model.scaler.mean = header.at("scaler").at("mean").get<std::vector<double>>();
    model.scaler.scale = header.at("scaler").at("scale").get<std::vector<double>>();
    const auto& platt = header.at("platt");
    for (int c = 0; c < kNumClasses; ++c)
      if (!platt.at(c).is_null()) model.platt[c] = PlattParams{platt.at(c).at("a"), platt.at(c).at("b")};
    for (const auto& pj : header.at("pairs")) {
      PairModel p;
      p.class_a = pj.at("class_a");
      p.class_b = pj.at("class_b");
      p.bias = pj.at("bias");
      p.coefficients.resize(pj.at("support_vectors").get<std::size_t>());
      p.support_vectors.resize(p.coefficients.size());
      model.pairs.push_back(std::move(p));
    }
  } catch (const json::exception& e) {
    throw DataError(std::string("svm model header invalid: ") + e.what());
  }
  for (auto& p : model.pairs) {
    for (auto& c : p.coefficients) {
      c = std::bit_cast<double>(get_u64(bytes, pos));
      pos += 8;
    }
    for (auto& sv : p.support_vectors) {
      sv.resize(static_cast<std::size_t>(model.dimension));
      for (auto& v : sv) {
        v = std::bit_cast<double>(get_u64(bytes, pos));
        pos += 8;
      }
    }
  }
  if (pos != bytes.size()) throw DataError("svm model has trailing bytes");
  return model;
}

void save_svm_model(const SvmModel& model, const std::filesystem::path& path) {
  write_text_file(path, encode_svm_model(model));
}

SvmModel load_svm_model(const std::filesystem::path& path) { return decode_svm_model(read_text_file(path)); }

}  // namespace cadx::svm
