#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include <boost/math/special_functions/beta.hpp>

#include "cadx/common.hpp"
#include "cadx/cross_validation.hpp"
#include "cadx/evaluation.hpp"
#include "cadx/plots.hpp"
#include "helpers.hpp"
#include "oracles.hpp"

using namespace cadx;
using namespace cadx::eval;

TEST_CASE("binary metrics") {
  const BinaryCounts c{8, 9, 1, 2};
  const auto m = metrics(c);
  CHECK(m.sensitivity == doctest::Approx(0.8).epsilon(1e-15));
  CHECK(m.specificity == doctest::Approx(0.9).epsilon(1e-15));
  CHECK(m.accuracy == doctest::Approx(0.85).epsilon(1e-15));
  const auto perfect = metrics(BinaryCounts{5, 7, 0, 0});
  CHECK(perfect.accuracy == 1.0);
  CHECK(perfect.sensitivity == 1.0);
  CHECK(perfect.specificity == 1.0);
  CHECK_THROWS_WITH_AS(sensitivity(BinaryCounts{0, 4, 1, 0}), doctest::Contains("sensitivity undefined"),
                       UndefinedMetricError);
  CHECK_THROWS_WITH_AS(specificity(BinaryCounts{3, 0, 0, 1}), doctest::Contains("specificity undefined"),
                       UndefinedMetricError);
  CHECK_THROWS_AS(accuracy(BinaryCounts{}), UndefinedMetricError);

  Rng rng(1);
  for (int t = 0; t < 200; ++t) {
    const BinaryCounts r{1 + static_cast<std::int64_t>(rng.below(50)), 1 + static_cast<std::int64_t>(rng.below(50)),
                         static_cast<std::int64_t>(rng.below(50)), static_cast<std::int64_t>(rng.below(50))};
    const auto mm = metrics(r);
    const double recombined =
        (mm.sensitivity * static_cast<double>(r.tp + r.fn) + mm.specificity * static_cast<double>(r.tn + r.fp)) /
        static_cast<double>(r.total());
    CHECK(recombined == doctest::Approx(mm.accuracy).epsilon(1e-12));
  }
}

TEST_CASE("Clopper-Pearson") {
  SUBCASE("closed forms at the extremes") {
    const auto z = clopper_pearson(0, 10, 0.05);
    CHECK(z.lower == 0.0);
    CHECK(std::abs(z.upper - (1.0 - std::pow(0.025, 0.1))) <= 1e-9);
    CHECK(z.upper == doctest::Approx(0.30850).epsilon(1e-4));
    const auto f = clopper_pearson(10, 10, 0.05);
    CHECK(f.upper == 1.0);
    CHECK(std::abs(f.lower - std::pow(0.025, 0.1)) <= 1e-9);
  }
  SUBCASE("k=8, n=10 against both oracles") {
    const auto ci = clopper_pearson(8, 10, 0.05);
    const auto o = oracle::clopper_pearson(8, 10, 0.05);
    CHECK(std::abs(ci.lower - o.lower) <= 1e-6);
    CHECK(std::abs(ci.upper - o.upper) <= 1e-6);
    CHECK(std::abs(ci.lower - boost::math::ibeta_inv(8.0, 3.0, 0.025)) <= 1e-6);
    CHECK(std::abs(ci.upper - boost::math::ibeta_inv(9.0, 2.0, 0.975)) <= 1e-6);
  }
  SUBCASE("interval contains k/n and shrinks with n") {
    for (int n = 1; n <= 30; ++n)
      for (int k = 0; k <= n; ++k) {
        const auto ci = clopper_pearson(k, n);
        CHECK(ci.lower <= static_cast<double>(k) / n);
        CHECK(ci.upper >= static_cast<double>(k) / n);
      }
    double width = 1.0;
    for (int n = 4; n <= 256; n *= 2) {
      const auto ci = clopper_pearson(n / 4, n);
      CHECK(ci.upper - ci.lower < width);
      width = ci.upper - ci.lower;
    }
  }
  CHECK_THROWS_AS(clopper_pearson(3, 2), DataError);
  CHECK_THROWS_AS(clopper_pearson(0, 0), DataError);
  CHECK_THROWS_AS(clopper_pearson(1, 2, 1.0), DataError);
}

TEST_CASE("confusion matrix") {
  const auto m = confusion(std::vector<int>{0, 0, 1}, std::vector<int>{0, 1, 1}, 2);
  CHECK(m.counts == std::vector<std::int64_t>{1, 1, 0, 1});
  const auto n = m.normalized();
  CHECK(n == std::vector<double>{0.5, 0.5, 0.0, 1.0});
  const std::vector<int> same{0, 3, 4, 4, 2};
  const auto d = confusion(same, same, 5);
  CHECK(d.trace() == 5);
  CHECK(d.total() == 5);
  const auto dn = d.normalized();
  for (int i = 0; i < 5; ++i) {
    double row = 0.0;
    for (int j = 0; j < 5; ++j) row += dn[static_cast<std::size_t>(i) * 5 + j];
    if (i == 1) CHECK(row == 0.0);
    else CHECK(row == doctest::Approx(1.0).epsilon(1e-15));
  }
  CHECK_THROWS_AS(confusion(std::vector<int>{0}, std::vector<int>{0, 1}, 2), DataError);
  CHECK_THROWS_AS(confusion(std::vector<int>{0}, std::vector<int>{2}, 2), DataError);
}

TEST_CASE("ROC and AUC") {
  const std::vector<int> t{1, 1, 0, 0};
  CHECK(roc_and_auc(std::vector<double>{0.9, 0.8, 0.1, 0.2}, t).auc == 1.0);
  CHECK(roc_and_auc(std::vector<double>{0.9, 0.1, 0.5, 0.2}, t).auc == 0.5);
  CHECK(roc_and_auc(std::vector<double>{0.3, 0.3, 0.3, 0.3}, t).auc == 0.5);
  CHECK_THROWS_AS(roc_and_auc(std::vector<double>{0.1, 0.2}, std::vector<int>{1, 1}), DataError);

  Rng rng(6);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t n = 2 + rng.below(300);
    std::vector<double> s(n);
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = std::round(rng.uniform() * 20.0) / 20.0;
      y[i] = rng.uniform() < 0.4 ? 1 : 0;
    }
    y[0] = 1;
    y[1] = 0;
    const RocCurve roc = roc_and_auc(s, y);
    CHECK(std::abs(roc.auc - oracle::pair_count_auc(s, y)) <= 1e-12);
    CHECK(std::abs(roc.auc - mann_whitney_auc(s, y)) <= 1e-12);
    CHECK(roc.points.front().fpr == 0.0);
    CHECK(roc.points.front().tpr == 0.0);
    CHECK(roc.points.back().fpr == 1.0);
    CHECK(roc.points.back().tpr == 1.0);
    for (std::size_t i = 1; i < roc.points.size(); ++i) {
      CHECK(roc.points[i].threshold < roc.points[i - 1].threshold);
      CHECK(roc.points[i].fpr >= roc.points[i - 1].fpr);
      CHECK(roc.points[i].tpr >= roc.points[i - 1].tpr);
    }
  }
}

TEST_CASE("mean and sample standard deviation") {
  const auto m = mean_sd(std::vector<double>{2, 4, 4, 4, 5, 5, 7, 9});
  CHECK(m.mean == 5.0);
  CHECK(m.sd == doctest::Approx(std::sqrt(32.0 / 7.0)).epsilon(1e-14));
  CHECK(mean_sd(std::vector<double>{3.0}).sd == 0.0);
}

TEST_CASE("fold planning") {
  SUBCASE("equal weights split evenly") {
    Manifest m;
    for (int s = 0; s < 20; ++s) {
      ManifestEntry e;
      e.volume_id = "V" + std::to_string(s);
      e.specimen_id = "S" + std::to_string(s);
      e.patient_id = "P" + std::to_string(s);
      e.label = static_cast<FineClass>(s % 5);
      e.meta.age = 40;
      m.entries.push_back(e);
    }
    const FoldPlan plan = plan_folds(m, 10, 3);
    for (int size : plan.fold_sizes(m)) CHECK(size == 2);
  }
  SUBCASE("specimens never straddle and spread is bounded") {
    Rng rng(21);
    for (int trial = 0; trial < 200; ++trial) {
      const int k = 2 + static_cast<int>(rng.below(9));
      const int specimens = k + static_cast<int>(rng.below(40));
      const int max_volumes = 1 + static_cast<int>(rng.below(6));
      const Manifest m = testutil::synthetic_manifest(rng, specimens, max_volumes);
      const FoldPlan plan = plan_folds(m, k, rng.next_u64());
      std::map<std::string, std::set<int>> folds_of;
      std::map<std::string, int> volumes_of;
      for (int f = 0; f < k; ++f)
        for (std::size_t i : plan.test_entries(m, f)) {
          folds_of[m.entries[i].specimen_id].insert(f);
          ++volumes_of[m.entries[i].specimen_id];
        }
      int widest = 0;
      for (const auto& [s, fs] : folds_of) CHECK(fs.size() == 1);
      for (const auto& [s, n] : volumes_of) widest = std::max(widest, n);
      const auto sizes = plan.fold_sizes(m);
      CHECK(*std::max_element(sizes.begin(), sizes.end()) - *std::min_element(sizes.begin(), sizes.end()) <= widest);
    }
  }
  SUBCASE("deterministic given the seed") {
    Rng rng(4);
    const Manifest m = testutil::synthetic_manifest(rng, 30, 3);
    CHECK(plan_folds(m, 10, 8).specimen_fold == plan_folds(m, 10, 8).specimen_fold);
  }
  SUBCASE("too few specimens") {
    Rng rng(4);
    const Manifest m = testutil::synthetic_manifest(rng, 5, 3);
    CHECK_THROWS_AS(plan_folds(m, 10, 1), DataError);
  }
}

TEST_CASE("age scaler sees training folds only") {
  Rng rng(13);
  for (int trial = 0; trial < 50; ++trial) {
    const Manifest m = testutil::synthetic_manifest(rng, 25, 3);
    const FoldPlan plan = plan_folds(m, 5, rng.next_u64());
    for (int f = 0; f < 5; ++f) {
      const AgeScaler s = fit_fold_age_scaler(m, plan, f);
      std::set<std::string> test_patients;
      for (std::size_t i : plan.test_entries(m, f)) test_patients.insert(m.entries[i].patient_id);
      for (const auto& p : test_patients) {
        Manifest reduced = m;
        std::erase_if(reduced.entries, [&](const ManifestEntry& e) {
          return e.patient_id == p && plan.fold_of(e.specimen_id) == f;
        });
        CHECK(fit_fold_age_scaler(reduced, plan, f) == s);
      }
    }
  }
}

TEST_CASE("plot writers") {
  const RocCurve roc = roc_and_auc(std::vector<double>{0.9, 0.1, 0.5, 0.2}, std::vector<int>{1, 1, 0, 0});
  const std::string csv = roc_csv(roc);
  CHECK(csv.rfind("threshold,fpr,tpr\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == static_cast<std::ptrdiff_t>(roc.points.size() + 1));
  const auto m = confusion(std::vector<int>{0, 0, 1}, std::vector<int>{0, 1, 1}, 2);
  const std::array<std::string_view, 2> labels{"LOW", "HIGH"};
  CHECK(confusion_csv(m, labels) ==
        "actual\\predicted,LOW,HIGH\nLOW,1,1\nHIGH,0,1\n\nactual\\predicted,LOW,HIGH\nLOW,0.5,0.5\nHIGH,0,1\n");
  const std::string svg = roc_svg(roc, "ROC");
  CHECK(svg.find("<svg") != std::string::npos);
  CHECK(svg.find("polyline") != std::string::npos);
  CHECK(confusion_svg(m, labels, "c").find("</svg>") != std::string::npos);
  CHECK(format_number(0.1) == "0.1");
  CHECK(format_number(-2.0) == "-2");
}
