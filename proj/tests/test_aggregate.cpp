#include <doctest.h>

#include <algorithm>

#include "cadx/aggregate.hpp"
#include "cadx/common.hpp"

using namespace cadx;

namespace {

VolumeDistribution from_probs(std::array<double, 5> p) {
  VolumeDistribution d;
  d.probs = p;
  return d;
}

}  // namespace

TEST_CASE("fusion") {
  const std::vector<double> img{1, 2, 3, 4, 5};
  const auto v = fuse(img, 0.5, 1.0).values();
  CHECK(v.size() == 7);
  CHECK(std::vector<double>(v.begin(), v.end()) == std::vector<double>{1, 2, 3, 4, 5, 0.5, 1.0});
  CHECK_THROWS_AS(fuse(std::vector<double>{1, 2, 3}, 0.5, 1.0), DataError);
  CHECK_THROWS_AS(fuse(img, 1.5, 1.0), DataError);
}

TEST_CASE("volume distribution by counting") {
  const auto d = volume_distribution(std::vector<int>{3, 3, 4, 0});
  CHECK(d.probs == std::array<double, 5>{0.25, 0, 0, 0.5, 0.25});
  CHECK(d.exact_probability(FineClass::Hsil) == Rational{2, 4});
  const auto all2 = volume_distribution(std::vector<int>(7, 2));
  CHECK(all2.probs == std::array<double, 5>{0, 0, 1, 0, 0});

  std::vector<int> labels(600, 3);
  std::fill(labels.begin(), labels.begin() + 123, 0);
  const auto big = volume_distribution(labels);
  CHECK(big.exact_probability(FineClass::Normal) == Rational{123, 600});
  CHECK(big.probs[0] == 0.205);

  CHECK_THROWS_AS(volume_distribution(std::vector<int>{}), DataError);
  CHECK_THROWS_AS(volume_distribution(std::vector<int>{5}), DataError);
}

TEST_CASE("label order does not matter") {
  Rng rng(4);
  std::vector<int> labels;
  for (int i = 0; i < 50; ++i) labels.push_back(static_cast<int>(rng.below(5)));
  const auto a = volume_distribution(labels);
  rng.shuffle(labels.begin(), labels.end());
  const auto b = volume_distribution(labels);
  CHECK(a.counts == b.counts);
  CHECK(a.probs == b.probs);
}

TEST_CASE("general-class probability") {
  const auto d = from_probs({0.1, 0.2, 0.3, 0.25, 0.15});
  CHECK(general_probability(d, GeneralClass::Low) == doctest::Approx(0.6).epsilon(1e-15));
  CHECK(general_probability(d, GeneralClass::High) == doctest::Approx(0.4).epsilon(1e-15));
  CHECK(general_probability(from_probs({0, 0, 0, 0, 1}), GeneralClass::High) == 1.0);

  Rng rng(8);
  for (int t = 0; t < 1000; ++t) {
    std::vector<int> labels(1 + rng.below(40));
    for (int& l : labels) l = static_cast<int>(rng.below(5));
    const auto dist = volume_distribution(labels);
    const Rational lo = general_probability_exact(dist, GeneralClass::Low);
    const Rational hi = general_probability_exact(dist, GeneralClass::High);
    CHECK(lo.den == hi.den);
    CHECK(lo.num + hi.num == lo.den);
  }
}

TEST_CASE("decisions") {
  CHECK(volume_decision_fine(from_probs({0.25, 0, 0, 0.5, 0.25})) == FineClass::Hsil);
  CHECK(volume_decision_fine(from_probs({0, 0, 0.5, 0.5, 0})) == FineClass::Hsil);
  CHECK(volume_decision_fine(volume_distribution(std::vector<int>{0, 1, 1, 0})) == FineClass::Ectropion);
  BinaryDecisionConfig half;
  CHECK(volume_decision_binary(from_probs({0.5, 0, 0, 0.5, 0}), half) == GeneralClass::Low);
  CHECK(volume_decision_binary(from_probs({0.4, 0, 0, 0.6, 0}), half) == GeneralClass::High);
  BinaryDecisionConfig bad{1.5};
  CHECK_THROWS_AS(bad.validate(), UsageError);

  SUBCASE("raising the threshold never turns LOW into HIGH") {
    Rng rng(3);
    for (int t = 0; t < 200; ++t) {
      std::vector<int> labels(1 + rng.below(20));
      for (int& l : labels) l = static_cast<int>(rng.below(5));
      const auto d = volume_distribution(labels);
      GeneralClass prev = GeneralClass::High;
      for (double th = 0.0; th <= 1.0; th += 0.05) {
        const GeneralClass g = volume_decision_binary(d, BinaryDecisionConfig{th});
        if (prev == GeneralClass::Low) CHECK(g == GeneralClass::Low);
        prev = g;
      }
      // A strict majority on one high class implies a HIGH call at 0.5.
      const FineClass f = volume_decision_fine(d);
      if (general_class_of(f) == GeneralClass::High && d.probs[code(f)] > 0.5)
        CHECK(volume_decision_binary(d, half) == GeneralClass::High);
    }
  }
}

TEST_CASE("prediction record") {
  const auto d = volume_distribution(std::vector<int>{3, 3, 4, 0});
  const VolumePrediction p = predict_volume("V0001", d, BinaryDecisionConfig{});
  const auto j = to_json(p);
  CHECK(j["volume_id"] == "V0001");
  CHECK(j["fine_decision"] == 3);
  CHECK(j["p_high"] == 0.75);
  CHECK(j["binary_decision"] == "HIGH");
  CHECK(j["threshold"] == 0.5);
  CHECK(j["distribution"].size() == 5);
}
