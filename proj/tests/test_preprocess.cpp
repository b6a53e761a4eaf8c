#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "cadx/common.hpp"
#include "cadx/preprocess.hpp"

using namespace cadx;

namespace {

Frame random_frame(int w, int h, Rng& rng) {
  Frame f(w, h);
  for (double& v : f.pixels) v = rng.uniform();
  return f;
}

/// Median of the edge-replicated 3x3 window, computed directly.
double brute_median(const Frame& f, int r, int c) {
  std::vector<double> w;
  for (int dr = -1; dr <= 1; ++dr)
    for (int dc = -1; dc <= 1; ++dc)
      w.push_back(f.at(std::clamp(r + dr, 0, f.height - 1), std::clamp(c + dc, 0, f.width - 1)));
  std::sort(w.begin(), w.end());
  return w[4];
}

}  // namespace

TEST_CASE("config validation") {
  CHECK_NOTHROW(PreprocConfig{}.validate());
  CHECK_NOTHROW(PreprocConfig::desk_scale().validate());
  PreprocConfig c;
  c.target_size = 700;
  CHECK_THROWS_AS(c.validate(), UsageError);
  c = PreprocConfig{};
  c.darkness_threshold = 0.95;
  CHECK_THROWS_AS(c.validate(), UsageError);
}

TEST_CASE("quality gate") {
  const PreprocConfig c;
  CHECK(quality_gate(Frame(8, 8, 1.0), c) == QualityVerdict::Saturated);
  CHECK(quality_gate(Frame(8, 8, 0.0), c) == QualityVerdict::Dark);
  CHECK(quality_gate(Frame(8, 8, 0.5), c) == QualityVerdict::Blurry);
  Rng rng(1);
  CHECK(quality_gate(random_frame(8, 8, rng), c) == QualityVerdict::Accept);
  CHECK(verdict_name(QualityVerdict::Saturated) == "saturated");
}

TEST_CASE("phantom frames pass the gate") {
  const PreprocConfig c = PreprocConfig::desk_scale();
  Rng rng(5);
  int accepted = 0, total = 0;
  for (int v = 0; v < 30; ++v) {
    const auto seed = rng.next_u64();
    for (int label = 0; label < 5; ++label)
      for (int f = 0; f < 4; ++f) {
        ++total;
        if (quality_gate(render_phantom_frame(static_cast<FineClass>(label), 80, 96, seed, f), c) ==
            QualityVerdict::Accept)
          ++accepted;
      }
  }
  CHECK(accepted >= 0.99 * total);
}

TEST_CASE("median filter") {
  SUBCASE("constant") {
    const Frame out = median_filter_3x3(Frame(5, 4, 0.3));
    for (double v : out.pixels) CHECK(v == 0.3);
  }
  SUBCASE("interior neighborhood") {
    Frame f(3, 3);
    const double vals[] = {1, 2, 3, 4, 100, 6, 7, 8, 9};
    for (int i = 0; i < 9; ++i) f.pixels[i] = vals[i] / 255.0;
    CHECK(median_filter_3x3(f).at(1, 1) == 6.0 / 255.0);
  }
  SUBCASE("impulse vanishes") {
    Frame f(9, 9, 0.0);
    f.at(4, 4) = 1.0;
    const Frame out = median_filter_3x3(f);
    for (int r = 2; r <= 6; ++r)
      for (int c = 2; c <= 6; ++c) {
        CHECK(brute_median(f, r, c) == 0.0);
        CHECK(out.at(r, c) == 0.0);
      }
  }
  SUBCASE("matches brute force with edge replication") {
    Rng rng(9);
    const Frame f = random_frame(7, 6, rng);
    const Frame out = median_filter_3x3(f);
    const auto [lo, hi] = std::minmax_element(f.pixels.begin(), f.pixels.end());
    for (int r = 0; r < f.height; ++r)
      for (int c = 0; c < f.width; ++c) {
        CHECK(out.at(r, c) == brute_median(f, r, c));
        CHECK(out.at(r, c) >= *lo);
        CHECK(out.at(r, c) <= *hi);
      }
  }
  CHECK_THROWS_AS(median_filter_3x3(Frame(2, 5)), DataError);
}

TEST_CASE("center crop") {
  SUBCASE("901x600 to 600") {
    Frame f(600, 901);
    for (int r = 0; r < 901; ++r)
      for (int c = 0; c < 600; ++c) f.at(r, c) = (r * 600 + c) / (901.0 * 600.0);
    const Frame out = center_crop(f, 600);
    REQUIRE(out.height == 600);
    const int off = (901 - 600) / 2;
    CHECK(off == 150);
    CHECK(out.at(0, 0) == f.at(150, 0));
    CHECK(out.at(599, 599) == f.at(749, 599));
  }
  SUBCASE("4x4 to 2") {
    Frame f(4, 4);
    for (int i = 0; i < 16; ++i) f.pixels[i] = i / 16.0;
    const Frame out = center_crop(f, 2);
    CHECK(out.at(0, 0) == f.at(1, 1));
    CHECK(out.at(1, 1) == f.at(2, 2));
    CHECK(center_crop(out, 2) == out);
    CHECK(center_crop(center_crop(f, 2), 2) == center_crop(f, 2));
  }
  CHECK_THROWS_AS(center_crop(Frame(3, 3), 4), DataError);
}

TEST_CASE("bilinear resize") {
  SUBCASE("constant") {
    for (double v : resize_bilinear(Frame(9, 9, 0.7), 4).pixels) CHECK(v == doctest::Approx(0.7).epsilon(1e-15));
    for (double v : resize_bilinear(Frame(4, 4, 0.7), 9).pixels) CHECK(v == doctest::Approx(0.7).epsilon(1e-15));
  }
  SUBCASE("identity at the same size") {
    Rng rng(2);
    const Frame f = random_frame(6, 6, rng);
    CHECK(resize_bilinear(f, 6) == f);
  }
  SUBCASE("2x2 to 1x1") {
    Frame f(2, 2);
    f.pixels = {0, 1, 0, 1};
    const Frame out = resize_bilinear(f, 1);
    REQUIRE(out.pixels.size() == 1);
    CHECK(out.pixels[0] == doctest::Approx(0.5).epsilon(1e-15));
  }
  SUBCASE("range is preserved") {
    Rng rng(4);
    const Frame f = random_frame(10, 10, rng);
    const auto [lo, hi] = std::minmax_element(f.pixels.begin(), f.pixels.end());
    for (double v : resize_bilinear(f, 7).pixels) {
      CHECK(v >= *lo - 1e-15);
      CHECK(v <= *hi + 1e-15);
    }
  }
  CHECK_THROWS_AS(resize_bilinear(Frame(3, 3), 0), DataError);
}

TEST_CASE("zero centering") {
  SUBCASE("two 1x2 frames") {
    Frame a(2, 1), b(2, 1);
    a.pixels = {0.0, 2.0 / 255};
    b.pixels = {4.0 / 255, 6.0 / 255};
    const std::vector<Frame> v{a, b};
    const ZeroCentered z = zero_center_volume(v);
    CHECK(z.mean == doctest::Approx(3.0 / 255).epsilon(1e-15));
    CHECK(z.frames[0].pixels[0] == doctest::Approx(-3.0 / 255).epsilon(1e-14));
    CHECK(z.frames[0].pixels[1] == doctest::Approx(-1.0 / 255).epsilon(1e-14));
    CHECK(z.frames[1].pixels[0] == doctest::Approx(1.0 / 255).epsilon(1e-14));
    CHECK(z.frames[1].pixels[1] == doctest::Approx(3.0 / 255).epsilon(1e-14));
  }
  SUBCASE("fixed point") {
    Frame a(2, 1);
    a.pixels = {-0.5, 0.5};
    const std::vector<Frame> v{a};
    CHECK(zero_center_volume(v).frames[0] == a);
  }
  SUBCASE("phantom volume") {
    std::vector<Frame> frames;
    for (int i = 0; i < 10; ++i) frames.push_back(render_phantom_frame(FineClass::Cancer, 80, 96, 77, i));
    const PreprocessedVolume pv = preprocess_volume(frames, PreprocConfig::desk_scale());
    double sum = 0.0;
    std::size_t n = 0;
    for (const Frame& f : pv.zero_centered())
      for (double v : f.pixels) {
        sum += v;
        ++n;
      }
    CHECK(std::abs(sum / static_cast<double>(n)) < 1e-12);
    CHECK(pv.frames.front().width == 64);
  }
  CHECK_THROWS_AS(zero_center_volume(std::vector<Frame>{}), DataError);
}

TEST_CASE("age scaler and HPV encoding") {
  const AgeScaler s{20, 70};
  CHECK(s.normalize(45) == 0.5);
  CHECK(s.normalize(20) == 0.0);
  CHECK(s.normalize(70) == 1.0);
  CHECK(s.normalize(10) == 0.0);
  CHECK(s.normalize(99) == 1.0);
  const AgeScaler flat{40, 40};
  CHECK(flat.normalize(12) == 0.5);
  CHECK(flat.normalize(40) == 0.5);
  const std::vector<int> ages{33, 20, 70, 41};
  CHECK(fit_age_scaler(ages) == s);
  CHECK_THROWS_AS(fit_age_scaler(std::vector<int>{}), DataError);
  CHECK(encode_hpv(false) == 0.0);
  CHECK(encode_hpv(true) == 1.0);
}

TEST_CASE("volume chain counts rejects") {
  std::vector<Frame> frames;
  for (int i = 0; i < 3; ++i) frames.push_back(render_phantom_frame(FineClass::Normal, 80, 96, 5, i));
  frames.push_back(Frame(80, 96, 1.0));
  frames.push_back(Frame(80, 96, 0.0));
  const PreprocessedVolume pv = preprocess_volume(frames, PreprocConfig::desk_scale());
  CHECK(pv.frames.size() == 3);
  CHECK(pv.rejects[static_cast<int>(QualityVerdict::Saturated)] == 1);
  CHECK(pv.rejects[static_cast<int>(QualityVerdict::Dark)] == 1);
  CHECK(pv.source_indices == std::vector<int>{0, 1, 2});
  const std::vector<Frame> bad{Frame(80, 96, 1.0)};
  CHECK_THROWS_AS(preprocess_volume(bad, PreprocConfig::desk_scale()), DataError);
}
