#include <doctest.h>

#include <set>

#include "cadx/common.hpp"
#include "cadx/dataset.hpp"
#include "helpers.hpp"

using namespace cadx;

namespace {

std::string pgm(int w, int h, int maxval, std::string_view payload) {
  return "P5\n" + std::to_string(w) + " " + std::to_string(h) + "\n" + std::to_string(maxval) + "\n" +
         std::string(payload);
}

double band_mean(const Frame& f, int r0, int r1) {
  double s = 0.0;
  for (int r = r0; r < r1; ++r)
    for (int c = 0; c < f.width; ++c) s += f.at(r, c);
  return s / ((r1 - r0) * f.width);
}

}  // namespace

TEST_CASE("class taxonomy") {
  CHECK(fine_class_name(FineClass::Lsil) == "LSIL");
  CHECK(general_class_of(FineClass::Normal) == GeneralClass::Low);
  CHECK(general_class_of(FineClass::Ectropion) == GeneralClass::Low);
  CHECK(general_class_of(FineClass::Lsil) == GeneralClass::Low);
  CHECK(general_class_of(FineClass::Hsil) == GeneralClass::High);
  CHECK(general_class_of(FineClass::Cancer) == GeneralClass::High);
  std::set<int> all;
  for (auto g : {GeneralClass::Low, GeneralClass::High})
    for (auto c : subclasses(g)) CHECK(all.insert(code(c)).second);
  CHECK(all.size() == 5);
  CHECK_THROWS_AS(fine_class_from_code(5), DataError);
  CHECK_THROWS_AS(fine_class_from_code(-1), DataError);
}

TEST_CASE("PGM decoding scales bytes by 1/255") {
  const std::string bytes = pgm(2, 2, 255, std::string{'\0', '\xff', '\x80', '\x40'});
  const Frame f = decode_pgm(bytes);
  REQUIRE(f.width == 2);
  REQUIRE(f.height == 2);
  CHECK(f.pixels[0] == 0.0);
  CHECK(f.pixels[1] == 1.0);
  CHECK(f.pixels[2] == 128.0 / 255.0);
  CHECK(f.pixels[3] == 64.0 / 255.0);
}

TEST_CASE("PGM write of a read is byte-identical") {
  cadx::Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const int w = 1 + static_cast<int>(rng.below(9)), h = 1 + static_cast<int>(rng.below(9));
    std::string payload;
    for (int i = 0; i < w * h; ++i) payload.push_back(static_cast<char>(rng.below(256)));
    const std::string bytes = pgm(w, h, 255, payload);
    CHECK(encode_pgm(decode_pgm(bytes)) == bytes);
  }
}

TEST_CASE("PGM errors") {
  CHECK_THROWS_WITH_AS(decode_pgm(pgm(1, 1, 65535, "ab")), doctest::Contains("unsupported maxval"), DataError);
  CHECK_THROWS_WITH_AS(decode_pgm(pgm(2, 2, 255, "abc")), doctest::Contains("truncated PGM payload"), DataError);
  CHECK_THROWS_WITH_AS(decode_pgm("P2\n1 1\n255\n0"), doctest::Contains("malformed PGM header"), DataError);
  CHECK_THROWS_WITH_AS(decode_pgm("P5\nx 1\n255\n0"), doctest::Contains("malformed PGM header"), DataError);
  Frame bad(1, 1, 1.5);
  CHECK_THROWS_AS(encode_pgm(bad), DataError);
}

TEST_CASE("manifest loading and validation") {
  testutil::TempDir dir("manifest");
  Frame f(2, 2, 0.5);
  write_frame(f, dir / "a.pgm");
  write_frame(f, dir / "b.pgm");
  const std::string good = R"({"version":1,"entries":[
    {"volume_id":"V1","specimen_id":"S1","patient_id":"P1","label":0,"age":40,"hpv":false,"frames":["a.pgm"]},
    {"volume_id":"V2","specimen_id":"S2","patient_id":"P1","label":3,"age":40,"hpv":false,"frames":["b.pgm"]}]})";
  write_text_file(dir / "m.json", good);
  const Manifest m = load_manifest(dir / "m.json");
  CHECK(m.entries.size() == 2);
  CHECK(m.entries[1].label == FineClass::Hsil);

  SUBCASE("canonical round trip") {
    save_manifest(m, dir / "m2.json");
    const Manifest again = load_manifest(dir / "m2.json");
    CHECK(again.entries == m.entries);
    CHECK(serialize_manifest(again) == read_text_file(dir / "m2.json"));
  }
  SUBCASE("specimen under two patients") {
    const std::string text = R"({"version":1,"entries":[
      {"volume_id":"V1","specimen_id":"S1","patient_id":"P1","label":0,"age":40,"hpv":false,"frames":["a.pgm"]},
      {"volume_id":"V2","specimen_id":"S1","patient_id":"P2","label":0,"age":41,"hpv":false,"frames":["b.pgm"]}]})";
    CHECK_THROWS_WITH_AS(parse_manifest(text, dir.path()), doctest::Contains("specimen/patient conflict"), DataError);
  }
  SUBCASE("empty") {
    CHECK_THROWS_WITH_AS(parse_manifest(R"({"version":1,"entries":[]})", dir.path()),
                         doctest::Contains("empty manifest"), DataError);
  }
  SUBCASE("duplicate volume id") {
    const std::string text = R"({"version":1,"entries":[
      {"volume_id":"V1","specimen_id":"S1","patient_id":"P1","label":0,"age":40,"hpv":false,"frames":["a.pgm"]},
      {"volume_id":"V1","specimen_id":"S2","patient_id":"P1","label":0,"age":40,"hpv":false,"frames":["b.pgm"]}]})";
    CHECK_THROWS_WITH_AS(parse_manifest(text, dir.path()), doctest::Contains("duplicate volume_id"), DataError);
  }
  SUBCASE("missing frame file") {
    const std::string text = R"({"version":1,"entries":[
      {"volume_id":"V1","specimen_id":"S1","patient_id":"P1","label":0,"age":40,"hpv":false,"frames":["zz.pgm"]}]})";
    CHECK_THROWS_WITH_AS(parse_manifest(text, dir.path()), doctest::Contains("missing frame file"), DataError);
  }
  SUBCASE("parse error") { CHECK_THROWS_AS(parse_manifest("{", dir.path()), DataError); }
  SUBCASE("label out of range") {
    const std::string text = R"({"version":1,"entries":[
      {"volume_id":"V1","specimen_id":"S1","patient_id":"P1","label":7,"age":40,"hpv":false,"frames":["a.pgm"]}]})";
    CHECK_THROWS_AS(parse_manifest(text, dir.path()), DataError);
  }
}

TEST_CASE("phantom counting example") {
  testutil::TempDir dir("phantom_count");
  PhantomConfig c;
  c.patients_per_class = {1, 1, 1, 1, 1};
  c.specimens_per_patient = 1;
  c.volumes_per_specimen = 1;
  c.frames_per_volume = 4;
  const Manifest m = generate_phantom_dataset(c, 1, dir.path());
  CHECK(m.entries.size() == 5);
  std::size_t files = 0;
  for (const auto& e : std::filesystem::recursive_directory_iterator(dir / "frames"))
    if (e.is_regular_file()) ++files;
  CHECK(files == 20);
  CHECK_NOTHROW(load_manifest(dir / "manifest.json"));
}

TEST_CASE("phantom determinism and seed sensitivity") {
  testutil::TempDir a("phantom_a"), b("phantom_b"), other("phantom_c");
  PhantomConfig c;
  c.patients_per_class = {1, 1, 1, 1, 1};
  c.specimens_per_patient = 1;
  c.volumes_per_specimen = 2;
  c.frames_per_volume = 10;
  const Manifest ma = generate_phantom_dataset(c, 42, a.path());
  generate_phantom_dataset(c, 42, b.path());
  generate_phantom_dataset(c, 43, other.path());
  CHECK(read_text_file(a / "manifest.json") == read_text_file(b / "manifest.json"));
  int identical = 0, differing = 0, total = 0;
  for (const auto& e : ma.entries)
    for (const auto& f : e.frames) {
      const std::string x = read_text_file(a.path() / f);
      CHECK(x == read_text_file(b.path() / f));
      ++total;
      if (x == read_text_file(other.path() / f)) ++identical;
      else ++differing;
    }
  CHECK(differing >= 0.99 * total);
  CHECK(identical + differing == total);
}

TEST_CASE("phantom config errors") {
  testutil::TempDir dir("phantom_err");
  PhantomConfig c;
  c.patients_per_class = {1, 0, 1, 1, 1};
  CHECK_THROWS_AS(generate_phantom_dataset(c, 1, dir.path()), DataError);
  c.patients_per_class = {1, 1, 1, 1, 1};
  c.frame_width = 15;
  CHECK_THROWS_AS(generate_phantom_dataset(c, 1, dir.path()), DataError);
}

TEST_CASE("phantom frames are valid and class 0 has a bright upper band") {
  cadx::Rng rng(11);
  for (int v = 0; v < 40; ++v) {
    const auto seed = rng.next_u64();
    for (int label = 0; label < 5; ++label) {
      const Frame f = render_phantom_frame(static_cast<FineClass>(label), 80, 96, seed, v);
      for (double p : f.pixels) REQUIRE((p >= 0.0 && p <= 1.0));
      if (label == 0) {
        const int third = f.height / 3;
        CHECK(band_mean(f, 0, third) - band_mean(f, f.height - third, f.height) > 0.15);
      }
    }
  }
}
