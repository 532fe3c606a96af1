#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <string_view>

#include "sgen/data.hpp"
#include "sgen/errors.hpp"
#include "test_support.hpp"

using namespace sgen;
using namespace sgen::testing;
namespace fs = std::filesystem;

namespace {

std::vector<std::uint8_t> bytes(std::string_view s) { return {s.begin(), s.end()}; }

fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("sgen_test_data_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// Pearson chi-square of observed counts against a uniform expectation.
double chi_square_uniform(const std::vector<double>& counts) {
  double total = 0.0;
  for (double c : counts) total += c;
  const double expected = total / static_cast<double>(counts.size());
  double chi = 0.0;
  for (double c : counts) chi += (c - expected) * (c - expected) / expected;
  return chi;
}

}  // namespace

TEST_CASE("scale sampling") {
  CHECK(full_scales() == ScaleSet{{128, 96}, {144, 112}, {160, 128}, {176, 144}, {192, 160}, {208, 176}});
  CHECK(sample_scales({128, 96}, {208, 176}, 2, 16) == ScaleSet{{128, 96}, {208, 176}});
  CHECK(sample_scales({48, 32}, {80, 64}, 3, 16) == desk_scales());
  CHECK(desk_scales() == ScaleSet{{48, 32}, {64, 48}, {80, 64}});
  CHECK_THROWS_AS(sample_scales({48, 32}, {80, 64}, 1, 16), ConfigError);
  CHECK_THROWS_AS(sample_scales({80, 64}, {48, 32}, 3, 16), ConfigError);
  CHECK_THROWS_AS(sample_scales({50, 32}, {80, 64}, 3, 16), ConfigError);
  for (const Scale& s : full_scales()) {
    CHECK(s.height % 16 == 0);
    CHECK(s.width % 16 == 0);
  }
}

TEST_CASE("scale lists parse and format") {
  CHECK(parse_scales("48x32, 64x48,80x64") == desk_scales());
  CHECK(format_scales(desk_scales()) == "48x32,64x48,80x64");
  CHECK(parse_scales(format_scales(full_scales())) == full_scales());
  CHECK_THROWS_AS(parse_scales("48x"), ConfigError);
  CHECK_THROWS_AS(parse_scales("48*32"), ConfigError);
  CHECK_THROWS_AS(parse_scales(""), ConfigError);
  CHECK_NOTHROW(check_scales(desk_scales(), 16));
  CHECK_THROWS_AS(check_scales({{48, 40}}, 16), ConfigError);
}

TEST_CASE("degradation") {
  std::mt19937_64 rng(1);
  DegradationSpec none;
  none.noise = NoiseKind::none;

  SUBCASE("constant images survive noiseless degradation") {
    const Tensor c(Shape{2, 1, 16, 8}, 0.25);
    CHECK((degrade(c, none, rng).data() == 0.25).all());
  }
  SUBCASE("factor 1 without noise is the identity") {
    none.down_factor = 1;
    const Tensor x = random_tensor({3, 3, 16, 16}, rng);
    CHECK((degrade(x, none, rng).data() == x.data()).all());
  }
  SUBCASE("factor 4 output is constant on 4x4 blocks and stays in range") {
    DegradationSpec spec;  // gaussian sigma 30, factor 4
    const Tensor x = random_tensor({2, 1, 32, 48}, rng);
    const Tensor y = degrade(x, spec, rng);
    CHECK(y.shape() == x.shape());
    CHECK(y.data().maxCoeff() <= 1.0);
    CHECK(y.data().minCoeff() >= -1.0);
    bool blocky = true;
    for (int n = 0; n < 2; ++n)
      for (int i = 0; i < 32; ++i)
        for (int j = 0; j < 48; ++j)
          blocky = blocky && y.at(n, 0, i, j) == y.at(n, 0, i / 4 * 4, j / 4 * 4);
    CHECK(blocky);
  }
  SUBCASE("box average is the block mean") {
    const Tensor x(Shape{1, 1, 2, 2}, {0.1, 0.2, 0.3, 0.6});
    none.down_factor = 2;
    CHECK(degrade(x, none, rng)[0] == doctest::Approx(0.3).epsilon(1e-15));
  }
  SUBCASE("indivisible sizes and bad specs are rejected") {
    CHECK_THROWS_AS(degrade(Tensor({1, 1, 18, 16}), DegradationSpec{}, rng), ConfigError);
    DegradationSpec bad;
    bad.down_factor = 0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = {};
    bad.sigma = -1;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
  }
}

TEST_CASE("noise statistics") {
  std::mt19937_64 rng(2024);
  DegradationSpec spec;
  SUBCASE("gaussian sigma 30 over one million samples") {
    const Eigen::ArrayXd n = sample_noise(spec, rng, 1'000'000);
    const double mean = n.mean();
    const double sd = std::sqrt((n - mean).square().sum() / (n.size() - 1));
    CHECK(mean >= -0.1);
    CHECK(mean <= 0.1);
    CHECK(sd >= 29.7);
    CHECK(sd <= 30.3);
  }
  SUBCASE("degrade applies the noise in 8-bit units") {
    spec.down_factor = 1;
    const Tensor gray(Shape{4, 1, 250, 250}, 0.0);
    const Eigen::ArrayXd n = degrade(gray, spec, rng).data() * 127.5;
    const double sd = std::sqrt((n - n.mean()).square().mean());
    CHECK(sd == doctest::Approx(30.0).epsilon(0.01));
  }
  SUBCASE("uniform noise covers its range") {
    spec.noise = NoiseKind::uniform;
    const Eigen::ArrayXd n = sample_noise(spec, rng, 200'000);
    CHECK(n.minCoeff() >= 0.0);
    CHECK(n.maxCoeff() <= 30.0);
    CHECK(n.mean() == doctest::Approx(15.0).epsilon(0.01));
  }
  SUBCASE("noise signs are independent across pixels and batch items") {
    spec.down_factor = 1;
    const Tensor gray(Shape{2, 1, 200, 200}, 0.0);
    const Tensor y = degrade(gray, spec, rng);
    std::vector<double> neighbours(4, 0.0), items(4, 0.0);
    for (int i = 0; i < 200; ++i)
      for (int j = 0; j + 1 < 200; j += 2)
        neighbours[(y.at(0, 0, i, j) > 0) * 2 + (y.at(0, 0, i, j + 1) > 0)] += 1;
    for (int i = 0; i < 200; ++i)
      for (int j = 0; j < 200; ++j) items[(y.at(0, 0, i, j) > 0) * 2 + (y.at(1, 0, i, j) > 0)] += 1;
    // 3 degrees of freedom, p = 0.001
    CHECK(chi_square_uniform(neighbours) < 16.27);
    CHECK(chi_square_uniform(items) < 16.27);
  }
  CHECK(parse_noise("uniform") == NoiseKind::uniform);
  CHECK_THROWS_AS(parse_noise("poisson"), ConfigError);
}

TEST_CASE("procedural faces") {
  CHECK(synth_face(42, 48, 32) == synth_face(42, 48, 32));
  CHECK_THROWS_AS(synth_face(1, 15, 32), ConfigError);
  std::set<std::size_t> hashes;
  double lowest = 255, highest = 0;
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    const Image8 img = synth_face(seed, 48, 32);
    hashes.insert(std::hash<std::string_view>{}(
        std::string_view(reinterpret_cast<const char*>(img.pixels.data()), img.pixels.size())));
    double mean = 0.0;
    for (auto p : img.pixels) mean += p;
    mean /= static_cast<double>(img.pixels.size());
    lowest = std::min(lowest, mean);
    highest = std::max(highest, mean);
  }
  MESSAGE("distinct faces " << hashes.size() << ", mean intensity range [" << lowest << ", "
                            << highest << "]");
  CHECK(hashes.size() >= 990);
  CHECK(lowest >= 64.0);
  CHECK(highest <= 192.0);
}

TEST_CASE("netpbm decoding") {
  SUBCASE("minimal P5") {
    const Image8 img = decode_netpbm(bytes("P5\n2 2\n255\n\x01\x02\x03\x04"));
    CHECK(img.channels == 1);
    CHECK(img.height == 2);
    CHECK(img.width == 2);
    CHECK(img.at(1, 0) == 3);
  }
  SUBCASE("comments and P6") {
    const Image8 img = decode_netpbm(bytes("P6 # colour\n1 1 # one pixel\n255\n\x0a\x14\x1e"));
    CHECK(img.channels == 3);
    CHECK(img.at(0, 0, 2) == 30);
  }
  SUBCASE("16-bit maxval is rejected") {
    CHECK_THROWS_AS(decode_netpbm(bytes("P5\n1 1\n65535\n\x00\x01")), ParseError);
  }
  SUBCASE("truncation reports the byte offset") {
    try {
      decode_netpbm(bytes("P5\n2 2\n255\n\x01\x02"));
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      CHECK(e.offset() == 13);  // end of the available pixel bytes
      CHECK(std::string(e.what()).find("byte") != std::string::npos);
    }
  }
  SUBCASE("bad magic and header") {
    CHECK_THROWS_AS(decode_netpbm(bytes("P2\n1 1\n255\n1")), ParseError);
    CHECK_THROWS_AS(decode_netpbm(bytes("P5\nx 1\n255\n\x01")), ParseError);
    CHECK_THROWS_AS(decode_netpbm(bytes("")), ParseError);
  }
}

TEST_CASE("image files round-trip bit-identically") {
  const fs::path dir = scratch_dir("roundtrip");
  std::mt19937_64 rng(9);
  std::uniform_int_distribution<int> byte(0, 255);
  for (int c : {1, 3}) {
    Image8 img(c, 13, 17);
    for (auto& p : img.pixels) p = static_cast<std::uint8_t>(byte(rng));
    const fs::path path = dir / (c == 1 ? "a.pgm" : "a.ppm");
    save_image(img, path);
    CHECK(load_image(path) == img);
    CHECK(to_image8(to_tensor(img)) == img);
  }
  CHECK_THROWS_AS(load_image(dir / "missing.pgm"), IoError);
}

TEST_CASE("normalization maps 8-bit values onto [-1, 1]") {
  Image8 img(1, 1, 3);
  img.pixels = {0, 51, 255};
  const Tensor t = to_tensor(img);
  CHECK(t[0] == -1.0);
  CHECK(t[1] == doctest::Approx(51 / 127.5 - 1.0).epsilon(1e-15));
  CHECK(t[2] == 1.0);
  const Tensor out_of_range(Shape{1, 1, 1, 2}, {-3.0, 2.0});
  CHECK(to_image8(out_of_range).pixels == std::vector<std::uint8_t>{0, 255});
}

TEST_CASE("batches") {
  const Corpus corpus = Corpus::synthetic(20, 100);
  DegradationSpec spec;
  SUBCASE("single pair at the requested scale") {
    std::mt19937_64 rng(1);
    const ImagePair p = make_batch(corpus, {48, 32}, 1, spec, rng);
    CHECK(p.source.shape() == Shape{1, 1, 48, 32});
    CHECK(p.target.shape() == Shape{1, 1, 48, 32});
    CHECK(p.scale == Scale{48, 32});
    CHECK(p.source.all_finite());
  }
  SUBCASE("fixed seeds give identical batches") {
    std::mt19937_64 a(5), b(5);
    const ImagePair x = make_batch(corpus, {64, 48}, 4, spec, a);
    const ImagePair y = make_batch(corpus, {64, 48}, 4, spec, b);
    CHECK((x.source.data() == y.source.data()).all());
    CHECK((x.target.data() == y.target.data()).all());
  }
  SUBCASE("identity degradation gives source equal to target") {
    spec.noise = NoiseKind::none;
    spec.down_factor = 1;
    std::mt19937_64 rng(3);
    const ImagePair p = make_batch(corpus, {48, 32}, 3, spec, rng);
    CHECK((p.source.data() == p.target.data()).all());
  }
  SUBCASE("explicit indices select corpus items") {
    std::mt19937_64 rng(3);
    const ImagePair p = make_batch(corpus, {48, 32}, std::vector<std::size_t>{7}, spec, rng);
    CHECK((p.target.data() == corpus.image(7, {48, 32}).data()).all());
  }
}

TEST_CASE("corpora") {
  SUBCASE("synthetic slices keep their seeds") {
    const Corpus all = Corpus::synthetic(10, 0);
    const Corpus tail = all.slice(6, 4);
    CHECK(tail.size() == 4);
    CHECK((tail.image(0, {48, 32}).data() == all.image(6, {48, 32}).data()).all());
    CHECK_THROWS_AS(all.slice(8, 3), ConfigError);
    CHECK(Corpus::synthetic(2, 0, 3).image(0, {16, 16}).shape() == Shape{1, 3, 16, 16});
  }
  SUBCASE("directory corpora are sorted and resized") {
    const fs::path dir = scratch_dir("corpus");
    for (int i = 0; i < 5; ++i) {
      Image8 img(1, 20, 20);
      std::fill(img.pixels.begin(), img.pixels.end(), static_cast<std::uint8_t>(50 * i));
      save_image(img, dir / ("face" + std::to_string(4 - i) + ".pgm"));
    }
    std::ofstream(dir / "notes.txt") << "ignored";
    const Corpus c = Corpus::directory(dir);
    REQUIRE(c.size() == 5);
    const Tensor first = c.image(0, {16, 32});
    CHECK(first.shape() == Shape{1, 1, 16, 32});
    CHECK((first.data() == 200 / 127.5 - 1.0).all());  // face0 holds value 200
    const CorpusSplit split = split_corpus(c, 0.6, 0.2);
    CHECK(split.train.size() == 3);
    CHECK(split.val.size() == 1);
    CHECK(split.test.size() == 1);
    CHECK_THROWS_AS(split_corpus(c, 0.9, 0.2), ConfigError);
    CHECK_THROWS_AS(Corpus::directory(dir / "absent"), IoError);
  }
}

TEST_CASE("padding and cropping") {
  const Tensor t(Shape{1, 1, 2, 2}, {1, 2, 3, 4});
  const Tensor p = pad_to(t, 3, 4);
  CHECK(p.shape() == Shape{1, 1, 3, 4});
  CHECK(p.at(0, 0, 0, 3) == 2);
  CHECK(p.at(0, 0, 2, 0) == 3);
  CHECK(p.at(0, 0, 2, 3) == 4);
  CHECK((crop_to(p, 2, 2).data() == t.data()).all());
  CHECK_THROWS_AS(pad_to(t, 1, 2), ConfigError);
  CHECK_THROWS_AS(crop_to(t, 3, 2), ConfigError);
}
