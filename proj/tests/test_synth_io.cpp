#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <set>

#include "depthclass/io.hpp"
#include "depthclass/synth.hpp"

using namespace depthclass;

namespace {

std::filesystem::path temp_dir() {
  auto dir = std::filesystem::temp_directory_path() / "depthclass_test_io";
  std::filesystem::create_directories(dir);
  return dir;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("generation is a pure function of the spec") {
  SceneSpec spec;
  spec.seed = 99;
  spec.width = 24;
  spec.height = 18;
  spec.layout = SceneLayout::Blocks;
  spec.noise_sigma = 0.05;
  spec.missing_fraction = 0.08;

  const Sample a = generate(spec);
  const Sample b = generate(spec);
  CHECK(a.rgb.data == b.rgb.data);
  // Compare raw bytes: NaN at invalid pixels would defeat operator==.
  CHECK(std::memcmp(a.depth.values.data(), b.depth.values.data(),
                    a.depth.values.size() * sizeof(double)) == 0);
  CHECK(a.depth.valid == b.depth.valid);

  spec.seed = 100;
  const Sample c = generate(spec);
  CHECK(a.rgb.data != c.rgb.data);
}

TEST_CASE("gradient plane is linear in the row index") {
  SceneSpec spec;
  spec.seed = 1;
  spec.width = 5;
  spec.height = 11;
  spec.d_min = 2.0;
  spec.d_max = 7.0;
  spec.noise_sigma = 0.0;
  const Sample s = generate(spec);
  for (int y = 0; y < 11; ++y) {
    const double expected = 2.0 + (7.0 - 2.0) * y / 10.0;
    for (int x = 0; x < 5; ++x) {
      CHECK(s.depth.at(x, y) ==
            Catch::Approx(expected).margin(1e-6));  // binary32 rounding
    }
  }
}

TEST_CASE("red channel is a monotone cue of depth") {
  SceneSpec spec;
  spec.seed = 2;
  spec.width = 3;
  spec.height = 40;
  const Sample s = generate(spec);
  for (int y = 1; y < 40; ++y) {
    CHECK(s.rgb.at(0, 0, y) <= s.rgb.at(0, 0, y - 1));
  }
}

TEST_CASE("missing fraction is exact") {
  SceneSpec spec;
  spec.seed = 5;
  spec.width = 100;
  spec.height = 100;
  spec.missing_fraction = 0.1;
  const Sample s = generate(spec);
  std::size_t invalid = 0;
  for (auto v : s.depth.valid)
    if (!v) ++invalid;
  CHECK(invalid == 1000);
}

TEST_CASE("two-region layout produces exactly two depths") {
  SceneSpec spec;
  spec.seed = 7;
  spec.width = 30;
  spec.height = 10;
  spec.layout = SceneLayout::TwoRegions;
  const Sample s = generate(spec);
  std::set<double> depths(s.depth.values.begin(), s.depth.values.end());
  CHECK(depths.size() == 2);
  for (double d : depths) {
    CHECK(d > spec.d_min);
    CHECK(d < spec.d_max);
  }
}

TEST_CASE("scene spec validation") {
  SceneSpec spec;
  spec.width = 0;
  spec.height = 4;
  CHECK_THROWS_AS(generate(spec), std::invalid_argument);
  spec.width = 4;
  spec.missing_fraction = 1.0;
  CHECK_THROWS_AS(generate(spec), std::invalid_argument);
  spec.missing_fraction = 0.0;
  spec.d_min = -1.0;
  CHECK_THROWS_AS(generate(spec), std::invalid_argument);
}

TEST_CASE("DMAP round trip is bitwise, NaN marks invalid") {
  const auto dir = temp_dir();
  const auto path = (dir / "a.dmap").string();

  DepthMap m(3, 2);
  m.set(0, 0, 1.25);
  m.set(1, 0, 9.5);
  m.set(0, 1, 0.7001953125);  // exactly representable in binary32
  m.set(2, 1, 3.0);
  // (2,0) and (1,1) stay invalid

  write_dmap(path, m);
  const DepthMap r = read_dmap(path);
  CHECK(r.width == 3);
  CHECK(r.height == 2);
  CHECK(r.valid == m.valid);
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (m.is_valid(i)) {
      CHECK(r.values[i] == m.values[i]);
    } else {
      CHECK(std::isnan(r.values[i]));
    }
  }

  // Second write emits identical bytes.
  const auto path2 = (dir / "a2.dmap").string();
  write_dmap(path2, r);
  CHECK(slurp(path) == slurp(path2));
}

TEST_CASE("DMAP header and truncation errors") {
  const auto dir = temp_dir();
  const auto path = (dir / "bad.dmap").string();

  {
    std::ofstream out(path, std::ios::binary);
    out << "DMAP 2 2\n";
    for (int i = 0; i < 15; ++i) out.put('\0');  // one byte short
  }
  try {
    read_dmap(path);
    FAIL("expected truncation error");
  } catch (const io_error& e) {
    CHECK(std::string(e.what()).find("byte") != std::string::npos);
  }

  {
    std::ofstream out(path, std::ios::binary);
    out << "DMAP 2 2\n";
    for (int i = 0; i < 16; ++i) out.put('\0');
  }
  CHECK_NOTHROW(read_dmap(path));

  {
    std::ofstream out(path, std::ios::binary);
    out << "DMOP 2 2\n";
  }
  CHECK_THROWS_AS(read_dmap(path), io_error);

  CHECK_THROWS_AS(read_dmap((dir / "missing.dmap").string()), io_error);
}

TEST_CASE("SVOL round trip preserves kind and payload") {
  const auto dir = temp_dir();
  const auto path = (dir / "v.svol").string();

  ScoreVolume v(2, 2, 3, VolumeKind::Probabilities);
  float seed = 0.125f;
  for (double& x : v.data) {
    x = static_cast<double>(seed);
    seed += 0.0625f;
  }
  write_svol(path, v);
  const ScoreVolume r = read_svol(path);
  CHECK(r.kind == VolumeKind::Probabilities);
  CHECK(r.width == 2);
  CHECK(r.bin_count == 3);
  CHECK(r.data == v.data);

  v.kind = VolumeKind::Logits;
  write_svol(path, v);
  CHECK(read_svol(path).kind == VolumeKind::Logits);
}

TEST_CASE("PPM round trip and header tolerance") {
  const auto dir = temp_dir();
  const auto path = (dir / "img.ppm").string();

  Image img(4, 3);
  std::uint8_t v = 0;
  for (auto& b : img.data) b = v += 7;
  write_ppm(path, img);
  const Image r = read_ppm(path);
  CHECK(r.width == 4);
  CHECK(r.height == 3);
  CHECK(r.data == img.data);

  // Comment lines in the header are legal PPM.
  {
    std::ofstream out(path, std::ios::binary);
    out << "P6\n# comment\n2 1\n255\n";
    out.put('\1');
    out.put('\2');
    out.put('\3');
    out.put('\4');
    out.put('\5');
    out.put('\6');
  }
  const Image c = read_ppm(path);
  CHECK(c.width == 2);
  CHECK(c.at(2, 1, 0) == 6);

  {
    std::ofstream out(path, std::ios::binary);
    out << "P6\n2 1\n255\n";
    out.put('\1');
  }
  CHECK_THROWS_AS(read_ppm(path), io_error);
}

TEST_CASE("TNET round trip with metadata") {
  const auto dir = temp_dir();
  const auto path = (dir / "w.tnet").string();

  std::vector<NamedTensor> tensors;
  tensors.push_back({"stem.weight", {4, 3, 7, 7}, {}});
  tensors[0].data.resize(4 * 3 * 7 * 7);
  double x = -1.0;
  for (double& d : tensors[0].data) d = (x += 0.01937);
  tensors.push_back({"head.bias", {4}, {0.1, -0.2, 0.3, std::exp(1.0)}});

  write_tnet(path, tensors, {{"head", "classification"}, {"bins", "50"}});
  const TnetFile r = read_tnet(path);
  REQUIRE(r.tensors.size() == 2);
  CHECK(r.tensors[0].name == "stem.weight");
  CHECK(r.tensors[0].dims == std::vector<int>{4, 3, 7, 7});
  CHECK(r.tensors[0].data == tensors[0].data);  // f64 payload is exact
  CHECK(r.tensors[1].data == tensors[1].data);
  CHECK(r.meta_value("head") == "classification");
  CHECK(r.meta_value("bins") == "50");
  CHECK_THROWS_AS(r.meta_value("absent"), io_error);

  // Truncated payload names the byte position.
  const std::string bytes = slurp(path);
  const auto short_path = (dir / "short.tnet").string();
  {
    std::ofstream out(short_path, std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() - 3));
  }
  CHECK_THROWS_AS(read_tnet(short_path), io_error);
}

TEST_CASE("sample round trip through ppm+dmap is lossless") {
  const auto dir = temp_dir();
  SceneSpec spec;
  spec.seed = 31;
  spec.width = 16;
  spec.height = 12;
  spec.layout = SceneLayout::TwoRegions;
  spec.noise_sigma = 0.02;
  spec.missing_fraction = 0.05;
  const Sample s = generate(spec);

  const auto prefix = (dir / "sample0").string();
  write_sample(prefix, s);
  const Sample r = read_sample(prefix);
  CHECK(r.rgb.data == s.rgb.data);
  CHECK(r.depth.valid == s.depth.valid);
  for (std::size_t i = 0; i < s.depth.size(); ++i) {
    if (s.depth.is_valid(i)) CHECK(r.depth.values[i] == s.depth.values[i]);
  }
}

TEST_CASE("manifest round trip and malformed lines") {
  const auto dir = temp_dir();
  const auto path = (dir / "set.manifest").string();
  const std::vector<std::pair<std::string, std::string>> entries{
      {"a.ppm", "a.dmap"}, {"b.ppm", "b.dmap"}};
  write_manifest(path, entries);
  CHECK(read_manifest(path) == entries);

  {
    std::ofstream out(path);
    out << "only_one_field\n";
  }
  CHECK_THROWS_AS(read_manifest(path), io_error);
}
