#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "depthclass/binning.hpp"
#include "depthclass/rng.hpp"

using namespace depthclass;

TEST_CASE("log binning edges and centers") {
  const auto b = make_binning(2, 1.0, 100.0, BinSpace::Log);
  REQUIRE(b.edges.size() == 3);
  CHECK(b.edges[0] == Catch::Approx(1.0).margin(0));
  CHECK(b.edges[1] == Catch::Approx(10.0).epsilon(1e-12));
  CHECK(b.edges[2] == Catch::Approx(100.0).margin(0));
  CHECK(b.centers[0] == Catch::Approx(std::sqrt(10.0)).epsilon(1e-12));
  CHECK(b.centers[1] == Catch::Approx(10.0 * std::sqrt(10.0)).epsilon(1e-12));
}

TEST_CASE("linear binning single bin") {
  const auto b = make_binning(1, 2.0, 4.0, BinSpace::Linear);
  REQUIRE(b.edges.size() == 2);
  CHECK(b.edges[0] == 2.0);
  CHECK(b.edges[1] == 4.0);
  CHECK(b.centers[0] == Catch::Approx(3.0).epsilon(1e-15));
}

TEST_CASE("hundred log bins span the range uniformly in ln") {
  const auto b = make_binning(100, 0.7, 10.0, BinSpace::Log);
  REQUIRE(b.edges.size() == 101);
  const double step = (std::log(10.0) - std::log(0.7)) / 100.0;
  for (int k = 0; k + 1 <= 100; ++k) {
    CHECK(std::log(b.edges[k + 1]) - std::log(b.edges[k]) ==
          Catch::Approx(step).epsilon(1e-9));
  }
}

TEST_CASE("binning rejects bad parameters") {
  CHECK_THROWS_AS(make_binning(0, 1.0, 2.0, BinSpace::Log),
                  std::invalid_argument);
  CHECK_THROWS_AS(make_binning(5, 0.0, 2.0, BinSpace::Log),
                  std::invalid_argument);
  CHECK_THROWS_AS(make_binning(5, -1.0, 2.0, BinSpace::Linear),
                  std::invalid_argument);
  CHECK_THROWS_AS(make_binning(5, 2.0, 2.0, BinSpace::Log),
                  std::invalid_argument);
  CHECK_THROWS_AS(make_binning(5, 3.0, 2.0, BinSpace::Log),
                  std::invalid_argument);
}

TEST_CASE("depth_to_label basics") {
  const auto b = make_binning(2, 1.0, 100.0, BinSpace::Log);
  CHECK(depth_to_label(5.0, b) == 0);
  CHECK(depth_to_label(1.0, b) == 0);       // lower edge
  CHECK(depth_to_label(107.0, b) == 1);     // clamp above d_max
  CHECK(depth_to_label(0.5, b) == 0);           // clamp below d_min
  CHECK(depth_to_label(b.edges[1], b) == 1);    // interior edge belongs right
  const auto lin = make_binning(2, 2.0, 4.0, BinSpace::Linear);
  CHECK(depth_to_label(3.0, lin) == 1);         // exactly representable edge
  CHECK_THROWS_AS(depth_to_label(0.0, b), std::invalid_argument);
  CHECK_THROWS_AS(depth_to_label(-3.0, b), std::invalid_argument);
  CHECK_THROWS_AS(depth_to_label(std::nan(""), b), std::invalid_argument);
  CHECK_THROWS_AS(depth_to_label(INFINITY, b), std::invalid_argument);
}

TEST_CASE("label_to_depth returns bin centers") {
  const auto log2b = make_binning(2, 1.0, 100.0, BinSpace::Log);
  CHECK(label_to_depth(0, log2b) == Catch::Approx(3.16228).epsilon(1e-5));
  const auto lin1 = make_binning(1, 2.0, 4.0, BinSpace::Linear);
  CHECK(label_to_depth(0, lin1) == Catch::Approx(3.0));
  CHECK_THROWS_AS(label_to_depth(2, log2b), std::out_of_range);
  CHECK_THROWS_AS(label_to_depth(-1, log2b), std::out_of_range);
}

TEST_CASE("label round trip is the identity on labels") {
  for (BinSpace space : {BinSpace::Log, BinSpace::Linear}) {
    const auto b = make_binning(37, 0.7, 10.0, space);
    for (int k = 0; k < b.bin_count; ++k) {
      CHECK(depth_to_label(label_to_depth(k, b), b) == k);
    }
  }
}

TEST_CASE("quantization stays within half a bin in log space") {
  const auto b = make_binning(25, 0.7, 10.0, BinSpace::Log);
  const double bound = std::log(10.0 / 0.7) / (2.0 * 25);
  Rng rng(7);
  for (int i = 0; i < 2000; ++i) {
    const double d = rng.uniform(0.7, 10.0);
    const double q = label_to_depth(depth_to_label(d, b), b);
    CHECK(std::abs(std::log(d) - std::log(q)) <= bound * (1 + 1e-12));
  }
}

TEST_CASE("quantize_depthmap replaces valid pixels with centers") {
  const auto b = make_binning(4, 1.0, 16.0, BinSpace::Log);
  DepthMap gt(3, 2);
  for (int y = 0; y < 2; ++y)
    for (int x = 0; x < 3; ++x) gt.set(x, y, 1.0);
  gt.set_invalid(2, 1);
  const DepthMap q = quantize_depthmap(gt, b);
  for (std::size_t i = 0; i < q.size(); ++i) {
    if (q.is_valid(i)) CHECK(q.values[i] == b.centers[0]);
  }
  CHECK_FALSE(q.is_valid(q.index(2, 1)));
  CHECK(std::isnan(q.values[q.index(2, 1)]));
}

TEST_CASE("quantize_depthmap is idempotent") {
  const auto b = make_binning(13, 0.7, 10.0, BinSpace::Log);
  Rng rng(21);
  DepthMap gt(8, 6);
  for (int y = 0; y < 6; ++y)
    for (int x = 0; x < 8; ++x) gt.set(x, y, rng.uniform(0.7, 10.0));
  const DepthMap q1 = quantize_depthmap(gt, b);
  const DepthMap q2 = quantize_depthmap(q1, b);
  for (std::size_t i = 0; i < q1.size(); ++i)
    CHECK(q1.values[i] == q2.values[i]);
}

TEST_CASE("coarse linear quantization breaks the 1.25 ratio near zero") {
  // Ten linear bins starting near zero: 0.7 falls in the first bin with
  // center ~0.5, ratio 1.4.
  const auto b = make_binning(10, 1e-6, 10.0, BinSpace::Linear);
  const double q = label_to_depth(depth_to_label(0.7, b), b);
  CHECK(q == Catch::Approx(0.5).margin(1e-3));
  CHECK(0.7 / q > 1.25);
}

TEST_CASE("argmax_decode picks the max bin and decodes its center") {
  const auto b = make_binning(3, 1.0, 8.0, BinSpace::Log);
  ScoreVolume probs(1, 1, 3, VolumeKind::Probabilities);
  probs.data = {0.1, 0.7, 0.2};
  const auto [labels, depth] = argmax_decode(probs, b);
  CHECK(labels.labels[0] == 1);
  CHECK(depth.values[0] == b.centers[1]);
}

TEST_CASE("argmax_decode ties break to the lowest index") {
  const auto b = make_binning(4, 1.0, 16.0, BinSpace::Log);
  ScoreVolume probs(1, 1, 4, VolumeKind::Probabilities);
  probs.data = {0.25, 0.25, 0.25, 0.25};
  const auto [labels, depth] = argmax_decode(probs, b);
  CHECK(labels.labels[0] == 0);
}

TEST_CASE("argmax of logits equals argmax of softmax and ignores shifts") {
  const auto b = make_binning(5, 0.7, 10.0, BinSpace::Log);
  Rng rng(4);
  ScoreVolume logits(4, 3, 5, VolumeKind::Logits);
  for (double& v : logits.data) v = rng.uniform(-3.0, 3.0);

  const auto [l1, d1] = argmax_decode(logits, b);
  const auto [l2, d2] = argmax_decode(softmax_pixelwise(logits), b);
  ScoreVolume shifted = logits;
  for (std::size_t i = 0; i < shifted.pixel_count(); ++i) {
    const double c = rng.uniform(-10.0, 10.0);
    for (int bin = 0; bin < 5; ++bin) shifted.pixel(i)[bin] += c;
  }
  const auto [l3, d3] = argmax_decode(shifted, b);
  for (std::size_t i = 0; i < l1.size(); ++i) {
    CHECK(l1.labels[i] == l2.labels[i]);
    CHECK(l1.labels[i] == l3.labels[i]);
  }
}

TEST_CASE("argmax_decode rejects bin count mismatch") {
  const auto b = make_binning(3, 1.0, 8.0, BinSpace::Log);
  ScoreVolume probs(1, 1, 4, VolumeKind::Probabilities);
  probs.data = {0.25, 0.25, 0.25, 0.25};
  CHECK_THROWS_AS(argmax_decode(probs, b), std::invalid_argument);
}

TEST_CASE("confidence map") {
  ScoreVolume probs(1, 1, 100, VolumeKind::Probabilities);
  for (double& v : probs.data) v = 0.01;
  CHECK(confidence_map(probs)[0] == Catch::Approx(0.01));

  ScoreVolume onehot(1, 1, 4, VolumeKind::Probabilities);
  onehot.data = {0.0, 0.0, 1.0, 0.0};
  CHECK(confidence_map(onehot)[0] == 1.0);

  ScoreVolume mixed(1, 1, 3, VolumeKind::Probabilities);
  mixed.data = {0.5, 0.3, 0.2};
  CHECK(confidence_map(mixed)[0] == 0.5);

  ScoreVolume logits(1, 1, 3, VolumeKind::Logits);
  CHECK_THROWS_AS(confidence_map(logits), std::invalid_argument);
}

TEST_CASE("probability volume validation") {
  ScoreVolume probs(1, 1, 2, VolumeKind::Probabilities);
  probs.data = {0.6, 0.4};
  CHECK_NOTHROW(probs.check());
  probs.data = {0.6, 0.6};
  CHECK_THROWS_AS(probs.check(), std::invalid_argument);
  probs.data = {1.2, -0.2};
  CHECK_THROWS_AS(probs.check(), std::invalid_argument);
}
