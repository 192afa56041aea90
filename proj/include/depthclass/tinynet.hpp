#pragma once

#include <array>
#include <cmath>
#include <memory>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "depthclass/binning.hpp"
#include "depthclass/errors.hpp"
#include "depthclass/image.hpp"
#include "depthclass/infogain.hpp"
#include "depthclass/io.hpp"
#include "depthclass/layers.hpp"
#include "depthclass/rng.hpp"
#include "depthclass/synth.hpp"
#include "depthclass/tensor.hpp"

namespace depthclass {

enum class ShortcutKind { Identity, Projection };

/// Residual unit: y = F(x) + shortcut(x) with no activation after the
/// addition, so a zero-weight residual branch is exactly the identity (or
/// exactly the projection). F applies scale-bias, relu and a 3x3 conv twice;
/// the first conv carries the stride. The projection shortcut is a strided
/// 1x1 conv.
class ResidualBlock {
 public:
  ResidualBlock(const std::string& name, int in_ch, int out_ch, int stride,
                ShortcutKind kind)
      : kind_(kind),
        pre1_(name + ".pre1", in_ch),
        conv1_(name + ".conv1", in_ch, out_ch, 3, stride, 1),
        pre2_(name + ".pre2", out_ch),
        conv2_(name + ".conv2", out_ch, out_ch, 3, 1, 1),
        proj_(name + ".proj", in_ch, out_ch, 1, stride, 0) {
    if (kind == ShortcutKind::Identity && (in_ch != out_ch || stride != 1))
      throw std::invalid_argument(
          name + ": identity shortcut needs equal channels and stride 1");
  }

  void init(Rng& rng) {
    conv1_.init(rng);
    conv2_.init(rng);
    if (kind_ == ShortcutKind::Projection) proj_.init(rng);
  }

  Tensor4 forward(const Tensor4& x) {
    Tensor4 t = conv1_.forward(relu1_.forward(pre1_.forward(x)));
    t = conv2_.forward(relu2_.forward(pre2_.forward(t)));
    const Tensor4 s =
        kind_ == ShortcutKind::Identity ? x : proj_.forward(x);
    if (!t.same_shape(s))
      throw std::invalid_argument("ResidualBlock: branch shape mismatch");
    for (std::size_t i = 0; i < t.size(); ++i) t.data[i] += s.data[i];
    return t;
  }

  Tensor4 backward(const Tensor4& dy) {
    Tensor4 d = conv2_.backward(dy);
    d = pre2_.backward(relu2_.backward(d));
    d = conv1_.backward(d);
    d = pre1_.backward(relu1_.backward(d));
    const Tensor4 ds =
        kind_ == ShortcutKind::Identity ? dy : proj_.backward(dy);
    for (std::size_t i = 0; i < d.size(); ++i) d.data[i] += ds.data[i];
    return d;
  }

  void collect(std::vector<ParamRef>& out) {
    pre1_.collect(out);
    conv1_.collect(out);
    pre2_.collect(out);
    conv2_.collect(out);
    if (kind_ == ShortcutKind::Projection) proj_.collect(out);
  }

  Conv2d& residual_conv1() { return conv1_; }
  Conv2d& residual_conv2() { return conv2_; }
  Conv2d& projection() { return proj_; }

 private:
  ShortcutKind kind_;
  ScaleBias pre1_;
  Conv2d conv1_;
  ScaleBias pre2_;
  Conv2d conv2_;
  Conv2d proj_;
  Relu relu1_, relu2_;
};

enum class HeadKind { Classification, Regression };

/// Topology: 7x7/2 stem conv, 3x3/2 max pool, four residual stages (each one
/// projection block then identity blocks; only stage 2 strides), so the
/// trunk output is 1/8 resolution. The head is three convolutions; its last
/// layer emits one channel per depth bin (classification) or a single
/// log-depth channel (regression). Both heads share the identical trunk.
struct NetworkSpec {
  int stem_channels = 16;
  std::array<int, 4> stage_channels{16, 24, 32, 48};
  std::array<int, 4> identity_blocks{1, 1, 1, 1};
  int head_channels1 = 64;
  int head_channels2 = 32;
  HeadKind head = HeadKind::Classification;
  int bins = 50;

  static constexpr int downsample_factor = 8;

  int output_channels() const {
    return head == HeadKind::Classification ? bins : 1;
  }
  void check() const {
    if (stem_channels <= 0 || head_channels1 <= 0 || head_channels2 <= 0)
      throw std::invalid_argument("NetworkSpec: bad channel counts");
    for (int c : stage_channels)
      if (c <= 0) throw std::invalid_argument("NetworkSpec: bad stage channels");
    for (int b : identity_blocks)
      if (b < 0) throw std::invalid_argument("NetworkSpec: bad block counts");
    if (head == HeadKind::Classification && bins < 1)
      throw std::invalid_argument("NetworkSpec: bins must be >= 1");
  }
};

class TinyNet {
 public:
  TinyNet(const NetworkSpec& spec, std::uint64_t seed)
      : spec_(spec),
        stem_("stem", 3, spec.stem_channels, 7, 2, 3),
        pool_(3, 2, 1),
        head_conv1_("head.conv1", spec.stage_channels[3], spec.head_channels1,
                    3, 1, 1),
        head_sb1_("head.sb1", spec.head_channels1),
        head_conv2_("head.conv2", spec.head_channels1, spec.head_channels2, 1,
                    1, 0),
        head_sb2_("head.sb2", spec.head_channels2),
        head_conv3_("head.conv3", spec.head_channels2, spec.output_channels(),
                    1, 1, 0) {
    spec.check();
    int in_ch = spec.stem_channels;
    for (int s = 0; s < 4; ++s) {
      const int out_ch = spec.stage_channels[s];
      const int stride = s == 1 ? 2 : 1;
      blocks_.push_back(std::make_unique<ResidualBlock>(
          "stage" + std::to_string(s + 1) + ".proj", in_ch, out_ch, stride,
          ShortcutKind::Projection));
      for (int b = 0; b < spec.identity_blocks[s]; ++b) {
        blocks_.push_back(std::make_unique<ResidualBlock>(
            "stage" + std::to_string(s + 1) + ".id" + std::to_string(b + 1),
            out_ch, out_ch, 1, ShortcutKind::Identity));
      }
      in_ch = out_ch;
    }
    Rng rng(seed);
    stem_.init(rng);
    for (auto& b : blocks_) b->init(rng);
    head_conv1_.init(rng);
    head_conv2_.init(rng);
    head_conv3_.init(rng);
  }

  const NetworkSpec& spec() const { return spec_; }

  /// Trunk + head at 1/8 resolution. Input must already be padded to a
  /// multiple of the downsample factor.
  Tensor4 forward_raw(const Tensor4& x) {
    Tensor4 t = stem_.forward(x);
    t.require_finite("stem");
    t = pool_.forward(t);
    int idx = 0;
    for (auto& b : blocks_) {
      t = b->forward(t);
      t.require_finite("block " + std::to_string(idx++));
    }
    t = head_relu1_.forward(head_sb1_.forward(head_conv1_.forward(t)));
    t = head_relu2_.forward(head_sb2_.forward(head_conv2_.forward(t)));
    t = head_conv3_.forward(t);
    t.require_finite("head");
    return t;
  }

  void backward_raw(const Tensor4& dy) {
    Tensor4 d = head_conv3_.backward(dy);
    d = head_conv2_.backward(head_sb2_.backward(head_relu2_.backward(d)));
    d = head_conv1_.backward(head_sb1_.backward(head_relu1_.backward(d)));
    for (auto it = blocks_.rbegin(); it != blocks_.rend(); ++it)
      d = (*it)->backward(d);
    d = pool_.backward(d);
    stem_.backward(d);
  }

  std::vector<ParamRef> params() {
    std::vector<ParamRef> out;
    stem_.collect(out);
    for (auto& b : blocks_) b->collect(out);
    head_conv1_.collect(out);
    head_sb1_.collect(out);
    head_conv2_.collect(out);
    head_sb2_.collect(out);
    head_conv3_.collect(out);
    return out;
  }

  void zero_grads() {
    for (auto& p : params()) std::fill(p.grad->begin(), p.grad->end(), 0.0);
  }

  Conv2d& head_output_conv() { return head_conv3_; }
  ResidualBlock& block(std::size_t i) { return *blocks_.at(i); }

 private:
  NetworkSpec spec_;
  Conv2d stem_;
  MaxPool pool_;
  std::vector<std::unique_ptr<ResidualBlock>> blocks_;
  Conv2d head_conv1_;
  ScaleBias head_sb1_;
  Relu head_relu1_;
  Conv2d head_conv2_;
  ScaleBias head_sb2_;
  Relu head_relu2_;
  Conv2d head_conv3_;
};

namespace net_detail {

inline Tensor4 image_to_tensor(const Image& img) {
  Tensor4 x(1, 3, img.height, img.width);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < img.height; ++y)
      for (int xx = 0; xx < img.width; ++xx)
        x.at(0, c, y, xx) = img.at(c, xx, y) / 255.0;
  return x;
}

inline Tensor4 pad_to_multiple(const Tensor4& x, int multiple) {
  const int ph = (multiple - x.h % multiple) % multiple;
  const int pw = (multiple - x.w % multiple) % multiple;
  if (ph == 0 && pw == 0) return x;
  Tensor4 y(x.n, x.c, x.h + ph, x.w + pw);
  for (int n = 0; n < x.n; ++n)
    for (int c = 0; c < x.c; ++c)
      for (int iy = 0; iy < x.h; ++iy)
        for (int ix = 0; ix < x.w; ++ix)
          y.at(n, c, iy, ix) = x.at(n, c, iy, ix);
  return y;
}

/// Full-resolution scores for a padded batch, cropped back to (h, w).
inline Tensor4 upsample_and_crop(const Tensor4& coarse, int h, int w) {
  Tensor4 up = bilinear_upsample(coarse, NetworkSpec::downsample_factor);
  if (up.h == h && up.w == w) return up;
  Tensor4 out(up.n, up.c, h, w);
  for (int n = 0; n < up.n; ++n)
    for (int c = 0; c < up.c; ++c)
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) out.at(n, c, y, x) = up.at(n, c, y, x);
  return out;
}

inline Tensor4 uncrop_and_downsample_grad(const Tensor4& dfull, int coarse_h,
                                          int coarse_w) {
  const int factor = NetworkSpec::downsample_factor;
  const int uh = coarse_h * factor, uw = coarse_w * factor;
  if (dfull.h == uh && dfull.w == uw)
    return bilinear_upsample_backward(dfull, coarse_h, coarse_w, factor);
  Tensor4 padded(dfull.n, dfull.c, uh, uw);
  for (int n = 0; n < dfull.n; ++n)
    for (int c = 0; c < dfull.c; ++c)
      for (int y = 0; y < dfull.h; ++y)
        for (int x = 0; x < dfull.w; ++x)
          padded.at(n, c, y, x) = dfull.at(n, c, y, x);
  return bilinear_upsample_backward(padded, coarse_h, coarse_w, factor);
}

}  // namespace net_detail

/// Single-image classification inference: full-resolution logits.
inline ScoreVolume forward_scores(TinyNet& net, const Image& img) {
  if (net.spec().head != HeadKind::Classification)
    throw std::invalid_argument("forward_scores: network has no bins");
  const Tensor4 x = net_detail::pad_to_multiple(
      net_detail::image_to_tensor(img), NetworkSpec::downsample_factor);
  const Tensor4 coarse = net.forward_raw(x);
  const Tensor4 full =
      net_detail::upsample_and_crop(coarse, img.height, img.width);
  ScoreVolume out(img.width, img.height, net.spec().bins, VolumeKind::Logits);
  for (int y = 0; y < img.height; ++y)
    for (int xx = 0; xx < img.width; ++xx)
      for (int b = 0; b < net.spec().bins; ++b)
        out.at(xx, y, b) = full.at(0, b, y, xx);
  return out;
}

/// Single-image regression inference: the head emits log-depth, decoded by
/// exponentiation.
inline DepthMap forward_depth(TinyNet& net, const Image& img) {
  if (net.spec().head != HeadKind::Regression)
    throw std::invalid_argument("forward_depth: network has no depth channel");
  const Tensor4 x = net_detail::pad_to_multiple(
      net_detail::image_to_tensor(img), NetworkSpec::downsample_factor);
  const Tensor4 coarse = net.forward_raw(x);
  const Tensor4 full =
      net_detail::upsample_and_crop(coarse, img.height, img.width);
  DepthMap out(img.width, img.height);
  for (int y = 0; y < img.height; ++y)
    for (int xx = 0; xx < img.width; ++xx)
      out.set(xx, y, std::exp(full.at(0, 0, y, xx)));
  return out;
}

struct TrainConfig {
  double learning_rate = 0.05;
  double momentum = 0.9;
  int iterations = 200;
  int batch_size = 2;
  std::uint64_t seed = 1;
  double alpha = 0.2;   // label-similarity width for the classification loss
  DepthBinning binning; // classification targets and decoding

  void check(HeadKind head) const {
    if (learning_rate < 0.0)
      throw std::invalid_argument("TrainConfig: negative learning rate");
    if (iterations < 1 || batch_size < 1)
      throw std::invalid_argument("TrainConfig: bad iteration/batch counts");
    if (head == HeadKind::Classification && binning.bin_count < 1)
      throw std::invalid_argument("TrainConfig: classification needs a binning");
  }
};

struct TrainLogEntry {
  int iteration = 0;
  double loss = 0.0;
};

/// SGD with momentum. Batches are drawn from a generator seeded by the
/// config, every reduction runs in a fixed order, and weight updates are
/// elementwise, so the whole run is reproducible bit for bit from the seed.
inline std::vector<TrainLogEntry> train(TinyNet& net,
                                        const std::vector<Sample>& data,
                                        const TrainConfig& cfg) {
  if (data.empty()) throw std::invalid_argument("train: empty dataset");
  cfg.check(net.spec().head);
  const int img_h = data[0].rgb.height, img_w = data[0].rgb.width;
  for (const Sample& s : data) {
    if (s.rgb.height != img_h || s.rgb.width != img_w ||
        s.depth.height != img_h || s.depth.width != img_w)
      throw std::invalid_argument("train: samples must share one size");
  }

  const bool classify = net.spec().head == HeadKind::Classification;
  InfoGainMatrix gain;
  if (classify) {
    if (cfg.binning.bin_count != net.spec().bins)
      throw std::invalid_argument("train: binning does not match the head");
    gain = build_infogain(net.spec().bins, cfg.alpha);
  }

  Rng rng(cfg.seed);
  auto all_params = net.params();
  std::vector<std::vector<double>> velocity(all_params.size());
  for (std::size_t p = 0; p < all_params.size(); ++p)
    velocity[p].assign(all_params[p].value->size(), 0.0);

  std::vector<TrainLogEntry> log;
  log.reserve(cfg.iterations);

  for (int iter = 0; iter < cfg.iterations; ++iter) {
    std::vector<std::size_t> batch(cfg.batch_size);
    for (auto& b : batch) b = rng.next_below(data.size());

    // Assemble the padded input batch.
    Tensor4 first = net_detail::pad_to_multiple(
        net_detail::image_to_tensor(data[batch[0]].rgb),
        NetworkSpec::downsample_factor);
    Tensor4 x(cfg.batch_size, 3, first.h, first.w);
    for (int bi = 0; bi < cfg.batch_size; ++bi) {
      const Tensor4 xi = net_detail::pad_to_multiple(
          net_detail::image_to_tensor(data[batch[bi]].rgb),
          NetworkSpec::downsample_factor);
      std::copy(xi.data.begin(), xi.data.end(),
                x.data.begin() + bi * static_cast<long>(xi.size()));
    }

    net.zero_grads();
    const Tensor4 coarse = net.forward_raw(x);
    const Tensor4 full = net_detail::upsample_and_crop(
        coarse, img_h, img_w);  // crops padding, keeps batch

    double loss = 0.0;
    Tensor4 dfull(full.n, full.c, full.h, full.w);
    if (classify) {
      // Pool the batch into one stacked volume so the loss normalizes over
      // every valid pixel in the batch.
      const int bins = net.spec().bins;
      ScoreVolume logits(img_w, img_h * cfg.batch_size, bins,
                         VolumeKind::Logits);
      LabelMap target(img_w, img_h * cfg.batch_size, bins);
      for (int bi = 0; bi < cfg.batch_size; ++bi) {
        const DepthMap& gt = data[batch[bi]].depth;
        for (int y = 0; y < img_h; ++y) {
          for (int xx = 0; xx < img_w; ++xx) {
            const std::size_t pix =
                static_cast<std::size_t>(bi * img_h + y) * img_w + xx;
            for (int b = 0; b < bins; ++b)
              logits.data[pix * bins + b] = full.at(bi, b, y, xx);
            if (gt.is_valid(gt.index(xx, y))) {
              target.labels[pix] = depth_to_label(gt.at(xx, y), cfg.binning);
              target.valid[pix] = 1;
            }
          }
        }
      }
      const LossResult res = loss_forward_backward(logits, target, gain);
      loss = res.value;
      for (int bi = 0; bi < cfg.batch_size; ++bi)
        for (int y = 0; y < img_h; ++y)
          for (int xx = 0; xx < img_w; ++xx) {
            const std::size_t pix =
                static_cast<std::size_t>(bi * img_h + y) * img_w + xx;
            for (int b = 0; b < net.spec().bins; ++b)
              dfull.at(bi, b, y, xx) = res.grad.data[pix * net.spec().bins + b];
          }
    } else {
      // Mean squared error on log-depth over valid pixels.
      std::size_t n_valid = 0;
      for (int bi = 0; bi < cfg.batch_size; ++bi) {
        const DepthMap& gt = data[batch[bi]].depth;
        for (std::size_t i = 0; i < gt.size(); ++i)
          if (gt.is_valid(i)) ++n_valid;
      }
      if (n_valid == 0) throw std::invalid_argument("train: no valid pixels");
      detail::KahanSum sum;
      for (int bi = 0; bi < cfg.batch_size; ++bi) {
        const DepthMap& gt = data[batch[bi]].depth;
        for (int y = 0; y < img_h; ++y)
          for (int xx = 0; xx < img_w; ++xx) {
            if (!gt.is_valid(gt.index(xx, y))) continue;
            const double r = full.at(bi, 0, y, xx);
            const double t = std::log(gt.at(xx, y));
            sum.add((r - t) * (r - t));
            dfull.at(bi, 0, y, xx) = 2.0 * (r - t) / static_cast<double>(n_valid);
          }
      }
      loss = sum.sum / static_cast<double>(n_valid);
    }

    if (!std::isfinite(loss))
      throw numeric_error("train: loss diverged at iteration " +
                          std::to_string(iter));

    const Tensor4 dcoarse =
        net_detail::uncrop_and_downsample_grad(dfull, coarse.h, coarse.w);
    net.backward_raw(dcoarse);

    for (std::size_t p = 0; p < all_params.size(); ++p) {
      auto& value = *all_params[p].value;
      auto& grad = *all_params[p].grad;
      auto& vel = velocity[p];
      for (std::size_t k = 0; k < value.size(); ++k) {
        vel[k] = cfg.momentum * vel[k] - cfg.learning_rate * grad[k];
        value[k] += vel[k];
      }
    }
    log.push_back({iter, loss});
  }
  return log;
}

/// Network weights plus everything needed to run prediction later.
inline void save_network(const std::string& path, TinyNet& net,
                         const TrainConfig& cfg) {
  std::vector<NamedTensor> tensors;
  for (const auto& p : net.params())
    tensors.push_back({p.name, p.dims, *p.value});
  const NetworkSpec& s = net.spec();
  std::vector<std::pair<std::string, std::string>> meta;
  meta.emplace_back("head", s.head == HeadKind::Classification
                                ? "classification"
                                : "regression");
  meta.emplace_back("bins", std::to_string(s.bins));
  meta.emplace_back("stem", std::to_string(s.stem_channels));
  for (int i = 0; i < 4; ++i) {
    meta.emplace_back("c" + std::to_string(i + 1),
                      std::to_string(s.stage_channels[i]));
    meta.emplace_back("n" + std::to_string(i + 1),
                      std::to_string(s.identity_blocks[i]));
  }
  meta.emplace_back("head1", std::to_string(s.head_channels1));
  meta.emplace_back("head2", std::to_string(s.head_channels2));
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", cfg.binning.d_min);
  meta.emplace_back("d_min", buf);
  std::snprintf(buf, sizeof(buf), "%.17g", cfg.binning.d_max);
  meta.emplace_back("d_max", buf);
  meta.emplace_back("space",
                    cfg.binning.space == BinSpace::Log ? "log" : "linear");
  std::snprintf(buf, sizeof(buf), "%.17g", cfg.alpha);
  meta.emplace_back("alpha", buf);
  write_tnet(path, tensors, meta);
}

struct LoadedNetwork {
  std::unique_ptr<TinyNet> net;
  DepthBinning binning;  // meaningful for classification heads
  double alpha = 0.0;
};

inline LoadedNetwork load_network(const std::string& path) {
  const TnetFile file = read_tnet(path);
  NetworkSpec spec;
  spec.head = file.meta_value("head") == "regression" ? HeadKind::Regression
                                                      : HeadKind::Classification;
  spec.bins = std::stoi(file.meta_value("bins"));
  spec.stem_channels = std::stoi(file.meta_value("stem"));
  for (int i = 0; i < 4; ++i) {
    spec.stage_channels[i] = std::stoi(file.meta_value("c" + std::to_string(i + 1)));
    spec.identity_blocks[i] = std::stoi(file.meta_value("n" + std::to_string(i + 1)));
  }
  spec.head_channels1 = std::stoi(file.meta_value("head1"));
  spec.head_channels2 = std::stoi(file.meta_value("head2"));

  LoadedNetwork out;
  out.net = std::make_unique<TinyNet>(spec, 0);
  out.alpha = std::stod(file.meta_value("alpha"));
  out.binning = make_binning(
      std::max(1, spec.bins), std::stod(file.meta_value("d_min")),
      std::stod(file.meta_value("d_max")),
      file.meta_value("space") == "linear" ? BinSpace::Linear : BinSpace::Log);

  auto params = out.net->params();
  if (params.size() != file.tensors.size())
    throw io_error(path + ": tensor count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    const NamedTensor& t = file.tensors[i];
    if (t.name != params[i].name || t.dims != params[i].dims ||
        t.data.size() != params[i].value->size())
      throw io_error(path + ": tensor layout mismatch at " + t.name);
    *params[i].value = t.data;
  }
  return out;
}

}  // namespace depthclass
