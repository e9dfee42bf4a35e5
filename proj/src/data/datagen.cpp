#include "gfn/datagen.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <numeric>

#include "gfn/kernels.hpp"

namespace gfn {
namespace {

// Enough margin for the largest trajectory offset plus the bilinear tap.
constexpr std::int64_t kBlurPad = 9;
// Gain range for the spatially varying trajectory; 6 px * 1.3 stays within
// the +-8 px offset limit.
constexpr double kMinGain = 0.6;
constexpr double kMaxGain = 1.3;

void clamp01(Tensor<float>& t) {
  for (float& v : t.data()) v = std::clamp(v, 0.0f, 1.0f);
}

// Rows [y0, y0 + h) and columns [x0, x0 + w) with edge replication.
Tensor<float> clamped_region(const Tensor<float>& img, std::int64_t y0, std::int64_t x0, std::int64_t h,
                             std::int64_t w) {
  const Shape& s = img.shape();
  Tensor<float> out({1, s.c, h, w});
  for (std::int64_t c = 0; c < s.c; ++c) {
    for (std::int64_t y = 0; y < h; ++y) {
      const std::int64_t sy = std::clamp<std::int64_t>(y0 + y, 0, s.h - 1);
      for (std::int64_t x = 0; x < w; ++x) {
        const std::int64_t sx = std::clamp<std::int64_t>(x0 + x, 0, s.w - 1);
        out.at(0, c, y, x) = img.at(0, c, sy, sx);
      }
    }
  }
  return out;
}

Tensor<float> downsample4(const Tensor<float>& hr) {
  Tensor<float> lr = kernels::bicubic_resize(hr, hr.shape().h / 4, hr.shape().w / 4);
  clamp01(lr);
  return lr;
}

double smoothstep_coverage(double signed_dist) {
  // Coverage of a pixel by a shape whose boundary is at distance 0; one
  // pixel of linear antialiasing.
  return std::clamp(0.5 - signed_dist, 0.0, 1.0);
}

}  // namespace

void BlurSpec::validate() const {
  if (offsets.empty()) throw DataError("blur trajectory is empty");
  if (offsets.size() != weights.size()) {
    throw DataError("blur trajectory has " + std::to_string(offsets.size()) + " offsets but " +
                    std::to_string(weights.size()) + " weights");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < offsets.size(); ++i) {
    const auto [dx, dy] = offsets[i];
    if (!(std::abs(dx) <= kMaxBlurOffset) || !(std::abs(dy) <= kMaxBlurOffset)) {
      throw DataError("blur offset (" + std::to_string(dx) + ", " + std::to_string(dy) + ") exceeds 8 pixels");
    }
    if (!(weights[i] >= 0.0)) throw DataError("blur weights must be non-negative");
    total += weights[i];
  }
  if (std::abs(total - 1.0) > 1e-9) throw DataError("blur weights sum to " + std::to_string(total) + ", not 1");
}

BlurSpec random_blur_spec(Rng& rng, int taps, double min_amplitude, double max_amplitude) {
  if (taps < 1) throw DataError("blur trajectory needs at least one tap");
  const double amplitude = rng.uniform(min_amplitude, max_amplitude);
  const double theta0 = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const double theta1 = theta0 + rng.uniform(-0.5 * std::numbers::pi, 0.5 * std::numbers::pi);
  const double half = 0.5 * amplitude;
  const std::pair<double, double> p1{half * std::cos(theta0), half * std::sin(theta0)};

  BlurSpec spec;
  for (int i = 0; i < taps; ++i) {
    const double t = taps == 1 ? 0.0 : amplitude * i / (taps - 1);
    std::pair<double, double> p;
    if (t <= half) {
      p = {t * std::cos(theta0), t * std::sin(theta0)};
    } else {
      p = {p1.first + (t - half) * std::cos(theta1), p1.second + (t - half) * std::sin(theta1)};
    }
    spec.offsets.push_back(p);
  }
  double mx = 0.0, my = 0.0;
  for (const auto& [dx, dy] : spec.offsets) {
    mx += dx;
    my += dy;
  }
  mx /= taps;
  my /= taps;
  for (auto& [dx, dy] : spec.offsets) {
    dx = std::clamp(dx - mx, -kMaxBlurOffset, kMaxBlurOffset);
    dy = std::clamp(dy - my, -kMaxBlurOffset, kMaxBlurOffset);
  }
  spec.weights.assign(static_cast<std::size_t>(taps), 1.0 / taps);
  return spec;
}

Tensor<float> synth_blur(const Tensor<float>& sharp, const BlurSpec& spec, std::pair<double, double> gain) {
  spec.validate();
  const Shape& s = sharp.shape();
  require_valid_shape(s, "synth_blur");
  Tensor<float> out(s);
  std::vector<double> acc(static_cast<std::size_t>(s.plane()));
  for (std::int64_t n = 0; n < s.n; ++n) {
    for (std::int64_t c = 0; c < s.c; ++c) {
      const float* src = sharp.plane(n, c);
      std::fill(acc.begin(), acc.end(), 0.0);
      for (std::size_t k = 0; k < spec.offsets.size(); ++k) {
        const auto [dx, dy] = spec.offsets[k];
        const double wk = spec.weights[k];
        for (std::int64_t x = 0; x < s.w; ++x) {
          const double g = s.w == 1 ? gain.first : gain.first + (gain.second - gain.first) * x / (s.w - 1.0);
          const double fx = std::clamp(x + g * dx, 0.0, static_cast<double>(s.w - 1));
          const auto x0 = static_cast<std::int64_t>(std::floor(fx));
          const std::int64_t x1 = std::min(x0 + 1, s.w - 1);
          const double ax = fx - x0;
          for (std::int64_t y = 0; y < s.h; ++y) {
            const double fy = std::clamp(y + g * dy, 0.0, static_cast<double>(s.h - 1));
            const auto y0 = static_cast<std::int64_t>(std::floor(fy));
            const std::int64_t y1 = std::min(y0 + 1, s.h - 1);
            const double ay = fy - y0;
            const double top = (1 - ax) * src[y0 * s.w + x0] + ax * src[y0 * s.w + x1];
            const double bot = (1 - ax) * src[y1 * s.w + x0] + ax * src[y1 * s.w + x1];
            acc[static_cast<std::size_t>(y * s.w + x)] += wk * ((1 - ay) * top + ay * bot);
          }
        }
      }
      float* dst = out.plane(n, c);
      for (std::int64_t i = 0; i < s.plane(); ++i) dst[i] = static_cast<float>(acc[static_cast<std::size_t>(i)]);
    }
  }
  return out;
}

void TripletOptions::validate() const {
  if (crop <= 0 || crop % 4 != 0) throw DataError("crop must be positive and divisible by 4, got " + std::to_string(crop));
  if (stride <= 0) throw DataError("stride must be positive, got " + std::to_string(stride));
  if (scales_per_image < 1) throw DataError("scales_per_image must be >= 1");
  if (!(min_scale > 0.0) || !(max_scale >= min_scale)) {
    throw DataError("scale range must satisfy 0 < min_scale <= max_scale");
  }
}

std::int64_t grid_count(std::int64_t extent, std::int64_t crop, std::int64_t stride) {
  if (extent < crop) return 0;
  return (extent - crop) / stride + 1;
}

TripletSet make_triplets(std::span<const Image> images, const TripletOptions& opts) {
  opts.validate();
  std::vector<const Image*> order;
  for (const Image& img : images) order.push_back(&img);
  std::stable_sort(order.begin(), order.end(), [](const Image* a, const Image* b) { return a->id < b->id; });

  TripletSet out;
  for (const Image* img : order) {
    const Shape& s = img->pixels.shape();
    if (s.n != 1 || s.c != 3) throw DataError("image " + img->id + " must be (1,3,h,w), got " + s.str());
    Rng scale_rng(derive_seed(opts.seed, "data:scale:" + img->id));
    for (int k = 0; k < opts.scales_per_image; ++k) {
      const double scale = scale_rng.uniform(opts.min_scale, opts.max_scale);
      const auto sh = static_cast<std::int64_t>(std::lround(s.h * scale));
      const auto sw = static_cast<std::int64_t>(std::lround(s.w * scale));
      if (sh < opts.crop || sw < opts.crop) {
        out.warnings.push_back("skipping " + img->id + " at scale " + std::to_string(scale) + ": " +
                               std::to_string(sh) + "x" + std::to_string(sw) + " is smaller than crop " +
                               std::to_string(opts.crop));
        continue;
      }
      Tensor<float> scaled = img->pixels;
      if (sh != s.h || sw != s.w) {
        scaled = kernels::bicubic_resize(img->pixels, sh, sw);
        clamp01(scaled);
      }
      const std::int64_t ny = grid_count(sh, opts.crop, opts.stride);
      const std::int64_t nx = grid_count(sw, opts.crop, opts.stride);
      for (std::int64_t iy = 0; iy < ny; ++iy) {
        for (std::int64_t ix = 0; ix < nx; ++ix) {
          const std::int64_t y = iy * opts.stride;
          const std::int64_t x = ix * opts.stride;
          Rng blur_rng(derive_seed(opts.seed, "data:blur:" + img->id,
                                   {static_cast<std::uint64_t>(k), static_cast<std::uint64_t>(y),
                                    static_cast<std::uint64_t>(x)}));
          const BlurSpec spec = random_blur_spec(blur_rng);
          const std::pair<double, double> gain{blur_rng.uniform(kMinGain, kMaxGain),
                                               blur_rng.uniform(kMinGain, kMaxGain)};
          const Tensor<float> padded =
              clamped_region(scaled, y - kBlurPad, x - kBlurPad, opts.crop + 2 * kBlurPad, opts.crop + 2 * kBlurPad);
          const Tensor<float> blurred_padded = synth_blur(padded, spec, gain);

          Triplet t;
          t.h = clamped_region(scaled, y, x, opts.crop, opts.crop);
          const Tensor<float> hblur = clamped_region(blurred_padded, kBlurPad, kBlurPad, opts.crop, opts.crop);
          t.l = downsample4(t.h);
          t.lblur = downsample4(hblur);
          t.source = img->id;
          t.scale_index = k;
          t.scale = scale;
          t.x = x;
          t.y = y;
          out.triplets.push_back(std::move(t));
        }
      }
    }
  }
  return out;
}

Image synth_scene(const std::string& id, std::int64_t height, std::int64_t width, std::uint64_t seed) {
  Rng rng(derive_seed(seed, "scene:" + id));
  auto colour = [&] {
    return std::array<double, 3>{rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.9)};
  };
  Image img{id, Tensor<float>({1, 3, height, width})};
  std::vector<std::array<double, 3>> px(static_cast<std::size_t>(height * width));

  // Background: linear gradient between two colours.
  const auto c0 = colour();
  const auto c1 = colour();
  const double dir = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const double ux = std::cos(dir), uy = std::sin(dir);
  const double span = std::abs(ux) * width + std::abs(uy) * height;
  for (std::int64_t y = 0; y < height; ++y) {
    for (std::int64_t x = 0; x < width; ++x) {
      const double t = std::clamp(0.5 + ((x - width / 2.0) * ux + (y - height / 2.0) * uy) / span, 0.0, 1.0);
      for (int c = 0; c < 3; ++c) px[static_cast<std::size_t>(y * width + x)][c] = (1 - t) * c0[c] + t * c1[c];
    }
  }

  const double scale = static_cast<double>(std::min(height, width));
  const int shapes = 8 + static_cast<int>(rng.below(8));
  for (int i = 0; i < shapes; ++i) {
    const int kind = static_cast<int>(rng.below(3));
    const double cx = rng.uniform(0.0, width);
    const double cy = rng.uniform(0.0, height);
    const double r = rng.uniform(0.05, 0.25) * scale;
    const double rx = rng.uniform(0.05, 0.3) * scale;
    const double ry = rng.uniform(0.05, 0.3) * scale;
    const auto ca = colour();
    const auto cb = colour();
    const double period = rng.uniform(3.0, 12.0);
    const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double sdir = rng.uniform(0.0, std::numbers::pi);
    const double sx = std::cos(sdir), sy = std::sin(sdir);
    for (std::int64_t y = 0; y < height; ++y) {
      for (std::int64_t x = 0; x < width; ++x) {
        const double px_x = x + 0.5 - cx;
        const double px_y = y + 0.5 - cy;
        double dist;
        if (kind == 0) {
          dist = std::hypot(px_x, px_y) - r;
        } else {
          dist = std::max(std::abs(px_x) - rx, std::abs(px_y) - ry);
        }
        const double cover = smoothstep_coverage(dist);
        if (cover <= 0.0) continue;
        std::array<double, 3> fill = ca;
        if (kind == 2) {
          const double t = 0.5 + 0.5 * std::sin(2.0 * std::numbers::pi * (px_x * sx + px_y * sy) / period + phase);
          for (int c = 0; c < 3; ++c) fill[c] = (1 - t) * ca[c] + t * cb[c];
        }
        auto& p = px[static_cast<std::size_t>(y * width + x)];
        for (int c = 0; c < 3; ++c) p[c] = (1 - cover) * p[c] + cover * fill[c];
      }
    }
  }
  for (std::int64_t y = 0; y < height; ++y) {
    for (std::int64_t x = 0; x < width; ++x) {
      for (int c = 0; c < 3; ++c) {
        img.pixels.at(0, c, y, x) = static_cast<float>(px[static_cast<std::size_t>(y * width + x)][c]);
      }
    }
  }
  return img;
}

std::pair<std::vector<Triplet>, std::vector<Triplet>> split_every(std::vector<Triplet> all, int k) {
  if (k < 2) throw DataError("split interval must be >= 2");
  std::vector<Triplet> train, held;
  for (std::size_t i = 0; i < all.size(); ++i) {
    (i % static_cast<std::size_t>(k) == static_cast<std::size_t>(k - 1) ? held : train).push_back(std::move(all[i]));
  }
  return {std::move(train), std::move(held)};
}

}  // namespace gfn
