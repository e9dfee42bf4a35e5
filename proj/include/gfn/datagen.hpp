#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "gfn/random.hpp"
#include "gfn/tensor.hpp"

namespace gfn {

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// One training sample. Tensors are (1, 3, h, w) for the LR pair and
/// (1, 3, 4h, 4w) for the HR target, values in [0, 1].
struct Triplet {
  Tensor<float> lblur;
  Tensor<float> l;
  Tensor<float> h;
  std::string source;
  int scale_index = 0;
  double scale = 1.0;
  std::int64_t x = 0;  ///< crop offset in the scaled HR image
  std::int64_t y = 0;
};

/// Camera trajectory as weighted sub-pixel offsets.
struct BlurSpec {
  std::vector<std::pair<double, double>> offsets;  ///< (dx, dy) in pixels
  std::vector<double> weights;

  /// Throws DataError on an empty trajectory, offsets beyond +-8 pixels or
  /// weights that are negative or do not sum to 1.
  void validate() const;
};

inline constexpr double kMaxBlurOffset = 8.0;

/// Piecewise-linear random trajectory through three control points,
/// resampled to `taps` equally weighted positions and centred on the origin.
/// The path length is uniform in [min_amplitude, max_amplitude].
BlurSpec random_blur_spec(Rng& rng, int taps = 8, double min_amplitude = 1.0, double max_amplitude = 6.0);

/// Weighted average of bilinearly shifted copies, edge-clamped. `gain`
/// scales the trajectory linearly from the left column (first) to the right
/// column (second), which makes the blur spatially varying.
Tensor<float> synth_blur(const Tensor<float>& sharp, const BlurSpec& spec, std::pair<double, double> gain = {1.0, 1.0});

struct Image {
  std::string id;
  Tensor<float> pixels;  ///< (1, 3, h, w)
};

struct TripletOptions {
  int scales_per_image = 3;
  double min_scale = 0.5;
  double max_scale = 1.0;
  int crop = 256;
  int stride = 128;
  std::uint64_t seed = 0;

  void validate() const;
};

struct TripletSet {
  std::vector<Triplet> triplets;
  std::vector<std::string> warnings;
};

/// Number of crop positions along one axis.
std::int64_t grid_count(std::int64_t extent, std::int64_t crop, std::int64_t stride);

/// Scales each image, blurs every crop with its own trajectory, and
/// downsamples the sharp and blurry HR crops by 4. Output is ordered by
/// (image id, scale index, crop y, crop x).
TripletSet make_triplets(std::span<const Image> images, const TripletOptions& opts);

/// Smooth gradients, discs, rectangles and stripes with colours in
/// [0.1, 0.9], so bicubic resampling never leaves [0, 1].
Image synth_scene(const std::string& id, std::int64_t height, std::int64_t width, std::uint64_t seed);

// ---------------------------------------------------------------------------
// I/O

/// Binary PPM (P6, maxval 255). Values map to v / 255.
Tensor<float> read_ppm(const std::filesystem::path& path);
/// Rounds clamp(v, 0, 1) * 255.
void write_ppm(const std::filesystem::path& path, const Tensor<float>& image);

struct ImageLoad {
  std::vector<Image> images;
  std::vector<std::string> rejects;  ///< "path\treason"
  std::vector<std::string> warnings;
};

/// Every *.ppm file in `dir`, sorted by file name; the id is the stem.
ImageLoad load_images(const std::filesystem::path& dir);

inline constexpr const char* kManifestName = "manifest.tsv";

/// Raw little-endian float32 tensors plus a tab-separated manifest.
/// Returns the manifest path.
std::filesystem::path save_triplets(const std::filesystem::path& dir, std::span<const Triplet> triplets);
std::vector<Triplet> load_triplets(const std::filesystem::path& dir);

/// Splits off every k-th triplet (by position) as a held-out set.
std::pair<std::vector<Triplet>, std::vector<Triplet>> split_every(std::vector<Triplet> all, int k);

}  // namespace gfn
