#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "gfn/datagen.hpp"
#include "gfn/model.hpp"
#include "gfn/trainer.hpp"

namespace gfn {

struct Psnr {
  double db = 0.0;
  bool infinite = false;
};

/// 10 log10(peak^2 / MSE) over every element. MSE = 0 is flagged infinite.
template <typename T>
Psnr psnr(const Tensor<T>& a, const Tensor<T>& b, double peak = 1.0);

/// Mean local SSIM of the channel-mean grayscale images, 11x11 Gaussian
/// window (sigma 1.5), K1 = 0.01, K2 = 0.03, dynamic range 1, valid windows
/// only. Batched inputs return the mean over items.
template <typename T>
double ssim(const Tensor<T>& a, const Tensor<T>& b);

inline constexpr int kSsimWindow = 11;
inline constexpr double kSsimSigma = 1.5;

struct BenchResult {
  double median_seconds = 0.0;  ///< per image
  std::vector<double> samples;  ///< per-image seconds of each timed repeat
  int threads = 1;
  int width = 0;
  Shape input;
};

inline constexpr int kMinRepeats = 3;

/// Median wall-clock seconds per image of `predict` on `input`, after
/// `warmup` untimed runs. Throws ConfigError when repeats < 3.
BenchResult bench_inference(const ParamSet<float>& params, const ModelConfig& cfg, const Tensor<float>& input,
                            int repeats = kMinRepeats, int warmup = 1);

struct EvalRow {
  std::string variant;
  std::int64_t params = 0;
  double psnr = 0.0;       ///< mean over finite items
  int infinite_psnr = 0;   ///< items with zero error
  double ssim = 0.0;
  double seconds = 0.0;    ///< median per-image inference time
  VariantTraits traits{};
};

struct Environment {
  int threads = 1;
  int width = 0;
  std::string compiler;
  std::string metric_note;
};

Environment describe_environment(int width);

struct EvalReport {
  std::vector<EvalRow> rows;
  Environment env;
  std::vector<std::string> errors;  ///< variants that failed, with reasons

  /// Tab-separated rows with a '#' header describing the environment.
  std::string to_tsv(bool with_timing = true) const;
  std::string to_json(bool with_timing = true) const;
  /// variant, seconds, psnr
  std::string psnr_vs_time_tsv() const;
  /// variant, params, psnr
  std::string psnr_vs_params_tsv() const;
  /// Writes report.tsv, report.json, psnr_vs_time.tsv, psnr_vs_params.tsv.
  void write(const std::filesystem::path& dir) const;
};

struct QualityScores {
  double psnr = 0.0;
  int infinite = 0;
  double ssim = 0.0;
};

/// Mean PSNR/SSIM of predictions (clamped to [0, 1]) against HR targets.
QualityScores evaluate_quality(const ParamSet<float>& params, const ModelConfig& cfg, std::span<const Triplet> data);

/// Mean PSNR/SSIM of paired images.
QualityScores score_pairs(std::span<const Tensor<float>> pred, std::span<const Tensor<float>> ref);

struct AblationConfig {
  TrainConfig train;
  int width = 16;
  std::vector<Variant> variants;
  int bench_repeats = kMinRepeats;
  /// Directory for per-variant checkpoints and logs; empty to skip.
  std::filesystem::path work_dir;
};

/// Trains every variant from the same seed with the same schedule, then
/// evaluates it on `val`. A failing variant stops the run; rows finished so
/// far are kept and the error is recorded.
EvalReport run_ablation(std::span<const Triplet> train_set, std::span<const Triplet> val_set, const AblationConfig& cfg,
                        const std::function<void(const std::string&)>& progress = {});

}  // namespace gfn
