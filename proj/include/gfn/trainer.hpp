#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "gfn/adam.hpp"
#include "gfn/datagen.hpp"
#include "gfn/model.hpp"

namespace gfn {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class TrainingError : public std::runtime_error {
 public:
  TrainingError(const std::string& what, std::int64_t step) : std::runtime_error(what), step_(step) {}
  std::int64_t step() const { return step_; }

 private:
  std::int64_t step_;
};

struct StageSchedule {
  int epochs = 1;
  double lr = 1e-4;
  double decay = 0.1;
  int decay_every = 30;
};

struct AugmentConfig {
  bool rotate90 = true;
  bool hflip = true;
};

struct TrainConfig {
  double alpha = 0.5;
  StageSchedule stage1{60, 1e-4, 0.1, 30};
  StageSchedule stage2{50, 5e-5, 0.1, 25};
  int batch_size = 16;
  AdamHyper adam;
  AugmentConfig augment;
  std::uint64_t seed = 0;
  /// Steps per epoch; 0 means one full pass over the training set.
  int steps_per_epoch = 0;

  static TrainConfig tiny();
  void validate() const;
};

/// Canonical JSON (fixed key order) used for hashing and logging.
std::string train_config_json(const TrainConfig& cfg);
/// Unknown keys are rejected; missing keys keep the defaults of `base`.
TrainConfig train_config_from_json(const std::string& json, const TrainConfig& base = {});
/// FNV-1a of the canonical JSON of both configurations.
std::uint64_t config_hash(const TrainConfig& train, const ModelConfig& model);

/// Learning rate for a zero-based epoch of stage 1 or 2.
double lr_at(int stage, std::int64_t epoch, const TrainConfig& cfg);

struct LossValues {
  double total = 0.0;
  double sr = 0.0;
  double deblur = 0.0;
};

template <typename T>
struct Loss {
  Var<T> total;
  LossValues values;  ///< evaluated in double from the tensors
};

/// total = mse(hr, h) + alpha * mse(lr, l). Without a deblurred output the
/// deblur term is reported as 0 and omitted.
template <typename T>
Loss<T> compute_loss(const Var<T>& hr, const Var<T>& h, const std::optional<Var<T>>& lr,
                     const std::optional<Var<T>>& l, double alpha);

/// Loss weight actually applied for a variant (0 when it has no deblurring
/// loss).
double effective_alpha(const TrainConfig& cfg, Variant v);

/// Rotation by k * 90 degrees counter-clockwise followed by an optional
/// horizontal flip.
struct AugmentDraw {
  int rotations = 0;
  bool flip = false;
};

AugmentDraw draw_augment(Rng& rng, const AugmentConfig& cfg);
Tensor<float> apply_augment(const Tensor<float>& t, const AugmentDraw& d);
/// Same draw for L_blur, L and H. Throws ShapeError unless H is 4x the LR pair.
Triplet augment(const Triplet& t, const AugmentDraw& d);
Triplet augment(const Triplet& t, Rng& rng, const AugmentConfig& cfg);

struct StepRecord {
  std::int64_t step = 0;
  int stage = 1;
  int epoch = 0;
  double lr = 0.0;
  LossValues loss;
};

struct EpochRecord {
  int stage = 1;
  int epoch = 0;
  LossValues mean;
};

struct TrainHistory {
  std::vector<StepRecord> steps;
  std::vector<EpochRecord> epochs;
};

/// Everything needed to continue training at an epoch boundary.
struct TrainSession {
  ModelConfig model;
  TrainConfig config;
  ParamSet<float> params;
  AdamState<float> adam;
  int stage = 1;    ///< stage in progress, 3 once finished
  int epoch = 0;    ///< next epoch to run within the stage
  std::int64_t global_step = 0;
  LossValues last_epoch_mean;

  /// Fresh parameters drawn from the "init" stream of config.seed.
  static TrainSession start(const ModelConfig& model, const TrainConfig& config);
  bool finished() const { return stage > 2; }
};

struct RunOptions {
  std::ostream* log = nullptr;               ///< tab-separated step log
  std::filesystem::path checkpoint_dir;      ///< empty: no checkpoints
  int stop_after_epochs = -1;                ///< emulate an interruption
  std::optional<int> only_stage;             ///< run just this stage
  /// Return true to stop after the current step (used by tests).
  std::function<bool(const StepRecord&)> stop_when;
};

inline constexpr const char* kLogHeader = "step\tstage\tepoch\tlr\tl_sr\tl_deblur\ttotal";

/// One optimizer step on `items` (stacked into a batch) at the given
/// stage's fusion and freezing rules.
StepRecord train_step(TrainSession& session, std::span<const Triplet> items, int stage, int epoch, double lr);

/// Runs epochs until the schedule is exhausted or an option stops it.
/// Stage 1 trains with the gate frozen and direct-sum fusion; stage 2
/// enables the gate, trains every parameter and starts a fresh optimizer.
TrainHistory train(TrainSession& session, std::span<const Triplet> data, const RunOptions& opts = {});

TrainHistory train_stage1(TrainSession& session, std::span<const Triplet> data, RunOptions opts = {});
TrainHistory train_stage2(TrainSession& session, std::span<const Triplet> data, RunOptions opts = {});

/// Mean loss over `data` without gradient recording.
LossValues evaluate_loss(const ParamSet<float>& params, const ModelConfig& model, std::span<const Triplet> data,
                         double alpha, FusionMode fusion = FusionMode::gated, int batch = 4);

// Checkpoints: model.gfn + adam.gfn + meta.json in one directory.
inline constexpr const char* kModelFile = "model.gfn";
inline constexpr const char* kAdamFile = "adam.gfn";
inline constexpr const char* kMetaFile = "meta.json";

struct CheckpointMeta {
  int stage = 1;
  int epoch = 0;
  std::int64_t global_step = 0;
  LossValues running;
  std::uint64_t config_hash = 0;
};

std::string meta_json(const CheckpointMeta& meta);
CheckpointMeta parse_meta(const std::string& json);

void save_session(const std::filesystem::path& dir, const TrainSession& session);
/// Throws ConfigError when the stored config hash differs from the one of
/// (config, model).
TrainSession load_session(const std::filesystem::path& dir, const TrainConfig& config);

}  // namespace gfn
