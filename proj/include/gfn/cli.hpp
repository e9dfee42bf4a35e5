#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "gfn/datagen.hpp"
#include "gfn/model.hpp"
#include "gfn/trainer.hpp"

namespace gfn::cli {

/// Dataset-generation settings of a run.
struct DataConfig {
  std::string root;  ///< empty: $GFN_DATA_DIR
  int crop = 256;
  int stride = 128;
  int scales_per_image = 3;
  double min_scale = 0.5;
  double max_scale = 1.0;
  /// Every k-th triplet is held out for validation by train/ablate.
  int val_every = 8;
};

/// Fully resolved configuration: profile defaults, then the --config file,
/// then command-line flags.
struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  DataConfig data;
  std::uint64_t seed = 0;
  bool deterministic = false;
  int threads = 0;

  static RunConfig profile(const std::string& name);
  std::string to_json() const;
  /// Overlays a JSON document; unknown keys are rejected with ConfigError.
  void merge_json(const std::string& text);
};

/// Exit codes.
enum Exit : int {
  kOk = 0,
  kInternal = 1,
  kUsage = 2,
  kShape = 3,
  kData = 4,
  kCheckpoint = 5,
  kTraining = 6,
  kConfig = 7,
};

/// Entry point of the `gfn` executable: args excludes the program name.
/// Errors are reported as one line "error[<class>]: <message>" on `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace gfn::cli
