#pragma once

#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>
#include <string>
#include <unistd.h>
#include <vector>

#include "gfn/datagen.hpp"
#include "gfn/trainer.hpp"

namespace fixture {

/// Triplets of 8x8 LR / 32x32 HR cut from small synthetic scenes.
inline std::vector<gfn::Triplet> tiny_triplets(int images = 2, std::uint64_t seed = 1, int crop = 32) {
  std::vector<gfn::Image> imgs;
  for (int i = 0; i < images; ++i) imgs.push_back(gfn::synth_scene("img" + std::to_string(i), 64, 64, seed));
  gfn::TripletOptions o;
  o.scales_per_image = 1;
  o.min_scale = o.max_scale = 1.0;
  o.crop = crop;
  o.stride = 32;
  o.seed = seed;
  return gfn::make_triplets(imgs, o).triplets;
}

inline gfn::ModelConfig small_model(gfn::Variant v = gfn::Variant::gfn) {
  gfn::ModelConfig m;
  m.width = 4;
  m.variant = v;
  return m;
}

inline gfn::TrainConfig short_schedule() {
  gfn::TrainConfig c = gfn::TrainConfig::tiny();
  c.stage1 = {2, 1e-3, 0.1, 1};
  c.stage2 = {2, 5e-4, 0.1, 1};
  c.steps_per_epoch = 2;
  c.seed = 7;
  return c;
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& name) {
  const auto p = std::filesystem::temp_directory_path() / ("gfn_test_" + name + "_" + std::to_string(::getpid()));
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

inline std::vector<char> read_bytes(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

}  // namespace fixture
