#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "deepproposal/io.hpp"

namespace dp {

// Deterministic synthetic dataset: planted axis-aligned objects whose footprint
// carries a per-layer channel signature on every pseudo-layer map, over i.i.d.
// Gaussian background noise. The stride hierarchy mirrors the coarse-to-fine
// layer roles without any network.
struct SynthConfig {
  std::uint64_t seed = 0;
  int images = 100;
  std::string split = "train";
  double canvas_width = 400.0;
  double canvas_height = 300.0;
  int min_objects = 1;
  int max_objects = 3;
  double min_object_size = 40.0;
  double max_object_size = 140.0;
  double signature_strength = 1.0;
  double noise_level = 0.25;
  double background_level = 0.5;  // constant activation floor on every channel
  std::vector<double> scales{227.0, 300.0, 400.0, 600.0};
  std::vector<int> layer_ids{5, 3, 2};
  std::vector<double> layer_strides{16.0, 4.0, 2.0};
  std::vector<int> layer_channels{8, 4, 2};

  void validate() const;
};

// Fixed per-layer channel signature the generator plants inside objects.
std::vector<double> layer_signature(int layer_id, int channels, double strength);

// Writes fmaps/, gt/ and manifest.json under out_dir and returns the manifest.
// Byte-identical output for identical configs.
DatasetManifest generate_synthetic(const SynthConfig& cfg,
                                   const std::filesystem::path& out_dir);

}  // namespace dp
