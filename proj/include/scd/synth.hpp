#pragma once

#include <vector>

#include "scd/rng.hpp"
#include "scd/tensor.hpp"

namespace scd {

// Procedural exemplar/search pair generation. The target is a continuous
// texture (gaussian blobs over an affine ramp) sampled onto a square box:
// centered in the exemplar, and affine-jittered at a grid-aligned random
// location in the search image among clutter. Box pixels are overwritten,
// so the rendered target is an exact affine copy of the exemplar's
// central patch.
struct PairGenSpec {
  int channels = 3;
  int exemplar_size = 32;
  int search_size = 64;
  int target_size = 20;     // box side, must be <= exemplar_size
  int placement_step = 2;   // target centers move on this pixel grid
  int max_shift_steps = 8;  // per axis, +/- from the search center
  double rot_max = 0.15;    // radians
  double scale_min = 0.9;
  double scale_max = 1.1;
  int target_blobs = 6;
  int clutter_blobs = 10;
  double clutter_amp = 0.5;
  double noise_amp = 0.05;

  void validate() const;
};

struct SyntheticPair {
  std::vector<double> exemplar;  // channels * E * E, row-major
  std::vector<double> search;    // channels * S * S
  double center_y = 0.0;         // target center in search image coords
  double center_x = 0.0;
  int shift_steps_y = 0;         // grid shift from the search center
  int shift_steps_x = 0;
};

SyntheticPair generate_pair(Rng& rng, const PairGenSpec& spec);

}  // namespace scd
