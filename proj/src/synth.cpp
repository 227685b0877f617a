#include "scd/synth.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace scd {

void PairGenSpec::validate() const {
  if (channels < 1) throw std::invalid_argument("pair spec: channels must be >= 1");
  if (target_size < 1 || target_size > exemplar_size) {
    throw std::invalid_argument("pair spec: target box must fit the exemplar");
  }
  if (exemplar_size > search_size) {
    throw std::invalid_argument("pair spec: exemplar larger than search image");
  }
  if (placement_step < 1 || max_shift_steps < 0) {
    throw std::invalid_argument("pair spec: invalid placement grid");
  }
  if (scale_min <= 0.0 || scale_max < scale_min) {
    throw std::invalid_argument("pair spec: invalid scale range");
  }
  // jittered box must stay inside the search image for every placement
  const double half = target_size / 2.0;
  const double extent = half * scale_max * (std::cos(0.0) + std::sin(rot_max)) + 1.0;
  const double reach = (search_size - 1) / 2.0 -
                       double(placement_step) * max_shift_steps;
  if (reach - extent < 0.0) {
    throw std::invalid_argument("pair spec: placements can push the target box off the image");
  }
}

namespace {

struct Blob {
  double y, x, sigma;
  std::vector<double> amp;  // per channel
};

// Continuous target texture in box-local coordinates.
struct Texture {
  std::vector<Blob> blobs;
  std::vector<double> offset, grad_y, grad_x;  // per channel

  double eval(int c, double ty, double tx) const {
    double v = offset[c] + grad_y[c] * ty + grad_x[c] * tx;
    for (const Blob& b : blobs) {
      const double dy = ty - b.y;
      const double dx = tx - b.x;
      v += b.amp[c] * std::exp(-(dy * dy + dx * dx) / (2.0 * b.sigma * b.sigma));
    }
    return v;
  }
};

Texture random_target_texture(Rng& rng, const PairGenSpec& spec) {
  Texture tex;
  const double half = spec.target_size / 2.0;
  tex.offset.resize(spec.channels);
  tex.grad_y.resize(spec.channels);
  tex.grad_x.resize(spec.channels);
  for (int c = 0; c < spec.channels; ++c) {
    tex.offset[c] = rng.uniform(-0.3, 0.3);
    tex.grad_y[c] = rng.uniform(-0.03, 0.03);
    tex.grad_x[c] = rng.uniform(-0.03, 0.03);
  }
  for (int k = 0; k < spec.target_blobs; ++k) {
    Blob b;
    b.y = rng.uniform(-0.8 * half, 0.8 * half);
    b.x = rng.uniform(-0.8 * half, 0.8 * half);
    b.sigma = rng.uniform(1.5, 4.0);
    b.amp.resize(spec.channels);
    for (int c = 0; c < spec.channels; ++c) b.amp[c] = rng.uniform(-1.0, 1.0);
    tex.blobs.push_back(std::move(b));
  }
  return tex;
}

// Clutter blobs and pixel noise over the whole canvas.
void render_background(std::vector<double>& img, int size, Rng& rng,
                       const PairGenSpec& spec) {
  for (int k = 0; k < spec.clutter_blobs; ++k) {
    const double by = rng.uniform(0.0, double(size - 1));
    const double bx = rng.uniform(0.0, double(size - 1));
    const double sigma = rng.uniform(1.0, 5.0);
    std::vector<double> amp(spec.channels);
    for (int c = 0; c < spec.channels; ++c) {
      amp[c] = rng.uniform(-spec.clutter_amp, spec.clutter_amp);
    }
    const int lo_y = std::max(0, int(std::floor(by - 3.0 * sigma)));
    const int hi_y = std::min(size - 1, int(std::ceil(by + 3.0 * sigma)));
    const int lo_x = std::max(0, int(std::floor(bx - 3.0 * sigma)));
    const int hi_x = std::min(size - 1, int(std::ceil(bx + 3.0 * sigma)));
    for (int y = lo_y; y <= hi_y; ++y) {
      for (int x = lo_x; x <= hi_x; ++x) {
        const double dy = y - by;
        const double dx = x - bx;
        const double w = std::exp(-(dy * dy + dx * dx) / (2.0 * sigma * sigma));
        for (int c = 0; c < spec.channels; ++c) {
          img[(std::size_t(c) * size + y) * size + x] += amp[c] * w;
        }
      }
    }
  }
  if (spec.noise_amp > 0.0) {
    for (double& v : img) v += rng.uniform(-spec.noise_amp, spec.noise_amp);
  }
}

// Overwrites the target box: pixels whose inverse-affine local coordinates
// land inside the box take the texture value.
void render_target(std::vector<double>& img, int size, const Texture& tex,
                   double center_y, double center_x, double rot, double scl,
                   const PairGenSpec& spec) {
  const double half = spec.target_size / 2.0;
  const double cos_r = std::cos(rot);
  const double sin_r = std::sin(rot);
  const double reach = half * scl * (std::fabs(cos_r) + std::fabs(sin_r));
  const int lo_y = std::max(0, int(std::floor(center_y - reach)));
  const int hi_y = std::min(size - 1, int(std::ceil(center_y + reach)));
  const int lo_x = std::max(0, int(std::floor(center_x - reach)));
  const int hi_x = std::min(size - 1, int(std::ceil(center_x + reach)));
  for (int y = lo_y; y <= hi_y; ++y) {
    for (int x = lo_x; x <= hi_x; ++x) {
      const double dy = y - center_y;
      const double dx = x - center_x;
      // inverse of rotate-then-scale
      const double ty = (cos_r * dy + sin_r * dx) / scl;
      const double tx = (-sin_r * dy + cos_r * dx) / scl;
      if (std::fabs(ty) <= half && std::fabs(tx) <= half) {
        for (int c = 0; c < spec.channels; ++c) {
          img[(std::size_t(c) * size + y) * size + x] = tex.eval(c, ty, tx);
        }
      }
    }
  }
}

}  // namespace

SyntheticPair generate_pair(Rng& rng, const PairGenSpec& spec) {
  spec.validate();
  SyntheticPair pair;
  const int E = spec.exemplar_size;
  const int S = spec.search_size;
  pair.exemplar.assign(std::size_t(spec.channels) * E * E, 0.0);
  pair.search.assign(std::size_t(spec.channels) * S * S, 0.0);

  const Texture tex = random_target_texture(rng, spec);

  // exemplar: clutter margins, identity target in the middle
  render_background(pair.exemplar, E, rng, spec);
  render_target(pair.exemplar, E, tex, (E - 1) / 2.0, (E - 1) / 2.0,
                /*rot=*/0.0, /*scl=*/1.0, spec);

  // search: clutter everywhere, jittered target at a grid-aligned spot
  render_background(pair.search, S, rng, spec);
  const int span = 2 * spec.max_shift_steps + 1;
  pair.shift_steps_y = int(rng.uniform_int(std::uint64_t(span))) - spec.max_shift_steps;
  pair.shift_steps_x = int(rng.uniform_int(std::uint64_t(span))) - spec.max_shift_steps;
  pair.center_y = (S - 1) / 2.0 + double(spec.placement_step) * pair.shift_steps_y;
  pair.center_x = (S - 1) / 2.0 + double(spec.placement_step) * pair.shift_steps_x;
  const double rot = spec.rot_max > 0.0 ? rng.uniform(-spec.rot_max, spec.rot_max) : 0.0;
  const double scl = spec.scale_max > spec.scale_min
                         ? rng.uniform(spec.scale_min, spec.scale_max)
                         : spec.scale_min;
  render_target(pair.search, S, tex, pair.center_y, pair.center_x, rot, scl, spec);
  return pair;
}

}  // namespace scd
