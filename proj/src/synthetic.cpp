// Procedural stand-in for pedestrian crops from a fixed surveillance camera.
//
// A figure is drawn in "body" coordinates: units of its bounding-box height,
// origin at the box centre, y pointing down, upright extent [-0.2, 0.2] x
// [-0.5, 0.5]. The bounding box is stretched onto the crop window like a
// detector crop resized to a square input.

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <optional>

#include "adnl/datasets.hpp"
#include "adnl/rng.hpp"

namespace adnl {
namespace {

using Rgb = std::array<double, 3>;

enum Scenario : int { kWalking = 0, kFallen = 1, kRunning = 2, kGroup = 3, kSaturated = 4 };

struct Figure {
  double cx = 0, cy = 0;      // box centre, pixels
  double box_w = 1, box_h = 1;  // box size, pixels
  double rotation = 0;        // radians, about the box centre in body space
  double scale = 1;           // body units shrink factor (fallen/group)
  double gait = 0.2;          // leg half-angle, radians
  double arm_swing = 0.2;
  double lean = 0;
  Rgb shirt{}, pants{}, skin{};
};

struct Segment {
  double ax, ay, bx, by, radius;
};

double segment_distance(double px, double py, const Segment& s) {
  const double vx = s.bx - s.ax, vy = s.by - s.ay;
  const double t = std::clamp(((px - s.ax) * vx + (py - s.ay) * vy) / (vx * vx + vy * vy), 0.0, 1.0);
  const double dx = px - (s.ax + t * vx), dy = py - (s.ay + t * vy);
  return std::sqrt(dx * dx + dy * dy);
}

Segment limb(double ax, double ay, double angle, double length, double radius) {
  return {ax, ay, ax + std::sin(angle) * length, ay + std::cos(angle) * length, radius};
}

// Colour of the figure at pixel (px, py), if it covers it.
std::optional<Rgb> shade(const Figure& f, double px, double py) {
  // Pixel -> body coordinates: undo the box stretch, then the rotation.
  double u = (px - f.cx) / f.box_w * 0.4;
  double v = (py - f.cy) / f.box_h;
  const double c = std::cos(f.rotation), s = std::sin(f.rotation);
  const double ru = (c * u + s * v) / f.scale;
  const double rv = (-s * u + c * v) / f.scale;
  // Lean shears the upper body forward.
  const double lu = ru - f.lean * std::min(0.0, rv);
  const double lv = rv;

  const double head_dx = lu, head_dy = lv + 0.39;
  if (head_dx * head_dx + head_dy * head_dy < 0.075 * 0.075) return f.skin;

  const double tx = lu / 0.12, ty = (lv + 0.14) / 0.19;
  const bool torso = tx * tx + ty * ty < 1.0;

  const std::array<Segment, 2> arms{limb(-0.11, -0.27, f.arm_swing, 0.28, 0.028),
                                    limb(0.11, -0.27, -f.arm_swing, 0.28, 0.028)};
  for (const auto& arm : arms) {
    if (segment_distance(lu, lv, arm) < arm.radius) return torso ? f.shirt : Rgb{f.shirt[0] * 0.85, f.shirt[1] * 0.85, f.shirt[2] * 0.85};
  }
  if (torso) return f.shirt;

  const std::array<Segment, 2> legs{limb(-0.045, 0.02, f.gait, 0.46, 0.04), limb(0.045, 0.02, -f.gait, 0.46, 0.04)};
  for (const auto& leg : legs) {
    if (segment_distance(lu, lv, leg) < leg.radius) return f.pants;
  }
  return std::nullopt;
}

Rgb hsv(double h, double s, double v) {
  const double c = v * s, hp = std::fmod(h, 1.0) * 6.0, x = c * (1 - std::abs(std::fmod(hp, 2.0) - 1));
  Rgb rgb{};
  switch (static_cast<int>(hp)) {
    case 0: rgb = {c, x, 0}; break;
    case 1: rgb = {x, c, 0}; break;
    case 2: rgb = {0, c, x}; break;
    case 3: rgb = {0, x, c}; break;
    case 4: rgb = {x, 0, c}; break;
    default: rgb = {c, 0, x}; break;
  }
  const double m = v - c;
  return {(rgb[0] + m) * 255, (rgb[1] + m) * 255, (rgb[2] + m) * 255};
}

Rgb ordinary_shirt(Rng& rng) {
  if (uniform01(rng) < 0.85) {
    const double g = uniform(rng, 35, 225);
    return {g, g, g};
  }
  return hsv(uniform01(rng), uniform(rng, 0.15, 0.4), uniform(rng, 0.35, 0.85));
}

Figure base_figure(Rng& rng, double window_w, double window_h, double size, bool oversize) {
  // Detector crops: the box fills the window; oversize crops add context.
  const double box_w = oversize ? window_w / 2.5 : window_w;
  const double box_h = oversize ? window_h / 1.5 : window_h;
  Figure f;
  f.box_w = box_w * uniform(rng, 0.92, 1.0);
  f.box_h = box_h * uniform(rng, 0.92, 1.0);
  f.cx = size / 2 + uniform(rng, -0.04, 0.04) * size;
  f.cy = size / 2 + uniform(rng, -0.03, 0.03) * size;
  f.gait = uniform(rng, 0.04, 0.32);
  f.arm_swing = uniform(rng, 0.02, 0.22) * (uniform01(rng) < 0.5 ? -1 : 1);
  f.shirt = ordinary_shirt(rng);
  const double p = uniform(rng, 20, 90);
  f.pants = uniform01(rng) < 0.7 ? Rgb{p, p, p} : Rgb{p * 0.6, p * 0.7, p * 1.3};
  const double tone = uniform(rng, 0.55, 1.0);
  f.skin = {230 * tone, 185 * tone, 150 * tone};
  return f;
}

LabeledSample render(Rng& rng, Scenario scenario, bool oversize, int size, std::int64_t id) {
  const double sz = size;
  std::vector<Figure> figures;
  Figure f = base_figure(rng, sz, sz, sz, oversize);
  switch (scenario) {
    case kWalking:
      figures.push_back(f);
      break;
    case kFallen:
      f.rotation = (uniform01(rng) < 0.5 ? 1 : -1) * uniform(rng, 1.2, 1.7);
      f.scale = uniform(rng, 0.4, 0.55);
      f.cy += uniform(rng, 0.05, 0.2) * sz;
      figures.push_back(f);
      break;
    case kRunning:
      f.gait = uniform(rng, 0.45, 0.7);
      f.arm_swing = uniform(rng, 0.5, 0.9) * (uniform01(rng) < 0.5 ? -1 : 1);
      f.lean = uniform(rng, 0.15, 0.35) * (uniform01(rng) < 0.5 ? -1 : 1);
      figures.push_back(f);
      break;
    case kGroup: {
      const int count = uniform01(rng) < 0.5 ? 2 : 3;
      for (int k = 0; k < count; ++k) {
        Figure g = base_figure(rng, sz, sz, sz, oversize);
        g.scale = uniform(rng, 0.6, 0.8);
        g.cx = sz * (0.5 + (k - (count - 1) / 2.0) * uniform(rng, 0.22, 0.3));
        g.cy += uniform(rng, -0.05, 0.1) * sz;
        figures.push_back(g);
      }
      break;
    }
    case kSaturated:
      f.shirt = hsv(uniform01(rng), uniform(rng, 0.8, 1.0), uniform(rng, 0.75, 1.0));
      if (uniform01(rng) < 0.5) f.pants = hsv(uniform01(rng), uniform(rng, 0.7, 1.0), uniform(rng, 0.5, 0.9));
      figures.push_back(f);
      break;
  }

  const double floor = uniform(rng, 95, 150);
  const double slope = uniform(rng, -25, 25);
  const Rgb tint{uniform(rng, 0.95, 1.05), uniform(rng, 0.95, 1.05), uniform(rng, 0.95, 1.05)};

  LabeledSample sample;
  sample.image = RawImage{3, size, size, std::vector<std::uint8_t>(static_cast<std::size_t>(3) * size * size)};
  sample.label = scenario == kWalking ? Label::normal : Label::abnormal;
  sample.source_id = id;
  sample.class_tag = scenario;
  const std::size_t plane = static_cast<std::size_t>(size) * size;
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      Rgb acc{0, 0, 0};
      // 2x2 supersampling.
      for (int sy = 0; sy < 2; ++sy) {
        for (int sx = 0; sx < 2; ++sx) {
          const double px = x + 0.25 + 0.5 * sx, py = y + 0.25 + 0.5 * sy;
          Rgb colour;
          const double bg = floor + slope * (py / sz - 0.5);
          colour = {bg * tint[0], bg * tint[1], bg * tint[2]};
          for (const Figure& fig : figures) {
            if (auto hit = shade(fig, px, py)) colour = *hit;
          }
          for (int c = 0; c < 3; ++c) acc[c] += colour[c] * 0.25;
        }
      }
      for (int c = 0; c < 3; ++c) {
        const double noisy = acc[c] + uniform(rng, -6, 6);
        sample.image.pixels[c * plane + static_cast<std::size_t>(y) * size + x] =
            static_cast<std::uint8_t>(std::clamp(std::lround(noisy), 0L, 255L));
      }
    }
  }
  return sample;
}

}  // namespace

std::vector<LabeledSample> render_synthetic_patches(int n_normal, int n_abnormal, bool oversize, std::uint64_t seed,
                                                    int render_size) {
  if (n_normal <= 0 || n_abnormal <= 0) throw DatasetError("synthetic dataset needs positive sample counts");
  if (render_size < 8) throw DatasetError("synthetic render size must be >= 8");
  std::vector<LabeledSample> out;
  out.reserve(static_cast<std::size_t>(n_normal + n_abnormal));
  // Each sample draws from its own stream.
  for (int i = 0; i < n_normal + n_abnormal; ++i) {
    Rng rng(mix_seed(seed, static_cast<std::uint64_t>(i)));
    Scenario scenario = kWalking;
    if (i >= n_normal) scenario = static_cast<Scenario>(1 + uniform_below(rng, 4));
    out.push_back(render(rng, scenario, oversize, render_size, i));
  }
  return out;
}

}  // namespace adnl
