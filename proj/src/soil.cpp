#include "mucksim/soil.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace mucksim::soil {

SoilParams sample_soil(Rng& rng) {
  SoilParams p;
  p.density = 2700.0 + rng.uniform(-200.0, 200.0);
  p.penetration_scaling = rng.uniform(5.0, 8.0);
  return p;
}

const char* pile_shape_name(PileShape s) {
  switch (s) {
    case PileShape::convex: return "convex";
    case PileShape::concave: return "concave";
    case PileShape::left_skewed: return "left_skewed";
    case PileShape::right_skewed: return "right_skewed";
  }
  return "?";
}

PileShape pile_shape_from_name(const std::string& name) {
  if (name == "convex") return PileShape::convex;
  if (name == "concave") return PileShape::concave;
  if (name == "left_skewed") return PileShape::left_skewed;
  if (name == "right_skewed") return PileShape::right_skewed;
  throw std::invalid_argument("unknown pile shape: " + name);
}

namespace {

double toe_offset(PileShape shape, double x_norm) {
  // x_norm in [-1, 1] across the drift. Negative offset moves the toe toward
  // the entrance (more material).
  constexpr double kModAmp = 1.4;   // convex/concave bulge (m)
  constexpr double kSkewAmp = 1.8;  // skew ramp (m)
  switch (shape) {
    case PileShape::convex: return -kModAmp * std::cos(0.5 * kPi * x_norm);
    case PileShape::concave: return kModAmp * std::cos(0.5 * kPi * x_norm);
    case PileShape::left_skewed: return kSkewAmp * x_norm;
    case PileShape::right_skewed: return -kSkewAmp * x_norm;
  }
  return 0.0;
}

}  // namespace

Heightfield generate_pile(const PileSpec& spec, const DriftGeometry& drift, Rng& rng) {
  if (!(spec.apex_height > 0.0) || spec.apex_height > drift.height) {
    throw std::invalid_argument("pile apex height " + std::to_string(spec.apex_height) +
                                " outside (0, " + std::to_string(drift.height) + "]");
  }
  if (spec.toe_position < 2.0 || spec.toe_position > drift.length - 2.0) {
    throw std::invalid_argument("pile toe position " + std::to_string(spec.toe_position) +
                                " outside usable drift range");
  }

  Heightfield hf(kDefaultNx, kDefaultNy, kDefaultCell);
  const double tan_repose = std::tan(deg2rad(50.0));
  const double back = hf.y_max();

  for (int ix = 0; ix < hf.nx(); ++ix) {
    const double x = hf.cell_center_x(ix);
    const double x_norm = x / drift.half_width();
    const double toe = spec.toe_position + toe_offset(spec.shape, x_norm);
    const double run = std::max(back - toe, 0.5);
    const double slope = std::min(spec.apex_height / run, tan_repose);
    for (int iy = 0; iy < hf.ny(); ++iy) {
      const double y = hf.cell_center_y(iy);
      double h = std::clamp((y - toe) * slope, 0.0, spec.apex_height);
      if (h > 0.1) h += rng.uniform(-0.03, 0.03);
      hf.at(ix, iy) = std::max(h, 0.0);
    }
  }
  return hf;
}

double dig_resistance(const SoilParams& soil, const CutState& cut) {
  if (!std::isfinite(cut.depth) || !std::isfinite(cut.width) || cut.width < 0.0) {
    throw std::invalid_argument("dig_resistance: invalid cut state");
  }
  const double d = cut.depth;
  if (d <= 0.0) return 0.0;
  const double w = cut.width;
  const double kp_root = std::tan(deg2rad(45.0 + 0.5 * soil.friction_angle_deg));
  const double kp = kp_root * kp_root;
  return soil.penetration_scaling *
         (soil.cohesion * d * w + 0.5 * soil.density * kGravity * d * d * w * kp);
}

double excavate(Heightfield& hf, const SweptRegion& region) {
  const double plane = std::max(region.plane, 0.0);
  double removed = 0.0;
  const double area = hf.cell_size() * hf.cell_size();
  const int ix0 = std::max(hf.cell_ix(std::min(region.x0, region.x1)), 0);
  const int ix1 = std::min(hf.cell_ix(std::max(region.x0, region.x1)), hf.nx() - 1);
  const int iy0 = std::max(hf.cell_iy(std::min(region.y0, region.y1)), 0);
  const int iy1 = std::min(hf.cell_iy(std::max(region.y0, region.y1)), hf.ny() - 1);
  for (int iy = iy0; iy <= iy1; ++iy) {
    const double cy = hf.cell_center_y(iy);
    if (cy < std::min(region.y0, region.y1) || cy > std::max(region.y0, region.y1)) continue;
    for (int ix = ix0; ix <= ix1; ++ix) {
      const double cx = hf.cell_center_x(ix);
      if (cx < std::min(region.x0, region.x1) || cx > std::max(region.x0, region.x1)) continue;
      double& h = hf.at(ix, iy);
      if (h > plane) {
        removed += (h - plane) * area;
        h = plane;
      }
    }
  }
  return removed;
}

double pile_edge_extent(const Heightfield& hf) {
  double y_min = 0.0, y_max = 0.0;
  bool any = false;
  auto solid = [&](int ix, int iy) {
    if (!hf.in_bounds(ix, iy)) return true;  // walls are not edge
    return hf.at(ix, iy) > kEdgeEpsilon;
  };
  for (int iy = 0; iy < hf.ny(); ++iy) {
    for (int ix = 0; ix < hf.nx(); ++ix) {
      if (hf.at(ix, iy) <= kEdgeEpsilon) continue;
      const bool edge = !solid(ix - 1, iy) || !solid(ix + 1, iy) ||
                        !solid(ix, iy - 1) || !solid(ix, iy + 1);
      if (!edge) continue;
      const double y = hf.cell_center_y(iy);
      if (!any) {
        y_min = y_max = y;
        any = true;
      } else {
        y_min = std::min(y_min, y);
        y_max = std::max(y_max, y);
      }
    }
  }
  return any ? y_max - y_min : 0.0;
}

double pile_volume(const Heightfield& hf) {
  double v = 0.0;
  for (double h : hf.data()) v += h;
  return v * hf.cell_size() * hf.cell_size();
}

double pile_mass_tonnes(const Heightfield& hf, const SoilParams& soil) {
  return pile_volume(hf) * soil.density / 1000.0;
}

void PilePool::push(const Heightfield& hf, int parent_generation) {
  Heightfield copy = hf;
  copy.generation = parent_generation + 1;
  entries_.push_back(std::move(copy));
}

size_t PilePool::draw_index(Rng& rng, int max_generation) const {
  std::vector<size_t> eligible;
  for (size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].generation <= max_generation) eligible.push_back(i);
  }
  if (eligible.empty()) {
    throw std::runtime_error("PilePool::draw: no pile with generation <= " +
                             std::to_string(max_generation));
  }
  return eligible[static_cast<size_t>(rng.uniform_int(0, static_cast<int>(eligible.size()) - 1))];
}

const Heightfield& PilePool::draw(Rng& rng, int max_generation) const {
  return entries_[draw_index(rng, max_generation)];
}

namespace {
constexpr char kPileMagic[8] = {'M', 'U', 'C', 'K', 'P', 'I', 'L', 'E'};
constexpr uint32_t kPileVersion = 1;
}  // namespace

void save_pile(const Heightfield& hf, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("save_pile: cannot open " + path);
  f.write(kPileMagic, 8);
  auto w32 = [&](uint32_t v) { f.write(reinterpret_cast<const char*>(&v), 4); };
  w32(kPileVersion);
  w32(static_cast<uint32_t>(hf.nx()));
  w32(static_cast<uint32_t>(hf.ny()));
  const double cell = hf.cell_size();
  f.write(reinterpret_cast<const char*>(&cell), 8);
  const int32_t gen = hf.generation;
  f.write(reinterpret_cast<const char*>(&gen), 4);
  f.write(reinterpret_cast<const char*>(hf.data().data()),
          static_cast<std::streamsize>(hf.data().size() * sizeof(double)));
  if (!f) throw std::runtime_error("save_pile: write failed for " + path);
}

Heightfield load_pile(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("load_pile: cannot open " + path);
  char magic[8];
  f.read(magic, 8);
  if (!f || std::memcmp(magic, kPileMagic, 8) != 0) {
    throw std::runtime_error("load_pile: bad magic in " + path);
  }
  auto r32 = [&]() {
    uint32_t v = 0;
    f.read(reinterpret_cast<char*>(&v), 4);
    return v;
  };
  const uint32_t version = r32();
  if (version != kPileVersion) throw std::runtime_error("load_pile: unsupported version");
  const uint32_t nx = r32();
  const uint32_t ny = r32();
  double cell = 0.0;
  f.read(reinterpret_cast<char*>(&cell), 8);
  int32_t gen = 0;
  f.read(reinterpret_cast<char*>(&gen), 4);
  Heightfield hf(static_cast<int>(nx), static_cast<int>(ny), cell);
  hf.generation = gen;
  f.read(reinterpret_cast<char*>(hf.data().data()),
         static_cast<std::streamsize>(hf.data().size() * sizeof(double)));
  if (!f) throw std::runtime_error("load_pile: truncated file " + path);
  return hf;
}

}  // namespace mucksim::soil
