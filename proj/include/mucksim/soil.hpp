#pragma once

#include <string>
#include <vector>

#include "mucksim/geometry.hpp"
#include "mucksim/rng.hpp"

namespace mucksim::soil {

struct SoilParams {
  double density = 2700.0;            // kg/m3
  double friction_angle_deg = 50.0;   // also the angle of repose
  double cohesion = 6000.0;           // Pa
  double penetration_scaling = 6.5;   // dimensionless multiplier
};

// density 2700 +- U(200), penetration scaling U(5, 8); friction and cohesion fixed.
SoilParams sample_soil(Rng& rng);

enum class PileShape { convex, concave, left_skewed, right_skewed };

const char* pile_shape_name(PileShape s);
PileShape pile_shape_from_name(const std::string& name);

struct PileSpec {
  PileShape shape = PileShape::convex;
  double apex_height = 4.0;    // m
  double toe_position = 11.0;  // longitudinal coordinate of the pile edge (m)
};

// Regular grid of soil heights over the drift floor. Row-major storage,
// rows indexed by the longitudinal cell iy.
class Heightfield {
 public:
  Heightfield() = default;
  Heightfield(int nx, int ny, double cell_size)
      : nx_(nx), ny_(ny), cell_(cell_size), h_(static_cast<size_t>(nx) * ny, 0.0) {}

  int nx() const { return nx_; }
  int ny() const { return ny_; }
  double cell_size() const { return cell_; }
  int generation = 0;

  double& at(int ix, int iy) { return h_[static_cast<size_t>(iy) * nx_ + ix]; }
  double at(int ix, int iy) const { return h_[static_cast<size_t>(iy) * nx_ + ix]; }
  const std::vector<double>& data() const { return h_; }
  std::vector<double>& data() { return h_; }

  // Lateral extent is centered on x = 0.
  double x_min() const { return -0.5 * nx_ * cell_; }
  double y_max() const { return ny_ * cell_; }
  double cell_center_x(int ix) const { return x_min() + (ix + 0.5) * cell_; }
  double cell_center_y(int iy) const { return (iy + 0.5) * cell_; }
  int cell_ix(double x) const { return static_cast<int>(std::floor((x - x_min()) / cell_)); }
  int cell_iy(double y) const { return static_cast<int>(std::floor(y / cell_)); }
  bool in_bounds(int ix, int iy) const { return ix >= 0 && ix < nx_ && iy >= 0 && iy < ny_; }

  // Surface height at a world point; cells are uniform columns, outside the
  // grid the height is 0.
  double height_at(double x, double y) const {
    const int ix = cell_ix(x);
    const int iy = cell_iy(y);
    return in_bounds(ix, iy) ? at(ix, iy) : 0.0;
  }

  bool operator==(const Heightfield& o) const {
    return nx_ == o.nx_ && ny_ == o.ny_ && cell_ == o.cell_ && h_ == o.h_;
  }

 private:
  int nx_ = 0, ny_ = 0;
  double cell_ = 0.32;
  std::vector<double> h_;
};

// Default grid: 28 x 60 cells at 0.32 m (8.96 m x 19.2 m).
constexpr int kDefaultNx = 28;
constexpr int kDefaultNy = 60;
constexpr double kDefaultCell = 0.32;
constexpr double kEdgeEpsilon = 0.05;  // m, pile edge detection threshold

// Slope from zero at the toe up to the apex at the back wall, never steeper
// than the angle of repose. The lateral toe line is modulated per shape and a
// small seeded roughness is added on the pile body.
Heightfield generate_pile(const PileSpec& spec, const DriftGeometry& drift, Rng& rng);

// Fundamental-earthmoving-equation style resistance:
//   F = penetration_scaling * (cohesion*d*w + 0.5*density*g*d^2*w*Kp),
// Kp = tan^2(45 deg + phi/2). Zero below engagement.
double dig_resistance(const SoilParams& soil, const CutState& cut);

// Lower covered cells to the cut plane; returns removed volume (m3).
double excavate(Heightfield& hf, const SweptRegion& region);

// Longitudinal spread of the pile edge: cells above the edge threshold that
// touch (4-neighborhood) a cell at or below it. Cells beyond the grid border
// count as solid so walls do not register as edge. Returns max y - min y of
// the edge cells, 0 for an empty pile.
double pile_edge_extent(const Heightfield& hf);

double pile_volume(const Heightfield& hf);
double pile_mass_tonnes(const Heightfield& hf, const SoilParams& soil);

// Pool of initial pile shapes with generation lineage tags.
class PilePool {
 public:
  void push(const Heightfield& hf, int parent_generation);
  const Heightfield& draw(Rng& rng, int max_generation) const;
  size_t draw_index(Rng& rng, int max_generation) const;
  size_t size() const { return entries_.size(); }
  const std::vector<Heightfield>& entries() const { return entries_; }
  const Heightfield& entry(size_t i) const { return entries_[i]; }

 private:
  std::vector<Heightfield> entries_;
};

// Flat binary snapshot: magic, version, nx, ny, cell size, generation, then
// the row-major f64 height array (little-endian).
void save_pile(const Heightfield& hf, const std::string& path);
Heightfield load_pile(const std::string& path);

}  // namespace mucksim::soil
