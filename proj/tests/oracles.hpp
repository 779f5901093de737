#pragma once

// Independent reference computations used by the tests. None of these call into the library's
// geometry beyond the plain data types.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "mono3dt/mono3dt.hpp"

namespace oracle {

using mono3dt::Box2D;
using mono3dt::Box3D;
using mono3dt::CameraPose;
using mono3dt::Vec2;
using mono3dt::Vec3;

inline CameraPose random_pose(std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  Eigen::Quaterniond q(g(rng), g(rng), g(rng), g(rng));
  q.normalize();
  CameraPose p;
  p.rotation = q.toRotationMatrix();
  p.translation = Vec3(g(rng), g(rng), g(rng)) * 20.0;
  return p;
}

inline Box3D random_box(std::mt19937_64& rng, double spread = 2.0) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const Vec3 c((u(rng) - 0.5) * spread, (u(rng) - 0.5) * spread, (u(rng) - 0.5) * 0.5 * spread);
  const Vec3 d(0.5 + 4.0 * u(rng), 0.5 + 2.0 * u(rng), 0.5 + 1.5 * u(rng));
  return Box3D(c, d, 2.0 * std::numbers::pi * u(rng));
}

// Point in the oriented box, tested in the box frame.
inline bool inside(const Box3D& b, const Vec3& p) {
  const Vec3 d = p - b.center;
  const double c = std::cos(b.yaw()), s = std::sin(b.yaw());
  const double x = c * d.x() + s * d.y();
  const double y = -s * d.x() + c * d.y();
  return std::abs(x) <= 0.5 * b.length() && std::abs(y) <= 0.5 * b.width() && std::abs(d.z()) <= 0.5 * b.height();
}

// Radius of the sphere around the center that contains the box.
inline double bounding_radius(const Box3D& b) { return 0.5 * b.dims.norm(); }

inline void aabb(const Box3D& b, Vec3& lo, Vec3& hi) {
  const double c = std::abs(std::cos(b.yaw())), s = std::abs(std::sin(b.yaw()));
  const Vec3 half(0.5 * (c * b.length() + s * b.width()), 0.5 * (s * b.length() + c * b.width()), 0.5 * b.height());
  lo = b.center - half;
  hi = b.center + half;
}

/// Volume IoU: the intersection volume is sampled uniformly inside the overlap of both
/// axis-aligned bounds, the union uses the exact box volumes.
inline double monte_carlo_iou_3d(const Box3D& a, const Box3D& b, long samples, std::uint64_t seed) {
  Vec3 la, ha, lb, hb;
  aabb(a, la, ha);
  aabb(b, lb, hb);
  const Vec3 lo = la.cwiseMax(lb), hi = ha.cwiseMin(hb);
  if ((hi - lo).minCoeff() <= 0.0) return 0.0;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> ux(lo.x(), hi.x()), uy(lo.y(), hi.y()), uz(lo.z(), hi.z());
  long in_both = 0;
  for (long i = 0; i < samples; ++i) {
    const Vec3 p(ux(rng), uy(rng), uz(rng));
    in_both += inside(a, p) && inside(b, p);
  }
  const double inter = static_cast<double>(in_both) / static_cast<double>(samples) * (hi - lo).prod();
  return inter / (a.volume() + b.volume() - inter);
}

/// BEV intersection area on a regular grid of `n` x `n` cell centers.
inline double raster_bev_intersection(const Box3D& a, const Box3D& b, int n) {
  const double r = std::max(bounding_radius(a), bounding_radius(b));
  const Vec2 lo = a.center.head<2>().cwiseMin(b.center.head<2>()).array() - r;
  const Vec2 hi = a.center.head<2>().cwiseMax(b.center.head<2>()).array() + r;
  const double dx = (hi.x() - lo.x()) / n, dy = (hi.y() - lo.y()) / n;
  long count = 0;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      const Vec3 p(lo.x() + (i + 0.5) * dx, lo.y() + (j + 0.5) * dy, a.center.z());
      Box3D fa = a, fb = b;
      fa.center.z() = fb.center.z() = a.center.z();
      if (inside(fa, p) && inside(fb, p)) ++count;
    }
  }
  return static_cast<double>(count) * dx * dy;
}

/// Integer-pixel rasterization of two boxes with integer corners.
inline double raster_iou_2d(const Box2D& a, const Box2D& b) {
  const int x0 = static_cast<int>(std::floor(std::min(a.x_min, b.x_min)));
  const int x1 = static_cast<int>(std::ceil(std::max(a.x_max, b.x_max)));
  const int y0 = static_cast<int>(std::floor(std::min(a.y_min, b.y_min)));
  const int y1 = static_cast<int>(std::ceil(std::max(a.y_max, b.y_max)));
  auto in = [](const Box2D& r, double x, double y) { return x > r.x_min && x < r.x_max && y > r.y_min && y < r.y_max; };
  long inter = 0, uni = 0;
  for (int x = x0; x < x1; ++x) {
    for (int y = y0; y < y1; ++y) {
      const bool ia = in(a, x + 0.5, y + 0.5), ib = in(b, x + 0.5, y + 0.5);
      inter += ia && ib;
      uni += ia || ib;
    }
  }
  return uni > 0 ? static_cast<double>(inter) / static_cast<double>(uni) : 0.0;
}

struct Layer {
  Box2D box;
  double depth;
};

/// Painter's rule on a pixel grid: each pixel belongs to the nearest box drawn there. Returns, for
/// each box, IoU between its owned pixels and the detection box (pixels of the detection that the
/// box owns count as intersection; the union is owned + detection - intersection).
inline std::vector<double> raster_painter_overlap(const std::vector<Layer>& layers, const Box2D& det, int width,
                                                  int height) {
  const std::size_t n = layers.size();
  std::vector<long> owned(n, 0), inter(n, 0);
  long det_px = 0;
  auto in = [](const Box2D& r, double x, double y) { return x > r.x_min && x < r.x_max && y > r.y_min && y < r.y_max; };
  for (int x = 0; x < width; ++x) {
    for (int y = 0; y < height; ++y) {
      const double px = x + 0.5, py = y + 0.5;
      const bool in_det = in(det, px, py);
      det_px += in_det;
      int owner = -1;
      for (std::size_t k = 0; k < n; ++k)
        if (in(layers[k].box, px, py) && (owner < 0 || layers[k].depth < layers[static_cast<std::size_t>(owner)].depth))
          owner = static_cast<int>(k);
      if (owner < 0) continue;
      ++owned[static_cast<std::size_t>(owner)];
      if (in_det) ++inter[static_cast<std::size_t>(owner)];
    }
  }
  std::vector<double> out(n, 0.0);
  for (std::size_t k = 0; k < n; ++k) {
    const double u = static_cast<double>(owned[k] + det_px - inter[k]);
    out[k] = u > 0.0 ? static_cast<double>(inter[k]) / u : 0.0;
  }
  return out;
}

/// Maximum over all partial injections rows -> cols (columns may stay unused) of the summed
/// weights, only through allowed entries.
inline double brute_force_max(const Eigen::MatrixXd& w, const Eigen::Matrix<bool, -1, -1>* allowed = nullptr) {
  const int r = static_cast<int>(w.rows()), c = static_cast<int>(w.cols());
  std::vector<char> used(static_cast<std::size_t>(c), 0);
  double best = 0.0;
  auto rec = [&](auto&& self, int row, double acc) -> void {
    if (row == r) {
      best = std::max(best, acc);
      return;
    }
    self(self, row + 1, acc);  // row left unmatched
    for (int j = 0; j < c; ++j) {
      if (used[static_cast<std::size_t>(j)] || (allowed && !(*allowed)(row, j))) continue;
      used[static_cast<std::size_t>(j)] = 1;
      self(self, row + 1, acc + w(row, j));
      used[static_cast<std::size_t>(j)] = 0;
    }
  };
  rec(rec, 0, 0.0);
  return best;
}

}  // namespace oracle
