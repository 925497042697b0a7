#pragma once

#include <algorithm>
#include <array>
#include <string>
#include <vector>

#include "dryobs/errors.hpp"
#include "dryobs/grid.hpp"

namespace dryobs {

/// Set of boundary cells whose temperatures are averaged into one output.
class SurfaceMask {
 public:
  SurfaceMask() = default;

  SurfaceMask(const Grid& grid, std::vector<int> cells) : cells_(std::move(cells)) {
    if (cells_.empty()) throw InvalidArgument("invalid mask: no cells");
    for (int c : cells_) {
      if (!grid.is_surface(c)) {
        throw InvalidArgument("invalid mask: cell " + std::to_string(c) + " is not a surface cell");
      }
    }
  }

  const std::vector<int>& cells() const { return cells_; }
  int size() const { return static_cast<int>(cells_.size()); }

 private:
  std::vector<int> cells_;
};

/// In-plane axes of a face, in increasing axis order.
inline std::array<Axis, 2> face_plane_axes(Face f) {
  switch (face_axis(f)) {
    case Axis::X: return {Axis::Y, Axis::Z};
    case Axis::Y: return {Axis::X, Axis::Z};
    default: return {Axis::X, Axis::Y};
  }
}

inline int axis_extent(const Grid& g, Axis a) {
  return a == Axis::X ? g.nx() : (a == Axis::Y ? g.ny() : g.nz());
}

/// Cells of `face` with in-plane coordinates u in [u0, u1], v in [v0, v1] (inclusive).
inline SurfaceMask face_rectangle_mask(const Grid& g, Face face, int u0, int u1, int v0, int v1) {
  const auto [ua, va] = face_plane_axes(face);
  if (u0 < 0 || v0 < 0 || u1 >= axis_extent(g, ua) || v1 >= axis_extent(g, va) || u0 > u1 ||
      v0 > v1) {
    throw InvalidArgument("face rectangle outside the face");
  }
  const Axis na = face_axis(face);
  const bool plus = static_cast<int>(face) % 2 == 1;
  const int fixed = plus ? axis_extent(g, na) - 1 : 0;
  std::vector<int> cells;
  for (int v = v0; v <= v1; ++v) {
    for (int u = u0; u <= u1; ++u) {
      std::array<int, 3> p{};
      p[static_cast<int>(na)] = fixed;
      p[static_cast<int>(ua)] = u;
      p[static_cast<int>(va)] = v;
      cells.push_back(g.index(p[0], p[1], p[2]));
    }
  }
  return SurfaceMask(g, std::move(cells));
}

/// Rectangle of nu x nv cells centred on `face` (rounded towards the low side).
inline SurfaceMask centered_face_mask(const Grid& g, Face face, int nu, int nv) {
  const auto [ua, va] = face_plane_axes(face);
  const int eu = axis_extent(g, ua), ev = axis_extent(g, va);
  if (nu < 1 || nv < 1 || nu > eu || nv > ev) throw InvalidArgument("rectangle larger than face");
  const int u0 = (eu - nu) / 2, v0 = (ev - nv) / 2;
  return face_rectangle_mask(g, face, u0, u0 + nu - 1, v0, v0 + nv - 1);
}

inline SurfaceMask single_cell_mask(const Grid& g, int cell) { return SurfaceMask(g, {cell}); }

/// "face" for one outward normal, "edge" for two, "corner" for three or more.
inline std::string surface_class(const Grid& g, int cell) {
  const auto n = g.normals(cell).size();
  if (n == 0) return "interior";
  if (n == 1) return "face";
  if (n == 2) return "edge";
  return "corner";
}

inline std::string normals_label(const Grid& g, int cell) {
  std::string out;
  for (Face f : g.normals(cell)) {
    if (!out.empty()) out += '|';
    out += face_label(f);
  }
  return out;
}

}  // namespace dryobs
