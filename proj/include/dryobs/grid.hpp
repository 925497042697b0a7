#pragma once

#include <array>
#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include "dryobs/errors.hpp"

namespace dryobs {

enum class Axis : int { X = 0, Y = 1, Z = 2 };

/// Outward face normal of a boundary cell.
enum class Face : int { XMinus = 0, XPlus, YMinus, YPlus, ZMinus, ZPlus };

inline Axis face_axis(Face f) { return static_cast<Axis>(static_cast<int>(f) / 2); }

inline const char* face_label(Face f) {
  static constexpr std::array<const char*, 6> labels{"x-", "x+", "y-", "y+", "z-", "z+"};
  return labels[static_cast<int>(f)];
}

inline Face parse_face(const std::string& s) {
  for (int f = 0; f < 6; ++f) {
    if (s == face_label(static_cast<Face>(f))) return static_cast<Face>(f);
  }
  throw InvalidArgument("unknown face label '" + s + "' (expected x-, x+, y-, y+, z-, z+)");
}

inline const char* axis_label(Axis a) {
  static constexpr std::array<const char*, 3> labels{"x", "y", "z"};
  return labels[static_cast<int>(a)];
}

inline Axis parse_axis(const std::string& s) {
  if (s == "x") return Axis::X;
  if (s == "y") return Axis::Y;
  if (s == "z") return Axis::Z;
  throw InvalidArgument("unknown axis '" + s + "' (expected x, y or z)");
}

struct CellIndex3 {
  int i, j, k;
};

/// Two cells sharing a face; b is the neighbour of a in the +axis direction.
struct InteriorFace {
  int a, b;
  Axis axis;
};

struct BoundaryFace {
  int cell;
  Face face;
};

struct SurfaceCell {
  int cell;
  std::vector<Face> normals;
};

/// Cartesian grid of cubic finite volumes. Cell index = i + nx*(j + ny*k).
class Grid {
 public:
  Grid() = default;

  Grid(int nx, int ny, int nz, double cell_size, Axis fiber_axis = Axis::X)
      : nx_(nx), ny_(ny), nz_(nz), cell_size_(cell_size), fiber_axis_(fiber_axis) {
    if (nx < 1 || ny < 1 || nz < 1) {
      throw InvalidArgument("grid dimensions must be >= 1, got " + std::to_string(nx) + "x" +
                            std::to_string(ny) + "x" + std::to_string(nz));
    }
    if (!(cell_size > 0.0)) throw InvalidArgument("cell size must be > 0");
    build_topology();
  }

  int nx() const { return nx_; }
  int ny() const { return ny_; }
  int nz() const { return nz_; }
  int cell_count() const { return nx_ * ny_ * nz_; }
  double cell_size() const { return cell_size_; }
  double cell_volume() const { return cell_size_ * cell_size_ * cell_size_; }
  double face_area() const { return cell_size_ * cell_size_; }
  Axis fiber_axis() const { return fiber_axis_; }

  int index(int i, int j, int k) const { return i + nx_ * (j + ny_ * k); }

  CellIndex3 ijk(int idx) const {
    const int i = idx % nx_;
    const int j = (idx / nx_) % ny_;
    const int k = idx / (nx_ * ny_);
    return {i, j, k};
  }

  bool contains(int idx) const { return idx >= 0 && idx < cell_count(); }
  bool is_surface(int idx) const { return contains(idx) && surface_slot_[idx] >= 0; }

  const std::vector<InteriorFace>& interior_faces() const { return interior_; }
  const std::vector<BoundaryFace>& boundary_faces() const { return boundary_; }
  const std::vector<SurfaceCell>& surface_cells() const { return surface_; }

  /// Outward normals of a surface cell (empty for interior cells).
  const std::vector<Face>& normals(int idx) const {
    static const std::vector<Face> none;
    return is_surface(idx) ? surface_[surface_slot_[idx]].normals : none;
  }

  /// Stable fingerprint of the geometry (dims, spacing, fiber axis).
  std::uint64_t fingerprint() const {
    std::uint64_t h = 1469598103934665603ULL;
    auto mix = [&h](std::uint64_t v) {
      for (int b = 0; b < 8; ++b) {
        h ^= (v >> (8 * b)) & 0xffU;
        h *= 1099511628211ULL;
      }
    };
    mix(static_cast<std::uint64_t>(nx_));
    mix(static_cast<std::uint64_t>(ny_));
    mix(static_cast<std::uint64_t>(nz_));
    std::uint64_t bits = 0;
    static_assert(sizeof(bits) == sizeof(cell_size_));
    std::memcpy(&bits, &cell_size_, sizeof(bits));
    mix(bits);
    mix(static_cast<std::uint64_t>(fiber_axis_));
    return h;
  }

  bool same_geometry(const Grid& o) const {
    return nx_ == o.nx_ && ny_ == o.ny_ && nz_ == o.nz_ && cell_size_ == o.cell_size_ &&
           fiber_axis_ == o.fiber_axis_;
  }

 private:
  void build_topology() {
    const int n = cell_count();
    surface_slot_.assign(n, -1);
    interior_.clear();
    boundary_.clear();
    surface_.clear();
    const std::array<int, 3> dims{nx_, ny_, nz_};
    for (int idx = 0; idx < n; ++idx) {
      const auto c = ijk(idx);
      const std::array<int, 3> p{c.i, c.j, c.k};
      std::vector<Face> normals;
      for (int ax = 0; ax < 3; ++ax) {
        if (p[ax] == 0) normals.push_back(static_cast<Face>(2 * ax));
        if (p[ax] == dims[ax] - 1) normals.push_back(static_cast<Face>(2 * ax + 1));
        if (p[ax] + 1 < dims[ax]) {
          std::array<int, 3> q = p;
          ++q[ax];
          interior_.push_back({idx, index(q[0], q[1], q[2]), static_cast<Axis>(ax)});
        }
      }
      if (!normals.empty()) {
        surface_slot_[idx] = static_cast<int>(surface_.size());
        for (Face f : normals) boundary_.push_back({idx, f});
        surface_.push_back({idx, std::move(normals)});
      }
    }
  }

  int nx_ = 0, ny_ = 0, nz_ = 0;
  double cell_size_ = 0.0;
  Axis fiber_axis_ = Axis::X;
  std::vector<int> surface_slot_;
  std::vector<InteriorFace> interior_;
  std::vector<BoundaryFace> boundary_;
  std::vector<SurfaceCell> surface_;
};

inline Grid build_grid(int nx, int ny, int nz, double cell_size, Axis fiber_axis = Axis::X) {
  return Grid(nx, ny, nz, cell_size, fiber_axis);
}

}  // namespace dryobs
