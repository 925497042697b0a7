#include <set>

#include <gtest/gtest.h>

#include "dryobs/grid.hpp"
#include "dryobs/mask.hpp"

namespace dryobs {
namespace {

TEST(Grid, IndexRoundTripsThroughIjk) {
  const Grid g = build_grid(3, 4, 5, 1e-3);
  for (int idx = 0; idx < g.cell_count(); ++idx) {
    const auto p = g.ijk(idx);
    EXPECT_EQ(g.index(p.i, p.j, p.k), idx);
  }
  EXPECT_EQ(g.index(1, 2, 3), 1 + 3 * (2 + 4 * 3));
}

TEST(Grid, SurfaceCellCountOfTheReferenceParticle) {
  const Grid g = build_grid(10, 20, 5, 1e-3);
  // All cells minus the interior block of (nx-2)(ny-2)(nz-2).
  EXPECT_EQ(static_cast<int>(g.surface_cells().size()), 10 * 20 * 5 - 8 * 18 * 3);
  EXPECT_EQ(static_cast<int>(g.surface_cells().size()), 568);
}

TEST(Grid, SurfaceClassesFollowTheNumberOfExposedFaces) {
  const Grid g = build_grid(10, 20, 5, 1e-3);
  int faces = 0, edges = 0, corners = 0;
  for (const auto& sc : g.surface_cells()) {
    const std::string cls = surface_class(g, sc.cell);
    faces += cls == "face";
    edges += cls == "edge";
    corners += cls == "corner";
  }
  EXPECT_EQ(corners, 8);
  EXPECT_EQ(edges, 4 * (8 + 18 + 3));
  EXPECT_EQ(faces, 2 * (8 * 18 + 8 * 3 + 18 * 3));
}

TEST(Grid, FaceCountsMatchTheBoxTopology) {
  const Grid g = build_grid(3, 4, 5, 2e-3);
  EXPECT_EQ(static_cast<int>(g.interior_faces().size()), 2 * 4 * 5 + 3 * 3 * 5 + 3 * 4 * 4);
  EXPECT_EQ(static_cast<int>(g.boundary_faces().size()), 2 * (3 * 4 + 3 * 5 + 4 * 5));
  for (const auto& f : g.interior_faces()) {
    const auto a = g.ijk(f.a), b = g.ijk(f.b);
    const int d = std::abs(a.i - b.i) + std::abs(a.j - b.j) + std::abs(a.k - b.k);
    EXPECT_EQ(d, 1);
  }
  EXPECT_DOUBLE_EQ(g.cell_volume(), 8e-9);
}

TEST(Grid, FingerprintSeparatesGeometries) {
  EXPECT_EQ(build_grid(3, 4, 5, 1e-3).fingerprint(), build_grid(3, 4, 5, 1e-3).fingerprint());
  EXPECT_NE(build_grid(3, 4, 5, 1e-3).fingerprint(), build_grid(4, 3, 5, 1e-3).fingerprint());
  EXPECT_NE(build_grid(3, 4, 5, 1e-3).fingerprint(), build_grid(3, 4, 5, 2e-3).fingerprint());
}

TEST(Grid, RejectsEmptyDimensions) { EXPECT_THROW(build_grid(0, 1, 1, 1e-3), InvalidArgument); }

TEST(Mask, CenteredPatchHasRequestedSizeOnTheFace) {
  const Grid g = build_grid(10, 20, 5, 1e-3);
  const SurfaceMask m = centered_face_mask(g, Face::XMinus, 17, 3);
  EXPECT_EQ(m.size(), 51);
  std::set<int> unique(m.cells().begin(), m.cells().end());
  EXPECT_EQ(unique.size(), 51u);
  for (int c : m.cells()) {
    EXPECT_EQ(g.ijk(c).i, 0);
    EXPECT_GE(g.ijk(c).j, 1);
    EXPECT_LE(g.ijk(c).j, 17);
    EXPECT_GE(g.ijk(c).k, 1);
    EXPECT_LE(g.ijk(c).k, 3);
  }
}

TEST(Mask, InteriorCellsAreRejected) {
  const Grid g = build_grid(4, 4, 4, 1e-3);
  EXPECT_THROW(SurfaceMask(g, {g.index(1, 1, 1)}), InvalidArgument);
  EXPECT_THROW(SurfaceMask(g, {}), InvalidArgument);
  EXPECT_THROW(face_rectangle_mask(g, Face::ZPlus, 0, 4, 0, 0), InvalidArgument);
}

}  // namespace
}  // namespace dryobs
