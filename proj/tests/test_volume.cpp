#include "test_util.hpp"

using namespace csnicp;

namespace {

SliceStack make_stack(std::vector<SliceMask> slices, double px, double sz) {
  SliceStack s;
  s.manifest.pixel_spacing_mm = px;
  s.manifest.slice_spacing_mm = sz;
  for (std::size_t i = 0; i < slices.size(); ++i) {
    slices[i].z_index = static_cast<int>(i);
    s.manifest.slice_files.push_back("s" + std::to_string(i) + ".pgm");
  }
  s.slices = std::move(slices);
  return s;
}

SliceMask rows_mask(int w, int h, int row_lo, int row_hi, int col = 3) {
  SliceMask m(w, h);
  for (int y = row_lo; y <= row_hi; ++y) m.set(col, y);
  return m;
}

SliceMask filled(int w, int h, std::uint8_t v) {
  SliceMask m(w, h);
  std::fill(m.bits.begin(), m.bits.end(), v);
  return m;
}

// Cubic Hermite form with Catmull-Rom tangents; written independently of the
// polynomial-coefficient form used by the library.
double hermite_oracle(double p0, double p1, double p2, double p3, double t) {
  const double m1 = 0.5 * (p2 - p0), m2 = 0.5 * (p3 - p1);
  const double h00 = 2 * t * t * t - 3 * t * t + 1, h10 = t * t * t - 2 * t * t + t;
  const double h01 = -2 * t * t * t + 3 * t * t, h11 = t * t * t - t * t;
  return h00 * p1 + h10 * m1 + h01 * p2 + h11 * m2;
}

// A solid ball of radius 20 pixels centered in a 64x64 grid, repeated across slices.
SliceStack disc_stack(double px, double sz, int slices) {
  std::vector<SliceMask> v;
  for (int s = 0; s < slices; ++s) {
    SliceMask m(64, 64);
    for (int y = 0; y < 64; ++y)
      for (int x = 0; x < 64; ++x)
        if ((x - 32) * (x - 32) + (y - 30) * (y - 30) <= 400) m.set(x, y);
    v.push_back(m);
  }
  return make_stack(v, px, sz);
}

}  // namespace

TEST(Volume, MaxExtentSingleSlice) {
  const auto s = make_stack({rows_mask(8, 32, 10, 20)}, 1.0, 1.0);
  EXPECT_DOUBLE_EQ(max_bone_extent_y(s), 11.0);
}

TEST(Volume, MaxExtentTakesLargestSliceThenScales) {
  const auto s = make_stack({rows_mask(8, 32, 2, 6), rows_mask(8, 32, 12, 20)}, 2.0, 1.0);
  EXPECT_DOUBLE_EQ(max_bone_extent_y(s), 18.0);
}

TEST(Volume, MaxExtentWithoutBoneThrows) {
  const auto s = make_stack({SliceMask(8, 8), SliceMask(8, 8)}, 1.0, 1.0);
  try {
    max_bone_extent_y(s);
    FAIL();
  } catch (const InvalidInputError& e) {
    EXPECT_NE(std::string(e.what()).find("no bone content"), std::string::npos);
  }
}

TEST(Volume, ScaleFactor) {
  const auto mr = make_stack({rows_mask(8, 256, 10, 209)}, 1.0, 1.0);
  const auto ct = make_stack({rows_mask(8, 256, 50, 149)}, 1.0, 1.0);
  EXPECT_DOUBLE_EQ(scale_factor(ct, mr), 2.0);
  EXPECT_DOUBLE_EQ(scale_factor(mr, mr), 1.0);
  const auto empty = make_stack({SliceMask(8, 8)}, 1.0, 1.0);
  EXPECT_THROW(scale_factor(empty, mr), InvalidInputError);
}

TEST(Volume, ConstantColumnsStayConstant) {
  SplitMix64 rng(4);
  const auto m = testutil::random_mask(12, 10, 0.4, rng);
  const auto vol = interpolate_z(make_stack({m, m}, 1.0, 5.0));
  ASSERT_EQ(vol.nz, 6);
  for (int z = 0; z < vol.nz; ++z)
    for (int y = 0; y < m.height; ++y)
      for (int x = 0; x < m.width; ++x) EXPECT_EQ(vol.at(x, y, z), m.at(x, y));
}

TEST(Volume, MidpointOfStepIsBoneAtInclusiveThreshold) {
  EXPECT_DOUBLE_EQ(hermite_oracle(1, 1, 0, 0, 0.5), 0.5);
  const auto vol = interpolate_z(make_stack({filled(4, 4, 1), filled(4, 4, 0)}, 1.0, 2.0));
  ASSERT_EQ(vol.nz, 3);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) {
      EXPECT_EQ(vol.at(x, y, 0), 1);
      EXPECT_EQ(vol.at(x, y, 1), 1);
      EXPECT_EQ(vol.at(x, y, 2), 0);
    }
}

TEST(Volume, ColumnProfileMatchesScalarOracle) {
  const std::vector<double> profile{0, 1, 1, 0};
  std::vector<SliceMask> slices;
  for (double v : profile) slices.push_back(filled(2, 2, static_cast<std::uint8_t>(v)));
  const double spacing = 3.0, pitch = 0.5;
  const auto vol = interpolate_z(make_stack(slices, pitch, spacing));
  ASSERT_EQ(vol.nz, static_cast<int>(3 * spacing / pitch) + 1);
  const int n = static_cast<int>(profile.size());
  for (int j = 0; j < vol.nz; ++j) {
    const double u = j * pitch / spacing;
    const int i = std::min(static_cast<int>(u), n - 2);
    const double t = u - i;
    const double v = hermite_oracle(profile[std::max(i - 1, 0)], profile[i], profile[i + 1],
                                    profile[std::min(i + 2, n - 1)], t);
    EXPECT_EQ(vol.at(1, 1, j), v >= 0.5 ? 1 : 0) << "output slice " << j << " oracle value " << v;
  }
}

TEST(Volume, InterpolationNeedsTwoSlices) {
  EXPECT_THROW(interpolate_z(make_stack({filled(2, 2, 1)}, 1.0, 1.0)), InvalidInputError);
}

TEST(Volume, IsolatedVoxelIsItsOwnSurface) {
  MaskVolume vol(5, 5, 5, Point3(0.5, 0.5, 2.0));
  vol.set(2, 3, 1);
  const auto cloud = extract_surface(vol);
  ASSERT_EQ(cloud.size(), 1u);
  EXPECT_EQ(cloud[0], Point3(1.0, 1.5, 2.0));
}

TEST(Volume, SolidBlockSurfaceMatchesNeighborOracle) {
  MaskVolume vol(5, 5, 5, Point3::Ones());
  for (int z = 1; z <= 3; ++z)
    for (int y = 1; y <= 3; ++y)
      for (int x = 1; x <= 3; ++x) vol.set(x, y, z);
  std::size_t expected = 0;
  for (int z = 1; z <= 3; ++z)
    for (int y = 1; y <= 3; ++y)
      for (int x = 1; x <= 3; ++x) {
        const bool interior = vol.at(x + 1, y, z) && vol.at(x - 1, y, z) && vol.at(x, y + 1, z) &&
                              vol.at(x, y - 1, z) && vol.at(x, y, z + 1) && vol.at(x, y, z - 1);
        expected += interior ? 0 : 1;
      }
  EXPECT_EQ(expected, 26u);
  const auto cloud = extract_surface(vol);
  EXPECT_EQ(cloud.size(), expected);
  for (const auto& p : cloud.points()) EXPECT_NE(p, Point3(2, 2, 2));
  EXPECT_EQ(extract_surface(vol, SurfaceMode::FullVoxel).size(), 27u);
}

TEST(Volume, EmptyVolumeGivesEmptyCloud) {
  EXPECT_TRUE(extract_surface(MaskVolume(4, 4, 4, Point3::Ones())).empty());
}

TEST(Volume, SelfReferencedCloudHasUnitYExtent) {
  const auto stack = disc_stack(0.8, 4.0, 4);
  const auto cloud = build_point_cloud(stack, 1.0);
  ASSERT_FALSE(cloud.empty());
  const auto [lo, hi] = cloud.bounds();
  const double voxel = stack.manifest.pixel_spacing_mm / max_bone_extent_y(stack);
  // Voxel centers span (rows - 1) pitches while the extent counts rows.
  EXPECT_NEAR(hi.y() - lo.y(), 1.0, voxel + 1e-12);
}

TEST(Volume, InPlaneScaleIsLinearBeforeNormalization) {
  const auto stack = disc_stack(1.0, 2.0, 3);
  BuildOptions opts;
  opts.normalizer = 1.0;
  const auto a = build_point_cloud(stack, 1.0, opts);
  const auto b = build_point_cloud(stack, 2.0, opts);
  // z is resampled at the scaled pitch, so compare slices lying at the same z.
  std::map<std::pair<double, double>, int> a_xy;
  for (const auto& p : a.points())
    if (p.z() == 0.0) a_xy[{p.x(), p.y()}] = 1;
  std::size_t matched = 0;
  for (const auto& p : b.points())
    if (p.z() == 0.0) {
      EXPECT_TRUE(a_xy.count({p.x() / 2.0, p.y() / 2.0})) << p.transpose();
      ++matched;
    }
  EXPECT_EQ(matched, a_xy.size());
}

TEST(Volume, EmptyStackCannotBuild) {
  const auto s = make_stack({SliceMask(8, 8), SliceMask(8, 8)}, 1.0, 1.0);
  EXPECT_THROW(build_point_cloud(s, 1.0), InvalidInputError);
}
