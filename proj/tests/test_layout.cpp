#include <catch2/catch_amalgamated.hpp>

#include "gentact/layout.hpp"
#include "helpers.hpp"

using namespace gentact;
using testutil::make_grid_patch;

TEST_CASE("poisson_disk_sample respects the minimum distance") {
  auto patch = make_grid_patch(10, 10, 0.01, 0.01);  // 0.1 x 0.1 m

  SECTION("r_min larger than the patch diagonal yields at most one point") {
    auto pts = poisson_disk_sample(patch, 1.0, 7);
    CHECK(pts.size() <= 1);
  }

  SECTION("deterministic for a fixed seed") {
    auto a = poisson_disk_sample(patch, 0.02, 42);
    auto b = poisson_disk_sample(patch, 0.02, 42);
    REQUIRE(a.size() == b.size());
    for (size_t i = 0; i < a.size(); ++i) {
      CHECK(a[i].face_id == b[i].face_id);
      CHECK(distance(a[i].point, b[i].point) == 0.0);
    }
  }

  SECTION("pairwise distances hold over seeds, count in packing band") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      auto pts = poisson_disk_sample(patch, 0.02, seed);
      std::vector<Vec3> ps;
      for (const auto& s : pts) ps.push_back(s.point);
      CHECK(testutil::all_pairs_at_least(ps, 0.02));
      CHECK(pts.size() >= 12);
      CHECK(pts.size() <= 25);
    }
  }

  SECTION("sample points lie on their reported face") {
    auto pts = poisson_disk_sample(patch, 0.03, 3);
    for (const auto& s : pts) {
      REQUIRE(s.face_id >= 0);
      REQUIRE(s.face_id < static_cast<int>(patch.faces.size()));
      // point-to-plane distance is zero for a flat patch
      CHECK(std::abs(s.point.z) < 1e-12);
    }
  }
}

TEST_CASE("place_nodules scales radii by nearest neighbor") {
  auto patch = make_grid_patch(10, 10, 0.01, 0.01);
  auto dermis = mold_dermis(patch, 0.006);

  SECTION("two points 0.04 m apart with scale 0.4") {
    std::vector<SurfaceSample> pts = {{{0.03, 0.05, 0.006}, 0},
                                      {{0.07, 0.05, 0.006}, 1}};
    auto placed = place_nodules(pts, dermis, 0.4, 0.001, 0.001, 0.1);
    REQUIRE(placed.electrodes.size() == 2);
    CHECK(placed.electrodes[0].radius == Catch::Approx(0.016));
    CHECK(placed.electrodes[1].radius == Catch::Approx(0.016));
  }

  SECTION("single point takes max_radius") {
    std::vector<SurfaceSample> pts = {{{0.05, 0.05, 0.006}, 0}};
    auto placed = place_nodules(pts, dermis, 0.4, 0.001, 0.001, 0.012);
    REQUIRE(placed.electrodes.size() == 1);
    CHECK(placed.electrodes[0].radius == Catch::Approx(0.012));
  }

  SECTION("scale 0.5 on an equidistant grid gives tangent disks") {
    std::vector<SurfaceSample> pts;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j)
        pts.push_back({{0.02 + 0.03 * i, 0.02 + 0.03 * j, 0.006}, 0});
    auto placed = place_nodules(pts, dermis, 0.5, 0.001, 0.0, 1.0);
    for (const auto& e : placed.electrodes) CHECK(e.radius == Catch::Approx(0.015));
    // tangency: no pair closer than the sum of radii
    for (size_t i = 0; i < placed.electrodes.size(); ++i)
      for (size_t j = i + 1; j < placed.electrodes.size(); ++j) {
        double d = distance(placed.electrodes[i].center, placed.electrodes[j].center);
        double rr = placed.electrodes[i].radius + placed.electrodes[j].radius;
        CHECK(d >= rr - 1e-12);
      }
  }

  SECTION("depth at or past the thickness is rejected") {
    std::vector<SurfaceSample> pts = {{{0.05, 0.05, 0.006}, 0}};
    CHECK_THROWS_AS(place_nodules(pts, dermis, 0.4, 0.006, 0.0, 0.1),
                    DepthExceedsThicknessError);
  }

  SECTION("top face sits depth below the outer surface") {
    std::vector<SurfaceSample> pts = {{{0.05, 0.05, 0.006}, 0}};
    auto placed = place_nodules(pts, dermis, 0.4, 0.002, 0.0, 0.1);
    CHECK(placed.electrodes[0].center.z == Catch::Approx(0.004));
    CHECK(norm(placed.electrodes[0].normal) == Catch::Approx(1.0).margin(1e-9));
  }

  SECTION("link-frame pose round trips through world") {
    Mat4 link = Mat4::translation({0.3, -0.1, 0.5}) *
                Mat4::rotation({0, 0, 1}, 0.73) * Mat4::rotation({1, 0, 0}, -0.2);
    std::vector<SurfaceSample> pts = {{{0.02, 0.07, 0.006}, 4},
                                      {{0.08, 0.03, 0.006}, 9}};
    auto placed = place_nodules(pts, dermis, 0.4, 0.001, 0.0, 0.1, "link3", link);
    for (const auto& e : placed.electrodes) {
      Mat4 world_pose = link * e.local_pose;
      Vec3 back = world_pose.transform_point({0, 0, 0});
      CHECK(distance(back, e.center) < 1e-9);
      // z axis of the pose is the electrode normal
      Vec3 z = world_pose.transform_vector({0, 0, 1});
      CHECK(distance(z, e.normal) < 1e-9);
    }
  }

  SECTION("radius clamp interval holds in sane configs") {
    auto pts = poisson_disk_sample(dermis.outer, 0.02, 11);
    auto placed = place_nodules(pts, dermis, 0.35, 0.001, 0.004, 0.009);
    for (const auto& e : placed.electrodes) {
      CHECK(e.radius >= 0.004);
      CHECK(e.radius <= 0.009);
      CHECK(e.area == Catch::Approx(3.14159265358979 * e.radius * e.radius));
    }
  }
}

TEST_CASE("wire_resistance sums trace and base resistor") {
  CHECK(wire_resistance(0.0, 40000.0, 1e6) == Catch::Approx(1e6));
  CHECK(wire_resistance(0.30, 40000.0, 1e6) == Catch::Approx(1.012e6));
  double r1 = wire_resistance(0.2, 40000.0, 0.0);
  double r2 = wire_resistance(0.4, 40000.0, 0.0);
  CHECK(r2 == Catch::Approx(2.0 * r1));
  CHECK_THROWS_AS(wire_resistance(-1.0, 40000.0, 1e6), std::invalid_argument);
}
