#include "gridfuse/digital_map.hpp"
#include "gridfuse/error.hpp"

#include "oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace gridfuse;

namespace {

std::vector<Vec2> polyline(std::mt19937_64& rng, int n) {
  std::normal_distribution<double> g(0.0, 0.4);
  std::vector<Vec2> pts;
  double phi = 0.0;
  Vec2 p(0, 0);
  for (int i = 0; i < n; ++i) {
    pts.push_back(p);
    phi += g(rng) * 0.5;
    p += Vec2(std::cos(phi), std::sin(phi));
  }
  return pts;
}

FrameAnchor north_anchor() {
  FrameAnchor a;
  a.global = {500000.0, 5400000.0, 0, 0, kPi / 2, 0, 0};
  return a;
}

}  // namespace

TEST(EndPointFit, StraightLineKeepsEnds) {
  std::vector<Vec2> pts;
  for (int i = 0; i <= 10; ++i) pts.emplace_back(i, 0.0);
  EXPECT_EQ(end_point_fit(pts, 0.3), (std::vector<std::size_t>{0, 10}));
}

TEST(EndPointFit, CornerIsKept) {
  const std::vector<Vec2> pts{{0, 0}, {5, 0}, {10, 0}, {10, 5}, {10, 10}};
  EXPECT_EQ(end_point_fit(pts, 0.3), (std::vector<std::size_t>{0, 2, 4}));
}

TEST(EndPointFit, MatchesRecursiveOracle) {
  std::mt19937_64 rng(17);
  std::uniform_int_distribution<int> len(2, 40);
  std::uniform_real_distribution<double> eps(0.05, 1.0);
  for (int k = 0; k < 500; ++k) {
    const auto pts = polyline(rng, len(rng));
    const double e = eps(rng);
    const auto kept = end_point_fit(pts, e);
    EXPECT_EQ(kept, oracle::rdp(pts, e));
    // every dropped point lies within e of the kept chord spanning it
    for (std::size_t s = 0; s + 1 < kept.size(); ++s) {
      for (std::size_t i = kept[s] + 1; i < kept[s + 1]; ++i) {
        EXPECT_LE(oracle::segment_distance(pts[i], pts[kept[s]], pts[kept[s + 1]]), e + 1e-12);
      }
    }
  }
}

TEST(Lane, RectanglesFollowChords) {
  Lane lane{7, {{0, 0}, {5, 0}, {10, 0}, {10, 5}, {10, 10}}};
  const auto rects = approximate_lane(lane, 0.3, 3.5, 4);
  ASSERT_EQ(rects.size(), 2u);
  EXPECT_EQ(rects[0].id, 4);
  EXPECT_EQ(rects[1].id, 5);
  EXPECT_EQ(rects[0].lane_id, 7);
  EXPECT_NEAR(rects[0].center.x(), 5.0, 1e-12);
  EXPECT_NEAR(rects[0].length, 10.0, 1e-12);
  EXPECT_NEAR(rects[0].heading, 0.0, 1e-12);
  EXPECT_NEAR(rects[1].heading, kPi / 2, 1e-12);
  EXPECT_DOUBLE_EQ(rects[1].width, 3.5);
}

TEST(Lane, Validation) {
  EXPECT_THROW(validate_lane(Lane{1, {{0, 0}}}), InvalidArgument);
  EXPECT_THROW(validate_lane(Lane{1, {{0, 0}, {1, 0}, {2, 0}, {5, 0}}}), InvalidArgument);
  EXPECT_NO_THROW(validate_lane(Lane{1, {{0, 0}, {1, 0}, {2.1, 0}, {3, 0}}}));
}

TEST(Building, Validation) {
  EXPECT_THROW(validate_building(Building{1, {{0, 0}, {1, 0}}}), InvalidArgument);
  EXPECT_THROW(validate_building(Building{1, {{0, 0}, {2, 2}, {2, 0}, {0, 2}}}), InvalidArgument);
  EXPECT_NO_THROW(validate_building(Building{1, {{0, 0}, {2, 0}, {2, 2}, {0, 2}}}));
}

TEST(Building, Containment) {
  const std::vector<Vec2> sq{{0, 0}, {10, 0}, {10, 10}, {0, 10}};
  EXPECT_TRUE(point_in_polygon({5, 5}, sq));
  EXPECT_TRUE(point_in_polygon({0, 5}, sq));
  EXPECT_TRUE(point_in_polygon({10, 10}, sq));
  EXPECT_FALSE(point_in_polygon({11, 5}, sq));
  EXPECT_TRUE(point_in_polygon({5, 5}, sq, 2.0));
  EXPECT_FALSE(point_in_polygon({1, 5}, sq, 2.0));
}

TEST(Building, ContainmentMatchesWindingNumber) {
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> u(-12.0, 12.0);
  const std::vector<Vec2> l_shape{{0, 0}, {10, 0}, {10, 4}, {4, 4}, {4, 10}, {0, 10}};
  const std::vector<Vec2> star{{0, 9}, {2, 2}, {9, 0}, {2, -2}, {0, -9}, {-2, -2}, {-9, 0}, {-2, 2}};
  for (const auto& poly : {l_shape, star}) {
    for (int k = 0; k < 5000; ++k) {
      const Vec2 p(u(rng), u(rng));
      EXPECT_EQ(point_in_polygon(p, poly), oracle::winding_number(p, poly) != 0);
    }
  }
}

TEST(Map, BuildAndAssociate) {
  std::vector<Lane> lanes{{1, {{0, 0}, {10, 0}, {20, 0}}}, {2, {{0, 3.5}, {10, 3.5}, {20, 3.5}}}};
  const DigitalMap map = build_map({}, lanes);
  ASSERT_EQ(map.rectangles.size(), 2u);
  const auto m = associate_rectangle({10, 0.4}, 0.1, map);
  ASSERT_TRUE(m);
  EXPECT_EQ(m->rectangle.lane_id, 1);
  EXPECT_NEAR(m->lateral_offset, 0.4, 1e-12);
  EXPECT_NEAR(m->heading_deviation, 0.1, 1e-12);
  // both boxes contain y = 1.75: tie goes to the lower id
  const auto t = associate_rectangle({10, 1.75}, kPi, map);
  ASSERT_TRUE(t);
  EXPECT_EQ(t->rectangle.id, map.rectangles[0].id);
  EXPECT_NEAR(t->heading_deviation, 0.0, 1e-12);
  EXPECT_FALSE(associate_rectangle({10, 40}, 0.0, map));
}

TEST(Map, FrameChecks) {
  const DigitalMap map = build_map({Building{1, {{0, 0}, {2, 0}, {2, 2}}}}, {});
  const auto anchor = north_anchor();
  const DigitalMap ego = map_to_ego(map, anchor);
  EXPECT_EQ(ego.frame, MapFrame::ego);
  EXPECT_THROW(map_to_ego(ego, anchor), FrameMismatch);
  EXPECT_THROW(map_to_global(map, anchor), FrameMismatch);
}

TEST(Map, RoundTripPreservesGeometry) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<Lane> lanes;
  for (int l = 0; l < 3; ++l) {
    Lane lane{l, {}};
    for (int i = 0; i < 8; ++i) lane.points.emplace_back(500000 + 5 * i, 5400000 + 4 * l + 0.2 * u(rng));
    lanes.push_back(lane);
  }
  const DigitalMap global = build_map({Building{9, {{500010, 5400020}, {500030, 5400020}, {500030, 5400040}}}}, lanes);
  FrameAnchor anchor = north_anchor();
  anchor.global.phi_gc = 0.7;
  anchor.ego.x = 3.0;
  anchor.ego.y = -2.0;
  anchor.ego.phi = 0.2;
  const DigitalMap back = map_to_global(map_to_ego(global, anchor), anchor);
  EXPECT_EQ(back.frame, MapFrame::global);
  for (std::size_t i = 0; i < global.rectangles.size(); ++i) {
    EXPECT_LE((back.rectangles[i].center - global.rectangles[i].center).norm(), 1e-6);
    EXPECT_NEAR(angle_distance(back.rectangles[i].heading, global.rectangles[i].heading), 0.0, 1e-12);
    EXPECT_DOUBLE_EQ(back.rectangles[i].length, global.rectangles[i].length);
  }
  for (std::size_t i = 0; i < global.buildings[0].corners.size(); ++i) {
    EXPECT_LE((back.buildings[0].corners[i] - global.buildings[0].corners[i]).norm(), 1e-6);
  }
}

TEST(Map, AssociationCommutesWithTransform) {
  std::vector<Lane> lanes{{1, {{500000, 5400000}, {500010, 5400000}, {500020, 5400001}}}};
  const DigitalMap global = build_map({}, lanes);
  FrameAnchor anchor = north_anchor();
  anchor.global.phi_gc = 1.1;
  const DigitalMap ego = map_to_ego(global, anchor);
  const GlobalPose gp{500012.0, 5400001.2, 0.3};
  const Pose2 ep = global_to_ego(gp, anchor);
  const auto a = associate_rectangle({gp.utm_e, gp.utm_n}, gp.phi, global);
  const auto b = associate_rectangle({ep.x, ep.y}, ep.phi, ego);
  ASSERT_TRUE(a && b);
  EXPECT_EQ(a->rectangle.id, b->rectangle.id);
  EXPECT_NEAR(a->lateral_offset, b->lateral_offset, 1e-6);
  EXPECT_NEAR(a->heading_deviation, b->heading_deviation, 1e-9);
}
