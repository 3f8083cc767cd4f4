#include "gridfuse/error.hpp"
#include "gridfuse/fusion.hpp"

#include "oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace gridfuse;

namespace {

DigitalMap empty_map() {
  DigitalMap m;
  m.frame = MapFrame::ego;
  return m;
}

DigitalMap lane_map() {
  std::vector<Lane> lanes{{1, {{-20, 0}, {0, 0}, {20, 0}, {40, 0}}}};
  std::vector<Building> b{{7, {{0, 20}, {20, 20}, {20, 40}, {0, 40}}}};
  DigitalMap m = build_map(b, lanes);
  m.frame = MapFrame::ego;
  return m;
}

TrackState track(Label label, Vec2 center, double v, double phi, double t,
                 double existence = 0.95, double var = 0.01) {
  TrackState s;
  s.bbox = {center, phi, 4.5, 1.8};
  s.ref_label = RefPoint::b;
  s.ref_pos = s.bbox.point(RefPoint::b);
  s.v = v;
  s.phi = phi;
  s.cov = TrackCovariance::Identity() * var;
  s.existence = existence;
  s.cls = ObjectClass::car;
  s.label = label;
  s.timestamp = t;
  return s;
}

GridObject grid(Label label, Vec2 center, double v, double phi, double t) {
  GridObject g;
  g.bbox = {center, phi, 4.5, 1.8};
  g.ref_label = RefPoint::b;
  g.ref_pos = g.bbox.point(RefPoint::b);
  g.speed = v;
  g.orientation = phi;
  g.label = label;
  g.timestamp = t;
  return g;
}

MetaObject meta_from(const TrackState& s, Label label) {
  auto m = create_meta(make_candidate(s), 0.9, label, FusionConfig{});
  return *m;
}

SampleEnvelope track_env(double t, std::vector<TrackState> tracks) {
  SampleEnvelope e;
  e.module = Module::tracker;
  e.timestamp = t;
  e.tracks = std::move(tracks);
  return e;
}

SampleEnvelope grid_env(double t, std::vector<GridObject> objs) {
  SampleEnvelope e;
  e.module = Module::grid;
  e.timestamp = t;
  e.grid = std::move(objs);
  return e;
}

}  // namespace

TEST(Queue, OrdersByTimestampStably) {
  FusionEngine eng({}, empty_map());
  eng.enqueue(track_env(0.1, {}));
  eng.enqueue(grid_env(0.05, {}));
  eng.enqueue(grid_env(0.1, {}));
  auto a = eng.process_next();
  auto b = eng.process_next();
  auto c = eng.process_next();
  EXPECT_DOUBLE_EQ(a->timestamp, 0.05);
  EXPECT_EQ(b->module, Module::tracker);
  EXPECT_EQ(c->module, Module::grid);
  EXPECT_FALSE(eng.process_next());
}

TEST(Queue, LatenessBound) {
  FusionEngine eng({}, empty_map());
  eng.enqueue(grid_env(2.0, {}));
  eng.drain();
  EXPECT_THROW(eng.enqueue(grid_env(1.0, {})), OutOfOrderSample);
  EXPECT_NO_THROW(eng.enqueue(grid_env(1.6, {})));
  SampleEnvelope mixed = grid_env(2.0, {});
  mixed.tracks = {track(1, {0, 0}, 0, 0, 2.0)};
  EXPECT_THROW(eng.enqueue(mixed), InvalidArgument);
  SampleEnvelope bad = grid_env(2.0, {grid(1, {0, 0}, 0, 0, 1.0)});
  EXPECT_THROW(eng.enqueue(bad), InvalidArgument);
}

TEST(Queue, ProcessUntil) {
  FusionEngine eng({}, empty_map());
  for (double t : {0.3, 0.1, 0.2}) eng.enqueue(grid_env(t, {}));
  EXPECT_EQ(eng.process_until(0.2).size(), 2u);
  EXPECT_EQ(eng.pending(), 1u);
}

TEST(Physics, Examples) {
  const FusionConfig cfg;
  const auto s = track(1, {10, 0}, 10, 0, 0.0);
  const MetaObject m = meta_from(s, 1);
  EXPECT_GE(physical_confidence(make_candidate(track(1, {11, 0}, 10, 0, 0.1)), m, 0.1, cfg), 0.99);
  // implied acceleration equal to max_accel, no jump
  const double dv = cfg.max_accel * 0.1;
  const double p = physical_confidence(make_candidate(track(1, {11, 0}, 10 + dv, 0, 0.1)), m, 0.1, cfg);
  EXPECT_NEAR(p, std::exp(-1.0), 1e-12);
  EXPECT_LE(physical_confidence(make_candidate(track(1, {61, 0}, 10, 0, 0.1)), m, 0.1, cfg), 1e-3);
  EXPECT_THROW(physical_confidence(make_candidate(s), m, 0.0, cfg), InvalidArgument);
  EXPECT_DOUBLE_EQ(physical_confidence(make_candidate(track(1, {11, 0}, 70, 0, 0.1)), m, 0.1, cfg), kEtaFloor);
}

TEST(Physics, MonotoneInAcceleration) {
  const FusionConfig cfg;
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int k = 0; k < 1000; ++k) {
    const double v = 20 * u(rng);
    const double dt = 0.05 + 0.2 * u(rng);
    const MetaObject m = meta_from(track(1, {0, 0}, v, 0, 0.0), 1);
    const Vec2 c(v * dt, 0);
    const double d1 = 10 * u(rng);
    const double d2 = d1 + 5 * u(rng);
    const double p1 = physical_confidence(make_candidate(track(1, c, v + d1, 0, dt)), m, dt, cfg);
    const double p2 = physical_confidence(make_candidate(track(1, c, v + d2, 0, dt)), m, dt, cfg);
    EXPECT_LE(p2, p1);
  }
}

TEST(Module, Examples) {
  const FusionConfig cfg;
  const auto good = make_candidate(track(1, {10, 0}, 10, 0, 0, 0.95, 1e-6));
  EXPECT_DOUBLE_EQ(module_confidence(good, 0, Confirmation::confirmed, cfg), kEtaCeil);
  const auto weak = make_candidate(track(1, {10, 0}, 10, 0, 0, 0.2, 1e-6));
  EXPECT_LE(module_confidence(weak, 0, Confirmation::silent, cfg), 0.2 * cfg.confirm_bonus_low);
  const auto g = make_candidate(grid(1, {10, 0}, 10, 0, 0));
  EXPECT_NEAR(module_confidence(g, 1, Confirmation::outside_fov, cfg), 1 - std::exp(-1.0 / 3.0), 1e-15);
  EXPECT_NEAR(module_confidence(g, 1, Confirmation::silent, cfg), 0.6 * (1 - std::exp(-1.0 / 3.0)), 1e-15);
}

TEST(Module, MonotoneInCovariance) {
  const FusionConfig cfg;
  std::mt19937_64 rng(32);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int k = 0; k < 1000; ++k) {
    const double r = 0.2 + 0.79 * u(rng);
    const double v1 = 5 * u(rng);
    const double v2 = v1 + 5 * u(rng);
    for (auto conf : {Confirmation::confirmed, Confirmation::silent, Confirmation::outside_fov}) {
      const double e1 = module_confidence(make_candidate(track(1, {}, 1, 0, 0, r, v1)), 0, conf, cfg);
      const double e2 = module_confidence(make_candidate(track(1, {}, 1, 0, 0, r, v2)), 0, conf, cfg);
      EXPECT_LE(e2, e1);
    }
  }
}

TEST(Map, Examples) {
  const FusionConfig cfg;
  const DigitalMap map = lane_map();
  EXPECT_GE(map_confidence(make_candidate(track(1, {10, 0}, 10, 0, 0)), ObjectClass::car, map, cfg), 0.95);
  EXPECT_LE(map_confidence(make_candidate(track(1, {10, 30}, 0, 0, 0)), ObjectClass::car, map, cfg), 0.05);
  EXPECT_LE(map_confidence(make_candidate(track(1, {10, 30}, 0, 0, 0)), ObjectClass::pedestrian, map, cfg), 0.05);
  EXPECT_NEAR(map_confidence(make_candidate(track(1, {10, 0}, 10, kPi / 2, 0)), ObjectClass::car, map, cfg),
              std::exp(-9.0), 1e-12);
  EXPECT_DOUBLE_EQ(map_confidence(make_candidate(track(1, {10, 0}, 10, kPi / 2, 0)), ObjectClass::pedestrian, map, cfg),
                   cfg.lane_neutral);
  EXPECT_DOUBLE_EQ(map_confidence(make_candidate(track(1, {10, -15}, 10, 0, 0)), ObjectClass::car, map, cfg),
                   cfg.lane_neutral);
  DigitalMap global = map;
  global.frame = MapFrame::global;
  EXPECT_THROW(map_confidence(make_candidate(track(1, {}, 0, 0, 0)), ObjectClass::car, global, cfg), FrameMismatch);
}

TEST(Map, MonotoneInHeadingDeviation) {
  const FusionConfig cfg;
  const DigitalMap map = lane_map();
  std::mt19937_64 rng(33);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int k = 0; k < 1000; ++k) {
    const Vec2 p(-10 + 40 * u(rng), -2 + 4 * u(rng));
    const double h1 = kPi / 2 * u(rng);
    const double h2 = h1 + (kPi / 2 - h1) * u(rng);
    const double m1 = map_confidence(make_candidate(track(1, p, 5, h1, 0)), ObjectClass::car, map, cfg);
    const double m2 = map_confidence(make_candidate(track(1, p, 5, h2, 0)), ObjectClass::car, map, cfg);
    EXPECT_LE(m2, m1);
  }
}

TEST(Combined, Product) {
  EXPECT_NEAR(combined_confidence(0.9, 0.9, 0.9), 0.729, 1e-15);
  EXPECT_LE(combined_confidence(kEtaFloor, 0.9, 0.9), kEtaFloor);
}

TEST(Association, KnownLabelBypassesMatrix) {
  const FusionConfig cfg;
  MetaObject m = meta_from(track(5, {10, 0}, 0, 0, 0), 1);
  // 7 m away: beyond the gate but within the sanity bound
  const auto near = associate_to_meta({make_candidate(track(5, {17, 0}, 0, 0, 0))}, {m}, cfg);
  ASSERT_EQ(near.pairs.size(), 1u);
  EXPECT_TRUE(near.label_conflicts.empty());
  const auto far = associate_to_meta({make_candidate(track(5, {30, 0}, 0, 0, 0))}, {m}, cfg);
  EXPECT_TRUE(far.pairs.empty());
  EXPECT_EQ(far.label_conflicts, (std::vector<std::size_t>{0}));
  // an unknown label at the same 7 m stays unmatched
  const auto other = associate_to_meta({make_candidate(track(6, {17, 0}, 0, 0, 0))}, {m}, cfg);
  EXPECT_TRUE(other.pairs.empty());
  EXPECT_EQ(other.unmatched_candidates, (std::vector<std::size_t>{0}));
}

TEST(Association, MatchesBruteForce) {
  const FusionConfig cfg;
  std::mt19937_64 rng(34);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  for (int k = 0; k < 300; ++k) {
    std::vector<MetaObject> metas;
    std::vector<Candidate> cands;
    for (int i = 0; i < 2; ++i) {
      MetaObject m = meta_from(track(100 + i, {10 * i + u(rng), u(rng)}, 0, 0, 0), i + 1);
      m.track_label.reset();
      metas.push_back(m);
    }
    for (int i = 0; i < 2; ++i) cands.push_back(make_candidate(track(200 + i, {5 + 5 * u(rng), u(rng)}, 0, 0, 0)));
    std::vector<std::vector<double>> cost(2, std::vector<double>(2));
    std::vector<std::vector<bool>> allowed(2, std::vector<bool>(2));
    for (int r = 0; r < 2; ++r) {
      for (int c = 0; c < 2; ++c) {
        cost[r][c] = reference_distance(cands[r], metas[c]);
        allowed[r][c] = cost[r][c] <= cfg.association_gate;
      }
    }
    const auto a = associate_to_meta(cands, metas, cfg);
    EXPECT_EQ(a.pairs, oracle::assign(cost, allowed).pairs);
  }
}

TEST(Association, EmptyMetas) {
  const auto a = associate_to_meta({make_candidate(track(1, {}, 0, 0, 0))}, {}, FusionConfig{});
  EXPECT_TRUE(a.pairs.empty());
  EXPECT_EQ(a.unmatched_candidates, (std::vector<std::size_t>{0}));
}

TEST(Association, RelabeledSourceRebinds) {
  const FusionConfig cfg;
  MetaObject m = meta_from(track(5, {10, 0}, 0, 0, 0), 1);
  const auto moved = make_candidate(track(8, {10.5, 0}, 0, 0, 0));
  // label 5 still present elsewhere: the binding holds and 8 stays out
  const auto held = associate_to_meta({moved, make_candidate(track(5, {11, 0}, 0, 0, 0))}, {m}, cfg);
  EXPECT_EQ(held.pairs, (std::vector<std::pair<std::size_t, std::size_t>>{{1, 0}}));
  // label 5 gone: the relabeled source takes the meta
  const auto rebound = associate_to_meta({moved}, {m}, cfg);
  EXPECT_EQ(rebound.pairs, (std::vector<std::pair<std::size_t, std::size_t>>{{0, 0}}));
}

TEST(Update, ExtentCaseSplit) {
  const FusionConfig cfg;
  const MetaObject m = meta_from(track(1, {10, 0}, 5, 0, 0), 1);
  TrackState s = track(1, {10, 0}, 5, 0, 0.1);
  s.bbox.length = 6.5;
  s.bbox.width = 2.8;
  s.ref_label = RefPoint::f;
  s.ref_pos = s.bbox.point(RefPoint::f);
  auto u = update_meta(m, make_candidate(s), 0.9, cfg);
  EXPECT_DOUBLE_EQ(u.bbox.length, 4.5);
  EXPECT_DOUBLE_EQ(u.bbox.width, 2.3);
  EXPECT_LE((u.bbox.point(RefPoint::f) - s.ref_pos).norm(), 1e-12);
  s.ref_label = RefPoint::l;
  s.ref_pos = s.bbox.point(RefPoint::l);
  u = update_meta(m, make_candidate(s), 0.9, cfg);
  EXPECT_DOUBLE_EQ(u.bbox.length, 5.5);
  EXPECT_DOUBLE_EQ(u.bbox.width, 1.8);
  s.ref_label = RefPoint::bl;
  s.ref_pos = s.bbox.point(RefPoint::bl);
  u = update_meta(m, make_candidate(s), 0.9, cfg);
  EXPECT_DOUBLE_EQ(u.bbox.length, 5.5);
  EXPECT_DOUBLE_EQ(u.bbox.width, 2.3);
  EXPECT_EQ(u.track_hits, 2u);
  EXPECT_THROW(update_meta(m, make_candidate(s), cfg.eta_min - 1e-6, cfg), InvalidArgument);
}

TEST(Create, Gate) {
  const FusionConfig cfg;
  const auto c = make_candidate(track(3, {10, 0}, 5, 0, 0));
  const auto m = create_meta(c, 0.8, 42, cfg);
  ASSERT_TRUE(m);
  EXPECT_EQ(m->label, 42u);
  EXPECT_EQ(m->track_hits, 1u);
  EXPECT_EQ(m->grid_hits, 0u);
  EXPECT_EQ(*m->track_label, 3u);
  EXPECT_FALSE(create_meta(c, cfg.eta_min - 1e-9, 42, cfg));
  const auto g = create_meta(make_candidate(grid(9, {10, 0}, 5, 0, 0)), 0.8, 43, cfg);
  EXPECT_EQ(g->grid_hits, 1u);
  EXPECT_EQ(g->cls, ObjectClass::unknown);
}

TEST(Prune, Timeout) {
  const FusionConfig cfg;
  EXPECT_TRUE(prune_stale({}, 1.0, cfg).empty());
  MetaObject a = meta_from(track(1, {}, 0, 0, 0.9), 1);
  MetaObject b = meta_from(track(2, {}, 0, 0, 0.4), 2);
  const auto kept = prune_stale({a, b}, 1.0, cfg);
  ASSERT_EQ(kept.size(), 1u);
  EXPECT_EQ(kept[0].label, 1u);
}

TEST(Engine, DuplicateSourceLabel) {
  FusionEngine eng({}, empty_map());
  eng.enqueue(grid_env(0.0, {grid(1, {15, 0}, 10, 0, 0.0)}));
  auto r = eng.process_envelope(track_env(0.02, {track(7, {15.2, 0}, 10, 0, 0.02), track(7, {25, 0}, 10, 0, 0.02)}));
  ASSERT_EQ(r.records.size(), 2u);
  EXPECT_EQ(r.records[1].reason, "duplicate");
  EXPECT_EQ(r.records[1].action, Action::rejected);
  EXPECT_LE(r.metas.size(), 1u);
}

TEST(Engine, NominalVehicleSeenByBoth) {
  FusionEngine eng({}, empty_map());
  std::vector<EnvelopeResult> results;
  for (int k = 0; k < 20; ++k) {
    const double tg = 0.1 * k;
    const double tt = tg + 0.02;
    eng.enqueue(grid_env(tg, {grid(1, {15 + 10 * tg, 0}, 10, 0, tg)}));
    eng.enqueue(track_env(tt, {track(100, {15 + 10 * tt, 0}, 10, 0, tt)}));
    for (auto& r : eng.drain()) results.push_back(r);
  }
  ASSERT_EQ(eng.metas().size(), 1u);
  const MetaObject& m = eng.metas()[0];
  EXPECT_GT(m.grid_hits, 15u);
  EXPECT_EQ(m.track_hits, 20u);
  EXPECT_EQ(*m.track_label, 100u);
  EXPECT_EQ(*m.grid_label, 1u);
  for (const auto& r : results) {
    for (const auto& rec : r.records) {
      EXPECT_EQ(rec.eta, rec.eta_p * rec.eta_e * rec.eta_m);
      if (rec.action != Action::rejected) {
        EXPECT_GE(rec.eta, eng.config().eta_min);
      }
    }
  }
}

TEST(Engine, BelowGateLeavesStateUntouched) {
  FusionConfig cfg;
  FusionEngine eng(cfg, empty_map());
  eng.process_envelope(grid_env(0.0, {grid(1, {15, 0}, 10, 0, 0.0)}));
  eng.process_envelope(track_env(0.02, {track(100, {15.2, 0}, 10, 0, 0.02)}));
  ASSERT_EQ(eng.metas().size(), 1u);
  const MetaObject before = eng.metas()[0];
  // low existence drives eta below the gate
  auto r = eng.process_envelope(track_env(0.12, {track(100, {16.2, 0}, 10, 0, 0.12, 0.05)}));
  ASSERT_EQ(r.records.size(), 1u);
  EXPECT_EQ(r.records[0].action, Action::rejected);
  EXPECT_LT(r.records[0].eta, cfg.eta_min);
  const MetaObject& after = eng.metas()[0];
  EXPECT_EQ(after.ref_pos, before.ref_pos);
  EXPECT_EQ(after.v, before.v);
  EXPECT_EQ(after.track_hits, before.track_hits);
  EXPECT_EQ(after.eta, before.eta);
  EXPECT_EQ(after.last_candidate_eta, r.records[0].eta);
}

TEST(Engine, ReplayIsIdentical) {
  auto run = [] {
    FusionEngine eng({}, lane_map());
    std::vector<EnvelopeResult> out;
    std::mt19937_64 rng(77);
    std::normal_distribution<double> n(0.0, 0.2);
    for (int k = 0; k < 30; ++k) {
      const double t = 0.05 * k;
      if (k % 2 == 0) {
        eng.enqueue(grid_env(t, {grid(1, {10 + 8 * t + n(rng), n(rng)}, 8, 0, t)}));
      } else {
        eng.enqueue(track_env(t, {track(50, {10 + 8 * t + n(rng), n(rng)}, 8, 0, t)}));
      }
      for (auto& r : eng.process_until(t)) out.push_back(r);
    }
    return out;
  };
  const auto a = run();
  const auto b = run();
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    ASSERT_EQ(a[i].records.size(), b[i].records.size());
    for (std::size_t j = 0; j < a[i].records.size(); ++j) {
      EXPECT_EQ(a[i].records[j].eta, b[i].records[j].eta);
      EXPECT_EQ(a[i].records[j].action, b[i].records[j].action);
    }
    ASSERT_EQ(a[i].metas.size(), b[i].metas.size());
    for (std::size_t j = 0; j < a[i].metas.size(); ++j) {
      EXPECT_EQ(a[i].metas[j].ref_pos, b[i].metas[j].ref_pos);
      EXPECT_EQ(a[i].metas[j].label, b[i].metas[j].label);
    }
  }
}

TEST(Fov, Sectors) {
  const FusionConfig cfg;
  EXPECT_TRUE(cfg.fov_tracker.contains({}, {50, 0}));
  EXPECT_FALSE(cfg.fov_tracker.contains({}, {-5, 0}));
  EXPECT_FALSE(cfg.fov_tracker.contains({}, {0, 20}));
  EXPECT_TRUE(cfg.fov_grid.contains({}, {-30, 0}));
  EXPECT_TRUE(cfg.fov_grid.contains({}, {55, 0}));
  EXPECT_FALSE(cfg.fov_grid.contains({}, {0, 55}));
  EXPECT_TRUE(cfg.fov_tracker.contains({100, 0, kPi}, {50, 0}));
}
