#include "gridfuse/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <tuple>

namespace gridfuse {

std::vector<std::pair<std::size_t, std::size_t>> greedy_match(
    const std::vector<std::vector<double>>& dist, double gate) {
  std::vector<std::tuple<double, std::size_t, std::size_t>> edges;
  for (std::size_t a = 0; a < dist.size(); ++a) {
    for (std::size_t b = 0; b < dist[a].size(); ++b) {
      if (dist[a][b] <= gate) edges.emplace_back(dist[a][b], a, b);
    }
  }
  std::sort(edges.begin(), edges.end());
  std::vector<char> used_a(dist.size(), 0);
  std::vector<char> used_b;
  for (const auto& row : dist) used_b.resize(std::max(used_b.size(), row.size()), 0);
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (const auto& [d, a, b] : edges) {
    if (used_a[a] || used_b[b]) continue;
    used_a[a] = used_b[b] = 1;
    out.emplace_back(a, b);
  }
  return out;
}

FusionEvaluator::FusionEvaluator(const SimWorld& world, std::vector<Label> false_labels,
                                 FusionConfig cfg, double gate)
    : world_(world), false_labels_(std::move(false_labels)), cfg_(std::move(cfg)),
      gate_(gate) {}

void FusionEvaluator::add(const EnvelopeResult& result, const TruthFrame& truth) {
  for (const auto& r : result.records) {
    const bool accepted = r.action != Action::rejected;
    if (r.action == Action::created) ++report_.metas_created;
    if (!accepted) ++report_.rejected;
    if (r.module == Module::tracker &&
        std::find(false_labels_.begin(), false_labels_.end(), r.source_label) !=
            false_labels_.end()) {
      ++report_.false_presented;
      if (accepted) ++report_.false_accepted;
    }
    if (r.module == Module::grid) {
      for (const auto& o : truth.objects) {
        if (o.kind != TruthKind::ghost) continue;
        OrientedBox inflated = o.box_world;
        inflated.length += 3.0;
        inflated.width += 3.0;
        if (inflated.contains(r.position)) {
          ++report_.ghost_presented;
          if (accepted) ++report_.ghost_accepted;
          break;
        }
      }
    }
  }

  // Objects a sensor could see at this time.
  std::vector<const TruthObject*> expected;
  for (const auto& o : truth.objects) {
    if (o.kind != TruthKind::real || o.visible_fraction < 0.5) continue;
    const bool seen = cfg_.fov_grid.contains(truth.ego, o.box_world.center) ||
                      cfg_.fov_tracker.contains(truth.ego, o.box_world.center);
    if (seen) expected.push_back(&o);
  }
  const auto& metas = result.metas;
  std::vector<std::vector<double>> dist(metas.size(),
                                        std::vector<double>(expected.size()));
  for (std::size_t m = 0; m < metas.size(); ++m) {
    for (std::size_t k = 0; k < expected.size(); ++k) {
      dist[m][k] = (metas[m].ref_pos - expected[k]->box_world.point(metas[m].ref_label))
                       .norm();
    }
  }
  const auto pairs = greedy_match(dist, gate_);
  FrameCounts fc;
  fc.timestamp = result.timestamp;
  fc.truth = expected.size();
  fc.matched = pairs.size();
  fc.missed = expected.size() - pairs.size();
  // Metas sitting on a ghost or a false track are false as well.
  fc.false_count = metas.size() - pairs.size();
  for (const auto& [m, k] : pairs) {
    sq_sum_ += dist[m][k] * dist[m][k];
    const int id = expected[k]->id;
    const auto it = last_label_.find(id);
    if (it != last_label_.end() && it->second != metas[m].label) ++report_.label_switches;
    last_label_[id] = metas[m].label;
  }
  report_.matched += fc.matched;
  report_.missed += fc.missed;
  report_.false_count += fc.false_count;
  report_.frames.push_back(fc);
  report_.rmse = report_.matched ? std::sqrt(sq_sum_ / report_.matched) : 0.0;
}

EvalReport FusionEvaluator::report() const { return report_; }

double ExtractionReport::worst_recall() const {
  double worst = 1.0;
  for (const auto& [id, c] : per_object) {
    if (c.first > 0) worst = std::min(worst, double(c.second) / double(c.first));
  }
  return worst;
}

ExtractionEvaluator::ExtractionEvaluator(double gate, double min_speed,
                                         std::size_t min_cells)
    : gate_(gate), min_speed_(min_speed), min_cells_(min_cells) {}

void ExtractionEvaluator::add(const std::vector<GridObject>& objects,
                              const TruthFrame& truth) {
  ++report_.frames;
  // Anything that leaves cells in the grid may be matched; only clear movers
  // are expected.
  std::vector<const TruthObject*> pool;
  for (const auto& o : truth.objects) {
    if (o.kind == TruthKind::false_track || o.cell_count == 0) continue;
    pool.push_back(&o);
  }
  std::vector<std::vector<double>> dist(objects.size(), std::vector<double>(pool.size()));
  for (std::size_t g = 0; g < objects.size(); ++g) {
    for (std::size_t k = 0; k < pool.size(); ++k) {
      // Box distance, so partly hidden objects with shifted centers still match.
      dist[g][k] = pool[k]->box_vehicle.distance(objects[g].bbox.center);
    }
  }
  const auto pairs = greedy_match(dist, gate_);
  std::vector<int> matched_to(pool.size(), -1);
  for (const auto& [g, k] : pairs) matched_to[k] = static_cast<int>(g);
  report_.false_objects += objects.size() - pairs.size();

  for (std::size_t k = 0; k < pool.size(); ++k) {
    const TruthObject& o = *pool[k];
    const bool expected = o.kind == TruthKind::real && o.speed >= min_speed_ &&
                          o.cell_count >= min_cells_;
    if (expected) ++report_.per_object[o.id].first;
    if (matched_to[k] < 0) continue;
    const GridObject& g = objects[static_cast<std::size_t>(matched_to[k])];
    if (expected) ++report_.per_object[o.id].second;
    if (o.visible_fraction >= 1.0 && !o.clipped) {
      const double d = (g.bbox.center - o.box_vehicle.center).norm();
      sq_sum_ += d * d;
      ++report_.rmse_samples;
    }
    const auto it = last_label_.find(o.id);
    if (it != last_label_.end() && it->second != g.label) ++report_.label_switches;
    last_label_[o.id] = g.label;
  }
  report_.rmse = report_.rmse_samples ? std::sqrt(sq_sum_ / report_.rmse_samples) : 0.0;
}

ExtractionReport ExtractionEvaluator::report() const { return report_; }

}  // namespace gridfuse
