#include "gridfuse/fusion.hpp"

#include "gridfuse/assignment.hpp"
#include "gridfuse/error.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <set>
#include <utility>

namespace gridfuse {

namespace {

constexpr std::array<std::pair<ObjectClass, std::string_view>, 7> kClassNames{{
    {ObjectClass::unknown, "unknown"},
    {ObjectClass::car, "car"},
    {ObjectClass::truck, "truck"},
    {ObjectClass::bus, "bus"},
    {ObjectClass::motorcycle, "motorcycle"},
    {ObjectClass::bicycle, "bicycle"},
    {ObjectClass::pedestrian, "pedestrian"},
}};

Vec2 heading_vector(double phi) { return {std::cos(phi), std::sin(phi)}; }

Module other(Module m) {
  return m == Module::grid ? Module::tracker : Module::grid;
}

// Reference state built from a single earlier sample.
MetaObject as_reference(const Candidate& c) {
  MetaObject m;
  m.ref_pos = c.ref_pos;
  m.ref_label = c.ref_label;
  m.v = c.speed;
  m.phi = c.heading;
  m.bbox = c.bbox;
  m.last_update = c.timestamp;
  return m;
}

}  // namespace

std::string_view to_string(ObjectClass c) {
  for (const auto& [k, name] : kClassNames) {
    if (k == c) return name;
  }
  return "unknown";
}

std::optional<ObjectClass> object_class_from_string(std::string_view name) {
  for (const auto& [k, n] : kClassNames) {
    if (n == name) return k;
  }
  return std::nullopt;
}

bool is_vehicle(ObjectClass c) {
  return c == ObjectClass::car || c == ObjectClass::truck ||
         c == ObjectClass::bus || c == ObjectClass::motorcycle;
}

std::string_view to_string(Module m) {
  return m == Module::grid ? "grid" : "tracker";
}

std::string_view to_string(Confirmation c) {
  switch (c) {
    case Confirmation::confirmed: return "confirmed";
    case Confirmation::silent: return "silent";
    case Confirmation::outside_fov: return "outside_fov";
  }
  return "outside_fov";
}

std::string_view to_string(Action a) {
  switch (a) {
    case Action::created: return "created";
    case Action::updated: return "updated";
    case Action::rejected: return "rejected";
  }
  return "rejected";
}

Vec2 Candidate::velocity() const { return speed * heading_vector(heading); }
Vec2 MetaObject::velocity() const { return v * heading_vector(phi); }

Candidate make_candidate(const GridObject& obj) {
  Candidate c;
  c.module = Module::grid;
  c.source_label = obj.label;
  c.ref_pos = obj.ref_pos;
  c.ref_label = obj.ref_label;
  c.speed = obj.speed;
  c.heading = obj.orientation;
  c.bbox = obj.bbox;
  c.timestamp = obj.timestamp;
  c.grid = obj;
  return c;
}

Candidate make_candidate(const TrackState& track) {
  Candidate c;
  c.module = Module::tracker;
  c.source_label = track.label;
  c.ref_pos = track.ref_pos;
  c.ref_label = track.ref_label;
  c.speed = track.v;
  c.heading = track.phi;
  c.bbox = track.bbox;
  c.cls = track.cls;
  c.timestamp = track.timestamp;
  c.track = track;
  return c;
}

bool FieldOfView::contains(const Pose2& ego, const Vec2& p) const {
  const Vec2 local = to_local(ego, p);
  const double range = local.norm();
  const double bearing = std::atan2(local.y(), local.x());
  return std::any_of(sectors.begin(), sectors.end(), [&](const FovSector& s) {
    return range <= s.max_range &&
           angle_distance(bearing, s.center) <= s.half_angle;
  });
}

double clamp_eta(double x) {
  if (!(x > kEtaFloor)) return kEtaFloor;
  return std::min(x, kEtaCeil);
}

namespace {

double physics_core(const Candidate& cand, const MetaObject& ref,
                    double dt_predict, double dt_rate,
                    const FusionConfig& cfg) {
  if (cand.speed > cfg.max_speed) return kEtaFloor;
  const double accel = (cand.velocity() - ref.velocity()).norm() / dt_rate;
  const MetaObject pred = predict_meta(ref, dt_predict);
  const double jump = (cand.ref_pos - pred.bbox.point(cand.ref_label)).norm();
  const double scale = 0.5 * cfg.max_accel * dt_rate * dt_rate + cfg.jump_gate;
  const double a = accel / cfg.max_accel;
  const double j = jump / scale;
  return clamp_eta(std::exp(-a * a) * std::exp(-j * j));
}

}  // namespace

double physical_confidence(const Candidate& cand, const MetaObject& ref,
                           double dt, const FusionConfig& cfg) {
  if (!(dt > 0.0)) {
    throw InvalidArgument("physical_confidence: dt must be positive");
  }
  return physics_core(cand, ref, dt, dt, cfg);
}

double module_base_confidence(const Candidate& cand, std::size_t grid_hits,
                              const FusionConfig& cfg) {
  if (cand.module == Module::tracker && cand.track) {
    const auto& p = cand.track->cov;
    const double trace = p(0, 0) + p(1, 1) + p(2, 2);
    return cand.track->existence * std::exp(-trace / cfg.cov_scale);
  }
  return 1.0 - std::exp(-static_cast<double>(grid_hits) / cfg.existence_scale);
}

double module_confidence(const Candidate& cand, std::size_t grid_hits,
                         Confirmation confirmation, const FusionConfig& cfg) {
  double eta = module_base_confidence(cand, grid_hits, cfg);
  if (confirmation == Confirmation::confirmed) eta *= cfg.confirm_bonus_high;
  if (confirmation == Confirmation::silent) eta *= cfg.confirm_bonus_low;
  return clamp_eta(eta);
}

double map_confidence(const Candidate& cand, ObjectClass cls,
                      const DigitalMap& map, const FusionConfig& cfg) {
  if (map.frame != MapFrame::ego) {
    throw FrameMismatch("map_confidence: map must be in the ego frame");
  }
  const Vec2 p = cand.bbox.center;
  const double building =
      point_in_building(p, map, cfg.building_inset) ? cfg.building_penalty : 1.0;
  double lane = cfg.lane_neutral;
  if (is_vehicle(cls)) {
    if (const auto m = associate_rectangle(p, cand.heading, map, cfg.lane_gate)) {
      const double h = m->heading_deviation / cfg.heading_sigma;
      const double o = m->lateral_offset / cfg.offset_sigma;
      lane = std::exp(-h * h - o * o);
    }
  }
  return clamp_eta(building * lane);
}

double combined_confidence(double eta_p, double eta_e, double eta_m) {
  return eta_p * eta_e * eta_m;
}

MetaObject predict_meta(const MetaObject& meta, double dt) {
  MetaObject out = meta;
  const Vec2 step = meta.v * dt * heading_vector(meta.phi);
  out.ref_pos += step;
  out.bbox.center += step;
  return out;
}

double reference_distance(const Candidate& cand, const MetaObject& meta) {
  const MetaObject pred = predict_meta(meta, cand.timestamp - meta.last_update);
  return (cand.ref_pos - pred.bbox.point(cand.ref_label)).norm();
}

MetaAssociation associate_to_meta(const std::vector<Candidate>& candidates,
                                  const std::vector<MetaObject>& metas,
                                  const FusionConfig& cfg) {
  MetaAssociation out;
  std::vector<bool> meta_taken(metas.size(), false);
  std::vector<std::size_t> pending;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const Candidate& c = candidates[i];
    std::optional<std::size_t> bound;
    for (std::size_t k = 0; k < metas.size(); ++k) {
      const auto& lbl = c.module == Module::grid ? metas[k].grid_label
                                                 : metas[k].track_label;
      if (lbl && *lbl == c.source_label) {
        bound = k;
        break;
      }
    }
    if (!bound) {
      pending.push_back(i);
      continue;
    }
    const double sanity = cfg.label_sanity_factor * cfg.association_gate;
    if (!meta_taken[*bound] && reference_distance(c, metas[*bound]) <= sanity) {
      out.pairs.emplace_back(i, *bound);
      meta_taken[*bound] = true;
    } else {
      out.label_conflicts.push_back(i);
    }
  }

  std::vector<std::size_t> open_metas;
  for (std::size_t k = 0; k < metas.size(); ++k) {
    if (meta_taken[k]) continue;
    open_metas.push_back(k);
  }
  // A binding only blocks matching while its source label is still alive.
  auto alive = [&](Module mod, Label lbl) {
    return std::any_of(candidates.begin(), candidates.end(), [&](const Candidate& c) {
      return c.module == mod && c.source_label == lbl;
    });
  };
  CostMatrix m(pending.size(), open_metas.size());
  for (std::size_t r = 0; r < pending.size(); ++r) {
    const Candidate& c = candidates[pending[r]];
    for (std::size_t q = 0; q < open_metas.size(); ++q) {
      const MetaObject& meta = metas[open_metas[q]];
      const auto& own = c.module == Module::grid ? meta.grid_label
                                                 : meta.track_label;
      const double d = reference_distance(c, meta);
      if ((own && alive(c.module, *own)) || d > cfg.association_gate) {
        m.forbid(r, q);
      } else {
        m.at(r, q) = d;
      }
    }
  }
  std::vector<bool> cand_matched(pending.size(), false);
  for (const auto& [r, q] : hungarian_assign(m).pairs) {
    out.pairs.emplace_back(pending[r], open_metas[q]);
    meta_taken[open_metas[q]] = true;
    cand_matched[r] = true;
  }
  for (std::size_t r = 0; r < pending.size(); ++r) {
    if (!cand_matched[r]) out.unmatched_candidates.push_back(pending[r]);
  }
  for (std::size_t k = 0; k < metas.size(); ++k) {
    if (!meta_taken[k]) out.unmatched_metas.push_back(k);
  }
  std::sort(out.pairs.begin(), out.pairs.end());
  return out;
}

namespace {

void record_provenance(MetaObject& m, const Candidate& cand,
                       std::optional<std::uint64_t> envelope) {
  if (cand.module == Module::grid) {
    m.last_grid = cand.grid;
    m.t_grid = cand.timestamp;
    ++m.grid_hits;
    if (!m.grid_label) m.grid_label = cand.source_label;
    m.grid_envelope = envelope;
  } else {
    m.last_track = cand.track;
    m.t_track = cand.timestamp;
    ++m.track_hits;
    if (!m.track_label) m.track_label = cand.source_label;
    m.track_envelope = envelope;
    m.cls = cand.cls;
  }
}

}  // namespace

MetaObject update_meta(const MetaObject& meta, const Candidate& cand,
                       double eta, const FusionConfig& cfg,
                       std::optional<std::uint64_t> envelope) {
  if (eta < cfg.eta_min) {
    throw InvalidArgument("update_meta: confidence below the gate");
  }
  MetaObject out = meta;
  const double s = cfg.extent_smoothing;
  double length = meta.bbox.length;
  double width = meta.bbox.width;
  const RefPoint rp = cand.ref_label;
  const bool width_only = rp == RefPoint::b || rp == RefPoint::f;
  const bool length_only = rp == RefPoint::l || rp == RefPoint::r;
  if (!length_only) width = s * width + (1.0 - s) * cand.bbox.width;
  if (!width_only) length = s * length + (1.0 - s) * cand.bbox.length;

  out.ref_pos = cand.ref_pos;
  out.ref_label = rp;
  out.v = cand.speed;
  out.phi = normalize_angle(cand.heading);
  out.bbox = OrientedBox::from_reference(cand.ref_pos, rp, out.phi, length, width);
  out.eta = eta;
  out.last_candidate_eta = eta;
  out.last_update = std::max(meta.last_update, cand.timestamp);
  record_provenance(out, cand, envelope);
  return out;
}

std::optional<MetaObject> create_meta(const Candidate& cand, double eta,
                                      Label label, const FusionConfig& cfg,
                                      std::optional<std::uint64_t> envelope) {
  if (eta < cfg.eta_min) return std::nullopt;
  MetaObject m;
  m.ref_pos = cand.ref_pos;
  m.ref_label = cand.ref_label;
  m.v = cand.speed;
  m.phi = normalize_angle(cand.heading);
  m.bbox = cand.bbox;
  m.label = label;
  m.eta = eta;
  m.last_candidate_eta = eta;
  m.last_update = cand.timestamp;
  record_provenance(m, cand, envelope);
  return m;
}

std::vector<MetaObject> prune_stale(std::vector<MetaObject> metas, double now,
                                    const FusionConfig& cfg) {
  std::erase_if(metas, [&](const MetaObject& m) {
    return now - m.last_update > cfg.stale_timeout;
  });
  return metas;
}

FusionEngine::FusionEngine(FusionConfig cfg, DigitalMap map_in_ego,
                           Label first_label)
    : cfg_(std::move(cfg)), map_(std::move(map_in_ego)),
      next_label_(first_label) {
  if (map_.frame != MapFrame::ego) {
    throw FrameMismatch("FusionEngine: map must be in the ego frame");
  }
  if (!(cfg_.eta_min > 0.0 && cfg_.eta_min < 1.0)) {
    throw InvalidArgument("eta_min must lie in (0, 1)");
  }
}

namespace {

void validate_envelope(const SampleEnvelope& e) {
  if (e.module == Module::grid && !e.tracks.empty()) {
    throw InvalidArgument("grid envelope carries tracks");
  }
  if (e.module == Module::tracker && !e.grid.empty()) {
    throw InvalidArgument("tracker envelope carries grid objects");
  }
  auto off = [&](double t) { return std::abs(t - e.timestamp) > 1e-9; };
  for (const auto& g : e.grid) {
    if (off(g.timestamp)) throw InvalidArgument("grid object timestamp mismatch");
  }
  for (const auto& t : e.tracks) {
    if (off(t.timestamp)) throw InvalidArgument("track timestamp mismatch");
  }
}

}  // namespace

void FusionEngine::enqueue(SampleEnvelope envelope) {
  validate_envelope(envelope);
  if (watermark_ && envelope.timestamp < *watermark_ - cfg_.lateness_bound) {
    throw OutOfOrderSample("envelope at t=" + std::to_string(envelope.timestamp) +
                           " is older than the lateness bound");
  }
  const auto pos = std::upper_bound(
      queue_.begin(), queue_.end(), envelope.timestamp,
      [](double t, const Queued& q) { return t < q.envelope.timestamp; });
  queue_.insert(pos, Queued{next_seq_++, std::move(envelope)});
}

std::optional<EnvelopeResult> FusionEngine::process_next() {
  if (queue_.empty()) return std::nullopt;
  Queued q = std::move(queue_.front());
  queue_.pop_front();
  return process(q.seq, q.envelope);
}

std::vector<EnvelopeResult> FusionEngine::process_until(double t) {
  std::vector<EnvelopeResult> out;
  while (!queue_.empty() && queue_.front().envelope.timestamp <= t) {
    out.push_back(*process_next());
  }
  return out;
}

std::vector<EnvelopeResult> FusionEngine::drain() {
  std::vector<EnvelopeResult> out;
  while (!queue_.empty()) out.push_back(*process_next());
  return out;
}

EnvelopeResult FusionEngine::process_envelope(const SampleEnvelope& envelope) {
  validate_envelope(envelope);
  if (watermark_ && envelope.timestamp < *watermark_ - cfg_.lateness_bound) {
    throw OutOfOrderSample("envelope is older than the lateness bound");
  }
  return process(next_seq_++, envelope);
}

Confirmation FusionEngine::confirmation_for(const Candidate& cand,
                                            const MetaObject* meta,
                                            const Pose2& ego) const {
  const Vec2 p = cand.bbox.center;
  if (!cfg_.fov_grid.contains(ego, p) || !cfg_.fov_tracker.contains(ego, p)) {
    return Confirmation::outside_fov;
  }
  const Module o = other(cand.module);
  const auto& latest = o == Module::grid ? latest_grid_ : latest_tracker_;
  if (!latest || cand.timestamp - latest->timestamp > cfg_.stale_timeout) {
    return Confirmation::silent;
  }
  if (meta) {
    const auto& seq = o == Module::grid ? meta->grid_envelope : meta->track_envelope;
    const auto& t = o == Module::grid ? meta->t_grid : meta->t_track;
    const bool fresh = seq && *seq == latest->seq && t &&
                       cand.timestamp - *t <= cfg_.stale_timeout;
    return fresh ? Confirmation::confirmed : Confirmation::silent;
  }
  for (const auto& c : latest->candidates) {
    const Vec2 q = c.bbox.point(cand.ref_label) +
                   c.velocity() * (cand.timestamp - c.timestamp);
    if ((cand.ref_pos - q).norm() <= cfg_.association_gate) {
      return Confirmation::confirmed;
    }
  }
  return Confirmation::silent;
}

double FusionEngine::physics_for(const Candidate& cand,
                                 const MetaObject* meta) const {
  if (!meta) return cfg_.neutral_physics;
  const bool grid = cand.module == Module::grid;
  const auto& t_same = grid ? meta->t_grid : meta->t_track;
  if (t_same && cand.timestamp - *t_same > 0.0) {
    const Candidate prev = grid ? make_candidate(*meta->last_grid)
                                : make_candidate(*meta->last_track);
    const double dt = cand.timestamp - *t_same;
    return physics_core(cand, as_reference(prev), dt,
                        std::max(dt, cfg_.physics_min_dt), cfg_);
  }
  const double dt = std::max(0.0, cand.timestamp - meta->last_update);
  return physics_core(cand, *meta, dt, std::max(dt, cfg_.physics_min_dt), cfg_);
}

EnvelopeResult FusionEngine::process(std::uint64_t seq,
                                     const SampleEnvelope& envelope) {
  EnvelopeResult result;
  result.envelope = seq;
  result.timestamp = envelope.timestamp;
  result.module = envelope.module;

  std::vector<Candidate> candidates;
  for (const auto& g : envelope.grid) candidates.push_back(make_candidate(g));
  for (const auto& t : envelope.tracks) candidates.push_back(make_candidate(t));

  if (envelope.module == Module::grid) {
    std::map<Label, std::pair<std::size_t, std::uint64_t>> next;
    for (const auto& c : candidates) {
      std::size_t count = 1;
      const auto it = grid_persistence_.find(c.source_label);
      if (it != grid_persistence_.end() && latest_grid_ &&
          it->second.second == latest_grid_->seq) {
        count = it->second.first + 1;
      }
      next[c.source_label] = {count, seq};
    }
    grid_persistence_ = std::move(next);
  }

  // Second and later occurrences of a source label are duplicates.
  std::vector<bool> duplicate(candidates.size(), false);
  std::vector<Candidate> unique;
  std::vector<std::size_t> unique_index;
  {
    std::set<Label> seen;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
      if (!seen.insert(candidates[i].source_label).second) {
        duplicate[i] = true;
      } else {
        unique.push_back(candidates[i]);
        unique_index.push_back(i);
      }
    }
  }

  const MetaAssociation assoc = associate_to_meta(unique, metas_, cfg_);
  std::vector<std::optional<std::size_t>> meta_of(candidates.size());
  std::vector<bool> conflict(candidates.size(), false);
  for (const auto& [u, k] : assoc.pairs) meta_of[unique_index[u]] = k;
  for (std::size_t u : assoc.label_conflicts) conflict[unique_index[u]] = true;

  std::vector<MetaObject> updated = metas_;
  std::vector<MetaObject> created;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const Candidate& c = candidates[i];
    const MetaObject* meta = meta_of[i] ? &metas_[*meta_of[i]] : nullptr;

    ConfidenceRecord rec;
    rec.envelope = seq;
    rec.timestamp = envelope.timestamp;
    rec.module = c.module;
    rec.source_label = c.source_label;
    rec.position = c.ref_pos;

    ObjectClass cls = c.cls;
    if (c.module == Module::grid && meta) cls = meta->cls;
    std::size_t hits = 1;
    if (c.module == Module::grid) {
      hits = grid_persistence_.at(c.source_label).first;
    }
    rec.confirmation = confirmation_for(c, meta, envelope.ego_pose);
    rec.eta_p = physics_for(c, meta);
    rec.eta_e = module_confidence(c, hits, rec.confirmation, cfg_);
    rec.eta_m = map_confidence(c, cls, map_, cfg_);
    rec.eta = combined_confidence(rec.eta_p, rec.eta_e, rec.eta_m);

    if (duplicate[i]) {
      rec.reason = "duplicate";
    } else if (conflict[i]) {
      rec.reason = "label_conflict";
      for (const auto& m : metas_) {
        const auto& lbl = c.module == Module::grid ? m.grid_label : m.track_label;
        if (lbl && *lbl == c.source_label) rec.meta_label = m.label;
      }
    } else if (meta) {
      MetaObject& target = updated[*meta_of[i]];
      rec.meta_label = target.label;
      target.last_candidate_eta = rec.eta;
      if (rec.eta >= cfg_.eta_min) {
        target = update_meta(target, c, rec.eta, cfg_, seq);
        rec.action = Action::updated;
      }
    } else if (auto m = create_meta(c, rec.eta, next_label_, cfg_, seq)) {
      ++next_label_;
      rec.action = Action::created;
      rec.meta_label = m->label;
      created.push_back(std::move(*m));
    }
    result.records.push_back(std::move(rec));
  }

  updated.insert(updated.end(), created.begin(), created.end());
  metas_ = prune_stale(std::move(updated), envelope.timestamp, cfg_);
  std::sort(metas_.begin(), metas_.end(),
            [](const MetaObject& a, const MetaObject& b) { return a.label < b.label; });

  LatestEnvelope latest{seq, envelope.timestamp, std::move(candidates)};
  if (envelope.module == Module::grid) {
    latest_grid_ = std::move(latest);
  } else {
    latest_tracker_ = std::move(latest);
  }
  watermark_ = watermark_ ? std::max(*watermark_, envelope.timestamp)
                          : envelope.timestamp;
  result.metas = metas_;
  return result;
}

}  // namespace gridfuse
