#include "gridfuse/config.hpp"

#include "gridfuse/error.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace gridfuse {

using nlohmann::json;

namespace {

constexpr double kDeg = kPi / 180.0;

json fov_to_json(const FieldOfView& fov) {
  json out = json::array();
  for (const auto& s : fov.sectors) {
    out.push_back({{"center_deg", s.center / kDeg},
                   {"half_angle_deg", s.half_angle / kDeg},
                   {"max_range", s.max_range}});
  }
  return out;
}

FieldOfView fov_from_json(const json& j, const std::string& where) {
  if (!j.is_array()) throw ConfigError(where + " must be an array of sectors");
  FieldOfView fov;
  for (const auto& s : j) {
    FovSector sec;
    sec.center = s.value("center_deg", 0.0) * kDeg;
    sec.half_angle = s.at("half_angle_deg").get<double>() * kDeg;
    sec.max_range = s.at("max_range").get<double>();
    if (sec.half_angle < 0.0 || sec.max_range < 0.0) {
      throw ConfigError(where + ": sector angles and ranges must be >= 0");
    }
    fov.sectors.push_back(sec);
  }
  return fov;
}

// Reads a section field by field so that unknown keys are reported.
class Section {
 public:
  Section(const json& j, std::string name) : j_(j), name_(std::move(name)) {
    if (!j_.is_object()) throw ConfigError(name_ + " must be an object");
  }

  template <typename T>
  void read(const char* key, T& out) {
    seen_.emplace_back(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(name_ + "." + key + ": " + e.what());
    }
  }

  void read_deg(const char* key, double& radians) {
    double deg = radians / kDeg;
    read(key, deg);
    radians = deg * kDeg;
  }

  void read_fov(const char* key, FieldOfView& fov) {
    seen_.emplace_back(key);
    if (j_.contains(key)) fov = fov_from_json(j_.at(key), name_ + "." + key);
  }

  void finish() const {
    for (const auto& [k, v] : j_.items()) {
      if (std::find(seen_.begin(), seen_.end(), k) == seen_.end()) {
        throw ConfigError("unknown config key " + name_ + "." + k);
      }
    }
  }

 private:
  const json& j_;
  std::string name_;
  std::vector<std::string> seen_;
};

void require(bool ok, const std::string& what) {
  if (!ok) throw ConfigError("invalid config: " + what);
}

void validate(const PipelineConfig& c) {
  const auto& e = c.extraction;
  for (double v : {e.eps_m_occ, e.eps_p_occ, e.eps_v_c, e.eps_var_vx,
                   e.eps_var_vy, e.eps_d0, e.eps_pos, e.eps_vel, e.eps_ratio,
                   e.cv_gate}) {
    require(std::isfinite(v) && v >= 0.0, "extraction thresholds must be >= 0");
  }
  require(e.min_cluster_cells >= 1, "extraction.min_cluster_cells >= 1");
  const auto& f = c.fusion;
  require(f.eta_min > 0.0 && f.eta_min < 1.0, "fusion.eta_min in (0, 1)");
  for (double v : {f.max_accel, f.max_speed, f.jump_gate, f.physics_min_dt,
                   f.stale_timeout, f.cov_scale, f.existence_scale,
                   f.heading_sigma, f.offset_sigma, f.association_gate,
                   f.label_sanity_factor, f.confirm_bonus_high,
                   f.confirm_bonus_low, f.building_penalty, f.lane_neutral}) {
    require(std::isfinite(v) && v > 0.0, "fusion scales must be > 0");
  }
  require(f.lateness_bound >= 0.0, "fusion.lateness_bound >= 0");
  require(f.extent_smoothing >= 0.0 && f.extent_smoothing <= 1.0,
          "fusion.extent_smoothing in [0, 1]");
  require(f.neutral_physics > 0.0 && f.neutral_physics < 1.0,
          "fusion.neutral_physics in (0, 1)");
  require(c.map.max_deviation > 0.0 && c.map.lane_width > 0.0,
          "map.max_deviation and map.lane_width > 0");
  require((c.ego.process.array() >= 0.0).all() &&
              (c.ego.measurement.array() > 0.0).all(),
          "ego noise: process >= 0, measurement > 0");
}

}  // namespace

json config_to_json(const PipelineConfig& cfg) {
  const auto& e = cfg.extraction;
  const auto& f = cfg.fusion;
  const auto& m = cfg.map;
  return {
      {"extraction",
       {{"eps_m_occ", e.eps_m_occ},
        {"eps_p_occ", e.eps_p_occ},
        {"eps_v_c", e.eps_v_c},
        {"eps_var_vx", e.eps_var_vx},
        {"eps_var_vy", e.eps_var_vy},
        {"eps_d0", e.eps_d0},
        {"eps_pos", e.eps_pos},
        {"eps_vel", e.eps_vel},
        {"eps_ratio", e.eps_ratio},
        {"min_cluster_cells", e.min_cluster_cells},
        {"cv_gate", e.cv_gate},
        {"det_floor", e.det_floor}}},
      {"fusion",
       {{"eta_min", f.eta_min},
        {"max_accel", f.max_accel},
        {"max_speed", f.max_speed},
        {"jump_gate", f.jump_gate},
        {"physics_min_dt", f.physics_min_dt},
        {"neutral_physics", f.neutral_physics},
        {"stale_timeout", f.stale_timeout},
        {"confirm_bonus_high", f.confirm_bonus_high},
        {"confirm_bonus_low", f.confirm_bonus_low},
        {"cov_scale", f.cov_scale},
        {"existence_scale", f.existence_scale},
        {"building_penalty", f.building_penalty},
        {"building_inset", f.building_inset},
        {"heading_sigma_deg", f.heading_sigma / kDeg},
        {"offset_sigma", f.offset_sigma},
        {"lane_neutral", f.lane_neutral},
        {"lane_gate", f.lane_gate},
        {"association_gate", f.association_gate},
        {"label_sanity_factor", f.label_sanity_factor},
        {"lateness_bound", f.lateness_bound},
        {"extent_smoothing", f.extent_smoothing},
        {"fov_tracker", fov_to_json(f.fov_tracker)},
        {"fov_grid", fov_to_json(f.fov_grid)}}},
      {"map",
       {{"max_deviation", m.max_deviation},
        {"lane_width", m.lane_width}}},
      {"ego",
       {{"process_noise", {cfg.ego.process(0), cfg.ego.process(1), cfg.ego.process(2)}},
        {"measurement_noise",
         {cfg.ego.measurement(0), cfg.ego.measurement(1), cfg.ego.measurement(2)}}}},
  };
}

PipelineConfig config_from_json(const json& j, const PipelineConfig& base) {
  PipelineConfig c = base;
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  for (const auto& [k, v] : j.items()) {
    if (k == "_notes" || k == "version") continue;
    if (k == "extraction") {
      Section s(v, k);
      auto& e = c.extraction;
      s.read("eps_m_occ", e.eps_m_occ);
      s.read("eps_p_occ", e.eps_p_occ);
      s.read("eps_v_c", e.eps_v_c);
      s.read("eps_var_vx", e.eps_var_vx);
      s.read("eps_var_vy", e.eps_var_vy);
      s.read("eps_d0", e.eps_d0);
      s.read("eps_pos", e.eps_pos);
      s.read("eps_vel", e.eps_vel);
      s.read("eps_ratio", e.eps_ratio);
      s.read("min_cluster_cells", e.min_cluster_cells);
      s.read("cv_gate", e.cv_gate);
      s.read("det_floor", e.det_floor);
      s.finish();
    } else if (k == "fusion") {
      Section s(v, k);
      auto& f = c.fusion;
      s.read("eta_min", f.eta_min);
      s.read("max_accel", f.max_accel);
      s.read("max_speed", f.max_speed);
      s.read("jump_gate", f.jump_gate);
      s.read("physics_min_dt", f.physics_min_dt);
      s.read("neutral_physics", f.neutral_physics);
      s.read("stale_timeout", f.stale_timeout);
      s.read("confirm_bonus_high", f.confirm_bonus_high);
      s.read("confirm_bonus_low", f.confirm_bonus_low);
      s.read("cov_scale", f.cov_scale);
      s.read("existence_scale", f.existence_scale);
      s.read("building_penalty", f.building_penalty);
      s.read("building_inset", f.building_inset);
      s.read_deg("heading_sigma_deg", f.heading_sigma);
      s.read("offset_sigma", f.offset_sigma);
      s.read("lane_neutral", f.lane_neutral);
      s.read("lane_gate", f.lane_gate);
      s.read("association_gate", f.association_gate);
      s.read("label_sanity_factor", f.label_sanity_factor);
      s.read("lateness_bound", f.lateness_bound);
      s.read("extent_smoothing", f.extent_smoothing);
      s.read_fov("fov_tracker", f.fov_tracker);
      s.read_fov("fov_grid", f.fov_grid);
      s.finish();
    } else if (k == "map") {
      Section s(v, k);
      s.read("max_deviation", c.map.max_deviation);
      s.read("lane_width", c.map.lane_width);
      s.finish();
    } else if (k == "ego") {
      Section s(v, k);
      std::vector<double> p(c.ego.process.data(), c.ego.process.data() + 3);
      std::vector<double> r(c.ego.measurement.data(), c.ego.measurement.data() + 3);
      s.read("process_noise", p);
      s.read("measurement_noise", r);
      s.finish();
      if (p.size() != 3 || r.size() != 3) {
        throw ConfigError("ego noise entries need three values");
      }
      c.ego.process = Eigen::Vector3d(p[0], p[1], p[2]);
      c.ego.measurement = Eigen::Vector3d(r[0], r[1], r[2]);
    } else {
      throw ConfigError("unknown config section " + k);
    }
  }
  validate(c);
  return c;
}

PipelineConfig load_config_file(const std::string& path,
                                const PipelineConfig& base) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config file " + path + ": " + e.what());
  }
  return config_from_json(j, base);
}

void apply_override(json& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("override must look like section.key=value: " + assignment);
  }
  const std::string key = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  json* node = &cfg;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot - start);
    if (!node->is_object() || !node->contains(part)) {
      throw ConfigError("unknown config key " + key);
    }
    node = &(*node)[part];
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  json value = json::parse(raw, nullptr, false);
  if (value.is_discarded()) value = raw;
  *node = value;
}

PipelineConfig with_overrides(const PipelineConfig& base,
                              const std::vector<std::string>& overrides) {
  if (overrides.empty()) return base;
  json j = config_to_json(base);
  for (const auto& o : overrides) apply_override(j, o);
  return config_from_json(j);
}

}  // namespace gridfuse
