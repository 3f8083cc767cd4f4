#include "gridfuse/serialization.hpp"

#include "gridfuse/error.hpp"

#include <openssl/evp.h>

#include <bit>
#include <cstring>
#include <fstream>

namespace gridfuse {

std::string base64_encode(const std::vector<std::uint8_t>& bytes) {
  std::string out(4 * ((bytes.size() + 2) / 3), '\0');
  const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                                bytes.data(), static_cast<int>(bytes.size()));
  out.resize(static_cast<std::size_t>(n));
  return out;
}

std::vector<std::uint8_t> base64_decode(const std::string& text) {
  if (text.size() % 4 != 0) throw ParseError("base64 length not a multiple of 4");
  std::vector<std::uint8_t> out(3 * text.size() / 4);
  const int n = EVP_DecodeBlock(
      out.data(), reinterpret_cast<const unsigned char*>(text.data()),
      static_cast<int>(text.size()));
  if (n < 0) throw ParseError("malformed base64 payload");
  // DecodeBlock keeps the padding bytes; drop them.
  std::size_t len = static_cast<std::size_t>(n);
  if (!text.empty() && text.back() == '=') --len;
  if (text.size() > 1 && text[text.size() - 2] == '=') --len;
  out.resize(len);
  return out;
}

json vec_to_json(const Vec2& v) { return json::array({v.x(), v.y()}); }

Vec2 vec_from_json(const json& j) {
  if (!j.is_array() || j.size() != 2) throw ParseError("expected [x, y]");
  return {j[0].get<double>(), j[1].get<double>()};
}

json box_to_json(const OrientedBox& b) {
  json corners = json::array();
  for (const auto& c : b.corners()) corners.push_back(vec_to_json(c));
  return {{"center", vec_to_json(b.center)},
          {"heading", b.heading},
          {"length", b.length},
          {"width", b.width},
          {"corners", corners}};
}

OrientedBox box_from_json(const json& j) {
  if (j.contains("center")) {
    return {vec_from_json(j.at("center")), j.at("heading").get<double>(),
            j.at("length").get<double>(), j.at("width").get<double>()};
  }
  const json& c = j.contains("corners") ? j.at("corners") : j;
  if (!c.is_array() || c.size() != 4) throw ParseError("bbox needs four corners");
  return OrientedBox::from_corners({vec_from_json(c[0]), vec_from_json(c[1]),
                                    vec_from_json(c[2]), vec_from_json(c[3])});
}

namespace {

RefPoint ref_from_json(const json& j) {
  const auto rp = ref_point_from_string(j.get<std::string>());
  if (!rp) throw ParseError("unknown reference point " + j.dump());
  return *rp;
}

template <typename F>
auto parse_guard(const char* what, F&& f) {
  try {
    return f();
  } catch (const json::exception& e) {
    throw ParseError(std::string(what) + ": " + e.what());
  }
}

}  // namespace

json grid_object_to_json(const GridObject& o) {
  return {{"label", o.label},
          {"timestamp", o.timestamp},
          {"ref_pos", vec_to_json(o.ref_pos)},
          {"ref_label", std::string(to_string(o.ref_label))},
          {"speed", o.speed},
          {"orientation", o.orientation},
          {"bbox", box_to_json(o.bbox)},
          {"cell_count", o.cell_count}};
}

GridObject grid_object_from_json(const json& j) {
  return parse_guard("grid object", [&] {
    GridObject o;
    o.label = j.at("label").get<Label>();
    o.timestamp = j.at("timestamp").get<double>();
    o.ref_pos = vec_from_json(j.at("ref_pos"));
    o.ref_label = ref_from_json(j.at("ref_label"));
    o.speed = j.at("speed").get<double>();
    o.orientation = j.at("orientation").get<double>();
    o.bbox = box_from_json(j.at("bbox"));
    o.cell_count = j.value("cell_count", std::size_t{0});
    return o;
  });
}

json track_to_json(const TrackState& t) {
  std::vector<double> cov(t.cov.data(), t.cov.data() + 36);
  return {{"label", t.label},
          {"timestamp", t.timestamp},
          {"ref_pos", vec_to_json(t.ref_pos)},
          {"ref_label", std::string(to_string(t.ref_label))},
          {"v", t.v},
          {"a", t.a},
          {"phi", t.phi},
          {"omega", t.omega},
          {"bbox", box_to_json(t.bbox)},
          {"cov", cov},
          {"existence", t.existence},
          {"class", std::string(to_string(t.cls))}};
}

TrackState track_from_json(const json& j) {
  return parse_guard("track", [&] {
    TrackState t;
    t.label = j.at("label").get<Label>();
    t.timestamp = j.at("timestamp").get<double>();
    t.ref_pos = vec_from_json(j.at("ref_pos"));
    t.ref_label = ref_from_json(j.at("ref_label"));
    t.v = j.at("v").get<double>();
    t.a = j.value("a", 0.0);
    t.phi = j.at("phi").get<double>();
    t.omega = j.value("omega", 0.0);
    t.bbox = box_from_json(j.at("bbox"));
    const auto cov = j.at("cov").get<std::vector<double>>();
    if (cov.size() != 36) throw ParseError("track covariance needs 36 entries");
    std::memcpy(t.cov.data(), cov.data(), sizeof(double) * 36);
    t.existence = j.at("existence").get<double>();
    const auto cls = object_class_from_string(j.value("class", "unknown"));
    if (!cls) throw ParseError("unknown object class");
    t.cls = *cls;
    return t;
  });
}

json meta_to_json(const MetaObject& m) {
  auto opt = [](const auto& v) -> json {
    if (v) return *v;
    return nullptr;
  };
  return {{"label", m.label},
          {"ref_pos", vec_to_json(m.ref_pos)},
          {"ref_label", std::string(to_string(m.ref_label))},
          {"v", m.v},
          {"phi", m.phi},
          {"bbox", box_to_json(m.bbox)},
          {"class", std::string(to_string(m.cls))},
          {"eta", m.eta},
          {"last_candidate_eta", m.last_candidate_eta},
          {"last_update", m.last_update},
          {"t_grid", opt(m.t_grid)},
          {"t_track", opt(m.t_track)},
          {"grid_label", opt(m.grid_label)},
          {"track_label", opt(m.track_label)},
          {"grid_hits", m.grid_hits},
          {"track_hits", m.track_hits},
          {"last_grid", m.last_grid ? grid_object_to_json(*m.last_grid) : json()},
          {"last_track", m.last_track ? track_to_json(*m.last_track) : json()}};
}

json record_to_json(const ConfidenceRecord& r) {
  return {{"envelope", r.envelope},
          {"timestamp", r.timestamp},
          {"module", std::string(to_string(r.module))},
          {"source_label", r.source_label},
          {"position", vec_to_json(r.position)},
          {"eta_p", r.eta_p},
          {"eta_e", r.eta_e},
          {"eta_m", r.eta_m},
          {"eta", r.eta},
          {"confirmation", std::string(to_string(r.confirmation))},
          {"action", std::string(to_string(r.action))},
          {"meta_label", r.meta_label ? json(*r.meta_label) : json()},
          {"reason", r.reason}};
}

ConfidenceRecord record_from_json(const json& j) {
  return parse_guard("confidence record", [&] {
    ConfidenceRecord r;
    r.envelope = j.at("envelope").get<std::uint64_t>();
    r.timestamp = j.at("timestamp").get<double>();
    r.module = j.at("module").get<std::string>() == "grid" ? Module::grid
                                                          : Module::tracker;
    r.source_label = j.at("source_label").get<Label>();
    r.position = vec_from_json(j.at("position"));
    r.eta_p = j.at("eta_p").get<double>();
    r.eta_e = j.at("eta_e").get<double>();
    r.eta_m = j.at("eta_m").get<double>();
    r.eta = j.at("eta").get<double>();
    const auto conf = j.at("confirmation").get<std::string>();
    r.confirmation = conf == "confirmed" ? Confirmation::confirmed
                     : conf == "silent"  ? Confirmation::silent
                                         : Confirmation::outside_fov;
    const auto act = j.at("action").get<std::string>();
    r.action = act == "created"   ? Action::created
               : act == "updated" ? Action::updated
                                  : Action::rejected;
    if (!j.at("meta_label").is_null()) r.meta_label = j.at("meta_label").get<Label>();
    r.reason = j.value("reason", "");
    return r;
  });
}

json envelope_to_json(const SampleEnvelope& e) {
  json objects = json::array();
  for (const auto& g : e.grid) objects.push_back(grid_object_to_json(g));
  for (const auto& t : e.tracks) objects.push_back(track_to_json(t));
  return {{"type", "envelope"},
          {"module", std::string(to_string(e.module))},
          {"timestamp", e.timestamp},
          {"ego_pose", {e.ego_pose.x, e.ego_pose.y, e.ego_pose.phi}},
          {"objects", objects}};
}

SampleEnvelope envelope_from_json(const json& j) {
  return parse_guard("envelope", [&] {
    SampleEnvelope e;
    const auto module = j.at("module").get<std::string>();
    if (module != "grid" && module != "tracker") {
      throw ParseError("unknown module " + module);
    }
    e.module = module == "grid" ? Module::grid : Module::tracker;
    e.timestamp = j.at("timestamp").get<double>();
    const auto& p = j.at("ego_pose");
    e.ego_pose = {p.at(0).get<double>(), p.at(1).get<double>(),
                  p.at(2).get<double>()};
    for (const auto& o : j.at("objects")) {
      if (e.module == Module::grid) {
        e.grid.push_back(grid_object_from_json(o));
      } else {
        e.tracks.push_back(track_from_json(o));
      }
    }
    return e;
  });
}

json imu_to_json(const ImuSample& s) {
  return {{"timestamp", s.timestamp},
          {"accel_meas", s.accel_meas},
          {"yawrate_meas", s.yawrate_meas},
          {"speed_meas", s.speed_meas}};
}

ImuSample imu_from_json(const json& j) {
  return parse_guard("imu sample", [&] {
    ImuSample s;
    s.timestamp = j.at("timestamp").get<double>();
    s.accel_meas = j.at("accel_meas").get<double>();
    s.yawrate_meas = j.at("yawrate_meas").get<double>();
    s.speed_meas = j.at("speed_meas").get<double>();
    return s;
  });
}

namespace {

constexpr std::size_t kCellFields = 7;

void pack(const CellData& c, double* out) {
  out[0] = c.m_occ;
  out[1] = c.m_free;
  out[2] = c.vx;
  out[3] = c.vy;
  out[4] = c.var_vx;
  out[5] = c.cov_vxvy;
  out[6] = c.var_vy;
}

CellData unpack(const double* in) {
  return {in[0], in[1], in[2], in[3], in[4], in[5], in[6]};
}

}  // namespace

json dogma_frame_to_json(const DogmaFrame& frame, CellEncoding encoding) {
  const Pose2& p = frame.ego_pose_in_grid();
  json j = {{"type", "dogma_frame"},
            {"timestamp", frame.timestamp()},
            {"width_m", frame.width_m()},
            {"height_m", frame.height_m()},
            {"cell_size", frame.cell_size()},
            {"ego_pose", {p.x, p.y, p.phi}}};
  const auto cells = frame.cells();
  if (encoding == CellEncoding::sparse) {
    json list = json::array();
    const CellData empty{};
    double buf[kCellFields];
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (cells[i] == empty) continue;
      pack(cells[i], buf);
      json row = json::array({i});
      for (double v : buf) row.push_back(v);
      list.push_back(std::move(row));
    }
    j["encoding"] = "sparse";
    j["cells"] = std::move(list);
  } else {
    static_assert(std::endian::native == std::endian::little,
                  "base64_f64 packing assumes a little-endian host");
    std::vector<std::uint8_t> bytes(cells.size() * kCellFields * sizeof(double));
    double buf[kCellFields];
    for (std::size_t i = 0; i < cells.size(); ++i) {
      pack(cells[i], buf);
      std::memcpy(bytes.data() + i * sizeof(buf), buf, sizeof(buf));
    }
    j["encoding"] = "base64_f64";
    j["cells"] = base64_encode(bytes);
  }
  return j;
}

DogmaFrame dogma_frame_from_json(const json& j) {
  return parse_guard("dogma frame", [&] {
    const auto& p = j.at("ego_pose");
    DogmaFrame frame(j.at("width_m").get<double>(), j.at("height_m").get<double>(),
                     j.at("cell_size").get<double>(), j.at("timestamp").get<double>(),
                     {p.at(0).get<double>(), p.at(1).get<double>(),
                      p.at(2).get<double>()});
    const auto encoding = j.at("encoding").get<std::string>();
    if (encoding == "sparse") {
      double buf[kCellFields];
      for (const auto& row : j.at("cells")) {
        if (!row.is_array() || row.size() != kCellFields + 1) {
          throw ParseError("sparse cell rows need eight entries");
        }
        const auto idx = row[0].get<std::size_t>();
        if (idx >= frame.size()) throw ParseError("cell index out of range");
        for (std::size_t k = 0; k < kCellFields; ++k) buf[k] = row[k + 1].get<double>();
        frame.data(idx) = unpack(buf);
      }
    } else if (encoding == "base64_f64") {
      const auto bytes = base64_decode(j.at("cells").get<std::string>());
      const std::size_t stride = kCellFields * sizeof(double);
      if (bytes.size() != frame.size() * stride) {
        throw ParseError("base64 cell payload has the wrong size");
      }
      double buf[kCellFields];
      for (std::size_t i = 0; i < frame.size(); ++i) {
        std::memcpy(buf, bytes.data() + i * stride, stride);
        frame.data(i) = unpack(buf);
      }
    } else {
      throw ParseError("unknown cell encoding " + encoding);
    }
    return frame;
  });
}

DigitalMap map_from_json(const json& j, const MapConfig& cfg) {
  std::vector<Building> buildings;
  std::vector<Lane> lanes;
  parse_guard("map", [&] {
    for (const auto& b : j.value("buildings", json::array())) {
      Building out;
      out.id = b.at("id").get<int>();
      for (const auto& c : b.at("corners")) out.corners.push_back(vec_from_json(c));
      buildings.push_back(std::move(out));
    }
    for (const auto& l : j.value("lanes", json::array())) {
      Lane out;
      out.id = l.at("id").get<int>();
      for (const auto& q : l.at("points")) out.points.push_back(vec_from_json(q));
      lanes.push_back(std::move(out));
    }
    return 0;
  });
  return build_map(std::move(buildings), std::move(lanes), cfg);
}

DigitalMap load_map_file(const std::string& path, const MapConfig& cfg) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open map file " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ParseError("map file " + path + ": " + e.what());
  }
  return map_from_json(j, cfg);
}

std::vector<json> read_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path);
  std::vector<json> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(json::parse(line));
    } catch (const json::exception& e) {
      throw ParseError(path + ":" + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace gridfuse
