#pragma once

#include "gridfuse/digital_map.hpp"
#include "gridfuse/dogma.hpp"
#include "gridfuse/ego_motion.hpp"
#include "gridfuse/extraction.hpp"
#include "gridfuse/fusion.hpp"

#include <json.hpp>

#include <cstdint>
#include <string>
#include <vector>

namespace gridfuse {

using nlohmann::json;

std::string base64_encode(const std::vector<std::uint8_t>& bytes);
/// Throws ParseError on malformed input.
std::vector<std::uint8_t> base64_decode(const std::string& text);

json vec_to_json(const Vec2& v);
Vec2 vec_from_json(const json& j);

json box_to_json(const OrientedBox& b);
OrientedBox box_from_json(const json& j);

json grid_object_to_json(const GridObject& o);
GridObject grid_object_from_json(const json& j);

json track_to_json(const TrackState& t);
TrackState track_from_json(const json& j);

json meta_to_json(const MetaObject& m);

json record_to_json(const ConfidenceRecord& r);
ConfidenceRecord record_from_json(const json& j);

json envelope_to_json(const SampleEnvelope& e);
SampleEnvelope envelope_from_json(const json& j);

json imu_to_json(const ImuSample& s);
ImuSample imu_from_json(const json& j);

enum class CellEncoding { sparse, base64_f64 };

/// One JSON record per frame. `sparse` lists non-empty cells as
/// [index, m_occ, m_free, vx, vy, var_vx, cov_vxvy, var_vy]; `base64_f64`
/// packs those seven values of every cell as little-endian float64.
json dogma_frame_to_json(const DogmaFrame& frame,
                         CellEncoding encoding = CellEncoding::sparse);
DogmaFrame dogma_frame_from_json(const json& j);

/// Map file: {"buildings": [{id, corners}], "lanes": [{id, points}]} in the
/// global frame. Rectangles are derived, never read.
DigitalMap map_from_json(const json& j, const MapConfig& cfg = {});
DigitalMap load_map_file(const std::string& path, const MapConfig& cfg = {});

/// Parses every non-empty line of a JSON-lines file.
std::vector<json> read_jsonl(const std::string& path);

}  // namespace gridfuse
