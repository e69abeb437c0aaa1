#pragma once

#include <filesystem>

#include <json.hpp>

#include "poolrank/circuit_builder.hpp"
#include "poolrank/pooling_geometry.hpp"
#include "poolrank/rank_analyzer.hpp"
#include "poolrank/tensor_core.hpp"

namespace poolrank {

using json = nlohmann::json;

/// {"n": 16, "i": [1, 3, ...]} (J is the complement) or
/// {"n": 16, "name": "odd_even" | "low_high"}; an explicit "j" is checked.
Partition partition_from_json(const json& j);
json partition_to_json(const Partition& p);

/// {"kind": "square" | "mirror", "side": 4} or
/// {"kind": "custom", "side": 4, "levels": [[[a, b, c, d], ...], ...]}.
PoolingGeometry geometry_from_json(const json& j);
json geometry_to_json(const PoolingGeometry& g);

/// {"n_patches", "m_rep", "widths", "outputs", "depth": "deep" | "shallow",
///  "geometry"?: {...}}.
NetworkSpec spec_from_json(const json& j);
json spec_to_json(const NetworkSpec& s);

/// Inline {"layers": [[[row], ...], ...]} or a header
/// {"format": "float64-le", "file": "w.bin", "shapes": [[rows, cols], ...]}
/// whose file is resolved against `base_dir`.
WeightSetting weights_from_json(const json& j, const std::filesystem::path& base_dir = {});
json weights_to_json(const WeightSetting& w);

/// Writes `<stem>.json` (header) and `<stem>.bin` (row-major layers).
void save_weights_binary(const WeightSetting& w, const std::filesystem::path& stem);

json load_json_file(const std::filesystem::path& path);

json bound_report_to_json(const BoundReport& r);
json distance_report_to_json(const DistanceReport& r);
json claim2_report_to_json(const Claim2Report& r);

}  // namespace poolrank
