#include "poolrank/json_io.hpp"

#include <memory>
#include <numeric>
#include <stdexcept>

#include "poolrank/io_util.hpp"

namespace poolrank {

using Eigen::Index;

Partition partition_from_json(const json& j) {
    const auto n = j.at("n").get<std::size_t>();
    Partition p;
    if (j.contains("name")) {
        const auto name = j.at("name").get<std::string>();
        if (name == "odd_even") p = odd_even_partition(n);
        else if (name == "low_high") p = low_high_partition(n);
        else throw std::invalid_argument("unknown partition name '" + name + "'");
    } else {
        p = Partition::from_i(n, j.at("i").get<std::vector<int>>());
    }
    if (j.contains("j") && j.at("j").get<std::vector<int>>() != p.j_set())
        throw std::invalid_argument("partition: \"j\" is not the complement of \"i\"");
    return p;
}

json partition_to_json(const Partition& p) { return {{"n", p.n()}, {"i", p.i_set()}, {"j", p.j_set()}}; }

PoolingGeometry geometry_from_json(const json& j) {
    const auto kind = geometry_kind_from_string(j.at("kind").get<std::string>());
    const int side = j.at("side").get<int>();
    if (kind != GeometryKind::custom) return build_geometry(kind, side);
    std::vector<std::vector<PoolGroup>> levels;
    for (const auto& lvl : j.at("levels")) {
        std::vector<PoolGroup> groups;
        for (const auto& g : lvl) {
            const auto v = g.get<std::vector<int>>();
            if (v.size() != 4) throw std::invalid_argument("custom geometry: every group needs four members");
            groups.push_back({v[0], v[1], v[2], v[3]});
        }
        levels.push_back(std::move(groups));
    }
    return custom_geometry(side, std::move(levels));
}

json geometry_to_json(const PoolingGeometry& g) {
    json j = {{"kind", to_string(g.kind)}, {"side", g.side}};
    if (g.kind == GeometryKind::custom) {
        json levels = json::array();
        for (const auto& lvl : g.levels) {
            json groups = json::array();
            for (const auto& grp : lvl) groups.push_back(std::vector<int>(grp.begin(), grp.end()));
            levels.push_back(groups);
        }
        j["levels"] = levels;
    }
    return j;
}

NetworkSpec spec_from_json(const json& j) {
    NetworkSpec s;
    s.n_patches = j.at("n_patches").get<std::size_t>();
    s.m_rep = j.at("m_rep").get<int>();
    s.widths = j.at("widths").get<std::vector<int>>();
    s.outputs = j.value("outputs", 1);
    const auto depth = j.value("depth", std::string("deep"));
    if (depth == "deep") s.kind = DepthKind::deep;
    else if (depth == "shallow") s.kind = DepthKind::shallow;
    else throw std::invalid_argument("spec: depth must be \"deep\" or \"shallow\"");
    if (j.contains("geometry")) s.geometry = std::make_shared<const PoolingGeometry>(geometry_from_json(j.at("geometry")));
    s.validate();
    return s;
}

json spec_to_json(const NetworkSpec& s) {
    json j = {{"n_patches", s.n_patches},
              {"m_rep", s.m_rep},
              {"widths", s.widths},
              {"outputs", s.outputs},
              {"depth", s.kind == DepthKind::deep ? "deep" : "shallow"}};
    if (s.geometry) j["geometry"] = geometry_to_json(*s.geometry);
    return j;
}

WeightSetting weights_from_json(const json& j, const std::filesystem::path& base_dir) {
    WeightSetting w;
    if (j.contains("layers")) {
        for (const auto& layer : j.at("layers")) {
            const auto rows = layer.get<std::vector<std::vector<double>>>();
            if (rows.empty() || rows.front().empty()) throw std::invalid_argument("weights: empty layer");
            Matrix m(static_cast<Index>(rows.size()), static_cast<Index>(rows.front().size()));
            for (std::size_t r = 0; r < rows.size(); ++r) {
                if (rows[r].size() != rows.front().size()) throw std::invalid_argument("weights: ragged layer");
                for (std::size_t c = 0; c < rows[r].size(); ++c) m(static_cast<Index>(r), static_cast<Index>(c)) = rows[r][c];
            }
            w.layers.push_back(std::move(m));
        }
        return w;
    }
    if (j.value("format", "") != "float64-le") throw std::invalid_argument("weights: expected \"layers\" or a float64-le header");
    const auto values = decode_f64_le(read_file(base_dir / j.at("file").get<std::string>()));
    std::size_t pos = 0;
    for (const auto& shape : j.at("shapes")) {
        const auto rows = shape.at(0).get<Index>(), cols = shape.at(1).get<Index>();
        if (rows < 1 || cols < 1) throw std::invalid_argument("weights: non-positive layer shape");
        const auto count = static_cast<std::size_t>(rows * cols);
        if (pos + count > values.size()) throw std::invalid_argument("weights: binary block shorter than the shapes");
        w.layers.push_back(Eigen::Map<const Matrix>(values.data() + pos, rows, cols));
        pos += count;
    }
    if (pos != values.size()) throw std::invalid_argument("weights: binary block longer than the shapes");
    return w;
}

json weights_to_json(const WeightSetting& w) {
    json layers = json::array();
    for (const auto& m : w.layers) {
        json rows = json::array();
        for (Index r = 0; r < m.rows(); ++r) {
            std::vector<double> row(m.row(r).data(), m.row(r).data() + m.cols());
            rows.push_back(row);
        }
        layers.push_back(rows);
    }
    return {{"layers", layers}};
}

void save_weights_binary(const WeightSetting& w, const std::filesystem::path& stem) {
    std::vector<double> flat;
    json shapes = json::array();
    for (const auto& m : w.layers) {
        flat.insert(flat.end(), m.data(), m.data() + m.size());
        shapes.push_back({m.rows(), m.cols()});
    }
    auto bin = stem;
    bin += ".bin";
    auto header = stem;
    header += ".json";
    write_file_atomic(bin, encode_f64_le(flat));
    const json j = {{"format", "float64-le"}, {"file", bin.filename().string()}, {"shapes", shapes}};
    write_file_atomic(header, j.dump(2) + "\n");
}

json load_json_file(const std::filesystem::path& path) {
    try {
        return json::parse(read_file(path));
    } catch (const json::parse_error& e) {
        throw std::invalid_argument(path.string() + ": " + e.what());
    }
}

json bound_report_to_json(const BoundReport& r) {
    json j;
    j["lower"] = r.lower ? json(r.lower->str()) : json(nullptr);
    j["upper"] = r.upper.str();
    j["s"] = r.s_stat;
    json table = json::array();
    for (const auto& row : r.c_table) {
        json jr = json::array();
        for (const auto& c : row) jr.push_back(c.str());
        table.push_back(jr);
    }
    j["c_table"] = table;
    return j;
}

json distance_report_to_json(const DistanceReport& r) {
    return {{"d", r.d_value},
            {"ub", r.ub_from_rank},
            {"lb", r.lb_deep ? json(*r.lb_deep) : json(nullptr)},
            {"rank", r.rank},
            {"spectral_energy", r.spectral_energy},
            {"top_energy", r.top_energy}};
}

json claim2_report_to_json(const Claim2Report& r) {
    return {{"max_rank", r.max_rank_observed}, {"fraction", r.fraction_at_max}, {"trials", r.trials}, {"ranks", r.ranks}};
}

}  // namespace poolrank
