#include "poolrank/blob_benchmark.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <numeric>
#include <sstream>

#include "poolrank/random.hpp"

namespace poolrank {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Morphology and scores

BinaryImage morphological_closure(const BinaryImage& img) {
    const int side = img.side();
    const int w = side + 2;
    std::vector<std::uint8_t> padded(static_cast<std::size_t>(w) * w, 0);
    auto at = [w](std::vector<std::uint8_t>& v, int r, int c) -> std::uint8_t& {
        return v[static_cast<std::size_t>(r * w + c)];
    };
    // Outside the padded frame counts as background.
    auto get = [w](const std::vector<std::uint8_t>& v, int r, int c) -> std::uint8_t {
        if (r < 0 || c < 0 || r >= w || c >= w) return 0;
        return v[static_cast<std::size_t>(r * w + c)];
    };
    for (int r = 0; r < side; ++r)
        for (int c = 0; c < side; ++c) at(padded, r + 1, c + 1) = img(r, c);

    std::vector<std::uint8_t> dilated(padded.size(), 0);
    for (int r = 0; r < w; ++r) {
        for (int c = 0; c < w; ++c) {
            at(dilated, r, c) = get(padded, r, c) | get(padded, r - 1, c) | get(padded, r + 1, c) |
                                get(padded, r, c - 1) | get(padded, r, c + 1);
        }
    }
    std::vector<std::uint8_t> eroded(padded.size(), 0);
    for (int r = 0; r < w; ++r) {
        for (int c = 0; c < w; ++c) {
            at(eroded, r, c) = get(dilated, r, c) & get(dilated, r - 1, c) & get(dilated, r + 1, c) &
                               get(dilated, r, c - 1) & get(dilated, r, c + 1);
        }
    }
    BinaryImage out(side);
    for (int r = 0; r < side; ++r)
        for (int c = 0; c < side; ++c) out(r, c) = at(eroded, r + 1, c + 1);
    return out;
}

double closedness(const BinaryImage& img) {
    const std::size_t blob = img.count();
    if (blob == 0) throw std::invalid_argument("closedness: empty image");
    return static_cast<double>(blob) / static_cast<double>(morphological_closure(img).count());
}

double symmetry(const BinaryImage& img) {
    const int side = img.side();
    int r0 = side, r1 = -1, c0 = side, c1 = -1;
    for (int r = 0; r < side; ++r) {
        for (int c = 0; c < side; ++c) {
            if (img(r, c)) {
                r0 = std::min(r0, r);
                r1 = std::max(r1, r);
                c0 = std::min(c0, c);
                c1 = std::max(c1, c);
            }
        }
    }
    if (r1 < 0) throw std::invalid_argument("symmetry: empty image");
    std::size_t blob = 0, both = 0;
    for (int r = r0; r <= r1; ++r) {
        for (int c = c0; c <= c1; ++c) {
            if (!img(r, c)) continue;
            ++blob;
            both += img(r, c0 + c1 - c);
        }
    }
    return static_cast<double>(both) / static_cast<double>(blob);
}

// ---------------------------------------------------------------------------
// Generator

BinaryImage generate_blob(int side, std::mt19937_64& rng) {
    if (side < 8) throw std::invalid_argument("generate_blob: side must be at least 8");
    const double s = side;
    for (;;) {
        // Horizontal centre on the frame's vertical axis, so left-right
        // symmetry of the blob coincides with the mirror pooling reflection.
        const double cx = 0.5 * s;
        const double cy = uniform(rng, 0.25 * s, 0.75 * s);
        const double ax = uniform(rng, 0.15 * s, 0.40 * s);
        const double ay = uniform(rng, 0.15 * s, 0.40 * s);
        const double theta = uniform(rng, 0.0, std::numbers::pi);

        // Radial distortion: 2-4 distinct low harmonics, total amplitude <= 25%.
        const int harmonics = uniform_int(rng, 2, 4);
        int freqs[4] = {2, 3, 4, 5};
        for (int h = 0; h < harmonics; ++h) std::swap(freqs[h], freqs[uniform_int(rng, h, 3)]);
        double weight[4], phase[4], total = 0.0;
        for (int h = 0; h < harmonics; ++h) {
            weight[h] = uniform01(rng);
            phase[h] = uniform(rng, 0.0, 2.0 * std::numbers::pi);
            total += weight[h];
        }
        const double amplitude = uniform(rng, 0.0, 0.25);
        for (int h = 0; h < harmonics; ++h) weight[h] *= total > 0.0 ? amplitude / total : 0.0;

        const double hole_rate = uniform(rng, 0.0, 0.35);

        BinaryImage blob(side);
        const double ct = std::cos(theta), st = std::sin(theta);
        for (int r = 0; r < side; ++r) {
            for (int c = 0; c < side; ++c) {
                const double dx = c + 0.5 - cx, dy = r + 0.5 - cy;
                const double u = ct * dx + st * dy, v = -st * dx + ct * dy;
                const double dist = std::hypot(u, v);
                const double phi = std::atan2(v, u);
                const double ellipse =
                    ax * ay / std::hypot(ay * std::cos(phi), ax * std::sin(phi));
                double warp = 1.0;
                for (int h = 0; h < harmonics; ++h) warp += weight[h] * std::cos(freqs[h] * phi + phase[h]);
                blob(r, c) = dist <= ellipse * warp ? 1 : 0;
            }
        }

        // Holes only in pixels whose four neighbours are all inside the blob,
        // decided against the un-holed shape.
        BinaryImage holed = blob;
        for (int r = 1; r + 1 < side; ++r) {
            for (int c = 1; c + 1 < side; ++c) {
                const bool interior = blob(r, c) && blob(r - 1, c) && blob(r + 1, c) &&
                                      blob(r, c - 1) && blob(r, c + 1);
                const double draw = uniform01(rng);
                if (interior && draw < hole_rate) holed(r, c) = 0;
            }
        }
        if (holed.count() >= 4) return holed;
    }
}

// ---------------------------------------------------------------------------
// Labels and datasets

std::string to_string(ScoreLabel label) {
    switch (label) {
        case ScoreLabel::low: return "low";
        case ScoreLabel::high: return "high";
        case ScoreLabel::excluded: return "excluded";
    }
    return "?";
}

std::string to_string(Split split) { return split == Split::train ? "train" : "test"; }
std::string to_string(Task task) { return task == Task::closedness ? "closedness" : "symmetry"; }

ScoreLabel score_label_from_string(const std::string& s) {
    if (s == "low") return ScoreLabel::low;
    if (s == "high") return ScoreLabel::high;
    if (s == "excluded") return ScoreLabel::excluded;
    throw std::invalid_argument("unknown label '" + s + "'");
}

Split split_from_string(const std::string& s) {
    if (s == "train") return Split::train;
    if (s == "test") return Split::test;
    throw std::invalid_argument("unknown split '" + s + "'");
}

Task task_from_string(const std::string& s) {
    if (s == "closedness") return Task::closedness;
    if (s == "symmetry") return Task::symmetry;
    throw std::invalid_argument("unknown task '" + s + "'");
}

std::vector<ScoreLabel> label_by_score(const std::vector<double>& scores) {
    const std::size_t n = scores.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    const std::size_t tail = (2 * n) / 5;  // floor(0.4 n)
    std::vector<ScoreLabel> labels(n, ScoreLabel::excluded);
    for (std::size_t t = 0; t < tail; ++t) {
        labels[order[t]] = ScoreLabel::low;
        labels[order[n - 1 - t]] = ScoreLabel::high;
    }
    return labels;
}

std::uint64_t image_seed(std::uint64_t master, std::uint64_t id) {
    return splitmix64(splitmix64(master) ^ (id * 0xd1b54a32d192ed03ULL));
}

namespace {

void append_pool(LabeledDataset& ds, std::size_t count, int side, std::uint64_t seed, Split split) {
    const std::size_t first = ds.size();
    std::vector<double> closed(count), sym(count);
    for (std::size_t k = 0; k < count; ++k) {
        std::mt19937_64 rng(image_seed(seed, first + k));
        BinaryImage img = generate_blob(side, rng);
        closed[k] = closedness(img);
        sym[k] = symmetry(img);
        ds.images.push_back(std::move(img));
    }
    const auto cl = label_by_score(closed);
    const auto sl = label_by_score(sym);
    ds.closedness.insert(ds.closedness.end(), closed.begin(), closed.end());
    ds.symmetry.insert(ds.symmetry.end(), sym.begin(), sym.end());
    ds.closed_label.insert(ds.closed_label.end(), cl.begin(), cl.end());
    ds.sym_label.insert(ds.sym_label.end(), sl.begin(), sl.end());
    ds.split.insert(ds.split.end(), count, split);
}

}  // namespace

LabeledDataset build_dataset(std::size_t count, int side, std::uint64_t seed) {
    if (count < 10) throw std::invalid_argument("build_dataset: count must be at least 10");
    LabeledDataset ds;
    append_pool(ds, count, side, seed, Split::train);
    return ds;
}

LabeledDataset build_split_dataset(std::size_t train_count, std::size_t test_count, int side,
                                   std::uint64_t seed) {
    if (train_count < 10 || test_count < 10) {
        throw std::invalid_argument("build_split_dataset: each pool needs at least 10 images");
    }
    LabeledDataset ds;
    append_pool(ds, train_count, side, seed, Split::train);
    append_pool(ds, test_count, side, seed, Split::test);
    return ds;
}

// ---------------------------------------------------------------------------
// I/O

namespace {

std::string image_name(std::size_t id) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%06zu.pbm", id);
    return buf;
}

std::string format_score(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

constexpr const char* kManifestHeader = "id,closedness,symmetry,closed_label,sym_label,split";

}  // namespace

void write_dataset(const LabeledDataset& ds, const fs::path& dir) {
    fs::create_directories(dir / "images");
    for (std::size_t id = 0; id < ds.size(); ++id) {
        write_pbm(dir / "images" / image_name(id), ds.images[id]);
    }
    const fs::path manifest = dir / "manifest.csv";
    const fs::path tmp = dir / "manifest.csv.tmp";
    {
        std::ofstream out(tmp);
        if (!out) throw DatasetError("cannot write " + tmp.string());
        out << kManifestHeader << '\n';
        for (std::size_t id = 0; id < ds.size(); ++id) {
            out << id << ',' << format_score(ds.closedness[id]) << ',' << format_score(ds.symmetry[id])
                << ',' << to_string(ds.closed_label[id]) << ',' << to_string(ds.sym_label[id]) << ','
                << to_string(ds.split[id]) << '\n';
        }
        if (!out) throw DatasetError("write failed for " + tmp.string());
    }
    fs::rename(tmp, manifest);
}

LabeledDataset read_dataset(const fs::path& dir) {
    std::ifstream in(dir / "manifest.csv");
    if (!in) throw DatasetError("missing manifest.csv in " + dir.string());
    std::string line;
    if (!std::getline(in, line) || line != kManifestHeader) {
        throw DatasetError("manifest.csv: unexpected header");
    }
    LabeledDataset ds;
    std::size_t row = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto cells = split_csv(line);
        if (cells.size() != 6) throw DatasetError("manifest.csv: row " + std::to_string(row) + " needs 6 columns");
        try {
            if (std::stoull(cells[0]) != row) throw DatasetError("");
            ds.closedness.push_back(std::stod(cells[1]));
            ds.symmetry.push_back(std::stod(cells[2]));
            ds.closed_label.push_back(score_label_from_string(cells[3]));
            ds.sym_label.push_back(score_label_from_string(cells[4]));
            ds.split.push_back(split_from_string(cells[5]));
        } catch (const std::exception&) {
            throw DatasetError("manifest.csv: malformed row " + std::to_string(row));
        }
        const fs::path img = dir / "images" / image_name(row);
        if (!fs::exists(img)) throw DatasetError("dataset integrity: missing image " + img.string());
        try {
            ds.images.push_back(read_pbm(img));
        } catch (const PbmError& e) {
            throw DatasetError(std::string("dataset integrity: ") + e.what());
        }
        ++row;
    }
    std::size_t files = 0;
    for (const auto& entry : fs::directory_iterator(dir / "images")) {
        if (entry.path().extension() == ".pbm") ++files;
    }
    if (files != row) {
        throw DatasetError("dataset integrity: manifest lists " + std::to_string(row) + " images but " +
                           std::to_string(files) + " .pbm files exist");
    }
    return ds;
}

}  // namespace poolrank
