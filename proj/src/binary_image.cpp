#include "poolrank/binary_image.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <stdexcept>

namespace poolrank {

BinaryImage::BinaryImage(int side) : side_(side) {
    if (side < 1) throw std::invalid_argument("image side must be positive");
    pixels_.assign(static_cast<std::size_t>(side) * static_cast<std::size_t>(side), 0);
}

BinaryImage::BinaryImage(int side, std::vector<std::uint8_t> pixels) : BinaryImage(side) {
    if (pixels.size() != pixels_.size()) {
        throw std::invalid_argument("image pixel count does not match side*side");
    }
    for (auto& p : pixels) {
        if (p > 1) throw std::invalid_argument("image pixels must be 0 or 1");
    }
    pixels_ = std::move(pixels);
}

std::size_t BinaryImage::count() const {
    return static_cast<std::size_t>(std::count(pixels_.begin(), pixels_.end(), std::uint8_t{1}));
}

BinaryImage BinaryImage::flipped_lr() const {
    BinaryImage out(side_);
    for (int r = 0; r < side_; ++r)
        for (int c = 0; c < side_; ++c) out(r, side_ - 1 - c) = (*this)(r, c);
    return out;
}

namespace {

// Next whitespace-delimited token, skipping '#' comments.
bool next_token(std::istream& in, std::string& tok) {
    tok.clear();
    int ch;
    while ((ch = in.get()) != EOF) {
        if (ch == '#') {
            while ((ch = in.get()) != EOF && ch != '\n') {
            }
            continue;
        }
        if (!std::isspace(ch)) break;
    }
    if (ch == EOF) return false;
    tok.push_back(static_cast<char>(ch));
    while ((ch = in.peek()) != EOF && !std::isspace(ch) && ch != '#') {
        tok.push_back(static_cast<char>(in.get()));
    }
    return true;
}

int parse_dim(std::istream& in, const char* what) {
    std::string tok;
    if (!next_token(in, tok)) throw PbmError(std::string("pbm: missing ") + what);
    try {
        std::size_t used = 0;
        int v = std::stoi(tok, &used);
        if (used != tok.size() || v < 1) throw PbmError("");
        return v;
    } catch (const std::exception&) {
        throw PbmError(std::string("pbm: bad ") + what + " '" + tok + "'");
    }
}

}  // namespace

BinaryImage read_pbm(std::istream& in) {
    std::string tok;
    if (!next_token(in, tok) || tok != "P1") throw PbmError("pbm: missing P1 magic");
    const int width = parse_dim(in, "width");
    const int height = parse_dim(in, "height");
    if (width != height) throw PbmError("pbm: only square images are supported");

    std::vector<std::uint8_t> px;
    px.reserve(static_cast<std::size_t>(width) * height);
    int ch;
    while (px.size() < px.capacity() && (ch = in.get()) != EOF) {
        if (ch == '#') {
            while ((ch = in.get()) != EOF && ch != '\n') {
            }
        } else if (ch == '0' || ch == '1') {
            px.push_back(static_cast<std::uint8_t>(ch - '0'));
        } else if (!std::isspace(ch)) {
            throw PbmError(std::string("pbm: unexpected character '") + static_cast<char>(ch) + "'");
        }
    }
    if (px.size() != static_cast<std::size_t>(width) * height) {
        throw PbmError("pbm: truncated pixel data");
    }
    if (next_token(in, tok)) throw PbmError("pbm: trailing data after pixels");
    return BinaryImage(width, std::move(px));
}

BinaryImage read_pbm(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw PbmError("pbm: cannot open " + path.string());
    try {
        return read_pbm(in);
    } catch (const PbmError& e) {
        throw PbmError(path.string() + ": " + e.what());
    }
}

void write_pbm(std::ostream& out, const BinaryImage& img) {
    out << "P1\n" << img.side() << ' ' << img.side() << '\n';
    for (int r = 0; r < img.side(); ++r) {
        for (int c = 0; c < img.side(); ++c) {
            if (c) out << ' ';
            out << static_cast<int>(img(r, c));
        }
        out << '\n';
    }
}

void write_pbm(const std::filesystem::path& path, const BinaryImage& img) {
    std::ofstream out(path);
    if (!out) throw PbmError("pbm: cannot write " + path.string());
    write_pbm(out, img);
    if (!out) throw PbmError("pbm: write failed for " + path.string());
}

}  // namespace poolrank
