#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

namespace poolrank {

/// Square binary raster, row-major, 1 = foreground.
class BinaryImage {
public:
    BinaryImage() = default;
    explicit BinaryImage(int side);
    BinaryImage(int side, std::vector<std::uint8_t> pixels);

    int side() const noexcept { return side_; }
    std::size_t size() const noexcept { return pixels_.size(); }

    std::uint8_t operator()(int row, int col) const { return pixels_[index(row, col)]; }
    std::uint8_t& operator()(int row, int col) { return pixels_[index(row, col)]; }

    const std::vector<std::uint8_t>& pixels() const noexcept { return pixels_; }
    std::size_t count() const;

    BinaryImage flipped_lr() const;

    friend bool operator==(const BinaryImage&, const BinaryImage&) = default;

private:
    std::size_t index(int row, int col) const {
        return static_cast<std::size_t>(row) * static_cast<std::size_t>(side_) +
               static_cast<std::size_t>(col);
    }

    int side_ = 0;
    std::vector<std::uint8_t> pixels_;
};

class PbmError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Plain PBM (P1). The reader tolerates arbitrary whitespace, comments and
/// packed digits; the writer emits "P1", "<w> <h>", then one row per line.
BinaryImage read_pbm(std::istream& in);
BinaryImage read_pbm(const std::filesystem::path& path);
void write_pbm(std::ostream& out, const BinaryImage& img);
void write_pbm(const std::filesystem::path& path, const BinaryImage& img);

}  // namespace poolrank
