#pragma once

// Binary arc images: the n x n descriptor of a Morse complex.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "msp/field.hpp"
#include "msp/morse.hpp"

namespace msp::raster {

struct ArcImage {
    std::size_t n = 0;
    std::vector<std::uint8_t> bits;  ///< n*n values in {0, 1}, row-major; row 0 is y = 0
    field::Meta meta;                ///< e.g. source, threshold

    std::uint8_t operator()(std::size_t col, std::size_t row) const { return bits[row * n + col]; }
    std::size_t count() const;
    friend bool operator==(const ArcImage&, const ArcImage&) = default;
};

/// Marks every cell an arc passes through. The domain
/// [0, width-1] x [0, height-1] is split into n x n half-open cells
/// [i*s, (i+1)*s), the last row and column closed, so each point belongs to
/// exactly one cell. A cell is marked when it holds an arc vertex or a piece
/// of a segment with positive length; grazing a single corner point does not
/// count. Segments are walked exactly, grid line by grid line. Throws
/// InputError naming the arc when a point is outside the domain.
ArcImage rasterize(std::span<const morse::SeparatrixArc> arcs, std::size_t width, std::size_t height, std::size_t n);

/// Cell of a domain point under the half-open rule (exposed for oracles).
std::pair<std::size_t, std::size_t> cell_of(double x, double y, std::size_t width, std::size_t height, std::size_t n);

/// 2x max-pooling; n must be even.
ArcImage max_pool2(const ArcImage& img);

// P4 (portable bitmap) with one comment line carrying the meta as key=value.
std::string encode_p4(const ArcImage& img);
ArcImage decode_p4(const std::string& bytes);
void store_image(const ArcImage& img, const std::filesystem::path& path);
ArcImage load_image(const std::filesystem::path& path);

/// 8-bit grayscale PNG for display: arc cells black on white.
std::string encode_png(const ArcImage& img);

/// Gray reconstructions in [0, 1], stored as P5 with maxval 255.
struct GrayImage {
    std::size_t n = 0;
    std::vector<float> values;
};
std::string encode_p5(const GrayImage& img, const std::string& comment = {});
GrayImage decode_p5(const std::string& bytes);
void store_gray(const GrayImage& img, const std::filesystem::path& path, const std::string& comment = {});
GrayImage load_gray(const std::filesystem::path& path);

}  // namespace msp::raster
