#pragma once

// Scalar fields on rectilinear grids, the synthetic families used to build
// training collections, and the MSF1 on-disk format.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace msp::field {

using Meta = std::map<std::string, std::string>;

/// Row-major grid of samples; value(x, y) = values[y * width + x].
class ScalarField2D {
public:
    ScalarField2D() = default;
    /// Throws ParameterError unless width, height >= 2 and values are finite
    /// with size width * height.
    ScalarField2D(std::size_t width, std::size_t height, std::vector<double> values, Meta meta = {});

    std::size_t width() const noexcept { return width_; }
    std::size_t height() const noexcept { return height_; }
    std::size_t size() const noexcept { return values_.size(); }

    double operator()(std::size_t x, std::size_t y) const { return values_[y * width_ + x]; }
    const std::vector<double>& values() const noexcept { return values_; }

    Meta& meta() noexcept { return meta_; }
    const Meta& meta() const noexcept { return meta_; }

    friend bool operator==(const ScalarField2D&, const ScalarField2D&) = default;

private:
    std::size_t width_ = 0;
    std::size_t height_ = 0;
    std::vector<double> values_;
    Meta meta_;
};

enum class Family { blobs, sine, rotsine };

std::string to_string(Family f);
Family family_from_string(const std::string& s);

struct Blob {
    double cx = 0;
    double cy = 0;
    double sigma = 0;
    friend bool operator==(const Blob&, const Blob&) = default;
};

/// Parameters of one synthetic function. Only the members relevant to
/// `family` are meaningful; validate() checks those and ignores the rest.
struct SynthParams {
    Family family = Family::blobs;
    std::vector<Blob> blobs;
    int alpha = 0;
    int beta = 0;
    int gamma = 0;  ///< signed; |gamma| in [10, 80]
    int delta = 0;  ///< signed; |delta| in [10, 80]
    std::uint64_t seed = 0;

    /// Throws ParameterError on any range violation.
    void validate() const;

    static SynthParams make_blobs(std::vector<Blob> blobs, std::uint64_t seed = 0);
    static SynthParams make_sine(int alpha, int beta, std::uint64_t seed = 0);
    static SynthParams make_rotsine(int alpha, int beta, int gamma, int delta, std::uint64_t seed = 0);

    friend bool operator==(const SynthParams&, const SynthParams&) = default;
};

namespace limits {
inline constexpr int kMinBlobs = 2;  // sampler lower bound
inline constexpr int kMaxBlobs = 512;
inline constexpr double kMinSigma = 4.0;
inline constexpr double kMaxSigma = 32.0;
inline constexpr int kMinAlpha = 5, kMaxAlpha = 20;
inline constexpr int kMinBeta = 10, kMaxBeta = 40;
inline constexpr int kMinRot = 10, kMaxRot = 80;
}  // namespace limits

/// Draws parameters for `family`. Blob centers are uniform over
/// [0, width-1] x [0, height-1].
SynthParams sample_params(Family family, std::uint64_t seed, std::size_t width, std::size_t height);

/// Draws the family uniformly from the three, then its parameters.
SynthParams sample_params(std::uint64_t seed, std::size_t width, std::size_t height);

ScalarField2D generate_blobs(const SynthParams& params, std::size_t width, std::size_t height);
ScalarField2D generate_sine(const SynthParams& params, std::size_t width, std::size_t height, bool rotated);

/// Dispatches on params.family.
ScalarField2D generate(const SynthParams& params, std::size_t width, std::size_t height);

/// output[i] = input[i] + u_i with u_i ~ Uniform[0, magnitude].
ScalarField2D add_uniform_noise(const ScalarField2D& field, double magnitude, std::uint64_t seed, int variant = 1);

/// Rounds every sample to the nearest float32, so the field survives an MSF1
/// round trip unchanged.
ScalarField2D quantize_f32(ScalarField2D field);

/// Axis-aligned sub-grid starting at (x0, y0).
ScalarField2D crop(const ScalarField2D& field, std::size_t x0, std::size_t y0, std::size_t w, std::size_t h);

// MSF1: "MSF1", u32 width, u32 height (LE), width*height float32 LE row-major.
std::vector<std::uint8_t> encode_msf1(const ScalarField2D& field);
ScalarField2D decode_msf1(const std::vector<std::uint8_t>& bytes);

void store_field(const ScalarField2D& field, const std::filesystem::path& path);

/// Reads MSF1, or CSV when the file does not start with the MSF1 magic and
/// has a .csv extension.
ScalarField2D load_field(const std::filesystem::path& path);

/// One grid row per line, comma separated decimals.
ScalarField2D parse_csv(const std::string& text);

}  // namespace msp::field
