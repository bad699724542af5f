#include "msp/field.hpp"

#include <charconv>
#include <cmath>
#include <sstream>

#include "msp/detail/bytes.hpp"
#include "msp/error.hpp"
#include "msp/rng.hpp"

namespace msp::field {

namespace {

constexpr char kMagic[4] = {'M', 'S', 'F', '1'};

void require(bool ok, const std::string& msg) {
    if (!ok) throw ParameterError(msg);
}

// Shortest representation that parses back to the same double.
std::string num(double v) {
    char buf[32];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    return {buf, r.ptr};
}

Meta params_meta(const SynthParams& p) {
    Meta m;
    m["family"] = to_string(p.family);
    m["seed"] = std::to_string(p.seed);
    switch (p.family) {
    case Family::blobs:
        m["blob_count"] = std::to_string(p.blobs.size());
        break;
    case Family::rotsine:
        m["gamma"] = std::to_string(p.gamma);
        m["delta"] = std::to_string(p.delta);
        [[fallthrough]];
    case Family::sine:
        m["alpha"] = std::to_string(p.alpha);
        m["beta"] = std::to_string(p.beta);
        break;
    }
    return m;
}

int sample_rotation(Rng& rng) {
    const int mag = static_cast<int>(rng.uniform_int(limits::kMinRot, limits::kMaxRot));
    return rng.coin() ? -mag : mag;
}

}  // namespace

ScalarField2D::ScalarField2D(std::size_t width, std::size_t height, std::vector<double> values, Meta meta)
    : width_(width), height_(height), values_(std::move(values)), meta_(std::move(meta)) {
    require(width_ >= 2 && height_ >= 2, "field must be at least 2x2, got " + std::to_string(width_) + "x" +
                                             std::to_string(height_));
    require(values_.size() == width_ * height_, "field has " + std::to_string(values_.size()) +
                                                    " values, expected " + std::to_string(width_ * height_));
    for (std::size_t i = 0; i < values_.size(); ++i) {
        require(std::isfinite(values_[i]), "non-finite field value at index " + std::to_string(i));
    }
}

std::string to_string(Family f) {
    switch (f) {
    case Family::blobs: return "blobs";
    case Family::sine: return "sine";
    case Family::rotsine: return "rotsine";
    }
    return "?";
}

Family family_from_string(const std::string& s) {
    if (s == "blobs") return Family::blobs;
    if (s == "sine") return Family::sine;
    if (s == "rotsine") return Family::rotsine;
    throw ParameterError("unknown family '" + s + "' (expected blobs, sine or rotsine)");
}

void SynthParams::validate() const {
    switch (family) {
    case Family::blobs:
        // A single blob is accepted for hand-built fields; the sampler draws 2..512.
        require(!blobs.empty() && blobs.size() <= static_cast<std::size_t>(limits::kMaxBlobs),
                "blob_count must be in [1, 512], got " + std::to_string(blobs.size()));
        for (const auto& b : blobs) {
            require(b.sigma >= limits::kMinSigma && b.sigma <= limits::kMaxSigma,
                    "blob sigma must be in [4, 32], got " + num(b.sigma));
            require(std::isfinite(b.cx) && std::isfinite(b.cy), "blob center must be finite");
        }
        break;
    case Family::rotsine:
        require(std::abs(gamma) >= limits::kMinRot && std::abs(gamma) <= limits::kMaxRot,
                "|gamma| must be in [10, 80], got " + std::to_string(gamma));
        require(std::abs(delta) >= limits::kMinRot && std::abs(delta) <= limits::kMaxRot,
                "|delta| must be in [10, 80], got " + std::to_string(delta));
        [[fallthrough]];
    case Family::sine:
        require(alpha >= limits::kMinAlpha && alpha <= limits::kMaxAlpha,
                "alpha must be in [5, 20], got " + std::to_string(alpha));
        require(beta >= limits::kMinBeta && beta <= limits::kMaxBeta,
                "beta must be in [10, 40], got " + std::to_string(beta));
        break;
    }
}

SynthParams SynthParams::make_blobs(std::vector<Blob> blobs, std::uint64_t seed) {
    SynthParams p;
    p.family = Family::blobs;
    p.blobs = std::move(blobs);
    p.seed = seed;
    p.validate();
    return p;
}

SynthParams SynthParams::make_sine(int alpha, int beta, std::uint64_t seed) {
    SynthParams p;
    p.family = Family::sine;
    p.alpha = alpha;
    p.beta = beta;
    p.seed = seed;
    p.validate();
    return p;
}

SynthParams SynthParams::make_rotsine(int alpha, int beta, int gamma, int delta, std::uint64_t seed) {
    SynthParams p;
    p.family = Family::rotsine;
    p.alpha = alpha;
    p.beta = beta;
    p.gamma = gamma;
    p.delta = delta;
    p.seed = seed;
    p.validate();
    return p;
}

SynthParams sample_params(Family family, std::uint64_t seed, std::size_t width, std::size_t height) {
    Rng rng(seed);
    SynthParams p;
    p.family = family;
    p.seed = seed;
    switch (family) {
    case Family::blobs: {
        const auto count = rng.uniform_int(limits::kMinBlobs, limits::kMaxBlobs);
        p.blobs.reserve(static_cast<std::size_t>(count));
        for (std::int64_t i = 0; i < count; ++i) {
            Blob b;
            b.cx = rng.uniform(0.0, static_cast<double>(width - 1));
            b.cy = rng.uniform(0.0, static_cast<double>(height - 1));
            b.sigma = rng.uniform(limits::kMinSigma, limits::kMaxSigma);
            p.blobs.push_back(b);
        }
        break;
    }
    case Family::sine:
        p.alpha = static_cast<int>(rng.uniform_int(limits::kMinAlpha, limits::kMaxAlpha));
        p.beta = static_cast<int>(rng.uniform_int(limits::kMinBeta, limits::kMaxBeta));
        break;
    case Family::rotsine:
        p.alpha = static_cast<int>(rng.uniform_int(limits::kMinAlpha, limits::kMaxAlpha));
        p.beta = static_cast<int>(rng.uniform_int(limits::kMinBeta, limits::kMaxBeta));
        p.gamma = sample_rotation(rng);
        p.delta = sample_rotation(rng);
        break;
    }
    p.validate();
    return p;
}

SynthParams sample_params(std::uint64_t seed, std::size_t width, std::size_t height) {
    Rng rng(mix64(seed ^ 0xfa11'7e5e'ed00'0001ULL));
    const auto family = static_cast<Family>(rng.uniform_int(0, 2));
    return sample_params(family, seed, width, height);
}

ScalarField2D generate_blobs(const SynthParams& params, std::size_t width, std::size_t height) {
    require(params.family == Family::blobs, "generate_blobs needs family=blobs");
    params.validate();
    require(width >= 2 && height >= 2, "field must be at least 2x2");

    // exp(-(dx^2+dy^2)/2s^2) = exp(-dx^2/2s^2) * exp(-dy^2/2s^2); tabulate both factors per blob.
    std::vector<double> values(width * height, 0.0);
    std::vector<double> gx(width), gy(height);
    for (const auto& b : params.blobs) {
        const double k = -1.0 / (2.0 * b.sigma * b.sigma);
        for (std::size_t x = 0; x < width; ++x) {
            const double dx = static_cast<double>(x) - b.cx;
            gx[x] = std::exp(k * dx * dx);
        }
        for (std::size_t y = 0; y < height; ++y) {
            const double dy = static_cast<double>(y) - b.cy;
            gy[y] = std::exp(k * dy * dy);
        }
        for (std::size_t y = 0; y < height; ++y) {
            double* row = values.data() + y * width;
            const double fy = gy[y];
            for (std::size_t x = 0; x < width; ++x) row[x] += gx[x] * fy;
        }
    }
    return {width, height, std::move(values), params_meta(params)};
}

ScalarField2D generate_sine(const SynthParams& params, std::size_t width, std::size_t height, bool rotated) {
    require(params.family == (rotated ? Family::rotsine : Family::sine),
            std::string("generate_sine(rotated=") + (rotated ? "true" : "false") + ") got family " +
                to_string(params.family));
    params.validate();
    require(width >= 2 && height >= 2, "field must be at least 2x2");

    std::vector<double> values(width * height);
    const double a = params.alpha, b = params.beta;
    for (std::size_t y = 0; y < height; ++y) {
        const double yd = static_cast<double>(y);
        for (std::size_t x = 0; x < width; ++x) {
            const double xd = static_cast<double>(x);
            double v;
            if (rotated) {
                v = std::sin(xd / a + yd / params.gamma) + std::sin(yd / b + xd / params.delta);
            } else {
                v = std::sin(xd / a) + std::sin(yd / b);
            }
            values[y * width + x] = v;
        }
    }
    return {width, height, std::move(values), params_meta(params)};
}

ScalarField2D generate(const SynthParams& params, std::size_t width, std::size_t height) {
    switch (params.family) {
    case Family::blobs: return generate_blobs(params, width, height);
    case Family::sine: return generate_sine(params, width, height, false);
    case Family::rotsine: return generate_sine(params, width, height, true);
    }
    throw ParameterError("unknown family");
}

ScalarField2D add_uniform_noise(const ScalarField2D& field, double magnitude, std::uint64_t seed, int variant) {
    require(magnitude >= 0.0 && std::isfinite(magnitude), "noise magnitude must be >= 0, got " + num(magnitude));
    std::vector<double> values = field.values();
    if (magnitude > 0.0) {
        Rng rng(seed);
        for (auto& v : values) v += magnitude * rng.uniform01();
    }
    Meta meta = field.meta();
    meta["noise_magnitude"] = num(magnitude);
    meta["noise_seed"] = std::to_string(seed);
    meta["variant"] = std::to_string(variant);
    return {field.width(), field.height(), std::move(values), std::move(meta)};
}

ScalarField2D quantize_f32(ScalarField2D field) {
    std::vector<double> values = field.values();
    for (auto& v : values) v = static_cast<double>(static_cast<float>(v));
    return {field.width(), field.height(), std::move(values), std::move(field.meta())};
}

ScalarField2D crop(const ScalarField2D& field, std::size_t x0, std::size_t y0, std::size_t w, std::size_t h) {
    require(x0 + w <= field.width() && y0 + h <= field.height(),
            "crop window exceeds field bounds");
    std::vector<double> values;
    values.reserve(w * h);
    for (std::size_t y = y0; y < y0 + h; ++y) {
        for (std::size_t x = x0; x < x0 + w; ++x) values.push_back(field(x, y));
    }
    Meta meta = field.meta();
    meta["crop_x"] = std::to_string(x0);
    meta["crop_y"] = std::to_string(y0);
    return {w, h, std::move(values), std::move(meta)};
}

std::vector<std::uint8_t> encode_msf1(const ScalarField2D& field) {
    detail::ByteWriter w;
    w.raw(kMagic, 4);
    w.u32(static_cast<std::uint32_t>(field.width()));
    w.u32(static_cast<std::uint32_t>(field.height()));
    for (double v : field.values()) w.f32(static_cast<float>(v));
    return std::move(w.bytes());
}

ScalarField2D decode_msf1(const std::vector<std::uint8_t>& bytes) {
    detail::ByteReader r(bytes);
    const std::string magic = r.str(4, "magic");
    if (magic != std::string(kMagic, 4)) {
        throw FormatError("bad magic: expected 'MSF1'", 0);
    }
    const std::uint32_t w = r.u32("width");
    const std::uint32_t h = r.u32("height");
    if (w < 2 || h < 2) throw FormatError("grid must be at least 2x2", 4);
    const std::size_t n = static_cast<std::size_t>(w) * h;
    r.need(n * 4, "payload");
    std::vector<double> values(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t at = r.offset();
        const float v = r.f32("payload");
        if (!std::isfinite(v)) throw FormatError("non-finite value", static_cast<std::int64_t>(at));
        values[i] = v;
    }
    if (r.remaining() != 0) {
        throw FormatError("trailing bytes after payload", static_cast<std::int64_t>(r.offset()));
    }
    return {w, h, std::move(values)};
}

void store_field(const ScalarField2D& field, const std::filesystem::path& path) {
    detail::write_file(path, encode_msf1(field));
}

ScalarField2D parse_csv(const std::string& text) {
    std::vector<double> values;
    std::size_t width = 0, height = 0;
    std::size_t pos = 0;
    while (pos < text.size()) {
        std::size_t end = text.find('\n', pos);
        if (end == std::string::npos) end = text.size();
        std::string_view line(text.data() + pos, end - pos);
        const std::size_t line_start = pos;
        pos = end + 1;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (line.empty()) continue;

        std::size_t cols = 0;
        std::size_t c = 0;
        while (true) {
            std::size_t comma = line.find(',', c);
            if (comma == std::string_view::npos) comma = line.size();
            std::string_view cell = line.substr(c, comma - c);
            while (!cell.empty() && cell.front() == ' ') cell.remove_prefix(1);
            while (!cell.empty() && cell.back() == ' ') cell.remove_suffix(1);
            double v = 0;
            const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
            const auto at = static_cast<std::int64_t>(line_start + c);
            if (ec != std::errc() || ptr != cell.data() + cell.size() || cell.empty()) {
                throw FormatError("invalid number '" + std::string(cell) + "'", at);
            }
            if (!std::isfinite(v)) throw FormatError("non-finite value", at);
            values.push_back(v);
            ++cols;
            if (comma == line.size()) break;
            c = comma + 1;
        }
        if (height == 0) {
            width = cols;
        } else if (cols != width) {
            throw FormatError("row " + std::to_string(height) + " has " + std::to_string(cols) +
                                  " columns, expected " + std::to_string(width),
                              static_cast<std::int64_t>(line_start));
        }
        ++height;
    }
    if (width < 2 || height < 2) throw FormatError("CSV grid must be at least 2x2");
    return {width, height, std::move(values)};
}

ScalarField2D load_field(const std::filesystem::path& path) {
    auto bytes = detail::read_file(path);
    const bool has_magic = bytes.size() >= 4 && std::equal(kMagic, kMagic + 4, bytes.begin());
    if (!has_magic && path.extension() == ".csv") {
        auto f = parse_csv(std::string(bytes.begin(), bytes.end()));
        f.meta()["source_path"] = path.string();
        return f;
    }
    auto f = decode_msf1(bytes);
    f.meta()["source_path"] = path.string();
    return f;
}

}  // namespace msp::field
