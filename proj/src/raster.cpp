#include "msp/raster.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include <boost/multiprecision/cpp_int.hpp>
#include <zlib.h>

#include "msp/detail/bytes.hpp"
#include "msp/error.hpp"

namespace msp::raster {

namespace {

// Continuous cell coordinate; floor() of it is the cell index before clamping.
// Multiplying before dividing keeps coordinates at n and n/2 exactly related.
inline double cell_coord(double x, std::size_t n, std::size_t extent) {
    return x * static_cast<double>(n) / static_cast<double>(extent - 1);
}

inline std::size_t clamp_cell(double u, std::size_t n) {
    const double f = std::floor(u);
    if (f <= 0.0) return 0;
    const auto i = static_cast<std::size_t>(f);
    return std::min(i, n - 1);
}

using Rational = boost::multiprecision::cpp_rational;

std::size_t clamp_cell(const Rational& u, std::size_t n) {
    if (u <= 0) return 0;
    const boost::multiprecision::cpp_int f = numerator(u) / denominator(u);
    return f >= n ? n - 1 : static_cast<std::size_t>(f);
}

std::size_t exact_cell(double x, std::size_t n, std::size_t extent) {
    const double u = cell_coord(x, n, extent);
    if (std::abs(u - std::round(u)) > 1e-9 * (1.0 + u)) return clamp_cell(u, n);
    return clamp_cell(Rational(x) * Rational(static_cast<long long>(n), static_cast<long long>(extent - 1)), n);
}

// Exact walk on the segment between the given domain points; cell
// coordinates are x * n / (extent - 1) as rationals.
void walk_exact(double x0, double y0, double x1, double y1, std::size_t width, std::size_t height, ArcImage& img) {
    const Rational su(static_cast<long long>(img.n), static_cast<long long>(width - 1));
    const Rational sv(static_cast<long long>(img.n), static_cast<long long>(height - 1));
    const Rational u0 = Rational(x0) * su, v0 = Rational(y0) * sv, u1 = Rational(x1) * su, v1 = Rational(y1) * sv;
    std::vector<Rational> ts{Rational(0), Rational(1)};
    auto crossings = [&](const Rational& a0, const Rational& a1) {
        if (a0 == a1) return;
        const Rational& lo = a0 < a1 ? a0 : a1;
        const Rational& hi = a0 < a1 ? a1 : a0;
        for (auto k = numerator(lo) / denominator(lo) + 1; k < hi; ++k) ts.push_back((Rational(k) - a0) / (a1 - a0));
    };
    crossings(u0, u1);
    crossings(v0, v1);
    std::sort(ts.begin(), ts.end());
    ts.erase(std::unique(ts.begin(), ts.end()), ts.end());
    auto mark = [&](const Rational& t) {
        const Rational u = u0 + t * (u1 - u0), v = v0 + t * (v1 - v0);
        img.bits[clamp_cell(v, img.n) * img.n + clamp_cell(u, img.n)] = 1;
    };
    mark(ts.front());
    mark(ts.back());
    for (std::size_t i = 0; i + 1 < ts.size(); ++i) mark((ts[i] + ts[i + 1]) / 2);
}

// A segment marks the cells of its endpoints and every cell it runs through
// for a positive length. Between consecutive grid-line crossings the segment
// stays in one cell, so the midpoint of each such interval names it. Touching
// a cell only at a corner point does not mark it. Falls back to the exact walk
// when a computed coordinate is too close to a grid line to trust its floor.
void walk_segment(double x0, double y0, double x1, double y1, std::size_t width, std::size_t height, ArcImage& img) {
    const double u0 = cell_coord(x0, img.n, width), v0 = cell_coord(y0, img.n, height);
    const double u1 = cell_coord(x1, img.n, width), v1 = cell_coord(y1, img.n, height);
    constexpr double kMargin = 1e-9;
    auto near_line = [](double c) { return std::abs(c - std::round(c)) <= kMargin * (1.0 + std::abs(c)); };
    if (near_line(u0) || near_line(v0) || near_line(u1) || near_line(v1)) {
        return walk_exact(x0, y0, x1, y1, width, height, img);
    }

    std::vector<double> ts{0.0, 1.0};
    auto crossings = [&](double a0, double a1) {
        if (a0 == a1) return;
        const double lo = std::min(a0, a1), hi = std::max(a0, a1);
        for (double k = std::floor(lo) + 1.0; k < hi; k += 1.0) ts.push_back((k - a0) / (a1 - a0));
    };
    crossings(u0, u1);
    crossings(v0, v1);
    std::sort(ts.begin(), ts.end());

    std::vector<std::pair<double, double>> cells{{u0, v0}, {u1, v1}};
    cells.reserve(ts.size() + 1);
    for (std::size_t i = 0; i + 1 < ts.size(); ++i) {
        if (!(ts[i + 1] > ts[i])) return walk_exact(x0, y0, x1, y1, width, height, img);
        const double t = 0.5 * (ts[i] + ts[i + 1]);
        const double u = u0 + t * (u1 - u0), v = v0 + t * (v1 - v0);
        if ((u0 != u1 && near_line(u)) || (v0 != v1 && near_line(v))) {
            return walk_exact(x0, y0, x1, y1, width, height, img);
        }
        cells.emplace_back(u, v);
    }
    for (const auto& [u, v] : cells) img.bits[clamp_cell(v, img.n) * img.n + clamp_cell(u, img.n)] = 1;
}

std::string meta_comment(const field::Meta& meta) {
    std::string s;
    for (const auto& [k, v] : meta) {
        if (!s.empty()) s += ' ';
        s += k + "=" + v;
    }
    std::replace(s.begin(), s.end(), '\n', ' ');
    return s;
}

field::Meta parse_comment(const std::string& c) {
    field::Meta meta;
    std::istringstream is(c);
    std::string tok;
    while (is >> tok) {
        const auto eq = tok.find('=');
        if (eq != std::string::npos) meta[tok.substr(0, eq)] = tok.substr(eq + 1);
    }
    return meta;
}

// Netpbm header: magic, then whitespace/comment separated integers, then a
// single whitespace byte before the payload.
struct Header {
    std::size_t width = 0, height = 0, maxval = 1;
    std::string comment;
    std::size_t payload_offset = 0;
};

Header parse_header(const std::string& bytes, const char* magic, int fields) {
    if (bytes.size() < 2 || bytes.compare(0, 2, magic) != 0) {
        throw FormatError(std::string("bad magic: expected '") + magic + "'", 0);
    }
    Header h;
    std::size_t pos = 2;
    std::size_t vals[3] = {0, 0, 0};
    for (int f = 0; f < fields; ++f) {
        while (pos < bytes.size()) {
            const char c = bytes[pos];
            if (c == '#') {
                const auto eol = bytes.find('\n', pos);
                const std::string text = bytes.substr(pos + 1, (eol == std::string::npos ? bytes.size() : eol) - pos - 1);
                if (!h.comment.empty()) h.comment += ' ';
                h.comment += text;
                pos = eol == std::string::npos ? bytes.size() : eol + 1;
            } else if (std::isspace(static_cast<unsigned char>(c))) {
                ++pos;
            } else {
                break;
            }
        }
        const std::size_t start = pos;
        std::size_t v = 0;
        while (pos < bytes.size() && std::isdigit(static_cast<unsigned char>(bytes[pos]))) {
            v = v * 10 + static_cast<std::size_t>(bytes[pos] - '0');
            if (v > (1u << 24)) throw FormatError("header value too large", static_cast<std::int64_t>(start));
            ++pos;
        }
        if (pos == start) throw FormatError("malformed header: expected integer", static_cast<std::int64_t>(pos));
        vals[f] = v;
    }
    if (pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[pos]))) {
        throw FormatError("malformed header: expected whitespace before payload", static_cast<std::int64_t>(pos));
    }
    h.width = vals[0];
    h.height = vals[1];
    if (fields == 3) h.maxval = vals[2];
    h.payload_offset = pos + 1;
    return h;
}

}  // namespace

std::size_t ArcImage::count() const { return static_cast<std::size_t>(std::accumulate(bits.begin(), bits.end(), 0u)); }

std::pair<std::size_t, std::size_t> cell_of(double x, double y, std::size_t width, std::size_t height, std::size_t n) {
    return {exact_cell(x, n, width), exact_cell(y, n, height)};
}

ArcImage rasterize(std::span<const morse::SeparatrixArc> arcs, std::size_t width, std::size_t height, std::size_t n) {
    if (n < 1) throw ParameterError("raster resolution must be >= 1");
    if (width < 2 || height < 2) throw ParameterError("raster domain must be at least 2x2");
    ArcImage img;
    img.n = n;
    img.bits.assign(n * n, 0);
    const double xmax = static_cast<double>(width - 1), ymax = static_cast<double>(height - 1);
    for (std::size_t a = 0; a < arcs.size(); ++a) {
        const auto& pts = arcs[a].points;
        for (std::size_t i = 0; i < pts.size(); ++i) {
            const auto& p = pts[i];
            if (!(p.x >= 0.0 && p.x <= xmax && p.y >= 0.0 && p.y <= ymax)) {
                std::ostringstream os;
                os << "arc " << a << " point " << i << " (" << p.x << ", " << p.y << ") outside domain [0, " << xmax
                   << "] x [0, " << ymax << "]";
                throw InputError(os.str());
            }
        }
        if (pts.size() == 1) {
            const auto [c, r] = cell_of(pts[0].x, pts[0].y, width, height, n);
            img.bits[r * n + c] = 1;
        }
        for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
            walk_segment(pts[i].x, pts[i].y, pts[i + 1].x, pts[i + 1].y, width, height, img);
        }
    }
    return img;
}

ArcImage max_pool2(const ArcImage& img) {
    if (img.n % 2 != 0) throw ParameterError("max_pool2 needs an even resolution");
    ArcImage out;
    out.n = img.n / 2;
    out.meta = img.meta;
    out.bits.assign(out.n * out.n, 0);
    for (std::size_t r = 0; r < img.n; ++r)
        for (std::size_t c = 0; c < img.n; ++c)
            if (img(c, r)) out.bits[(r / 2) * out.n + c / 2] = 1;
    return out;
}

namespace {

void png_chunk(std::string& out, const char* type, const std::string& data) {
    auto be32 = [&](std::uint32_t v) {
        for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<char>((v >> s) & 0xff));
    };
    be32(static_cast<std::uint32_t>(data.size()));
    const std::string body = std::string(type, 4) + data;
    out += body;
    be32(static_cast<std::uint32_t>(crc32(0L, reinterpret_cast<const Bytef*>(body.data()), static_cast<uInt>(body.size()))));
}

}  // namespace

std::string encode_png(const ArcImage& img) {
    if (img.bits.size() != img.n * img.n || img.n == 0) throw InputError("image storage does not match its size");
    std::string raw;
    raw.reserve(img.n * (img.n + 1));
    for (std::size_t r = 0; r < img.n; ++r) {
        raw.push_back('\0');  // filter: none
        for (std::size_t c = 0; c < img.n; ++c) raw.push_back(img(c, r) ? '\0' : '\xff');
    }
    uLongf len = compressBound(static_cast<uLong>(raw.size()));
    std::string z(len, '\0');
    if (compress2(reinterpret_cast<Bytef*>(z.data()), &len, reinterpret_cast<const Bytef*>(raw.data()),
                  static_cast<uLong>(raw.size()), 9) != Z_OK) {
        throw InputError("png compression failed");
    }
    z.resize(len);

    std::string ihdr;
    for (int k = 0; k < 2; ++k)
        for (int s = 24; s >= 0; s -= 8) ihdr.push_back(static_cast<char>((img.n >> s) & 0xff));
    ihdr += std::string("\x08\x00\x00\x00\x00", 5);  // 8-bit gray, deflate, no filter set, no interlace
    std::string out("\x89PNG\r\n\x1a\n", 8);
    png_chunk(out, "IHDR", ihdr);
    png_chunk(out, "IDAT", z);
    png_chunk(out, "IEND", {});
    return out;
}

std::string encode_p4(const ArcImage& img) {
    std::string out = "P4\n";
    if (!img.meta.empty()) out += "# " + meta_comment(img.meta) + "\n";
    out += std::to_string(img.n) + " " + std::to_string(img.n) + "\n";
    const std::size_t row_bytes = (img.n + 7) / 8;
    for (std::size_t r = 0; r < img.n; ++r) {
        std::string row(row_bytes, '\0');
        for (std::size_t c = 0; c < img.n; ++c) {
            if (img(c, r)) row[c / 8] = static_cast<char>(static_cast<unsigned char>(row[c / 8]) | (0x80u >> (c % 8)));
        }
        out += row;
    }
    return out;
}

ArcImage decode_p4(const std::string& bytes) {
    const Header h = parse_header(bytes, "P4", 2);
    if (h.width != h.height || h.width == 0) {
        throw FormatError("arc images must be square and non-empty, got " + std::to_string(h.width) + "x" +
                          std::to_string(h.height));
    }
    const std::size_t row_bytes = (h.width + 7) / 8;
    const std::size_t need = row_bytes * h.height;
    if (bytes.size() - h.payload_offset != need) {
        throw FormatError("payload has " + std::to_string(bytes.size() - h.payload_offset) + " bytes, expected " +
                              std::to_string(need),
                          static_cast<std::int64_t>(h.payload_offset));
    }
    ArcImage img;
    img.n = h.width;
    img.meta = parse_comment(h.comment);
    img.bits.assign(img.n * img.n, 0);
    for (std::size_t r = 0; r < img.n; ++r) {
        for (std::size_t c = 0; c < img.n; ++c) {
            const auto byte = static_cast<unsigned char>(bytes[h.payload_offset + r * row_bytes + c / 8]);
            img.bits[r * img.n + c] = (byte >> (7 - c % 8)) & 1u;
        }
    }
    return img;
}

void store_image(const ArcImage& img, const std::filesystem::path& path) { detail::write_text(path, encode_p4(img)); }

ArcImage load_image(const std::filesystem::path& path) { return decode_p4(detail::read_text(path)); }

std::string encode_p5(const GrayImage& img, const std::string& comment) {
    std::string out = "P5\n";
    if (!comment.empty()) out += "# " + comment + "\n";
    out += std::to_string(img.n) + " " + std::to_string(img.n) + "\n255\n";
    for (float v : img.values) {
        const float c = std::clamp(v, 0.0f, 1.0f);
        out += static_cast<char>(static_cast<unsigned char>(std::lround(c * 255.0f)));
    }
    return out;
}

GrayImage decode_p5(const std::string& bytes) {
    const Header h = parse_header(bytes, "P5", 3);
    if (h.maxval != 255) throw FormatError("P5 maxval must be 255, got " + std::to_string(h.maxval));
    if (h.width != h.height || h.width == 0) throw FormatError("gray images must be square and non-empty");
    const std::size_t need = h.width * h.height;
    if (bytes.size() - h.payload_offset != need) {
        throw FormatError("payload has " + std::to_string(bytes.size() - h.payload_offset) + " bytes, expected " +
                              std::to_string(need),
                          static_cast<std::int64_t>(h.payload_offset));
    }
    GrayImage img;
    img.n = h.width;
    img.values.resize(need);
    for (std::size_t i = 0; i < need; ++i) {
        img.values[i] = static_cast<float>(static_cast<unsigned char>(bytes[h.payload_offset + i])) / 255.0f;
    }
    return img;
}

void store_gray(const GrayImage& img, const std::filesystem::path& path, const std::string& comment) {
    detail::write_text(path, encode_p5(img, comment));
}

GrayImage load_gray(const std::filesystem::path& path) { return decode_p5(detail::read_text(path)); }

}  // namespace msp::raster
