#include "prospectr/image.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

#include "prospectr/errors.hpp"
#include "prospectr/preprocess.hpp"  // quantile_linear

namespace prospectr {

namespace {

void put_u32_be(std::vector<uint8_t>& out, uint32_t v) {
    out.push_back(static_cast<uint8_t>((v >> 24) & 0xFF));
    out.push_back(static_cast<uint8_t>((v >> 16) & 0xFF));
    out.push_back(static_cast<uint8_t>((v >> 8) & 0xFF));
    out.push_back(static_cast<uint8_t>(v & 0xFF));
}

void put_chunk(std::vector<uint8_t>& out, const char type[4], const std::vector<uint8_t>& data) {
    put_u32_be(out, static_cast<uint32_t>(data.size()));
    const size_t start = out.size();
    out.insert(out.end(), type, type + 4);
    out.insert(out.end(), data.begin(), data.end());
    const uint32_t crc = static_cast<uint32_t>(
        crc32(0L, out.data() + start, static_cast<uInt>(out.size() - start)));
    put_u32_be(out, crc);
}

}  // namespace

void write_png(const std::string& path, const Image8& img) {
    if (img.width <= 0 || img.height <= 0 ||
        static_cast<int64_t>(img.rgb.size()) != img.width * img.height * 3)
        throw ShapeError("write_png: bad image buffer");

    std::vector<uint8_t> raw;  // filter byte 0 + row data
    raw.reserve(static_cast<size_t>(img.height * (img.width * 3 + 1)));
    for (int64_t y = 0; y < img.height; ++y) {
        raw.push_back(0);
        const uint8_t* row = img.rgb.data() + y * img.width * 3;
        raw.insert(raw.end(), row, row + img.width * 3);
    }
    uLongf comp_cap = compressBound(static_cast<uLong>(raw.size()));
    std::vector<uint8_t> comp(comp_cap);
    if (compress2(comp.data(), &comp_cap, raw.data(), static_cast<uLong>(raw.size()), 6) != Z_OK)
        throw DataError("png: zlib compression failed");
    comp.resize(comp_cap);

    std::vector<uint8_t> out = {0x89, 'P', 'N', 'G', 0x0D, 0x0A, 0x1A, 0x0A};
    std::vector<uint8_t> ihdr;
    put_u32_be(ihdr, static_cast<uint32_t>(img.width));
    put_u32_be(ihdr, static_cast<uint32_t>(img.height));
    ihdr.push_back(8);  // bit depth
    ihdr.push_back(2);  // truecolor
    ihdr.push_back(0);
    ihdr.push_back(0);
    ihdr.push_back(0);
    put_chunk(out, "IHDR", ihdr);
    put_chunk(out, "IDAT", comp);
    put_chunk(out, "IEND", {});

    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot open for writing: " + path);
    os.write(reinterpret_cast<const char*>(out.data()),
             static_cast<std::streamsize>(out.size()));
    if (!os) throw DataError("write failed: " + path);
}

MapStyle map_style_from_name(const std::string& name) {
    if (name == "heat_over_gray") return MapStyle::HeatOverGray;
    if (name == "signed_green") return MapStyle::SignedGreen;
    if (name == "quantile5") return MapStyle::Quantile5;
    throw ConfigError("unknown map style: " + name);
}

namespace {

constexpr uint8_t kInvalidGray = 200;

// five discrete colors, cold to hot
const uint8_t kQuantileColors[5][3] = {
    {13, 71, 161}, {41, 182, 246}, {255, 235, 59}, {255, 152, 0}, {183, 28, 28}};

}  // namespace

Image8 render_raster(const std::vector<float>& values, int64_t rows, int64_t cols,
                     MapStyle style, const std::vector<float>* underlay,
                     const std::vector<uint8_t>* valid) {
    if (static_cast<int64_t>(values.size()) != rows * cols)
        throw ShapeError("render_raster: size mismatch");
    auto is_valid = [&](int64_t i) {
        if (valid && !(*valid)[static_cast<size_t>(i)]) return false;
        return std::isfinite(values[static_cast<size_t>(i)]) != 0;
    };

    float lo = std::numeric_limits<float>::infinity();
    float hi = -std::numeric_limits<float>::infinity();
    float amax = 0.0f;
    std::vector<double> finite;
    for (int64_t i = 0; i < rows * cols; ++i) {
        if (!is_valid(i)) continue;
        const float v = values[static_cast<size_t>(i)];
        lo = std::min(lo, v);
        hi = std::max(hi, v);
        amax = std::max(amax, std::fabs(v));
        finite.push_back(static_cast<double>(v));
    }
    if (finite.empty()) throw DataError("render_raster: no finite values");
    const float span = hi > lo ? hi - lo : 1.0f;

    float ulo = 0.0f, uhi = 1.0f;
    if (underlay) {
        ulo = std::numeric_limits<float>::infinity();
        uhi = -std::numeric_limits<float>::infinity();
        for (int64_t i = 0; i < rows * cols; ++i) {
            if (!is_valid(i)) continue;
            ulo = std::min(ulo, (*underlay)[static_cast<size_t>(i)]);
            uhi = std::max(uhi, (*underlay)[static_cast<size_t>(i)]);
        }
        if (!(uhi > ulo)) uhi = ulo + 1.0f;
    }

    double q[4] = {0, 0, 0, 0};
    if (style == MapStyle::Quantile5)
        for (int k = 0; k < 4; ++k) q[k] = quantile_linear(finite, 0.2 * (k + 1));

    Image8 img;
    img.width = cols;
    img.height = rows;
    img.rgb.assign(static_cast<size_t>(rows * cols * 3), kInvalidGray);

    for (int64_t i = 0; i < rows * cols; ++i) {
        if (!is_valid(i)) continue;
        const float v = values[static_cast<size_t>(i)];
        uint8_t r = 0, g = 0, b = 0;
        switch (style) {
            case MapStyle::HeatOverGray: {
                const float t = (v - lo) / span;  // 0 red .. 1 yellow
                float dim = 1.0f;
                if (underlay) {
                    const float s = ((*underlay)[static_cast<size_t>(i)] - ulo) / (uhi - ulo);
                    dim = 0.4f + 0.6f * (1.0f - s);  // high std -> darker
                }
                r = static_cast<uint8_t>(std::lround(255.0f * dim));
                g = static_cast<uint8_t>(std::lround(255.0f * t * dim));
                b = 0;
                break;
            }
            case MapStyle::SignedGreen: {
                const float t = amax > 0 ? v / amax : 0.0f;
                if (t >= 0) {
                    g = static_cast<uint8_t>(std::lround(255.0f * t));
                } else {
                    r = static_cast<uint8_t>(std::lround(255.0f * -t));
                    b = r;
                }
                break;
            }
            case MapStyle::Quantile5: {
                int bin = 0;
                for (int k = 0; k < 4; ++k)
                    if (static_cast<double>(v) > q[k]) bin = k + 1;
                r = kQuantileColors[bin][0];
                g = kQuantileColors[bin][1];
                b = kQuantileColors[bin][2];
                break;
            }
        }
        img.rgb[static_cast<size_t>(i * 3)] = r;
        img.rgb[static_cast<size_t>(i * 3 + 1)] = g;
        img.rgb[static_cast<size_t>(i * 3 + 2)] = b;
    }
    return img;
}

Image8 reconstruction_grid(const std::vector<float>& targets,
                           const std::vector<float>& recons,
                           const std::vector<std::vector<int64_t>>& masked_patches,
                           int64_t n, int64_t m, int64_t w, int64_t patch,
                           int64_t max_rows) {
    const int64_t rows_n = std::min(n, max_rows);
    const int64_t gap = 2;
    const int64_t cell = w;
    const int64_t grid_side = w / patch;
    Image8 img;
    img.width = 4 * cell + 5 * gap;
    img.height = rows_n * cell + (rows_n + 1) * gap;
    img.rgb.assign(static_cast<size_t>(img.width * img.height * 3), 255);

    for (int64_t e = 0; e < rows_n; ++e) {
        const int64_t band = e % m;
        const float* tgt = targets.data() + (e * m + band) * w * w;
        const float* rec = recons.data() + (e * m + band) * w * w;
        float lo = tgt[0], hi = tgt[0];
        for (int64_t i = 1; i < w * w; ++i) {
            lo = std::min(lo, tgt[i]);
            hi = std::max(hi, tgt[i]);
        }
        const float span = hi > lo ? hi - lo : 1.0f;
        auto shade = [&](float v) {
            const float t = std::clamp((v - lo) / span, 0.0f, 1.0f);
            return static_cast<uint8_t>(std::lround(255.0f * t));
        };
        auto masked_at = [&](int64_t r, int64_t c) {
            const int64_t p = (r / patch) * grid_side + (c / patch);
            const auto& mp = masked_patches[static_cast<size_t>(e)];
            return std::find(mp.begin(), mp.end(), p) != mp.end();
        };
        const int64_t y0 = gap + e * (cell + gap);
        for (int64_t r = 0; r < w; ++r)
            for (int64_t c = 0; c < w; ++c) {
                const uint8_t t = shade(tgt[r * w + c]);
                const bool masked = masked_at(r, c);
                // col 0: input
                img.set(gap + c, y0 + r, t, t, t);
                // col 1: the mask itself
                const uint8_t mk = masked ? 0 : 255;
                img.set(2 * gap + cell + c, y0 + r, mk, mk, mk);
                // col 2: masked input
                const uint8_t mi = masked ? 128 : t;
                img.set(3 * gap + 2 * cell + c, y0 + r, mi, mi, masked ? 160 : mi);
                // col 3: reconstruction
                const uint8_t rc = shade(rec[r * w + c]);
                img.set(4 * gap + 3 * cell + c, y0 + r, rc, rc, rc);
            }
    }
    return img;
}

}  // namespace prospectr
