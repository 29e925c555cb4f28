#pragma once

// Deterministic PNG output: fixed colormaps, fixed zlib level, byte-stable
// results for identical inputs.

#include <cstdint>
#include <string>
#include <vector>

namespace prospectr {

struct Image8 {
    int64_t width = 0;
    int64_t height = 0;
    std::vector<uint8_t> rgb;  // row-major, 3 bytes per pixel

    void set(int64_t x, int64_t y, uint8_t r, uint8_t g, uint8_t b) {
        const size_t i = static_cast<size_t>((y * width + x) * 3);
        rgb[i] = r;
        rgb[i + 1] = g;
        rgb[i + 2] = b;
    }
};

void write_png(const std::string& path, const Image8& img);

enum class MapStyle { HeatOverGray, SignedGreen, Quantile5 };

MapStyle map_style_from_name(const std::string& name);  // throws ConfigError

// values: rows*cols; underlay (HeatOverGray only): std raster dimming the
// heat; valid: optional mask, invalid pixels render light gray. Min/max of
// the valid values map to the colormap endpoints.
Image8 render_raster(const std::vector<float>& values, int64_t rows, int64_t cols,
                     MapStyle style, const std::vector<float>* underlay = nullptr,
                     const std::vector<uint8_t>* valid = nullptr);

// Pretraining visual: one row per example, columns are input band, mask,
// masked input, reconstruction. windows/recons are [n, m, w, w]; the shown
// band cycles through m.
Image8 reconstruction_grid(const std::vector<float>& targets,
                           const std::vector<float>& recons,
                           const std::vector<std::vector<int64_t>>& masked_patches,
                           int64_t n, int64_t m, int64_t w, int64_t patch,
                           int64_t max_rows = 8);

}  // namespace prospectr
