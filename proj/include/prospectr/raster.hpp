#pragma once

// Multi-band georeferenced rasters, label rasters, window sampling, and the
// .mbr container (8-byte magic, JSON header, little-endian float32 planes,
// CRC32 per plane). Rasters are immutable after load; reads are thread-safe.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "prospectr/errors.hpp"

namespace prospectr {

struct GeoTransform {
    double origin_x = 0.0;
    double origin_y = 0.0;
    double pixel_w = 1.0;
    double pixel_h = -1.0;  // negative for north-up

    // pixel (row,col) -> map coordinate of the pixel's upper-left corner
    void pixel_to_map(int64_t row, int64_t col, double& x, double& y) const {
        x = origin_x + static_cast<double>(col) * pixel_w;
        y = origin_y + static_cast<double>(row) * pixel_h;
    }

    // map coordinate -> containing pixel (floor semantics)
    void map_to_pixel(double x, double y, int64_t& row, int64_t& col) const;

    bool valid() const { return pixel_w != 0.0 && pixel_h != 0.0; }
};

enum class Label : uint8_t { Absent = 0, Present = 1, Unknown = 255 };

struct MultiBandRaster {
    int64_t bands = 0;
    int64_t rows = 0;
    int64_t cols = 0;
    std::vector<float> data;         // band-major planes, row-major within a plane
    std::vector<uint8_t> nodata;     // rows*cols, 1 = nodata
    std::vector<std::string> band_names;
    GeoTransform transform;

    MultiBandRaster() = default;
    MultiBandRaster(int64_t m, int64_t r, int64_t c);

    int64_t plane() const { return rows * cols; }

    float at(int64_t band, int64_t row, int64_t col) const {
        return data[static_cast<size_t>(band * plane() + row * cols + col)];
    }
    float& at(int64_t band, int64_t row, int64_t col) {
        return data[static_cast<size_t>(band * plane() + row * cols + col)];
    }
    bool is_nodata(int64_t row, int64_t col) const {
        return nodata[static_cast<size_t>(row * cols + col)] != 0;
    }

    const float* plane_data(int64_t band) const { return data.data() + band * plane(); }
    float* plane_data(int64_t band) { return data.data() + band * plane(); }

    void validate() const;  // throws on broken invariants
};

struct LabelRaster {
    int64_t rows = 0;
    int64_t cols = 0;
    std::vector<Label> labels;  // default Unknown

    LabelRaster() = default;
    LabelRaster(int64_t r, int64_t c)
        : rows(r), cols(c), labels(static_cast<size_t>(r * c), Label::Unknown) {}

    Label at(int64_t row, int64_t col) const {
        return labels[static_cast<size_t>(row * cols + col)];
    }
    void set(int64_t row, int64_t col, Label v) {
        labels[static_cast<size_t>(row * cols + col)] = v;
    }

    std::vector<int64_t> pixels_with(Label v) const;
};

struct Sample {
    std::vector<float> window;  // bands*w*w, band-major
    int64_t bands = 0;
    int64_t w = 0;
    int64_t center_row = 0;
    int64_t center_col = 0;
    Label label = Label::Unknown;

    float at(int64_t band, int64_t i, int64_t j) const {
        return window[static_cast<size_t>((band * w + i) * w + j)];
    }
};

struct DepositRecord {
    std::string id;
    double x = 0.0;
    double y = 0.0;
    std::string deposit_type;
};

// Window of size w centered on (row,col); out-of-raster pixels are filled by
// reflection about the edge pixel. For even w the center sits at index w/2.
Sample window_at(const MultiBandRaster& raster, int64_t row, int64_t col, int64_t w,
                 const LabelRaster* labels = nullptr);

// Batch of windows as a flat [n, m, w, w] buffer (row-major), for model input.
std::vector<float> extract_windows(const MultiBandRaster& raster,
                                   const std::vector<int64_t>& center_pixels, int64_t w);

struct RasterizeResult {
    LabelRaster labels;
    int64_t skipped = 0;    // records outside the raster extent
    int64_t deduped = 0;    // extra records landing on an already-present pixel
    int64_t on_nodata = 0;  // kept present, but worth a warning
};

RasterizeResult rasterize_records(const std::vector<DepositRecord>& records,
                                  const GeoTransform& transform, int64_t rows, int64_t cols,
                                  const std::vector<uint8_t>* nodata = nullptr);

// .mbr container
void save_raster(const MultiBandRaster& raster, const std::string& path);
MultiBandRaster load_raster(const std::string& path);

// LabelRaster as a 1-band .mbr with values {1=Present, 0=Absent, 255=Unknown}.
void save_labels(const LabelRaster& labels, const GeoTransform& transform,
                 const std::string& path);
LabelRaster load_labels(const std::string& path);

// Deposit records CSV: header `id,x,y,deposit_type`.
void save_records_csv(const std::vector<DepositRecord>& records, const std::string& path);
std::vector<DepositRecord> load_records_csv(const std::string& path);

}  // namespace prospectr
