#include "prospectr/raster.hpp"

#include <zlib.h>

#include <cmath>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace prospectr {

using nlohmann::json;

void GeoTransform::map_to_pixel(double x, double y, int64_t& row, int64_t& col) const {
    if (!valid()) throw ContractError("GeoTransform has zero pixel size");
    col = static_cast<int64_t>(std::floor((x - origin_x) / pixel_w));
    row = static_cast<int64_t>(std::floor((y - origin_y) / pixel_h));
}

MultiBandRaster::MultiBandRaster(int64_t m, int64_t r, int64_t c)
    : bands(m), rows(r), cols(c), data(static_cast<size_t>(m * r * c), 0.0f),
      nodata(static_cast<size_t>(r * c), 0) {
    band_names.reserve(static_cast<size_t>(m));
    for (int64_t i = 0; i < m; ++i) band_names.push_back("band_" + std::to_string(i));
}

void MultiBandRaster::validate() const {
    if (bands < 0 || rows <= 0 || cols <= 0) throw ShapeError("raster has empty extent");
    if (static_cast<int64_t>(data.size()) != bands * rows * cols)
        throw ShapeError("raster data length != bands*rows*cols");
    if (static_cast<int64_t>(nodata.size()) != rows * cols)
        throw ShapeError("raster nodata mask length != rows*cols");
    if (static_cast<int64_t>(band_names.size()) != bands)
        throw ShapeError("raster band name count != bands");
    std::set<std::string> uniq(band_names.begin(), band_names.end());
    if (static_cast<int64_t>(uniq.size()) != bands)
        throw DataError("raster band names are not unique");
    if (!transform.valid()) throw DataError("raster transform has zero pixel size");
}

std::vector<int64_t> LabelRaster::pixels_with(Label v) const {
    std::vector<int64_t> out;
    for (size_t i = 0; i < labels.size(); ++i)
        if (labels[i] == v) out.push_back(static_cast<int64_t>(i));
    return out;
}

namespace {

// mirror about the edge pixel without repeating it: -1 -> 1, n -> n-2
int64_t reflect_index(int64_t i, int64_t n) {
    if (n == 1) return 0;
    const int64_t period = 2 * (n - 1);
    i = ((i % period) + period) % period;
    return i < n ? i : period - i;
}

}  // namespace

Sample window_at(const MultiBandRaster& raster, int64_t row, int64_t col, int64_t w,
                 const LabelRaster* labels) {
    if (w <= 0 || w > std::min(raster.rows, raster.cols))
        throw ShapeError("window size " + std::to_string(w) + " exceeds raster extent");
    if (row < 0 || row >= raster.rows || col < 0 || col >= raster.cols)
        throw ContractError("window center outside raster");

    Sample s;
    s.bands = raster.bands;
    s.w = w;
    s.center_row = row;
    s.center_col = col;
    s.window.resize(static_cast<size_t>(raster.bands * w * w));
    const int64_t start_r = row - (w - 1) / 2;
    const int64_t start_c = col - (w - 1) / 2;
    for (int64_t b = 0; b < raster.bands; ++b) {
        const float* plane = raster.plane_data(b);
        for (int64_t i = 0; i < w; ++i) {
            const int64_t rr = reflect_index(start_r + i, raster.rows);
            for (int64_t j = 0; j < w; ++j) {
                const int64_t cc = reflect_index(start_c + j, raster.cols);
                s.window[static_cast<size_t>((b * w + i) * w + j)] =
                    plane[rr * raster.cols + cc];
            }
        }
    }
    if (labels) {
        if (labels->rows != raster.rows || labels->cols != raster.cols)
            throw ShapeError("label raster shape differs from data raster");
        s.label = labels->at(row, col);
    }
    return s;
}

std::vector<float> extract_windows(const MultiBandRaster& raster,
                                   const std::vector<int64_t>& center_pixels, int64_t w) {
    const int64_t n = static_cast<int64_t>(center_pixels.size());
    std::vector<float> out(static_cast<size_t>(n * raster.bands * w * w));
    const int64_t stride = raster.bands * w * w;
    for (int64_t k = 0; k < n; ++k) {
        const int64_t row = center_pixels[static_cast<size_t>(k)] / raster.cols;
        const int64_t col = center_pixels[static_cast<size_t>(k)] % raster.cols;
        Sample s = window_at(raster, row, col, w);
        std::copy(s.window.begin(), s.window.end(), out.begin() + k * stride);
    }
    return out;
}

RasterizeResult rasterize_records(const std::vector<DepositRecord>& records,
                                  const GeoTransform& transform, int64_t rows, int64_t cols,
                                  const std::vector<uint8_t>* nodata) {
    if (!transform.valid()) throw ContractError("rasterize_records: invalid transform");
    RasterizeResult res;
    res.labels = LabelRaster(rows, cols);
    for (const auto& rec : records) {
        if (!std::isfinite(rec.x) || !std::isfinite(rec.y))
            throw DataError("record " + rec.id + " has non-finite coordinates");
        int64_t r, c;
        transform.map_to_pixel(rec.x, rec.y, r, c);
        if (r < 0 || r >= rows || c < 0 || c >= cols) {
            ++res.skipped;
            continue;
        }
        if (res.labels.at(r, c) == Label::Present) {
            ++res.deduped;
            continue;
        }
        if (nodata && (*nodata)[static_cast<size_t>(r * cols + c)] != 0) ++res.on_nodata;
        res.labels.set(r, c, Label::Present);
    }
    return res;
}

// ---------------------------------------------------------------------------
// .mbr container

namespace {

constexpr char kMagic[8] = {'M', 'B', 'R', 'A', 'S', 'T', 'R', '1'};

void write_u32(std::ostream& os, uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xFF),
                          static_cast<unsigned char>((v >> 8) & 0xFF),
                          static_cast<unsigned char>((v >> 16) & 0xFF),
                          static_cast<unsigned char>((v >> 24) & 0xFF)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t read_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    if (!is) throw DataError("truncated file: expected 4 bytes");
    return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
           (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

uint32_t crc_of(const void* p, size_t n) {
    return static_cast<uint32_t>(
        crc32(0L, static_cast<const Bytef*>(p), static_cast<uInt>(n)));
}

static_assert(sizeof(float) == 4, "float must be 32-bit");

void write_plane(std::ostream& os, const void* p, size_t bytes) {
    os.write(static_cast<const char*>(p), static_cast<std::streamsize>(bytes));
    write_u32(os, crc_of(p, bytes));
}

void read_plane(std::istream& is, void* p, size_t bytes, const char* what) {
    is.read(static_cast<char*>(p), static_cast<std::streamsize>(bytes));
    if (!is) throw DataError(std::string("truncated file while reading ") + what);
    const uint32_t stored = read_u32(is);
    if (stored != crc_of(p, bytes))
        throw DataError(std::string("checksum mismatch in ") + what);
}

}  // namespace

void save_raster(const MultiBandRaster& raster, const std::string& path) {
    raster.validate();
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot open for writing: " + path);

    json header = {{"schema", 1},
                   {"bands", raster.bands},
                   {"rows", raster.rows},
                   {"cols", raster.cols},
                   {"dtype", "float32"},
                   {"band_names", raster.band_names},
                   {"transform",
                    {{"origin_x", raster.transform.origin_x},
                     {"origin_y", raster.transform.origin_y},
                     {"pixel_w", raster.transform.pixel_w},
                     {"pixel_h", raster.transform.pixel_h}}},
                   {"has_mask", true}};
    const std::string hs = header.dump();
    os.write(kMagic, 8);
    write_u32(os, static_cast<uint32_t>(hs.size()));
    os.write(hs.data(), static_cast<std::streamsize>(hs.size()));

    const size_t plane_bytes = static_cast<size_t>(raster.plane()) * sizeof(float);
    for (int64_t b = 0; b < raster.bands; ++b)
        write_plane(os, raster.plane_data(b), plane_bytes);
    write_plane(os, raster.nodata.data(), raster.nodata.size());
    if (!os) throw DataError("write failed: " + path);
}

MultiBandRaster load_raster(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open: " + path);

    char magic[8];
    is.read(magic, 8);
    if (!is || std::memcmp(magic, kMagic, 8) != 0)
        throw DataError("magic-number mismatch: not an .mbr file: " + path);
    const uint32_t hlen = read_u32(is);
    std::string hs(hlen, '\0');
    is.read(hs.data(), hlen);
    if (!is) throw DataError("truncated file: header in " + path);

    json header;
    try {
        header = json::parse(hs);
    } catch (const json::exception& e) {
        throw DataError(std::string("bad .mbr header: ") + e.what());
    }
    if (header.value("dtype", "") != "float32")
        throw DataError("unsupported dtype in " + path);

    MultiBandRaster r(header.at("bands").get<int64_t>(), header.at("rows").get<int64_t>(),
                      header.at("cols").get<int64_t>());
    r.band_names = header.at("band_names").get<std::vector<std::string>>();
    const auto& t = header.at("transform");
    r.transform.origin_x = t.at("origin_x").get<double>();
    r.transform.origin_y = t.at("origin_y").get<double>();
    r.transform.pixel_w = t.at("pixel_w").get<double>();
    r.transform.pixel_h = t.at("pixel_h").get<double>();

    const size_t plane_bytes = static_cast<size_t>(r.plane()) * sizeof(float);
    for (int64_t b = 0; b < r.bands; ++b)
        read_plane(is, r.plane_data(b), plane_bytes, ("band " + std::to_string(b)).c_str());
    read_plane(is, r.nodata.data(), r.nodata.size(), "nodata mask");
    r.validate();
    return r;
}

void save_labels(const LabelRaster& labels, const GeoTransform& transform,
                 const std::string& path) {
    MultiBandRaster r(1, labels.rows, labels.cols);
    r.band_names = {"labels"};
    r.transform = transform;
    for (size_t i = 0; i < labels.labels.size(); ++i)
        r.data[i] = static_cast<float>(static_cast<uint8_t>(labels.labels[i]));
    save_raster(r, path);
}

LabelRaster load_labels(const std::string& path) {
    MultiBandRaster r = load_raster(path);
    if (r.bands != 1) throw DataError("label raster must have exactly 1 band: " + path);
    LabelRaster out(r.rows, r.cols);
    for (size_t i = 0; i < out.labels.size(); ++i) {
        const float v = r.data[i];
        if (v == 0.0f)
            out.labels[i] = Label::Absent;
        else if (v == 1.0f)
            out.labels[i] = Label::Present;
        else if (v == 255.0f)
            out.labels[i] = Label::Unknown;
        else
            throw DataError("label raster contains value " + std::to_string(v));
    }
    return out;
}

void save_records_csv(const std::vector<DepositRecord>& records, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw DataError("cannot open for writing: " + path);
    os << "id,x,y,deposit_type\n";
    os.precision(17);
    for (const auto& r : records)
        os << r.id << "," << r.x << "," << r.y << "," << r.deposit_type << "\n";
    if (!os) throw DataError("write failed: " + path);
}

std::vector<DepositRecord> load_records_csv(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw DataError("cannot open: " + path);
    std::string line;
    if (!std::getline(is, line)) throw DataError("empty records CSV: " + path);
    // tolerate trailing \r from other tooling
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != "id,x,y,deposit_type")
        throw DataError("records CSV header must be 'id,x,y,deposit_type', got '" + line + "'");
    std::vector<DepositRecord> out;
    size_t lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::stringstream ss(line);
        DepositRecord r;
        std::string xs, ys;
        if (!std::getline(ss, r.id, ',') || !std::getline(ss, xs, ',') ||
            !std::getline(ss, ys, ',') || !std::getline(ss, r.deposit_type))
            throw DataError("bad CSV row at line " + std::to_string(lineno));
        try {
            r.x = std::stod(xs);
            r.y = std::stod(ys);
        } catch (const std::exception&) {
            throw DataError("bad coordinates at line " + std::to_string(lineno));
        }
        out.push_back(std::move(r));
    }
    return out;
}

}  // namespace prospectr
