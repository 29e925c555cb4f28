#include "doctest.h"
#include "prospectr/raster.hpp"
#include "prospectr/rng.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

using namespace prospectr;

namespace {

std::string tmp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

// reference reflect rule applied by hand: mirror about the edge pixel
int64_t reflect_ref(int64_t i, int64_t n) {
    while (i < 0 || i >= n) {
        if (i < 0) i = -i;
        if (i >= n) i = 2 * (n - 1) - i;
    }
    return i;
}

}  // namespace

TEST_SUITE("raster") {

TEST_CASE("window on a constant field") {
    MultiBandRaster r(1, 5, 5);
    std::fill(r.data.begin(), r.data.end(), 7.0f);
    Sample s = window_at(r, 2, 2, 3);
    CHECK(s.window.size() == 9);
    for (float v : s.window) CHECK(v == 7.0f);
}

TEST_CASE("corner window reflects the ramp raster") {
    MultiBandRaster r(1, 5, 5);
    for (int64_t i = 0; i < 5; ++i)
        for (int64_t j = 0; j < 5; ++j) r.at(0, i, j) = static_cast<float>(i + j);
    Sample s = window_at(r, 0, 0, 3);
    // window rows cover raster rows -1..1; derived by applying the reflect rule
    for (int64_t i = 0; i < 3; ++i)
        for (int64_t j = 0; j < 3; ++j) {
            const int64_t rr = reflect_ref(i - 1, 5);
            const int64_t cc = reflect_ref(j - 1, 5);
            CHECK(s.at(0, i, j) == static_cast<float>(rr + cc));
        }
    // spot values: corner (-1,-1) reflects to (1,1) = 2
    CHECK(s.at(0, 0, 0) == 2.0f);
    CHECK(s.at(0, 1, 1) == 0.0f);
}

TEST_CASE("full-raster window is the raster") {
    Rng rng(31);
    MultiBandRaster r(2, 5, 5);
    for (auto& v : r.data) v = static_cast<float>(rng.normal());
    Sample s = window_at(r, 2, 2, 5);
    CHECK(s.window == r.data);
}

TEST_CASE("window size larger than raster errors") {
    MultiBandRaster r(1, 4, 6);
    CHECK_THROWS_AS(window_at(r, 0, 0, 5), ShapeError);
}

TEST_CASE("center recovery for all in-bounds pixels") {
    Rng rng(32);
    MultiBandRaster r(1, 8, 9);
    for (auto& v : r.data) v = static_cast<float>(rng.normal());
    const int64_t w = 3;
    for (int64_t i = 0; i < 8; ++i)
        for (int64_t j = 0; j < 9; ++j) {
            Sample s = window_at(r, i, j, w);
            CHECK(s.at(0, (w - 1) / 2, (w - 1) / 2) == r.at(0, i, j));
        }
}

TEST_CASE("even window keeps center at w/2") {
    MultiBandRaster r(1, 8, 8);
    for (int64_t i = 0; i < 8; ++i)
        for (int64_t j = 0; j < 8; ++j) r.at(0, i, j) = static_cast<float>(10 * i + j);
    Sample s = window_at(r, 4, 4, 4);
    // start = center - (w-1)/2 = 4 - 1 = 3; center lands at index 1... by the
    // documented convention start offset is (w-1)/2 rounded down
    CHECK(s.at(0, 1, 1) == 44.0f);
}

TEST_CASE("rasterize: origin record hits pixel 0,0") {
    GeoTransform t;  // origin (0,0), pixel 1 x -1
    std::vector<DepositRecord> recs = {{"a", 0.0, 0.0, "mvt"}};
    auto res = rasterize_records(recs, t, 4, 4);
    CHECK(res.labels.at(0, 0) == Label::Present);
    CHECK(res.skipped == 0);
    int present = 0;
    for (auto l : res.labels.labels)
        if (l == Label::Present) ++present;
    CHECK(present == 1);
}

TEST_CASE("rasterize: two records in one pixel dedup") {
    GeoTransform t;
    std::vector<DepositRecord> recs = {{"a", 0.2, -0.3, "mvt"}, {"b", 0.7, -0.6, "mvt"}};
    auto res = rasterize_records(recs, t, 4, 4);
    CHECK(res.deduped == 1);
    int present = 0;
    for (auto l : res.labels.labels)
        if (l == Label::Present) ++present;
    CHECK(present == 1);
}

TEST_CASE("rasterize: record beyond the right edge is skipped") {
    GeoTransform t;
    // cols = 4 covers x in [0,4); x = 4.5 inverts to col 4 -> outside
    std::vector<DepositRecord> recs = {{"a", 4.5, -1.0, "mvt"}};
    auto res = rasterize_records(recs, t, 4, 4);
    CHECK(res.skipped == 1);
    for (auto l : res.labels.labels) CHECK(l == Label::Unknown);
}

TEST_CASE("rasterize is idempotent") {
    GeoTransform t;
    Rng rng(33);
    std::vector<DepositRecord> recs;
    for (int i = 0; i < 20; ++i)
        recs.push_back({"r" + std::to_string(i), rng.uniform(0, 6), rng.uniform(-6, 0), "x"});
    auto r1 = rasterize_records(recs, t, 6, 6);
    auto r2 = rasterize_records(recs, t, 6, 6);
    CHECK(r1.labels.labels == r2.labels.labels);
}

TEST_CASE("pixel<->map round trip is exact on integer pixels") {
    GeoTransform t;
    t.origin_x = 1234.5;
    t.origin_y = -987.25;
    t.pixel_w = 2.5;
    t.pixel_h = -2.5;
    for (int64_t r = 0; r < 40; r += 7)
        for (int64_t c = 0; c < 40; c += 7) {
            double x, y;
            t.pixel_to_map(r, c, x, y);
            int64_t rr, cc;
            t.map_to_pixel(x, y, rr, cc);
            CHECK(rr == r);
            CHECK(cc == c);
        }
}

TEST_CASE("mbr round trip is bit-exact including NaN payloads") {
    Rng rng(34);
    MultiBandRaster r(3, 4, 5);
    for (auto& v : r.data) v = static_cast<float>(rng.normal());
    r.band_names = {"gravity", "magnetic", "lithology"};
    r.transform.origin_x = 10.5;
    r.transform.origin_y = 99.125;
    r.transform.pixel_w = 0.5;
    r.transform.pixel_h = -0.5;
    // masked pixel with a NaN payload that must survive the round trip
    r.nodata[7] = 1;
    uint32_t nan_payload = 0x7FC12345u;
    float weird_nan;
    std::memcpy(&weird_nan, &nan_payload, 4);
    r.at(1, 1, 2) = weird_nan;

    const std::string path = tmp_path("roundtrip.mbr");
    save_raster(r, path);
    MultiBandRaster r2 = load_raster(path);

    CHECK(r2.bands == r.bands);
    CHECK(r2.rows == r.rows);
    CHECK(r2.cols == r.cols);
    CHECK(r2.band_names == r.band_names);
    CHECK(r2.nodata == r.nodata);
    CHECK(r2.transform.origin_x == r.transform.origin_x);
    CHECK(r2.transform.origin_y == r.transform.origin_y);
    CHECK(r2.transform.pixel_w == r.transform.pixel_w);
    CHECK(r2.transform.pixel_h == r.transform.pixel_h);
    CHECK(std::memcmp(r2.data.data(), r.data.data(), r.data.size() * 4) == 0);
    std::remove(path.c_str());
}

TEST_CASE("corrupt checksum is detected") {
    MultiBandRaster r(1, 3, 3);
    for (size_t i = 0; i < r.data.size(); ++i) r.data[i] = static_cast<float>(i);
    const std::string path = tmp_path("corrupt.mbr");
    save_raster(r, path);
    {
        std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
        f.seekg(0, std::ios::end);
        const auto size = f.tellg();
        f.seekp(static_cast<std::streamoff>(size) - 24);  // inside the mask plane
        char junk = 0x5A;
        f.write(&junk, 1);
    }
    CHECK_THROWS_AS(load_raster(path), DataError);
    std::remove(path.c_str());
}

TEST_CASE("bad magic and truncation are detected") {
    const std::string path = tmp_path("junk.mbr");
    {
        std::ofstream f(path, std::ios::binary);
        f << "NOTMAGIC and then some";
    }
    CHECK_THROWS_AS(load_raster(path), DataError);

    MultiBandRaster r(2, 3, 3);
    save_raster(r, path);
    // keep only the header: magic + len + json, cut all planes
    {
        std::ifstream in(path, std::ios::binary);
        std::vector<char> all((std::istreambuf_iterator<char>(in)),
                              std::istreambuf_iterator<char>());
        in.close();
        const uint32_t hlen = static_cast<uint32_t>(static_cast<unsigned char>(all[8])) |
                              (static_cast<uint32_t>(static_cast<unsigned char>(all[9])) << 8) |
                              (static_cast<uint32_t>(static_cast<unsigned char>(all[10])) << 16) |
                              (static_cast<uint32_t>(static_cast<unsigned char>(all[11])) << 24);
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        out.write(all.data(), 12 + static_cast<std::streamsize>(hlen));
    }
    CHECK_THROWS_AS(load_raster(path), DataError);
    std::remove(path.c_str());
}

TEST_CASE("label raster round trip with all three values") {
    LabelRaster l(3, 4);
    l.set(0, 0, Label::Present);
    l.set(2, 3, Label::Absent);
    const std::string path = tmp_path("labels.mbr");
    save_labels(l, GeoTransform{}, path);
    LabelRaster l2 = load_labels(path);
    CHECK(l2.labels == l.labels);
    std::remove(path.c_str());
}

TEST_CASE("records CSV round trip") {
    std::vector<DepositRecord> recs = {{"dep_0", 12.5, -33.25, "mvt"},
                                       {"dep_1", 0.0, 0.0, "cd"}};
    const std::string path = tmp_path("records.csv");
    save_records_csv(recs, path);
    auto back = load_records_csv(path);
    REQUIRE(back.size() == 2);
    CHECK(back[0].id == "dep_0");
    CHECK(back[0].x == 12.5);
    CHECK(back[0].y == -33.25);
    CHECK(back[1].deposit_type == "cd");
    std::remove(path.c_str());
}

TEST_CASE("duplicate band names are rejected") {
    MultiBandRaster r(2, 2, 2);
    r.band_names = {"same", "same"};
    CHECK_THROWS_AS(save_raster(r, tmp_path("dup.mbr")), DataError);
}

}  // TEST_SUITE
