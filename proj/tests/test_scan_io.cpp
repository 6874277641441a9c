#include <doctest.h>

#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "qdtune/codec.hpp"
#include "qdtune/error.hpp"
#include "qdtune/scan_io.hpp"

using namespace qdtune;

namespace {

std::filesystem::path scratch(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / "qdtune_test_scan_io";
    std::filesystem::create_directories(dir);
    return dir / name;
}

// 200x200 px at 2 mV covering 125-525 (v1) x 150-550 (v2).
PremeasuredScan stored_scan() {
    auto [g, l] = render_scan(reference_device(), {325, 350}, {400, 400}, 2.0, true, 11);
    return PremeasuredScan{g, l};
}

}  // namespace

TEST_CASE("window past the sandbox edge is blocked") {
    const SimulatedDevice dev{reference_device(), false, 0};
    const Sandbox sb;
    CHECK(std::holds_alternative<Blocked>(acquire(dev, {610, 300}, {60, 60}, 2.0, sb)));
    CHECK(std::holds_alternative<Blocked>(acquire(dev, {580, 300}, {60, 60}, 2.0, sb)));
    CHECK(std::holds_alternative<Blocked>(acquire(dev, {300, 29}, {60, 60}, 2.0, sb)));
    const auto ok = acquire(dev, {570, 30}, {60, 60}, 2.0, sb);
    REQUIRE(std::holds_alternative<ScanWindow>(ok));
    CHECK(std::get<ScanWindow>(ok).grid.rows() == 30);
}

TEST_CASE("simulated acquisition matches render_scan") {
    const SimulatedDevice dev{reference_device(), true, 3};
    const auto r = acquire(dev, {350, 400}, {60, 60}, 2.0, Sandbox{});
    REQUIRE(std::holds_alternative<ScanWindow>(r));
    const auto& w = std::get<ScanWindow>(r);
    auto [g, l] = render_scan(dev.params, {350, 400}, {60, 60}, 2.0, true, 3);
    CHECK(w.grid == g);
    REQUIRE(w.labels);
    CHECK(*w.labels == l);
}

TEST_CASE("premeasured crop lands on hand-computed indices") {
    const PremeasuredScan scan = stored_scan();
    REQUIRE(scan.grid.rows() == 200);
    REQUIRE(scan.grid.cols() == 200);
    CHECK(scan.grid.v1_axis.front() == 126.0);
    CHECK(scan.grid.v2_axis.front() == 151.0);

    // Window first pixel at 321 / 371 mV. Stored v1 centers are even, so the
    // tie between 320 and 322 goes up; stored v2 centers hit 371 exactly.
    const auto r = acquire(scan, {350, 400}, {60, 60}, 2.0, Sandbox{});
    REQUIRE(std::holds_alternative<ScanWindow>(r));
    const auto& w = std::get<ScanWindow>(r);
    CHECK(w.grid.rows() == 30);
    CHECK(w.grid.cols() == 30);
    const std::size_t col0 = 98, row0 = 110;
    CHECK(w.grid.v1_axis.front() == scan.grid.v1_axis[col0]);
    CHECK(w.grid.v2_axis.front() == scan.grid.v2_axis[row0]);
    for (std::size_t r2 = 0; r2 < 30; ++r2)
        for (std::size_t c = 0; c < 30; ++c) {
            CHECK(w.grid.at(r2, c) == scan.grid.values[(row0 + r2) * 200 + col0 + c]);
            CHECK(w.labels->at(r2, c) == scan.labels->labels[(row0 + r2) * 200 + col0 + c]);
        }

    // Shifted by 1 mV the roles swap: v1 is exact, v2 ties upward.
    const auto r2 = acquire(scan, {351, 401}, {60, 60}, 2.0, Sandbox{});
    REQUIRE(std::holds_alternative<ScanWindow>(r2));
    CHECK(std::get<ScanWindow>(r2).grid.v1_axis.front() == 322.0);
    CHECK(std::get<ScanWindow>(r2).grid.v2_axis.front() == 373.0);
}

TEST_CASE("premeasured window outside the raster is blocked") {
    const PremeasuredScan scan = stored_scan();
    CHECK(std::holds_alternative<Blocked>(acquire(scan, {140, 400}, {60, 60}, 2.0, Sandbox{})));
    CHECK(std::holds_alternative<Blocked>(acquire(scan, {350, 540}, {60, 60}, 2.0, Sandbox{})));
    CHECK(std::holds_alternative<ScanWindow>(acquire(scan, {157, 181}, {60, 60}, 2.0, Sandbox{})));
}

TEST_CASE("resolution handling on premeasured scans") {
    const PremeasuredScan scan = stored_scan();
    CHECK_THROWS_AS(acquire(scan, {350, 400}, {30, 30}, 1.0, Sandbox{}), UnsupportedResolution);
    CHECK_THROWS_AS(acquire(scan, {350, 400}, {60, 60}, 3.0, Sandbox{}), UnsupportedResolution);
    const auto r = acquire(scan, {350, 400}, {120, 120}, 4.0, Sandbox{});
    REQUIRE(std::holds_alternative<ScanWindow>(r));
    const auto& w = std::get<ScanWindow>(r);
    CHECK(w.grid.rows() == 30);
    CHECK(w.grid.resolution == 4.0);
    CHECK(w.grid.v1_axis[1] - w.grid.v1_axis[0] == 4.0);
}

TEST_CASE("crop agrees with acquire") {
    const PremeasuredScan scan = stored_scan();
    const ScanWindow c = crop(scan, 110, 98, 30, 30);
    const auto a = std::get<ScanWindow>(acquire(scan, {350, 400}, {60, 60}, 2.0, Sandbox{}));
    CHECK(c.grid == a.grid);
    CHECK(*c.labels == *a.labels);
    CHECK_THROWS_AS(crop(scan, 180, 0, 30, 30), ShapeError);
}

TEST_CASE("sandbox soundness over random centers") {
    const SimulatedDevice dev{reference_device(), false, 0};
    const Sandbox sb;
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-100.0, 700.0);
    for (int i = 0; i < 500; ++i) {
        const Voltage2 c{u(rng), u(rng)};
        const bool inside = c.v1 - 30 >= 0 && c.v1 + 30 <= 600 && c.v2 - 30 >= 0 && c.v2 + 30 <= 600;
        const auto r = acquire(dev, c, {60, 60}, 2.0, sb);
        CHECK(std::holds_alternative<ScanWindow>(r) == inside);
    }
}

TEST_CASE("sensor flip is an involution") {
    auto [g, l] = render_scan(reference_device(), {350, 400}, {60, 60}, 2.0, true);
    const ScanGrid f = inject_sensor_flip(g);
    CHECK(f.values[17] == -g.values[17]);
    CHECK(inject_sensor_flip(f) == g);
}

TEST_CASE("scan file round trip is bit exact") {
    const PremeasuredScan scan = stored_scan();
    const auto path = scratch("roundtrip.json");
    save_scan(scan.grid, scan.labels, path);
    const PremeasuredScan back = load_scan(path);
    CHECK(back.grid == scan.grid);
    REQUIRE(back.labels);
    CHECK(*back.labels == *scan.labels);

    std::array<std::size_t, 5> want{}, got{};
    for (StateLabel s : scan.labels->labels) ++want[static_cast<int>(s)];
    for (StateLabel s : back.labels->labels) ++got[static_cast<int>(s)];
    CHECK(want == got);

    save_scan(scan.grid, std::nullopt, path);
    CHECK_FALSE(load_scan(path).labels.has_value());
}

TEST_CASE("corrupt scan files fail with parse errors") {
    const PremeasuredScan scan = stored_scan();
    const auto path = scratch("truncated.json");
    save_scan(scan.grid, scan.labels, path);
    const auto size = std::filesystem::file_size(path);
    std::filesystem::resize_file(path, size / 2);
    CHECK_THROWS_AS(load_scan(path), ParseError);

    auto doc = scan_to_json(scan.grid, scan.labels);
    std::string v = doc["values"];
    doc["values"] = v.substr(0, v.size() - 8);
    CHECK_THROWS_AS(scan_from_json(doc), ParseError);

    doc = scan_to_json(scan.grid, scan.labels);
    doc["schema"] = "qdtune.scan/2";
    CHECK_THROWS_AS(scan_from_json(doc), VersionError);

    doc = scan_to_json(scan.grid, scan.labels);
    doc.erase("rows");
    CHECK_THROWS_AS(scan_from_json(doc), ParseError);

    CHECK_THROWS_AS(load_scan(scratch("does_not_exist.json")), ParseError);
}

TEST_CASE("base64 f64 codec") {
    const std::vector<double> v{0.0, -1.5, 3.14159, 1e-300, -0.0};
    const auto back = decode_f64(encode_f64(v), "v");
    REQUIRE(back.size() == v.size());
    for (std::size_t i = 0; i < v.size(); ++i) CHECK(std::signbit(back[i]) == std::signbit(v[i]));
    CHECK(back == v);
    CHECK_THROWS_AS(decode_f64("AAAA", "v"), ParseError);
    CHECK_THROWS_AS(decode_f64(encode_f64(v), "v", 4), ParseError);
}
