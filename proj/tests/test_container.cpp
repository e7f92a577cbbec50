#include "scatterflow/container.hpp"
#include "scatterflow/pgm.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "doctest.h"

using namespace sf::io;
namespace fs = std::filesystem;

namespace {
std::string tmp_path(const std::string& name) {
    return (fs::temp_directory_path() / name).string();
}
std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}
}  // namespace

TEST_CASE("container round trip preserves every dtype") {
    Container c;
    c.put_f64("grid", {2, 3}, {1.0, 2.0, 3.0, 4.0, 5.0, 6.0});
    c.put_c128("fields", {2}, {{1.0, -2.0}, {0.5, 0.25}});
    c.put_u8("bytes", {4}, {0, 127, 128, 255});
    c.put_scalar("freq", 3e9);
    c.put_string("note", "hello");
    std::string path = tmp_path("sf_roundtrip.scpr");
    c.save(path);

    Container r = Container::load(path);
    CHECK(r.get("grid").dims == std::vector<std::uint32_t>{2, 3});
    CHECK(r.get("grid").f64[4] == 5.0);
    auto z = r.get_c128("fields");
    CHECK(z[0] == std::complex<double>(1.0, -2.0));
    CHECK(z[1] == std::complex<double>(0.5, 0.25));
    CHECK(r.get("bytes").u8 == std::vector<std::uint8_t>{0, 127, 128, 255});
    CHECK(r.get_scalar("freq") == 3e9);
    CHECK(r.get_string("note") == "hello");
    fs::remove(path);
}

TEST_CASE("container writes byte-identical files for identical content") {
    auto build = [] {
        Container c;
        c.put_f64("a", {3}, {1.0, 2.0, 3.0});
        c.put_string("b", "x");
        return c;
    };
    std::string p1 = tmp_path("sf_b1.scpr"), p2 = tmp_path("sf_b2.scpr");
    build().save(p1);
    build().save(p2);
    CHECK(slurp(p1) == slurp(p2));
    fs::remove(p1);
    fs::remove(p2);
}

TEST_CASE("container rejects duplicate names and bad files") {
    Container c;
    c.put_scalar("x", 1.0);
    CHECK_THROWS(c.put_scalar("x", 2.0));
    CHECK_THROWS(c.get("missing"));
    CHECK_THROWS(Container::load(tmp_path("sf_does_not_exist.scpr")));

    // truncation detected
    std::string path = tmp_path("sf_trunc.scpr");
    c.save(path);
    std::string bytes = slurp(path);
    std::ofstream out(path, std::ios::binary);
    out.write(bytes.data(), bytes.size() - 3);
    out.close();
    CHECK_THROWS(Container::load(path));
    fs::remove(path);
}

TEST_CASE("pgm export quantizes linearly and round-trips") {
    std::string path = tmp_path("sf_test.pgm");
    std::vector<double> grid{0.0, 0.5, 1.0, 2.0, -1.0, 0.25, 0.75, 0.1, 0.9};
    sf::io::export_pgm(grid, 3, path, 0.0, 1.0);
    int w = 0, h = 0;
    std::vector<double> back = sf::io::read_pgm(path, &w, &h);
    REQUIRE(w == 3);
    REQUIRE(h == 3);
    for (int i = 0; i < 9; ++i) {
        double expect = std::min(1.0, std::max(0.0, grid[i]));
        CHECK(back[i] == doctest::Approx(expect).epsilon(1e-4));
    }
    // midpoint lands in the middle of the 16-bit range
    sf::io::export_pgm({0.5}, 1, path, 0.0, 1.0);
    std::string bytes = slurp(path);
    auto hi = static_cast<unsigned char>(bytes[bytes.size() - 2]);
    auto lo = static_cast<unsigned char>(bytes[bytes.size() - 1]);
    int pix = hi * 256 + lo;
    CHECK(std::abs(pix - 32768) <= 1);
    CHECK_THROWS(sf::io::export_pgm(grid, 3, path, 1.0, 1.0));
    fs::remove(path);
}
