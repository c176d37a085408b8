#include <doctest.h>

#include <filesystem>
#include <set>

#include "cmlp/signal.hpp"

using namespace cmlp;

namespace {

// Frozen from the implementation; guards against silent changes to the RNG stream.
constexpr double kSeed7Mean = 0.49987983134995689;

std::filesystem::path scratch(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / "cmlp_test_signal";
    std::filesystem::create_directories(dir);
    return dir / name;
}

std::vector<std::uint8_t> bytes_of(const std::string& s) { return {s.begin(), s.end()}; }

}  // namespace

TEST_CASE("random image is seeded and in range") {
    const auto a = gen_random_image(7, 64, 64);
    const auto b = gen_random_image(7, 64, 64);
    CHECK(a.pixels == b.pixels);
    CHECK(a.pixels.rows() == 4096);
    CHECK(a.pixels.cols() == 3);
    CHECK(a.pixels != gen_random_image(8, 64, 64).pixels);

    const auto one = gen_random_image(7, 1, 1);
    CHECK(one.pixels.size() == 3);
    CHECK(one.pixels.minCoeff() >= 0.0);
    CHECK(one.pixels.maxCoeff() <= 1.0);

    CHECK(std::abs(a.pixels.mean() - 0.5) < 0.02);
    CHECK(a.pixels.mean() == doctest::Approx(kSeed7Mean).epsilon(1e-12));
    CHECK_THROWS_AS(gen_random_image(1, 0, 4), std::invalid_argument);
}

TEST_CASE("ppm decoding") {
    const auto sig = parse_ppm(bytes_of(std::string("P6\n1 1\n255\n") + '\xff' + '\0' + '\0'));
    CHECK(sig.width == 1);
    CHECK(sig.pixels(0, 0) == 1.0);
    CHECK(sig.pixels(0, 1) == 0.0);
    CHECK(sig.pixels(0, 2) == 0.0);

    // comments and arbitrary whitespace in the header
    const auto c = parse_ppm(bytes_of(std::string("P6 # c\n2\t1 # w h\n255\n") + "\x01\x02\x03\x04\x05\x06"));
    CHECK(c.width == 2);
    CHECK(c.pixels(1, 2) == doctest::Approx(6.0 / 255.0));
}

TEST_CASE("ppm rejects other formats and truncation with an offset") {
    CHECK_THROWS_AS(parse_ppm(bytes_of("P5\n1 1\n255\n\x01")), ParseError);
    CHECK_THROWS_AS(parse_ppm(bytes_of("P3\n1 1\n255\n1 2 3\n")), ParseError);
    CHECK_THROWS_AS(parse_ppm(bytes_of("P6\n1 1\n65535\n\x01\x02\x03\x04\x05\x06")), ParseError);
    CHECK_THROWS_AS(parse_ppm(bytes_of("P6\n1 x\n255\n")), ParseError);
    try {
        parse_ppm(bytes_of("P6\n2 2\n255\nabc"));
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(e.offset() == 14);
        CHECK(std::string(e.what()).find("offset") != std::string::npos);
    }
}

TEST_CASE("ppm round trip is byte exact") {
    const auto sig = gen_random_image(3, 17, 5);
    const auto path = scratch("rt.ppm");
    save_ppm(sig, path);
    const auto bytes = read_file_bytes(path);
    const std::string header = "P6\n17 5\n255\n";
    CHECK(std::string(bytes.begin(), bytes.begin() + static_cast<long>(header.size())) == header);
    CHECK(bytes.size() == header.size() + 17 * 5 * 3);
    const auto back = load_ppm(path);
    CHECK(encode_ppm(back) == bytes);
    save_ppm(back, path);
    CHECK(read_file_bytes(path) == bytes);
}

TEST_CASE("pgm round trip in 8 and 16 bits") {
    GrayImage g{3, 2, 255, {0, 10, 20, 30, 40, 255}};
    CHECK(parse_pgm(encode_pgm(g)).values == g.values);
    GrayImage wide{2, 2, 65535, {0, 300, 65535, 7}};
    const auto bytes = encode_pgm(wide);
    CHECK(bytes[bytes.size() - 8 + 2] == 300 >> 8);  // big-endian samples
    CHECK(bytes[bytes.size() - 8 + 3] == (300 & 0xff));
    CHECK(parse_pgm(bytes).values == wide.values);
}

TEST_CASE("grid corners, spacing and bounds") {
    const auto g = make_grid(2, 2, {0.0, 1.0});
    REQUIRE(g.size() == 4);
    CHECK(g.points.row(0) == Eigen::RowVector2d(0, 0));
    CHECK(g.points.row(1) == Eigen::RowVector2d(1, 0));
    CHECK(g.points.row(2) == Eigen::RowVector2d(0, 1));
    CHECK(g.points.row(3) == Eigen::RowVector2d(1, 1));

    const auto big = make_grid(64, 64, {0.0, 1.0});
    CHECK(big.points(1, 0) - big.points(0, 0) == doctest::Approx(1.0 / 63.0).epsilon(1e-14));
    const auto sym = make_grid(64, 64, {-1.0, 1.0});
    CHECK(sym.points.col(0).minCoeff() == -1.0);
    CHECK(sym.points.col(1).minCoeff() == -1.0);
    CHECK(sym.points.col(0).maxCoeff() == 1.0);
    CHECK(sym.points.col(1).maxCoeff() == 1.0);

    const auto single = make_grid(1, 1, {0.0, 2.0});
    CHECK(single.points.row(0) == Eigen::RowVector2d(1.0, 1.0));
    CHECK_THROWS_AS(make_grid(4, 4, {1.0, 1.0}), std::invalid_argument);
}

TEST_CASE("grid follows raster order with lattice spacing") {
    const auto g = make_grid(7, 5, {-1.0, 3.0});
    const double sx = 4.0 / 6.0, sy = 4.0 / 4.0;
    for (int y = 0; y < 5; ++y) {
        for (int x = 0; x < 7; ++x) {
            const auto k = static_cast<Eigen::Index>(y * 7 + x);
            if (x + 1 < 7) {
                CHECK(g.points(k + 1, 0) - g.points(k, 0) == doctest::Approx(sx).epsilon(1e-14));
                CHECK(g.points(k + 1, 1) == g.points(k, 1));
            }
            if (y + 1 < 5) {
                CHECK(g.points(k + 7, 1) - g.points(k, 1) == doctest::Approx(sy).epsilon(1e-14));
                CHECK(g.points(k + 7, 0) == g.points(k, 0));
            }
        }
    }
}

TEST_CASE("neighborhoods") {
    const auto g = make_grid(64, 64, {0.0, 1.0});
    const auto hoods = sample_neighborhoods(g, 3, 100, 5);
    CHECK(hoods.size() == 100);
    std::set<std::size_t> centers;
    for (const auto& h : hoods) {
        CHECK(h.members.size() == 9);
        centers.insert(h.center);
        for (auto m : h.members) {
            CHECK(m < 4096);
            CHECK(pixel_chebyshev(m, h.center, 64) <= 1);
        }
    }
    CHECK(centers.size() == 100);

    const auto again = sample_neighborhoods(g, 3, 100, 5);
    for (std::size_t i = 0; i < hoods.size(); ++i) CHECK(again[i].center == hoods[i].center);

    for (const auto& h : sample_neighborhoods(g, 1, 10, 5)) {
        CHECK(h.members.size() == 1);
        CHECK(h.members[0] == h.center);
    }
    const auto wide = sample_neighborhoods(g, 5, 30, 9);
    for (const auto& h : wide) {
        for (auto m : h.members) CHECK(pixel_chebyshev(m, h.center, 64) <= 2);
    }

    const auto small = make_grid(5, 5, {0.0, 1.0});
    CHECK(sample_neighborhoods(small, 3, 9, 1).size() == 9);
    CHECK_THROWS_AS(sample_neighborhoods(small, 3, 10, 1), std::invalid_argument);
    CHECK_THROWS_AS(sample_neighborhoods(small, 2, 1, 1), std::invalid_argument);
    CHECK_THROWS_AS(sample_neighborhoods(small, 7, 1, 1), std::invalid_argument);
}

TEST_CASE("psnr") {
    auto a = gen_random_image(1, 8, 8);
    CHECK(std::isinf(psnr(a, a)));

    TargetSignal zeros{4, 4, 3, Matrix::Zero(16, 3)};
    TargetSignal ones{4, 4, 3, Matrix::Ones(16, 3)};
    CHECK(psnr(zeros, ones) == doctest::Approx(0.0));

    TargetSignal base{4, 4, 3, Matrix::Constant(16, 3, 0.3)};
    TargetSignal shifted{4, 4, 3, Matrix::Constant(16, 3, 0.4)};
    CHECK(psnr(shifted, base) == doctest::Approx(20.0).epsilon(1e-9));

    CHECK_THROWS_AS(psnr(zeros, a), std::invalid_argument);
}
