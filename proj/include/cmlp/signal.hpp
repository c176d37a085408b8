#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "cmlp/ndmath.hpp"

namespace cmlp {

/// W x H x C image. Row k of `pixels` is raster pixel k = y * width + x,
/// columns are channels; every value lies in [0, 1].
struct TargetSignal {
    int width = 0;
    int height = 0;
    int channels = 3;
    Matrix pixels;

    std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }
};

struct Interval {
    double lo = 0.0;
    double hi = 1.0;
};

/// Regular width x height lattice in [lo, hi]^2, endpoints included.
/// Row k of `points` is (x, y) for raster pixel k.
struct CoordinateGrid {
    int width = 0;
    int height = 0;
    Interval interval;
    Eigen::Matrix<double, Eigen::Dynamic, 2, Eigen::RowMajor> points;

    std::size_t size() const { return static_cast<std::size_t>(width) * height; }
};

struct Neighborhood {
    std::size_t center = 0;
    std::vector<std::size_t> members;
};

class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& what, std::size_t offset)
        : std::runtime_error(what + " at byte offset " + std::to_string(offset)),
          offset_(offset) {}
    std::size_t offset() const { return offset_; }

private:
    std::size_t offset_;
};

TargetSignal gen_random_image(std::uint64_t seed, int width, int height);

TargetSignal load_ppm(const std::filesystem::path& path);
void save_ppm(const TargetSignal& signal, const std::filesystem::path& path);

/// Decode an in-memory P6 buffer (used by load_ppm).
TargetSignal parse_ppm(const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> encode_ppm(const TargetSignal& signal);

/// Single-channel image written as binary PGM (P5). maxval <= 255 gives one byte
/// per sample, larger maxval gives two bytes big-endian.
struct GrayImage {
    int width = 0;
    int height = 0;
    int maxval = 255;
    std::vector<std::uint16_t> values;
};

std::vector<std::uint8_t> encode_pgm(const GrayImage& image);
GrayImage parse_pgm(const std::vector<std::uint8_t>& bytes);
void save_pgm(const GrayImage& image, const std::filesystem::path& path);
GrayImage load_pgm(const std::filesystem::path& path);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);

CoordinateGrid make_grid(int width, int height, Interval interval);

std::vector<Neighborhood> sample_neighborhoods(const CoordinateGrid& grid, int k, std::size_t n,
                                               std::uint64_t seed);

/// Chebyshev distance between two raster pixels.
int pixel_chebyshev(std::size_t a, std::size_t b, int width);

/// PSNR in dB for signals in [0, 1]; +infinity when the signals are identical.
double psnr(const TargetSignal& pred, const TargetSignal& target);

}  // namespace cmlp
