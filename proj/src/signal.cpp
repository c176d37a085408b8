#include "cmlp/signal.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

namespace cmlp {

TargetSignal gen_random_image(std::uint64_t seed, int width, int height) {
    if (width < 1 || height < 1) {
        throw std::invalid_argument("gen_random_image: width and height must be >= 1");
    }
    TargetSignal sig;
    sig.width = width;
    sig.height = height;
    sig.channels = 3;
    sig.pixels.resize(static_cast<Eigen::Index>(width) * height, 3);
    Rng rng(seed);
    for (Eigen::Index k = 0; k < sig.pixels.rows(); ++k) {
        for (int c = 0; c < 3; ++c) sig.pixels(k, c) = rng.uniform();
    }
    return sig;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("write failed for " + path.string());
}

namespace {

// Netpbm header reader: magic, then whitespace-separated decimal fields with
// '#' comments, then exactly one whitespace byte before the raster.
class HeaderReader {
public:
    explicit HeaderReader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

    std::string magic() {
        if (bytes_.size() < 2) throw ParseError("truncated magic number", bytes_.size());
        pos_ = 2;
        return {static_cast<char>(bytes_[0]), static_cast<char>(bytes_[1])};
    }

    long field(const char* name) {
        skip_space_and_comments();
        const std::size_t start = pos_;
        long value = 0;
        while (pos_ < bytes_.size() && std::isdigit(bytes_[pos_])) {
            value = value * 10 + (bytes_[pos_] - '0');
            if (value > 1'000'000) throw ParseError(std::string("oversized ") + name, start);
            ++pos_;
        }
        if (pos_ == start) {
            throw ParseError(std::string("expected ") + name, pos_);
        }
        return value;
    }

    std::size_t raster_start() {
        if (pos_ >= bytes_.size() || !std::isspace(bytes_[pos_])) {
            throw ParseError("expected single whitespace before raster", pos_);
        }
        return pos_ + 1;
    }

private:
    void skip_space_and_comments() {
        while (pos_ < bytes_.size()) {
            if (std::isspace(bytes_[pos_])) {
                ++pos_;
            } else if (bytes_[pos_] == '#') {
                while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
            } else {
                break;
            }
        }
    }

    const std::vector<std::uint8_t>& bytes_;
    std::size_t pos_ = 0;
};

std::string pnm_header(const char* magic, int w, int h, int maxval) {
    return std::string(magic) + "\n" + std::to_string(w) + " " + std::to_string(h) + "\n" +
           std::to_string(maxval) + "\n";
}

}  // namespace

TargetSignal parse_ppm(const std::vector<std::uint8_t>& bytes) {
    HeaderReader reader(bytes);
    if (reader.magic() != "P6") throw ParseError("unsupported format, expected P6", 0);
    const long w = reader.field("width");
    const long h = reader.field("height");
    const long maxval = reader.field("maxval");
    if (w < 1 || h < 1) throw ParseError("image dimensions must be positive", 2);
    if (maxval != 255) throw ParseError("only maxval 255 is supported", 2);
    const std::size_t start = reader.raster_start();
    const std::size_t need = static_cast<std::size_t>(w) * h * 3;
    if (bytes.size() - start < need) {
        throw ParseError("truncated payload, expected " + std::to_string(need) + " bytes",
                         bytes.size());
    }
    TargetSignal sig;
    sig.width = static_cast<int>(w);
    sig.height = static_cast<int>(h);
    sig.channels = 3;
    sig.pixels.resize(w * h, 3);
    for (std::size_t i = 0; i < need; ++i) {
        sig.pixels.data()[i] = bytes[start + i] / 255.0;
    }
    return sig;
}

std::vector<std::uint8_t> encode_ppm(const TargetSignal& sig) {
    if (sig.channels != 3) throw std::invalid_argument("encode_ppm: RGB signal required");
    const std::string header = pnm_header("P6", sig.width, sig.height, 255);
    std::vector<std::uint8_t> out(header.begin(), header.end());
    out.reserve(out.size() + sig.pixel_count() * 3);
    for (Eigen::Index k = 0; k < sig.pixels.rows(); ++k) {
        for (int c = 0; c < 3; ++c) {
            const double v = std::clamp(sig.pixels(k, c), 0.0, 1.0);
            out.push_back(static_cast<std::uint8_t>(std::lround(v * 255.0)));
        }
    }
    return out;
}

TargetSignal load_ppm(const std::filesystem::path& path) { return parse_ppm(read_file_bytes(path)); }

void save_ppm(const TargetSignal& sig, const std::filesystem::path& path) {
    write_file_bytes(path, encode_ppm(sig));
}

std::vector<std::uint8_t> encode_pgm(const GrayImage& image) {
    if (image.maxval < 1 || image.maxval > 65535) {
        throw std::invalid_argument("encode_pgm: maxval out of range");
    }
    const std::string header = pnm_header("P5", image.width, image.height, image.maxval);
    std::vector<std::uint8_t> out(header.begin(), header.end());
    const bool wide = image.maxval > 255;
    for (std::uint16_t v : image.values) {
        if (v > image.maxval) throw std::invalid_argument("encode_pgm: value exceeds maxval");
        if (wide) out.push_back(static_cast<std::uint8_t>(v >> 8));
        out.push_back(static_cast<std::uint8_t>(v & 0xff));
    }
    return out;
}

GrayImage parse_pgm(const std::vector<std::uint8_t>& bytes) {
    HeaderReader reader(bytes);
    if (reader.magic() != "P5") throw ParseError("unsupported format, expected P5", 0);
    GrayImage image;
    image.width = static_cast<int>(reader.field("width"));
    image.height = static_cast<int>(reader.field("height"));
    image.maxval = static_cast<int>(reader.field("maxval"));
    if (image.maxval < 1 || image.maxval > 65535) throw ParseError("maxval out of range", 2);
    const std::size_t start = reader.raster_start();
    const std::size_t count = static_cast<std::size_t>(image.width) * image.height;
    const std::size_t stride = image.maxval > 255 ? 2 : 1;
    if (bytes.size() - start < count * stride) throw ParseError("truncated payload", bytes.size());
    image.values.resize(count);
    for (std::size_t i = 0; i < count; ++i) {
        const std::size_t at = start + i * stride;
        image.values[i] = stride == 2 ? static_cast<std::uint16_t>((bytes[at] << 8) | bytes[at + 1])
                                      : bytes[at];
    }
    return image;
}

void save_pgm(const GrayImage& image, const std::filesystem::path& path) {
    write_file_bytes(path, encode_pgm(image));
}

GrayImage load_pgm(const std::filesystem::path& path) { return parse_pgm(read_file_bytes(path)); }

CoordinateGrid make_grid(int width, int height, Interval interval) {
    if (width < 1 || height < 1) throw std::invalid_argument("make_grid: empty grid");
    if (!(interval.lo < interval.hi)) throw std::invalid_argument("make_grid: requires lo < hi");
    auto axis = [&](int i, int n) {
        if (n == 1) return 0.5 * (interval.lo + interval.hi);
        return interval.lo + (interval.hi - interval.lo) * i / (n - 1);
    };
    CoordinateGrid grid;
    grid.width = width;
    grid.height = height;
    grid.interval = interval;
    grid.points.resize(static_cast<Eigen::Index>(width) * height, 2);
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            const Eigen::Index k = static_cast<Eigen::Index>(y) * width + x;
            grid.points(k, 0) = axis(x, width);
            grid.points(k, 1) = axis(y, height);
        }
    }
    return grid;
}

int pixel_chebyshev(std::size_t a, std::size_t b, int width) {
    const auto w = static_cast<std::size_t>(width);
    const int dx = std::abs(static_cast<int>(a % w) - static_cast<int>(b % w));
    const int dy = std::abs(static_cast<int>(a / w) - static_cast<int>(b / w));
    return std::max(dx, dy);
}

std::vector<Neighborhood> sample_neighborhoods(const CoordinateGrid& grid, int k, std::size_t n,
                                               std::uint64_t seed) {
    if (k < 1 || k % 2 == 0) throw std::invalid_argument("sample_neighborhoods: k must be odd");
    if (k > std::min(grid.width, grid.height)) {
        throw std::invalid_argument("sample_neighborhoods: k exceeds grid size");
    }
    const int r = (k - 1) / 2;
    std::vector<std::size_t> centers;
    for (int y = r; y < grid.height - r; ++y) {
        for (int x = r; x < grid.width - r; ++x) {
            centers.push_back(static_cast<std::size_t>(y) * grid.width + x);
        }
    }
    if (n > centers.size()) {
        throw std::invalid_argument("sample_neighborhoods: requested " + std::to_string(n) +
                                    " neighborhoods but only " + std::to_string(centers.size()) +
                                    " interior centers exist");
    }
    // Partial Fisher-Yates: the first n slots end up a uniform sample without replacement.
    Rng rng(seed);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(rng.below(centers.size() - i));
        std::swap(centers[i], centers[j]);
    }
    std::vector<Neighborhood> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        Neighborhood nb;
        nb.center = centers[i];
        const int cx = static_cast<int>(centers[i] % grid.width);
        const int cy = static_cast<int>(centers[i] / grid.width);
        for (int y = cy - r; y <= cy + r; ++y) {
            for (int x = cx - r; x <= cx + r; ++x) {
                nb.members.push_back(static_cast<std::size_t>(y) * grid.width + x);
            }
        }
        out.push_back(std::move(nb));
    }
    return out;
}

double psnr(const TargetSignal& pred, const TargetSignal& target) {
    if (pred.width != target.width || pred.height != target.height ||
        pred.channels != target.channels ||
        pred.pixels.rows() != target.pixels.rows() || pred.pixels.cols() != target.pixels.cols()) {
        throw std::invalid_argument("psnr: dimension mismatch");
    }
    const double mse = (pred.pixels - target.pixels).squaredNorm() /
                       static_cast<double>(pred.pixels.size());
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(1.0 / mse);
}

}  // namespace cmlp
