#include "scatterflow/training.hpp"

#include "scatterflow/pgm.hpp"
#include "scatterflow/rng.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>

namespace sf::train {

namespace {

// bilinear resample of a src x src image to dst x dst
Array resize_bilinear(const Array& img, int src, int dst) {
    Array out(dst * dst);
    double scale = static_cast<double>(src) / dst;
    for (int r = 0; r < dst; ++r) {
        double sy = (r + 0.5) * scale - 0.5;
        int y0 = std::clamp(static_cast<int>(std::floor(sy)), 0, src - 1);
        int y1 = std::min(y0 + 1, src - 1);
        double fy = std::clamp(sy - y0, 0.0, 1.0);
        for (int c = 0; c < dst; ++c) {
            double sx = (c + 0.5) * scale - 0.5;
            int x0 = std::clamp(static_cast<int>(std::floor(sx)), 0, src - 1);
            int x1 = std::min(x0 + 1, src - 1);
            double fx = std::clamp(sx - x0, 0.0, 1.0);
            double v = (1 - fy) * ((1 - fx) * img(y0 * src + x0) + fx * img(y0 * src + x1)) +
                       fy * ((1 - fx) * img(y1 * src + x0) + fx * img(y1 * src + x1));
            out(r * dst + c) = v;
        }
    }
    return out;
}

std::uint32_t read_be_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    if (!is) throw std::runtime_error("idx: truncated header");
    return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) |
           (std::uint32_t(b[2]) << 8) | std::uint32_t(b[3]);
}

}  // namespace

Dataset gen_ellipses(const DatasetSpec& spec) {
    if (spec.count < 1) throw std::invalid_argument("gen_ellipses: count must be >= 1");
    if (spec.chi_max <= 0) throw std::invalid_argument("gen_ellipses: chi_max must be > 0");
    NormalRng rng(spec.seed);
    const int n = spec.n;
    Dataset out;
    out.n = n;
    out.images.reserve(spec.count);
    for (int k = 0; k < spec.count; ++k) {
        Array img = Array::Zero(n * n);
        for (int e = 0; e < 4; ++e) {
            // centers uniform in the inner 80% of the domain (unit coords)
            double cx = rng.uniform(0.1, 0.9);
            double cy = rng.uniform(0.1, 0.9);
            double sa = rng.uniform(0.08, 0.25);
            double sb = rng.uniform(0.08, 0.25);
            double th = rng.uniform(0.0, M_PI);
            double amp = rng.uniform(0.3, 1.0);
            double ct = std::cos(th), st = std::sin(th);
            for (int r = 0; r < n; ++r)
                for (int c = 0; c < n; ++c) {
                    double x = (c + 0.5) / n - cx;
                    double y = (r + 0.5) / n - cy;
                    double u = (ct * x + st * y) / sa;
                    double v = (-st * x + ct * y) / sb;
                    if (u * u + v * v <= 1.0)
                        img(r * n + c) = std::max(img(r * n + c), amp);
                }
        }
        out.images.push_back(std::move(img));
    }
    return out;
}

Dataset load_mnist_idx(const std::string& path, int n) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("idx: cannot open '" + path + "'");
    std::uint32_t magic = read_be_u32(is);
    if (magic != 0x00000803)
        throw std::runtime_error("idx: bad magic (expected 0x00000803)");
    std::uint32_t count = read_be_u32(is);
    std::uint32_t rows = read_be_u32(is);
    std::uint32_t cols = read_be_u32(is);
    if (rows != cols) throw std::runtime_error("idx: non-square images unsupported");
    Dataset out;
    out.n = n;
    out.images.reserve(count);
    std::vector<unsigned char> buf(rows * cols);
    for (std::uint32_t k = 0; k < count; ++k) {
        is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
        if (!is) throw std::runtime_error("idx: truncated image data");
        Array img(rows * cols);
        for (std::size_t i = 0; i < buf.size(); ++i) img(i) = buf[i] / 255.0;
        out.images.push_back(static_cast<int>(rows) == n ? img
                                                         : resize_bilinear(img, rows, n));
    }
    return out;
}

Dataset load_image_dir(const std::string& dir, int n) {
    namespace fs = std::filesystem;
    std::vector<std::string> paths;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ".pgm")
            paths.push_back(e.path().string());
    std::sort(paths.begin(), paths.end());
    if (paths.empty()) throw std::runtime_error("load_image_dir: no .pgm files in '" + dir + "'");
    Dataset out;
    out.n = n;
    for (const auto& p : paths) {
        int w = 0, h = 0;
        Array img = Eigen::Map<const Array>(io::read_pgm(p, &w, &h).data(), w * h);
        if (w != h) throw std::runtime_error("load_image_dir: non-square image " + p);
        out.images.push_back(w == n ? img : resize_bilinear(img, w, n));
    }
    return out;
}

Dataset load_dataset(const DatasetSpec& spec) {
    switch (spec.kind) {
        case DatasetSpec::Kind::Ellipses: return gen_ellipses(spec);
        case DatasetSpec::Kind::MnistIdx: return load_mnist_idx(spec.path, spec.n);
        default: return load_image_dir(spec.path, spec.n);
    }
}

}  // namespace sf::train
