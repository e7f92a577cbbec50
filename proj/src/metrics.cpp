#include "scatterflow/metrics.hpp"

#include <array>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace sf::metrics {

namespace {

void check_shape(const Array& x, const Array& ref, int n) {
    if (n < 1 || x.size() != n * n || ref.size() != n * n)
        throw std::invalid_argument("metrics: images must both be n*n");
}

// separable 7x7 Gaussian filter, symmetric edge handling via kernel renorm
Array gauss7(const Array& img, int n) {
    static const auto kernel = [] {
        std::array<double, 7> k{};
        double s = 0.0;
        for (int i = 0; i < 7; ++i) {
            k[i] = std::exp(-0.5 * (i - 3) * (i - 3) / (1.5 * 1.5));
            s += k[i];
        }
        for (double& v : k) v /= s;
        return k;
    }();
    Array tmp = Array::Zero(n * n), out = Array::Zero(n * n);
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < n; ++c) {
            double acc = 0.0, wsum = 0.0;
            for (int k = -3; k <= 3; ++k) {
                int cc = c + k;
                if (cc < 0 || cc >= n) continue;
                acc += kernel[k + 3] * img[r * n + cc];
                wsum += kernel[k + 3];
            }
            tmp[r * n + c] = acc / wsum;
        }
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < n; ++c) {
            double acc = 0.0, wsum = 0.0;
            for (int k = -3; k <= 3; ++k) {
                int rr = r + k;
                if (rr < 0 || rr >= n) continue;
                acc += kernel[k + 3] * tmp[rr * n + c];
                wsum += kernel[k + 3];
            }
            out[r * n + c] = acc / wsum;
        }
    return out;
}

}  // namespace

double psnr(const Array& x, const Array& ref, int n) {
    check_shape(x, ref, n);
    double mse = (x - ref).square().mean();
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    double peak = ref.maxCoeff();
    return 10.0 * std::log10(peak * peak / mse);
}

double ssim(const Array& x, const Array& ref, int n) {
    check_shape(x, ref, n);
    double peak = ref.maxCoeff();
    if (peak <= 0.0) peak = 1.0;
    const double c1 = (0.01 * peak) * (0.01 * peak);
    const double c2 = (0.03 * peak) * (0.03 * peak);
    Array mu_x = gauss7(x, n), mu_r = gauss7(ref, n);
    Array var_x = gauss7(x * x, n) - mu_x * mu_x;
    Array var_r = gauss7(ref * ref, n) - mu_r * mu_r;
    Array cov = gauss7(x * ref, n) - mu_x * mu_r;
    Array num = (2.0 * mu_x * mu_r + c1) * (2.0 * cov + c2);
    Array den = (mu_x * mu_x + mu_r * mu_r + c1) * (var_x + var_r + c2);
    return (num / den).mean();
}

std::pair<double, Array> tv_norm(const Array& x, int n) {
    if (n < 1 || x.size() != n * n)
        throw std::invalid_argument("tv_norm: image must be n*n");
    constexpr double eps = 1e-8;
    const double base = std::sqrt(eps);
    double value = 0.0;
    Array grad = Array::Zero(n * n);
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < n; ++c) {
            double dx = (c + 1 < n) ? x[r * n + c + 1] - x[r * n + c] : 0.0;
            double dy = (r + 1 < n) ? x[(r + 1) * n + c] - x[r * n + c] : 0.0;
            double m = std::sqrt(dx * dx + dy * dy + eps);
            value += m - base;
            if (c + 1 < n) {
                grad[r * n + c + 1] += dx / m;
                grad[r * n + c] -= dx / m;
            }
            if (r + 1 < n) {
                grad[(r + 1) * n + c] += dy / m;
                grad[r * n + c] -= dy / m;
            }
        }
    return {value, std::move(grad)};
}

}  // namespace sf::metrics
