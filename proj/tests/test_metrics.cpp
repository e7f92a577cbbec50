#include "scatterflow/metrics.hpp"
#include "scatterflow/rng.hpp"

#include <cmath>

#include "doctest.h"

using namespace sf::metrics;

TEST_CASE("psnr covers the standard anchors") {
    Array ref = Array::Constant(16, 0.8);
    CHECK(std::isinf(psnr(ref, ref, 4)));
    // mse equal to peak^2 pins psnr at 0 dB
    Array x = ref + 0.8;
    CHECK(psnr(x, ref, 4) == doctest::Approx(0.0).epsilon(1e-12));
    Array y = ref + 0.08;
    CHECK(psnr(y, ref, 4) == doctest::Approx(20.0).epsilon(1e-9));
    CHECK_THROWS(psnr(Array::Zero(9), ref, 4));
}

TEST_CASE("ssim is 1 on identical images and negative on inverted structure") {
    const int n = 16;
    Array a(n * n);
    sf::NormalRng rng(3);
    for (int i = 0; i < n * n; ++i) a[i] = rng.uniform();
    CHECK(ssim(a, a, n) == doctest::Approx(1.0).epsilon(1e-12));

    Array cb(n * n), inv(n * n);
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < n; ++c) {
            cb[r * n + c] = (r + c) % 2 ? 1.0 : 0.0;
            inv[r * n + c] = (r + c) % 2 ? 0.0 : 1.0;
        }
    CHECK(ssim(cb, inv, n) <= 0.0);
}

TEST_CASE("tv is zero on constants and counts step edges") {
    const int n = 8;
    CHECK(tv_norm(Array::Constant(n * n, 0.7), n).first == doctest::Approx(0.0));

    // vertical unit step across the full height: n jumps of height 1
    Array step = Array::Zero(n * n);
    for (int r = 0; r < n; ++r)
        for (int c = 4; c < n; ++c) step[r * n + c] = 1.0;
    CHECK(tv_norm(step, n).first == doctest::Approx(n).epsilon(1e-3));
}

TEST_CASE("tv gradient matches finite differences") {
    const int n = 8;
    sf::NormalRng rng(9);
    Array x(n * n);
    for (int i = 0; i < n * n; ++i) x[i] = rng.uniform();
    auto [val, grad] = tv_norm(x, n);
    const double h = 1e-7;
    for (int trial = 0; trial < 10; ++trial) {
        int i = static_cast<int>(rng.next_u64() % (n * n));
        Array up = x, dn = x;
        up[i] += h;
        dn[i] -= h;
        double fd = (tv_norm(up, n).first - tv_norm(dn, n).first) / (2.0 * h);
        CHECK(std::abs(grad[i] - fd) < 1e-6 * std::max(1.0, std::abs(fd)));
    }
}
