#pragma once

// Bessel-series scattered field of a homogeneous dielectric cylinder centered
// at the origin, TM polarization, exp(+iwt) time convention (outgoing waves
// carry the second-kind Hankel function). Independent oracle for the
// discretized forward solver.

#include "scatterflow/physics.hpp"

#include <cmath>
#include <complex>

namespace sf::test {

inline double bessel_j(int order, double x) {
    if (order >= 0) return std::cyl_bessel_j(order, x);
    return (order % 2 == 0 ? 1.0 : -1.0) * std::cyl_bessel_j(-order, x);
}

inline double bessel_y(int order, double x) {
    if (order >= 0) return std::cyl_neumann(order, x);
    return (order % 2 == 0 ? 1.0 : -1.0) * std::cyl_neumann(-order, x);
}

inline std::complex<double> hankel2(int order, double x) {
    return {bessel_j(order, x), -bessel_y(order, x)};
}

inline double bessel_jp(int order, double x) {
    return bessel_j(order - 1, x) - order / x * bessel_j(order, x);
}

inline std::complex<double> hankel2p(int order, double x) {
    return hankel2(order - 1, x) - static_cast<double>(order) / x * hankel2(order, x);
}

// Scattered field at receivers for a cylinder of radius `rad` and relative
// permittivity eps_r, matching the sensing geometry conventions: plane waves
// exp(-i k0 khat.r) at angles 2*pi*t/n_inc, receivers at 2*pi*m/n_rec on the
// circle of radius cfg.radius.
inline physics::CMat cylinder_scattered(const physics::SensingConfig& cfg, double eps_r,
                                        double rad) {
    using physics::Complex;
    const double k0 = cfg.k0();
    const double k1 = k0 * std::sqrt(eps_r);
    const int terms = static_cast<int>(k1 * rad) + 16;

    // b_n: scattered-series coefficient over the incident (-i)^n J_n term
    std::vector<Complex> b(terms + 1);
    const Complex im(0.0, 1.0);
    Complex i_pow(1.0, 0.0);  // (-i)^n
    for (int m = 0; m <= terms; ++m) {
        double j0 = bessel_j(m, k0 * rad), j0p = bessel_jp(m, k0 * rad);
        double j1 = bessel_j(m, k1 * rad), j1p = bessel_jp(m, k1 * rad);
        Complex h = hankel2(m, k0 * rad), hp = hankel2p(m, k0 * rad);
        b[m] = i_pow * (k1 * j1p * j0 - k0 * j1 * j0p) / (k0 * j1 * hp - k1 * j1p * h);
        i_pow *= -im;
    }

    physics::CMat out(cfg.n_rec, cfg.n_inc);
    for (int t = 0; t < cfg.n_inc; ++t) {
        double phi_i = 2.0 * M_PI * t / cfg.n_inc;
        for (int m = 0; m < cfg.n_rec; ++m) {
            double phi_r = 2.0 * M_PI * m / cfg.n_rec;
            double delta = phi_r - phi_i;
            Complex acc = b[0] * hankel2(0, k0 * cfg.radius);
            for (int q = 1; q <= terms; ++q)
                acc += 2.0 * b[q] * hankel2(q, k0 * cfg.radius) * std::cos(q * delta);
            out(m, t) = acc;
        }
    }
    return out;
}

// Staircase discretization of the same cylinder on the sensing grid.
inline physics::ContrastGrid cylinder_grid(const physics::SensingConfig& cfg, double eps_r,
                                           double rad) {
    physics::ContrastGrid chi = physics::ContrastGrid::zeros(cfg.n);
    for (int r = 0; r < cfg.n; ++r)
        for (int c = 0; c < cfg.n; ++c) {
            double x = cfg.cell_x(c), y = cfg.cell_y(r);
            if (x * x + y * y <= rad * rad) chi.values[r * cfg.n + c] = eps_r - 1.0;
        }
    return chi;
}

}  // namespace sf::test
