#include "scatterflow/physics.hpp"

#include <fftw3.h>

#include <cmath>
#include <stdexcept>

namespace sf::physics {

namespace {

Complex hankel2(int order, double x) {
    return {std::cyl_bessel_j(order, x), -std::cyl_neumann(order, x)};
}

}  // namespace

void SensingConfig::validate() const {
    if (n < 4) throw std::invalid_argument("SensingConfig: n must be >= 4");
    if (d_len <= 0) throw std::invalid_argument("SensingConfig: d_len must be > 0");
    if (freq <= 0) throw std::invalid_argument("SensingConfig: freq must be > 0");
    if (n_inc < 1) throw std::invalid_argument("SensingConfig: n_inc must be >= 1");
    if (n_rec < 1) throw std::invalid_argument("SensingConfig: n_rec must be >= 1");
    if (radius <= d_len * std::sqrt(2.0) / 2.0)
        throw std::invalid_argument("SensingConfig: receivers must lie outside the domain");
    if (cell() >= 0.5 * wavelength())
        throw std::invalid_argument(
            "SensingConfig: cell size >= lambda/2, grid is under-resolved");
}

void ContrastGrid::validate() const {
    if (static_cast<int>(values.size()) != n * n)
        throw std::invalid_argument("ContrastGrid: size mismatch");
    if (!values.isFinite().all()) throw std::invalid_argument("ContrastGrid: non-finite values");
    if ((values < 0.0).any()) throw std::invalid_argument("ContrastGrid: negative contrast");
}

struct GreenOperators::FftPlans {
    int m = 0;  // padded side, 2n
    fftw_plan fwd = nullptr;
    fftw_plan bwd = nullptr;
    CVec kernel_hat;       // FFT of circulant-embedded kernel, m*m
    CVec kernel_hat_conj;  // FFT of embedded conj kernel (for G_d^H)

    ~FftPlans() {
        if (fwd) fftw_destroy_plan(fwd);
        if (bwd) fftw_destroy_plan(bwd);
    }
};

GreenOperators::GreenOperators(const SensingConfig& cfg) : cfg_(cfg) {
    cfg.validate();
    const int n = cfg.n;
    const double k0 = cfg.k0();
    const double dx = cfg.cell();
    // equivalent-circle (Richmond) radius: same area as the square cell
    cell_radius_ = dx / std::sqrt(M_PI);
    const double ka = k0 * cell_radius_;

    // Scalar Green's function for exp(+iwt): G(rho) = -(i/4) H0^(2)(k0 rho).
    // Entries are k0^2 * integral of G over the source cell, evaluated with
    // the equivalent-circle closed forms:
    //   off-diagonal: -(i pi k0 a / 2) J1(k0 a) H0^(2)(k0 rho)
    //   self:         -(i pi k0 a / 2) H1^(2)(k0 a) - 1
    const Complex j(0.0, 1.0);
    const Complex off_scale = -j * M_PI * ka / 2.0 * std::cyl_bessel_j(1, ka);

    kernel_.resize(2 * n - 1, 2 * n - 1);
    for (int dp = -(n - 1); dp <= n - 1; ++dp) {
        for (int dq = -(n - 1); dq <= n - 1; ++dq) {
            if (dp == 0 && dq == 0) {
                kernel_(n - 1, n - 1) = -j * M_PI * ka / 2.0 * hankel2(1, ka) - 1.0;
            } else {
                double rho = dx * std::hypot(static_cast<double>(dp), static_cast<double>(dq));
                kernel_(dp + n - 1, dq + n - 1) = off_scale * hankel2(0, k0 * rho);
            }
        }
    }

    // receivers on the circle, angle 2*pi*m / n_rec
    gs_.resize(cfg.n_rec, n * n);
    for (int m = 0; m < cfg.n_rec; ++m) {
        double ang = 2.0 * M_PI * m / cfg.n_rec;
        double rx = cfg.radius * std::cos(ang);
        double ry = cfg.radius * std::sin(ang);
        for (int row = 0; row < n; ++row) {
            for (int col = 0; col < n; ++col) {
                double rho = std::hypot(rx - cfg.cell_x(col), ry - cfg.cell_y(row));
                gs_(m, row * n + col) = off_scale * hankel2(0, k0 * rho);
            }
        }
    }

    // circulant embedding in a 2n x 2n torus
    fft_ = std::make_unique<FftPlans>();
    const int m = 2 * n;
    fft_->m = m;
    CVec embedded = CVec::Zero(m * m);
    for (int dp = -(n - 1); dp <= n - 1; ++dp) {
        for (int dq = -(n - 1); dq <= n - 1; ++dq) {
            int p = (dp + m) % m;
            int q = (dq + m) % m;
            embedded[p * m + q] = kernel_(dp + n - 1, dq + n - 1);
        }
    }
    CVec buf(m * m);
    fft_->fwd = fftw_plan_dft_2d(m, m, reinterpret_cast<fftw_complex*>(buf.data()),
                                 reinterpret_cast<fftw_complex*>(buf.data()), FFTW_FORWARD,
                                 FFTW_ESTIMATE);
    fft_->bwd = fftw_plan_dft_2d(m, m, reinterpret_cast<fftw_complex*>(buf.data()),
                                 reinterpret_cast<fftw_complex*>(buf.data()), FFTW_BACKWARD,
                                 FFTW_ESTIMATE);

    fft_->kernel_hat = embedded;
    fftw_execute_dft(fft_->fwd, reinterpret_cast<fftw_complex*>(fft_->kernel_hat.data()),
                     reinterpret_cast<fftw_complex*>(fft_->kernel_hat.data()));
    CVec embedded_conj = embedded.conjugate();
    fft_->kernel_hat_conj = embedded_conj;
    fftw_execute_dft(fft_->fwd, reinterpret_cast<fftw_complex*>(fft_->kernel_hat_conj.data()),
                     reinterpret_cast<fftw_complex*>(fft_->kernel_hat_conj.data()));
}

GreenOperators::~GreenOperators() = default;

Complex GreenOperators::kernel(int dp, int dq) const {
    const int n = cfg_.n;
    if (std::abs(dp) > n - 1 || std::abs(dq) > n - 1)
        throw std::out_of_range("GreenOperators::kernel: offset out of range");
    return kernel_(dp + n - 1, dq + n - 1);
}

CVec GreenOperators::apply_kernel_fft(const CVec& x, bool conj_kernel) const {
    const int n = cfg_.n;
    const int m = fft_->m;
    if (x.size() != n * n) throw std::invalid_argument("gd_apply: size mismatch");
    CVec buf = CVec::Zero(m * m);
    for (int r = 0; r < n; ++r)
        buf.segment(r * m, n) = x.segment(r * n, n);
    auto* raw = reinterpret_cast<fftw_complex*>(buf.data());
    fftw_execute_dft(fft_->fwd, raw, raw);
    buf.array() *= (conj_kernel ? fft_->kernel_hat_conj : fft_->kernel_hat).array();
    fftw_execute_dft(fft_->bwd, raw, raw);
    CVec out(n * n);
    const double scale = 1.0 / (m * m);
    for (int r = 0; r < n; ++r)
        out.segment(r * n, n) = buf.segment(r * m, n) * scale;
    return out;
}

CVec GreenOperators::gd_apply(const CVec& x) const { return apply_kernel_fft(x, false); }

// G_d is symmetric (radial kernel of index offsets), so G_d^H x = conj(G_d conj(x));
// using the conjugated kernel avoids the double conjugation of x.
CVec GreenOperators::gd_apply_adj(const CVec& x) const { return apply_kernel_fft(x, true); }

CMat GreenOperators::gd_dense() const {
    const int n = cfg_.n;
    if (n > 32) throw std::invalid_argument("gd_dense: dense G_d restricted to n <= 32");
    CMat gd(n * n, n * n);
    for (int rm = 0; rm < n; ++rm)
        for (int cm = 0; cm < n; ++cm)
            for (int rn = 0; rn < n; ++rn)
                for (int cn = 0; cn < n; ++cn)
                    gd(rm * n + cm, rn * n + cn) = kernel_(rm - rn + n - 1, cm - cn + n - 1);
    return gd;
}

FieldSet incident_fields(const SensingConfig& cfg) {
    cfg.validate();
    const int n = cfg.n;
    const double k0 = cfg.k0();
    FieldSet fs;
    fs.values.resize(n * n, cfg.n_inc);
    for (int t = 0; t < cfg.n_inc; ++t) {
        double ang = 2.0 * M_PI * t / cfg.n_inc;
        double kx = k0 * std::cos(ang);
        double ky = k0 * std::sin(ang);
        for (int row = 0; row < n; ++row) {
            for (int col = 0; col < n; ++col) {
                double phase = -(kx * cfg.cell_x(col) + ky * cfg.cell_y(row));
                fs.values(row * n + col, t) = std::polar(1.0, phase);
            }
        }
    }
    return fs;
}

}  // namespace sf::physics
