#pragma once

#include <Eigen/Dense>
#include <complex>
#include <limits>
#include <memory>
#include <string>
#include <vector>

namespace sf::physics {

using Complex = std::complex<double>;
using CVec = Eigen::VectorXcd;
using CMat = Eigen::MatrixXcd;
using RVec = Eigen::VectorXd;

constexpr double kC0 = 299792458.0;
constexpr double kSnrOff = std::numeric_limits<double>::infinity();

// Sensing geometry: N x N grid over a D x D square, transmitters as plane
// waves with equispaced directions, receivers equispaced on a circle of
// radius R outside the domain. exp(+i w t) time convention throughout.
struct SensingConfig {
    int n = 32;
    double d_len = 0.2;
    double freq = 3e9;
    int n_inc = 12;
    int n_rec = 12;
    double radius = 0.2;
    double snr_db = kSnrOff;

    double k0() const { return 2.0 * M_PI * freq / kC0; }
    double cell() const { return d_len / n; }
    double wavelength() const { return kC0 / freq; }
    // cell center, row-major index = row * n + col; x right, y up
    double cell_x(int col) const { return -0.5 * d_len + (col + 0.5) * cell(); }
    double cell_y(int row) const { return 0.5 * d_len - (row + 0.5) * cell(); }

    void validate() const;  // throws std::invalid_argument
};

struct ContrastGrid {
    int n = 0;
    Eigen::ArrayXd values;  // n*n, row-major, chi = eps_r - 1 >= 0

    static ContrastGrid zeros(int n) { return {n, Eigen::ArrayXd::Zero(n * n)}; }
    void validate() const;
};

// E-field samples on the grid, one column per incidence.
struct FieldSet {
    CMat values;  // N^2 x n_inc
};

struct ScatteredFields {
    CMat values;  // n_rec x n_inc

    double power() const { return values.squaredNorm(); }
};

// G_d is BTTB; only its (2n-1)^2 offset generator is stored and products go
// through zero-padded 2D FFTs. G_s is small and kept dense.
class GreenOperators {
public:
    explicit GreenOperators(const SensingConfig& cfg);
    ~GreenOperators();
    GreenOperators(const GreenOperators&) = delete;
    GreenOperators& operator=(const GreenOperators&) = delete;

    const SensingConfig& config() const { return cfg_; }
    double cell_radius() const { return cell_radius_; }

    // kernel value at cell-index offset (dp, dq), |dp|,|dq| <= n-1
    Complex kernel(int dp, int dq) const;
    const CMat& gs() const { return gs_; }

    // y = G_d x and y = G_d^H x, matrix-free via FFT
    CVec gd_apply(const CVec& x) const;
    CVec gd_apply_adj(const CVec& x) const;
    // dense reference of G_d, n <= 32 only (testing / direct solve)
    CMat gd_dense() const;

private:
    SensingConfig cfg_;
    double cell_radius_;
    CMat kernel_;    // (2n-1) x (2n-1), centered at (n-1, n-1)
    CMat gs_;        // n_rec x n^2
    struct FftPlans;  // fftw state for the padded convolution
    std::unique_ptr<FftPlans> fft_;
    CVec apply_kernel_fft(const CVec& x, bool conj_kernel) const;
};

enum class SolveMethod { Direct, Iterative };

struct SolveOptions {
    SolveMethod method = SolveMethod::Iterative;
    double tol = 1e-8;
    int max_iters = 2000;
};

// Incident plane waves exp(-i k0 khat_t . r), khat_t at angle 2*pi*t/n_inc.
FieldSet incident_fields(const SensingConfig& cfg);

// Solves (I - G_d X) E^t = E^i per incidence.
FieldSet solve_total_field(const GreenOperators& greens, const ContrastGrid& chi,
                           const FieldSet& e_inc, const SolveOptions& opts = {});

// A(chi) = G_s X (I - G_d X)^{-1} E^i
ScatteredFields forward(const GreenOperators& greens, const ContrastGrid& chi,
                        const SolveOptions& opts = {});
ScatteredFields forward(const ContrastGrid& chi, const SensingConfig& cfg,
                        const SolveOptions& opts = {});

// Circularly-symmetric complex white Gaussian with total power
// ||E^s||^2 * 10^(-snr_db/10). snr_db = kSnrOff disables.
ScatteredFields add_noise(const ScatteredFields& fields, double snr_db, std::uint64_t seed);

// loss = 0.5 ||y - A(chi)||^2; grad via one forward and one adjoint solve
// per incidence. chi values may be any finite reals here (optimizers probe
// outside the feasible set).
struct MisfitResult {
    double loss = 0.0;
    Eigen::ArrayXd grad;  // n*n
};
MisfitResult misfit_gradient(const Eigen::ArrayXd& chi_values, const ScatteredFields& y,
                             const GreenOperators& greens, const SolveOptions& opts = {});

// Classical linearized inversions (baselines / initializations).
ContrastGrid back_projection(const ScatteredFields& y, const GreenOperators& greens);
ContrastGrid born_inversion(const ScatteredFields& y, const GreenOperators& greens, double tik);

}  // namespace sf::physics
