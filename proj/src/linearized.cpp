#include "scatterflow/physics.hpp"

#include <stdexcept>

namespace sf::physics {

ContrastGrid back_projection(const ScatteredFields& y, const GreenOperators& greens) {
    const SensingConfig& cfg = greens.config();
    const int cells = cfg.n * cfg.n;
    if (y.values.rows() != cfg.n_rec || y.values.cols() != cfg.n_inc)
        throw std::invalid_argument("back_projection: measurement shape mismatch");

    FieldSet e_inc = incident_fields(cfg);
    Eigen::ArrayXcd num = Eigen::ArrayXcd::Zero(cells);
    Eigen::ArrayXd den = Eigen::ArrayXd::Zero(cells);
    for (int t = 0; t < cfg.n_inc; ++t) {
        CVec y_t = y.values.col(t);
        CVec gsh_y = greens.gs().adjoint() * y_t;
        CVec gg = greens.gs() * gsh_y;  // G_s G_s^H y_t
        double gg2 = gg.squaredNorm();
        Complex gamma = gg2 > 0 ? y_t.dot(gg) / gg2 : Complex(0, 0);
        CVec j_t = gamma * gsh_y;
        CVec e_hat = e_inc.values.col(t) + greens.gd_apply(j_t);
        num += j_t.array() * e_hat.array().conjugate();
        den += e_hat.array().abs2();
    }
    ContrastGrid out;
    out.n = cfg.n;
    out.values = (num / den.max(1e-300).cast<Complex>()).real().max(0.0);
    return out;
}

ContrastGrid born_inversion(const ScatteredFields& y, const GreenOperators& greens, double tik) {
    const SensingConfig& cfg = greens.config();
    const int cells = cfg.n * cfg.n;
    if (tik < 0) throw std::invalid_argument("born_inversion: tik must be >= 0");
    if (y.values.rows() != cfg.n_rec || y.values.cols() != cfg.n_inc)
        throw std::invalid_argument("born_inversion: measurement shape mismatch");

    // Born model: y_t = G_s diag(E^i_t) chi, chi real. Stack Re/Im parts and
    // solve the Tikhonov problem in dual (min-norm) form: the row count
    // 2*n_rec*n_inc is far below N^2.
    FieldSet e_inc = incident_fields(cfg);
    const int rows = 2 * cfg.n_rec * cfg.n_inc;
    Eigen::MatrixXd a(rows, cells);
    Eigen::VectorXd b(rows);
    for (int t = 0; t < cfg.n_inc; ++t) {
        CMat block = greens.gs();
        for (int c = 0; c < cells; ++c) block.col(c) *= e_inc.values(c, t);
        a.middleRows(2 * t * cfg.n_rec, cfg.n_rec) = block.real();
        a.middleRows((2 * t + 1) * cfg.n_rec, cfg.n_rec) = block.imag();
        b.segment(2 * t * cfg.n_rec, cfg.n_rec) = y.values.col(t).real();
        b.segment((2 * t + 1) * cfg.n_rec, cfg.n_rec) = y.values.col(t).imag();
    }
    Eigen::MatrixXd gram = a * a.transpose();
    gram.diagonal().array() += tik;
    if (tik == 0.0) {
        Eigen::FullPivLU<Eigen::MatrixXd> lu(gram);
        if (!lu.isInvertible())
            throw std::runtime_error("born_inversion: rank-deficient system, use tik > 0");
        ContrastGrid out;
        out.n = cfg.n;
        out.values = (a.transpose() * lu.solve(b)).array().max(0.0);
        return out;
    }
    Eigen::LLT<Eigen::MatrixXd> llt(gram);
    if (llt.info() != Eigen::Success)
        throw std::runtime_error("born_inversion: normal equations not positive definite");
    ContrastGrid out;
    out.n = cfg.n;
    out.values = (a.transpose() * llt.solve(b)).array().max(0.0);
    return out;
}

}  // namespace sf::physics
