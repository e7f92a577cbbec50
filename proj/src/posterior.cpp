#include "scatterflow/posterior.hpp"

#include "scatterflow/rng.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace sf::post {

namespace g = sf::grad;
using flow::Tape;
using flow::Value;

double kl_gaussian(const Array& sigma_q, const Array& mu_q) {
    if (sigma_q.size() != mu_q.size())
        throw std::invalid_argument("kl_gaussian: dimension mismatch");
    if ((sigma_q <= 0.0).any())
        throw std::invalid_argument("kl_gaussian: sigma_q must be positive");
    return 0.5 * (sigma_q.square() + mu_q.square() - 1.0 - 2.0 * sigma_q.log()).sum();
}

PosteriorParams fit_sigma(const physics::ScatteredFields& y, const flow::FlowModel& model,
                          const physics::GreenOperators& greens, const Array& z_map,
                          const FitOptions& opts) {
    const int d = model.latent_dim();
    const int n = model.data_n();
    if (z_map.size() != d) throw std::invalid_argument("fit_sigma: z_map has wrong dimension");
    if (opts.k_samples < 1 || opts.iters < 1 || opts.lr <= 0.0 || opts.beta < 0.0)
        throw std::invalid_argument("fit_sigma: bad options");
    const int K = opts.k_samples;

    NormalRng rng(opts.seed);
    Array log_sigma = Array::Zero(d);  // sigma_q starts at all-ones
    g::AdamState adam;
    for (int it = 0; it < opts.iters; ++it) {
        Array t_draws(K * d);
        for (int i = 0; i < K * d; ++i) t_draws[i] = rng.normal();
        Array z_rep(K * d);
        for (int k = 0; k < K; ++k) z_rep.segment(k * d, d) = z_map;

        Tape t;
        auto bind = const_cast<flow::FlowModel&>(model).bind(t, false, false);
        Value ls = t.leaf(log_sigma, {d}, true);
        Value sig = g::exp(ls);
        // broadcast sigma over the K draws by tiling as a (K,d) batch
        Value sig_rep = g::reshape(
            g::matmul(t.leaf(Array::Ones(K), {K, 1}, false), g::reshape(sig, {1, d})), {K, d});
        Value z = g::add(t.leaf(z_rep, {K, d}, false),
                         g::mul(sig_rep, t.leaf(t_draws, {K, d}, false)));
        Value x_net = model.f_forward(t, z, bind, nullptr);
        Value chi = g::scale(x_net, model.chi_max());

        // per-sample misfits stacked into one externally-computed primitive
        double total = 0.0;
        Array grad_all(K * n * n);
        const Array& chi_all = chi.data();
        for (int k = 0; k < K; ++k) {
            physics::MisfitResult m;
            try {
                m = physics::misfit_gradient(chi_all.segment(k * n * n, n * n), y, greens,
                                             opts.solve);
            } catch (const std::exception& e) {
                throw std::runtime_error("fit_sigma: forward solve failed at iteration " +
                                         std::to_string(it) + ": " + e.what());
            }
            total += 2.0 * m.loss;  // ||r||^2, not 0.5||r||^2
            grad_all.segment(k * n * n, n * n) = 2.0 * m.grad;
        }
        Value data_term = g::custom_scalar(chi, total, std::move(grad_all), "scatter_misfit_k");
        Value penalty = g::scale(
            g::sum(g::sub(g::exp(g::scale(ls, 2.0)), g::scale(ls, 2.0))), opts.beta);
        Value obj = g::add(data_term, penalty);
        double ov = obj.scalar();
        if (!std::isfinite(ov))
            throw std::runtime_error("fit_sigma: objective diverged at iteration " +
                                     std::to_string(it) + ", mean log sigma " +
                                     std::to_string(log_sigma.mean()));
        if (opts.verbose && it % 20 == 0)
            std::fprintf(stderr, "[fit_sigma] iter %d  obj %.6g  mean(sigma) %.4f\n", it, ov,
                         log_sigma.exp().mean());
        auto grads = t.backward(obj);
        std::vector<Array*> params{&log_sigma};
        std::vector<Array> gl{grads[ls.idx]};
        g::adam_step(params, gl, adam, opts.lr);
    }
    return {z_map, log_sigma.exp(), opts.beta, opts.k_samples};
}

UqResult sample_posterior(const flow::FlowModel& model, const PosteriorParams& params,
                          int count, std::uint64_t seed) {
    const int d = model.latent_dim();
    const int n = model.data_n();
    if (count < 1) throw std::invalid_argument("sample_posterior: count must be >= 1");
    if (params.mu_q.size() != d || params.sigma_q.size() != d)
        throw std::invalid_argument("sample_posterior: parameter dimension mismatch");

    NormalRng rng(seed);
    UqResult out;
    out.samples.reserve(count);
    for (int s = 0; s < count; ++s) {
        Array z(d);
        for (int i = 0; i < d; ++i) z[i] = params.mu_q[i] + params.sigma_q[i] * rng.normal();
        out.samples.push_back(flow::flow_forward(model, z));
    }
    // mean as offset from the first sample: exact for coinciding samples
    Array mean = Array::Zero(n * n);
    for (const auto& x : out.samples) mean += x.values - out.samples[0].values;
    mean = out.samples[0].values + mean / count;
    // two-pass variance: exactly zero when all samples coincide
    Array var = Array::Zero(n * n);
    for (const auto& x : out.samples) var += (x.values - mean).square();
    out.mmse = {n, mean};
    out.uq = {n, (var / count).sqrt()};
    return out;
}

namespace {

// fixed injective toy map R^2 -> R^4:
// coupling u1 = z1, u2 = z2 * exp(tanh(a z1)) + b z1, then x = W u
constexpr double kA = 0.7, kB = 0.3;
const Eigen::Matrix<double, 4, 2> kW = [] {
    Eigen::Matrix<double, 4, 2> w;
    w << 1.0, 0.2, -0.3, 1.1, 0.5, -0.4, 0.1, 0.8;
    return w;
}();

double log_density_diag(const Array& v, const Array& mu, const Array& sigma) {
    double acc = -0.5 * v.size() * std::log(2.0 * M_PI);
    for (int i = 0; i < v.size(); ++i) {
        double r = (v[i] - mu[i]) / sigma[i];
        acc += -0.5 * r * r - std::log(sigma[i]);
    }
    return acc;
}

}  // namespace

KlCheck kl_invariance_check(const Array& mu_q, const Array& sigma_q, const Array& mu_p,
                            const Array& sigma_p, int n_draws, std::uint64_t seed) {
    if (mu_q.size() != 2 || sigma_q.size() != 2 || mu_p.size() != 2 || sigma_p.size() != 2)
        throw std::invalid_argument("kl_invariance_check: expects 2-d Gaussians");
    if ((sigma_q <= 0.0).any() || (sigma_p <= 0.0).any())
        throw std::invalid_argument("kl_invariance_check: sigmas must be positive");
    if (n_draws < 2) throw std::invalid_argument("kl_invariance_check: need n_draws >= 2");

    // constant injective volume factor of x = W u
    const Eigen::Matrix2d wtw = kW.transpose() * kW;
    const double half_logdet_wtw = 0.5 * std::log(wtw.determinant());
    const Eigen::Matrix2d wtw_inv = wtw.inverse();

    NormalRng rng(seed);
    double s_lat = 0.0, s2_lat = 0.0, s_push = 0.0, s2_push = 0.0;
    for (int i = 0; i < n_draws; ++i) {
        Array z(2);
        z[0] = mu_q[0] + sigma_q[0] * rng.normal();
        z[1] = mu_q[1] + sigma_q[1] * rng.normal();

        double lat = log_density_diag(z, mu_q, sigma_q) - log_density_diag(z, mu_p, sigma_p);
        s_lat += lat;
        s2_lat += lat * lat;

        // push z through the map, then evaluate both pushforward densities at
        // x by inverting it (left inverse + coupling inverse)
        Eigen::Vector2d u(z[0], z[1] * std::exp(std::tanh(kA * z[0])) + kB * z[0]);
        Eigen::Vector4d x = kW * u;
        Eigen::Vector2d u_rec = wtw_inv * (kW.transpose() * x);
        Array z_rec(2);
        z_rec[0] = u_rec[0];
        z_rec[1] = (u_rec[1] - kB * u_rec[0]) * std::exp(-std::tanh(kA * u_rec[0]));
        double logdet_coupling = std::tanh(kA * z_rec[0]);
        double logdet = logdet_coupling + half_logdet_wtw;
        double log_qx = log_density_diag(z_rec, mu_q, sigma_q) - logdet;
        double log_px = log_density_diag(z_rec, mu_p, sigma_p) - logdet;
        double push = log_qx - log_px;
        s_push += push;
        s2_push += push * push;
    }
    KlCheck out;
    out.kl_latent = s_lat / n_draws;
    out.kl_pushforward = s_push / n_draws;
    double var_lat = std::max(0.0, s2_lat / n_draws - out.kl_latent * out.kl_latent);
    double var_push = std::max(0.0, s2_push / n_draws - out.kl_pushforward * out.kl_pushforward);
    out.se_latent = std::sqrt(var_lat / n_draws);
    out.se_pushforward = std::sqrt(var_push / n_draws);
    return out;
}

}  // namespace sf::post
