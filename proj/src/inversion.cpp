#include "scatterflow/inversion.hpp"

#include "scatterflow/metrics.hpp"

#include <chrono>
#include <cmath>
#include <stdexcept>

namespace sf::inv {

namespace g = sf::grad;
using flow::Tape;
using flow::Value;

namespace {

double now_s() {
    return std::chrono::duration<double>(
               std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

// 0.5 ||y - A(chi)||^2 on the tape; gradient comes from the adjoint solves
Value misfit_value(Value chi, const physics::ScatteredFields& y,
                   const physics::GreenOperators& greens, const physics::SolveOptions& opts,
                   int iter, double* loss_out) {
    physics::MisfitResult m;
    try {
        m = physics::misfit_gradient(chi.data(), y, greens, opts);
    } catch (const std::exception& e) {
        throw std::runtime_error("inversion: forward solve failed at iteration " +
                                 std::to_string(iter) + ": " + e.what());
    }
    *loss_out = m.loss;
    return g::custom_scalar(chi, m.loss, std::move(m.grad), "scatter_misfit");
}

Value tv_value(Value x, int n, double weight) {
    auto [val, grad] = metrics::tv_norm(x.data(), n);
    return g::custom_scalar(x, weight * val, weight * grad, "tv");
}

bool plateaued(const std::vector<double>& trace, int window, double rel_tol) {
    if (static_cast<int>(trace.size()) < window + 1) return false;
    std::size_t last = trace.size() - 1;
    for (int i = 0; i < window; ++i) {
        double a = trace[last - i - 1], b = trace[last - i];
        if (std::abs(a - b) > rel_tol * std::max(std::abs(a), 1e-300)) return false;
    }
    return true;
}

}  // namespace

void InversionConfig::validate() const {
    if (method == Method::Lso && init != Init::Mog)
        throw std::invalid_argument("inversion: lso requires init=mog");
    if (lambda < 0.0) throw std::invalid_argument("inversion: lambda must be >= 0");
    if (tv_weight < 0.0) throw std::invalid_argument("inversion: tv_weight must be >= 0");
    if (lr <= 0.0 || iters < 1)
        throw std::invalid_argument("inversion: lr must be > 0 and iters >= 1");
}

MapResult lso(const physics::ScatteredFields& y, const flow::FlowModel& model,
              const physics::GreenOperators& greens, const InversionConfig& cfg) {
    cfg.validate();
    if (cfg.method != InversionConfig::Method::Lso)
        throw std::invalid_argument("lso: config method mismatch");
    const int d = model.latent_dim();
    const int n = model.data_n();
    const double t0 = now_s();

    Array z = Array::Zero(d);  // latent Gaussian mean
    Array best_z = z;
    double best_obj = std::numeric_limits<double>::infinity();
    g::AdamState adam;
    MapResult result;
    for (int it = 0; it < cfg.iters; ++it) {
        Tape t;
        auto bind = const_cast<flow::FlowModel&>(model).bind(t, false, false);
        Value zv = t.leaf(z, {1, d}, true);
        Value logdet = t.constant(0.0);
        Value x_net = model.f_forward(t, zv, bind, &logdet);
        Value chi = g::scale(x_net, model.chi_max());
        double misfit = 0.0;
        Value obj = misfit_value(chi, y, greens, cfg.solve, it, &misfit);
        if (cfg.lambda > 0.0)
            obj = g::add(obj, g::scale(g::add(g::scale(g::sum(g::mul(zv, zv)), 0.5), logdet),
                                       cfg.lambda));
        if (cfg.tv_weight > 0.0) obj = g::add(obj, tv_value(chi, n, cfg.tv_weight));
        double ov = obj.scalar();
        if (!std::isfinite(ov))
            throw std::runtime_error("lso: objective diverged at iteration " +
                                     std::to_string(it));
        result.loss_trace.push_back(misfit);
        if (ov < best_obj) {
            best_obj = ov;
            best_z = z;
        }
        auto grads = t.backward(obj);
        std::vector<Array*> params{&z};
        std::vector<Array> gz{grads[zv.idx]};
        g::adam_step(params, gz, adam, cfg.lr);
        if (cfg.early_stop && plateaued(result.loss_trace, 20, 1e-6)) break;
    }
    result.z_map = best_z;
    result.x_map = flow::flow_forward(model, best_z);
    result.wall_time = now_s() - t0;
    return result;
}

MapResult dso(const physics::ScatteredFields& y, const flow::FlowModel& model,
              const physics::GreenOperators& greens, const InversionConfig& cfg) {
    cfg.validate();
    if (cfg.method != InversionConfig::Method::Dso)
        throw std::invalid_argument("dso: config method mismatch");
    const int n = model.data_n();
    const double t0 = now_s();

    Array x = cfg.init == InversionConfig::Init::Mog
                  ? flow::flow_forward(model, Array::Zero(model.latent_dim())).values
                  : physics::back_projection(y, greens).values;
    Array best_x = x;
    double best_obj = std::numeric_limits<double>::infinity();
    g::AdamState adam;
    MapResult result;
    for (int it = 0; it < cfg.iters; ++it) {
        Tape t;
        auto bind = const_cast<flow::FlowModel&>(model).bind(t, false, false);
        Value xv = t.leaf(x, {1, 1, n, n}, true);
        Value x_net = g::scale(xv, 1.0 / model.chi_max());
        Value zprime = model.g_pinv(t, x_net, bind);
        Value logdet_g = t.constant(0.0);
        Value proj_net = model.g_forward(t, zprime, bind, &logdet_g);
        Value chi = g::scale(proj_net, model.chi_max());
        double misfit = 0.0;
        Value obj = misfit_value(chi, y, greens, cfg.solve, it, &misfit);
        if (cfg.lambda > 0.0) {
            // -log p at the projected point, up to constants:
            // 0.5||z||^2 - logdet h^{-1} + logdet g, with z = h^{-1}(g^+(x))
            Value logdet_hinv = t.constant(0.0);
            Value z = model.h_inverse(t, zprime, bind, &logdet_hinv);
            Value neg_logp = g::add(g::sub(g::scale(g::sum(g::mul(z, z)), 0.5), logdet_hinv),
                                    logdet_g);
            obj = g::add(obj, g::scale(neg_logp, cfg.lambda));
        }
        if (cfg.tv_weight > 0.0) obj = g::add(obj, tv_value(xv, n, cfg.tv_weight));
        double ov = obj.scalar();
        if (!std::isfinite(ov))
            throw std::runtime_error("dso: objective diverged at iteration " +
                                     std::to_string(it));
        result.loss_trace.push_back(misfit);
        if (ov < best_obj) {
            best_obj = ov;
            best_x = x;
        }
        auto grads = t.backward(obj);
        std::vector<Array*> params{&x};
        std::vector<Array> gx{grads[xv.idx]};
        g::adam_step(params, gx, adam, cfg.lr);
        if (cfg.early_stop && plateaued(result.loss_trace, 20, 1e-6)) break;
    }
    result.x_map = {n, best_x.max(0.0)};
    result.wall_time = now_s() - t0;
    return result;
}

MapResult invert(const physics::ScatteredFields& y, const flow::FlowModel& model,
                 const physics::GreenOperators& greens, const InversionConfig& cfg) {
    return cfg.method == InversionConfig::Method::Lso ? lso(y, model, greens, cfg)
                                                      : dso(y, model, greens, cfg);
}

}  // namespace sf::inv
