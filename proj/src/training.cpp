#include "scatterflow/training.hpp"

#include "scatterflow/rng.hpp"

#include <cmath>
#include <cstdio>
#include <numeric>
#include <stdexcept>

namespace sf::train {

namespace g = sf::grad;
using flow::FlowModel;
using flow::Tape;
using flow::Value;

namespace {

Array stack_batch(const Dataset& data, const std::vector<int>& idx, std::size_t lo,
                  std::size_t hi) {
    const int cells = data.n * data.n;
    Array out(static_cast<int>(hi - lo) * cells);
    for (std::size_t i = lo; i < hi; ++i)
        out.segment(static_cast<int>(i - lo) * cells, cells) = data.images[idx[i]];
    return out;
}

double cosine_lr(double base, int step, int total, bool enabled) {
    if (!enabled || total <= 1) return base;
    return base * 0.5 * (1.0 + std::cos(M_PI * step / (total - 1)));
}

std::vector<g::Array> collect_grads(Tape& t, const FlowModel::Binding& bind,
                                    const std::vector<g::Array>& all) {
    std::vector<g::Array> out;
    out.reserve(bind.trainable.size());
    for (const Value& v : bind.trainable) out.push_back(all[v.idx]);
    return out;
}

}  // namespace

std::vector<double> train_phase1(FlowModel& model, const Dataset& data, const TrainConfig& cfg) {
    if (cfg.phase1_epochs < 1) throw std::invalid_argument("train_phase1: epochs must be >= 1");
    if (cfg.batch_size < 1 || cfg.batch_size > static_cast<int>(data.size()))
        throw std::invalid_argument("train_phase1: batch size must fit the dataset");
    const int n = data.n;
    const int cells = n * n;

    NormalRng rng(cfg.seed);
    std::vector<int> idx(data.size());
    std::iota(idx.begin(), idx.end(), 0);

    // data-dependent actnorm init from the first batch
    {
        std::size_t bs = std::min<std::size_t>(cfg.batch_size, data.size());
        model.initialize_actnorms(stack_batch(data, idx, 0, bs), static_cast<int>(bs));
    }

    g::AdamState adam;
    std::vector<double> epoch_loss;
    const int steps_per_epoch = static_cast<int>(data.size()) / cfg.batch_size;
    const int total_steps = cfg.phase1_epochs * steps_per_epoch;
    int step = 0;
    for (int epoch = 0; epoch < cfg.phase1_epochs; ++epoch) {
        // Fisher-Yates from the run seed
        for (std::size_t i = idx.size(); i > 1; --i)
            std::swap(idx[i - 1], idx[rng.next_u64() % i]);
        double loss_sum = 0.0;
        for (int b = 0; b < steps_per_epoch; ++b, ++step) {
            std::size_t lo = static_cast<std::size_t>(b) * cfg.batch_size;
            Array batch = stack_batch(data, idx, lo, lo + cfg.batch_size);
            Tape t;
            auto bind = model.bind(t, /*train_g=*/true, /*train_h=*/false);
            Value x = t.leaf(batch, {cfg.batch_size, 1, n, n}, false);
            Value zprime = model.g_pinv(t, x, bind);
            Value xr = model.g_forward(t, zprime, bind, nullptr);
            Value loss = g::mean(g::mul(g::sub(x, xr), g::sub(x, xr)));
            double lv = loss.scalar();
            if (!std::isfinite(lv))
                throw std::runtime_error("train_phase1: NaN loss at epoch " +
                                         std::to_string(epoch) + " step " + std::to_string(b));
            loss_sum += lv;
            auto grads = t.backward(loss);
            g::adam_step(bind.trainable_params, collect_grads(t, bind, grads), adam,
                         cosine_lr(cfg.lr_phase1, step, total_steps, cfg.cosine_decay));
        }
        epoch_loss.push_back(loss_sum / steps_per_epoch);
        if (cfg.verbose)
            std::fprintf(stderr, "[phase1] epoch %d/%d  mse %.6f\n", epoch + 1,
                         cfg.phase1_epochs, epoch_loss.back());
    }
    (void)cells;
    return epoch_loss;
}

std::vector<double> train_phase2(FlowModel& model, const Dataset& data, const TrainConfig& cfg) {
    if (cfg.phase2_epochs < 1) throw std::invalid_argument("train_phase2: epochs must be >= 1");
    if (cfg.batch_size < 1 || cfg.batch_size > static_cast<int>(data.size()))
        throw std::invalid_argument("train_phase2: batch size must fit the dataset");
    const int n = data.n;
    const int d = model.latent_dim();

    NormalRng rng(cfg.seed + 1);
    std::vector<int> idx(data.size());
    std::iota(idx.begin(), idx.end(), 0);

    g::AdamState adam;
    std::vector<double> epoch_nll;
    const int steps_per_epoch = static_cast<int>(data.size()) / cfg.batch_size;
    const int total_steps = cfg.phase2_epochs * steps_per_epoch;
    const double log2pi = std::log(2.0 * M_PI);
    int step = 0;
    for (int epoch = 0; epoch < cfg.phase2_epochs; ++epoch) {
        for (std::size_t i = idx.size(); i > 1; --i)
            std::swap(idx[i - 1], idx[rng.next_u64() % i]);
        double nll_sum = 0.0;
        for (int b = 0; b < steps_per_epoch; ++b, ++step) {
            std::size_t lo = static_cast<std::size_t>(b) * cfg.batch_size;
            Array batch = stack_batch(data, idx, lo, lo + cfg.batch_size);
            // gamma is frozen: the projection to the intermediate space is a constant
            Array zprime = model.g_pinv_eval(batch, cfg.batch_size);
            Tape t;
            auto bind = model.bind(t, /*train_g=*/false, /*train_h=*/true);
            Value zp = t.leaf(zprime, {cfg.batch_size, 4, 4, 4}, false);
            Value logdet_inv = t.constant(0.0);
            Value z = model.h_inverse(t, zp, bind, &logdet_inv);
            // -log p(z') = 0.5||z||^2 + d/2 log 2pi - log|det J_{h^{-1}}|
            Value nll = g::scale(
                g::sub(g::scale(g::sum(g::mul(z, z)), 0.5), logdet_inv),
                1.0 / cfg.batch_size);
            double lv = nll.scalar() + 0.5 * d * log2pi;
            if (!std::isfinite(lv))
                throw std::runtime_error("train_phase2: NaN loss at epoch " +
                                         std::to_string(epoch) + " step " + std::to_string(b));
            nll_sum += lv;
            auto grads = t.backward(nll);
            g::adam_step(bind.trainable_params, collect_grads(t, bind, grads), adam,
                         cosine_lr(cfg.lr_phase2, step, total_steps, cfg.cosine_decay));
        }
        epoch_nll.push_back(nll_sum / steps_per_epoch);
        if (cfg.verbose)
            std::fprintf(stderr, "[phase2] epoch %d/%d  nll %.4f  bits/dim %.4f\n", epoch + 1,
                         cfg.phase2_epochs, epoch_nll.back(),
                         epoch_nll.back() / (d * std::log(2.0)));
    }
    return epoch_nll;
}

}  // namespace sf::train
