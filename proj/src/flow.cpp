#include "scatterflow/flow.hpp"

#include <cmath>
#include <stdexcept>

namespace sf::flow {

namespace g = sf::grad;

std::vector<Value> Layer::bind(Tape& t, bool trainable) {
    std::vector<Value> out;
    for (Array* p : params()) out.push_back(t.leaf(*p, {static_cast<int>(p->size())}, trainable));
    return out;
}

// ---- ActNorm ----------------------------------------------------------------

ActNorm::ActNorm(int channels)
    : c_(channels), mu_(Array::Zero(channels)), log_sigma_(Array::Zero(channels)) {}

Value ActNorm::forward(Tape& t, Value x, const std::vector<Value>& p, Value* logdet) {
    const Shape s = x.shape();  // by value: later node pushes can reallocate the tape
    Value mu = g::reshape(p[0], {c_});
    Value ls = g::reshape(p[1], {c_});
    Value inv_sigma = g::exp(g::neg(ls));
    Value shift = g::neg(g::mul(mu, inv_sigma));
    Value y = g::channel_scale_shift(x, inv_sigma, shift);
    if (logdet) {
        double per = -static_cast<double>(s[0] * s[2] * s[3]);
        *logdet = g::add(*logdet, g::scale(g::sum(ls), per));
    }
    return y;
}

Value ActNorm::inverse(Tape& t, Value y, const std::vector<Value>& p, Value* logdet) {
    const Shape s = y.shape();
    Value mu = g::reshape(p[0], {c_});
    Value sigma = g::exp(g::reshape(p[1], {c_}));
    Value z = g::channel_scale_shift(y, sigma, mu);
    if (logdet) {
        double per = static_cast<double>(s[0] * s[2] * s[3]);
        *logdet = g::add(*logdet, g::scale(g::sum(g::reshape(p[1], {c_})), per));
    }
    return z;
}

namespace {
void channel_stats(const Array& x, int bs, int c, int hw, Array& mean, Array& std) {
    mean = Array::Zero(c);
    std = Array::Zero(c);
    for (int n = 0; n < bs; ++n)
        for (int i = 0; i < c; ++i) mean(i) += x.segment((n * c + i) * hw, hw).sum();
    mean /= static_cast<double>(bs * hw);
    for (int n = 0; n < bs; ++n)
        for (int i = 0; i < c; ++i)
            std(i) += (x.segment((n * c + i) * hw, hw) - mean(i)).square().sum();
    std = (std / static_cast<double>(bs * hw)).sqrt().max(1e-4);
}
}  // namespace

void ActNorm::init_from_batch(const Array& x, int bs) {
    int hw = static_cast<int>(x.size()) / (bs * c_);
    Array mean, std;
    channel_stats(x, bs, c_, hw, mean, std);
    mu_ = mean;
    log_sigma_ = std.log();
}

void ActNorm::init_from_batch_inverse(const Array& x, int bs) {
    // inverse direction applies z = sigma*x + mu; normalize its output
    int hw = static_cast<int>(x.size()) / (bs * c_);
    Array mean, std;
    channel_stats(x, bs, c_, hw, mean, std);
    Array sigma = (1.0 / std).max(1e-4);
    log_sigma_ = sigma.log();
    mu_ = -mean * sigma;
}

// ---- Conv1x1 ----------------------------------------------------------------

Conv1x1::Conv1x1(int c_in, int c_out, sf::NormalRng& rng) : c_in_(c_in), c_out_(c_out) {
    if (c_out != c_in && c_out != 2 * c_in)
        throw std::invalid_argument("Conv1x1: c_out must equal c_in or 2*c_in");
    w_ = Array::Zero(c_in * c_out);
    if (c_out == c_in) {
        // random rotation via QR of a Gaussian matrix
        Eigen::MatrixXd a(c_in, c_in);
        for (int i = 0; i < a.size(); ++i) a(i / c_in, i % c_in) = rng.normal();
        Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
        Eigen::MatrixXd q = qr.householderQ();
        if (q.determinant() < 0) q.col(0) *= -1.0;
        for (int r = 0; r < c_in; ++r)
            for (int c = 0; c < c_out; ++c) w_(r * c_out + c) = q(r, c);
    } else {
        // stacked identity pair plus small noise: near volume-preserving start
        for (int r = 0; r < c_in; ++r) {
            w_(r * c_out + r) = 1.0;
            w_(r * c_out + c_in + r) = 1.0;
        }
        for (int i = 0; i < w_.size(); ++i) w_(i) += 0.01 * rng.normal();
    }
}

Value Conv1x1::forward(Tape& t, Value x, const std::vector<Value>& p, Value* logdet) {
    const Shape s = x.shape();
    Value w = g::reshape(p[0], {c_in_, c_out_});
    Value y = g::conv1x1(x, w);
    if (logdet) {
        double per = static_cast<double>(s[0] * s[2] * s[3]);
        if (injective()) {
            Value gram = g::matmul(w, g::transpose(w));  // det(w w^T) = det(J^T J)
            *logdet = g::add(*logdet, g::scale(g::logdet_abs(gram), 0.5 * per));
        } else {
            *logdet = g::add(*logdet, g::scale(g::logdet_abs(w), per));
        }
    }
    return y;
}

Value Conv1x1::inverse(Tape& t, Value y, const std::vector<Value>& p, Value* logdet) {
    const Shape s = y.shape();
    Value w = g::reshape(p[0], {c_in_, c_out_});
    Value back;
    if (injective()) {
        // layer-wise pseudo-inverse: channel map (w w^T)^{-1} applied after w^T
        Value gram_inv = g::matinv(g::matmul(w, g::transpose(w)));
        back = g::conv1x1(y, g::matmul(g::transpose(w), gram_inv));
    } else {
        back = g::conv1x1(y, g::matinv(w));
        if (logdet) {
            double per = static_cast<double>(s[0] * s[2] * s[3]);
            *logdet = g::add(*logdet, g::scale(g::logdet_abs(w), -per));
        }
    }
    return back;
}

// ---- Coupling ---------------------------------------------------------------

Coupling::Coupling(int channels, int hidden, sf::NormalRng& rng)
    : c_(channels), half_(channels / 2), hidden_(hidden) {
    if (channels % 2 != 0) throw std::invalid_argument("Coupling: channels must be even");
    auto make_net = [&]() {
        auto kaiming = [&](int co, int ci) {
            Array w(co * ci * 9);
            double s = std::sqrt(2.0 / (ci * 9));
            for (int i = 0; i < w.size(); ++i) w(i) = s * rng.normal();
            return w;
        };
        ws_.push_back(kaiming(hidden_, half_));
        ws_.push_back(Array::Zero(hidden_));
        ws_.push_back(kaiming(hidden_, hidden_));
        ws_.push_back(Array::Zero(hidden_));
        ws_.push_back(Array::Zero(half_ * hidden_ * 9));  // zero last layer: identity start
        ws_.push_back(Array::Zero(half_));
    };
    make_net();  // scale net
    make_net();  // shift net
}

std::vector<Array*> Coupling::params() {
    std::vector<Array*> out;
    for (auto& a : ws_) out.push_back(&a);
    return out;
}

std::vector<std::string> Coupling::param_names() const {
    std::vector<std::string> out;
    for (int net = 0; net < 2; ++net)
        for (int l = 0; l < 3; ++l) {
            std::string base = (net == 0 ? "s" : "b") + std::to_string(l);
            out.push_back(base + ".w");
            out.push_back(base + ".b");
        }
    return out;
}

Value Coupling::subnet(Tape& t, Value in, const std::vector<Value>& p, int base) const {
    int ci = half_;
    Value h1 = g::leaky_relu(
        g::conv2d(in, g::reshape(p[base + 0], {hidden_, ci, 3, 3}), g::reshape(p[base + 1], {hidden_})),
        0.2);
    Value h2 = g::leaky_relu(
        g::conv2d(h1, g::reshape(p[base + 2], {hidden_, hidden_, 3, 3}),
                  g::reshape(p[base + 3], {hidden_})),
        0.2);
    return g::conv2d(h2, g::reshape(p[base + 4], {half_, hidden_, 3, 3}),
                     g::reshape(p[base + 5], {half_}));
}

Value Coupling::forward(Tape& t, Value x, const std::vector<Value>& p, Value* logdet) {
    Value x1 = g::slice_channels(x, 0, half_);
    Value x2 = g::slice_channels(x, half_, c_);
    Value pre = g::tanh(subnet(t, x1, p, 0));  // bounded pre-activation
    Value s = g::exp(pre);
    Value b = subnet(t, x1, p, 6);
    Value y2 = g::add(g::mul(s, x2), b);
    if (logdet) *logdet = g::add(*logdet, g::sum(pre));
    return g::concat_channels(x1, y2);
}

Value Coupling::inverse(Tape& t, Value y, const std::vector<Value>& p, Value* logdet) {
    Value y1 = g::slice_channels(y, 0, half_);
    Value y2 = g::slice_channels(y, half_, c_);
    Value pre = g::tanh(subnet(t, y1, p, 0));
    Value s = g::exp(pre);
    Value b = subnet(t, y1, p, 6);
    Value x2 = g::div(g::sub(y2, b), s);
    if (!x2.data().isFinite().all())
        throw std::runtime_error("Coupling::inverse: overflow in scale division");
    if (logdet) *logdet = g::add(*logdet, g::neg(g::sum(pre)));
    return g::concat_channels(y1, x2);
}

// ---- FlowModel --------------------------------------------------------------

FlowModel::FlowModel(const FlowConfig& cfg) : cfg_(cfg) {
    if (cfg.latent != 64) throw std::invalid_argument("FlowModel: latent dimension must be 64");
    int expand_steps = 0;
    while ((4 << expand_steps) * 16 < cfg.n * cfg.n) ++expand_steps;
    if ((4 << expand_steps) * 16 != cfg.n * cfg.n)
        throw std::invalid_argument("FlowModel: n*n must be a power-of-two multiple of 64");
    sf::NormalRng rng(cfg.seed);

    int c = 4;  // latent reshaped to (4,4,4)
    for (int k = 0; k < expand_steps; ++k) {
        for (int j = 0; j < cfg.bij_per_inj; ++j) {
            g_layers_.push_back(std::make_unique<ActNorm>(c));
            g_layers_.push_back(std::make_unique<Conv1x1>(c, c, rng));
            g_layers_.push_back(std::make_unique<Coupling>(c, cfg.hidden, rng));
        }
        g_layers_.push_back(std::make_unique<ActNorm>(c));
        g_layers_.push_back(std::make_unique<Conv1x1>(c, 2 * c, rng));
        c *= 2;
        g_layers_.push_back(std::make_unique<Coupling>(c, cfg.hidden, rng));
    }
    while (c > 1) {
        g_layers_.push_back(std::make_unique<DepthToSpace>());
        c /= 4;
    }

    for (int j = 0; j < cfg.h_blocks; ++j) {
        h_layers_.push_back(std::make_unique<ActNorm>(4));
        h_layers_.push_back(std::make_unique<Conv1x1>(4, 4, rng));
        h_layers_.push_back(std::make_unique<Coupling>(4, cfg.hidden, rng));
    }
}

FlowModel::Binding FlowModel::bind(Tape& t, bool train_g, bool train_h) {
    Binding b;
    auto bind_group = [&](std::vector<std::unique_ptr<Layer>>& layers, bool trainable,
                          std::vector<std::vector<Value>>& out) {
        for (auto& l : layers) {
            out.push_back(l->bind(t, trainable));
            if (trainable) {
                auto ps = l->params();
                for (std::size_t i = 0; i < ps.size(); ++i) {
                    b.trainable.push_back(out.back()[i]);
                    b.trainable_params.push_back(ps[i]);
                }
            }
        }
    };
    bind_group(g_layers_, train_g, b.g);
    bind_group(h_layers_, train_h, b.h);
    return b;
}

Value FlowModel::g_forward(Tape& t, Value zprime, const Binding& b, Value* logdet) const {
    Value x = zprime;
    for (std::size_t i = 0; i < g_layers_.size(); ++i)
        x = g_layers_[i]->forward(t, x, b.g[i], logdet);
    return x;
}

Value FlowModel::g_pinv(Tape& t, Value x, const Binding& b) const {
    Value z = x;
    for (std::size_t i = g_layers_.size(); i-- > 0;)
        z = g_layers_[i]->inverse(t, z, b.g[i], nullptr);
    return z;
}

Value FlowModel::h_forward(Tape& t, Value z, const Binding& b, Value* logdet) const {
    Value x = z;
    for (std::size_t i = 0; i < h_layers_.size(); ++i)
        x = h_layers_[i]->forward(t, x, b.h[i], logdet);
    return x;
}

Value FlowModel::h_inverse(Tape& t, Value zprime, const Binding& b, Value* logdet_inv) const {
    Value z = zprime;
    for (std::size_t i = h_layers_.size(); i-- > 0;)
        z = h_layers_[i]->inverse(t, z, b.h[i], logdet_inv);
    return z;
}

Value FlowModel::f_forward(Tape& t, Value z, const Binding& b, Value* logdet) const {
    int bs = z.shape()[0];
    Value z4 = g::reshape(z, {bs, 4, 4, 4});
    Value zprime = h_forward(t, z4, b, logdet);
    return g_forward(t, zprime, b, logdet);
}

namespace {
Array run_eval(const FlowModel& model, const Array& in, int bs, Shape in_shape,
               double* logdet, int mode) {
    // mode: 0 g_forward, 1 g_pinv, 2 h_forward, 3 h_inverse
    Tape t;
    auto& m = const_cast<FlowModel&>(model);  // binding without training is non-mutating
    auto b = m.bind(t, false, false);
    Value x = t.leaf(in, std::move(in_shape), false);
    Value ld = t.constant(0.0);
    Value out;
    switch (mode) {
        case 0: out = m.g_forward(t, x, b, logdet ? &ld : nullptr); break;
        case 1: out = m.g_pinv(t, x, b); break;
        case 2: out = m.h_forward(t, x, b, logdet ? &ld : nullptr); break;
        default: out = m.h_inverse(t, x, b, logdet ? &ld : nullptr); break;
    }
    if (logdet) *logdet = ld.scalar();
    return out.data();
}
}  // namespace

Array FlowModel::g_forward_eval(const Array& zprime, int bs, double* logdet) const {
    return run_eval(*this, zprime, bs, {bs, 4, 4, 4}, logdet, 0);
}

Array FlowModel::g_pinv_eval(const Array& x, int bs) const {
    return run_eval(*this, x, bs, {bs, 1, cfg_.n, cfg_.n}, nullptr, 1);
}

Array FlowModel::h_forward_eval(const Array& z, int bs, double* logdet) const {
    return run_eval(*this, z, bs, {bs, 4, 4, 4}, logdet, 2);
}

Array FlowModel::h_inverse_eval(const Array& zprime, int bs, double* logdet_inv) const {
    return run_eval(*this, zprime, bs, {bs, 4, 4, 4}, logdet_inv, 3);
}

void FlowModel::initialize_actnorms(const Array& batch, int bs) {
    // g actnorms: normalize forward activations starting from z' = g^+(x)
    Array zprime = g_pinv_eval(batch, bs);
    {
        Tape t;
        auto b = bind(t, false, false);
        Value x = t.leaf(zprime, {bs, 4, 4, 4}, false);
        for (std::size_t i = 0; i < g_layers_.size(); ++i) {
            if (g_layers_[i]->is_actnorm()) {
                g_layers_[i]->init_from_batch(x.data(), bs);
                b.g[i] = g_layers_[i]->bind(t, false);  // rebind updated params
            }
            x = g_layers_[i]->forward(t, x, b.g[i], nullptr);
        }
    }
    // h actnorms: data flows through h^{-1}; normalize in that direction
    zprime = g_pinv_eval(batch, bs);
    {
        Tape t;
        auto b = bind(t, false, false);
        Value x = t.leaf(zprime, {bs, 4, 4, 4}, false);
        for (std::size_t i = h_layers_.size(); i-- > 0;) {
            if (h_layers_[i]->is_actnorm()) {
                auto* an = static_cast<ActNorm*>(h_layers_[i].get());
                an->init_from_batch_inverse(x.data(), bs);
                b.h[i] = h_layers_[i]->bind(t, false);
            }
            x = h_layers_[i]->inverse(t, x, b.h[i], nullptr);
        }
    }
}

std::vector<std::pair<std::string, Array*>> FlowModel::named_params() {
    std::vector<std::pair<std::string, Array*>> out;
    auto walk = [&](const char* grp, std::vector<std::unique_ptr<Layer>>& layers) {
        for (std::size_t i = 0; i < layers.size(); ++i) {
            auto ps = layers[i]->params();
            auto names = layers[i]->param_names();
            for (std::size_t j = 0; j < ps.size(); ++j)
                out.emplace_back(std::string(grp) + "." + std::to_string(i) + "." + names[j],
                                 ps[j]);
        }
    };
    walk("g", g_layers_);
    walk("h", h_layers_);
    return out;
}

std::vector<Array*> FlowModel::gamma_params() {
    std::vector<Array*> out;
    for (auto& l : g_layers_)
        for (Array* p : l->params()) out.push_back(p);
    return out;
}

std::vector<Array*> FlowModel::eta_params() {
    std::vector<Array*> out;
    for (auto& l : h_layers_)
        for (Array* p : l->params()) out.push_back(p);
    return out;
}

// ---- spec-level wrappers -----------------------------------------------------

physics::ContrastGrid flow_forward(const FlowModel& model, const Array& z) {
    if (!z.isFinite().all()) throw std::invalid_argument("flow_forward: non-finite latent");
    Array zprime = model.h_forward_eval(z, 1);
    Array x01 = model.g_forward_eval(zprime, 1);
    physics::ContrastGrid out;
    out.n = model.data_n();
    out.values = x01 * model.chi_max();
    return out;
}

Array injective_pseudo_inverse(const FlowModel& model, const physics::ContrastGrid& x) {
    Array x01 = x.values / model.chi_max();
    return model.g_pinv_eval(x01, 1);
}

physics::ContrastGrid project(const FlowModel& model, const physics::ContrastGrid& x) {
    Array zprime = injective_pseudo_inverse(model, x);
    Array x01 = model.g_forward_eval(zprime, 1);
    physics::ContrastGrid out;
    out.n = model.data_n();
    out.values = x01 * model.chi_max();
    return out;
}

Array bijective_inverse(const FlowModel& model, const Array& zprime) {
    return model.h_inverse_eval(zprime, 1);
}

double log_prob(const FlowModel& model, const physics::ContrastGrid& x) {
    Array zprime = injective_pseudo_inverse(model, x);
    Array z = model.h_inverse_eval(zprime, 1);
    double logdet = 0.0;
    model.h_forward_eval(z, 1, &logdet);
    double ld_g = 0.0;
    model.g_forward_eval(zprime, 1, &ld_g);
    logdet += ld_g;
    const int d = model.latent_dim();
    double logpz = -0.5 * z.square().sum() - 0.5 * d * std::log(2.0 * M_PI);
    return logpz - logdet;
}

std::vector<physics::ContrastGrid> sample(const FlowModel& model, int count,
                                          std::uint64_t seed) {
    sf::NormalRng rng(seed);
    std::vector<physics::ContrastGrid> out;
    out.reserve(count);
    for (int i = 0; i < count; ++i) {
        Array z(model.latent_dim());
        for (int j = 0; j < z.size(); ++j) z(j) = rng.normal();
        out.push_back(flow_forward(model, z));
    }
    return out;
}

}  // namespace sf::flow
