#include "scatterflow/inversion.hpp"

#include "scatterflow/metrics.hpp"
#include "scatterflow/rng.hpp"

#include "doctest.h"

using namespace sf;
using grad::Array;

namespace {

// shared fixtures: a small flow (random weights, normalized activations) and
// an in-manifold measurement constructed by decoding a known latent
struct Setup {
    physics::SensingConfig sensing;
    flow::FlowModel model;
    physics::GreenOperators greens;
    Array z_true;
    physics::ContrastGrid x_true;
    physics::ScatteredFields y;

    explicit Setup(double snr_db = physics::kSnrOff)
        : sensing(make_sensing()), model(make_model()), greens(sensing) {
        sf::NormalRng rng(31);
        Array batch(8 * 16 * 16);
        for (int i = 0; i < batch.size(); ++i) batch[i] = rng.uniform();
        model.initialize_actnorms(batch, 8);
        z_true = Array(64);
        for (int i = 0; i < 64; ++i) z_true[i] = 0.4 * rng.normal();
        x_true = flow::flow_forward(model, z_true);
        y = physics::add_noise(physics::forward(greens, x_true), snr_db, 77);
    }

    static physics::SensingConfig make_sensing() {
        physics::SensingConfig s;
        s.n = 16;
        s.n_inc = 8;
        s.n_rec = 12;
        return s;
    }
    static flow::FlowModel make_model() {
        flow::FlowConfig fc;
        fc.n = 16;
        fc.hidden = 8;
        fc.h_blocks = 4;
        fc.chi_max = 2.0;
        fc.seed = 13;
        return flow::FlowModel(fc);
    }
};

}  // namespace

TEST_CASE("config validation rejects forbidden combinations") {
    inv::InversionConfig c;
    c.method = inv::InversionConfig::Method::Lso;
    c.init = inv::InversionConfig::Init::Bp;
    CHECK_THROWS(c.validate());
    c.init = inv::InversionConfig::Init::Mog;
    c.lambda = -1.0;
    CHECK_THROWS(c.validate());
    c.lambda = 0.0;
    c.validate();
}

TEST_CASE("latent optimization recovers an in-manifold target") {
    Setup s;
    inv::InversionConfig c;
    c.method = inv::InversionConfig::Method::Lso;
    c.iters = 600;
    c.early_stop = false;
    inv::MapResult res = inv::lso(s.y, s.model, s.greens, c);

    REQUIRE(!res.loss_trace.empty());
    CHECK(res.loss_trace.back() < res.loss_trace.front());
    double p = metrics::psnr(res.x_map.values, s.x_true.values, 16);
    CHECK(p >= 40.0);

    // the reconstruction sits on the learned manifold
    physics::ContrastGrid proj = flow::project(s.model, res.x_map);
    double nrm = std::max(1.0, res.x_map.values.matrix().norm());
    CHECK((proj.values - res.x_map.values).matrix().norm() / nrm <= 1e-6);

    // deterministic
    inv::MapResult res2 = inv::lso(s.y, s.model, s.greens, c);
    CHECK((res2.x_map.values - res.x_map.values).abs().maxCoeff() == 0.0);
    CHECK(res2.loss_trace == res.loss_trace);
}

TEST_CASE("data-space optimization converges from both initializations") {
    Setup s;
    inv::InversionConfig c;
    c.method = inv::InversionConfig::Method::Dso;
    c.init = inv::InversionConfig::Init::Mog;
    c.iters = 200;
    inv::MapResult mog = inv::dso(s.y, s.model, s.greens, c);
    CHECK(mog.loss_trace.back() < mog.loss_trace.front());
    CHECK((mog.x_map.values >= 0.0).all());
    double denom = std::max(1e-12, s.y.power());
    CHECK(mog.loss_trace.back() / denom < 1e-4);

    c.init = inv::InversionConfig::Init::Bp;
    c.lambda = 0.0;
    inv::MapResult bp = inv::dso(s.y, s.model, s.greens, c);
    CHECK(bp.loss_trace.back() < bp.loss_trace.front());
}

TEST_CASE("tv regularization steers the optimum toward flatter images") {
    Setup s(30.0);
    inv::InversionConfig c;
    c.method = inv::InversionConfig::Method::Lso;
    c.iters = 60;
    inv::MapResult plain = inv::lso(s.y, s.model, s.greens, c);
    c.tv_weight = 0.5;
    inv::MapResult reg = inv::lso(s.y, s.model, s.greens, c);
    double tv_plain = metrics::tv_norm(plain.x_map.values, 16).first;
    double tv_reg = metrics::tv_norm(reg.x_map.values, 16).first;
    CHECK(tv_reg <= tv_plain * 1.05);
}
