#include "scatterflow/posterior.hpp"

#include "scatterflow/rng.hpp"

#include <cmath>

#include "doctest.h"

using namespace sf;
using grad::Array;

TEST_CASE("closed-form gaussian kl hits its anchors") {
    Array ones = Array::Ones(4), zeros = Array::Zero(4);
    CHECK(post::kl_gaussian(ones, zeros) == doctest::Approx(0.0));
    Array mu = zeros;
    mu[0] = 2.0;
    CHECK(post::kl_gaussian(ones, mu) == doctest::Approx(2.0));
    Array bad = ones;
    bad[2] = 0.0;
    CHECK_THROWS(post::kl_gaussian(bad, zeros));
    // nonnegative on random parameters
    sf::NormalRng rng(5);
    for (int t = 0; t < 20; ++t) {
        Array s(4), m(4);
        for (int i = 0; i < 4; ++i) {
            s[i] = rng.uniform(0.2, 3.0);
            m[i] = rng.normal();
        }
        CHECK(post::kl_gaussian(s, m) >= 0.0);
    }
}

TEST_CASE("closed-form kl matches a monte-carlo estimate") {
    sf::NormalRng rng(17);
    Array sigma(4), mu(4);
    for (int i = 0; i < 4; ++i) {
        sigma[i] = rng.uniform(0.5, 2.0);
        mu[i] = rng.uniform(-1.0, 1.0);
    }
    double exact = post::kl_gaussian(sigma, mu);

    const int draws = 1000000;
    double s = 0.0, s2 = 0.0;
    for (int d = 0; d < draws; ++d) {
        double term = 0.0;
        for (int i = 0; i < 4; ++i) {
            double z = mu[i] + sigma[i] * rng.normal();
            double r = (z - mu[i]) / sigma[i];
            // log q - log p per axis
            term += -0.5 * r * r - std::log(sigma[i]) + 0.5 * z * z;
        }
        s += term;
        s2 += term * term;
    }
    double mean = s / draws;
    double se = std::sqrt(std::max(0.0, s2 / draws - mean * mean) / draws);
    CHECK(std::abs(mean - exact) <= 3.0 * se);
}

TEST_CASE("kl is invariant under the injective toy map") {
    Array mu_q(2), sig_q(2), mu_p(2), sig_p(2);

    // q = p: both estimates are statistically zero
    mu_q << 0.0, 0.0;
    sig_q << 1.0, 1.0;
    post::KlCheck eq = post::kl_invariance_check(mu_q, sig_q, mu_q, sig_q, 100000, 2);
    CHECK(std::abs(eq.kl_latent) <= 3.0 * std::max(eq.se_latent, 1e-12));
    CHECK(std::abs(eq.kl_pushforward) <= 3.0 * std::max(eq.se_pushforward, 1e-12));

    // unit mean shift per axis: analytic KL = 1.0
    mu_q << 1.0, 1.0;
    mu_p << 0.0, 0.0;
    sig_p << 1.0, 1.0;
    post::KlCheck shift = post::kl_invariance_check(mu_q, sig_q, mu_p, sig_p, 100000, 3);
    CHECK(std::abs(shift.kl_latent - 1.0) <= 3.0 * shift.se_latent);
    CHECK(std::abs(shift.kl_pushforward - 1.0) <= 3.0 * shift.se_pushforward);

    // random pairs: latent and pushforward estimates agree
    sf::NormalRng rng(23);
    for (int t = 0; t < 5; ++t) {
        for (int i = 0; i < 2; ++i) {
            mu_q[i] = rng.uniform(-1.0, 1.0);
            mu_p[i] = rng.uniform(-1.0, 1.0);
            sig_q[i] = rng.uniform(0.5, 1.5);
            sig_p[i] = rng.uniform(0.5, 1.5);
        }
        post::KlCheck kc =
            post::kl_invariance_check(mu_q, sig_q, mu_p, sig_p, 200000, 100 + t);
        double comb = std::sqrt(kc.se_latent * kc.se_latent +
                                kc.se_pushforward * kc.se_pushforward);
        CHECK(std::abs(kc.kl_latent - kc.kl_pushforward) <= 3.0 * comb);
    }
}

namespace {

struct PosteriorSetup {
    physics::SensingConfig sensing;
    flow::FlowModel model;
    physics::GreenOperators greens;
    Array z_map;
    physics::ScatteredFields y;

    PosteriorSetup()
        : sensing(make_sensing()), model(make_model()), greens(sensing) {
        sf::NormalRng rng(41);
        Array batch(8 * 16 * 16);
        for (int i = 0; i < batch.size(); ++i) batch[i] = rng.uniform();
        model.initialize_actnorms(batch, 8);
        z_map = Array(64);
        for (int i = 0; i < 64; ++i) z_map[i] = 0.5 * rng.normal();
        physics::ContrastGrid x = flow::flow_forward(model, z_map);
        y = physics::add_noise(physics::forward(greens, x), 30.0, 5);
    }
    static physics::SensingConfig make_sensing() {
        physics::SensingConfig s;
        s.n = 16;
        s.n_inc = 6;
        s.n_rec = 8;
        return s;
    }
    static flow::FlowModel make_model() {
        flow::FlowConfig fc;
        fc.n = 16;
        fc.hidden = 8;
        fc.h_blocks = 4;
        fc.chi_max = 2.0;
        fc.seed = 19;
        return flow::FlowModel(fc);
    }
};

}  // namespace

TEST_CASE("posterior width fitting responds to the diversity weight") {
    PosteriorSetup s;
    post::FitOptions fo;
    fo.k_samples = 6;
    fo.iters = 40;
    fo.seed = 7;
    fo.beta = 0.01;
    post::PosteriorParams lo = post::fit_sigma(s.y, s.model, s.greens, s.z_map, fo);
    fo.beta = 0.05;
    post::PosteriorParams hi = post::fit_sigma(s.y, s.model, s.greens, s.z_map, fo);
    CHECK((lo.sigma_q > 0.0).all());
    CHECK((hi.sigma_q > 0.0).all());
    CHECK(hi.sigma_q.log().mean() >= lo.sigma_q.log().mean());

    // fixed seed reproducibility
    fo.beta = 0.01;
    post::PosteriorParams again = post::fit_sigma(s.y, s.model, s.greens, s.z_map, fo);
    CHECK((again.sigma_q - lo.sigma_q).abs().maxCoeff() == 0.0);
}

TEST_CASE("uncertainty maps reduce the samples exactly") {
    PosteriorSetup s;
    post::PosteriorParams params{s.z_map, Array::Constant(64, 0.3), 0.05, 25};
    post::UqResult uq = post::sample_posterior(s.model, params, 16, 9);
    REQUIRE(uq.samples.size() == 16);

    const int cells = 16 * 16;
    Array mean = Array::Zero(cells), var = Array::Zero(cells);
    for (const auto& smp : uq.samples) mean += smp.values;
    mean /= 16.0;
    for (const auto& smp : uq.samples) var += (smp.values - mean).square();
    Array sd = (var / 16.0).sqrt();
    CHECK((uq.mmse.values - mean).abs().maxCoeff() < 1e-14);
    CHECK((uq.uq.values - sd).abs().maxCoeff() < 1e-12);
    CHECK((uq.uq.values >= 0.0).all());

    // mmse stays inside the pixel envelope of the samples
    Array lo = uq.samples[0].values, hi = uq.samples[0].values;
    for (const auto& smp : uq.samples) {
        lo = lo.min(smp.values);
        hi = hi.max(smp.values);
    }
    CHECK((uq.mmse.values >= lo - 1e-12).all());
    CHECK((uq.mmse.values <= hi + 1e-12).all());

    // degenerate gaussian collapses every sample onto the map point
    params.sigma_q = Array::Zero(64);
    post::UqResult deg = post::sample_posterior(s.model, params, 5, 11);
    Array x_map = flow::flow_forward(s.model, s.z_map).values;
    for (const auto& smp : deg.samples)
        CHECK((smp.values - x_map).abs().maxCoeff() == 0.0);
    CHECK(deg.uq.values.abs().maxCoeff() == 0.0);
}
