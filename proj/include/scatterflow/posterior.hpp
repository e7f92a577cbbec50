#pragma once

#include "scatterflow/flow.hpp"
#include "scatterflow/physics.hpp"

#include <cstdint>
#include <vector>

namespace sf::post {

using grad::Array;

// Diagonal Gaussian q(z) = N(mu_q, diag(sigma_q^2)) around the MAP latent.
struct PosteriorParams {
    Array mu_q;
    Array sigma_q;
    double beta = 0.05;
    int k_samples = 25;
};

struct UqResult {
    std::vector<physics::ContrastGrid> samples;
    physics::ContrastGrid mmse;  // pixel mean
    physics::ContrastGrid uq;    // pixel standard deviation
};

// KL(N(mu, diag(sigma^2)) || N(0, I)) = 0.5 sum(sigma^2 + mu^2 - 1 - 2 log sigma)
double kl_gaussian(const Array& sigma_q, const Array& mu_q);

struct FitOptions {
    double beta = 0.05;
    int k_samples = 25;
    double lr = 0.01;
    int iters = 200;
    std::uint64_t seed = 0;
    physics::SolveOptions solve;
    bool verbose = false;
};

// Fits sigma_q (log-parameterized, mu_q = z_map fixed) on
//   sum_k ||y - A(f(z_map + sigma ⊙ t_k))||^2 + beta sum_i (sigma_i^2 - 2 log sigma_i)
// with fresh standard-normal t_k each step.
PosteriorParams fit_sigma(const physics::ScatteredFields& y, const flow::FlowModel& model,
                          const physics::GreenOperators& greens, const Array& z_map,
                          const FitOptions& opts);

// Draws count latents z_map + sigma ⊙ t, decodes, and reduces to mean/std maps.
UqResult sample_posterior(const flow::FlowModel& model, const PosteriorParams& params,
                          int count, std::uint64_t seed);

// Monte-Carlo check that KL is invariant under a fixed injective map
// R^2 -> R^4 (coupling layer followed by a full-rank linear expansion):
// draws from q in latent space, evaluates both KL(q_Z||p_Z) and the
// pushforward KL(q_X||p_X) via the injective change of variables.
struct KlCheck {
    double kl_latent = 0.0;
    double kl_pushforward = 0.0;
    double se_latent = 0.0;       // standard error of the latent estimate
    double se_pushforward = 0.0;
};
KlCheck kl_invariance_check(const Array& mu_q, const Array& sigma_q, const Array& mu_p,
                            const Array& sigma_p, int n_draws, std::uint64_t seed);

}  // namespace sf::post
