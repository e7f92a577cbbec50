#pragma once

#include "scatterflow/flow.hpp"
#include "scatterflow/physics.hpp"

#include <cstdint>
#include <vector>

namespace sf::inv {

using grad::Array;

struct InversionConfig {
    enum class Method { Lso, Dso };
    enum class Init { Mog, Bp };

    Method method = Method::Lso;
    Init init = Init::Mog;
    double lambda = 0.0;     // prior weight
    double tv_weight = 0.0;
    double lr = 0.05;
    int iters = 300;
    std::uint64_t seed = 0;
    bool early_stop = true;  // stop when misfit plateaus
    physics::SolveOptions solve;

    void validate() const;  // throws std::invalid_argument
};

struct MapResult {
    physics::ContrastGrid x_map;
    Array z_map;                     // latent point (lso only)
    std::vector<double> loss_trace;  // data misfit per iteration
    double wall_time = 0.0;          // seconds
};

// Latent-space MAP: Adam over z on
//   0.5 ||y - A(f(z))||^2 + lambda (0.5||z||^2 + logdet f) + tv_weight TV(f(z))
MapResult lso(const physics::ScatteredFields& y, const flow::FlowModel& model,
              const physics::GreenOperators& greens, const InversionConfig& cfg);

// Data-space MAP: Adam over x on
//   0.5 ||y - A(P(x))||^2 - lambda log p(P(x)) + tv_weight TV(x)
// with P = g . g^+ the manifold projection; output clamped to >= 0.
MapResult dso(const physics::ScatteredFields& y, const flow::FlowModel& model,
              const physics::GreenOperators& greens, const InversionConfig& cfg);

MapResult invert(const physics::ScatteredFields& y, const flow::FlowModel& model,
                 const physics::GreenOperators& greens, const InversionConfig& cfg);

}  // namespace sf::inv
