#pragma once

#include "scatterflow/inversion.hpp"
#include "scatterflow/physics.hpp"
#include "scatterflow/posterior.hpp"
#include "scatterflow/training.hpp"

#include <string>

namespace sf::cfg {

struct Seeds {
    std::uint64_t dataset = 0;
    std::uint64_t noise = 0;
    std::uint64_t train = 0;
    std::uint64_t inversion = 0;
    std::uint64_t posterior = 0;
};

// Phantom source for `simulate`.
struct PhantomSpec {
    enum class Kind { Zero, Pgm, Dataset, Cylinder };
    Kind kind = Kind::Cylinder;
    std::string path;        // pgm
    int index = 0;           // dataset sample index
    double eps_r = 2.0;      // cylinder
    double radius_frac = 0.3;  // cylinder radius as a fraction of D/2
    double chi_max = 3.0;    // scales [0,1] images to contrast
};

// Input/output artifact paths used by the commands.
struct Paths {
    std::string dataset;      // container with training images
    std::string checkpoint;   // trained flow
    std::string measurement;  // scattered-field container
    std::string map_result;   // inversion output container
    std::string image;        // eval: image under test (pgm or container)
    std::string reference;    // eval: reference image
};

struct PosteriorSection {
    double beta = 0.05;
    int k_samples = 25;
    double lr = 0.01;
    int iters = 200;
    int count = 25;  // samples drawn for the mmse/uq maps
};

struct ExperimentConfig {
    physics::SensingConfig sensing;
    train::DatasetSpec dataset;
    flow::FlowConfig flow;
    train::TrainConfig train;
    inv::InversionConfig inversion;
    PosteriorSection posterior;
    PhantomSpec phantom;
    Paths paths;
    Seeds seeds;
    std::string output_dir = "out";
    std::string raw_json;  // canonical echo of the parsed document
};

// Parses and validates a JSON config. Unknown keys are rejected; errors carry
// a JSON-pointer-style path to the offending key.
ExperimentConfig parse_config(const std::string& path);
ExperimentConfig parse_config_text(const std::string& text, const std::string& origin);

// "--seed-override k=v" with k in {dataset, noise, train, inversion, posterior}
void apply_seed_override(ExperimentConfig& cfg, const std::string& kv);

}  // namespace sf::cfg
