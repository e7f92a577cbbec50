#pragma once

#include "scatterflow/flow.hpp"

#include <string>
#include <vector>

namespace sf::train {

using grad::Array;

struct DatasetSpec {
    enum class Kind { Ellipses, MnistIdx, ImageDir };
    Kind kind = Kind::Ellipses;
    int count = 2000;
    int n = 32;
    double chi_max = 3.0;  // eps_r,max - 1; applied at use time, data stays in [0,1]
    std::uint64_t seed = 0;
    std::string path;  // MnistIdx / ImageDir source
};

struct Dataset {
    int n = 0;
    std::vector<Array> images;  // each n*n, values in [0,1]

    std::size_t size() const { return images.size(); }
};

// Superpositions of 4 random rotated ellipses (overlaps take max).
Dataset gen_ellipses(const DatasetSpec& spec);

// Standard IDX image file (magic 0x00000803, 28x28), bilinear-resized to n.
Dataset load_mnist_idx(const std::string& path, int n = 32);

// Directory of P5 PGM files, resized to n.
Dataset load_image_dir(const std::string& dir, int n);

Dataset load_dataset(const DatasetSpec& spec);

struct TrainConfig {
    int phase1_epochs = 30;
    int phase2_epochs = 30;
    int batch_size = 64;
    double lr_phase1 = 1e-3;
    double lr_phase2 = 1e-3;
    std::uint64_t seed = 0;
    bool cosine_decay = true;
    bool verbose = false;
};

// Phase 1: projection MSE over the injective subnetwork (gamma only).
// Returns per-epoch mean loss.
std::vector<double> train_phase1(flow::FlowModel& model, const Dataset& data,
                                 const TrainConfig& cfg);

// Phase 2: maximum likelihood over the bijective subnetwork (eta only).
// Returns per-epoch mean negative log-likelihood (nats per sample).
std::vector<double> train_phase2(flow::FlowModel& model, const Dataset& data,
                                 const TrainConfig& cfg);

void save_checkpoint(flow::FlowModel& model, const std::string& path);
flow::FlowModel load_checkpoint(const std::string& path);

}  // namespace sf::train
