#include "scatterflow/container.hpp"
#include "scatterflow/training.hpp"

#include <stdexcept>

namespace sf::train {

void save_checkpoint(flow::FlowModel& model, const std::string& path) {
    const auto& cfg = model.config();
    io::Container c;
    c.put_string("format", "scatterflow-flow-checkpoint");
    c.put_scalar("n", cfg.n);
    c.put_scalar("latent", cfg.latent);
    c.put_scalar("bij_per_inj", cfg.bij_per_inj);
    c.put_scalar("h_blocks", cfg.h_blocks);
    c.put_scalar("hidden", cfg.hidden);
    c.put_scalar("chi_max", cfg.chi_max);
    c.put_scalar("seed", static_cast<double>(cfg.seed));
    for (auto& [name, arr] : model.named_params()) {
        std::vector<double> data(arr->data(), arr->data() + arr->size());
        c.put_f64("param." + name, {static_cast<std::uint32_t>(arr->size())},
                  std::move(data));
    }
    c.save(path);
}

flow::FlowModel load_checkpoint(const std::string& path) {
    io::Container c = io::Container::load(path);
    if (!c.has("format") || c.get_string("format") != "scatterflow-flow-checkpoint")
        throw std::runtime_error("load_checkpoint: not a flow checkpoint: " + path);
    flow::FlowConfig cfg;
    cfg.n = static_cast<int>(c.get_scalar("n"));
    cfg.latent = static_cast<int>(c.get_scalar("latent"));
    cfg.bij_per_inj = static_cast<int>(c.get_scalar("bij_per_inj"));
    cfg.h_blocks = static_cast<int>(c.get_scalar("h_blocks"));
    cfg.hidden = static_cast<int>(c.get_scalar("hidden"));
    cfg.chi_max = c.get_scalar("chi_max");
    cfg.seed = static_cast<std::uint64_t>(c.get_scalar("seed"));
    flow::FlowModel model(cfg);
    for (auto& [name, arr] : model.named_params()) {
        const std::string key = "param." + name;
        if (!c.has(key))
            throw std::runtime_error("load_checkpoint: missing parameter " + name);
        const auto& e = c.get(key);
        if (static_cast<Eigen::Index>(e.f64.size()) != arr->size())
            throw std::runtime_error("load_checkpoint: shape mismatch for " + name +
                                     ": expected " + std::to_string(arr->size()) + ", got " +
                                     std::to_string(e.f64.size()));
        *arr = Eigen::Map<const Array>(e.f64.data(), arr->size());
    }
    return model;
}

}  // namespace sf::train
