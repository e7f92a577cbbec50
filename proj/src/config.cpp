#include "scatterflow/config.hpp"

#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace sf::cfg {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& path, const std::string& msg) {
    throw std::invalid_argument("config: " + path + ": " + msg);
}

void check_keys(const json& obj, const std::string& path,
                const std::set<std::string>& allowed) {
    if (!obj.is_object()) fail(path, "expected an object");
    for (auto it = obj.begin(); it != obj.end(); ++it)
        if (!allowed.count(it.key())) fail(path + "/" + it.key(), "unknown key");
}

template <typename T>
void read(const json& obj, const std::string& path, const std::string& key, T& out) {
    if (!obj.contains(key)) return;
    try {
        out = obj.at(key).get<T>();
    } catch (const json::exception& e) {
        fail(path + "/" + key, e.what());
    }
}

void parse_sensing(const json& j, const std::string& p, physics::SensingConfig& s) {
    check_keys(j, p, {"n", "d_len", "freq", "n_inc", "n_rec", "radius", "snr_db"});
    read(j, p, "n", s.n);
    read(j, p, "d_len", s.d_len);
    read(j, p, "freq", s.freq);
    read(j, p, "n_inc", s.n_inc);
    read(j, p, "n_rec", s.n_rec);
    read(j, p, "radius", s.radius);
    if (j.contains("snr_db")) {
        const json& v = j.at("snr_db");
        if (v.is_string() && v.get<std::string>() == "off")
            s.snr_db = physics::kSnrOff;
        else if (v.is_number())
            s.snr_db = v.get<double>();
        else
            fail(p + "/snr_db", "expected a number or \"off\"");
    }
    try {
        s.validate();
    } catch (const std::exception& e) {
        fail(p, e.what());
    }
}

void parse_dataset(const json& j, const std::string& p, train::DatasetSpec& d) {
    check_keys(j, p, {"kind", "count", "n", "chi_max", "path"});
    if (j.contains("kind")) {
        std::string k = j.at("kind").get<std::string>();
        if (k == "ellipses")
            d.kind = train::DatasetSpec::Kind::Ellipses;
        else if (k == "mnist-idx")
            d.kind = train::DatasetSpec::Kind::MnistIdx;
        else if (k == "image-dir")
            d.kind = train::DatasetSpec::Kind::ImageDir;
        else
            fail(p + "/kind", "expected ellipses|mnist-idx|image-dir, got " + k);
    }
    read(j, p, "count", d.count);
    read(j, p, "n", d.n);
    read(j, p, "chi_max", d.chi_max);
    read(j, p, "path", d.path);
    if (d.count < 1) fail(p + "/count", "must be >= 1");
    if (d.kind != train::DatasetSpec::Kind::Ellipses && d.path.empty())
        fail(p + "/path", "required for this dataset kind");
}

void parse_flow(const json& j, const std::string& p, flow::FlowConfig& f) {
    check_keys(j, p, {"n", "latent", "bij_per_inj", "h_blocks", "hidden", "chi_max", "seed"});
    read(j, p, "n", f.n);
    read(j, p, "latent", f.latent);
    read(j, p, "bij_per_inj", f.bij_per_inj);
    read(j, p, "h_blocks", f.h_blocks);
    read(j, p, "hidden", f.hidden);
    read(j, p, "chi_max", f.chi_max);
    read(j, p, "seed", f.seed);
}

void parse_train(const json& j, const std::string& p, train::TrainConfig& t) {
    check_keys(j, p, {"phase1_epochs", "phase2_epochs", "batch_size", "lr_phase1", "lr_phase2",
                      "cosine_decay", "verbose"});
    read(j, p, "phase1_epochs", t.phase1_epochs);
    read(j, p, "phase2_epochs", t.phase2_epochs);
    read(j, p, "batch_size", t.batch_size);
    read(j, p, "lr_phase1", t.lr_phase1);
    read(j, p, "lr_phase2", t.lr_phase2);
    read(j, p, "cosine_decay", t.cosine_decay);
    read(j, p, "verbose", t.verbose);
}

void parse_inversion(const json& j, const std::string& p, inv::InversionConfig& c) {
    check_keys(j, p, {"method", "init", "lambda", "tv_weight", "lr", "iters", "early_stop",
                      "solver", "tol", "max_iters"});
    if (j.contains("method")) {
        std::string m = j.at("method").get<std::string>();
        if (m == "lso")
            c.method = inv::InversionConfig::Method::Lso;
        else if (m == "dso")
            c.method = inv::InversionConfig::Method::Dso;
        else
            fail(p + "/method", "expected lso|dso, got " + m);
    }
    if (j.contains("init")) {
        std::string m = j.at("init").get<std::string>();
        if (m == "mog")
            c.init = inv::InversionConfig::Init::Mog;
        else if (m == "bp")
            c.init = inv::InversionConfig::Init::Bp;
        else
            fail(p + "/init", "expected mog|bp, got " + m);
    }
    read(j, p, "lambda", c.lambda);
    read(j, p, "tv_weight", c.tv_weight);
    read(j, p, "lr", c.lr);
    read(j, p, "iters", c.iters);
    read(j, p, "early_stop", c.early_stop);
    if (j.contains("solver")) {
        std::string m = j.at("solver").get<std::string>();
        if (m == "direct")
            c.solve.method = physics::SolveMethod::Direct;
        else if (m == "iterative")
            c.solve.method = physics::SolveMethod::Iterative;
        else
            fail(p + "/solver", "expected direct|iterative, got " + m);
    }
    read(j, p, "tol", c.solve.tol);
    read(j, p, "max_iters", c.solve.max_iters);
    try {
        c.validate();
    } catch (const std::exception& e) {
        fail(p, e.what());
    }
}

void parse_posterior(const json& j, const std::string& p, PosteriorSection& c) {
    check_keys(j, p, {"beta", "k_samples", "lr", "iters", "count"});
    read(j, p, "beta", c.beta);
    read(j, p, "k_samples", c.k_samples);
    read(j, p, "lr", c.lr);
    read(j, p, "iters", c.iters);
    read(j, p, "count", c.count);
    if (c.beta < 0.0) fail(p + "/beta", "must be >= 0");
    if (c.k_samples < 1) fail(p + "/k_samples", "must be >= 1");
}

void parse_phantom(const json& j, const std::string& p, PhantomSpec& c) {
    check_keys(j, p, {"kind", "path", "index", "eps_r", "radius_frac", "chi_max"});
    if (j.contains("kind")) {
        std::string k = j.at("kind").get<std::string>();
        if (k == "zero")
            c.kind = PhantomSpec::Kind::Zero;
        else if (k == "pgm")
            c.kind = PhantomSpec::Kind::Pgm;
        else if (k == "dataset")
            c.kind = PhantomSpec::Kind::Dataset;
        else if (k == "cylinder")
            c.kind = PhantomSpec::Kind::Cylinder;
        else
            fail(p + "/kind", "expected zero|pgm|dataset|cylinder, got " + k);
    }
    read(j, p, "path", c.path);
    read(j, p, "index", c.index);
    read(j, p, "eps_r", c.eps_r);
    read(j, p, "radius_frac", c.radius_frac);
    read(j, p, "chi_max", c.chi_max);
    if (c.kind == PhantomSpec::Kind::Pgm && c.path.empty())
        fail(p + "/path", "required for kind=pgm");
    if (c.eps_r < 1.0) fail(p + "/eps_r", "must be >= 1");
    if (c.radius_frac <= 0.0 || c.radius_frac > 1.0)
        fail(p + "/radius_frac", "must be in (0, 1]");
}

void parse_paths(const json& j, const std::string& p, Paths& c) {
    check_keys(j, p, {"dataset", "checkpoint", "measurement", "map_result", "image",
                      "reference"});
    read(j, p, "dataset", c.dataset);
    read(j, p, "checkpoint", c.checkpoint);
    read(j, p, "measurement", c.measurement);
    read(j, p, "map_result", c.map_result);
    read(j, p, "image", c.image);
    read(j, p, "reference", c.reference);
}

void parse_seeds(const json& j, const std::string& p, Seeds& s) {
    check_keys(j, p, {"dataset", "noise", "train", "inversion", "posterior"});
    read(j, p, "dataset", s.dataset);
    read(j, p, "noise", s.noise);
    read(j, p, "train", s.train);
    read(j, p, "inversion", s.inversion);
    read(j, p, "posterior", s.posterior);
}

}  // namespace

ExperimentConfig parse_config_text(const std::string& text, const std::string& origin) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw std::invalid_argument("config: " + origin + ": " + e.what());
    }
    check_keys(j, "", {"sensing", "dataset", "flow", "train", "inversion", "posterior",
                       "phantom", "paths", "seeds", "output_dir"});
    ExperimentConfig cfg;
    if (j.contains("sensing")) parse_sensing(j.at("sensing"), "/sensing", cfg.sensing);
    if (j.contains("dataset")) parse_dataset(j.at("dataset"), "/dataset", cfg.dataset);
    if (j.contains("flow")) parse_flow(j.at("flow"), "/flow", cfg.flow);
    if (j.contains("train")) parse_train(j.at("train"), "/train", cfg.train);
    if (j.contains("inversion")) parse_inversion(j.at("inversion"), "/inversion", cfg.inversion);
    if (j.contains("posterior")) parse_posterior(j.at("posterior"), "/posterior", cfg.posterior);
    if (j.contains("phantom")) parse_phantom(j.at("phantom"), "/phantom", cfg.phantom);
    if (j.contains("paths")) parse_paths(j.at("paths"), "/paths", cfg.paths);
    if (j.contains("seeds")) parse_seeds(j.at("seeds"), "/seeds", cfg.seeds);
    read(j, "", "output_dir", cfg.output_dir);
    cfg.raw_json = text;
    return cfg;
}

ExperimentConfig parse_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::invalid_argument("config: cannot open " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_config_text(buf.str(), path);
}

void apply_seed_override(ExperimentConfig& cfg, const std::string& kv) {
    auto eq = kv.find('=');
    if (eq == std::string::npos)
        throw std::invalid_argument("seed override: expected k=v, got " + kv);
    std::string key = kv.substr(0, eq);
    std::uint64_t value = 0;
    try {
        value = std::stoull(kv.substr(eq + 1));
    } catch (const std::exception&) {
        throw std::invalid_argument("seed override: bad value in " + kv);
    }
    if (key == "dataset")
        cfg.seeds.dataset = value;
    else if (key == "noise")
        cfg.seeds.noise = value;
    else if (key == "train")
        cfg.seeds.train = value;
    else if (key == "inversion")
        cfg.seeds.inversion = value;
    else if (key == "posterior")
        cfg.seeds.posterior = value;
    else
        throw std::invalid_argument(
            "seed override: key must be one of dataset|noise|train|inversion|posterior, got " +
            key);
}

}  // namespace sf::cfg
