#include "scatterflow/config.hpp"
#include "scatterflow/container.hpp"
#include "scatterflow/inversion.hpp"
#include "scatterflow/metrics.hpp"
#include "scatterflow/pgm.hpp"
#include "scatterflow/physics.hpp"
#include "scatterflow/posterior.hpp"
#include "scatterflow/training.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "CLI11.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace fs = std::filesystem;
using namespace sf;

namespace {

using Array = Eigen::ArrayXd;

void cap_threads() {
#ifdef _OPENMP
    if (const char* env = std::getenv("SCATTERFLOW_THREADS")) {
        int k = std::atoi(env);
        if (k > 0) omp_set_num_threads(k);
    }
#endif
}

void write_metrics_json(const std::string& path, const std::vector<std::pair<std::string, double>>& kv) {
    std::ofstream out(path);
    out << "{\n";
    for (std::size_t i = 0; i < kv.size(); ++i) {
        out << "  \"" << kv[i].first << "\": ";
        if (std::isfinite(kv[i].second))
            out << kv[i].second;
        else
            out << "\"inf\"";
        out << (i + 1 < kv.size() ? ",\n" : "\n");
    }
    out << "}\n";
}

void write_csv_grid(const std::string& path, const Array& grid, int n) {
    std::ofstream out(path);
    out.precision(17);
    for (int r = 0; r < n; ++r) {
        for (int c = 0; c < n; ++c) out << grid[r * n + c] << (c + 1 < n ? "," : "\n");
    }
}

std::vector<double> to_vec(const Array& a) { return {a.data(), a.data() + a.size()}; }

physics::ContrastGrid build_phantom(const cfg::ExperimentConfig& conf) {
    const int n = conf.sensing.n;
    using Kind = cfg::PhantomSpec::Kind;
    const auto& ph = conf.phantom;
    switch (ph.kind) {
        case Kind::Zero:
            return physics::ContrastGrid::zeros(n);
        case Kind::Cylinder: {
            physics::ContrastGrid chi = physics::ContrastGrid::zeros(n);
            double rad = ph.radius_frac * 0.5 * conf.sensing.d_len;
            for (int r = 0; r < n; ++r)
                for (int c = 0; c < n; ++c) {
                    double x = conf.sensing.cell_x(c), y = conf.sensing.cell_y(r);
                    if (x * x + y * y <= rad * rad) chi.values[r * n + c] = ph.eps_r - 1.0;
                }
            return chi;
        }
        case Kind::Pgm: {
            int w = 0, h = 0;
            std::vector<double> img = io::read_pgm(ph.path, &w, &h);
            if (w != n || h != n)
                throw std::invalid_argument("phantom: pgm is " + std::to_string(w) + "x" +
                                            std::to_string(h) + ", sensing grid is " +
                                            std::to_string(n));
            physics::ContrastGrid chi{n, Eigen::Map<const Array>(img.data(), n * n) * ph.chi_max};
            return chi;
        }
        case Kind::Dataset: {
            train::DatasetSpec spec = conf.dataset;
            spec.seed = conf.seeds.dataset;
            spec.n = n;
            train::Dataset data = train::load_dataset(spec);
            if (ph.index < 0 || ph.index >= static_cast<int>(data.size()))
                throw std::invalid_argument("phantom: dataset index out of range");
            return {n, data.images[ph.index] * ph.chi_max};
        }
    }
    throw std::logic_error("phantom: unreachable");
}

Array load_image_any(const std::string& path, int* n_out) {
    if (path.size() > 4 && path.substr(path.size() - 4) == ".pgm") {
        int w = 0, h = 0;
        std::vector<double> img = io::read_pgm(path, &w, &h);
        if (w != h) throw std::invalid_argument("eval: expected a square image: " + path);
        *n_out = w;
        return Eigen::Map<const Array>(img.data(), w * h);
    }
    io::Container c = io::Container::load(path);
    for (const char* name : {"x_map", "chi", "image"}) {
        if (!c.has(name)) continue;
        const auto& e = c.get(name);
        int n = static_cast<int>(e.dims.at(0));
        *n_out = n;
        return Eigen::Map<const Array>(e.f64.data(), n * n);
    }
    throw std::invalid_argument("eval: no image entry (x_map/chi/image) in " + path);
}

// -- commands -----------------------------------------------------------------

int cmd_simulate(const cfg::ExperimentConfig& conf, const std::string& out_dir) {
    physics::ContrastGrid chi = build_phantom(conf);
    physics::GreenOperators greens(conf.sensing);
    physics::ScatteredFields clean = physics::forward(greens, chi);
    physics::ScatteredFields noisy =
        physics::add_noise(clean, conf.sensing.snr_db, conf.seeds.noise);

    const int n = conf.sensing.n;
    io::Container c;
    c.put_f64("chi", {static_cast<std::uint32_t>(n), static_cast<std::uint32_t>(n)},
              to_vec(chi.values));
    std::vector<std::complex<double>> es(noisy.values.data(),
                                         noisy.values.data() + noisy.values.size());
    c.put_c128("e_scat",
               {static_cast<std::uint32_t>(noisy.values.rows()),
                static_cast<std::uint32_t>(noisy.values.cols())},
               es);
    c.put_string("config", conf.raw_json);
    c.save(out_dir + "/measurement.scpr");
    io::export_pgm(to_vec(chi.values), n, out_dir + "/phantom.pgm", 0.0,
                   std::max(1e-12, chi.values.maxCoeff()));
    std::printf("simulate: n=%d tx=%d rx=%d |e_scat|^2=%.6g -> %s/measurement.scpr\n", n,
                conf.sensing.n_inc, conf.sensing.n_rec, noisy.power(), out_dir.c_str());
    return 0;
}

int cmd_make_dataset(const cfg::ExperimentConfig& conf, const std::string& out_dir) {
    train::DatasetSpec spec = conf.dataset;
    spec.seed = conf.seeds.dataset;
    train::Dataset data = train::load_dataset(spec);
    io::Container c;
    std::vector<double> flat;
    flat.reserve(data.size() * data.n * data.n);
    for (const Array& img : data.images)
        flat.insert(flat.end(), img.data(), img.data() + img.size());
    c.put_f64("images",
              {static_cast<std::uint32_t>(data.size()), static_cast<std::uint32_t>(data.n),
               static_cast<std::uint32_t>(data.n)},
              std::move(flat));
    c.put_string("config", conf.raw_json);
    c.save(out_dir + "/dataset.scpr");
    io::export_pgm(to_vec(data.images[0]), data.n, out_dir + "/sample0.pgm", 0.0, 1.0);
    std::printf("make-dataset: %zu images of %dx%d -> %s/dataset.scpr\n", data.size(), data.n,
                data.n, out_dir.c_str());
    return 0;
}

train::Dataset load_dataset_container(const std::string& path) {
    io::Container c = io::Container::load(path);
    const auto& e = c.get("images");
    train::Dataset data;
    data.n = static_cast<int>(e.dims.at(1));
    int count = static_cast<int>(e.dims.at(0));
    int cells = data.n * data.n;
    for (int i = 0; i < count; ++i)
        data.images.emplace_back(Eigen::Map<const Array>(e.f64.data() + i * cells, cells));
    return data;
}

int cmd_train(const cfg::ExperimentConfig& conf, const std::string& out_dir) {
    train::Dataset data;
    if (!conf.paths.dataset.empty()) {
        data = load_dataset_container(conf.paths.dataset);
    } else {
        train::DatasetSpec spec = conf.dataset;
        spec.seed = conf.seeds.dataset;
        data = train::load_dataset(spec);
    }
    flow::FlowConfig fc = conf.flow;
    fc.n = data.n;
    flow::FlowModel model(fc);
    train::TrainConfig tc = conf.train;
    tc.seed = conf.seeds.train;
    std::vector<double> l1 = train::train_phase1(model, data, tc);
    std::vector<double> l2 = train::train_phase2(model, data, tc);
    train::save_checkpoint(model, out_dir + "/flow.scpr");
    std::ofstream csv(out_dir + "/train_loss.csv");
    csv << "phase,epoch,loss\n";
    for (std::size_t i = 0; i < l1.size(); ++i) csv << "1," << i << "," << l1[i] << "\n";
    for (std::size_t i = 0; i < l2.size(); ++i) csv << "2," << i << "," << l2[i] << "\n";
    std::printf("train: %zu images, phase1 mse %.6f, phase2 nll %.4f -> %s/flow.scpr\n",
                data.size(), l1.back(), l2.back(), out_dir.c_str());
    return 0;
}

struct Measurement {
    physics::ScatteredFields y;
    Array chi_true;  // empty if absent
    int n = 0;
};

Measurement load_measurement(const std::string& path) {
    io::Container c = io::Container::load(path);
    const auto& e = c.get("e_scat");
    Measurement m;
    auto data = c.get_c128("e_scat");
    m.y.values = Eigen::Map<const physics::CMat>(data.data(), e.dims.at(0), e.dims.at(1));
    if (c.has("chi")) {
        const auto& ce = c.get("chi");
        m.n = static_cast<int>(ce.dims.at(0));
        m.chi_true = Eigen::Map<const Array>(ce.f64.data(), m.n * m.n);
    }
    return m;
}

int cmd_invert(const cfg::ExperimentConfig& conf, const std::string& out_dir) {
    if (conf.paths.checkpoint.empty() || conf.paths.measurement.empty())
        throw std::invalid_argument("invert: paths.checkpoint and paths.measurement required");
    flow::FlowModel model = train::load_checkpoint(conf.paths.checkpoint);
    Measurement meas = load_measurement(conf.paths.measurement);
    physics::GreenOperators greens(conf.sensing);
    inv::InversionConfig ic = conf.inversion;
    ic.seed = conf.seeds.inversion;
    inv::MapResult res = inv::invert(meas.y, model, greens, ic);

    const int n = res.x_map.n;
    io::Container c;
    c.put_f64("x_map", {static_cast<std::uint32_t>(n), static_cast<std::uint32_t>(n)},
              to_vec(res.x_map.values));
    if (res.z_map.size() > 0)
        c.put_f64("z_map", {static_cast<std::uint32_t>(res.z_map.size())}, to_vec(res.z_map));
    c.put_f64("loss_trace", {static_cast<std::uint32_t>(res.loss_trace.size())},
              res.loss_trace);
    c.put_string("config", conf.raw_json);
    c.save(out_dir + "/map.scpr");
    io::export_pgm(to_vec(res.x_map.values), n, out_dir + "/x_map.pgm", 0.0,
                   std::max(1e-12, res.x_map.values.maxCoeff()));

    std::vector<std::pair<std::string, double>> kv{
        {"misfit", res.loss_trace.back()}, {"wall_time", res.wall_time}};
    if (meas.chi_true.size() == res.x_map.values.size() && meas.n == n) {
        kv.insert(kv.begin(), {"psnr", metrics::psnr(res.x_map.values, meas.chi_true, n)});
        kv.insert(kv.begin() + 1, {"ssim", metrics::ssim(res.x_map.values, meas.chi_true, n)});
    }
    write_metrics_json(out_dir + "/metrics.json", kv);
    std::printf("invert: %zu iters, final misfit %.6g -> %s/map.scpr\n", res.loss_trace.size(),
                res.loss_trace.back(), out_dir.c_str());
    return 0;
}

int cmd_posterior(const cfg::ExperimentConfig& conf, const std::string& out_dir) {
    if (conf.paths.checkpoint.empty() || conf.paths.measurement.empty() ||
        conf.paths.map_result.empty())
        throw std::invalid_argument(
            "posterior: paths.checkpoint, paths.measurement and paths.map_result required");
    flow::FlowModel model = train::load_checkpoint(conf.paths.checkpoint);
    Measurement meas = load_measurement(conf.paths.measurement);
    io::Container mapc = io::Container::load(conf.paths.map_result);
    if (!mapc.has("z_map"))
        throw std::invalid_argument("posterior: map_result has no z_map (needs an lso run)");
    const auto& ze = mapc.get("z_map");
    Array z_map = Eigen::Map<const Array>(ze.f64.data(), ze.f64.size());

    physics::GreenOperators greens(conf.sensing);
    post::FitOptions fo;
    fo.beta = conf.posterior.beta;
    fo.k_samples = conf.posterior.k_samples;
    fo.lr = conf.posterior.lr;
    fo.iters = conf.posterior.iters;
    fo.seed = conf.seeds.posterior;
    fo.solve = conf.inversion.solve;
    post::PosteriorParams params = post::fit_sigma(meas.y, model, greens, z_map, fo);
    post::UqResult uq = post::sample_posterior(model, params, conf.posterior.count,
                                               conf.seeds.posterior + 1);

    const int n = model.data_n();
    io::Container c;
    c.put_f64("sigma_q", {static_cast<std::uint32_t>(params.sigma_q.size())},
              to_vec(params.sigma_q));
    c.put_f64("mmse", {static_cast<std::uint32_t>(n), static_cast<std::uint32_t>(n)},
              to_vec(uq.mmse.values));
    c.put_f64("uq", {static_cast<std::uint32_t>(n), static_cast<std::uint32_t>(n)},
              to_vec(uq.uq.values));
    std::vector<double> flat;
    for (const auto& s : uq.samples)
        flat.insert(flat.end(), s.values.data(), s.values.data() + s.values.size());
    c.put_f64("samples",
              {static_cast<std::uint32_t>(uq.samples.size()), static_cast<std::uint32_t>(n),
               static_cast<std::uint32_t>(n)},
              std::move(flat));
    c.put_string("config", conf.raw_json);
    c.save(out_dir + "/posterior.scpr");

    double vmax = std::max(1e-12, uq.mmse.values.maxCoeff());
    io::export_pgm(to_vec(uq.mmse.values), n, out_dir + "/mmse.pgm", 0.0, vmax);
    io::export_pgm(to_vec(uq.uq.values), n, out_dir + "/uq.pgm", 0.0,
                   std::max(1e-12, uq.uq.values.maxCoeff()));
    for (std::size_t i = 0; i < uq.samples.size(); ++i)
        io::export_pgm(to_vec(uq.samples[i].values), n,
                       out_dir + "/sample_" + std::to_string(i) + ".pgm", 0.0, vmax);
    write_csv_grid(out_dir + "/mmse.csv", uq.mmse.values, n);
    write_csv_grid(out_dir + "/uq.csv", uq.uq.values, n);
    std::printf("posterior: mean sigma_q %.4f over %d samples -> %s/posterior.scpr\n",
                params.sigma_q.mean(), conf.posterior.count, out_dir.c_str());
    return 0;
}

int cmd_eval(const cfg::ExperimentConfig& conf, const std::string& out_dir) {
    if (conf.paths.image.empty() || conf.paths.reference.empty())
        throw std::invalid_argument("eval: paths.image and paths.reference required");
    int n1 = 0, n2 = 0;
    Array img = load_image_any(conf.paths.image, &n1);
    Array ref = load_image_any(conf.paths.reference, &n2);
    if (n1 != n2) throw std::invalid_argument("eval: image sizes differ");
    double p = metrics::psnr(img, ref, n1);
    double s = metrics::ssim(img, ref, n1);
    write_metrics_json(out_dir + "/metrics.json", {{"psnr", p}, {"ssim", s}});
    std::printf("eval: psnr %.4f dB, ssim %.6f -> %s/metrics.json\n", p, s, out_dir.c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    cap_threads();
    CLI::App app{"2D inverse scattering with an injective flow prior"};
    app.require_subcommand(1);
    std::string config_path, out_dir;
    std::vector<std::string> seed_overrides;
    for (const char* name : {"simulate", "make-dataset", "train", "invert", "posterior", "eval"}) {
        CLI::App* sub = app.add_subcommand(name);
        sub->add_option("--config", config_path, "JSON experiment config")->required();
        sub->add_option("--out", out_dir, "output directory (default: config output_dir)");
        sub->add_option("--seed-override", seed_overrides,
                        "override a named seed, k=v (repeatable)");
    }
    CLI11_PARSE(app, argc, argv);
    std::string cmd = app.get_subcommands().front()->get_name();

    try {
        cfg::ExperimentConfig conf = cfg::parse_config(config_path);
        for (const std::string& kv : seed_overrides) cfg::apply_seed_override(conf, kv);
        std::string out = out_dir.empty() ? conf.output_dir : out_dir;
        fs::create_directories(out);
        if (cmd == "simulate") return cmd_simulate(conf, out);
        if (cmd == "make-dataset") return cmd_make_dataset(conf, out);
        if (cmd == "train") return cmd_train(conf, out);
        if (cmd == "invert") return cmd_invert(conf, out);
        if (cmd == "posterior") return cmd_posterior(conf, out);
        if (cmd == "eval") return cmd_eval(conf, out);
        std::fprintf(stderr, "unknown command %s\n", cmd.c_str());
        return 1;
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "numerical failure: %s\n", e.what());
        return 2;
    }
}
