// End-to-end checks of the command-line binary. The test runner passes its
// location through SCATTERFLOW_BIN.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <unistd.h>

#include "doctest.h"

namespace fs = std::filesystem;

namespace {

std::string bin() {
    const char* b = std::getenv("SCATTERFLOW_BIN");
    REQUIRE_MESSAGE(b != nullptr, "SCATTERFLOW_BIN must point at the cli binary");
    return b;
}

int run(const std::string& args) {
    int rc = std::system((bin() + " " + args + " > /dev/null 2>&1").c_str());
    return WEXITSTATUS(rc);
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE_MESSAGE(in.good(), "missing file ", path);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

struct TempDir {
    fs::path dir;
    TempDir() : dir(fs::temp_directory_path() / ("sf_cli_" + std::to_string(::getpid()))) {
        fs::create_directories(dir);
    }
    ~TempDir() { fs::remove_all(dir); }
    std::string file(const std::string& name, const std::string& content) const {
        std::string p = (dir / name).string();
        std::ofstream(p) << content;
        return p;
    }
    std::string sub(const std::string& name) const { return (dir / name).string(); }
};

}  // namespace

TEST_CASE("simulate is reproducible byte for byte and honors seed overrides") {
    TempDir td;
    std::string cfg = td.file("sim.json", R"({
      "sensing": {"n": 16, "n_inc": 6, "n_rec": 6, "snr_db": 30},
      "phantom": {"kind": "cylinder", "eps_r": 2.0, "radius_frac": 0.4},
      "seeds": {"noise": 7}
    })");
    REQUIRE(run("simulate --config " + cfg + " --out " + td.sub("a")) == 0);
    REQUIRE(run("simulate --config " + cfg + " --out " + td.sub("b")) == 0);
    CHECK(slurp(td.sub("a") + "/measurement.scpr") == slurp(td.sub("b") + "/measurement.scpr"));

    REQUIRE(run("simulate --config " + cfg + " --seed-override noise=8 --out " +
                td.sub("c")) == 0);
    CHECK(slurp(td.sub("a") + "/measurement.scpr") != slurp(td.sub("c") + "/measurement.scpr"));
}

TEST_CASE("validation failures exit with code 1") {
    TempDir td;
    std::string bad_key = td.file("bad1.json", R"({"sensing": {"bogus": 1}})");
    CHECK(run("simulate --config " + bad_key) == 1);
    std::string bad_combo =
        td.file("bad2.json", R"({"inversion": {"method": "lso", "init": "bp"}})");
    CHECK(run("invert --config " + bad_combo) == 1);
    CHECK(run("simulate --config " + td.sub("missing.json")) == 1);
}

TEST_CASE("the full pipeline runs at smoke scale") {
    TempDir td;
    std::string out = td.sub("run");
    std::string cfg = td.file("pipe.json", R"({
      "sensing": {"n": 16, "n_inc": 6, "n_rec": 8, "snr_db": 30},
      "dataset": {"kind": "ellipses", "count": 32, "n": 16},
      "flow": {"n": 16, "hidden": 8, "h_blocks": 4},
      "train": {"phase1_epochs": 2, "phase2_epochs": 2, "batch_size": 16},
      "phantom": {"kind": "dataset", "index": 0, "chi_max": 3.0},
      "inversion": {"method": "lso", "init": "mog", "iters": 15},
      "posterior": {"beta": 0.05, "k_samples": 3, "iters": 5, "count": 4},
      "paths": {"dataset": ")" + out + R"(/dataset.scpr",
                 "checkpoint": ")" + out + R"(/flow.scpr",
                 "measurement": ")" + out + R"(/measurement.scpr",
                 "map_result": ")" + out + R"(/map.scpr",
                 "image": ")" + out + R"(/x_map.pgm",
                 "reference": ")" + out + R"(/x_map.pgm"},
      "seeds": {"dataset": 1, "noise": 2, "train": 3, "inversion": 4, "posterior": 5},
      "output_dir": ")" + out + R"("
    })");
    REQUIRE(run("make-dataset --config " + cfg) == 0);
    REQUIRE(run("train --config " + cfg) == 0);
    REQUIRE(run("simulate --config " + cfg) == 0);
    REQUIRE(run("invert --config " + cfg) == 0);
    REQUIRE(run("posterior --config " + cfg) == 0);
    REQUIRE(run("eval --config " + cfg) == 0);

    // metrics from the self-comparison eval: identical images
    std::string metrics = slurp(out + "/metrics.json");
    CHECK(metrics.find("\"ssim\": 1") != std::string::npos);
    for (const char* f : {"/dataset.scpr", "/flow.scpr", "/measurement.scpr", "/map.scpr",
                          "/posterior.scpr", "/x_map.pgm", "/mmse.pgm", "/uq.pgm"})
        CHECK(fs::exists(out + f));
}
