#include "doctest.h"

#include <array>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

namespace fs = std::filesystem;

namespace {

struct RunResult {
    int exit_code;
    std::string output;
};

RunResult run(const std::string& args) {
    std::string cmd = std::string(ACE_CLI_PATH) + " " + args + " 2>&1";
    std::array<char, 4096> buf{};
    std::string out;
    FILE* pipe = popen(cmd.c_str(), "r");
    REQUIRE(pipe != nullptr);
    while (fgets(buf.data(), buf.size(), pipe)) out += buf.data();
    int status = pclose(pipe);
    return {WEXITSTATUS(status), out};
}

fs::path work_dir() {
    auto dir = fs::temp_directory_path() / "ace_cli_test";
    fs::create_directories(dir);
    return dir;
}

void write_file(const fs::path& p, const std::string& text) {
    std::ofstream os(p);
    os << text;
}

std::string read_file(const fs::path& p) {
    std::ifstream is(p);
    return std::string((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
}

const char* kTinyConfig = R"({
  "schema_version": 1,
  "generator": {"id": "gaussian-toy", "n_data": 8, "min_ctx": 2, "max_ctx": 6, "use_priors": false},
  "model": {"d_emb": 16, "n_layers": 1, "n_heads": 2, "mlp_hidden": 16,
            "embed_hidden": 12, "k_components": 2, "head_hidden": 12},
  "train": {"steps": 20, "batch_size": 4, "lr0": 1e-3, "t_w": 0.0, "eval_every": 5}
})";

std::string strip_wall_column(const std::string& csv) {
    std::string out;
    size_t pos = 0;
    while (pos < csv.size()) {
        size_t eol = csv.find('\n', pos);
        if (eol == std::string::npos) eol = csv.size();
        std::string line = csv.substr(pos, eol - pos);
        out += line.substr(0, line.rfind(',')) + "\n";
        pos = eol + 1;
    }
    return out;
}

}  // namespace

TEST_CASE("train command and determinism") {
    auto dir = work_dir();
    write_file(dir / "cfg.json", kTinyConfig);

    SUBCASE("runs and writes checkpoint plus metrics") {
        auto r = run("train --config " + (dir / "cfg.json").string() + " --seed 3 --out-dir " +
                     (dir / "a").string());
        CHECK(r.exit_code == 0);
        CHECK(fs::exists(dir / "a" / "checkpoint.ace"));
        CHECK(fs::exists(dir / "a" / "model.json"));
        CHECK(fs::exists(dir / "a" / "metrics.csv"));
    }
    SUBCASE("same config and seed give identical metrics") {
        run("train --config " + (dir / "cfg.json").string() + " --seed 5 --threads 1 --out-dir " +
            (dir / "d1").string());
        run("train --config " + (dir / "cfg.json").string() + " --seed 5 --threads 1 --out-dir " +
            (dir / "d2").string());
        auto m1 = strip_wall_column(read_file(dir / "d1" / "metrics.csv"));
        auto m2 = strip_wall_column(read_file(dir / "d2" / "metrics.csv"));
        CHECK(m1 == m2);
        CHECK(m1.find("step,lr,loss,data_nll,latent_nll") == 0);
    }
    SUBCASE("missing config field exits 2 and names the field") {
        write_file(dir / "bad.json", R"({"schema_version": 1,
            "generator": {"id": "gaussian-toy"},
            "model": {"d_emb": 16, "n_layers": 1, "n_heads": 2, "mlp_hidden": 16,
                      "embed_hidden": 12, "k_components": 2, "head_hidden": 12},
            "train": {"batch_size": 4, "lr0": 1e-3}})");
        auto r = run("train --config " + (dir / "bad.json").string());
        CHECK(r.exit_code == 2);
        CHECK(r.output.find("steps") != std::string::npos);
    }
    SUBCASE("unknown generator id exits 2 listing valid ids") {
        write_file(dir / "badgen.json", R"({"schema_version": 1,
            "generator": {"id": "nope"},
            "model": {"d_emb": 16, "n_layers": 1, "n_heads": 2, "mlp_hidden": 16,
                      "embed_hidden": 12, "k_components": 2, "head_hidden": 12},
            "train": {"steps": 5, "batch_size": 2, "lr0": 1e-3}})");
        auto r = run("train --config " + (dir / "badgen.json").string());
        CHECK(r.exit_code == 2);
        CHECK(r.output.find("gaussian-toy") != std::string::npos);
        CHECK(r.output.find("turin") != std::string::npos);
    }
}

TEST_CASE("corrupt checkpoint magic exits 3") {
    auto dir = work_dir();
    fs::create_directories(dir / "bad_ck");
    write_file(dir / "bad_ck" / "checkpoint.ace", "XXXXGARBAGE");
    write_file(dir / "bad_ck" / "model.json",
               R"({"schema_version":1,"dim":1,"d_emb":16,"n_layers":1,"n_heads":2,"mlp_hidden":16,
                   "embed_hidden":12,"k_components":2,"head_hidden":12,"n_bins":100,"latents":[]})");
    auto r = run("eval --checkpoint " + (dir / "bad_ck").string() + " --task toy --n-test 1");
    CHECK(r.exit_code == 3);
}

TEST_CASE("gradcheck subcommand exits 0") {
    auto r = run("gradcheck");
    CHECK(r.exit_code == 0);
    CHECK(r.output.find("max_rel_err") != std::string::npos);
}

TEST_CASE("bo subcommand emits seeds x iters regret rows") {
    auto dir = work_dir();
    auto out = dir / "bo_rand";
    auto r = run("bo --proposer random --benchmark gramacy-lee --seeds 10 --iters 100 --out-dir " +
                 out.string());
    CHECK(r.exit_code == 0);
    std::ifstream is(out / "regret.csv");
    std::string line;
    std::getline(is, line);
    CHECK(line == "seed,iter,x1,y,best_y,regret");
    int rows = 0;
    while (std::getline(is, line)) ++rows;
    CHECK(rows == 10 * 100);
}

TEST_CASE("sbc subcommand reports a deviation on a tiny run") {
    auto dir = work_dir();
    // train a minimal oup model first
    write_file(dir / "oup.json", R"({
      "schema_version": 1,
      "generator": {"id": "oup", "use_priors": false},
      "model": {"d_emb": 16, "n_layers": 1, "n_heads": 2, "mlp_hidden": 16,
                "embed_hidden": 12, "k_components": 2, "head_hidden": 12},
      "train": {"steps": 10, "batch_size": 4, "lr0": 1e-3, "eval_every": 5}
    })");
    auto ck = dir / "oup_model";
    auto r1 = run("train --config " + (dir / "oup.json").string() + " --out-dir " + ck.string());
    REQUIRE(r1.exit_code == 0);
    auto r2 = run("sbc --checkpoint " + ck.string() + " --simulator oup --n-sims 100 --n-post 50" +
                  " --out-dir " + (dir / "sbc_out").string());
    CHECK(r2.exit_code == 0);
    CHECK(r2.output.find("avg_abs_ecdf_deviation=") != std::string::npos);
    CHECK(fs::exists(dir / "sbc_out" / "sbc_ranks.csv"));
    CHECK(fs::exists(dir / "sbc_out" / "sbc_summary.csv"));
}

TEST_CASE("taskdump writes the two CSV files") {
    auto dir = work_dir();
    auto r = run("taskdump --generator sir --seed 4 --out-dir " + (dir / "dump").string());
    CHECK(r.exit_code == 0);
    CHECK(fs::exists(dir / "dump" / "task.csv"));
    CHECK(fs::exists(dir / "dump" / "priors.csv"));
}

TEST_CASE("cleanup") { fs::remove_all(work_dir()); }
