#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "glot/cli.hpp"

using namespace glot;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& tag) {
    const fs::path p = fs::temp_directory_path() / ("glot_cli_" + tag);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

int run(std::vector<std::string> args) {
    std::vector<const char*> argv;
    argv.push_back("glot");
    for (const auto& a : args) argv.push_back(a.c_str());
    return run_cli(static_cast<int>(argv.size()), argv.data());
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    REQUIRE(f.good());
    return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

const std::vector<std::string> kTinyData = {
    "--set", "data.count=2",      "--set", "data.length=16",    "--set", "data.t_len=8",
    "--set", "data.vertices=12",  "--set", "data.feature_dim=32"};

void gen_tiny_dataset(const fs::path& dir, int seed = 3) {
    std::vector<std::string> args = {"gen-data", "--out", dir.string(), "--seed", std::to_string(seed)};
    args.insert(args.end(), kTinyData.begin(), kTinyData.end());
    REQUIRE(run(args) == 0);
}

}  // namespace

TEST_CASE("gen-data writes a loadable, reproducible dataset") {
    const fs::path dir = temp_dir("gen");
    gen_tiny_dataset(dir);
    const Dataset ds = load_dataset(dir);
    CHECK(ds.sequences.size() == 2);
    CHECK(ds.meta.feature_dim == 32);
    CHECK(fs::exists(dir / "config.echo"));

    const fs::path dir2 = temp_dir("gen2");
    gen_tiny_dataset(dir2);
    CHECK(slurp(dir / "seq_0000.bin") == slurp(dir2 / "seq_0000.bin"));
    CHECK(slurp(dir / "manifest.json") == slurp(dir2 / "manifest.json"));
}

TEST_CASE("train produces a checkpoint, a log and a reusable config echo") {
    const fs::path data = temp_dir("train_data");
    gen_tiny_dataset(data);
    const fs::path out = temp_dir("train_out");
    REQUIRE(run({"train", "--data", data.string(), "--out", out.string(), "--seed", "9", "--set",
                 "preset=tiny", "--set", "train.steps=4"}) == 0);
    CHECK(fs::exists(out / "checkpoint.bin"));
    CHECK(fs::exists(out / "train_log.jsonl"));
    CHECK(fs::exists(out / "config.echo"));

    // Rerunning from the echoed config reproduces the checkpoint bit-exactly.
    const fs::path out2 = temp_dir("train_out2");
    REQUIRE(run({"train", "--data", data.string(), "--out", out2.string(), "--config",
                 (out / "config.echo").string()}) == 0);
    CHECK(slurp(out / "checkpoint.bin") == slurp(out2 / "checkpoint.bin"));
}

TEST_CASE("eval writes text and json reports") {
    const fs::path data = temp_dir("eval_data");
    gen_tiny_dataset(data);
    const fs::path train_out = temp_dir("eval_train");
    REQUIRE(run({"train", "--data", data.string(), "--out", train_out.string(), "--seed", "9", "--set",
                 "preset=tiny", "--set", "train.steps=2"}) == 0);
    const fs::path out = temp_dir("eval_out");
    REQUIRE(run({"eval", "--ckpt", (train_out / "checkpoint.bin").string(), "--data", data.string(),
                 "--out", out.string(), "--export"}) == 0);
    CHECK(fs::exists(out / "metrics.txt"));
    CHECK(fs::exists(out / "preds" / "pred_0000.bin"));
    const auto j = nlohmann::json::parse(slurp(out / "metrics.json"));
    CHECK(j.contains("mpjpe"));
    CHECK(j.contains("pa_mpjpe"));
    CHECK(j.contains("mpvpe"));
    CHECK(j.contains("accel"));
    CHECK(j.contains("n_frames"));
    CHECK(j.contains("per_frame"));
    CHECK(j["n_frames"].get<int>() == 32);
}

TEST_CASE("infer exports a trajectory for a single sequence file") {
    const fs::path data = temp_dir("infer_data");
    gen_tiny_dataset(data);
    const fs::path train_out = temp_dir("infer_train");
    REQUIRE(run({"train", "--data", data.string(), "--out", train_out.string(), "--seed", "2", "--set",
                 "preset=tiny", "--set", "train.steps=2"}) == 0);
    const fs::path out = temp_dir("infer_out");
    REQUIRE(run({"infer", "--ckpt", (train_out / "checkpoint.bin").string(), "--seq",
                 (data / "seq_0001.bin").string(), "--out", out.string()}) == 0);
    const Container c = Container::read(out / "prediction.bin");
    CHECK(c.has("pred_theta"));
    CHECK(c.has("pred_beta"));
    CHECK(c.has("pred_phi"));
    CHECK(c.has("pred_joints3d"));
    CHECK(c.has("pred_vertices"));
    CHECK(c.get("pred_joints3d").shape == std::vector<std::int64_t>{16, 24, 3});
}

TEST_CASE("sweep runs a small table") {
    const fs::path data = temp_dir("sweep_data");
    gen_tiny_dataset(data);
    const fs::path out = temp_dir("sweep_out");
    REQUIRE(run({"sweep", "--axis", "gmm_only", "--data", data.string(), "--out", out.string(),
                 "--seed", "4", "--set", "preset=tiny", "--set", "train.steps=2"}) == 0);
    const std::string table = slurp(out / "sweep.txt");
    CHECK(table.find("gmm") != std::string::npos);
    CHECK(table.find("gmm+lpc") != std::string::npos);
    const auto j = nlohmann::json::parse(slurp(out / "sweep.json"));
    CHECK(j["rows"].size() == 2);
}

TEST_CASE("dump-attn exports row-stochastic attention") {
    const fs::path data = temp_dir("attn_data");
    gen_tiny_dataset(data);
    const fs::path train_out = temp_dir("attn_train");
    REQUIRE(run({"train", "--data", data.string(), "--out", train_out.string(), "--seed", "8", "--set",
                 "preset=tiny", "--set", "train.steps=2"}) == 0);
    const fs::path out = temp_dir("attn_out");
    REQUIRE(run({"dump-attn", "--ckpt", (train_out / "checkpoint.bin").string(), "--data", data.string(),
                 "--sequence", "0", "--center", "8", "--mask", "1,3", "--out", out.string()}) == 0);
    const auto j = nlohmann::json::parse(slurp(out / "attention.json"));
    REQUIRE(j["records"].size() >= 3);  // encoder, decoder, local, cross
    bool saw_cross = false;
    for (const auto& rec : j["records"]) {
        const int n_k = rec["n_k"].get<int>();
        if (rec["tag"] == "gmm.encoder.0") CHECK(n_k == 6);  // 8 frames - 2 masked
        if (rec["tag"] == "lpc.cross.0") saw_cross = true;
        for (const auto& head : rec["weights"])
            for (const auto& row : head) {
                double s = 0.0;
                for (const auto& v : row) s += v.get<double>();
                CHECK(std::abs(s - 1.0) < 1e-9);
            }
    }
    CHECK(saw_cross);
}

TEST_CASE("param-count agrees for both presets") {
    CHECK(run({"param-count", "--set", "preset=desk"}) == 0);
    CHECK(run({"param-count", "--set", "preset=paper"}) == 0);
    CHECK(run({"param-count", "--set", "preset=tiny", "--set", "train.gmm_only=true"}) == 0);
}

TEST_CASE("exit codes distinguish usage and io failures") {
    CHECK(run({"bogus-command"}) == 2);
    CHECK(run({"train"}) == 2);  // missing required options
    CHECK(run({"param-count", "--set", "bad.key=1"}) == 2);
    CHECK(run({"param-count", "--set", "preset=nope"}) == 2);
    const fs::path out = temp_dir("exit_codes");
    CHECK(run({"eval", "--ckpt", "/nonexistent.bin", "--data", "/nonexistent", "--out",
               out.string()}) == 3);
    CHECK(run({"train", "--data", "/nonexistent", "--out", out.string()}) == 3);

    // Corrupt checkpoint file -> i/o error.
    const fs::path bad = out / "bad.bin";
    std::ofstream(bad) << "GLOTBIN 1\nDATA\n";
    CHECK(run({"infer", "--ckpt", bad.string(), "--seq", bad.string(), "--out", out.string()}) == 3);
    CHECK(run({"--help"}) == 0);
}
