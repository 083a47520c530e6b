#include <doctest.h>

#include <filesystem>
#include <sstream>

#include <json.hpp>

#include "smforge/cli.hpp"
#include "smforge/io.hpp"

using namespace smforge;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Run {
    int status;
    std::string out;
    std::string err;
};

Run run(std::vector<std::string> args) {
    std::ostringstream out;
    std::ostringstream err;
    const int status = cli::run_command(args, out, err);
    return {status, out.str(), err.str()};
}

const std::vector<std::string> kSmall = {
    "--set",
    "sim.fov.nx=8",
    "sim.fov.ny=8",
    "sim.n_freqs=6",
    "sim.samples_per_period=100",
    "dataset.n_train=2",
    "dataset.n_val=1",
    "dataset.n_test=1",
    "model.channels=4",
    "model.blocks=1",
    "model.window=2",
    "model.scale=2",
    "train.iterations=3",
    "train.batch_size=2",
    "train.loss.window=4",
    "seed=5",
};

std::vector<std::string> with_small(std::vector<std::string> args) {
    args.insert(args.end(), kSmall.begin(), kSmall.end());
    return args;
}

// Re-runs the command recorded in `dir` into a sibling directory and compares
// every recorded output byte for byte.
void check_replay(const fs::path& dir) {
    const fs::path again = dir.string() + "_replay";
    fs::remove_all(again);
    const Run r = run({"simulate", "--from-manifest", (dir / "manifest.json").string(), "--out", again.string()});
    REQUIRE_MESSAGE(r.status == 0, r.err);
    const json m = json::parse(io::read_file(dir / "manifest.json"));
    for (const auto& o : m.at("outputs")) {
        const std::string p = o.at("path").get<std::string>();
        INFO(p);
        CHECK(io::read_file(dir / p) == io::read_file(again / p));
    }
    CHECK(io::read_file(dir / "manifest.json") == io::read_file(again / "manifest.json"));
}

}  // namespace

TEST_CASE("gradcheck command passes") {
    const fs::path dir = fs::temp_directory_path() / "smforge_cli_gc";
    fs::remove_all(dir);
    const Run r = run({"gradcheck", "--pairs", "3", "--side", "16", "--out", dir.string()});
    CHECK(r.status == cli::kExitOk);
    CHECK(r.out.find("fsc") != std::string::npos);
    CHECK(fs::exists(dir / "gradcheck.csv"));
    for (const auto& row : cli::gradcheck(2, 16, 1)) CHECK(row.max_rel_error <= 1e-4);
}

TEST_CASE("usage errors exit with status 2") {
    CHECK(run({"simulate", "--bogus", "--out", "x"}).status == cli::kExitUsage);
    CHECK(run({"frobnicate"}).status == cli::kExitUsage);
    CHECK(run({"simulate"}).status == cli::kExitUsage);
    CHECK(run({"baseline", "--in", "a", "--scale", "2", "--method", "magic", "--out", "x"}).status ==
          cli::kExitUsage);
}

TEST_CASE("invalid configuration exits with status 1") {
    const fs::path dir = fs::temp_directory_path() / "smforge_cli_bad";
    const Run r = run({"simulate", "--out", dir.string(), "--set", "sim.nonexistent=3"});
    CHECK(r.status == cli::kExitFailure);
    CHECK(r.err.find("nonexistent") != std::string::npos);
}

TEST_CASE("full pipeline with manifests and replay") {
    const fs::path root = fs::temp_directory_path() / "smforge_cli_pipeline";
    fs::remove_all(root);
    const auto p = [&](const char* name) { return (root / name).string(); };

    REQUIRE(run(with_small({"simulate", "--dataset", "--out", p("data")})).status == 0);
    const json dm = json::parse(io::read_file(root / "data" / "manifest.json"));
    CHECK(dm["splits"]["train"].size() == 2);
    CHECK(dm["command"] == "simulate");
    CHECK(fs::exists(root / "data" / "timing.json"));

    const Run tr = run(with_small({"train", "--data", p("data"), "--out", p("train")}));
    REQUIRE_MESSAGE(tr.status == 0, tr.err);
    CHECK(fs::exists(root / "train" / "checkpoint.bin"));
    CHECK(fs::exists(root / "train" / "loss_curve.csv"));

    const std::string test_sm = (root / "data" / dm["splits"]["test"][0].get<std::string>()).string();
    REQUIRE(run({"downsample", "--in", test_sm, "--scale", "2", "--out", p("lr")}).status == 0);
    const std::string lr = p("lr") + "/sm_lr.bin";
    REQUIRE(run({"recover", "--checkpoint", p("train") + "/checkpoint.bin", "--in", lr, "--out", p("rec")}).status == 0);
    REQUIRE(run({"baseline", "--in", lr, "--scale", "2", "--method", "bicubic", "--out", p("bic")}).status == 0);

    const Run ev = run({"evaluate", "--pred", p("rec") + "/sm_recovered.bin", "--gt", test_sm, "--rows", "0,3",
                        "--out", p("eval")});
    REQUIRE_MESSAGE(ev.status == 0, ev.err);
    CHECK(fs::exists(root / "eval" / "per_frequency_nrmse.csv"));
    CHECK(fs::exists(root / "eval" / "error_map_3.pgm"));

    const Run rc = run({"reconstruct", "--sm", p("rec") + "/sm_recovered.bin", "--gt", test_sm, "--phantom",
                        "two_point", "--out", p("recon")});
    REQUIRE_MESSAGE(rc.status == 0, rc.err);
    CHECK(fs::exists(root / "recon" / "recon.pgm"));
    CHECK(io::read_file(root / "recon" / "metrics.jsonl").find("psnr_gap") != std::string::npos);

    SUBCASE("evaluating a matrix against itself gives zero error") {
        REQUIRE(run({"evaluate", "--pred", test_sm, "--gt", test_sm, "--out", p("self")}).status == 0);
        const std::string line = io::read_file(root / "self" / "metrics.jsonl");
        const json first = json::parse(line.substr(0, line.find('\n')));
        CHECK(first["name"] == "nrmse");
        CHECK(first["value"] == 0.0);
    }
    SUBCASE("evaluating on a training matrix is refused") {
        const std::string train_sm = (root / "data" / dm["splits"]["train"][0].get<std::string>()).string();
        const Run bad = run({"evaluate", "--pred", p("rec") + "/sm_recovered.bin", "--gt", train_sm, "--out",
                             p("leak")});
        CHECK(bad.status == cli::kExitFailure);
    }
    SUBCASE("every stage replays bit-identically") {
        for (const char* stage : {"data", "train", "lr", "rec", "bic", "eval", "recon"}) {
            INFO(stage);
            check_replay(root / stage);
        }
    }
    SUBCASE("replay refuses modified inputs") {
        fs::copy_file(lr, p("lr_copy.bin"));
        REQUIRE(run({"baseline", "--in", p("lr_copy.bin"), "--scale", "2", "--method", "strided", "--out",
                     p("str")}).status == 0);
        io::atomic_write(p("lr_copy.bin"), io::read_file(test_sm));
        CHECK(run({"baseline", "--from-manifest", p("str") + "/manifest.json", "--out", p("str2")}).status ==
              cli::kExitFailure);
    }
    SUBCASE("corrupted dataset is rejected before training") {
        const fs::path f = root / "data" / dm["splits"]["val"][0].get<std::string>();
        std::string bytes = io::read_file(f);
        bytes[bytes.size() - 1] ^= 1;
        io::atomic_write(f, bytes);
        CHECK(run(with_small({"train", "--data", p("data"), "--out", p("train2")})).status == cli::kExitFailure);
    }
}
