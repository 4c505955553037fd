// End-to-end checks of the ternet binary: exit codes, determinism, and the
// dataset -> train -> quantize -> infer pipeline. The binary path comes in
// through TERNET_CLI_PATH at compile time.

#include <doctest.h>

#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "ternet/dataset.hpp"
#include "ternet/tensor.hpp"

namespace fs = std::filesystem;

namespace {

struct RunResult {
    int exit_code = -1;
    std::string output;  // stdout and stderr merged
};

RunResult run_cli(const std::string& args) {
    const std::string cmd = std::string(TERNET_CLI_PATH) + " " + args + " 2>&1";
    FILE* pipe = popen(cmd.c_str(), "r");
    REQUIRE(pipe != nullptr);
    RunResult r;
    char buf[4096];
    std::size_t n = 0;
    while ((n = fread(buf, 1, sizeof(buf), pipe)) > 0) r.output.append(buf, n);
    const int status = pclose(pipe);
    r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
}

// per-test scratch directory, removed on destruction
struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& tag) {
        path = fs::temp_directory_path() / ("ternet_cli_" + tag);
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::size_t count_lines(const std::string& text) {
    std::size_t lines = 0;
    for (char c : text) {
        if (c == '\n') ++lines;
    }
    return lines;
}

}  // namespace

TEST_CASE("running without a subcommand is a usage error") {
    const RunResult r = run_cli("");
    CHECK(r.exit_code == 2);
}

TEST_CASE("an unknown subcommand is a usage error") {
    const RunResult r = run_cli("frobnicate");
    CHECK(r.exit_code == 2);
}

TEST_CASE("an unknown flag value is a usage error") {
    const RunResult r = run_cli("toy --activation bogus");
    CHECK(r.exit_code == 2);
    const RunResult r2 = run_cli("toy --activation rta --no-such-flag");
    CHECK(r2.exit_code == 2);
}

TEST_CASE("help exits cleanly") {
    CHECK(run_cli("--help").exit_code == 0);
    CHECK(run_cli("toy --help").exit_code == 0);
}

TEST_CASE("toy runs are deterministic byte for byte") {
    TempDir tmp("toy");
    const std::string args = "toy --activation rta --epochs 40 --seed 5 --out ";
    const RunResult a = run_cli(args + tmp.file("a.csv"));
    const RunResult b = run_cli(args + tmp.file("b.csv"));
    REQUIRE(a.exit_code == 0);
    REQUIRE(b.exit_code == 0);

    const std::string csv_a = slurp(tmp.file("a.csv"));
    const std::string csv_b = slurp(tmp.file("b.csv"));
    CHECK(csv_a == csv_b);
    CHECK(count_lines(csv_a) == 41);  // header plus one row per epoch
    CHECK(csv_a.substr(0, 10) == "epoch,mse\n");

    const RunResult c = run_cli("toy --activation rta --epochs 40 --seed 6 --out " +
                                tmp.file("c.csv"));
    REQUIRE(c.exit_code == 0);
    CHECK(slurp(tmp.file("c.csv")) != csv_a);
}

TEST_CASE("an unwritable output path is a runtime error") {
    const RunResult r = run_cli("toy --activation rta --epochs 2 --out /nonexistent/dir/x.csv");
    CHECK(r.exit_code == 1);
    CHECK(r.output.find("error:") != std::string::npos);
}

TEST_CASE("cost prints one row per scheme") {
    const RunResult r = run_cli("cost --length 64");
    REQUIRE(r.exit_code == 0);
    CHECK(r.output.find("scheme") != std::string::npos);
    CHECK(r.output.find("ternary") != std::string::npos);
    CHECK(r.output.find("quaternary") != std::string::npos);
    CHECK(r.output.find("float") != std::string::npos);
    CHECK(count_lines(r.output) == 4);
}

TEST_CASE("bench emits the expected csv") {
    const RunResult r = run_cli("bench --lengths 64 --schemes ternary,float");
    REQUIRE(r.exit_code == 0);
    std::istringstream lines(r.output);
    std::string line;
    REQUIRE(std::getline(lines, line));
    CHECK(line == "scheme,length,ns_per_dot,ops_counted");
    REQUIRE(std::getline(lines, line));
    CHECK(line.substr(0, 11) == "ternary,64,");
    REQUIRE(std::getline(lines, line));
    CHECK(line.substr(0, 9) == "float,64,");
    CHECK_FALSE(std::getline(lines, line));

    const RunResult bad = run_cli("bench --schemes warp");
    CHECK(bad.exit_code == 1);
}

TEST_CASE("the full dataset/train/quantize/infer pipeline holds together") {
    TempDir tmp("pipeline");
    const std::string ds = tmp.file("train.json");
    const std::string model = tmp.file("model.rtn");
    const std::string frozen = tmp.file("frozen.rtn");

    REQUIRE(run_cli("dataset --out " + ds + " --count 64 --seed 3").exit_code == 0);
    REQUIRE(fs::exists(tmp.path / "train.images.bin"));
    REQUIRE(fs::exists(tmp.path / "train.labels.bin"));

    const RunResult train = run_cli("train-small --dataset " + ds +
                                    " --epochs 1 --batch 32 --seed 1 --out " + model);
    REQUIRE(train.exit_code == 0);
    CHECK(train.output.find("final loss") != std::string::npos);
    CHECK(train.output.find("train accuracy") != std::string::npos);

    REQUIRE(run_cli("quantize --in " + model + " --out " + frozen).exit_code == 0);

    // carve a small input batch out of the dataset and run the frozen model
    const ternet::ImageDataset set = ternet::read_dataset(ds);
    ternet::Tensord batch({4, set.images.dim(1), set.images.dim(2), set.images.dim(3)});
    for (std::size_t i = 0; i < batch.size(); ++i) batch[i] = set.images[i];
    const std::string input = tmp.file("input.json");
    ternet::write_tensor_file(input, batch);

    const std::string report = tmp.file("report.json");
    const RunResult infer = run_cli("infer --model " + frozen + " --input " + input +
                                    " --sparsity-report --report-out " + report + " --out " +
                                    tmp.file("outputs.json"));
    REQUIRE(infer.exit_code == 0);
    CHECK(count_lines(infer.output) == 4);
    CHECK(infer.output.substr(0, 2) == "0,");

    const std::string report_json = slurp(report);
    CHECK(report_json.find("\"layers\"") != std::string::npos);
    CHECK(report_json.find("activation0") != std::string::npos);
    CHECK(report_json.find("activation1") != std::string::npos);

    const ternet::Tensord outputs = ternet::read_tensor_file(tmp.file("outputs.json"));
    CHECK(outputs.shape() == std::vector<std::size_t>{4, 4});

    SUBCASE("an input of the wrong shape is rejected") {
        ternet::Tensord flat({4, 7});
        const std::string bad_input = tmp.file("bad.json");
        ternet::write_tensor_file(bad_input, flat);
        const RunResult r = run_cli("infer --model " + frozen + " --input " + bad_input);
        CHECK(r.exit_code == 1);
        CHECK(r.output.find("error:") != std::string::npos);
    }

    SUBCASE("a corrupted model is refused unless explicitly overridden") {
        std::string bytes = slurp(frozen);
        bytes[bytes.size() - 6] ^= 0x40;  // inside the head layer's float weights
        const std::string hurt = tmp.file("hurt.rtn");
        std::ofstream(hurt, std::ios::binary) << bytes;

        const RunResult refused = run_cli("infer --model " + hurt + " --input " + input);
        CHECK(refused.exit_code == 1);
        CHECK(refused.output.find("checksum mismatch") != std::string::npos);

        const RunResult forced =
            run_cli("infer --model " + hurt + " --input " + input + " --ignore-checksum");
        CHECK(forced.exit_code == 0);
        CHECK(forced.output.find("warning:") != std::string::npos);
    }
}

TEST_CASE("train-small validates its mode flags") {
    TempDir tmp("flags");
    const std::string ds = tmp.file("tiny.json");
    REQUIRE(run_cli("dataset --out " + ds + " --count 8 --seed 1").exit_code == 0);

    const RunResult arch = run_cli("train-small --dataset " + ds + " --arch resnet50 --out " +
                                   tmp.file("m.rtn"));
    CHECK(arch.exit_code == 1);
    CHECK(arch.output.find("unknown --arch") != std::string::npos);

    const RunResult mode = run_cli("train-small --dataset " + ds + " --quant-mode sideways --out " +
                                   tmp.file("m.rtn"));
    CHECK(mode.exit_code == 1);
    CHECK(mode.output.find("unknown --quant-mode") != std::string::npos);
}
