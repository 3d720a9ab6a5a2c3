#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

#ifndef VIGIL_CLI_PATH
#error "VIGIL_CLI_PATH must point at the CLI binary"
#endif

struct RunResult {
    int exit_code;
    std::string output;  // stdout + stderr
};

RunResult run(const std::string& args) {
    const std::string cmd = std::string(VIGIL_CLI_PATH) + " " + args + " 2>&1";
    std::array<char, 4096> buf{};
    std::string out;
    FILE* pipe = popen(cmd.c_str(), "r");
    REQUIRE(pipe != nullptr);
    while (fgets(buf.data(), buf.size(), pipe)) out += buf.data();
    const int status = pclose(pipe);
    return {WEXITSTATUS(status), out};
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("vigil_cli_test_" + std::to_string(::getpid()));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

}  // namespace

TEST_CASE("build-scenario") {
    TempDir tmp;
    SUBCASE("fixture f1") {
        const RunResult r = run("build-scenario fixture --name f1 --out " + tmp.file("f1.json"));
        CHECK(r.exit_code == 0);
        CHECK(r.output.find("product states: 4 (2 reachable)") != std::string::npos);
        CHECK(fs::exists(tmp.file("f1.json")));
        CHECK(fs::exists(tmp.file("f1.json.manifest.json")));
    }
    SUBCASE("congestion defaults") {
        const RunResult r =
            run("build-scenario congestion --k 3 --out " + tmp.file("cong.json"));
        CHECK(r.exit_code == 0);
        CHECK(r.output.find("horizon K=30") != std::string::npos);
        CHECK(r.output.find("alpha=0.04") != std::string::npos);
    }
    SUBCASE("missing --out is a usage error") {
        const RunResult r = run("build-scenario fixture --name f1");
        CHECK(r.exit_code == 2);
    }
    SUBCASE("unknown fixture is an input error") {
        const RunResult r = run("build-scenario fixture --name nope --out " + tmp.file("x.json"));
        CHECK(r.exit_code == 3);
    }
}

TEST_CASE("train determinism and --iters 0") {
    TempDir tmp;
    const std::string scen = tmp.file("f1ts.json");
    REQUIRE(run("build-scenario fixture --name f1-two-sensor --out " + scen).exit_code == 0);

    SUBCASE("zero iterations keep the seeded initialization") {
        const RunResult r = run("train --scenario " + scen +
                                " --iters 0 --batch 4 --lr 0.1 --seed 9 --hidden 6 --out " +
                                tmp.file("run0"));
        CHECK(r.exit_code == 0);
        const std::string log = read_file(tmp.file("run0") + "/training_log.csv");
        CHECK(log == "iter,entropy_term,cost_term,objective,grad_norm,clip_applied\n");
        CHECK(fs::exists(tmp.file("run0") + "/checkpoint.json"));
        CHECK(fs::exists(tmp.file("run0") + "/manifest.json"));
    }
    SUBCASE("identical flags reproduce the log byte for byte") {
        const std::string flags =
            " --iters 8 --batch 8 --lr 0.05 --seed 31 --hidden 6 --workers 1 --out ";
        REQUIRE(run("train --scenario " + scen + flags + tmp.file("runA")).exit_code == 0);
        REQUIRE(run("train --scenario " + scen + flags + tmp.file("runB")).exit_code == 0);
        CHECK(read_file(tmp.file("runA") + "/training_log.csv") ==
              read_file(tmp.file("runB") + "/training_log.csv"));
        SUBCASE("and so does a different worker count") {
            const std::string flags4 =
                " --iters 8 --batch 8 --lr 0.05 --seed 31 --hidden 6 --workers 3 --out ";
            REQUIRE(run("train --scenario " + scen + flags4 + tmp.file("runC")).exit_code == 0);
            CHECK(read_file(tmp.file("runA") + "/training_log.csv") ==
                  read_file(tmp.file("runC") + "/training_log.csv"));
        }
    }
}

TEST_CASE("eval") {
    TempDir tmp;
    const std::string scen = tmp.file("f1.json");
    REQUIRE(run("build-scenario fixture --name f1 --out " + scen).exit_code == 0);
    REQUIRE(run("train --scenario " + scen +
                " --iters 5 --batch 8 --lr 0.05 --seed 3 --hidden 6 --out " + tmp.file("run"))
                .exit_code == 0);

    SUBCASE("report rows per policy per lookahead; gap closure printed") {
        const RunResult r = run("eval --scenario " + scen + " --checkpoint " +
                                tmp.file("run") + "/checkpoint.json" +
                                " --baselines random,oracle --trajectories 200 --seed 4"
                                " --k-list 1,2 --out " +
                                tmp.file("ev"));
        CHECK(r.exit_code == 0);
        CHECK(r.output.find("gap closure k=1") != std::string::npos);
        const std::string csv = read_file(tmp.file("ev") + "/report.csv");
        int lines = 0;
        for (char c : csv) lines += (c == '\n');
        CHECK(lines == 1 + 6);  // header + 3 policies x 2 lookaheads
        CHECK(fs::exists(tmp.file("ev") + "/accuracy_trace.csv"));
        CHECK(fs::exists(tmp.file("ev") + "/manifest.json"));
    }
    SUBCASE("per-trajectory dump is flag-gated") {
        const RunResult r = run("eval --scenario " + scen + " --trajectories 50 --seed 4"
                                " --dump-trajectories --out " +
                                tmp.file("ev2"));
        CHECK(r.exit_code == 0);
        const std::string csv = read_file(tmp.file("ev2") + "/trajectories.csv");
        CHECK(csv.rfind("traj,t,p_unsafe,w,query,obs,cost\n", 0) == 0);
    }
    SUBCASE("checkpoint for a different scenario is refused") {
        const std::string other = tmp.file("other.json");
        REQUIRE(run("build-scenario fixture --name f1-two-sensor --out " + other).exit_code == 0);
        const RunResult r = run("eval --scenario " + other + " --checkpoint " + tmp.file("run") +
                                "/checkpoint.json --trajectories 10 --seed 1 --out " +
                                tmp.file("ev3"));
        CHECK(r.exit_code == 3);
    }
    SUBCASE("deterministic reports") {
        const std::string args = "eval --scenario " + scen +
                                 " --trajectories 100 --seed 12 --out ";
        REQUIRE(run(args + tmp.file("e1")).exit_code == 0);
        REQUIRE(run(args + tmp.file("e2")).exit_code == 0);
        CHECK(read_file(tmp.file("e1") + "/report.csv") ==
              read_file(tmp.file("e2") + "/report.csv"));
    }
}

TEST_CASE("predict") {
    TempDir tmp;
    const std::string scen = tmp.file("f1.json");
    REQUIRE(run("build-scenario fixture --name f1 --out " + scen).exit_code == 0);

    SUBCASE("known history") {
        std::ofstream(tmp.file("h.txt")) << "s1 safe\n";
        const RunResult r =
            run("predict --scenario " + scen + " --history " + tmp.file("h.txt") + " --k 1");
        CHECK(r.exit_code == 0);
        CHECK(r.output.find("t,p_safe,entropy_bits,log_lik") != std::string::npos);
        CHECK(r.output.find("0,0.7,") != std::string::npos);
    }
    SUBCASE("empty history file") {
        std::ofstream(tmp.file("empty.txt")) << "";
        const RunResult r =
            run("predict --scenario " + scen + " --history " + tmp.file("empty.txt"));
        CHECK(r.exit_code == 2);
    }
    SUBCASE("alien observation token") {
        std::ofstream(tmp.file("bad.txt")) << "s1 warp\n";
        const RunResult r =
            run("predict --scenario " + scen + " --history " + tmp.file("bad.txt"));
        CHECK(r.exit_code == 3);
        CHECK(r.output.find("warp") != std::string::npos);
    }
    SUBCASE("impossible observation reports the line") {
        std::ofstream(tmp.file("imp.txt")) << "s1 crash\n";
        const RunResult r =
            run("predict --scenario " + scen + " --history " + tmp.file("imp.txt"));
        CHECK(r.exit_code == 3);
        CHECK(r.output.find("line 1") != std::string::npos);
    }
}

TEST_CASE("validate") {
    TempDir tmp;
    const std::string scen = tmp.file("f1.json");
    REQUIRE(run("build-scenario fixture --name f1 --out " + scen).exit_code == 0);

    SUBCASE("deep checks pass on the fixture") {
        const RunResult r = run("validate --scenario " + scen + " --deep");
        CHECK(r.exit_code == 0);
        CHECK(r.output.find("all checks passed") != std::string::npos);
    }
    SUBCASE("broken stochasticity is a validation failure naming the row") {
        std::string text = read_file(scen);
        const auto pos = text.find("\"p\": 0.3");
        REQUIRE(pos != std::string::npos);
        text.replace(pos, 8, "\"p\": 0.2");
        std::ofstream(tmp.file("bad.json")) << text;
        const RunResult r = run("validate --scenario " + tmp.file("bad.json"));
        CHECK(r.exit_code == 1);
        CHECK(r.output.find("'a'") != std::string::npos);  // offending state named
    }
    SUBCASE("large models skip enumeration with a notice") {
        const std::string cong = tmp.file("cong.json");
        REQUIRE(run("build-scenario congestion --k 1 --out " + cong).exit_code == 0);
        const RunResult r = run("validate --scenario " + cong + " --deep");
        CHECK(r.exit_code == 0);
        CHECK(r.output.find("deep checks skipped") != std::string::npos);
    }
}
