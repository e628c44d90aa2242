#include <doctest.h>

#include <cmath>
#include <fstream>
#include <sstream>

#include "helpers.hpp"
#include "sws/artifacts.hpp"
#include "sws/cli.hpp"

using namespace sws;

namespace {

struct Result {
    int code;
    std::string out, err;
};

Result sws_run(std::vector<std::string> args) {
    std::ostringstream out, err;
    const int code = cli::run(args, out, err);
    return {code, out.str(), err.str()};
}

std::string dir(const std::string& name) {
    const auto d = testing::temp_path("cli-" + name);
    std::filesystem::remove_all(d);
    return d;
}

std::string write_config() {
    const auto path = testing::temp_path("cli.toml");
    std::ofstream(path) << "seed = 5\n"
                           "[model]\nimage_size = 8\npatch_size = 4\ndepth = 4\nwidth = 16\nheads = 2\n"
                           "mlp_ratio = 2.0\nclasses = 4\n"
                           "[plan]\nsizes = \"2,2\"\n"
                           "[train]\nepochs = 1\nbatch_size = 32\nalpha = 0.5\n"
                           "[data]\ncount = 160\nclasses = 4\nsize = 8\n"
                           "[teacher]\nwidth = 24\n";
    return path;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST_CASE("cli pipeline: teacher, aux, descendant, eval, sweep, finetune") {
    const auto cfg = write_config();
    const auto t = dir("teacher"), a = dir("aux"), v = dir("vanilla"), d = dir("des"), s = dir("sweep");

    auto r = sws_run({"train-teacher", "--config", cfg, "--out", t});
    REQUIRE(r.code == 0);
    CHECK(std::filesystem::exists(t + "/teacher.ckpt"));
    CHECK(load_checkpoint(t + "/teacher.ckpt").config.width == 24);

    r = sws_run({"train-aux", "--config", cfg, "--out", a, "--teacher-cache", t + "/teacher_logits.lc"});
    REQUIRE(r.code == 0);
    for (const char* f : {"aux.ckpt", "learngene.lg", "metrics.csv", "summary.txt", "manifest.txt"})
        CHECK(std::filesystem::exists(a + "/" + f));
    CHECK(slurp(a + "/manifest.txt").find("artifact.learngene.lg.fnv1a=") != std::string::npos);

    r = sws_run({"train-aux", "--config", cfg, "--out", v, "--teacher-cache", t + "/teacher_logits.lc",
                 "--model.depth", "2", "--plan.sizes", "1,1"});
    REQUIRE(r.code == 0);

    r = sws_run({"init-des", "--pack", a + "/learngene.lg", "--depth", "4", "--out", d});
    REQUIRE(r.code == 0);
    CHECK(slurp(d + "/assignment.csv") == "position,learngene_index\n1,1\n2,1\n3,2\n4,2\n");

    const auto e1 = sws_run({"eval", "--config", cfg, "--checkpoint", d + "/descendant.ckpt", "--out", dir("e1")});
    const auto e2 = sws_run({"eval", "--config", cfg, "--checkpoint", a + "/aux.ckpt", "--out", dir("e2")});
    REQUIRE(e1.code == 0);
    CHECK(e1.out.rfind("loss=", 0) == 0);
    CHECK(e1.out == e2.out);

    r = sws_run({"sweep-depth", "--config", cfg, "--pack", a + "/learngene.lg", "--vanilla", v + "/aux.ckpt",
                 "--depths", "2,3,5", "--out", s, "--scratch", "--train.epochs", "1"});
    REQUIRE(r.code == 0);
    const auto csv = slurp(s + "/sweep.csv");
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 1 + 3 * 3);
    CHECK(csv.rfind("depth,params,method,val_loss,top1\n", 0) == 0);

    r = sws_run({"sweep-depth", "--config", cfg, "--pack", a + "/learngene.lg", "--vanilla", v + "/aux.ckpt",
                 "--depths", "2,3", "--out", dir("sweep2")});
    CHECK(r.code == 0);
    CHECK(std::count(r.out.begin(), r.out.end(), '\n') == 1 + 2 * 2);

    r = sws_run({"finetune", "--config", cfg, "--checkpoint", d + "/descendant.ckpt", "--out", dir("ft")});
    CHECK(r.code == 0);
}

TEST_CASE("cli replays are byte-identical") {
    const auto cfg = write_config();
    const auto a = dir("replay-a"), b = dir("replay-b");
    REQUIRE(sws_run({"train-aux", "--config", cfg, "--out", a, "--train.alpha", "0"}).code == 0);
    REQUIRE(sws_run({"train-aux", "--config", cfg, "--out", b, "--train.alpha", "0"}).code == 0);
    for (const char* f : {"aux.ckpt", "learngene.lg", "metrics.csv", "summary.txt"}) CHECK(slurp(a + "/" + f) == slurp(b + "/" + f));
}

TEST_CASE("cli: untrained aux is at chance level") {
    const auto cfg = write_config();
    const auto a = dir("zero");
    REQUIRE(sws_run({"train-aux", "--config", cfg, "--out", a, "--train.epochs", "0", "--train.alpha", "0",
                     "--data.count", "800"})
                .code == 0);
    const auto r = sws_run({"eval", "--config", cfg, "--checkpoint", a + "/aux.ckpt", "--out", dir("zero-eval"),
                            "--data.count", "800"});
    REQUIRE(r.code == 0);
    const double top1 = std::stod(r.out.substr(r.out.find("top1=") + 5));
    CHECK(std::abs(top1 - 0.25) <= 3 * std::sqrt(0.25 * 0.75 / 160));
    CHECK(slurp(a + "/metrics.csv").find("\n1,") == std::string::npos);
}

TEST_CASE("cli: flags override config values") {
    const auto cfg = write_config();
    const auto a = dir("override");
    REQUIRE(sws_run({"train-aux", "--config", cfg, "--out", a, "--train.alpha", "0", "--train.epochs", "0",
                     "--model.depth", "3", "--plan.sizes", "1,2"})
                .code == 0);
    CHECK(load_checkpoint(a + "/aux.ckpt").depth() == 3);
    CHECK(slurp(a + "/manifest.txt").find("config.seed=5\n") != std::string::npos);
}

TEST_CASE("cli exit codes") {
    const auto cfg = write_config();
    const auto t = dir("codes-teacher");
    REQUIRE(sws_run({"train-teacher", "--config", cfg, "--out", t, "--train.epochs", "0"}).code == 0);

    CHECK(sws_run({"train-aux", "--bogus"}).code == 2);
    CHECK(sws_run({"train-aux", "--config", cfg, "--out", dir("c1"), "--plan.sizes", "1,1"}).code == 2);
    CHECK(sws_run({"train-aux", "--config", cfg, "--out", dir("c2")}).code == 2);  // alpha > 0 without cache
    CHECK(sws_run({"eval", "--config", cfg, "--checkpoint", testing::temp_path("none.ckpt"), "--out", dir("c3")})
              .code == 3);
    CHECK(sws_run({"eval", "--config", cfg, "--checkpoint", t + "/teacher_logits.lc", "--out", dir("c4")}).code ==
          4);
    CHECK(sws_run({"train-aux", "--config", cfg, "--out", dir("c5"), "--teacher-cache",
                   t + "/teacher_logits.lc", "--data.count", "120"})
              .code == 5);
    const auto help = sws_run({"--help"});
    CHECK(help.code == 0);
    CHECK(help.out.find("stale teacher-logit cache") != std::string::npos);
}
