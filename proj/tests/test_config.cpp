#include <doctest.h>

#include "deepbsde/config.hpp"

using namespace deepbsde;

namespace {

std::string error_of(const std::string& text) {
    try {
        parse_run_config(text);
    } catch (const ConfigError& e) {
        return e.what();
    }
    return {};
}

}  // namespace

TEST_CASE("problem defaults") {
    const RunConfig bs = parse_run_config("[problem]\nname = black_scholes\n");
    CHECK(bs.problem.d == 100);
    CHECK(bs.problem.T == 1.0);
    CHECK(bs.problem.xi_mode == "ones");
    const FBSDEProblem p = make_problem(bs);
    CHECK(p.dim == 100);
    CHECK(p.xi == Vector::Ones(100));

    const RunConfig ac = parse_run_config("[problem]\nname = allen_cahn\n");
    CHECK(ac.problem.d == 20);
    CHECK(ac.problem.T == 0.3);
    CHECK(make_problem(ac).xi == Vector::Zero(20));

    const RunConfig h = parse_run_config("[problem]\nname = hjb\nd = 4\nxi_mode = constant\nxi_value = 0.5\n");
    CHECK(make_problem(h).xi == Vector::Constant(4, 0.5));
    CHECK(h.evaluation.steps == h.training.steps_N);
}

TEST_CASE("all sections parse") {
    const RunConfig c = parse_run_config(R"(
[problem]
name = black_scholes
d = 5
T = 2
r = 0.1
sigma = 0.3
[network]
architecture = naisnet
width = 32
layers = 3
epsilon = 0.02
h = 0.5
[training]
batch_M = 16
steps_N = 8
iterations = 10
learning_rate = 0.01
seed = 7
use_terminal_grad_term = true
threads = 2
shards = 4
[schedule]
levels = 2, 4, 8
[evaluation]
paths = 10
[generalization]
distances = 0, 0.1
[convergence]
steps = 4,8
[output]
directory = somewhere
record_elapsed = false
)");
    CHECK(c.network.architecture == "naisnet");
    CHECK(c.schedule.levels == std::vector<int>{2, 4, 8});
    CHECK(c.schedule.iterations_per_level == std::vector<int>{3, 3, 4});
    CHECK(c.generalization.distances == std::vector<double>{0.0, 0.1});
    CHECK(!c.output.record_elapsed);

    const TrainConfig t = make_train_config(c, 5);
    CHECK(t.network.architecture == Architecture::NAISNET);
    CHECK(t.network.epsilon == 0.02);
    CHECK(t.adam.learning_rate == 0.01);
    CHECK(t.use_terminal_grad_term);
    REQUIRE(t.schedule.has_value());
    CHECK(t.schedule->h0 == 1.0);
    CHECK(make_convergence_study(c).steps == std::vector<int>{4, 8});
}

TEST_CASE("resolved config round trips") {
    const RunConfig c = parse_run_config("[problem]\nname = hjb\nd = 3\n[schedule]\nlevels = 2,4\n");
    const std::string text = resolved_config_text(c);
    const RunConfig again = parse_run_config(text);
    CHECK(resolved_config_text(again) == text);
    CHECK(text.find("iterations_per_level = 500,500") != std::string::npos);
}

TEST_CASE("errors name the key") {
    CHECK(error_of("[network]\nwidth = 4\n").find("problem.name") != std::string::npos);
    CHECK(error_of("[problem]\nname = black_scholes\ncolour = red\n").find("problem.colour") != std::string::npos);
    CHECK(error_of("[problem]\nname = black_scholes\n[nonsense]\nx = 1\n").find("nonsense") != std::string::npos);
    CHECK(error_of("[problem]\nname = black_scholes\n[training]\nbatch_M = many\n").find("training.batch_M") !=
          std::string::npos);
    CHECK(error_of("[problem]\nname = black_scholes\n[training]\nseed = -1\n").find("training.seed") !=
          std::string::npos);
    CHECK(error_of("[problem]\nname = heston\n").find("problem.name") != std::string::npos);
    CHECK(error_of("[problem]\nname = black_scholes\n[network]\narchitecture = lstm\n").find("network.architecture") !=
          std::string::npos);
    CHECK(error_of("[problem]\nname = black_scholes\n[schedule]\nlevels = 2,4\niterations_per_level = 1\n")
              .find("schedule.iterations_per_level") != std::string::npos);
    CHECK(!error_of("[problem\nname = x").empty());
}

TEST_CASE("semantic validation through make_*") {
    const RunConfig bad_levels = parse_run_config("[problem]\nname = black_scholes\n[schedule]\nlevels = 4,2\n");
    CHECK_THROWS_AS(make_train_config(bad_levels, 100), ConfigError);
    const RunConfig bad_width = parse_run_config("[problem]\nname = black_scholes\n[network]\nwidth = 0\n");
    CHECK_THROWS_AS(make_net_config(bad_width, 100), ConfigError);
    const RunConfig bad_batch = parse_run_config("[problem]\nname = black_scholes\n[training]\nbatch_M = 0\n");
    CHECK_THROWS_AS(make_train_config(bad_batch, 100), ConfigError);
}
