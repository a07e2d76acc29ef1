#include "deepbsde/cli.hpp"

#include "deepbsde/checkpoint.hpp"
#include "deepbsde/report.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <functional>
#include <ostream>

namespace deepbsde {

namespace {

constexpr int kTimingLossWindow = 100;

void write_file(const std::filesystem::path& path, const std::function<void(std::ostream&)>& body) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    body(out);
    out.flush();
    if (!out) throw IoError("failed writing " + path.string());
}

void prepare_output(const RunConfig& config, const std::filesystem::path& out) {
    std::error_code ec;
    std::filesystem::create_directories(out, ec);
    if (ec) throw IoError("cannot create output directory " + out.string() + ": " + ec.message());
    write_file(out / "resolved_config.ini", [&](std::ostream& os) { os << resolved_config_text(config); });
}

// Runs `body`, translating the library's exception types into exit codes.
int guarded(std::ostream& log, const char* command, const std::function<void()>& body) {
    try {
        body();
        return kExitOk;
    } catch (const ConfigError& e) {
        log << command << ": " << e.what() << '\n';
        return kExitConfig;
    } catch (const CheckpointError& e) {
        log << command << ": " << e.what() << '\n';
        return kExitCheckpoint;
    } catch (const NumericalError& e) {
        log << command << ": " << e.what() << '\n';
        return kExitDivergence;
    } catch (const IoError& e) {
        log << command << ": " << e.what() << '\n';
        return kExitIo;
    } catch (const std::filesystem::filesystem_error& e) {
        log << command << ": " << e.what() << '\n';
        return kExitIo;
    } catch (const std::invalid_argument& e) {
        log << command << ": " << e.what() << '\n';
        return kExitConfig;
    } catch (const std::exception& e) {
        log << command << ": " << e.what() << '\n';
        return kExitIo;
    }
}

NetworkParams load_for(const RunConfig& config, const FBSDEProblem& problem, const std::filesystem::path& checkpoint) {
    if (!std::filesystem::exists(checkpoint)) throw CheckpointError("checkpoint not found: " + checkpoint.string());
    NetworkParams params = load_checkpoint(checkpoint);
    require_compatible(params, make_net_config(config, problem.dim));
    return params;
}

}  // namespace

int cmd_train(const RunConfig& config, const std::filesystem::path& out, std::ostream& log) {
    return guarded(log, "train", [&] {
        const FBSDEProblem problem = make_problem(config);
        const TrainConfig train_config = make_train_config(config, problem.dim);
        prepare_output(config, out);

        const TrainReport report = train(problem, train_config, [&](const IterationRecord& rec) {
            if (!std::isnan(rec.y0))
                log << "iteration " << rec.iteration << " level " << rec.level << " loss " << format_number(rec.loss)
                    << " y0 " << format_number(rec.y0) << '\n';
        });

        write_file(out / "loss_curve.csv",
                   [&](std::ostream& os) { write_loss_curve_csv(os, report, config.output.record_elapsed); });
        save_checkpoint(out / "checkpoint.json", report.params);
        const std::vector<TimingRow> rows = timing_table(std::span(&report, 1), problem, kTimingLossWindow);
        write_file(out / "timings.csv", [&](std::ostream& os) { write_timings_csv(os, rows); });
    });
}

int cmd_evaluate(const RunConfig& config, const std::filesystem::path& checkpoint, const std::filesystem::path& out,
                 std::ostream& log) {
    return guarded(log, "evaluate", [&] {
        const FBSDEProblem problem = make_problem(config);
        const NetworkParams params = load_for(config, problem, checkpoint);
        if (config.evaluation.paths < 1) throw ConfigError("config key evaluation.paths must be >= 1");
        const int steps = config.evaluation.steps.value_or(config.training.steps_N);
        if (steps < 1) throw ConfigError("config key evaluation.steps must be >= 1");
        if (!problem.has_reference())
            throw ConfigError("config key problem.name: " + problem.name + " has no reference solution to evaluate against");
        prepare_output(config, out);

        const ErrorCurve curve = evaluate_error_curve(problem, params, config.evaluation.paths, steps,
                                                      config.evaluation.seed, config.evaluation.sample_paths);
        write_file(out / "error_curve.csv", [&](std::ostream& os) { write_error_curve_csv(os, curve); });
        write_file(out / "sample_paths.csv", [&](std::ostream& os) { write_sample_paths_csv(os, curve); });
    });
}

int cmd_generalize(const RunConfig& config, const std::filesystem::path& checkpoint,
                   const std::vector<double>& distances, const std::filesystem::path& out, std::ostream& log) {
    return guarded(log, "generalize", [&] {
        if (distances.empty()) throw ConfigError("config key generalization.distances is empty");
        for (std::size_t i = 0; i < distances.size(); ++i) {
            if (!(distances[i] >= 0.0 && distances[i] <= 1.0))
                throw ConfigError("config key generalization.distances: values must lie in [0, 1]");
            if (i > 0 && distances[i] <= distances[i - 1])
                throw ConfigError("config key generalization.distances: values must be strictly increasing");
        }
        if (config.generalization.samples < 1) throw ConfigError("config key generalization.samples must be >= 1");
        const FBSDEProblem problem = make_problem(config);
        if (!problem.has_reference())
            throw ConfigError("config key problem.name: " + problem.name + " has no reference solution to compare with");
        const NetworkParams params = load_for(config, problem, checkpoint);
        prepare_output(config, out);

        const GeneralizationSweep sweep =
            generalization_sweep(problem, params, distances, config.generalization.samples, config.generalization.seed);
        if (sweep.absolute_fallback) log << "generalize: xi = 0, perturbations are absolute\n";
        write_file(out / "generalization.csv",
                   [&](std::ostream& os) { write_generalization_csv(os, std::span(&sweep, 1)); });
    });
}

int cmd_convergence(const RunConfig& config, const std::filesystem::path& out, std::ostream& log) {
    return guarded(log, "convergence", [&] {
        const ConvergenceStudy study = make_convergence_study(config);
        prepare_output(config, out);
        const std::vector<ConvergenceRow> rows = strong_convergence(study);
        write_file(out / "convergence.csv", [&](std::ostream& os) { write_convergence_csv(os, rows); });
    });
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& log) {
    CLI::App app{"Deep BSDE solver: training, evaluation and reporting"};
    app.require_subcommand(1);

    std::string config_path;
    std::string checkpoint_path;
    std::string out_dir;
    int threads = 0;
    std::vector<double> distances;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "INI run configuration")->required();
        sub->add_option("--out", out_dir, "output directory (default: output.directory)");
        sub->add_option("--threads", threads, "worker threads (overrides training.threads)")
            ->check(CLI::PositiveNumber);
    };
    CLI::App* train_cmd = app.add_subcommand("train", "train a network and write loss_curve.csv and checkpoint.json");
    CLI::App* eval_cmd = app.add_subcommand("evaluate", "write error_curve.csv and sample_paths.csv");
    CLI::App* gen_cmd = app.add_subcommand("generalize", "write generalization.csv");
    CLI::App* conv_cmd = app.add_subcommand("convergence", "write convergence.csv");
    for (CLI::App* sub : {train_cmd, eval_cmd, gen_cmd, conv_cmd}) add_common(sub);
    for (CLI::App* sub : {eval_cmd, gen_cmd})
        sub->add_option("--checkpoint", checkpoint_path, "checkpoint (default: <out>/checkpoint.json)");
    CLI::Option* distances_opt =
        gen_cmd->add_option("--distances", distances, "relative distances (overrides generalization.distances)")
            ->delimiter(',');

    std::vector<std::string> reversed(args.begin() + (args.empty() ? 0 : 1), args.end());
    std::reverse(reversed.begin(), reversed.end());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        log << e.what() << '\n';
        return kExitConfig;
    }

    RunConfig config;
    const int status = guarded(log, "config", [&] {
        config = load_run_config(config_path);
        if (threads > 0) config.training.threads = threads;
    });
    if (status != kExitOk) return status;
    if (!out_dir.empty()) config.output.directory = out_dir;
    const std::filesystem::path dir = config.output.directory;
    const std::filesystem::path checkpoint = checkpoint_path.empty() ? dir / "checkpoint.json" : std::filesystem::path(checkpoint_path);

    if (*train_cmd) return cmd_train(config, dir, log);
    if (*eval_cmd) return cmd_evaluate(config, checkpoint, dir, log);
    if (*gen_cmd) {
        if (distances_opt->count() > 0) config.generalization.distances = distances;
        return cmd_generalize(config, checkpoint, config.generalization.distances, dir, log);
    }
    return cmd_convergence(config, dir, log);
}

}  // namespace deepbsde
