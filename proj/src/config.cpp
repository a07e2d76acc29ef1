#include "deepbsde/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace deepbsde {

namespace pt = boost::property_tree;

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const char* expected) {
    throw ConfigError("config key " + key + ": cannot read '" + value + "' as " + expected);
}

template <typename T>
T parse_number(const std::string& key, const std::string& raw, const char* expected) {
    const std::string v = trim(raw);
    T out{};
    const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
    if (v.empty() || res.ec != std::errc() || res.ptr != v.data() + v.size()) bad_value(key, raw, expected);
    return out;
}

int parse_int(const std::string& key, const std::string& v) { return parse_number<int>(key, v, "an integer"); }
double parse_double(const std::string& key, const std::string& v) { return parse_number<double>(key, v, "a real number"); }
std::uint64_t parse_u64(const std::string& key, const std::string& v) {
    return parse_number<std::uint64_t>(key, v, "a non-negative integer");
}

bool parse_bool(const std::string& key, const std::string& raw) {
    const std::string v = trim(raw);
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    bad_value(key, raw, "a boolean");
}

template <typename T, typename F>
std::vector<T> parse_list(const std::string& key, const std::string& raw, F item) {
    std::vector<T> out;
    const std::string v = trim(raw);
    if (v.empty()) return out;
    std::stringstream ss(v);
    std::string piece;
    while (std::getline(ss, piece, ',')) out.push_back(item(key, piece));
    return out;
}

std::string number(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

template <typename T>
std::string join(const std::vector<T>& xs) {
    std::string out;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        if (i) out += ',';
        if constexpr (std::is_floating_point_v<T>)
            out += number(xs[i]);
        else
            out += std::to_string(xs[i]);
    }
    return out;
}

using Setter = std::function<void(const std::string& key, const std::string& value)>;
using SectionTable = std::map<std::string, Setter>;

std::map<std::string, SectionTable> make_table(RunConfig& c) {
    std::map<std::string, SectionTable> t;
    auto& p = t["problem"];
    p["name"] = [&c](auto&, auto& v) { c.problem.name = trim(v); };
    p["d"] = [&c](auto& k, auto& v) { c.problem.d = parse_int(k, v); };
    p["T"] = [&c](auto& k, auto& v) { c.problem.T = parse_double(k, v); };
    p["r"] = [&c](auto& k, auto& v) { c.problem.r = parse_double(k, v); };
    p["sigma"] = [&c](auto& k, auto& v) { c.problem.sigma = parse_double(k, v); };
    p["xi_mode"] = [&c](auto&, auto& v) { c.problem.xi_mode = trim(v); };
    p["xi_value"] = [&c](auto& k, auto& v) { c.problem.xi_value = parse_double(k, v); };
    p["terminal_norm"] = [&c](auto&, auto& v) { c.problem.terminal_norm = trim(v); };
    p["oracle_samples"] = [&c](auto& k, auto& v) { c.problem.oracle_samples = parse_int(k, v); };
    p["oracle_seed"] = [&c](auto& k, auto& v) { c.problem.oracle_seed = parse_u64(k, v); };

    auto& n = t["network"];
    n["architecture"] = [&c](auto&, auto& v) { c.network.architecture = trim(v); };
    n["width"] = [&c](auto& k, auto& v) { c.network.width = parse_int(k, v); };
    n["layers"] = [&c](auto& k, auto& v) { c.network.layers = parse_int(k, v); };
    n["epsilon"] = [&c](auto& k, auto& v) { c.network.epsilon = parse_double(k, v); };
    n["h"] = [&c](auto& k, auto& v) { c.network.h = parse_double(k, v); };
    n["projection_bound"] = [&c](auto& k, auto& v) { c.network.projection_bound = parse_double(k, v); };

    auto& tr = t["training"];
    tr["batch_M"] = [&c](auto& k, auto& v) { c.training.batch_M = parse_int(k, v); };
    tr["steps_N"] = [&c](auto& k, auto& v) { c.training.steps_N = parse_int(k, v); };
    tr["iterations"] = [&c](auto& k, auto& v) { c.training.iterations = parse_int(k, v); };
    tr["learning_rate"] = [&c](auto& k, auto& v) { c.training.learning_rate = parse_double(k, v); };
    tr["adam_beta1"] = [&c](auto& k, auto& v) { c.training.adam_beta1 = parse_double(k, v); };
    tr["adam_beta2"] = [&c](auto& k, auto& v) { c.training.adam_beta2 = parse_double(k, v); };
    tr["adam_eps"] = [&c](auto& k, auto& v) { c.training.adam_eps = parse_double(k, v); };
    tr["seed"] = [&c](auto& k, auto& v) { c.training.seed = parse_u64(k, v); };
    tr["use_terminal_grad_term"] = [&c](auto& k, auto& v) { c.training.use_terminal_grad_term = parse_bool(k, v); };
    tr["resample_paths"] = [&c](auto& k, auto& v) { c.training.resample_paths = parse_bool(k, v); };
    tr["y0_every"] = [&c](auto& k, auto& v) { c.training.y0_every = parse_int(k, v); };
    tr["shards"] = [&c](auto& k, auto& v) { c.training.shards = parse_int(k, v); };
    tr["threads"] = [&c](auto& k, auto& v) { c.training.threads = parse_int(k, v); };

    auto& s = t["schedule"];
    s["levels"] = [&c](auto& k, auto& v) { c.schedule.levels = parse_list<int>(k, v, parse_int); };
    s["iterations_per_level"] = [&c](auto& k, auto& v) {
        c.schedule.iterations_per_level = parse_list<int>(k, v, parse_int);
    };

    auto& e = t["evaluation"];
    e["paths"] = [&c](auto& k, auto& v) { c.evaluation.paths = parse_int(k, v); };
    e["steps"] = [&c](auto& k, auto& v) { c.evaluation.steps = parse_int(k, v); };
    e["seed"] = [&c](auto& k, auto& v) { c.evaluation.seed = parse_u64(k, v); };
    e["sample_paths"] = [&c](auto& k, auto& v) { c.evaluation.sample_paths = parse_int(k, v); };

    auto& g = t["generalization"];
    g["distances"] = [&c](auto& k, auto& v) { c.generalization.distances = parse_list<double>(k, v, parse_double); };
    g["samples"] = [&c](auto& k, auto& v) { c.generalization.samples = parse_int(k, v); };
    g["seed"] = [&c](auto& k, auto& v) { c.generalization.seed = parse_u64(k, v); };

    auto& cv = t["convergence"];
    cv["mu"] = [&c](auto& k, auto& v) { c.convergence.mu = parse_double(k, v); };
    cv["sigma"] = [&c](auto& k, auto& v) { c.convergence.sigma = parse_double(k, v); };
    cv["T"] = [&c](auto& k, auto& v) { c.convergence.T = parse_double(k, v); };
    cv["x0"] = [&c](auto& k, auto& v) { c.convergence.x0 = parse_double(k, v); };
    cv["paths"] = [&c](auto& k, auto& v) { c.convergence.paths = parse_int(k, v); };
    cv["steps"] = [&c](auto& k, auto& v) { c.convergence.steps = parse_list<int>(k, v, parse_int); };
    cv["seed"] = [&c](auto& k, auto& v) { c.convergence.seed = parse_u64(k, v); };

    auto& o = t["output"];
    o["directory"] = [&c](auto&, auto& v) { c.output.directory = trim(v); };
    o["record_elapsed"] = [&c](auto& k, auto& v) { c.output.record_elapsed = parse_bool(k, v); };
    return t;
}

void resolve(RunConfig& c) {
    const std::string& name = c.problem.name;
    if (name.empty()) throw ConfigError("config key problem.name is required");
    if (name != "black_scholes" && name != "hjb" && name != "allen_cahn")
        throw ConfigError("config key problem.name: unknown problem '" + name +
                          "' (expected black_scholes, hjb or allen_cahn)");
    if (!c.problem.d) c.problem.d = name == "allen_cahn" ? 20 : 100;
    if (!c.problem.T) c.problem.T = name == "allen_cahn" ? 0.3 : 1.0;
    if (c.problem.xi_mode.empty()) c.problem.xi_mode = name == "black_scholes" ? "ones" : "zeros";
    if (c.problem.xi_mode != "ones" && c.problem.xi_mode != "zeros" && c.problem.xi_mode != "constant")
        throw ConfigError("config key problem.xi_mode: expected ones, zeros or constant");
    if (c.problem.terminal_norm != "squared" && c.problem.terminal_norm != "plain")
        throw ConfigError("config key problem.terminal_norm: expected squared or plain");
    if (*c.problem.d < 1) throw ConfigError("config key problem.d must be >= 1");
    if (!(*c.problem.T > 0.0)) throw ConfigError("config key problem.T must be > 0");
    if (!(c.problem.sigma > 0.0)) throw ConfigError("config key problem.sigma must be > 0");
    if (c.problem.oracle_samples < 1) throw ConfigError("config key problem.oracle_samples must be >= 1");

    if (!parse_architecture(c.network.architecture))
        throw ConfigError("config key network.architecture: expected fc, resnet or naisnet");

    if (!c.evaluation.steps) c.evaluation.steps = c.training.steps_N;

    if (!c.schedule.levels.empty() && c.schedule.iterations_per_level.empty()) {
        const int L = static_cast<int>(c.schedule.levels.size());
        c.schedule.iterations_per_level.assign(static_cast<std::size_t>(L), c.training.iterations / L);
        c.schedule.iterations_per_level.back() += c.training.iterations % L;
    }
    if (c.schedule.levels.empty() && !c.schedule.iterations_per_level.empty())
        throw ConfigError("config key schedule.iterations_per_level given without schedule.levels");
    if (!c.schedule.levels.empty() && c.schedule.iterations_per_level.size() != c.schedule.levels.size())
        throw ConfigError("config key schedule.iterations_per_level: expected " +
                          std::to_string(c.schedule.levels.size()) + " entries");
}

}  // namespace

RunConfig parse_run_config(const std::string& text) {
    pt::ptree tree;
    try {
        std::istringstream in(text);
        pt::read_ini(in, tree);
    } catch (const pt::ini_parser_error& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }

    RunConfig c;
    auto table = make_table(c);
    for (const auto& [section, body] : tree) {
        if (body.empty()) throw ConfigError("config key " + section + " is outside any section");
        const auto sec = table.find(section);
        if (sec == table.end()) throw ConfigError("config: unknown section [" + section + "]");
        for (const auto& [key, leaf] : body) {
            const std::string full = section + "." + key;
            const auto setter = sec->second.find(key);
            if (setter == sec->second.end()) throw ConfigError("config: unknown key " + full);
            setter->second(full, leaf.data());
        }
    }
    resolve(c);
    return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_run_config(buf.str());
}

std::string resolved_config_text(const RunConfig& c) {
    auto b = [](bool v) { return std::string(v ? "true" : "false"); };
    std::ostringstream os;
    os << "[problem]\n"
       << "name = " << c.problem.name << '\n'
       << "d = " << c.problem.d.value_or(0) << '\n'
       << "T = " << number(c.problem.T.value_or(0.0)) << '\n'
       << "r = " << number(c.problem.r) << '\n'
       << "sigma = " << number(c.problem.sigma) << '\n'
       << "xi_mode = " << c.problem.xi_mode << '\n'
       << "xi_value = " << number(c.problem.xi_value) << '\n'
       << "terminal_norm = " << c.problem.terminal_norm << '\n'
       << "oracle_samples = " << c.problem.oracle_samples << '\n'
       << "oracle_seed = " << c.problem.oracle_seed << "\n\n"
       << "[network]\n"
       << "architecture = " << c.network.architecture << '\n'
       << "width = " << c.network.width << '\n'
       << "layers = " << c.network.layers << '\n'
       << "epsilon = " << number(c.network.epsilon) << '\n'
       << "h = " << number(c.network.h) << '\n'
       << "projection_bound = " << number(c.network.projection_bound) << "\n\n"
       << "[training]\n"
       << "batch_M = " << c.training.batch_M << '\n'
       << "steps_N = " << c.training.steps_N << '\n'
       << "iterations = " << c.training.iterations << '\n'
       << "learning_rate = " << number(c.training.learning_rate) << '\n'
       << "adam_beta1 = " << number(c.training.adam_beta1) << '\n'
       << "adam_beta2 = " << number(c.training.adam_beta2) << '\n'
       << "adam_eps = " << number(c.training.adam_eps) << '\n'
       << "seed = " << c.training.seed << '\n'
       << "use_terminal_grad_term = " << b(c.training.use_terminal_grad_term) << '\n'
       << "resample_paths = " << b(c.training.resample_paths) << '\n'
       << "y0_every = " << c.training.y0_every << '\n'
       << "shards = " << c.training.shards << '\n'
       << "threads = " << c.training.threads << "\n\n"
       << "[schedule]\n"
       << "levels = " << join(c.schedule.levels) << '\n'
       << "iterations_per_level = " << join(c.schedule.iterations_per_level) << "\n\n"
       << "[evaluation]\n"
       << "paths = " << c.evaluation.paths << '\n'
       << "steps = " << c.evaluation.steps.value_or(c.training.steps_N) << '\n'
       << "seed = " << c.evaluation.seed << '\n'
       << "sample_paths = " << c.evaluation.sample_paths << "\n\n"
       << "[generalization]\n"
       << "distances = " << join(c.generalization.distances) << '\n'
       << "samples = " << c.generalization.samples << '\n'
       << "seed = " << c.generalization.seed << "\n\n"
       << "[convergence]\n"
       << "mu = " << number(c.convergence.mu) << '\n'
       << "sigma = " << number(c.convergence.sigma) << '\n'
       << "T = " << number(c.convergence.T) << '\n'
       << "x0 = " << number(c.convergence.x0) << '\n'
       << "paths = " << c.convergence.paths << '\n'
       << "steps = " << join(c.convergence.steps) << '\n'
       << "seed = " << c.convergence.seed << "\n\n"
       << "[output]\n"
       << "directory = " << c.output.directory << '\n'
       << "record_elapsed = " << b(c.output.record_elapsed) << '\n';
    return os.str();
}

FBSDEProblem make_problem(const RunConfig& c) {
    const int d = c.problem.d.value_or(1);
    const double T = c.problem.T.value_or(1.0);
    Vector xi;
    if (c.problem.xi_mode == "ones")
        xi = Vector::Ones(d);
    else if (c.problem.xi_mode == "zeros")
        xi = Vector::Zero(d);
    else
        xi = Vector::Constant(d, c.problem.xi_value);

    try {
        if (c.problem.name == "black_scholes") return black_scholes(d, c.problem.r, c.problem.sigma, T, xi);
        if (c.problem.name == "hjb") return hjb(d, T, xi, c.problem.oracle_seed, c.problem.oracle_samples);
        if (c.problem.name == "allen_cahn") return allen_cahn(d, T, xi, c.problem.terminal_norm == "squared");
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("config [problem]: ") + e.what());
    }
    throw ConfigError("config key problem.name: unknown problem '" + c.problem.name + "'");
}

NetConfig make_net_config(const RunConfig& c, int state_dim) {
    NetConfig n;
    n.state_dim = state_dim;
    n.hidden_width = c.network.width;
    n.num_hidden_layers = c.network.layers;
    n.architecture = *parse_architecture(c.network.architecture);
    n.epsilon = c.network.epsilon;
    n.block_step_h = c.network.h;
    n.projection_bound = c.network.projection_bound;
    try {
        n.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("config [network]: ") + e.what());
    }
    return n;
}

TrainConfig make_train_config(const RunConfig& c, int state_dim) {
    TrainConfig t;
    t.batch_M = c.training.batch_M;
    t.steps_N = c.training.steps_N;
    t.iterations = c.training.iterations;
    t.adam.learning_rate = c.training.learning_rate;
    t.adam.beta1 = c.training.adam_beta1;
    t.adam.beta2 = c.training.adam_beta2;
    t.adam.eps = c.training.adam_eps;
    t.use_terminal_grad_term = c.training.use_terminal_grad_term;
    t.seed = c.training.seed;
    t.network = make_net_config(c, state_dim);
    t.resample_paths = c.training.resample_paths;
    t.y0_every = c.training.y0_every;
    t.shards = c.training.shards;
    t.threads = c.training.threads;
    if (!c.schedule.levels.empty()) {
        LevelSchedule s;
        s.steps_per_level = c.schedule.levels;
        s.iterations_per_level = c.schedule.iterations_per_level;
        const double T = c.problem.T.value_or(1.0);
        s.h0 = T / s.steps_per_level.front();
        s.level_factor = s.steps_per_level.size() > 1
                             ? static_cast<double>(s.steps_per_level[1]) / s.steps_per_level[0]
                             : 2.0;
        try {
            s.validate();
        } catch (const std::invalid_argument& e) {
            throw ConfigError(std::string("config key schedule.levels: ") + e.what());
        }
        t.schedule = std::move(s);
    }
    t.validate();
    return t;
}

ConvergenceStudy make_convergence_study(const RunConfig& c) {
    ConvergenceStudy s;
    s.mu = c.convergence.mu;
    s.sigma = c.convergence.sigma;
    s.horizon = c.convergence.T;
    s.x0 = c.convergence.x0;
    s.paths = c.convergence.paths;
    s.steps = c.convergence.steps;
    s.seed = c.convergence.seed;
    if (s.paths < 1) throw ConfigError("config key convergence.paths must be >= 1");
    if (s.steps.empty()) throw ConfigError("config key convergence.steps must list at least one N");
    if (!(s.x0 > 0.0)) throw ConfigError("config key convergence.x0 must be > 0");
    if (!(s.horizon > 0.0)) throw ConfigError("config key convergence.T must be > 0");
    return s;
}

}  // namespace deepbsde
