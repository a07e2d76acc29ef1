#include "deepbsde/checkpoint.hpp"

#include <json.hpp>

#include <fstream>
#include <sstream>

namespace deepbsde {

using nlohmann::json;

namespace {

constexpr const char* kFormat = "deepbsde-checkpoint/1";

std::string describe(const NetConfig& c) {
    std::ostringstream os;
    os << architecture_name(c.architecture) << " d=" << c.state_dim << " width=" << c.hidden_width
       << " layers=" << c.num_hidden_layers << ", lift.weight "
       << shape_string(c.hidden_width, c.input_dim());
    return os.str();
}

}  // namespace

std::string checkpoint_to_string(const NetworkParams& params) {
    const NetConfig& c = params.config;
    json doc;
    doc["format"] = kFormat;
    doc["network"] = {{"architecture", architecture_name(c.architecture)},
                      {"state_dim", c.state_dim},
                      {"hidden_width", c.hidden_width},
                      {"num_hidden_layers", c.num_hidden_layers},
                      {"epsilon", c.epsilon},
                      {"block_step_h", c.block_step_h},
                      {"projection_bound", c.projection_bound}};
    json arrays = json::array();
    for (const auto& e : params.entries) {
        std::vector<double> values;
        values.reserve(static_cast<std::size_t>(e.value.size()));
        for (Eigen::Index i = 0; i < e.value.rows(); ++i)
            for (Eigen::Index j = 0; j < e.value.cols(); ++j) values.push_back(e.value(i, j));
        arrays.push_back({{"name", e.name}, {"shape", {e.value.rows(), e.value.cols()}}, {"values", values}});
    }
    doc["arrays"] = std::move(arrays);
    return doc.dump(1);
}

NetworkParams checkpoint_from_string(const std::string& text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::exception& e) {
        throw CheckpointError(std::string("checkpoint: malformed JSON: ") + e.what());
    }
    try {
        if (doc.at("format").get<std::string>() != kFormat)
            throw CheckpointError("checkpoint: unsupported format " + doc.at("format").dump());
        const json& n = doc.at("network");
        NetConfig c;
        const auto arch = parse_architecture(n.at("architecture").get<std::string>());
        if (!arch) throw CheckpointError("checkpoint: unknown architecture " + n.at("architecture").dump());
        c.architecture = *arch;
        c.state_dim = n.at("state_dim").get<int>();
        c.hidden_width = n.at("hidden_width").get<int>();
        c.num_hidden_layers = n.at("num_hidden_layers").get<int>();
        c.epsilon = n.at("epsilon").get<double>();
        c.block_step_h = n.at("block_step_h").get<double>();
        c.projection_bound = n.at("projection_bound").get<double>();

        NetworkParams p = zero_params(c);
        const json& arrays = doc.at("arrays");
        if (arrays.size() != p.entries.size())
            throw CheckpointError("checkpoint: expected " + std::to_string(p.entries.size()) +
                                  " arrays, found " + std::to_string(arrays.size()));
        for (std::size_t k = 0; k < arrays.size(); ++k) {
            const json& a = arrays[k];
            Parameter& e = p.entries[k];
            if (a.at("name").get<std::string>() != e.name)
                throw CheckpointError("checkpoint: array " + std::to_string(k) + " is named " +
                                      a.at("name").dump() + ", expected \"" + e.name + "\"");
            const auto shape = a.at("shape").get<std::vector<Eigen::Index>>();
            if (shape.size() != 2 || shape[0] != e.value.rows() || shape[1] != e.value.cols())
                throw CheckpointError("checkpoint: array " + e.name + " has shape " + a.at("shape").dump() +
                                      ", expected " + shape_string(e.value.rows(), e.value.cols()));
            const auto values = a.at("values").get<std::vector<double>>();
            if (values.size() != static_cast<std::size_t>(e.value.size()))
                throw CheckpointError("checkpoint: array " + e.name + " has wrong value count");
            std::size_t idx = 0;
            for (Eigen::Index i = 0; i < e.value.rows(); ++i)
                for (Eigen::Index j = 0; j < e.value.cols(); ++j) e.value(i, j) = values[idx++];
        }
        return p;
    } catch (const json::exception& e) {
        throw CheckpointError(std::string("checkpoint: ") + e.what());
    } catch (const std::invalid_argument& e) {
        throw CheckpointError(std::string("checkpoint: ") + e.what());
    }
}

void save_checkpoint(const std::filesystem::path& path, const NetworkParams& params) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw CheckpointError("checkpoint: cannot open " + path.string() + " for writing");
    out << checkpoint_to_string(params) << '\n';
    if (!out) throw CheckpointError("checkpoint: write failed for " + path.string());
}

NetworkParams load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError("checkpoint: cannot open " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return checkpoint_from_string(buf.str());
}

void require_compatible(const NetworkParams& params, const NetConfig& expected) {
    const NetConfig& c = params.config;
    if (c.architecture != expected.architecture || c.state_dim != expected.state_dim ||
        c.hidden_width != expected.hidden_width || c.num_hidden_layers != expected.num_hidden_layers)
        throw CheckpointError("checkpoint network (" + describe(c) +
                              ") does not match configured network (" + describe(expected) + ")");
}

}  // namespace deepbsde
