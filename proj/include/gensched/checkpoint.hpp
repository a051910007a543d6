#pragma once

// Checkpoint persistence. Parameters are stored as shortest-round-trip
// decimal strings so save -> load -> save is byte-identical and reload
// reproduces forward passes bit-exactly. The rng "state" is the pair
// (master seed, iteration counter): all training streams are derived from
// it, which makes resume equivalence exact.

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "gensched/config.hpp"
#include "gensched/net.hpp"

namespace gensched {

inline constexpr int kCheckpointVersion = 1;

inline std::string double_to_string(double v) {
    char buf[40];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

inline double string_to_double(const std::string& s) {
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size())
        throw std::invalid_argument("checkpoint: bad numeric string \"" + s + "\"");
    return v;
}

inline json doubles_to_json(const std::vector<double>& values) {
    json arr = json::array();
    for (double v : values) arr.push_back(double_to_string(v));
    return arr;
}

inline std::vector<double> doubles_from_json(const json& arr) {
    std::vector<double> out;
    out.reserve(arr.size());
    for (const auto& v : arr) out.push_back(string_to_double(v.get<std::string>()));
    return out;
}

inline json opt_state_to_json(const OptState& opt) {
    return {{"m", doubles_to_json(opt.m)}, {"v", doubles_to_json(opt.v)},
            {"step", opt.step},            {"lr", double_to_string(opt.lr)},
            {"beta1", opt.beta1},          {"beta2", opt.beta2},
            {"eps", opt.eps}};
}

inline OptState opt_state_from_json(const json& j) {
    OptState opt;
    opt.m = doubles_from_json(j.at("m"));
    opt.v = doubles_from_json(j.at("v"));
    opt.step = j.at("step").get<long>();
    opt.lr = string_to_double(j.at("lr").get<std::string>());
    opt.beta1 = j.at("beta1").get<double>();
    opt.beta2 = j.at("beta2").get<double>();
    opt.eps = j.at("eps").get<double>();
    return opt;
}

struct Checkpoint {
    int version = kCheckpointVersion;
    RunConfig config;
    long iteration = 0;
    std::vector<double> agent_params;
    OptState agent_opt;
    std::vector<double> disc_params;
    OptState disc_opt;
    bool has_fidelity = false;
    std::vector<double> fidelity_params;
    OptState fidelity_opt;
};

inline json checkpoint_to_json(const Checkpoint& ckpt) {
    json j;
    j["version"] = ckpt.version;
    j["config"] = run_config_to_json(ckpt.config);
    j["iteration"] = ckpt.iteration;
    j["agent_params"] = doubles_to_json(ckpt.agent_params);
    j["agent_opt"] = opt_state_to_json(ckpt.agent_opt);
    j["disc_params"] = doubles_to_json(ckpt.disc_params);
    j["disc_opt"] = opt_state_to_json(ckpt.disc_opt);
    j["has_fidelity"] = ckpt.has_fidelity;
    if (ckpt.has_fidelity) {
        j["fidelity_params"] = doubles_to_json(ckpt.fidelity_params);
        j["fidelity_opt"] = opt_state_to_json(ckpt.fidelity_opt);
    }
    return j;
}

inline Checkpoint checkpoint_from_json(const json& j) {
    Checkpoint ckpt;
    ckpt.version = j.at("version").get<int>();
    if (ckpt.version != kCheckpointVersion)
        throw std::invalid_argument("checkpoint: unsupported version " +
                                    std::to_string(ckpt.version));
    ckpt.config = parse_run_config(j.at("config"));
    ckpt.iteration = j.at("iteration").get<long>();
    ckpt.agent_params = doubles_from_json(j.at("agent_params"));
    ckpt.agent_opt = opt_state_from_json(j.at("agent_opt"));
    ckpt.disc_params = doubles_from_json(j.at("disc_params"));
    ckpt.disc_opt = opt_state_from_json(j.at("disc_opt"));
    ckpt.has_fidelity = j.at("has_fidelity").get<bool>();
    if (ckpt.has_fidelity) {
        ckpt.fidelity_params = doubles_from_json(j.at("fidelity_params"));
        ckpt.fidelity_opt = opt_state_from_json(j.at("fidelity_opt"));
    }
    return ckpt;
}

// temp-file + rename so readers never observe a partial file
inline void write_file_atomic(const std::string& path, const std::string& contents) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot open for writing: " + tmp);
        out << contents;
        if (!out) throw std::runtime_error("write failed: " + tmp);
    }
    std::filesystem::rename(tmp, path);
}

inline void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    write_file_atomic(path, checkpoint_to_json(ckpt).dump(1));
}

inline Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
    json j;
    in >> j;
    return checkpoint_from_json(j);
}

}  // namespace gensched
