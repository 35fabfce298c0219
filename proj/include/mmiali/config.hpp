// Copyright 2026 The mmiali Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <string>

#include "json.hpp"
#include "mmiali/losses.hpp"
#include "mmiali/networks.hpp"
#include "mmiali/trainer.hpp"

namespace mmiali {

/// Complete description of one experiment. Serialized as JSON; see
/// `config_schema_help()` for the key schema.
struct RunConfig {
    std::size_t domains = 3;
    std::string output_dir = "run";
    /// Directory written by `gen-data`; empty means generate in memory from `data_seed`.
    std::string data_dir;
    std::uint64_t data_seed = 0;
    ArchConfig arch{};
    ObjectiveConfig objective{};
    TrainConfig train{};

    friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

inline std::string config_schema_help() {
    return R"(RunConfig JSON schema (all keys optional; unknown keys are rejected):
{
  "domains": 3,                      number of domains m (>= 1)
  "output_dir": "run",               checkpoints, history and metrics (env MMIALI_OUTPUT_DIR overrides)
  "data": {
    "dir": "",                       directory produced by gen-data; empty: generate in memory
    "seed": 0                        dataset seed when generating in memory
  },
  "arch": {
    "data_dim": 2, "latent_dim": 8, "hidden": 64,
    "sigma": 0.01,                   encoder noise scale
    "share_latent_layers": false     share encoder output / decoder input layers (PS variant)
  },
  "objective": {
    "gamma": 0.5,                    DMAE weight in [0,1]
    "beta": 1.0,                     regularizer weight >= 0
    "pi": [],                        domain mixture weights (empty: uniform)
    "mode": "unsupervised",          "supervised" | "unsupervised"
    "norm": "l2",                    "l1" | "l2"
    "clamp_eps": 1e-7,               critic probability clamp
    "feature_cycle_count": "per_pair"  "per_pair" | "per_domain"
  },
  "train": {
    "steps": 1000, "batch_size": 128, "critic_steps": 1,
    "lr_generator": 1e-4, "lr_critic": 1e-4,
    "beta1": 0.5, "beta2": 0.999, "adam_eps": 1e-8,
    "seed": 0,                       initialization and training stream
    "checkpoint_every": 0,           0: final checkpoint only
    "eval_every": 100                loss-history interval (0: none)
  }
})";
}

namespace detail {

inline void reject_unknown(const nlohmann::json& j, const std::set<std::string>& allowed, const std::string& where) {
    if (!j.is_object()) throw Error("config: '" + where + "' must be an object");
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!allowed.count(it.key()))
            throw Error("config: unknown key '" + (where.empty() ? "" : where + ".") + it.key() + "'");
}

template <typename T>
void read_key(const nlohmann::json& j, const char* key, T& out, const std::string& where) {
    if (!j.contains(key)) return;
    const std::string full = (where.empty() ? "" : where + ".") + key;
    const auto& v = j.at(key);
    try {
        if constexpr (std::is_same_v<T, bool>) {
            if (!v.is_boolean()) throw Error("expected boolean");
        } else if constexpr (std::is_integral_v<T>) {
            if (!v.is_number_unsigned()) throw Error("expected nonnegative integer");
        } else if constexpr (std::is_floating_point_v<T>) {
            if (!v.is_number()) throw Error("expected number");
        } else if constexpr (std::is_same_v<T, std::string>) {
            if (!v.is_string()) throw Error("expected string");
        }
        out = v.get<T>();
    } catch (const Error& e) {
        throw Error("config: key '" + full + "': " + e.what());
    } catch (const nlohmann::json::exception& e) {
        throw Error("config: key '" + full + "': " + e.what());
    }
}

}  // namespace detail

inline nlohmann::json to_json(const RunConfig& c) {
    nlohmann::json j;
    j["domains"] = c.domains;
    j["output_dir"] = c.output_dir;
    j["data"] = {{"dir", c.data_dir}, {"seed", c.data_seed}};
    j["arch"] = {{"data_dim", c.arch.data_dim},
                 {"latent_dim", c.arch.latent_dim},
                 {"hidden", c.arch.hidden},
                 {"sigma", c.arch.sigma},
                 {"share_latent_layers", c.arch.share_latent_layers}};
    j["objective"] = {{"gamma", c.objective.gamma},
                      {"beta", c.objective.beta},
                      {"pi", c.objective.pi},
                      {"mode", mode_name(c.objective.mode)},
                      {"norm", norm_name(c.objective.norm)},
                      {"clamp_eps", c.objective.clamp_eps},
                      {"feature_cycle_count", feature_count_name(c.objective.feature_count)}};
    j["train"] = {{"steps", c.train.steps},
                  {"batch_size", c.train.batch_size},
                  {"critic_steps", c.train.critic_steps},
                  {"lr_generator", c.train.generator_opt.lr},
                  {"lr_critic", c.train.critic_opt.lr},
                  {"beta1", c.train.generator_opt.beta1},
                  {"beta2", c.train.generator_opt.beta2},
                  {"adam_eps", c.train.generator_opt.eps},
                  {"seed", c.train.seed},
                  {"checkpoint_every", c.train.checkpoint_every},
                  {"eval_every", c.train.eval_every}};
    return j;
}

/// Validates the schema and every value range before returning.
inline RunConfig config_from_json(const nlohmann::json& j) {
    using detail::read_key;
    detail::reject_unknown(j, {"domains", "output_dir", "data", "arch", "objective", "train"}, "");
    RunConfig c;
    read_key(j, "domains", c.domains, "");
    read_key(j, "output_dir", c.output_dir, "");
    if (j.contains("data")) {
        const auto& d = j.at("data");
        detail::reject_unknown(d, {"dir", "seed"}, "data");
        read_key(d, "dir", c.data_dir, "data");
        read_key(d, "seed", c.data_seed, "data");
    }
    if (j.contains("arch")) {
        const auto& a = j.at("arch");
        detail::reject_unknown(a, {"data_dim", "latent_dim", "hidden", "sigma", "share_latent_layers"}, "arch");
        read_key(a, "data_dim", c.arch.data_dim, "arch");
        read_key(a, "latent_dim", c.arch.latent_dim, "arch");
        read_key(a, "hidden", c.arch.hidden, "arch");
        read_key(a, "sigma", c.arch.sigma, "arch");
        read_key(a, "share_latent_layers", c.arch.share_latent_layers, "arch");
    }
    if (j.contains("objective")) {
        const auto& o = j.at("objective");
        detail::reject_unknown(o, {"gamma", "beta", "pi", "mode", "norm", "clamp_eps", "feature_cycle_count"},
                               "objective");
        read_key(o, "gamma", c.objective.gamma, "objective");
        read_key(o, "beta", c.objective.beta, "objective");
        if (o.contains("pi")) {
            if (!o.at("pi").is_array()) throw Error("config: key 'objective.pi': expected array of numbers");
            c.objective.pi.clear();
            for (const auto& v : o.at("pi")) {
                if (!v.is_number()) throw Error("config: key 'objective.pi': expected array of numbers");
                c.objective.pi.push_back(v.get<double>());
            }
        }
        std::string s;
        if (o.contains("mode")) {
            read_key(o, "mode", s, "objective");
            if (s == "supervised") c.objective.mode = Mode::Supervised;
            else if (s == "unsupervised") c.objective.mode = Mode::Unsupervised;
            else throw Error("config: key 'objective.mode': expected \"supervised\" or \"unsupervised\"");
        }
        if (o.contains("norm")) {
            read_key(o, "norm", s, "objective");
            if (s == "l1") c.objective.norm = Norm::L1;
            else if (s == "l2") c.objective.norm = Norm::L2;
            else throw Error("config: key 'objective.norm': expected \"l1\" or \"l2\"");
        }
        read_key(o, "clamp_eps", c.objective.clamp_eps, "objective");
        if (o.contains("feature_cycle_count")) {
            read_key(o, "feature_cycle_count", s, "objective");
            if (s == "per_pair") c.objective.feature_count = FeatureCycleCount::PerPair;
            else if (s == "per_domain") c.objective.feature_count = FeatureCycleCount::PerDomain;
            else throw Error("config: key 'objective.feature_cycle_count': expected \"per_pair\" or \"per_domain\"");
        }
    }
    if (j.contains("train")) {
        const auto& t = j.at("train");
        detail::reject_unknown(t,
                               {"steps", "batch_size", "critic_steps", "lr_generator", "lr_critic", "beta1", "beta2",
                                "adam_eps", "seed", "checkpoint_every", "eval_every"},
                               "train");
        read_key(t, "steps", c.train.steps, "train");
        read_key(t, "batch_size", c.train.batch_size, "train");
        read_key(t, "critic_steps", c.train.critic_steps, "train");
        read_key(t, "lr_generator", c.train.generator_opt.lr, "train");
        read_key(t, "lr_critic", c.train.critic_opt.lr, "train");
        double b1 = c.train.generator_opt.beta1, b2 = c.train.generator_opt.beta2, eps = c.train.generator_opt.eps;
        read_key(t, "beta1", b1, "train");
        read_key(t, "beta2", b2, "train");
        read_key(t, "adam_eps", eps, "train");
        for (auto* o : {&c.train.generator_opt, &c.train.critic_opt}) {
            o->beta1 = b1;
            o->beta2 = b2;
            o->eps = eps;
        }
        read_key(t, "seed", c.train.seed, "train");
        read_key(t, "checkpoint_every", c.train.checkpoint_every, "train");
        read_key(t, "eval_every", c.train.eval_every, "train");
    }
    if (c.domains < 1) throw Error("config: key 'domains': must be >= 1");
    if (c.arch.data_dim != 2) throw Error("config: key 'arch.data_dim': synthetic domains are 2-D");
    if (c.arch.latent_dim == 0 || c.arch.hidden == 0) throw Error("config: key 'arch': dimensions must be positive");
    if (!(c.arch.sigma >= 0.0)) throw Error("config: key 'arch.sigma': must be >= 0");
    try {
        c.objective.validate(c.domains);
        c.train.validate();
    } catch (const Error& e) {
        throw Error(std::string("config: ") + e.what());
    }
    return c;
}

inline RunConfig parse_config(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw Error(std::string("config: not valid JSON: ") + e.what());
    }
    return config_from_json(j);
}

inline RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("config: cannot open '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

inline std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL) {
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

/// Identity of a run for resume checks. Ignores where outputs go and how many
/// steps to run, so a finished run can be extended.
inline std::string config_digest(const RunConfig& c) {
    nlohmann::json j = to_json(c);
    j.erase("output_dir");
    j["train"].erase("steps");
    return hex64(fnv1a64(j.dump()));
}

}  // namespace mmiali
