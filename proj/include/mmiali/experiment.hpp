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

#include <cstdlib>
#include <filesystem>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "mmiali/checkpoint.hpp"
#include "mmiali/config.hpp"
#include "mmiali/io.hpp"
#include "mmiali/metrics.hpp"
#include "mmiali/synthetic.hpp"
#include "mmiali/trainer.hpp"

namespace mmiali {

inline constexpr const char* kOutputDirEnv = "MMIALI_OUTPUT_DIR";

inline std::filesystem::path resolve_output_dir(const RunConfig& c) {
    if (const char* env = std::getenv(kOutputDirEnv); env && *env) return env;
    return c.output_dir;
}

/// Dataset named by the config, or the canonical synthetic one.
inline LoadedData load_or_generate(const RunConfig& c) {
    LoadedData out;
    const bool paired = c.objective.mode == Mode::Supervised;
    if (!c.data_dir.empty()) {
        out = read_dataset_dir(c.data_dir);
        if (out.specs.size() != c.domains)
            throw Error("data: '" + c.data_dir + "' holds " + std::to_string(out.specs.size()) +
                        " domains, config says " + std::to_string(c.domains));
        if (paired && !out.dataset.paired) throw Error("data: supervised mode needs a paired dataset (gen-data --paired)");
    } else {
        out.specs = make_domains(c.domains, c.data_seed);
        out.dataset = make_dataset(out.specs, paired, c.data_seed);
    }
    return out;
}

struct TrainOutcome {
    std::filesystem::path checkpoint;
    std::filesystem::path history;
    std::uint64_t steps_run = 0;
    bool already_complete = false;
};

namespace detail {

/// Keeps the header and rows with step <= `through` from an existing history file.
inline std::vector<std::string> history_prefix(const std::filesystem::path& p, std::uint64_t through) {
    std::vector<std::string> lines;
    if (!std::filesystem::exists(p)) return lines;
    std::istringstream is(read_file(p));
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        if (lines.empty()) {
            lines.push_back(line);
            continue;
        }
        if (std::stoull(line.substr(0, line.find(','))) <= through) lines.push_back(line);
    }
    return lines;
}

inline std::string join_lines(const std::vector<std::string>& lines) {
    std::string s;
    for (const auto& l : lines) s += l + "\n";
    return s;
}

}  // namespace detail

/// Trains per `c`, writing into the output directory:
///   config.json, history.csv, checkpoint.ckpt (latest), checkpoint_<step>.ckpt (periodic).
/// With `resume`, continues from that checkpoint after checking its config digest.
inline TrainOutcome run_training(const RunConfig& c, const std::optional<std::filesystem::path>& resume,
                                 std::ostream& log) {
    const auto dir = resolve_output_dir(c);
    std::filesystem::create_directories(dir);
    TrainOutcome out;
    out.checkpoint = dir / "checkpoint.ckpt";
    out.history = dir / "history.csv";

    TrainingState state;
    std::vector<std::string> history;
    if (resume) {
        Checkpoint ck = load_checkpoint(*resume);
        if (config_digest(ck.config) != config_digest(c))
            throw Error("resume: checkpoint '" + resume->string() + "' was written by a different config (digest " +
                        config_digest(ck.config) + ", current " + config_digest(c) + ")");
        state = std::move(ck.state);
        if (state.step >= c.train.steps) {
            log << "checkpoint already at step " << state.step << " of " << c.train.steps << "; nothing to do\n";
            out.already_complete = true;
            return out;
        }
        history = detail::history_prefix(out.history, state.step);
    } else {
        state = init_training(c.domains, c.arch, c.train.seed);
    }
    atomic_write(dir / "config.json", to_json(c).dump(2) + "\n");
    const LoadedData data = load_or_generate(c);
    const std::uint64_t start = state.step;

    TrainSink sink;
    sink.on_eval = [&](const HistoryRow& row) {
        if (history.empty()) history.push_back(history_header(row.report, c.objective.mode));
        history.push_back(history_line(row));
    };
    sink.on_checkpoint = [&](const TrainingState& s) {
        const Checkpoint ck{c, s};
        const std::string bytes = serialize_checkpoint(ck);
        if (s.step < c.train.steps) atomic_write(dir / ("checkpoint_" + std::to_string(s.step) + ".ckpt"), bytes);
        atomic_write(out.checkpoint, bytes);
        atomic_write(out.history, detail::join_lines(history));
        log << "step " << s.step << ": checkpoint written\n";
    };
    try {
        train(state, data.dataset, c.objective, c.train, sink);
    } catch (const Error& e) {
        // Keep whatever history accompanies the last good checkpoint.
        throw Error(std::string("training aborted at step ") + std::to_string(state.step) + ": " + e.what() +
                    " (last checkpoint preserved at '" + out.checkpoint.string() + "')");
    }
    out.steps_run = state.step - start;
    return out;
}

struct EvalOutcome {
    MetricTable table;
    std::vector<std::filesystem::path> files;
};

/// Metrics and scatter plots for a checkpoint on the test split.
inline EvalOutcome run_evaluation(const Checkpoint& ck, const LoadedData& data, const std::filesystem::path& out_dir,
                                  std::uint64_t seed) {
    EvalOutcome out;
    Rng rng(seed);
    out.table = evaluate(ck.state.params, data.specs, data.dataset.test, rng);
    out.table.param_scale = param_scale_table(ck.config.arch, 2, std::max<std::size_t>(6, ck.config.domains));
    auto put = [&](const std::string& name, const std::string& content) {
        atomic_write(out_dir / name, content);
        out.files.push_back(out_dir / name);
    };
    put("metrics_pairs.csv", pair_metrics_csv(out.table));
    put("metrics_domains.csv", domain_metrics_csv(out.table));
    put("param_scale.csv", param_scale_csv(out.table.param_scale));

    Rng plot_rng(mix_seed(seed, 1));
    const std::size_t d = ck.state.params.arch().latent_dim;
    const std::size_t m = ck.state.params.domains();
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < m; ++j) {
            if (i == j) continue;
            const Tensor& x = data.dataset.test[i];
            const Tensor moved = transfer(ck.state.params, i, j, x, plot_rng.normal_matrix(x.rows(), d)).output;
            const std::string title = "domain " + std::to_string(i) + " -> " + std::to_string(j);
            put("transfer_" + std::to_string(i) + "_" + std::to_string(j) + ".svg",
                scatter_svg(title, {{"true domain " + std::to_string(j), "#1f77b4", data.dataset.test[j]},
                                    {"transferred from " + std::to_string(i), "#d62728", moved}}));
        }
    return out;
}

/// Points CSV: header "x0,x1".
inline Tensor parse_points_csv(const std::string& text, const std::string& source) {
    std::istringstream is(text);
    std::string line;
    if (!std::getline(is, line) || line != "x0,x1") throw Error(source + ": expected header 'x0,x1'");
    std::vector<double> v;
    std::size_t n = 1;
    while (std::getline(is, line)) {
        ++n;
        if (line.empty()) continue;
        const auto cells = detail::split_csv(line);
        if (cells.size() != 2) throw Error(source + ":" + std::to_string(n) + ": expected 2 columns");
        v.push_back(detail::parse_double(cells[0], source));
        v.push_back(detail::parse_double(cells[1], source));
    }
    const std::size_t rows = v.size() / 2;
    return Tensor(Shape{rows, 2}, std::move(v));
}

inline std::string points_csv(const Tensor& t) {
    std::string s = "x0,x1\n";
    for (std::size_t r = 0; r < t.rows(); ++r) s += fmt17(t.at(r, 0)) + "," + fmt17(t.at(r, 1)) + "\n";
    return s;
}

}  // namespace mmiali
