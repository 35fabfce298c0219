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

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "mmiali/losses.hpp"
#include "mmiali/networks.hpp"
#include "mmiali/rng.hpp"
#include "mmiali/synthetic.hpp"

namespace mmiali {

struct AdamConfig {
    double lr = 1e-4;
    double beta1 = 0.5;
    double beta2 = 0.999;
    double eps = 1e-8;

    friend bool operator==(const AdamConfig&, const AdamConfig&) = default;
};

/// One bias-corrected Adam update of `value` in place. `t` is the 1-based
/// step number after incrementing.
inline void adam_update(Tensor& value, const Tensor& grad, Tensor& first, Tensor& second, std::uint64_t t,
                        const AdamConfig& cfg, const std::string& name = "parameter") {
    if (grad.shape() != value.shape() || first.shape() != value.shape() || second.shape() != value.shape())
        throw Error("adam: shape mismatch for " + name);
    if (!grad.all_finite()) throw Error("adam: non-finite gradient for " + name);
    const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
    for (std::size_t k = 0; k < value.size(); ++k) {
        first[k] = cfg.beta1 * first[k] + (1.0 - cfg.beta1) * grad[k];
        second[k] = cfg.beta2 * second[k] + (1.0 - cfg.beta2) * grad[k] * grad[k];
        value[k] -= cfg.lr * (first[k] / c1) / (std::sqrt(second[k] / c2) + cfg.eps);
    }
}

/// Moment accumulators mirroring every slot of an ensemble; `step` updates
/// only the slots of the selected groups.
struct AdamState {
    std::vector<Tensor> first;
    std::vector<Tensor> second;
    std::uint64_t step = 0;

    AdamState() = default;
    explicit AdamState(const EnsembleParams& params) {
        for (const auto& s : params.slots()) {
            first.emplace_back(s.value.shape());
            second.emplace_back(s.value.shape());
        }
    }

    friend bool operator==(const AdamState&, const AdamState&) = default;
};

template <typename GroupPred>
void adam_step(EnsembleParams& params, const std::vector<Tensor>& grads, AdamState& state, const AdamConfig& cfg,
               GroupPred selected) {
    auto& slots = params.slots();
    if (grads.size() != slots.size() || state.first.size() != slots.size())
        throw Error("adam_step: gradient / state count does not match parameter slots");
    const std::uint64_t t = ++state.step;
    for (std::size_t k = 0; k < slots.size(); ++k)
        if (selected(slots[k].group))
            adam_update(slots[k].value, grads[k], state.first[k], state.second[k], t, cfg, slots[k].name);
}

struct TrainConfig {
    std::uint64_t steps = 1000;
    std::size_t batch_size = 128;
    std::size_t critic_steps = 1;
    AdamConfig generator_opt{};
    AdamConfig critic_opt{};
    std::uint64_t seed = 0;
    std::uint64_t checkpoint_every = 0;  // 0: only at the end
    std::uint64_t eval_every = 100;      // 0: never

    void validate() const {
        if (batch_size == 0) throw Error("train: batch_size must be positive");
        if (critic_steps == 0) throw Error("train: critic_steps must be positive");
        for (const auto* o : {&generator_opt, &critic_opt})
            if (!(o->lr > 0.0) || !(o->beta1 >= 0.0 && o->beta1 < 1.0) || !(o->beta2 >= 0.0 && o->beta2 < 1.0) ||
                !(o->eps > 0.0))
                throw Error("train: invalid optimizer settings (lr > 0, betas in [0,1), eps > 0)");
    }

    friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

/// Everything that evolves during training; exactly what a checkpoint holds.
struct TrainingState {
    EnsembleParams params;
    AdamState generator_opt;
    AdamState critic_opt;
    Rng rng;
    std::uint64_t step = 0;
};

/// Fresh state: parameters are initialized from Rng(seed), and that same
/// stream then drives all training draws.
inline TrainingState init_training(std::size_t domains, const ArchConfig& arch, std::uint64_t seed) {
    TrainingState s;
    s.rng = Rng(seed);
    s.params = EnsembleParams(domains, arch, s.rng);
    s.generator_opt = AdamState(s.params);
    s.critic_opt = AdamState(s.params);
    return s;
}

struct HistoryRow {
    std::uint64_t step = 0;
    LossReport report;
};

struct TrainSink {
    std::function<void(const HistoryRow&)> on_eval;
    std::function<void(const TrainingState&)> on_checkpoint;
};

/// Draws one minibatch per domain. Paired data shares one index vector
/// across domains; unpaired data draws indices domain by domain.
inline std::vector<Tensor> sample_batches(const Dataset& data, bool paired, std::size_t batch, Rng& rng) {
    std::vector<Tensor> out;
    const std::size_t n = data.train.front().rows();
    auto draw = [&] {
        std::vector<std::size_t> idx(batch);
        for (auto& k : idx) k = static_cast<std::size_t>(rng.below(n));
        return idx;
    };
    if (paired) {
        const auto idx = draw();
        for (const auto& t : data.train) out.push_back(t.gather_rows(idx));
    } else {
        for (const auto& t : data.train) {
            if (t.rows() != n) throw Error("sample_batches: domains have different train sizes");
            out.push_back(t.gather_rows(draw()));
        }
    }
    return out;
}

inline std::vector<Tensor> parameter_grads(const ad::Graph& g, const EnsembleParams& params) {
    std::vector<Tensor> grads;
    grads.reserve(params.slots().size());
    for (const auto& s : params.slots()) grads.push_back(g.parameter_grad(s.value));
    return grads;
}

/// One training iteration: `critic_steps` critic updates descending -A, then
/// one encoder/decoder update descending A + beta R. Draw order per update:
/// batch indices, prior block, then encoder noise in objective order.
inline LossReport train_step(TrainingState& s, const Dataset& data, const ObjectiveConfig& obj,
                             const TrainConfig& cfg) {
    const bool paired = obj.mode == Mode::Supervised;
    const std::size_t d = s.params.arch().latent_dim;
    NoiseStream noise(s.rng);
    for (std::size_t c = 0; c < cfg.critic_steps; ++c) {
        const auto batches = sample_batches(data, paired, cfg.batch_size, s.rng);
        const Tensor prior = s.rng.normal_matrix(cfg.batch_size, d);
        ad::Graph g;
        Objective o = full_objective(g, s.params, batches, prior, noise, obj, /*with_regularizer=*/false);
        g.backward(o.critic);
        adam_step(s.params, parameter_grads(g, s.params), s.critic_opt, cfg.critic_opt,
                  [](ParamGroup p) { return p == ParamGroup::Critic; });
    }
    const auto batches = sample_batches(data, paired, cfg.batch_size, s.rng);
    const Tensor prior = s.rng.normal_matrix(cfg.batch_size, d);
    ad::Graph g;
    Objective o = full_objective(g, s.params, batches, prior, noise, obj);
    g.backward(o.generator);
    adam_step(s.params, parameter_grads(g, s.params), s.generator_opt, cfg.generator_opt,
              [](ParamGroup p) { return p != ParamGroup::Critic; });
    ++s.step;
    return o.report;
}

/// Runs until s.step == cfg.steps. Reports the generator-update losses every
/// `eval_every` steps and checkpoints every `checkpoint_every` steps and at the end.
inline std::vector<HistoryRow> train(TrainingState& s, const Dataset& data, const ObjectiveConfig& obj,
                                     const TrainConfig& cfg, const TrainSink& sink = {}) {
    cfg.validate();
    obj.validate(s.params.domains());
    if (data.domains() != s.params.domains())
        throw Error("train: dataset has " + std::to_string(data.domains()) + " domains, model has " +
                    std::to_string(s.params.domains()));
    if (obj.mode == Mode::Supervised && !data.paired)
        throw Error("train: supervised mode needs a paired dataset");
    std::vector<HistoryRow> history;
    while (s.step < cfg.steps) {
        LossReport r = train_step(s, data, obj, cfg);
        if (cfg.eval_every && s.step % cfg.eval_every == 0) {
            history.push_back({s.step, std::move(r)});
            if (sink.on_eval) sink.on_eval(history.back());
        }
        if (sink.on_checkpoint && cfg.checkpoint_every && s.step % cfg.checkpoint_every == 0 && s.step < cfg.steps)
            sink.on_checkpoint(s);
    }
    if (sink.on_checkpoint) sink.on_checkpoint(s);
    return history;
}

}  // namespace mmiali
