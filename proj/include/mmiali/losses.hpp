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
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mmiali/ensemble.hpp"
#include "mmiali/networks.hpp"
#include "mmiali/rng.hpp"

namespace mmiali {

enum class Mode { Supervised, Unsupervised };
enum class Norm { L1, L2 };
/// How often the feature cycle term of domain i enters the regularizer:
/// once per ordered pair (i, j), or once per domain.
enum class FeatureCycleCount { PerPair, PerDomain };

inline const char* mode_name(Mode m) { return m == Mode::Supervised ? "supervised" : "unsupervised"; }
inline const char* norm_name(Norm n) { return n == Norm::L1 ? "l1" : "l2"; }
inline const char* feature_count_name(FeatureCycleCount c) {
    return c == FeatureCycleCount::PerPair ? "per_pair" : "per_domain";
}

struct ObjectiveConfig {
    /// Weight of the DMAE loss against the ALI loss.
    double gamma = 0.5;
    /// Weight of the regularizer.
    double beta = 1.0;
    /// Domain mixture weights; empty means uniform 1/m.
    std::vector<double> pi;
    Mode mode = Mode::Unsupervised;
    Norm norm = Norm::L2;
    double clamp_eps = 1e-7;
    FeatureCycleCount feature_count = FeatureCycleCount::PerPair;

    std::vector<double> mixture(std::size_t domains) const {
        if (pi.empty()) return std::vector<double>(domains, 1.0 / static_cast<double>(domains));
        return pi;
    }

    void validate(std::size_t domains) const {
        if (!(gamma >= 0.0 && gamma <= 1.0)) throw Error("objective: gamma must lie in [0,1]");
        if (!(beta >= 0.0) || !std::isfinite(beta)) throw Error("objective: beta must be >= 0");
        if (!(clamp_eps > 0.0 && clamp_eps < 0.5)) throw Error("objective: clamp_eps must lie in (0,0.5)");
        if (!pi.empty()) {
            if (pi.size() != domains)
                throw Error("objective: pi has " + std::to_string(pi.size()) + " weights for " +
                            std::to_string(domains) + " domains");
            double s = 0.0;
            for (double p : pi) {
                if (!(p >= 0.0)) throw Error("objective: pi weights must be nonnegative");
                s += p;
            }
            if (std::fabs(s - 1.0) > 1e-12) throw Error("objective: pi weights must sum to 1");
        }
    }

    friend bool operator==(const ObjectiveConfig&, const ObjectiveConfig&) = default;
};

/// Encoder noise source. Every encode() in a loss pulls one [batch, latent]
/// block, in the order the loss evaluates its terms.
class NoiseStream {
public:
    explicit NoiseStream(Rng& rng) : rng_(&rng) {}
    ad::Var next(ad::Graph& g, std::size_t rows, std::size_t cols) { return g.input(rng_->normal_matrix(rows, cols)); }

private:
    Rng* rng_;
};

namespace detail {

inline ad::Var encode_noisy(ad::Graph& g, const EnsembleParams& p, std::size_t i, ad::Var x, NoiseStream& noise) {
    return encode(g, p, i, x, noise.next(g, x.shape()[0], p.arch().latent_dim));
}

/// Batch mean of per-row l1 norm or squared l2 norm.
inline ad::Var batch_norm_loss(const ad::Var& diff, Norm norm) {
    const double n = static_cast<double>(diff.shape()[0]);
    ad::Var total = norm == Norm::L2 ? ad::sum(ad::square(diff)) : ad::sum(ad::abs(diff));
    return ad::scale(total, 1.0 / n);
}

inline void require_finite(const ad::Var& v, const std::string& what) {
    if (!std::isfinite(v.item())) throw Error(what + " is not finite (value " + std::to_string(v.item()) + ")");
}

inline void require_distinct(std::size_t i, std::size_t j, const char* op) {
    if (i == j) throw Error(std::string(op) + ": needs two distinct domains, got " + std::to_string(i) + " twice");
}

/// decode(k, z) for the shared prior block, built at most once per domain.
/// Decoders are deterministic, so every term may reuse the same node.
class PriorDecodes {
public:
    PriorDecodes(ad::Graph& g, const EnsembleParams& params, ad::Var z)
        : g_(&g), params_(&params), z_(z), cache_(params.domains()) {}
    ad::Var z() const { return z_; }
    ad::Var at(std::size_t k) {
        if (!cache_.at(k)) cache_[k] = decode(*g_, *params_, k, z_);
        return *cache_[k];
    }

private:
    ad::Graph* g_;
    const EnsembleParams* params_;
    ad::Var z_;
    std::vector<std::optional<ad::Var>> cache_;
};

inline ad::Var ali_from(ad::Graph& g, const EnsembleParams& params, std::size_t i, ad::Var real, ad::Var prior,
                        ad::Var fake, NoiseStream& noise, const ObjectiveConfig& cfg) {
    ad::Var z_hat = encode_noisy(g, params, i, real, noise);
    ad::Var real_term = ad::mean(ad::log(criticize(g, params, i, real, z_hat, cfg.clamp_eps)));
    ad::Var fake_term = ad::mean(ad::log(ad::rsub(1.0, criticize(g, params, i, fake, prior, cfg.clamp_eps))));
    ad::Var out = real_term + fake_term;
    require_finite(out, "ali_loss(domain " + std::to_string(i) + ")");
    return out;
}

inline ad::Var feature_from(ad::Graph& g, const EnsembleParams& params, std::size_t i, ad::Var z, ad::Var x_i,
                            NoiseStream& noise, const ObjectiveConfig& cfg) {
    return batch_norm_loss(z - encode_noisy(g, params, i, x_i, noise), cfg.norm);
}

inline ad::Var cross_from(ad::Graph& g, const EnsembleParams& params, std::size_t i, std::size_t j, ad::Var x_i,
                          ad::Var x_j, NoiseStream& noise, const ObjectiveConfig& cfg) {
    ad::Var back = decode(g, params, j, encode_noisy(g, params, i, x_i, noise));
    return batch_norm_loss(x_j - back, cfg.norm);
}

}  // namespace detail

/// E[log f_i(x_i, z^)] + E[log(1 - f_i(x^_i, z))], z^ = encode(i, x_i), x^_i = decode(i, z).
/// Noise draws: one block for encode(i, x_i).
inline ad::Var ali_loss(ad::Graph& g, const EnsembleParams& params, std::size_t i, ad::Var real, ad::Var prior,
                        NoiseStream& noise, const ObjectiveConfig& cfg) {
    params.check(i);
    return detail::ali_from(g, params, i, real, prior, decode(g, params, i, prior), noise, cfg);
}

/// E[log f_i(x_i, z^)] + sum_j pi_j E[log(1 - f_i(decode(i, z_j), z_j))], z_j = encode(j, x_j).
/// Noise draws: encode(i, x_i), then encode(j, x_j) for j = 0..m-1. Every j is
/// evaluated even when pi_j = 0, so draw order does not depend on pi.
inline ad::Var dmae_loss(ad::Graph& g, const EnsembleParams& params, std::size_t i, std::span<const ad::Var> batches,
                         NoiseStream& noise, const ObjectiveConfig& cfg) {
    const std::size_t m = params.domains();
    cfg.validate(m);
    if (batches.size() != m)
        throw Error("dmae_loss: expected " + std::to_string(m) + " donor batches, got " + std::to_string(batches.size()));
    const std::vector<double> pi = cfg.mixture(m);
    ad::Var z_hat = detail::encode_noisy(g, params, i, batches[params.check(i)], noise);
    ad::Var out = ad::mean(ad::log(criticize(g, params, i, batches[i], z_hat, cfg.clamp_eps)));
    for (std::size_t j = 0; j < m; ++j) {
        ad::Var z = detail::encode_noisy(g, params, j, batches[j], noise);
        ad::Var fake = decode(g, params, i, z);
        ad::Var term = ad::mean(ad::log(ad::rsub(1.0, criticize(g, params, i, fake, z, cfg.clamp_eps))));
        out = out + ad::scale(term, pi[j]);
    }
    detail::require_finite(out, "dmae_loss(domain " + std::to_string(i) + ")");
    return out;
}

/// Supervised reconstruction of x_i from its paired x_j: ||x_i - decode(i, encode(j, x_j))||.
inline ad::Var condition_loss(ad::Graph& g, const EnsembleParams& params, std::size_t i, std::size_t j, ad::Var x_i,
                              ad::Var x_j, NoiseStream& noise, const ObjectiveConfig& cfg) {
    if (cfg.mode != Mode::Supervised) throw Error("condition_loss: requires supervised mode (paired samples)");
    if (x_i.shape() != x_j.shape()) shape_error("condition_loss", x_i.shape(), x_j.shape());
    ad::Var recon = decode(g, params, params.check(i), detail::encode_noisy(g, params, j, x_j, noise));
    return detail::batch_norm_loss(x_i - recon, cfg.norm);
}

/// Data cycle i -> j -> i. Noise draws: encode(i, x_i), encode(j, x^_j).
inline ad::Var cycle_loss_data(ad::Graph& g, const EnsembleParams& params, std::size_t i, std::size_t j, ad::Var x_i,
                               NoiseStream& noise, const ObjectiveConfig& cfg) {
    detail::require_distinct(i, j, "cycle_loss_data");
    ad::Var x_j = transfer(g, params, i, j, x_i, noise.next(g, x_i.shape()[0], params.arch().latent_dim)).output;
    ad::Var back = decode(g, params, i, detail::encode_noisy(g, params, j, x_j, noise));
    return detail::batch_norm_loss(x_i - back, cfg.norm);
}

/// Feature cycle z -> x^_i -> z. Noise draws: encode(i, x^_i).
inline ad::Var cycle_loss_feature(ad::Graph& g, const EnsembleParams& params, std::size_t i, ad::Var z,
                                  NoiseStream& noise, const ObjectiveConfig& cfg) {
    return detail::feature_from(g, params, i, z, decode(g, params, i, z), noise, cfg);
}

/// Cross cycle: x^_j = decode(j, z) against decode(j, encode(i, decode(i, z))).
/// Noise draws: encode(i, x^_i).
inline ad::Var cycle_loss_cross(ad::Graph& g, const EnsembleParams& params, std::size_t i, std::size_t j, ad::Var z,
                                NoiseStream& noise, const ObjectiveConfig& cfg) {
    detail::require_distinct(i, j, "cycle_loss_cross");
    return detail::cross_from(g, params, i, j, decode(g, params, i, z), decode(g, params, j, z), noise, cfg);
}

/// Values of the regularizer terms for one ordered pair. `feature` is absent
/// when the feature cycle is counted per domain and was charged to another pair.
struct PairTerms {
    std::size_t i = 0;
    std::size_t j = 0;
    double condition_or_data = 0.0;  // condition loss (supervised) or data cycle (unsupervised)
    std::optional<double> feature;
    double cross = 0.0;
};

struct Regularizer {
    ad::Var total;
    std::vector<PairTerms> pairs;
    std::size_t term_count = 0;
};

/// Sum over ordered pairs i != j of [condition | data cycle] + feature cycle(i)
/// + cross cycle(i, j). Pairs are visited i-major; within a pair the terms are
/// evaluated in that order.
namespace detail {

inline Regularizer regularizer_with(ad::Graph& g, const EnsembleParams& params, std::span<const ad::Var> batches,
                                    PriorDecodes& prior, NoiseStream& noise, const ObjectiveConfig& cfg) {
    const std::size_t m = params.domains();
    if (batches.size() != m)
        throw Error("regularizer: expected " + std::to_string(m) + " batches, got " + std::to_string(batches.size()));
    if (cfg.mode == Mode::Supervised)
        for (const auto& b : batches)
            if (b.shape() != batches[0].shape())
                throw Error("regularizer: supervised mode needs equally sized paired batches");
    Regularizer reg;
    reg.total = g.input(Tensor::scalar(0.0));
    for (std::size_t i = 0; i < m; ++i) {
        bool feature_charged = false;
        for (std::size_t j = 0; j < m; ++j) {
            if (i == j) continue;
            PairTerms t;
            t.i = i;
            t.j = j;
            ad::Var first = cfg.mode == Mode::Supervised
                                ? condition_loss(g, params, i, j, batches[i], batches[j], noise, cfg)
                                : cycle_loss_data(g, params, i, j, batches[i], noise, cfg);
            t.condition_or_data = first.item();
            reg.total = reg.total + first;
            ++reg.term_count;
            if (cfg.feature_count == FeatureCycleCount::PerPair || !feature_charged) {
                ad::Var feat = feature_from(g, params, i, prior.z(), prior.at(i), noise, cfg);
                t.feature = feat.item();
                reg.total = reg.total + feat;
                ++reg.term_count;
                feature_charged = true;
            }
            ad::Var cross = cross_from(g, params, i, j, prior.at(i), prior.at(j), noise, cfg);
            t.cross = cross.item();
            reg.total = reg.total + cross;
            ++reg.term_count;
            reg.pairs.push_back(t);
        }
    }
    require_finite(reg.total, "regularizer");
    return reg;
}

}  // namespace detail

inline Regularizer regularizer(ad::Graph& g, const EnsembleParams& params, std::span<const ad::Var> batches,
                               ad::Var prior, NoiseStream& noise, const ObjectiveConfig& cfg) {
    detail::PriorDecodes decodes(g, params, prior);
    return detail::regularizer_with(g, params, batches, decodes, noise, cfg);
}

struct LossReport {
    std::vector<double> ali;   // per domain; empty when gamma == 1
    std::vector<double> dmae;  // per domain; empty when gamma == 0
    std::vector<PairTerms> pairs;  // empty when the regularizer was not evaluated
    double adversarial = 0.0;
    double regularizer = 0.0;
    double generator = 0.0;
    double critic = 0.0;
};

struct Objective {
    ad::Var adversarial;  // A = (1 - gamma) sum ALI + gamma sum DMAE
    ad::Var regularizer;  // R_SL or R_UL, zero when skipped
    ad::Var generator;    // A + beta R, minimized over encoders and decoders
    ad::Var critic;       // -A, minimized over critics
    LossReport report;
};

/// Full minimax objective on one set of batches. Terms with zero weight are
/// not evaluated (and draw no noise). Evaluation order: ALI for every domain,
/// DMAE for every domain, then the regularizer if `with_regularizer`.
inline Objective full_objective(ad::Graph& g, const EnsembleParams& params, std::span<const Tensor> batches,
                                const Tensor& prior, NoiseStream& noise, const ObjectiveConfig& cfg,
                                bool with_regularizer = true) {
    const std::size_t m = params.domains();
    cfg.validate(m);
    if (batches.size() != m)
        throw Error("full_objective: expected " + std::to_string(m) + " batches, got " + std::to_string(batches.size()));
    std::vector<ad::Var> xs;
    xs.reserve(m);
    for (const auto& b : batches) xs.push_back(g.input(b));
    ad::Var z = g.input(prior);
    detail::PriorDecodes decodes(g, params, z);

    Objective obj;
    ad::Var adv = g.input(Tensor::scalar(0.0));
    if (cfg.gamma < 1.0) {
        for (std::size_t i = 0; i < m; ++i) {
            ad::Var a = detail::ali_from(g, params, i, xs[i], z, decodes.at(i), noise, cfg);
            obj.report.ali.push_back(a.item());
            adv = adv + ad::scale(a, 1.0 - cfg.gamma);
        }
    }
    if (cfg.gamma > 0.0) {
        for (std::size_t i = 0; i < m; ++i) {
            ad::Var d = dmae_loss(g, params, i, xs, noise, cfg);
            obj.report.dmae.push_back(d.item());
            adv = adv + ad::scale(d, cfg.gamma);
        }
    }
    obj.adversarial = adv;
    obj.critic = ad::scale(adv, -1.0);
    if (with_regularizer && cfg.beta > 0.0) {
        Regularizer reg = detail::regularizer_with(g, params, xs, decodes, noise, cfg);
        obj.regularizer = reg.total;
        obj.report.pairs = std::move(reg.pairs);
        obj.generator = adv + ad::scale(reg.total, cfg.beta);
    } else {
        obj.regularizer = g.input(Tensor::scalar(0.0));
        obj.generator = adv;
    }
    detail::require_finite(obj.generator, "generator objective");
    obj.report.adversarial = adv.item();
    obj.report.regularizer = obj.regularizer.item();
    obj.report.generator = obj.generator.item();
    obj.report.critic = obj.critic.item();
    return obj;
}

}  // namespace mmiali
