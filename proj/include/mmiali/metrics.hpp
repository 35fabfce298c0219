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

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "mmiali/ensemble.hpp"
#include "mmiali/losses.hpp"
#include "mmiali/networks.hpp"
#include "mmiali/synthetic.hpp"

namespace mmiali {

// ---- reconstruction metrics ------------------------------------------------

namespace detail {
inline double mean_squared_row_norm(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) shape_error("mse", a.shape(), b.shape());
    if (a.rows() == 0) return 0.0;
    double s = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) {
        const double d = a[k] - b[k];
        s += d * d;
    }
    return s / static_cast<double>(a.rows());
}
}  // namespace detail

/// Mean squared error of the round trip i -> j -> i. Draws two noise blocks
/// from `rng` (encode i, then encode j).
inline double mse_cycle(const EnsembleParams& params, std::size_t i, std::size_t j, const Tensor& x, Rng& rng) {
    const std::size_t d = params.arch().latent_dim;
    const Tensor there = transfer(params, i, j, x, rng.normal_matrix(x.rows(), d)).output;
    const Tensor back = transfer(params, j, i, there, rng.normal_matrix(x.rows(), d)).output;
    return detail::mean_squared_row_norm(x, back);
}

/// Mean squared distance between the learned transfer i -> j and the known
/// affine map. Draws one noise block.
inline double mse_ground_truth(const EnsembleParams& params, const std::vector<DomainSpec>& specs, std::size_t i,
                               std::size_t j, const Tensor& x, Rng& rng) {
    const Tensor moved = transfer(params, i, j, x, rng.normal_matrix(x.rows(), params.arch().latent_dim)).output;
    return detail::mean_squared_row_norm(moved, ground_truth_transfer(specs, i, j, x));
}

/// Reference error of a transfer that returns its input unchanged.
inline double identity_transfer_baseline(const std::vector<DomainSpec>& specs, std::size_t i, std::size_t j,
                                         const Tensor& x) {
    return detail::mean_squared_row_norm(x, ground_truth_transfer(specs, i, j, x));
}

// ---- kernel MMD ------------------------------------------------------------

/// Median Euclidean distance over all distinct pairs of the pooled sample.
inline double median_pairwise_distance(const Tensor& x, const Tensor& y) {
    const std::size_t k = x.cols();
    const std::size_t n = x.rows() + y.rows();
    auto row = [&](std::size_t r) { return r < x.rows() ? &x.data()[r * k] : &y.data()[(r - x.rows()) * k]; };
    std::vector<double> dist;
    dist.reserve(n * (n - 1) / 2);
    for (std::size_t a = 0; a < n; ++a) {
        const double* pa = row(a);
        for (std::size_t b = a + 1; b < n; ++b) {
            const double* pb = row(b);
            double s = 0.0;
            for (std::size_t c = 0; c < k; ++c) s += (pa[c] - pb[c]) * (pa[c] - pb[c]);
            dist.push_back(std::sqrt(s));
        }
    }
    if (dist.empty()) throw Error("median_pairwise_distance: need at least two samples");
    const auto mid = dist.begin() + static_cast<std::ptrdiff_t>(dist.size() / 2);
    std::nth_element(dist.begin(), mid, dist.end());
    if (dist.size() % 2 == 1) return *mid;
    const double hi = *mid;
    const double lo = *std::max_element(dist.begin(), mid);
    return 0.5 * (lo + hi);
}

/// Biased squared MMD with Gaussian kernel exp(-|a-b|^2 / (2 h^2)). Without a
/// bandwidth, h is the pooled median pairwise distance. Clipped at 0.
inline double mmd2(const Tensor& x, const Tensor& y, std::optional<double> bandwidth = std::nullopt) {
    if (x.rank() != 2 || y.rank() != 2 || x.cols() != y.cols()) shape_error("mmd2", x.shape(), y.shape());
    if (x.rows() == 0 || y.rows() == 0) throw Error("mmd2: empty sample");
    const double h = bandwidth ? *bandwidth : median_pairwise_distance(x, y);
    if (!(h > 0.0)) throw Error("mmd2: bandwidth must be positive");
    const double inv = 1.0 / (2.0 * h * h);
    const std::size_t k = x.cols();
    auto mean_kernel = [&](const Tensor& a, const Tensor& b) {
        double s = 0.0;
        for (std::size_t r = 0; r < a.rows(); ++r) {
            const double* pa = &a.data()[r * k];
            double row_sum = 0.0;
            for (std::size_t q = 0; q < b.rows(); ++q) {
                const double* pb = &b.data()[q * k];
                double d2 = 0.0;
                for (std::size_t c = 0; c < k; ++c) d2 += (pa[c] - pb[c]) * (pa[c] - pb[c]);
                row_sum += std::exp(-d2 * inv);
            }
            s += row_sum;
        }
        return s / (static_cast<double>(a.rows()) * static_cast<double>(b.rows()));
    };
    // Cross term symmetrized so that mmd2(x, y) and mmd2(y, x) agree to rounding.
    const double cross = 0.5 * (mean_kernel(x, y) + mean_kernel(y, x));
    return std::max(0.0, mean_kernel(x, x) + mean_kernel(y, y) - 2.0 * cross);
}

// ---- parameter scaling -----------------------------------------------------

/// Weights plus biases of a dense chain dims[0] -> dims[1] -> ...
inline std::size_t dense_chain_params(std::initializer_list<std::size_t> dims) {
    std::size_t n = 0;
    const std::size_t* prev = nullptr;
    for (const std::size_t& d : dims) {
        if (prev) n += (*prev) * d + d;
        prev = &d;
    }
    return n;
}

struct ParamScaleRow {
    std::string model;
    std::size_t m = 0;
    std::size_t generator_params = 0;
    std::size_t critic_params = 0;
    std::size_t params() const { return generator_params + critic_params; }
};

/// Analytic parameter counts for one layer configuration.
///   MMI-ALI:      m (encoder + decoder) + m critics
///   MMI-ALI(PS):  latent-adjacent layers counted once
///   CycleGAN:     one x->x generator per ordered pair, one data critic per domain
///   StarGAN:      one target-conditioned generator, one critic with m-way domain head
inline std::vector<ParamScaleRow> param_scale_table(const ArchConfig& a, std::size_t m_min, std::size_t m_max) {
    if (m_min < 1 || m_max < m_min) throw Error("param_scale_table: invalid m range");
    const std::size_t x = a.data_dim, z = a.latent_dim, h = a.hidden;
    const std::size_t enc_in = dense_chain_params({x, h}), enc_out = dense_chain_params({h, z});
    const std::size_t dec_in = dense_chain_params({z, h}), dec_out = dense_chain_params({h, x});
    const std::size_t ali_critic = dense_chain_params({x + z, h, 1});
    const std::size_t cycle_gen = dense_chain_params({x, h, x});
    const std::size_t cycle_critic = dense_chain_params({x, h, 1});
    std::vector<ParamScaleRow> rows;
    for (std::size_t m = m_min; m <= m_max; ++m) {
        rows.push_back({"MMI-ALI", m, m * (enc_in + enc_out + dec_in + dec_out), m * ali_critic});
        rows.push_back({"MMI-ALI(PS)", m, m * (enc_in + dec_out) + enc_out + dec_in, m * ali_critic});
        rows.push_back({"CycleGAN-analytic", m, m * (m - 1) * cycle_gen, m * cycle_critic});
        rows.push_back({"StarGAN-analytic", m, dense_chain_params({x + m, h, x}), dense_chain_params({x, h, 1 + m})});
    }
    return rows;
}

// ---- information diagnostics -----------------------------------------------

enum class EntropyEstimator { PlugIn, MillerMadow, Grassberger };

inline const char* estimator_name(EntropyEstimator e) {
    switch (e) {
        case EntropyEstimator::PlugIn: return "plugin";
        case EntropyEstimator::MillerMadow: return "miller_madow";
        case EntropyEstimator::Grassberger: return "grassberger";
    }
    return "?";
}

/// Equal-width bin codes over [min, max] of a 1-D sample.
inline std::vector<std::uint32_t> bin_codes(std::span<const double> v, std::size_t bins) {
    if (bins == 0) throw Error("bin_codes: bins must be positive");
    std::vector<std::uint32_t> out(v.size(), 0);
    if (v.empty()) return out;
    const auto [lo_it, hi_it] = std::minmax_element(v.begin(), v.end());
    const double lo = *lo_it, width = *hi_it - *lo_it;
    if (width <= 0.0) return out;
    for (std::size_t k = 0; k < v.size(); ++k) {
        const auto b = static_cast<std::size_t>(std::floor((v[k] - lo) / width * static_cast<double>(bins)));
        out[k] = static_cast<std::uint32_t>(std::min(b, bins - 1));
    }
    return out;
}

namespace detail {

inline double digamma(double x) {
    double r = 0.0;
    while (x < 6.0) {
        r -= 1.0 / x;
        x += 1.0;
    }
    const double f = 1.0 / (x * x);
    return r + std::log(x) - 0.5 / x -
           f * (1.0 / 12.0 - f * (1.0 / 120.0 - f * (1.0 / 252.0 - f * (1.0 / 240.0 - f / 132.0))));
}

/// Grassberger (2003) G(n) = psi(n) + (-1)^n / 2 (psi((n+1)/2) - psi(n/2)).
inline double grassberger_g(std::uint64_t n) {
    const double x = static_cast<double>(n);
    const double sign = (n % 2 == 0) ? 1.0 : -1.0;
    return digamma(x) + 0.5 * sign * (digamma((x + 1.0) / 2.0) - digamma(x / 2.0));
}

/// Entropy in nats of the joint code of several binned variables.
inline double joint_entropy(std::initializer_list<const std::vector<std::uint32_t>*> vars, std::size_t bins,
                            EntropyEstimator est) {
    const std::size_t n = (*vars.begin())->size();
    if (n == 0) return 0.0;
    std::unordered_map<std::uint64_t, std::uint64_t> counts;
    counts.reserve(n);
    for (std::size_t k = 0; k < n; ++k) {
        std::uint64_t key = 0;
        for (const auto* v : vars) key = key * bins + (*v)[k];
        ++counts[key];
    }
    const double total = static_cast<double>(n);
    double h = 0.0;
    switch (est) {
        case EntropyEstimator::PlugIn:
        case EntropyEstimator::MillerMadow:
            for (const auto& [key, c] : counts) {
                const double p = static_cast<double>(c) / total;
                h -= p * std::log(p);
            }
            if (est == EntropyEstimator::MillerMadow) h += static_cast<double>(counts.size() - 1) / (2.0 * total);
            break;
        case EntropyEstimator::Grassberger: {
            // Cache G by count; few distinct counts occur.
            std::unordered_map<std::uint64_t, double> g;
            double s = 0.0;
            for (const auto& [key, c] : counts) {
                auto it = g.find(c);
                if (it == g.end()) it = g.emplace(c, grassberger_g(c)).first;
                s += static_cast<double>(c) * it->second;
            }
            h = std::log(total) - s / total;
            break;
        }
    }
    return h;
}

inline void same_length(std::size_t a, std::size_t b, std::size_t c) {
    if (a != b || b != c) throw Error("information estimate: samples have different lengths");
}

}  // namespace detail

struct InformationEstimate {
    double mutual_xy = 0.0;       // I(X;Y)
    double conditional_xy_z = 0.0;  // I(X;Y|Z)
    double interaction = 0.0;     // I(X;Y;Z) = I(X;Y) - I(X;Y|Z)
};

/// Histogram estimate of interaction information (McGill sign convention),
/// in nats, on 1-D samples. Each variable is binned into `bins` equal-width
/// cells over its own range.
inline InformationEstimate interaction_information_terms(std::span<const double> x, std::span<const double> y,
                                                         std::span<const double> z, std::size_t bins = 32,
                                                         EntropyEstimator est = EntropyEstimator::Grassberger) {
    detail::same_length(x.size(), y.size(), z.size());
    const auto bx = bin_codes(x, bins), by = bin_codes(y, bins), bz = bin_codes(z, bins);
    using detail::joint_entropy;
    const double hx = joint_entropy({&bx}, bins, est), hy = joint_entropy({&by}, bins, est);
    const double hz = joint_entropy({&bz}, bins, est);
    const double hxy = joint_entropy({&bx, &by}, bins, est);
    const double hxz = joint_entropy({&bx, &bz}, bins, est), hyz = joint_entropy({&by, &bz}, bins, est);
    const double hxyz = joint_entropy({&bx, &by, &bz}, bins, est);
    InformationEstimate r;
    r.mutual_xy = hx + hy - hxy;
    r.conditional_xy_z = hxz + hyz - hxyz - hz;
    r.interaction = r.mutual_xy - r.conditional_xy_z;
    return r;
}

inline double interaction_information(std::span<const double> x, std::span<const double> y, std::span<const double> z,
                                      std::size_t bins = 32, EntropyEstimator est = EntropyEstimator::Grassberger) {
    return interaction_information_terms(x, y, z, bins, est).interaction;
}

/// Projection of each row onto the first principal axis (power iteration on
/// the sample covariance).
inline std::vector<double> project_first_pc(const Tensor& x) {
    const std::size_t n = x.rows(), k = x.cols();
    std::vector<double> mu(k, 0.0);
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < k; ++c) mu[c] += x.at(r, c) / static_cast<double>(n);
    std::vector<double> cov(k * k, 0.0);
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t a = 0; a < k; ++a)
            for (std::size_t b = 0; b < k; ++b) cov[a * k + b] += (x.at(r, a) - mu[a]) * (x.at(r, b) - mu[b]);
    std::vector<double> v(k, 1.0 / std::sqrt(static_cast<double>(k)));
    for (int it = 0; it < 500; ++it) {
        std::vector<double> w(k, 0.0);
        for (std::size_t a = 0; a < k; ++a)
            for (std::size_t b = 0; b < k; ++b) w[a] += cov[a * k + b] * v[b];
        double norm = 0.0;
        for (double e : w) norm += e * e;
        norm = std::sqrt(norm);
        if (norm == 0.0) break;
        for (std::size_t a = 0; a < k; ++a) v[a] = w[a] / norm;
    }
    std::vector<double> out(n, 0.0);
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < k; ++c) out[r] += (x.at(r, c) - mu[c]) * v[c];
    return out;
}

// ---- evaluation table ------------------------------------------------------

struct PairMetrics {
    std::size_t source = 0;
    std::size_t target = 0;
    double mse_cycle = 0.0;
    double mse_ground_truth = 0.0;
    double identity_baseline = 0.0;
    double mmd2 = 0.0;  // transferred vs true target samples
};

struct DomainMetrics {
    std::size_t domain = 0;
    double mmd2_marginal = 0.0;  // decode(prior) vs true samples
};

struct MetricTable {
    std::vector<PairMetrics> pairs;
    std::vector<DomainMetrics> domains;
    std::vector<ParamScaleRow> param_scale;
};

/// Evaluates every ordered pair on the test split. Noise and prior draws come
/// from `rng` in pair order (i-major), then per domain.
inline MetricTable evaluate(const EnsembleParams& params, const std::vector<DomainSpec>& specs,
                            const std::vector<Tensor>& test, Rng& rng) {
    const std::size_t m = params.domains();
    if (specs.size() != m || test.size() != m) throw Error("evaluate: domain count mismatch");
    MetricTable t;
    const std::size_t d = params.arch().latent_dim;
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < m; ++j) {
            if (i == j) continue;
            PairMetrics p;
            p.source = i;
            p.target = j;
            p.mse_cycle = mse_cycle(params, i, j, test[i], rng);
            const Tensor moved = transfer(params, i, j, test[i], rng.normal_matrix(test[i].rows(), d)).output;
            p.mse_ground_truth = detail::mean_squared_row_norm(moved, ground_truth_transfer(specs, i, j, test[i]));
            p.identity_baseline = identity_transfer_baseline(specs, i, j, test[i]);
            p.mmd2 = mmd2(moved, test[j]);
            t.pairs.push_back(p);
        }
    }
    for (std::size_t j = 0; j < m; ++j) {
        const Tensor gen = generate_from_prior(params, j, sample_prior(d, test[j].rows(), rng));
        t.domains.push_back({j, mmd2(gen, test[j])});
    }
    return t;
}

}  // namespace mmiali
