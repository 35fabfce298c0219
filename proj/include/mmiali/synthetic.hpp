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

#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "mmiali/losses.hpp"
#include "mmiali/rng.hpp"
#include "mmiali/tensor.hpp"

namespace mmiali {

using Point = std::array<double, 2>;

/// x -> R(angle) x + translation.
struct AffineMap {
    double angle = 0.0;
    Point translation{0.0, 0.0};

    Point apply(const Point& p) const {
        const double c = std::cos(angle), s = std::sin(angle);
        return {c * p[0] - s * p[1] + translation[0], s * p[0] + c * p[1] + translation[1]};
    }
    Point invert(const Point& p) const {
        const double c = std::cos(angle), s = std::sin(angle);
        const double x = p[0] - translation[0], y = p[1] - translation[1];
        return {c * x + s * y, -s * x + c * y};
    }
    bool is_identity() const { return angle == 0.0 && translation[0] == 0.0 && translation[1] == 0.0; }

    friend bool operator==(const AffineMap&, const AffineMap&) = default;
};

/// Five-component isotropic 2-D Gaussian mixture with uniform weights.
struct DomainSpec {
    std::size_t index = 0;
    std::vector<Point> means;
    double variance = 0.2;
    AffineMap from_base;

    double weight() const { return 1.0 / static_cast<double>(means.size()); }
    Point mixture_mean() const {
        Point mu{0.0, 0.0};
        for (const auto& p : means) {
            mu[0] += p[0] * weight();
            mu[1] += p[1] * weight();
        }
        return mu;
    }

    friend bool operator==(const DomainSpec&, const DomainSpec&) = default;
};

inline constexpr std::size_t kComponents = 5;
inline constexpr double kBaseRadius = 2.0;
inline constexpr double kComponentVariance = 0.2;
inline constexpr std::size_t kTrainPerDomain = 2048;
inline constexpr std::size_t kTestPerDomain = 1024;

/// Base means on a radius-2 circle at angles 2 pi k / 5. Domain j is the base
/// rotated by j pi / m and shifted by (4 j, 0). The layout depends on m only;
/// `seed` is accepted for interface symmetry with the samplers.
inline std::vector<DomainSpec> make_domains(std::size_t m, std::uint64_t seed = 0) {
    (void)seed;
    if (m < 2) throw Error("make_domains: need m >= 2 domains, got " + std::to_string(m));
    std::vector<Point> base;
    for (std::size_t k = 0; k < kComponents; ++k) {
        const double a = 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(kComponents);
        base.push_back({kBaseRadius * std::cos(a), kBaseRadius * std::sin(a)});
    }
    std::vector<DomainSpec> specs;
    for (std::size_t j = 0; j < m; ++j) {
        DomainSpec d;
        d.index = j;
        d.variance = kComponentVariance;
        d.from_base.angle = static_cast<double>(j) * std::numbers::pi / static_cast<double>(m);
        d.from_base.translation = {4.0 * static_cast<double>(j), 0.0};
        for (const auto& p : base) d.means.push_back(j == 0 ? p : d.from_base.apply(p));
        specs.push_back(std::move(d));
    }
    return specs;
}

/// n draws: uniform component, then N(mean, variance I).
inline Tensor sample_domain(const DomainSpec& spec, std::size_t n, Rng& rng) {
    Tensor out = Tensor::matrix(n, 2);
    const double sd = std::sqrt(spec.variance);
    for (std::size_t r = 0; r < n; ++r) {
        const Point& mu = spec.means[rng.below(spec.means.size())];
        out.at(r, 0) = mu[0] + sd * rng.normal();
        out.at(r, 1) = mu[1] + sd * rng.normal();
    }
    return out;
}

inline Tensor sample_domain(const DomainSpec& spec, std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    return sample_domain(spec, n, rng);
}

/// Prior N(0, I_d).
inline Tensor sample_prior(std::size_t d, std::size_t n, Rng& rng) { return rng.normal_matrix(n, d); }

inline Tensor sample_prior(std::size_t d, std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    return sample_prior(d, n, rng);
}

/// Row-wise A_j(A_i^{-1}(x)).
inline Tensor ground_truth_transfer(const std::vector<DomainSpec>& specs, std::size_t i, std::size_t j,
                                    const Tensor& x) {
    if (i >= specs.size() || j >= specs.size()) throw Error("ground_truth_transfer: domain index out of range");
    if (x.rank() != 2 || x.shape()[1] != 2) throw Error("ground_truth_transfer: expected [n,2] samples");
    if (i == j) return x;
    Tensor out(x.shape());
    for (std::size_t r = 0; r < x.rows(); ++r) {
        const Point p = specs[j].from_base.apply(specs[i].from_base.invert({x.at(r, 0), x.at(r, 1)}));
        out.at(r, 0) = p[0];
        out.at(r, 1) = p[1];
    }
    return out;
}

/// splitmix64 finalizer, used to derive independent per-domain seeds.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

struct Dataset {
    /// Supervised datasets are paired: row k of every domain is the image of
    /// one base draw.
    bool paired = false;
    std::vector<Tensor> train;
    std::vector<Tensor> test;

    std::size_t domains() const { return train.size(); }
};

/// Train / test sets for every domain. Unpaired draws use one seed stream per
/// (domain, split); paired draws map a single base stream per split.
inline Dataset make_dataset(const std::vector<DomainSpec>& specs, bool paired, std::uint64_t seed,
                            std::size_t n_train = kTrainPerDomain, std::size_t n_test = kTestPerDomain) {
    Dataset ds;
    ds.paired = paired;
    const std::size_t m = specs.size();
    for (int split = 0; split < 2; ++split) {
        const std::size_t n = split == 0 ? n_train : n_test;
        auto& dst = split == 0 ? ds.train : ds.test;
        if (paired) {
            const Tensor base = sample_domain(specs[0], n, mix_seed(seed, 2 * m + split));
            for (std::size_t j = 0; j < m; ++j) dst.push_back(ground_truth_transfer(specs, 0, j, base));
        } else {
            for (std::size_t j = 0; j < m; ++j) dst.push_back(sample_domain(specs[j], n, mix_seed(seed, 2 * j + split)));
        }
    }
    return ds;
}

}  // namespace mmiali
