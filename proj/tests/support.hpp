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

// Test-only helpers: finite-difference gradient oracle and small utilities.

#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <functional>
#include <string>
#include <vector>

#include "mmiali/autodiff.hpp"
#include "mmiali/networks.hpp"
#include "mmiali/rng.hpp"
#include "mmiali/tensor.hpp"

namespace mmiali::testing {

inline Tensor random_tensor(Shape shape, Rng& rng, double scale = 1.0) {
    Tensor t(std::move(shape));
    for (double& v : t.data()) v = scale * (2.0 * rng.uniform() - 1.0);
    return t;
}

/// Like random_tensor but keeps every entry at least `gap` away from zero.
inline Tensor random_away_from_zero(Shape shape, Rng& rng, double gap = 0.05) {
    Tensor t(std::move(shape));
    for (double& v : t.data()) {
        const double mag = gap + (1.0 - gap) * rng.uniform();
        v = rng.uniform() < 0.5 ? -mag : mag;
    }
    return t;
}

inline bool bit_equal(const Tensor& a, const Tensor& b) {
    return a.shape() == b.shape() &&
           std::memcmp(a.data().data(), b.data().data(), a.size() * sizeof(double)) == 0;
}

inline bool bit_equal(double a, double b) { return std::bit_cast<std::uint64_t>(a) == std::bit_cast<std::uint64_t>(b); }

/// |a - n| / max(|a|, |n|, floor). The floor keeps gradients that are zero
/// up to truncation error from dominating the ratio.
inline double relative_error(double analytic, double numeric, double floor = 1e-3) {
    return std::fabs(analytic - numeric) / std::max({std::fabs(analytic), std::fabs(numeric), floor});
}

struct GradCheckResult {
    double max_rel_error = 0.0;
    std::size_t checked = 0;
    std::size_t refined = 0;  // entries where the stencil straddled a kink
    std::string worst;
};

/// Central difference of `eval` in the scalar `w`. Relu and clamp make the
/// losses piecewise smooth; when the one-sided slopes disagree the stencil
/// contains a kink, and the step shrinks (down to 1e-8) until it does not.
/// A partly straddled kink biases the central estimate by about half the
/// slope gap, so the gap threshold matches the checked tolerance. The
/// decision never looks at the analytic gradient.
inline double central_difference(double& w, const std::function<double()>& eval, double step, bool& refined) {
    const double orig = w;
    const double mid = eval();
    refined = false;
    for (double h = step;; h /= 10.0) {
        w = orig + h;
        const double up = eval();
        w = orig - h;
        const double down = eval();
        w = orig;
        const double right = (up - mid) / h, left = (mid - down) / h;
        const bool kink = std::fabs(right - left) > 1e-4 * std::max({1.0, std::fabs(right), std::fabs(left)});
        if (!kink || h <= 1.01e-8) return (up - down) / (2.0 * h);
        refined = true;
    }
}

/// Central differences over every entry of every input tensor of `f`.
/// `f` builds a scalar from leaves created for `inputs`, in order.
inline GradCheckResult grad_check_inputs(const std::function<ad::Var(ad::Graph&, const std::vector<ad::Var>&)>& f,
                                         std::vector<Tensor> inputs, double step = 1e-5) {
    std::vector<Tensor> analytic;
    {
        ad::Graph g;
        std::vector<ad::Var> leaves;
        for (const auto& t : inputs) leaves.push_back(g.input(t));
        ad::Var root = f(g, leaves);
        g.backward(root);
        for (const auto& l : leaves) analytic.push_back(g.grad(l));
    }
    auto eval = [&] {
        ad::Graph g;
        std::vector<ad::Var> leaves;
        for (const auto& t : inputs) leaves.push_back(g.input(t));
        return f(g, leaves).item();
    };
    GradCheckResult r;
    for (std::size_t a = 0; a < inputs.size(); ++a)
        for (std::size_t k = 0; k < inputs[a].size(); ++k) {
            bool refined = false;
            const double e = relative_error(analytic[a][k], central_difference(inputs[a][k], eval, step, refined));
            ++r.checked;
            r.refined += refined;
            if (e > r.max_rel_error) {
                r.max_rel_error = e;
                r.worst = "input " + std::to_string(a) + "[" + std::to_string(k) + "]";
            }
        }
    return r;
}

/// Central differences over every scalar of every parameter slot. `f` must be
/// deterministic in the parameters (reseed any noise inside it).
inline GradCheckResult grad_check_params(
    EnsembleParams params, const std::function<ad::Var(ad::Graph&, const EnsembleParams&)>& f,
    double step = 1e-5) {
    std::vector<Tensor> analytic;
    {
        ad::Graph g;
        ad::Var root = f(g, params);
        g.backward(root);
        for (const auto& s : params.slots()) analytic.push_back(g.parameter_grad(s.value));
    }
    auto eval = [&] {
        ad::Graph g;
        return f(g, params).item();
    };
    GradCheckResult r;
    auto& slots = params.slots();
    for (std::size_t s = 0; s < slots.size(); ++s)
        for (std::size_t k = 0; k < slots[s].value.size(); ++k) {
            bool refined = false;
            const double e = relative_error(analytic[s][k], central_difference(slots[s].value[k], eval, step, refined));
            ++r.checked;
            r.refined += refined;
            if (e > r.max_rel_error) {
                r.max_rel_error = e;
                r.worst = slots[s].name + "[" + std::to_string(k) + "]";
            }
        }
    return r;
}

/// Loop-based forward pass of one MLP, independent of the graph code.
inline Tensor naive_forward(const EnsembleParams& p, const Mlp& net, const Tensor& x) {
    Tensor cur = x;
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        const Tensor& w = p.weight(net.layers[l]);
        const Tensor& b = p.bias(net.layers[l]);
        const std::size_t n = cur.shape()[0], in = w.shape()[0], out = w.shape()[1];
        Tensor next = Tensor::matrix(n, out);
        for (std::size_t r = 0; r < n; ++r)
            for (std::size_t o = 0; o < out; ++o) {
                double s = b[o];
                for (std::size_t k = 0; k < in; ++k) s += cur.at(r, k) * w.at(k, o);
                const bool last = l + 1 == net.layers.size();
                next.at(r, o) = last ? s : std::max(s, 0.0);
            }
        cur = std::move(next);
    }
    if (net.sigmoid_output)
        for (double& v : cur.data()) v = 1.0 / (1.0 + std::exp(-v));
    return cur;
}

inline Tensor naive_encode(const EnsembleParams& p, std::size_t i, const Tensor& x, const Tensor& noise) {
    Tensor z = naive_forward(p, p.encoder(i), x);
    for (std::size_t k = 0; k < z.size(); ++k) z[k] += p.arch().sigma * noise[k];
    return z;
}

inline Tensor naive_decode(const EnsembleParams& p, std::size_t i, const Tensor& z) {
    return naive_forward(p, p.decoder(i), z);
}

inline Tensor naive_critic(const EnsembleParams& p, std::size_t i, const Tensor& x, const Tensor& z,
                           double eps = 1e-7) {
    Tensor xz = Tensor::matrix(x.shape()[0], x.shape()[1] + z.shape()[1]);
    for (std::size_t r = 0; r < x.shape()[0]; ++r) {
        for (std::size_t c = 0; c < x.shape()[1]; ++c) xz.at(r, c) = x.at(r, c);
        for (std::size_t c = 0; c < z.shape()[1]; ++c) xz.at(r, x.shape()[1] + c) = z.at(r, c);
    }
    Tensor d = naive_forward(p, p.critic(i), xz);
    for (double& v : d.data()) v = std::clamp(v, eps, 1.0 - eps);
    return d;
}

/// Nonzero biases keep finite-difference probes off relu kinks that zero
/// biases create (a dead hidden layer feeds exact zeros downstream).
inline void randomize_biases(EnsembleParams& p, std::uint64_t seed, double scale = 0.3) {
    Rng rng(seed ^ 0xb1a5);
    for (auto& s : p.slots())
        if (s.name.ends_with(".b"))
            for (double& v : s.value.data()) v = scale * (2.0 * rng.uniform() - 1.0);
}

/// Small architecture that keeps exhaustive finite-difference checks quick.
inline ArchConfig small_arch(std::size_t latent = 3, std::size_t hidden = 6) {
    ArchConfig a;
    a.latent_dim = latent;
    a.hidden = hidden;
    a.sigma = 0.05;
    return a;
}

}  // namespace mmiali::testing
