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
#include <string>
#include <vector>

#include "mmiali/autodiff.hpp"
#include "mmiali/rng.hpp"
#include "mmiali/tensor.hpp"

namespace mmiali {

/// Layer dimensions and encoder stochasticity shared by every domain.
struct ArchConfig {
    std::size_t data_dim = 2;
    std::size_t latent_dim = 8;
    std::size_t hidden = 64;
    /// Encoder noise scale: z = mean(x) + sigma * eps.
    double sigma = 0.01;
    /// Share the layers next to the latent (encoder output, decoder input)
    /// across domains.
    bool share_latent_layers = false;

    friend bool operator==(const ArchConfig&, const ArchConfig&) = default;
};

enum class ParamGroup { Encoder, Decoder, Critic };

inline const char* group_name(ParamGroup g) {
    switch (g) {
        case ParamGroup::Encoder: return "encoder";
        case ParamGroup::Decoder: return "decoder";
        case ParamGroup::Critic: return "critic";
    }
    return "?";
}

struct ParamSlot {
    std::string name;
    ParamGroup group;
    Tensor value;
};

/// Indices of a weight [in,out] and bias [1,out] in the slot store.
struct Dense {
    std::size_t weight;
    std::size_t bias;
};

/// Fully connected net with relu on hidden layers.
struct Mlp {
    std::vector<Dense> layers;
    bool sigmoid_output = false;
};

/// Parameters of all m encoders (Phi), decoders (Theta) and critics (Omega).
/// Tensors live in `slots`; layers refer to them by index, so shared layers
/// are a single slot and copying the ensemble deep-copies every parameter.
class EnsembleParams {
public:
    EnsembleParams() = default;

    /// Glorot-uniform weights, zero biases, drawn in slot-creation order.
    EnsembleParams(std::size_t domains, const ArchConfig& arch, Rng& rng) : arch_(arch), domains_(domains) {
        if (domains == 0) throw Error("EnsembleParams: need at least one domain");
        if (arch.data_dim == 0 || arch.latent_dim == 0 || arch.hidden == 0)
            throw Error("EnsembleParams: layer dimensions must be positive");
        if (!(arch.sigma >= 0.0) || !std::isfinite(arch.sigma)) throw Error("EnsembleParams: sigma must be >= 0");

        const std::size_t x = arch.data_dim, z = arch.latent_dim, h = arch.hidden;
        Dense shared_enc{}, shared_dec{};
        if (arch.share_latent_layers) {
            shared_enc = add_dense("enc.shared.l1", ParamGroup::Encoder, h, z, rng);
            shared_dec = add_dense("dec.shared.l0", ParamGroup::Decoder, z, h, rng);
        }
        for (std::size_t i = 0; i < domains; ++i) {
            const std::string d = std::to_string(i);
            Mlp enc;
            enc.layers.push_back(add_dense("enc" + d + ".l0", ParamGroup::Encoder, x, h, rng));
            enc.layers.push_back(arch.share_latent_layers ? shared_enc
                                                          : add_dense("enc" + d + ".l1", ParamGroup::Encoder, h, z, rng));
            encoders_.push_back(enc);

            Mlp dec;
            dec.layers.push_back(arch.share_latent_layers ? shared_dec
                                                          : add_dense("dec" + d + ".l0", ParamGroup::Decoder, z, h, rng));
            dec.layers.push_back(add_dense("dec" + d + ".l1", ParamGroup::Decoder, h, x, rng));
            decoders_.push_back(dec);

            Mlp crit;
            crit.sigmoid_output = true;
            crit.layers.push_back(add_dense("crit" + d + ".l0", ParamGroup::Critic, x + z, h, rng));
            crit.layers.push_back(add_dense("crit" + d + ".l1", ParamGroup::Critic, h, 1, rng));
            critics_.push_back(crit);
        }
    }

    const ArchConfig& arch() const noexcept { return arch_; }
    std::size_t domains() const noexcept { return domains_; }

    std::vector<ParamSlot>& slots() noexcept { return slots_; }
    const std::vector<ParamSlot>& slots() const noexcept { return slots_; }

    const Mlp& encoder(std::size_t i) const { return encoders_.at(check(i)); }
    const Mlp& decoder(std::size_t i) const { return decoders_.at(check(i)); }
    const Mlp& critic(std::size_t i) const { return critics_.at(check(i)); }

    Tensor& weight(const Dense& l) { return slots_.at(l.weight).value; }
    Tensor& bias(const Dense& l) { return slots_.at(l.bias).value; }
    const Tensor& weight(const Dense& l) const { return slots_.at(l.weight).value; }
    const Tensor& bias(const Dense& l) const { return slots_.at(l.bias).value; }

    std::size_t check(std::size_t i) const {
        if (i >= domains_)
            throw Error("domain index " + std::to_string(i) + " out of range [0," + std::to_string(domains_) + ")");
        return i;
    }

private:
    Dense add_dense(const std::string& prefix, ParamGroup group, std::size_t in, std::size_t out, Rng& rng) {
        const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
        Tensor w = Tensor::matrix(in, out);
        for (double& v : w.data()) v = (2.0 * rng.uniform() - 1.0) * limit;
        slots_.push_back({prefix + ".w", group, std::move(w)});
        slots_.push_back({prefix + ".b", group, Tensor::matrix(1, out)});
        return {slots_.size() - 2, slots_.size() - 1};
    }

    ArchConfig arch_;
    std::size_t domains_ = 0;
    std::vector<ParamSlot> slots_;
    std::vector<Mlp> encoders_, decoders_, critics_;
};

/// Scalar parameter count; shared slots are counted once.
inline std::size_t param_count(const EnsembleParams& params) {
    std::size_t n = 0;
    for (const auto& s : params.slots()) n += s.value.size();
    return n;
}

inline std::size_t param_count(const EnsembleParams& params, ParamGroup group) {
    std::size_t n = 0;
    for (const auto& s : params.slots())
        if (s.group == group) n += s.value.size();
    return n;
}

inline ad::Var forward(ad::Graph& g, const EnsembleParams& params, const Mlp& net, ad::Var x) {
    for (std::size_t k = 0; k < net.layers.size(); ++k) {
        const Dense& l = net.layers[k];
        x = ad::matmul(x, g.parameter(params.weight(l))) + g.parameter(params.bias(l));
        if (k + 1 < net.layers.size()) x = ad::relu(x);
    }
    return net.sigmoid_output ? ad::sigmoid(x) : x;
}

namespace detail {
inline void expect_cols(const ad::Var& v, std::size_t cols, const char* op, const char* what) {
    if (v.value().rank() != 2 || v.value().shape()[1] != cols)
        throw Error(std::string(op) + ": " + what + " has shape " + shape_str(v.shape()) + ", expected [batch," +
                    std::to_string(cols) + "]");
}
}  // namespace detail

/// Inference net q_i(z|x): mean(x) + sigma * noise, noise ~ N(0, I) drawn by the caller.
inline ad::Var encode(ad::Graph& g, const EnsembleParams& params, std::size_t i, ad::Var x, ad::Var noise) {
    const ArchConfig& a = params.arch();
    detail::expect_cols(x, a.data_dim, "encode", "input");
    detail::expect_cols(noise, a.latent_dim, "encode", "noise");
    if (noise.shape()[0] != x.shape()[0]) shape_error("encode", x.shape(), noise.shape());
    ad::Var mean = forward(g, params, params.encoder(i), x);
    if (a.sigma == 0.0) return mean;
    return mean + ad::scale(noise, a.sigma);
}

/// Generation net p_i(x|z); deterministic given z.
inline ad::Var decode(ad::Graph& g, const EnsembleParams& params, std::size_t i, ad::Var z) {
    detail::expect_cols(z, params.arch().latent_dim, "decode", "latent");
    return forward(g, params, params.decoder(i), z);
}

/// Critic f_i(x, z) in [eps, 1 - eps].
inline ad::Var criticize(ad::Graph& g, const EnsembleParams& params, std::size_t i, ad::Var x, ad::Var z,
                         double clamp_eps = 1e-7) {
    const ArchConfig& a = params.arch();
    detail::expect_cols(x, a.data_dim, "criticize", "sample");
    detail::expect_cols(z, a.latent_dim, "criticize", "feature");
    if (x.shape()[0] != z.shape()[0]) shape_error("criticize", x.shape(), z.shape());
    ad::Var p = forward(g, params, params.critic(i), ad::concat(x, z));
    return ad::clamp(p, clamp_eps, 1.0 - clamp_eps);
}

// Graph-free conveniences for evaluation.

inline Tensor encode(const EnsembleParams& params, std::size_t i, const Tensor& x, const Tensor& noise) {
    ad::Graph g;
    return encode(g, params, i, g.input(x), g.input(noise)).value();
}

inline Tensor decode(const EnsembleParams& params, std::size_t i, const Tensor& z) {
    ad::Graph g;
    return decode(g, params, i, g.input(z)).value();
}

inline Tensor criticize(const EnsembleParams& params, std::size_t i, const Tensor& x, const Tensor& z,
                        double clamp_eps = 1e-7) {
    ad::Graph g;
    return criticize(g, params, i, g.input(x), g.input(z), clamp_eps).value();
}

/// Sets every layer of net to zero.
inline void zero_net(EnsembleParams& params, const Mlp& net) {
    for (const Dense& l : net.layers) {
        for (double& v : params.weight(l).data()) v = 0.0;
        for (double& v : params.bias(l).data()) v = 0.0;
    }
}

/// Makes a two-layer relu net compute the identity exactly, using the hidden
/// units as [relu(x), relu(-x)]. Needs in == out and hidden >= 2 * in.
inline void set_identity(EnsembleParams& params, const Mlp& net) {
    if (net.layers.size() != 2) throw Error("set_identity: expected a two-layer net");
    Tensor& w0 = params.weight(net.layers[0]);
    Tensor& w1 = params.weight(net.layers[1]);
    const std::size_t in = w0.shape()[0], hidden = w0.shape()[1], out = w1.shape()[1];
    if (in != out || hidden < 2 * in) throw Error("set_identity: need in == out and hidden >= 2*in");
    zero_net(params, net);
    for (std::size_t k = 0; k < in; ++k) {
        w0.at(k, 2 * k) = 1.0;
        w0.at(k, 2 * k + 1) = -1.0;
        w1.at(2 * k, k) = 1.0;
        w1.at(2 * k + 1, k) = -1.0;
    }
}

/// Identity encoders and decoders for every domain (latent_dim == data_dim).
inline void set_identity_ensemble(EnsembleParams& params) {
    for (std::size_t i = 0; i < params.domains(); ++i) {
        set_identity(params, params.encoder(i));
        set_identity(params, params.decoder(i));
    }
}

}  // namespace mmiali
