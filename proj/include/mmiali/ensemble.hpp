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

#include <cstddef>
#include <map>

#include "mmiali/networks.hpp"

namespace mmiali {

struct TransferResult {
    ad::Var output;  // x_j generated by decoder j
    ad::Var latent;  // z inferred by encoder i
};

/// Cross-domain transfer i -> j: z = encode(i, x), x_j = decode(j, z).
inline TransferResult transfer(ad::Graph& g, const EnsembleParams& params, std::size_t i, std::size_t j, ad::Var x,
                               ad::Var noise) {
    params.check(i);
    params.check(j);
    if (i == j) throw Error("transfer: source and target are both domain " + std::to_string(i) + "; use reconstruction");
    ad::Var z = encode(g, params, i, x, noise);
    return {decode(g, params, j, z), z};
}

struct Transfer {
    Tensor output;
    Tensor latent;
};

inline Transfer transfer(const EnsembleParams& params, std::size_t i, std::size_t j, const Tensor& x,
                         const Tensor& noise) {
    ad::Graph g;
    auto r = transfer(g, params, i, j, g.input(x), g.input(noise));
    return {r.output.value(), r.latent.value()};
}

/// Decodes one shared latent sample of x into every other domain.
inline std::map<std::size_t, Tensor> transfer_all(const EnsembleParams& params, std::size_t i, const Tensor& x,
                                                  const Tensor& noise) {
    params.check(i);
    ad::Graph g;
    ad::Var z = encode(g, params, i, g.input(x), g.input(noise));
    std::map<std::size_t, Tensor> out;
    for (std::size_t j = 0; j < params.domains(); ++j)
        if (j != i) out.emplace(j, decode(g, params, j, z).value());
    return out;
}

/// x_j ~ p_j(x | z) for prior draws z.
inline Tensor generate_from_prior(const EnsembleParams& params, std::size_t j, const Tensor& z) {
    return decode(params, j, z);
}

}  // namespace mmiali
