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

#include <bit>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <sstream>
#include <string>

#include "mmiali/tensor.hpp"

namespace mmiali {

/// Seeded random stream. Built on std::mt19937_64, whose output sequence is
/// fixed by the standard; uniform and normal variates are derived here rather
/// than through <random> distributions, whose algorithms are not portable.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform on [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    /// Uniform integer on [0, n), n > 0, by rejection.
    std::uint64_t below(std::uint64_t n) {
        if (n == 0) throw Error("Rng::below: empty range");
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t x;
        do {
            x = engine_();
        } while (x >= limit);
        return x % n;
    }

    /// Standard normal via Box-Muller; pairs are cached.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1;
        do {
            u1 = uniform();
        } while (u1 <= 0.0);
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * std::numbers::pi * u2;
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return r * std::cos(theta);
    }

    Tensor normal_matrix(std::size_t rows, std::size_t cols) {
        Tensor t = Tensor::matrix(rows, cols);
        for (double& v : t.data()) v = normal();
        return t;
    }

    /// Full state, including the cached normal, as portable text.
    std::string state() const {
        std::ostringstream os;
        os << engine_ << ' ' << (has_spare_ ? 1 : 0) << ' ' << std::bit_cast<std::uint64_t>(spare_);
        return os.str();
    }

    void set_state(const std::string& text) {
        std::istringstream is(text);
        int spare_flag = 0;
        std::uint64_t spare_bits = 0;
        is >> engine_ >> spare_flag >> spare_bits;
        if (!is) throw Error("Rng::set_state: malformed state text");
        has_spare_ = spare_flag != 0;
        spare_ = std::bit_cast<double>(spare_bits);
    }

    friend bool operator==(const Rng& a, const Rng& b) { return a.state() == b.state(); }

private:
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace mmiali
