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
#include <cstdint>
#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include "mmiali/config.hpp"
#include "mmiali/io.hpp"
#include "mmiali/trainer.hpp"

namespace mmiali {

inline constexpr int kCheckpointVersion = 1;
inline constexpr const char* kCheckpointMagic = "MMIALI-CHECKPOINT";

struct Checkpoint {
    RunConfig config;
    TrainingState state;
};

// File layout (version 1):
//
//   MMIALI-CHECKPOINT
//   version 1
//   digest <16 hex>                 config_digest(config)
//   step <n>
//   opt_steps <generator> <critic>
//   config <bytes>                  followed by that many bytes of JSON and '\n'
//   rng <bytes>                     followed by the RNG state text and '\n'
//   arrays <count>
//   <name> <rank> <dims...>         one line per array, payload order
//   payload <bytes>                 followed by little-endian f64 values and '\n'
//   checksum <16 hex>               FNV-1a of every preceding byte
//
// Arrays are param/<slot>, adam_gen/m/<slot>, adam_gen/v/<slot>,
// adam_critic/m/<slot>, adam_critic/v/<slot>.

namespace detail {

struct NamedArray {
    std::string name;
    const Tensor* tensor;
};

inline std::vector<NamedArray> checkpoint_arrays(const TrainingState& s) {
    std::vector<NamedArray> out;
    const auto& slots = s.params.slots();
    for (const auto& slot : slots) out.push_back({"param/" + slot.name, &slot.value});
    const std::pair<const char*, const AdamState*> opts[] = {{"adam_gen", &s.generator_opt},
                                                             {"adam_critic", &s.critic_opt}};
    for (const auto& [prefix, opt] : opts)
        for (std::size_t k = 0; k < slots.size(); ++k) {
            out.push_back({std::string(prefix) + "/m/" + slots[k].name, &opt->first.at(k)});
            out.push_back({std::string(prefix) + "/v/" + slots[k].name, &opt->second.at(k)});
        }
    return out;
}

inline void put_f64(std::string& out, double v) {
    std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
    for (int b = 0; b < 8; ++b) out.push_back(static_cast<char>((bits >> (8 * b)) & 0xFF));
}

inline double get_f64(const unsigned char* p) {
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(p[b]) << (8 * b);
    return std::bit_cast<double>(bits);
}

class Reader {
public:
    explicit Reader(const std::string& data) : data_(data) {}

    std::string line() {
        const auto end = data_.find('\n', pos_);
        if (end == std::string::npos) fail("unexpected end of file");
        std::string out = data_.substr(pos_, end - pos_);
        pos_ = end + 1;
        return out;
    }

    /// "key value..." line with a fixed key.
    std::istringstream keyed(const std::string& key) {
        const std::string l = line();
        if (l.rfind(key + " ", 0) != 0 && l != key) fail("expected '" + key + "' line, found '" + l.substr(0, 40) + "'");
        return std::istringstream(l.substr(key.size()));
    }

    std::string bytes(std::size_t n) {
        if (pos_ + n + 1 > data_.size()) fail("truncated block");
        std::string out = data_.substr(pos_, n);
        pos_ += n;
        if (data_[pos_] != '\n') fail("block not terminated");
        ++pos_;
        return out;
    }

    std::size_t pos() const { return pos_; }

    [[noreturn]] static void fail(const std::string& why) { throw Error("checkpoint: " + why); }

private:
    const std::string& data_;
    std::size_t pos_ = 0;
};

template <typename T>
T read_value(std::istringstream& is, const char* what) {
    T v{};
    if (!(is >> v)) Reader::fail(std::string("malformed ") + what);
    return v;
}

}  // namespace detail

inline std::string serialize_checkpoint(const Checkpoint& c) {
    const auto arrays = detail::checkpoint_arrays(c.state);
    const std::string config = to_json(c.config).dump();
    const std::string rng = c.state.rng.state();
    std::ostringstream head;
    head << kCheckpointMagic << '\n'
         << "version " << kCheckpointVersion << '\n'
         << "digest " << config_digest(c.config) << '\n'
         << "step " << c.state.step << '\n'
         << "opt_steps " << c.state.generator_opt.step << ' ' << c.state.critic_opt.step << '\n'
         << "config " << config.size() << '\n'
         << config << '\n'
         << "rng " << rng.size() << '\n'
         << rng << '\n'
         << "arrays " << arrays.size() << '\n';
    std::string payload;
    for (const auto& a : arrays) {
        head << a.name << ' ' << a.tensor->rank();
        for (auto d : a.tensor->shape()) head << ' ' << d;
        head << '\n';
        for (double v : a.tensor->data()) detail::put_f64(payload, v);
    }
    head << "payload " << payload.size() << '\n';
    std::string out = head.str() + payload + "\n";
    out += "checksum " + hex64(fnv1a64(out)) + "\n";
    return out;
}

inline Checkpoint deserialize_checkpoint(const std::string& data) {
    detail::Reader rd(data);
    if (rd.line() != kCheckpointMagic) detail::Reader::fail("not a checkpoint (bad magic line)");
    auto vs = rd.keyed("version");
    const int version = detail::read_value<int>(vs, "version");
    if (version != kCheckpointVersion)
        detail::Reader::fail("format version " + std::to_string(version) + " is not supported by this build (reads " +
                             std::to_string(kCheckpointVersion) +
                             "); load it with the release that wrote it and re-save, or retrain");

    // Verify the trailer before trusting any length field.
    const auto tail = data.rfind("checksum ");
    if (tail == std::string::npos || data.size() < tail + 9 + 16 + 1)
        detail::Reader::fail("missing checksum trailer (file truncated?)");
    const std::string expected = data.substr(tail + 9, 16);
    if (hex64(fnv1a64(std::string_view(data).substr(0, tail))) != expected)
        detail::Reader::fail("checksum mismatch (file corrupted)");

    auto ds = rd.keyed("digest");
    const auto digest = detail::read_value<std::string>(ds, "digest");
    auto ss = rd.keyed("step");
    const auto step = detail::read_value<std::uint64_t>(ss, "step");
    auto os = rd.keyed("opt_steps");
    const auto gen_steps = detail::read_value<std::uint64_t>(os, "opt_steps");
    const auto critic_steps = detail::read_value<std::uint64_t>(os, "opt_steps");
    auto cs = rd.keyed("config");
    const std::string config_text = rd.bytes(detail::read_value<std::size_t>(cs, "config length"));
    auto rs = rd.keyed("rng");
    const std::string rng_text = rd.bytes(detail::read_value<std::size_t>(rs, "rng length"));

    Checkpoint c;
    c.config = parse_config(config_text);
    if (config_digest(c.config) != digest) detail::Reader::fail("config digest does not match embedded config");
    c.state.params = EnsembleParams(c.config.domains, c.config.arch, c.state.rng);
    c.state.generator_opt = AdamState(c.state.params);
    c.state.critic_opt = AdamState(c.state.params);
    c.state.rng.set_state(rng_text);
    c.state.step = step;
    c.state.generator_opt.step = gen_steps;
    c.state.critic_opt.step = critic_steps;

    auto as = rd.keyed("arrays");
    const auto count = detail::read_value<std::size_t>(as, "array count");
    auto targets = detail::checkpoint_arrays(c.state);
    if (count != targets.size())
        detail::Reader::fail("expected " + std::to_string(targets.size()) + " arrays, found " + std::to_string(count));
    for (const auto& t : targets) {
        auto ls = std::istringstream(rd.line());
        const auto name = detail::read_value<std::string>(ls, "array name");
        if (name != t.name) detail::Reader::fail("array '" + name + "' where '" + t.name + "' was expected");
        const auto rank = detail::read_value<std::size_t>(ls, "array rank");
        Shape shape(rank);
        for (auto& d : shape) d = detail::read_value<std::size_t>(ls, "array dim");
        if (shape != t.tensor->shape())
            detail::Reader::fail("array '" + name + "' has shape " + shape_str(shape) + ", model expects " +
                                 shape_str(t.tensor->shape()));
    }
    auto ps = rd.keyed("payload");
    const std::string payload = rd.bytes(detail::read_value<std::size_t>(ps, "payload length"));
    std::size_t expected_bytes = 0;
    for (const auto& t : targets) expected_bytes += 8 * t.tensor->size();
    if (payload.size() != expected_bytes) detail::Reader::fail("payload size does not match array table");
    const auto* p = reinterpret_cast<const unsigned char*>(payload.data());
    for (const auto& t : targets) {
        auto& dst = const_cast<Tensor&>(*t.tensor).data();
        for (double& v : dst) {
            v = detail::get_f64(p);
            p += 8;
        }
    }
    if (rd.pos() != tail) detail::Reader::fail("unexpected bytes before checksum");
    return c;
}

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& c) {
    atomic_write(path, serialize_checkpoint(c));
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
    return deserialize_checkpoint(read_file(path));
}

}  // namespace mmiali
