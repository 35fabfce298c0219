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

#include <gtest/gtest.h>

#include <filesystem>

#include "mmiali/mmiali.hpp"
#include "support.hpp"

namespace mmiali {
namespace {

namespace fs = std::filesystem;
using testing::bit_equal;

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("mmiali_persist_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

Checkpoint trained_checkpoint() {
    Checkpoint c;
    c.config.domains = 2;
    c.config.arch = testing::small_arch();
    c.config.train.batch_size = 8;
    c.state = init_training(2, c.config.arch, 9);
    const Dataset data = make_dataset(make_domains(2), false, 1, 64, 16);
    for (int k = 0; k < 3; ++k) train_step(c.state, data, c.config.objective, c.config.train);
    return c;
}

TEST(Checkpoint, RoundTripIsBitExact) {
    const Checkpoint c = trained_checkpoint();
    const std::string bytes = serialize_checkpoint(c);
    const Checkpoint back = deserialize_checkpoint(bytes);
    EXPECT_EQ(back.config, c.config);
    EXPECT_EQ(back.state.step, 3u);
    ASSERT_EQ(back.state.params.slots().size(), c.state.params.slots().size());
    for (std::size_t k = 0; k < c.state.params.slots().size(); ++k) {
        EXPECT_EQ(back.state.params.slots()[k].name, c.state.params.slots()[k].name);
        EXPECT_TRUE(bit_equal(back.state.params.slots()[k].value, c.state.params.slots()[k].value));
        EXPECT_TRUE(bit_equal(back.state.generator_opt.first[k], c.state.generator_opt.first[k]));
        EXPECT_TRUE(bit_equal(back.state.critic_opt.second[k], c.state.critic_opt.second[k]));
    }
    EXPECT_TRUE(back.state.generator_opt == c.state.generator_opt);
    EXPECT_TRUE(back.state.critic_opt == c.state.critic_opt);
    EXPECT_TRUE(back.state.rng == c.state.rng);
    EXPECT_EQ(serialize_checkpoint(back), bytes);

    const fs::path dir = scratch("roundtrip");
    save_checkpoint(dir / "c.ckpt", c);
    EXPECT_EQ(read_file(dir / "c.ckpt"), bytes);
    EXPECT_EQ(serialize_checkpoint(load_checkpoint(dir / "c.ckpt")), bytes);
}

TEST(Checkpoint, RestoredStateContinuesIdentically) {
    Checkpoint c = trained_checkpoint();
    Checkpoint back = deserialize_checkpoint(serialize_checkpoint(c));
    const Dataset data = make_dataset(make_domains(2), false, 1, 64, 16);
    for (int k = 0; k < 3; ++k) {
        const LossReport a = train_step(c.state, data, c.config.objective, c.config.train);
        const LossReport b = train_step(back.state, data, c.config.objective, c.config.train);
        EXPECT_TRUE(bit_equal(a.generator, b.generator));
    }
    const std::string x = serialize_checkpoint(back), y = serialize_checkpoint(c);
    const auto diff = std::mismatch(x.begin(), x.end(), y.begin(), y.end());
    EXPECT_TRUE(diff.first == x.end() && diff.second == y.end())
        << "differ at byte " << (diff.first - x.begin()) << ": " << x.substr(diff.first - x.begin(), 60);
}

void expect_refused(const std::string& bytes, const std::string& needle) {
    try {
        deserialize_checkpoint(bytes);
        ADD_FAILURE() << "accepted a damaged checkpoint; wanted '" << needle << "'";
    } catch (const Error& e) {
        EXPECT_NE(std::string(e.what()).find(needle), std::string::npos) << e.what();
    }
}

TEST(Checkpoint, DamageIsReported) {
    const std::string bytes = serialize_checkpoint(trained_checkpoint());
    std::string flipped = bytes;
    flipped[bytes.size() / 2] ^= 0x01;
    expect_refused(flipped, "checksum mismatch");
    expect_refused(bytes.substr(0, bytes.size() / 3), "checksum");
    expect_refused("hello\n", "bad magic");
    expect_refused("", "unexpected end");
}

TEST(Checkpoint, NewerVersionIsRefusedWithAdvice) {
    std::string bytes = serialize_checkpoint(trained_checkpoint());
    const auto at = bytes.find("version 1\n");
    ASSERT_NE(at, std::string::npos);
    bytes.replace(at, 10, "version 2\n");
    expect_refused(bytes, "format version 2 is not supported");
    expect_refused(bytes, "re-save");
}

TEST(Config, UnknownKeysAreNamed) {
    auto message = [](const std::string& text) {
        try {
            parse_config(text);
        } catch (const Error& e) {
            return std::string(e.what());
        }
        return std::string();
    };
    EXPECT_NE(message(R"({"train": {"stpes": 5}})").find("'train.stpes'"), std::string::npos);
    EXPECT_NE(message(R"({"bogus": 1})").find("'bogus'"), std::string::npos);
    EXPECT_NE(message(R"({"objective": {"gamma": "high"}})").find("'objective.gamma'"), std::string::npos);
    EXPECT_NE(message(R"({"objective": {"gamma": 1.5}})").find("gamma"), std::string::npos);
    EXPECT_NE(message(R"({"train": {"steps": -1}})").find("'train.steps'"), std::string::npos);
    EXPECT_FALSE(message("{not json").empty());
}

TEST(Config, JsonRoundTripAndDigest) {
    RunConfig c;
    c.domains = 4;
    c.arch.latent_dim = 2;
    c.objective.mode = Mode::Supervised;
    c.objective.norm = Norm::L1;
    c.objective.pi = {0.1, 0.2, 0.3, 0.4};
    c.train.seed = 17;
    const RunConfig back = parse_config(to_json(c).dump());
    EXPECT_EQ(back, c);

    RunConfig longer = c;
    longer.train.steps = 99999;
    longer.output_dir = "elsewhere";
    EXPECT_EQ(config_digest(longer), config_digest(c));
    RunConfig other = c;
    other.objective.beta = 0.5;
    EXPECT_NE(config_digest(other), config_digest(c));
    EXPECT_EQ(config_digest(c).size(), 16u);
}

TEST(Io, SeventeenDigitsRoundTrip) {
    Rng rng(4);
    for (int k = 0; k < 1000; ++k) {
        const double v = rng.normal() * std::pow(10.0, static_cast<double>(k % 40) - 20.0);
        EXPECT_TRUE(bit_equal(std::stod(fmt17(v)), v)) << fmt17(v);
    }
}

TEST(Io, DatasetDirectoryRoundTrip) {
    const auto specs = make_domains(3);
    const Dataset ds = make_dataset(specs, true, 8, 50, 20);
    const fs::path dir = scratch("data");
    write_dataset_dir(dir, specs, ds, 8);
    const LoadedData back = read_dataset_dir(dir);
    EXPECT_EQ(back.specs, specs);
    EXPECT_TRUE(back.dataset.paired);
    for (std::size_t j = 0; j < 3; ++j) {
        EXPECT_TRUE(bit_equal(back.dataset.train[j], ds.train[j]));
        EXPECT_TRUE(bit_equal(back.dataset.test[j], ds.test[j]));
    }
    const std::string csv = read_file(dir / "domain_1.csv");
    EXPECT_EQ(csv.substr(0, csv.find('\n')), kDatasetHeader);
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 71);
}

TEST(Io, MalformedDatasetRowsAreLocated) {
    try {
        parse_dataset_csv("domain,split,idx,x0,x1\n0,train,0,1.0\n", "d.csv");
        FAIL();
    } catch (const Error& e) {
        EXPECT_NE(std::string(e.what()).find("d.csv"), std::string::npos) << e.what();
    }
    EXPECT_THROW(parse_dataset_csv("x,y\n", "d.csv"), Error);
}

TEST(Io, HistoryColumnsFollowTheReport) {
    LossReport r;
    r.ali = {1.0, 2.0};
    r.dmae = {3.0, 4.0};
    PairTerms a, b;
    a.i = 0, a.j = 1, a.condition_or_data = 0.1, a.feature = 0.2, a.cross = 0.3;
    b.i = 1, b.j = 0, b.condition_or_data = 0.4, b.cross = 0.5;
    r.pairs = {a, b};
    EXPECT_EQ(history_header(r, Mode::Unsupervised),
              "step,generator,critic,adversarial,regularizer,ali_0,ali_1,dmae_0,dmae_1,"
              "cycle_data_0_1,cycle_feature_0_1,cycle_cross_0_1,cycle_data_1_0,cycle_cross_1_0");
    EXPECT_NE(history_header(r, Mode::Supervised).find("condition_0_1"), std::string::npos);
    const std::string line = history_line({7, r});
    EXPECT_EQ(std::count(line.begin(), line.end(), ','), 13);
    EXPECT_EQ(line.substr(0, 2), "7,");
}

TEST(Io, ParamScaleCsvMatchesTable) {
    const auto rows = param_scale_table(ArchConfig{}, 2, 3);
    const std::string csv = param_scale_csv(rows);
    EXPECT_EQ(csv.substr(0, csv.find('\n')), kParamScaleHeader);
    EXPECT_NE(csv.find("\nMMI-ALI,2,4374,"), std::string::npos) << csv;
}

}  // namespace
}  // namespace mmiali
