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

#include <cmath>

#include "mmiali/trainer.hpp"
#include "support.hpp"

namespace mmiali {
namespace {

using testing::bit_equal;

// ---- Adam ---------------------------------------------------------------------

TEST(Adam, FirstStepOnSquare) {
    Tensor w = Tensor::scalar(1.0), m = Tensor::scalar(0.0), v = Tensor::scalar(0.0);
    AdamConfig cfg;
    cfg.lr = 0.1;
    adam_update(w, Tensor::scalar(2.0), m, v, 1, cfg);  // d/dw w^2 at 1
    EXPECT_NEAR(w.item(), 0.9, 1e-8);
}

TEST(Adam, ZeroGradientOnlyDecaysMoments) {
    Tensor w = Tensor::scalar(3.0), m = Tensor::scalar(0.4), v = Tensor::scalar(0.2);
    AdamConfig cfg;
    adam_update(w, Tensor::scalar(0.0), m, v, 5, cfg);
    EXPECT_EQ(m.item(), 0.5 * 0.4);
    EXPECT_EQ(v.item(), 0.999 * 0.2);
    // The first-moment memory still moves w; only a fresh state stays put.
    Tensor w2 = Tensor::scalar(3.0), m2 = Tensor::scalar(0.0), v2 = Tensor::scalar(0.0);
    adam_update(w2, Tensor::scalar(0.0), m2, v2, 1, cfg);
    EXPECT_EQ(w2.item(), 3.0);
}

TEST(Adam, NonFiniteGradientNamesParameter) {
    Tensor w = Tensor::scalar(1.0), m = Tensor::scalar(0.0), v = Tensor::scalar(0.0);
    try {
        adam_update(w, Tensor::scalar(std::nan("")), m, v, 1, AdamConfig{}, "dec1.l0.w");
        FAIL();
    } catch (const Error& e) {
        EXPECT_NE(std::string(e.what()).find("dec1.l0.w"), std::string::npos);
    }
    EXPECT_THROW(adam_update(w, Tensor::matrix(1, 2), m, v, 1, AdamConfig{}), Error);
}

TEST(Adam, StepTouchesOnlySelectedGroups) {
    Rng rng(1);
    EnsembleParams p(2, testing::small_arch(), rng);
    const EnsembleParams before = p;
    std::vector<Tensor> grads;
    for (const auto& s : p.slots()) grads.emplace_back(s.value.shape(), 1.0);
    AdamState st(p);
    adam_step(p, grads, st, AdamConfig{}, [](ParamGroup g) { return g == ParamGroup::Critic; });
    for (std::size_t k = 0; k < p.slots().size(); ++k) {
        const bool changed = !bit_equal(p.slots()[k].value, before.slots()[k].value);
        EXPECT_EQ(changed, p.slots()[k].group == ParamGroup::Critic) << p.slots()[k].name;
    }
}

// ---- training loop ------------------------------------------------------------

struct Fixture {
    std::vector<DomainSpec> specs;
    Dataset data;
    ObjectiveConfig obj;
    TrainConfig train;
};

Fixture small_setup(std::size_t m, bool supervised) {
    Fixture s{make_domains(m), {}, {}, {}};
    s.data = make_dataset(s.specs, supervised, 3, 256, 64);
    s.obj.mode = supervised ? Mode::Supervised : Mode::Unsupervised;
    s.train.batch_size = 16;
    s.train.eval_every = 5;
    return s;
}

void expect_same_state(const TrainingState& a, const TrainingState& b) {
    ASSERT_EQ(a.params.slots().size(), b.params.slots().size());
    for (std::size_t k = 0; k < a.params.slots().size(); ++k)
        EXPECT_TRUE(bit_equal(a.params.slots()[k].value, b.params.slots()[k].value)) << a.params.slots()[k].name;
    EXPECT_TRUE(a.generator_opt == b.generator_opt);
    EXPECT_TRUE(a.critic_opt == b.critic_opt);
    EXPECT_TRUE(a.rng == b.rng);
    EXPECT_EQ(a.step, b.step);
}

TEST(Trainer, SeededRunsAreBitIdentical) {
    for (bool sup : {false, true}) {
        Fixture s = small_setup(3, sup);
        s.train.steps = 20;
        TrainingState a = init_training(3, testing::small_arch(), 42), b = init_training(3, testing::small_arch(), 42);
        auto ha = train(a, s.data, s.obj, s.train), hb = train(b, s.data, s.obj, s.train);
        expect_same_state(a, b);
        ASSERT_EQ(ha.size(), 4u);
        for (std::size_t k = 0; k < ha.size(); ++k)
            EXPECT_TRUE(bit_equal(ha[k].report.generator, hb[k].report.generator));
    }
}

TEST(Trainer, ZeroStepsLeavesStateUnchanged) {
    Fixture s = small_setup(2, false);
    s.train.steps = 0;
    TrainingState a = init_training(2, ArchConfig{}, 1), fresh = init_training(2, ArchConfig{}, 1);
    int checkpoints = 0;
    TrainSink sink;
    sink.on_checkpoint = [&](const TrainingState&) { ++checkpoints; };
    EXPECT_TRUE(train(a, s.data, s.obj, s.train, sink).empty());
    expect_same_state(a, fresh);
    EXPECT_EQ(checkpoints, 1);
}

TEST(Trainer, UpdatesTouchTheirOwnGroups) {
    Fixture s = small_setup(3, false);
    TrainingState st = init_training(3, testing::small_arch(), 5);
    const EnsembleParams before = st.params;
    train_step(st, s.data, s.obj, s.train);
    // One full step moves every slot; each update alone is checked through
    // the gradients it follows.
    for (std::size_t k = 0; k < st.params.slots().size(); ++k)
        EXPECT_FALSE(bit_equal(st.params.slots()[k].value, before.slots()[k].value)) << before.slots()[k].name;
    EXPECT_EQ(st.critic_opt.step, 1u);
    EXPECT_EQ(st.generator_opt.step, 1u);

    Rng rng(2);
    NoiseStream noise(rng);
    std::vector<Tensor> batches;
    for (const auto& t : s.data.train) batches.push_back(t.slice_rows(0, 8));
    ad::Graph g;
    Objective o = full_objective(g, st.params, batches, sample_prior(3, 8, rng), noise, s.obj);
    g.backward(o.regularizer);
    for (const auto& slot : st.params.slots()) {
        if (slot.group != ParamGroup::Critic) continue;
        const Tensor grad = g.parameter_grad(slot.value);
        for (double v : grad.data()) ASSERT_EQ(v, 0.0) << slot.name;
    }
}

TEST(Trainer, CriticStepsCountUpdates) {
    Fixture s = small_setup(2, false);
    s.train.critic_steps = 3;
    s.train.steps = 4;
    TrainingState st = init_training(2, testing::small_arch(), 5);
    train(st, s.data, s.obj, s.train);
    EXPECT_EQ(st.critic_opt.step, 12u);
    EXPECT_EQ(st.generator_opt.step, 4u);
}

TEST(Trainer, SinkSeesEvalsAndCheckpoints) {
    Fixture s = small_setup(2, false);
    s.train.steps = 12;
    s.train.eval_every = 4;
    s.train.checkpoint_every = 5;
    TrainingState st = init_training(2, testing::small_arch(), 6);
    std::vector<std::uint64_t> evals, ckpts;
    TrainSink sink;
    sink.on_eval = [&](const HistoryRow& r) { evals.push_back(r.step); };
    sink.on_checkpoint = [&](const TrainingState& t) { ckpts.push_back(t.step); };
    auto hist = train(st, s.data, s.obj, s.train, sink);
    EXPECT_EQ(evals, (std::vector<std::uint64_t>{4, 8, 12}));
    EXPECT_EQ(ckpts, (std::vector<std::uint64_t>{5, 10, 12}));
    for (const auto& row : hist) {
        EXPECT_TRUE(std::isfinite(row.report.generator));
        EXPECT_TRUE(std::isfinite(row.report.critic));
        EXPECT_EQ(row.report.pairs.size(), 2u);
    }
}

TEST(Trainer, RejectsMismatchedInputs) {
    Fixture s = small_setup(2, false);
    TrainingState st = init_training(3, testing::small_arch(), 1);
    EXPECT_THROW(train(st, s.data, s.obj, s.train), Error);
    TrainingState two = init_training(2, testing::small_arch(), 1);
    ObjectiveConfig sup;
    sup.mode = Mode::Supervised;
    EXPECT_THROW(train(two, s.data, sup, s.train), Error);
    TrainConfig bad = s.train;
    bad.batch_size = 0;
    EXPECT_THROW(train(two, s.data, s.obj, bad), Error);
    bad = s.train;
    bad.generator_opt.lr = 0.0;
    EXPECT_THROW(train(two, s.data, s.obj, bad), Error);
}

// Direct single-domain ALI trainer on raw graph ops with its own Adam. Shares
// only the draw order with the library trainer.
struct DirectAli {
    EnsembleParams p;
    std::vector<Tensor> m1, m2;
    std::uint64_t t_crit = 0, t_gen = 0;
    Rng rng;

    DirectAli(const ArchConfig& a, std::uint64_t seed) : rng(seed) {
        p = EnsembleParams(1, a, rng);
        for (const auto& s : p.slots()) {
            m1.emplace_back(s.value.shape());
            m2.emplace_back(s.value.shape());
        }
    }

    ad::Var net(ad::Graph& g, const Mlp& mlp, ad::Var x) {
        ad::Var h = ad::relu(ad::matmul(x, g.parameter(p.weight(mlp.layers[0]))) +
                             g.parameter(p.bias(mlp.layers[0])));
        return ad::matmul(h, g.parameter(p.weight(mlp.layers[1]))) + g.parameter(p.bias(mlp.layers[1]));
    }

    double update(const Tensor& train, std::size_t batch, bool critic) {
        std::vector<std::size_t> idx(batch);
        for (auto& k : idx) k = rng.below(train.rows());
        Tensor x = train.gather_rows(idx);
        const std::size_t d = p.arch().latent_dim;
        Tensor prior = rng.normal_matrix(batch, d);
        Tensor eps = rng.normal_matrix(batch, d);
        ad::Graph g;
        ad::Var xv = g.input(x), zv = g.input(prior);
        ad::Var z_hat = net(g, p.encoder(0), xv) + ad::scale(g.input(eps), p.arch().sigma);
        ad::Var x_gen = net(g, p.decoder(0), zv);
        auto d_out = [&](ad::Var a, ad::Var b) {
            return ad::clamp(ad::sigmoid(net(g, p.critic(0), ad::concat(a, b))), 1e-7, 1.0 - 1e-7);
        };
        ad::Var loss = ad::mean(ad::log(d_out(xv, z_hat))) + ad::mean(ad::log(ad::rsub(1.0, d_out(x_gen, zv))));
        g.backward(critic ? ad::scale(loss, -1.0) : loss);
        const std::uint64_t t = critic ? ++t_crit : ++t_gen;
        for (std::size_t k = 0; k < p.slots().size(); ++k) {
            auto& s = p.slots()[k];
            if ((s.group == ParamGroup::Critic) != critic) continue;
            Tensor grad = g.parameter_grad(s.value);
            for (std::size_t e = 0; e < grad.size(); ++e) {
                m1[k][e] = 0.5 * m1[k][e] + 0.5 * grad[e];
                m2[k][e] = 0.999 * m2[k][e] + 0.001 * grad[e] * grad[e];
                const double mh = m1[k][e] / (1.0 - std::pow(0.5, double(t)));
                const double vh = m2[k][e] / (1.0 - std::pow(0.999, double(t)));
                s.value[e] -= 1e-4 * mh / (std::sqrt(vh) + 1e-8);
            }
        }
        return loss.item();
    }
};

TEST(Trainer, SingleDomainWithoutExtrasIsPlainAli) {
    const auto specs = make_domains(2);
    Dataset data;
    data.train.push_back(sample_domain(specs[0], 128, 1));
    data.test.push_back(sample_domain(specs[0], 32, 2));
    ObjectiveConfig obj;
    obj.gamma = 0.0;
    obj.beta = 0.0;
    TrainConfig tc;
    tc.batch_size = 16;
    const ArchConfig arch = testing::small_arch();
    TrainingState st = init_training(1, arch, 77);
    DirectAli direct(arch, 77);
    for (int step = 0; step < 30; ++step) {
        LossReport r = train_step(st, data, obj, tc);
        direct.update(data.train[0], tc.batch_size, true);
        const double gen_loss = direct.update(data.train[0], tc.batch_size, false);
        ASSERT_EQ(r.ali.size(), 1u);
        ASSERT_NEAR(r.ali[0], gen_loss, 1e-12) << "step " << step;
        ASSERT_EQ(r.generator, r.ali[0]);
    }
    for (std::size_t k = 0; k < st.params.slots().size(); ++k)
        for (std::size_t e = 0; e < st.params.slots()[k].value.size(); ++e)
            ASSERT_NEAR(st.params.slots()[k].value[e], direct.p.slots()[k].value[e], 1e-12);
}

// Identity-solvable task: every domain is the same distribution and the
// latent has the data dimension.
double regularizer_on(const EnsembleParams& p, const std::vector<Tensor>& batches, const Tensor& prior) {
    Rng rng(123);
    NoiseStream noise(rng);
    ad::Graph g;
    std::vector<ad::Var> xs;
    for (const auto& b : batches) xs.push_back(g.input(b));
    return regularizer(g, p, xs, g.input(prior), noise, {}).total.item();
}

TEST(TrainerSlow, ReconstructionShrinksOnIdentitySolvableTask) {
    const auto specs = make_domains(2);
    Dataset data;
    for (std::size_t j = 0; j < 2; ++j) {
        data.train.push_back(sample_domain(specs[0], 2048, 10 + j));
        data.test.push_back(sample_domain(specs[0], 256, 20 + j));
    }
    ArchConfig arch;
    arch.latent_dim = 2;
    TrainConfig tc;
    tc.steps = 5000;
    tc.eval_every = 0;
    TrainingState st = init_training(2, arch, 3);
    const Tensor prior = sample_prior(2, 256, 4);
    const double before = regularizer_on(st.params, data.test, prior);
    train(st, data, ObjectiveConfig{}, tc);
    const double after = regularizer_on(st.params, data.test, prior);
    EXPECT_LE(after, before / 10.0) << "before " << before << " after " << after;
}

}  // namespace
}  // namespace mmiali
