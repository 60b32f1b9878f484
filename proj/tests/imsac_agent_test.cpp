#include <gtest/gtest.h>

#include <random>

#include "test_support.hpp"

using namespace metaslicing;
using metaslicing::testing::loss_scenario;
using metaslicing::testing::uniform;

TEST(EncodeState, Examples) {
    const ScenarioConfig c;
    SystemState s{uniform(1200), uniform(0), 0, c.max_similarity()};
    EXPECT_EQ(encode_state(s, c), (std::vector<double>{1, 1, 1, 0, 0, 0, 1, 0, 0, 1}));
    s.available = uniform(0);
    const auto full = encode_state(s, c);
    EXPECT_EQ(full[0] + full[1] + full[2], 0.0);
    EXPECT_EQ(encoded_width(c), 10u);
}

TEST(EncodeState, EntriesInUnitInterval) {
    const ScenarioConfig c;
    GreedyPolicy g;
    const auto ep = run_episode(c, g, 2000);
    for (const auto& t : ep.transitions)
        for (double v : encode_state(t.state, c)) {
            EXPECT_GE(v, 0.0);
            EXPECT_LE(v, 1.0);
        }
}

TEST(SelectAction, GreedyAndRandom) {
    auto net = DuelingNet(Architecture{2, {4}}, 1);
    const std::vector<double> s{0.2, 0.8};
    Rng rng(1);
    const Action best = greedy_on_q(net.q_values(s));
    for (int k = 0; k < 100; ++k) EXPECT_EQ(select_action(net, s, 0.0, rng), best);
    int accepts = 0;
    for (int k = 0; k < 10000; ++k) accepts += to_int(select_action(net, s, 1.0, rng));
    EXPECT_NEAR(accepts / 10000.0, 0.5, 0.02);
    EXPECT_THROW(select_action(net, s, 1.5, rng), InvalidArgument);
}

TEST(SelectAction, TieRejects) { EXPECT_EQ(greedy_on_q({0.3, 0.3}), Action::reject); }

TEST(DoubleQTarget, Examples) {
    EXPECT_NEAR(double_q_target(1.0, {0.5, 1.0}, {0.2, 0.4}, 0.9), 1.36, 1e-15);
    EXPECT_EQ(double_q_target(2.5, {0.5, 1.0}, {0.2, 0.4}, 0.0), 2.5);
    // Online picks action 0 here even though the target prefers 1.
    EXPECT_NEAR(double_q_target(0.0, {3.0, 1.0}, {0.2, 0.4}, 0.5), 0.1, 1e-15);
    // Tie in the online net selects reject.
    EXPECT_NEAR(double_q_target(0.0, {1.0, 1.0}, {0.2, 0.4}, 0.5), 0.1, 1e-15);
    EXPECT_THROW(double_q_target(0.0, {1.0, 1.0}, {0.2, 0.4}, 1.0), InvalidArgument);
    EXPECT_THROW(double_q_target(NAN, {1.0, 1.0}, {0.2, 0.4}, 0.5), InvalidArgument);
}

TEST(DoubleQTarget, IdenticalNetworksGiveStandardTarget) {
    auto net = DuelingNet(Architecture{3, {5}}, 2);
    const std::vector<double> s{0.1, 0.5, 0.9};
    const auto q = net.q_values(s);
    EXPECT_EQ(double_q_target(0.7, s, net, net, 0.9), 0.7 + 0.9 * std::max(q[0], q[1]));
}

TEST(EpsilonSchedule, ClosedForm) {
    const EpsilonSchedule e{1.0, 0.01, 1000};
    EXPECT_EQ(e.at(0), 1.0);
    EXPECT_DOUBLE_EQ(e.at(500), 1.0 - 0.99 * 0.5);
    EXPECT_EQ(e.at(1000), 0.01);
    EXPECT_EQ(e.at(2000), 0.01);
    for (std::uint64_t k = 1; k < 1500; ++k) EXPECT_LE(e.at(k), e.at(k - 1));
}

TEST(ReplayBuffer, RingNeverExceedsCapacity) {
    ReplayBuffer b(5);
    for (int k = 0; k < 12; ++k) b.push({{double(k)}, k % 2, 1.0, {0.0}});
    EXPECT_EQ(b.size(), 5u);
    std::vector<double> kept;
    for (std::size_t k = 0; k < b.size(); ++k) kept.push_back(b[k].state[0]);
    std::sort(kept.begin(), kept.end());
    EXPECT_EQ(kept, (std::vector<double>{7, 8, 9, 10, 11}));
    EXPECT_THROW(b.push({{0.0}, 2, 0.0, {0.0}}), InvalidArgument);
    EXPECT_THROW(ReplayBuffer(0), InvalidArgument);
}

TEST(ReplayBuffer, SamplingIsUniform) {
    ReplayBuffer b(20);
    for (int k = 0; k < 20; ++k) b.push({{double(k)}, 0, 0.0, {0.0}});
    Rng rng(3);
    std::vector<int> hits(20, 0);
    const int draws = 2000;
    for (int k = 0; k < draws; ++k)
        for (auto i : b.sample_indices(10, rng)) ++hits[i];
    double chi2 = 0.0;
    const double expected = draws * 10.0 / 20.0;
    for (int h : hits) chi2 += (h - expected) * (h - expected) / expected;
    EXPECT_LT(chi2, 43.8);  // 19 dof, p = 0.001
    ReplayBuffer small(4);
    small.push({{0.0}, 0, 0.0, {0.0}});
    EXPECT_THROW(small.sample_indices(2, rng), InvalidArgument);
}

TEST(Trainer, ZeroIterationsReturnsInitialNet) {
    const ScenarioConfig c;
    TrainingConfig t;
    t.iterations = 0;
    t.eval_interval = 0;
    const auto res = train(c, t);
    EXPECT_EQ(res.network, DuelingNet(Architecture{encoded_width(c), t.hidden, t.activation, t.aggregation}, t.seed));
    EXPECT_TRUE(res.curve.empty());
}

TEST(Trainer, TargetSyncsAreBitwiseCopies) {
    const ScenarioConfig c;
    TrainingConfig t;
    t.target_sync = 50;
    t.hidden = {8};
    ImsacTrainer trainer(c, t);
    DuelingNet last_target = trainer.target();
    for (int k = 1; k <= 300; ++k) {
        trainer.step();
        if (k % 50 == 0) {
            EXPECT_EQ(trainer.target(), trainer.online());
            last_target = trainer.target();
        } else {
            EXPECT_EQ(trainer.target(), last_target);
        }
    }
    EXPECT_EQ(trainer.target_syncs(), 6u);
}

TEST(Trainer, CurveRowsAndDeterminism) {
    ScenarioConfig c;
    TrainingConfig t;
    t.iterations = 1000;
    t.eval_interval = 300;
    t.eval_arrivals = 200;
    t.hidden = {8};
    const auto a = train(c, t), b = train(c, t);
    ASSERT_EQ(a.curve.size(), 4u);
    EXPECT_EQ(a.curve.front().step, 0u);
    EXPECT_EQ(a.curve.back().step, 900u);
    EXPECT_EQ(a.network, b.network);
    for (std::size_t k = 0; k < a.curve.size(); ++k) {
        EXPECT_EQ(a.curve[k].eval_average_reward, b.curve[k].eval_average_reward);
        EXPECT_EQ(a.curve[k].epsilon, t.epsilon.at(a.curve[k].step));
    }
    EXPECT_TRUE(a.network.all_finite());
}

TEST(Trainer, MyopicAgentLearnsImmediateRewardSign) {
    // gamma = 0: accepting pays r > 0 whenever it fits, so the agent should
    // learn to accept in an empty system.
    auto c = loss_scenario({2.0}, {1.0}, {1.0}, 2);
    TrainingConfig t;
    t.gamma = 0.0;
    t.iterations = 5000;
    t.epsilon.decay_steps = 2000;
    t.hidden = {8};
    t.eval_interval = 0;
    t.target_sync = 500;
    const auto res = train(c, t);
    ImsacPolicy p(std::make_shared<DuelingNet>(res.network), c);
    SystemState empty{ResourceVector{2.0}, ResourceVector{1.0}, 0, 0.0};
    EXPECT_EQ(p.decide(empty), Action::accept);
}
