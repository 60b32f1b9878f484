#include <gtest/gtest.h>

#include "test_support.hpp"

using namespace metaslicing;
using metaslicing::testing::uniform;

TEST(Greedy, Examples) {
    EXPECT_EQ(greedy_decide({uniform(1200), uniform(120), 0, 0}), Action::accept);
    EXPECT_EQ(greedy_decide({ResourceVector{80, 200, 200}, uniform(120), 0, 0}), Action::reject);
    EXPECT_EQ(greedy_decide({uniform(0), uniform(0), 2, 0}), Action::accept);
}

TEST(ConstantPolicies, Decide) {
    AlwaysRejectPolicy r;
    AlwaysAcceptPolicy a;
    const SystemState s{uniform(0), uniform(120), 1, 0};
    EXPECT_EQ(r.decide(s), Action::reject);
    EXPECT_EQ(a.decide(s), Action::accept);
    EXPECT_EQ(r.name(), "always-reject");
}

TEST(ImsacPolicy, GreedyOnQ) {
    EXPECT_EQ(greedy_on_q({0.1, 0.9}), Action::accept);
    EXPECT_EQ(greedy_on_q({0.9, 0.1}), Action::reject);
    EXPECT_EQ(greedy_on_q({0.5, 0.5}), Action::reject);
}

TEST(ImsacPolicy, NeedsMatchingCheckpoint) {
    const ScenarioConfig c;
    EXPECT_THROW(ImsacPolicy(nullptr, c), NotFound);
    auto wrong = std::make_shared<DuelingNet>(Architecture{7, {4}}, 1);
    EXPECT_THROW(ImsacPolicy(wrong, c), InvalidArgument);
}

TEST(ImsacPolicy, ControlsHeadBias) {
    const ScenarioConfig c;
    auto net = std::make_shared<DuelingNet>(Architecture{encoded_width(c), {4}}, 1);
    net->advantage_head().weights.setZero();
    net->advantage_head().bias << 0.0, 1.0;
    ImsacPolicy p(net, c);
    EXPECT_EQ(p.decide({uniform(0), uniform(120), 0, 0}), Action::accept);
    net->advantage_head().bias << 1.0, 0.0;
    EXPECT_EQ(p.decide({uniform(0), uniform(120), 0, 0}), Action::reject);
}

TEST(Greedy, SharingChangesOnlyTheEnvironment) {
    // Same policy object, different footprint: MiT lets greedy admit more.
    ScenarioConfig with, without;
    without.sharing_enabled = false;
    GreedyPolicy g;
    const auto a = evaluate_policy(with, g, 20000), b = evaluate_policy(without, g, 20000);
    EXPECT_GT(a.acceptance_probability, b.acceptance_probability);
}
