/*
 * Copyright 2026 The nearsim Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>

#include "nearsim/bop.hpp"
#include "nearsim/kernels.hpp"
#include "oracles.hpp"

using namespace nearsim;

namespace {

std::uint32_t learn(BestOffsetPrefetcher& bop, std::uint64_t stride, std::uint64_t accesses) {
    EXPECT_TRUE(oracle::replay_stride(bop, stride, accesses));
    return bop.best_offset();
}

bool five_smooth(std::uint32_t v) {
    for (std::uint32_t p : {2u, 3u, 5u})
        while (v % p == 0) v /= p;
    return v == 1;
}

}  // namespace

TEST(BopOffsets, DefaultListIsFiveSmoothUpTo256) {
    const auto offsets = default_bop_offsets();
    std::vector<std::uint32_t> expect;
    for (std::uint32_t v = 1; v <= 256; ++v)
        if (five_smooth(v)) expect.push_back(v);
    EXPECT_EQ(offsets, expect);
    EXPECT_EQ(offsets.size(), 52u);
}

TEST(BopLearning, StrideOneLearnsOffsetOne) {
    BestOffsetPrefetcher bop{BopConfig{}};
    const auto phase_len = 31 * default_bop_offsets().size();
    EXPECT_EQ(learn(bop, 1, 3 * phase_len), 1u);
    EXPECT_GE(bop.state().phases, 1u);
    EXPECT_TRUE(bop.enabled());
}

TEST(BopLearning, StrideTwoLearnsOffsetTwo) {
    BestOffsetPrefetcher bop{BopConfig{}};
    EXPECT_EQ(learn(bop, 2, 5000), 2u);
    EXPECT_GE(bop.state().phases, 1u);
    EXPECT_TRUE(bop.enabled());
}

TEST(BopLearning, StrideThreeLearnsOffsetThree) {
    BestOffsetPrefetcher bop{BopConfig{}};
    EXPECT_EQ(learn(bop, 3, 8000), 3u);
}

TEST(BopLearning, NonTriggerAccessesAreIgnored) {
    BestOffsetPrefetcher bop{BopConfig{}};
    const auto before = bop.state();
    EXPECT_FALSE(bop.on_access(5, false).has_value());
    EXPECT_EQ(bop.state().cursor, before.cursor);
    EXPECT_EQ(bop.state().scores, before.scores);
}

TEST(BopLearning, RecentRequestsRecordBaseOfPrefetch) {
    BestOffsetPrefetcher bop{BopConfig{}};
    bop.on_fill(500, 4u);
    EXPECT_TRUE(bop.rr_contains(496));
    EXPECT_FALSE(bop.rr_contains(500));
    // Demand fills are not recorded while prefetching is on.
    bop.on_fill(900, std::nullopt);
    EXPECT_FALSE(bop.rr_contains(900));
}

TEST(BopPhase, HighestScoreWinsAndTiesPickSmallerOffset) {
    const BopConfig cfg;
    auto st = BopState::initial(cfg);
    std::fill(st.scores.begin(), st.scores.end(), 0u);
    st.scores[3] = 7;  // offset 4
    st.scores[5] = 7;  // offset 6
    st.scores[1] = 2;
    EXPECT_EQ(end_phase(st, cfg), 4u);
    EXPECT_TRUE(st.enabled);
    EXPECT_EQ(st.round, 0u);
    EXPECT_EQ(st.cursor, 0u);
    EXPECT_TRUE(std::all_of(st.scores.begin(), st.scores.end(), [](unsigned s) { return s == 0; }));
}

TEST(BopPhase, LowScoreDisablesPrefetching) {
    const BopConfig cfg;
    auto st = BopState::initial(cfg);
    st.scores[2] = cfg.bad_score;  // offset 3
    EXPECT_EQ(end_phase(st, cfg), 3u);
    EXPECT_FALSE(st.enabled);
}

TEST(BopPhase, AllZeroKeepsOffsetAndDisables) {
    const BopConfig cfg;
    auto st = BopState::initial(cfg);
    st.best_offset = 8;
    EXPECT_EQ(end_phase(st, cfg), 8u);
    EXPECT_FALSE(st.enabled);
}

TEST(BopConfigCheck, RejectsBadParameters) {
    BopConfig c;
    c.offsets.clear();
    EXPECT_THROW(c.validate(), ValidationError);
    c = BopConfig{};
    c.offsets = {0, 1};
    EXPECT_THROW(c.validate(), ValidationError);
    c = BopConfig{};
    c.score_max = c.bad_score;
    EXPECT_THROW(c.validate(), ValidationError);
    c = BopConfig{};
    c.rr_entries = 100;
    EXPECT_THROW(c.validate(), ValidationError);
}

TEST(BopInHierarchy, StrideKernelLearnsUnitOffsetAndHelps) {
    StrideKernel k;
    k.count = 4096;
    SocConfig off;
    SocConfig on;
    on.prefetch = BopConfig{};
    Soc soc_off(off);
    Soc soc_on(on);
    const auto c_off = stride_kernel(soc_off, k).cycles;
    const auto s_on = stride_kernel(soc_on, k);
    EXPECT_LE(s_on.cycles, c_off);
    EXPECT_EQ(soc_on.mem().prefetcher(0)->best_offset(), 1u);
    EXPECT_GT(s_on.prefetch.issued, 0u);
    EXPECT_GT(s_on.prefetch.useful + s_on.prefetch.late, 0u);
}

TEST(BopInHierarchy, StrideBeyondLargestOffsetCostsAtMostTwoPercent) {
    StrideKernel k;
    k.count = 1000;
    k.stride_lines = 257;
    SocConfig on;
    on.prefetch = BopConfig{};
    Soc soc_off{SocConfig{}};
    Soc soc_on(on);
    const auto c_off = stride_kernel(soc_off, k).cycles;
    const auto c_on = stride_kernel(soc_on, k).cycles;
    EXPECT_LE(static_cast<double>(c_on), 1.02 * static_cast<double>(c_off));
}

TEST(BopInHierarchy, ZeroLengthKernelTakesNoTime) {
    StrideKernel k;
    k.count = 0;
    SocConfig on;
    on.prefetch = BopConfig{};
    Soc soc(on);
    EXPECT_EQ(stride_kernel(soc, k).cycles, 0u);
}
