#include <gtest/gtest.h>

#include "support.hpp"

using namespace headwise;

TEST(Roofline, PublishedTablesProfileA) {
    for (const auto& c : test::check_roofline_table(test::llama3_8b(), test::profile_a())) {
        EXPECT_TRUE(c.ok) << c.where;
    }
}

TEST(Roofline, PublishedTablesProfileB) {
    for (const auto& c : test::check_roofline_table(test::llama3_8b(), test::profile_b())) {
        EXPECT_TRUE(c.ok) << c.where;
    }
}

TEST(Roofline, ErratumCellsExceedPeak) {
    // The two cells replaced in the profile-A check really are above that
    // card's peak, so no roofline value could produce them.
    EXPECT_GT(test::parse_si("312T"), test::profile_a().peak_flops);
}

TEST(Roofline, TableLayout) {
    const auto rows = roofline_table(test::llama3_8b(), test::profile_a());
    ASSERT_EQ(rows.size(), 12u);
    EXPECT_EQ(rows.front().label, "flashattention (1k)");
    EXPECT_EQ(rows[3].label, "head-wise (1k)");
    EXPECT_EQ(rows[6].phase, Phase::Decode);
}

TEST(Roofline, ClosedFormCounts) {
    const ModelSpec m = test::llama3_8b();
    const double s = 1024;
    EXPECT_DOUBLE_EQ(attention_ops(m, Phase::Prefill, 1024), 4 * s * s * 4096);
    EXPECT_DOUBLE_EQ(attention_ops(m, Phase::Decode, 1024), 4 * s * 4096);
    EXPECT_DOUBLE_EQ(attention_bytes(m, Phase::Prefill, 1024, true), 2 * s * 1024 * 2);
    EXPECT_DOUBLE_EQ(attention_bytes(m, Phase::Prefill, 1024, false), (2 * s * 4096 + 2 * s * 1024) * 2);
    EXPECT_DOUBLE_EQ(attention_ops(m, Phase::Prefill, 1024, Kernel::head_wise(1)),
                     attention_ops(m, Phase::Prefill, 1024) / 8);
}

TEST(Roofline, HeadWiseKeepsIntensity) {
    const ModelSpec m = test::llama3_8b();
    const HardwareSpec hw = test::profile_a();
    for (Phase ph : {Phase::Prefill, Phase::Decode}) {
        for (bool off : {false, true}) {
            for (Tokens s : {Tokens{1000}, Tokens{4096}, Tokens{50000}}) {
                const auto full = classify(m, hw, ph, Kernel::full_layer(), off, s);
                for (std::uint64_t g : {1, 2, 4}) {
                    const auto hw_pt = classify(m, hw, ph, Kernel::head_wise(g), off, s);
                    EXPECT_NEAR(hw_pt.arithmetic_intensity, full.arithmetic_intensity,
                                1e-9 * full.arithmetic_intensity);
                    EXPECT_EQ(hw_pt.bound, full.bound);
                }
            }
        }
    }
}

TEST(Roofline, TurningPointMatchesLinearScan) {
    for (const HardwareSpec& hw : {test::profile_a(), test::profile_b()}) {
        const ModelSpec m = test::llama3_8b();
        Tokens scan = 1;
        while (classify(m, hw, Phase::Prefill, Kernel::full_layer(), true, scan).bound != Bound::Compute) {
            ++scan;
        }
        EXPECT_EQ(turning_point(m, hw), scan) << hw.name;
    }
    const Tokens tp = turning_point(test::llama3_8b(), test::profile_a());
    EXPECT_GE(tp, 1536u);
    EXPECT_LE(tp, 2560u);
}

TEST(Roofline, InfiniteLinkTurnsAtOne) {
    HardwareSpec hw = test::profile_a();
    hw.link_bw_large = std::numeric_limits<double>::infinity();
    EXPECT_EQ(turning_point(test::llama3_8b(), hw), 1u);
}

TEST(Roofline, BiggerModelTurnsEarlier) {
    EXPECT_LT(turning_point(test::llama3_70b(), test::profile_a()), turning_point(test::llama3_8b(), test::profile_a()));
}

TEST(Roofline, PhaseTimeEnvelope) {
    const ModelSpec m = test::llama3_8b();
    const HardwareSpec hw = test::profile_a();
    constexpr Tokens s = Tokens{1} << 20;
    const double prefill = phase_time(m, hw, Phase::Prefill, Policy::head_offload(1), s, 10240);
    EXPECT_GE(prefill, 0.5 * 2033);
    EXPECT_LE(prefill, 1.5 * 2033);
    const double decode = phase_time(m, hw, Phase::Decode, Policy::head_offload(1), s, 10240);
    EXPECT_GE(decode, 0.5 * 6.41);
    EXPECT_LE(decode, 1.5 * 6.41);
    const double ratio = phase_time(m, hw, Phase::Decode, Policy::head_offload(1), 2 * s, 10240) / decode;
    EXPECT_NEAR(ratio, 2.0, 0.2);
}

TEST(Roofline, ResidentDecodeCheaperThanOffload) {
    const ModelSpec m = test::llama3_8b();
    const HardwareSpec hw = test::profile_a();
    EXPECT_LT(phase_time(m, hw, Phase::Decode, Policy::standard(), 40960, 0),
              phase_time(m, hw, Phase::Decode, Policy::layer_offload(), 40960, 0));
    EXPECT_DOUBLE_EQ(phase_time(m, hw, Phase::Prefill, Policy::standard(), 0, 10), 0.0);
}

TEST(Roofline, CompactFormatting) {
    EXPECT_EQ(si_compact(17.18e9), "17G");
    EXPECT_EQ(si_compact(1.72e12), "1.7T");
    EXPECT_EQ(si_compact(4096), "4.1K");
    EXPECT_DOUBLE_EQ(round_significant(0.5243e6, 1), 0.5e6);
    EXPECT_TRUE(test::matches_literal(0.5243e6, "0.5M"));
    EXPECT_FALSE(test::matches_literal(0.6243e6, "0.5M"));
}

TEST(Roofline, LiteralPrecision) {
    EXPECT_EQ(test::literal_digits("4100"), 2);
    EXPECT_EQ(test::literal_digits("0.5M"), 1);
    EXPECT_EQ(test::literal_digits("215G"), 3);
    EXPECT_EQ(test::literal_digits("1"), 1);
    EXPECT_DOUBLE_EQ(test::literal_ulp("215G"), 1e9);
    EXPECT_TRUE(test::matches_literal(214.7e9, "215G"));
    EXPECT_TRUE(test::matches_literal(209.7e6, "209M"));
    EXPECT_FALSE(test::matches_literal(230e9, "215G"));
    EXPECT_FALSE(test::matches_literal(312e12, "165T"));
}
