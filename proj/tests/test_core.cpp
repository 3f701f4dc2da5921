#include <gtest/gtest.h>

#include <set>

#include "leoisac/core.hpp"

using namespace leoisac;

TEST(Units, DecibelConversions) {
    EXPECT_DOUBLE_EQ(dbm_to_watt(30.0), 1.0);
    EXPECT_NEAR(dbm_to_watt(-110.0), 1e-14, 1e-28);
    EXPECT_NEAR(watt_to_dbm(0.1), 20.0, 1e-12);
    EXPECT_NEAR(db_to_linear(10.0), 10.0, 1e-12);
    EXPECT_NEAR(linear_to_db(db_to_linear(-2.6)), -2.6, 1e-12);
    EXPECT_NEAR(deg_to_rad(180.0), kPi, 1e-15);
}

TEST(Seeds, DerivedSeedsAreStableAndDistinct) {
    EXPECT_EQ(derive_seed(1, {2, 3}), derive_seed(1, {2, 3}));
    std::set<std::uint64_t> seen;
    for (std::uint64_t m = 0; m < 4; ++m)
        for (std::uint64_t a = 0; a < 8; ++a)
            for (std::uint64_t b = 0; b < 8; ++b) seen.insert(derive_seed(m, {a, b}));
    EXPECT_EQ(seen.size(), 4u * 8u * 8u);
    // Path order matters.
    EXPECT_NE(derive_seed(5, {1, 2}), derive_seed(5, {2, 1}));
    EXPECT_NE(derive_seed(5, {1}), derive_seed(5, {1, 0}));
}

TEST(Seeds, EnginesReplay) {
    Rng a = make_rng(42, {7}), b = make_rng(42, {7});
    for (int i = 0; i < 100; ++i) ASSERT_EQ(a(), b());
}

TEST(Random, ComplexNormalMoments) {
    Rng rng = make_rng(3, {});
    const int n = 200000;
    cd mean = 0.0;
    double power = 0.0, re2 = 0.0;
    cd pseudo = 0.0;
    for (int i = 0; i < n; ++i) {
        const cd z = complex_normal(rng);
        mean += z;
        power += std::norm(z);
        re2 += z.real() * z.real();
        pseudo += z * z;
    }
    EXPECT_LT(std::abs(mean / double(n)), 0.01);
    EXPECT_NEAR(power / n, 1.0, 0.01);
    EXPECT_NEAR(re2 / n, 0.5, 0.01);
    EXPECT_LT(std::abs(pseudo / double(n)), 0.01);  // circular
}

TEST(Errors, KindsAndNames) {
    try {
        fail(ErrorKind::Infeasible, "nope");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::Infeasible);
        EXPECT_STREQ(e.what(), "nope");
    }
    EXPECT_STREQ(to_string(ErrorKind::Config), "config");
    EXPECT_STREQ(to_string(ErrorKind::Numerical), "numerical");
}

TEST(Matrix, HermitianPart) {
    CMat a(2, 2);
    a << cd(1, 2), cd(3, 0), cd(0, 1), cd(4, -1);
    const CMat h = hermitian_part(a);
    EXPECT_LT((h - h.adjoint()).norm(), 1e-15);
    EXPECT_NEAR(h(0, 0).real(), 1.0, 1e-15);
    EXPECT_NEAR(h(0, 0).imag(), 0.0, 1e-15);
    EXPECT_NEAR(std::abs(h(0, 1) - cd(1.5, -0.5)), 0.0, 1e-15);
}
