#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <gtest/gtest.h>

#include "fibresync/cylinders.hpp"
#include "fibresync/experiments.hpp"

using namespace fibresync;

namespace {

CylinderWord random_word(std::mt19937_64& rng, int b, std::size_t max_depth)
{
    std::uniform_int_distribution<std::size_t> depth(1, max_depth);
    std::uniform_int_distribution<int> digit(1, b);
    std::vector<int> d(depth(rng));
    for (auto& j : d) j = digit(rng);
    return CylinderWord(b, d);
}

SkewProduct constant_fibre(int b) { return make_additive(b, GPiece::zero(), HPiece::identity(), "constant"); }

ArcUnion example1_G(double e) { return find_contraction_region(example1_map(Example1Params(e)).fibre, 0.2, 100000).region; }

} // namespace

TEST(Cylinder, Intervals)
{
    auto a = cylinder_interval(CylinderWord(7, {3}));
    EXPECT_DOUBLE_EQ(a.left, 2.0 / 7.0);
    EXPECT_DOUBLE_EQ(a.width, 1.0 / 7.0);
    auto b = cylinder_interval(CylinderWord(2, {1, 1}));
    EXPECT_EQ(b.left, 0.0);
    EXPECT_EQ(b.width, 0.25);
    EXPECT_THROW(CylinderWord(7, {0}), ValidationError);
    EXPECT_THROW(CylinderWord(7, {8}), ValidationError);
    EXPECT_THROW(CylinderWord(7, {}), ValidationError);
}

TEST(Cylinder, Nesting)
{
    std::mt19937_64 rng(41);
    for (int i = 0; i < 10000; ++i) {
        CylinderWord w = random_word(rng, 7, 6);
        ExactCylinder p = cylinder_interval_exact(w);
        for (int j = 1; j <= 7; ++j) {
            ExactCylinder c = cylinder_interval_exact(w.child(j));
            // [c.num / c.den, (c.num + 1) / c.den) inside [p.num / p.den, (p.num + 1) / p.den)
            ASSERT_EQ(c.den, p.den * 7);
            ASSERT_GE(c.num, p.num * 7);
            ASSERT_LE(c.num + 1, (p.num + 1) * 7);
        }
    }
}

TEST(Cylinder, PartitionTilesExactly)
{
    for (auto [b, n] : {std::pair<int, std::size_t>{2, 6}, {3, 6}, {7, 5}, {10, 4}}) {
        std::uint64_t count = 1;
        for (std::size_t i = 0; i < n; ++i) count *= static_cast<std::uint64_t>(b);
        std::vector<std::uint64_t> nums;
        for (std::uint64_t k = 0; k < count; ++k) {
            ExactCylinder e = cylinder_interval_exact(CylinderWord::from_index(b, n, k));
            ASSERT_EQ(e.den, count);
            nums.push_back(e.num);
        }
        // widths 1/den sum to 1 and left ends cover every slot once
        std::sort(nums.begin(), nums.end());
        for (std::uint64_t k = 0; k < count; ++k) ASSERT_EQ(nums[k], k);
    }
}

TEST(Cylinder, RandomWordsTileExactly)
{
    // 10^4 random depth-3 words of b = 22: exact left ends agree with the
    // floating interval, and disjoint words never share a slot
    std::mt19937_64 rng(42);
    std::uniform_int_distribution<std::uint64_t> idx(0, 22 * 22 * 22 - 1);
    for (int i = 0; i < 10000; ++i) {
        std::uint64_t k = idx(rng);
        CylinderWord w = CylinderWord::from_index(22, 3, k);
        ExactCylinder e = cylinder_interval_exact(w);
        ASSERT_EQ(e.num, k);
        auto f = cylinder_interval(w);
        ASSERT_NEAR(f.left, static_cast<double>(e.num) / e.den, 1e-16);
    }
}

TEST(Cylinder, InverseBranch)
{
    EXPECT_EQ(inverse_branch(1, 0.0, 7), 0.0);
    EXPECT_DOUBLE_EQ(inverse_branch(3, 0.5, 7), 2.5 / 7.0);
    EXPECT_THROW(inverse_branch(0, 0.5, 7), ValidationError);
    // dyadic round trip is exact in double
    std::mt19937_64 rng(43);
    std::uniform_int_distribution<int> num(0, 1023);
    for (int b : {2, 4, 8, 16}) {
        std::uniform_int_distribution<int> j(1, b);
        for (int i = 0; i < 10000; ++i) {
            double x = num(rng) / 1024.0;
            double z = inverse_branch(j(rng), x, b);
            ASSERT_EQ(wrap(b * z), x);
        }
    }
}

TEST(Phi, DepthOneIsDirectSubstitution)
{
    SkewProduct m = example1_map(Example1Params(0.05));
    for (int j = 1; j <= 7; ++j)
        for (double x : {0.0, 0.2, 0.5, 0.99}) {
            double expect = m.fibre.eval((x + j - 1) / 7.0, 0.3);
            ASSERT_LT(circ_dist(CirclePoint(phi_eval(m, 0.3, CylinderWord(7, {j}), x)), CirclePoint(expect)), 1e-15);
        }
}

TEST(Phi, ConstantFibreMap)
{
    SkewProduct m = constant_fibre(7);
    std::mt19937_64 rng(44);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < 1000; ++i) {
        CylinderWord w = random_word(rng, 7, 6);
        double y0 = u(rng);
        ASSERT_EQ(phi_eval(m, y0, w, u(rng)), y0);
    }
}

TEST(Phi, GraphIdentity)
{
    std::mt19937_64 rng(45);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (const SkewProduct& m : {example1_map(Example1Params(0.05)),
                                 make_additive(7, GPiece::sine(0.05, 1), HPiece::sine(0.25, 0.1))}) {
        for (int i = 0; i < 1000; ++i) {
            CylinderWord w = random_word(rng, m.b, 6);
            auto iv = cylinder_interval(w);
            double t = u(rng);
            double x = iv.left + t * iv.width;
            double y0 = u(rng);
            // forward orbit of (x, y0)
            CirclePoint X(x), Y(y0);
            for (std::size_t k = 0; k < w.depth(); ++k) std::tie(X, Y) = m.eval_F(X, Y);
            // b^n x mod 1 = t up to rounding
            double phi = phi_eval(m, y0, w, t);
            ASSERT_LT(circ_dist(Y, CirclePoint(phi)), 1e-9) << w.str();
        }
    }
}

TEST(Phi, SlopeWithinDerivativeBound)
{
    SkewProduct m = example1_map(Example1Params(1.0 / 6000.0));
    const double R = m.fibre.r_bound;
    std::mt19937_64 rng(46);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const double h = 1e-6;
    for (int i = 0; i < 1000; ++i) {
        CylinderWord w = random_word(rng, 7, 6);
        double x = h + u(rng) * (1.0 - 2.0 * h), y0 = u(rng);
        double slope = std::abs(circ_diff(phi_eval(m, y0, w, x - h), phi_eval(m, y0, w, x + h))) / (2.0 * h);
        ASSERT_LE(slope, phi_lipschitz_bound(w.depth(), R, 7.0) + R * h) << w.str();
    }
}

TEST(Classify, ConstantFibreMap)
{
    SkewProduct m = constant_fibre(5);
    ArcUnion G = ArcUnion::normalize({Arc(0.2, 0.5)});
    std::mt19937_64 rng(47);
    for (int i = 0; i < 200; ++i) {
        CylinderWord w = random_word(rng, 5, 4);
        EXPECT_EQ(classify_cylinder(m, 0.45, w, G, 64).status, Badness::good);
        BadnessVerdict v = classify_cylinder(m, 0.9, w, G, 64);
        EXPECT_EQ(v.status, Badness::bad);
        ASSERT_TRUE(v.witness.has_value());
    }
}

TEST(Classify, Example1DepthOneBruteForce)
{
    const double e = 1.0 / 6000.0;
    SkewProduct m = example1_map(Example1Params(e));
    ArcUnion G = example1_G(e);
    for (int j = 1; j <= 7; ++j) {
        bool any_out = false;
        for (int k = 0; k < 1000000 && !any_out; ++k)
            any_out = !G.contains(CirclePoint(m.fibre.eval((k / 1e6 + j - 1) / 7.0, 0.0)));
        BadnessVerdict v = classify_cylinder(m, 0.0, CylinderWord(7, {j}), G, 4096);
        ASSERT_NE(v.status, Badness::unknown) << "j=" << j;
        EXPECT_EQ(v.status == Badness::bad, any_out) << "j=" << j;
    }
}

TEST(Classify, VerdictSoundness)
{
    SkewProduct m = example1_map(Example1Params(0.05));
    ArcUnion G = example1_G(0.05);
    std::mt19937_64 rng(48);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    int good = 0, bad = 0;
    for (int i = 0; i < 300; ++i) {
        CylinderWord w = random_word(rng, 7, 3);
        double y0 = u(rng);
        BadnessVerdict v = classify_cylinder(m, y0, w, G, 64);
        if (v.status == Badness::good) {
            ++good;
            ASSERT_GT(v.margin, 0.0);
            for (int k = 0; k <= 6400; ++k)
                ASSERT_TRUE(G.contains(CirclePoint(phi_eval(m, y0, w, k / 6400.0)))) << w.str() << " k=" << k;
        } else if (v.status == Badness::bad) {
            ++bad;
            ASSERT_TRUE(v.witness.has_value());
            ASSERT_FALSE(G.contains(CirclePoint(phi_eval(m, y0, w, *v.witness))));
        }
    }
    EXPECT_GT(good, 0);
    EXPECT_GT(bad, 0);
}

TEST(Classify, RefinementMonotone)
{
    SkewProduct m = make_additive(12, GPiece::sine(0.05, 1), HPiece::sine(0.25, 0.1));
    ArcUnion G = find_contraction_region(m.fibre, 0.5, 10000).region;
    std::mt19937_64 rng(49);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::size_t resolved = 0;
    for (int i = 0; i < 10000; ++i) {
        CylinderWord w = random_word(rng, 12, 3);
        double y0 = u(rng);
        Badness prev = classify_cylinder(m, y0, w, G, 16).status;
        for (std::size_t n : {32, 64, 192}) {
            Badness cur = classify_cylinder(m, y0, w, G, n).status;
            if (prev != Badness::unknown) { ASSERT_EQ(cur, prev) << w.str() << " n=" << n; }
            resolved += prev == Badness::unknown && cur != Badness::unknown;
            prev = cur;
        }
    }
    EXPECT_GT(resolved, 0u);
}

TEST(Audit, ConstantMapDeepInsideG)
{
    SkewProduct m = constant_fibre(9);
    ClassCertificate cert;
    cert.s = 1;
    cert.eps_prime = 0.01;
    cert.l = 0.0;
    cert.b0 = 9;
    ArcUnion G = ArcUnion::normalize({Arc(0.1, 0.8)});
    ChildAudit a = audit_children(m, 0.5, {3, 4}, G, cert, 32);
    EXPECT_EQ(a.bad + a.unknown, 0u);
    EXPECT_EQ(a.good, 9u);
    EXPECT_TRUE(a.within_q());
}

TEST(Audit, BelowB0IsFlagged)
{
    SkewProduct m = example1_map(Example1Params(1.0 / 6000.0));
    ClassCertificate cert = certify(m, CertifyOptions{});
    ASSERT_TRUE(cert.certified);
    AuditOptions o;
    o.depth = 2;
    AuditReport r = audit_partition(m, 0.0, cert.G, cert, o);
    EXPECT_TRUE(r.below_b0);
    EXPECT_TRUE(r.complete);
    EXPECT_EQ(r.parents_audited, 8u);
}

TEST(Audit, ResumeMatchesSinglePass)
{
    SkewProduct m = make_additive(12, GPiece::sine(0.05, 1), HPiece::sine(0.25, 0.1));
    ClassCertificate cert;
    cert.s = 1;
    cert.eps_prime = 0.05;
    cert.l = 0.0;
    cert.b0 = 12;
    ArcUnion G = find_contraction_region(m.fibre, 0.5, 10000).region;
    AuditOptions full;
    full.depth = 3;
    full.grid_n = 32;
    std::vector<std::string> once;
    AuditReport a = audit_partition(m, 0.1, G, cert, full, std::nullopt,
                                    [&](const CylinderWord& w, const BadnessVerdict& v) { once.push_back(w.str() + to_string(v.status)); });

    AuditOptions step = full;
    step.work_budget = 100;
    step.block = 5;
    std::vector<std::string> pieces;
    std::optional<AuditReport> r;
    int calls = 0;
    do {
        nlohmann::json j = audit_partition(m, 0.1, G, cert, step, r,
                                           [&](const CylinderWord& w, const BadnessVerdict& v) { pieces.push_back(w.str() + to_string(v.status)); });
        r = j.get<AuditReport>(); // through the checkpoint format
        ++calls;
    } while (!r->complete && calls < 1000);
    ASSERT_TRUE(r->complete);
    EXPECT_GT(calls, 1);
    EXPECT_EQ(pieces, once);
    EXPECT_EQ(r->max_flagged_children, a.max_flagged_children);
    EXPECT_EQ(r->parents_audited, a.parents_audited);
    EXPECT_EQ(r->violations, a.violations);
}

TEST(Binomial, Examples)
{
    EXPECT_DOUBLE_EQ(binomial_bad_measure(2, 1, 1, 2), 0.5);
    EXPECT_EQ(binomial_bad_measure(10, 0, 0, 7), 1.0);
    EXPECT_EQ(binomial_bad_measure(10, 3, 0, 7), 0.0);
    for (std::uint64_t n : {1u, 10u, 50u, 400u}) {
        double s = 0.0;
        for (std::uint64_t m = 0; m <= n; ++m) s += binomial_bad_measure(n, m, 3, 11);
        EXPECT_NEAR(s, 1.0, 1e-10) << n;
    }
    EXPECT_NEAR(binomial_bad_measure(5, 2, 1, 10), 10.0 * 0.01 * 0.729, 1e-14);
}

TEST(Prefix, ZeroQHasNoTail)
{
    PrefixStatistics st = prefix_statistics(10, 0, 20, 1000, 7, synthetic_badness(0));
    EXPECT_EQ(st.empirical_tail, 0.0);
    EXPECT_EQ(st.histogram[0], 1000u);
}

TEST(Prefix, SyntheticMatchesBinomial)
{
    PrefixStatistics st = prefix_statistics(10, 1, 50, 100000, 20240601, synthetic_badness(1));
    EXPECT_LT(st.empirical_tail, std::exp(-2.0 * 50 * 0.01));
    EXPECT_NEAR(st.empirical_tail, st.exact_tail, 4.0 * std::sqrt(st.exact_tail * (1 - st.exact_tail) / 1e5));
    EXPECT_GT(st.chi2_p, 0.01);
    EXPECT_TRUE(st.within_bound);
}

TEST(Prefix, GoodMeasureGrows)
{
    double prev = 0.0;
    for (std::size_t n : {10u, 20u, 40u}) {
        PrefixStatistics st = prefix_statistics(10, 1, n, 100000, 99, synthetic_badness(1));
        EXPECT_GE(st.good_measure(), prev) << n;
        prev = st.good_measure();
    }
}

TEST(Prefix, Deterministic)
{
    auto a = prefix_statistics(10, 2, 12, 5000, 3, synthetic_badness(2));
    auto b = prefix_statistics(10, 2, 12, 5000, 3, synthetic_badness(2));
    EXPECT_EQ(a.histogram, b.histogram);
}
