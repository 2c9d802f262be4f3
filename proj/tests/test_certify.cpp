#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "fibresync/certify.hpp"
#include "fibresync/experiments.hpp"

using namespace fibresync;

namespace {

// independent scan: plain loop, exact integer floors
std::uint64_t scan_b0(const B0Inputs& in, std::uint64_t limit)
{
    for (std::uint64_t b = 3;; ++b) {
        if (b > limit) return 0;
        long double bb = static_cast<long double>(b);
        if (!(bb > std::max<long double>(2.0L, in.R))) continue;
        long double R = in.R;
        if (!(R / (bb - R) < in.delta)) continue;
        std::uint64_t q = 2 * (in.s + 1) + static_cast<std::uint64_t>(std::floor(in.eps_prime * bb));
        std::uint64_t cap = static_cast<std::uint64_t>(std::floor(bb / (4.0L * (in.l + 1.0L))));
        if (q < cap) return b;
    }
}

// membership scan of {x : g(x) + 1/2 not in G} at the midpoints of n cells
std::pair<std::size_t, double> brute_escape(const ArcUnion& G, std::size_t n)
{
    GPiece g = GPiece::cos3pi();
    std::vector<bool> out(n);
    std::size_t count = 0;
    for (std::size_t k = 0; k < n; ++k) {
        double x = (k + 0.5) / static_cast<double>(n);
        out[k] = !G.contains(CirclePoint(g(x) + 0.5));
        count += out[k];
    }
    std::size_t comps = 0;
    for (std::size_t k = 0; k < n; ++k) comps += out[k] && !out[(k + n - 1) % n];
    if (count == n) comps = 1;
    return {comps, static_cast<double>(count) / static_cast<double>(n)};
}

} // namespace

TEST(Closed, EpsilonBound)
{
    EXPECT_NEAR(std::log(2.0) / (6.0 * std::log(4.0)), 1.0 / 12.0, 1e-15);
    EXPECT_TRUE(check_epsilon_bound(2.0, 0.5, 0.05));
    EXPECT_FALSE(check_epsilon_bound(2.0, 0.5, 0.1));
    EXPECT_TRUE(check_epsilon_bound(1.0, 0.9, 0.0));
    EXPECT_TRUE(check_epsilon_bound(1e6, 0.01, 0.0));
    EXPECT_THROW(check_epsilon_bound(0.5, 0.5, 0.0), ValidationError);
}

TEST(Closed, ComputeL)
{
    EXPECT_NEAR(compute_l(2.0, 0.5), 1.0, 1e-15);
    EXPECT_NEAR(compute_l(4.0, 0.5), 2.0, 1e-15);
    EXPECT_EQ(compute_l(1.0, 0.3), 0.0);
    std::mt19937_64 rng(31);
    std::uniform_real_distribution<double> R(1.0, 1e4), C(0.01, 0.99);
    for (int i = 0; i < 10000; ++i) {
        double r = R(rng), c = C(rng);
        ASSERT_LE(r * std::pow(c, compute_l(r, c)), 1.0 + 1e-12);
    }
}

TEST(Closed, ComputeQ)
{
    EXPECT_EQ(compute_q(2, 0.04, 100), 10u);
    EXPECT_EQ(compute_q(1, 0.001, 10), 4u);
    EXPECT_EQ(compute_q(1, 0.01, 200), 6u);
    EXPECT_EQ(bad_children_cap(1.0, 200), 25u);
}

TEST(Closed, ComputeQMonotone)
{
    std::mt19937_64 rng(32);
    std::uniform_int_distribution<std::uint64_t> s(1, 20), b(2, 100000);
    std::uniform_real_distribution<double> e(0.0, 0.5);
    for (int i = 0; i < 10000; ++i) {
        std::uint64_t ss = s(rng), bb = b(rng);
        double ee = e(rng);
        ASSERT_LE(compute_q(ss, ee, bb), compute_q(ss + 1, ee, bb));
        ASSERT_LE(compute_q(ss, ee, bb), compute_q(ss, ee + 0.01, bb));
        ASSERT_LE(compute_q(ss, ee, bb), compute_q(ss, ee, bb + 1));
    }
}

TEST(Closed, PhiLipschitz)
{
    EXPECT_DOUBLE_EQ(phi_lipschitz_bound(2, 2.0, 4.0), 0.75);
    EXPECT_DOUBLE_EQ(phi_lipschitz_bound(0, 2.0, 4.0), 1.0);
    EXPECT_NEAR(phi_lipschitz_bound(200, 2.0, 4.0), 1.0, 1e-15);
    EXPECT_THROW(phi_lipschitz_bound(0, 4.0, 4.0), ValidationError);
}

TEST(B0, WorkedExampleByScan)
{
    // geometric part needs b > 22; counting part 4 + floor(0.01 b) < floor(b/8)
    B0Inputs in{2.0, 0.1, 1.0, 1, 0.01};
    std::uint64_t b0 = compute_b0(in);
    EXPECT_EQ(b0, scan_b0(in, 1000));
    EXPECT_EQ(b0, 40u);
    EXPECT_EQ(compute_q(1, 0.01, 40), 4u);
    EXPECT_EQ(bad_children_cap(1.0, 40), 5u);
    EXPECT_EQ(bad_children_cap(1.0, 39), 4u);
    EXPECT_TRUE(b0_geometric_ok(in, 23));
    // dyadic delta keeps the boundary exact: 2/(b-2) < 1/8 iff b > 18
    B0Inputs d{2.0, 0.125, 1.0, 1, 0.01};
    EXPECT_TRUE(b0_geometric_ok(d, 19));
    EXPECT_FALSE(b0_geometric_ok(d, 18));
}

TEST(B0, DegenerateExample)
{
    B0Inputs in{2.0, 0.999, 0.0, 1, 1e-9};
    EXPECT_EQ(compute_b0(in), 20u);
    EXPECT_EQ(scan_b0(in, 1000), 20u);
}

TEST(B0, MatchesBruteForce)
{
    std::mt19937_64 rng(33);
    std::uniform_real_distribution<double> R(1.0, 200.0), lg(-4.0, -0.5), l(0.0, 4.0), frac(0.01, 0.99);
    std::uniform_int_distribution<std::uint64_t> s(1, 6);
    for (int i = 0; i < 100; ++i) {
        B0Inputs in;
        in.R = R(rng);
        in.delta = std::pow(10.0, lg(rng));
        in.l = l(rng);
        in.s = s(rng);
        in.eps_prime = frac(rng) / (6.0 * (in.l + 1.0));
        std::uint64_t got = compute_b0(in);
        std::uint64_t expect = scan_b0(in, 50'000'000);
        ASSERT_NE(expect, 0u);
        ASSERT_EQ(got, expect) << "R=" << in.R << " delta=" << in.delta << " l=" << in.l << " s=" << in.s
                               << " eps'=" << in.eps_prime;
    }
}

TEST(B0, Unsatisfiable)
{
    EXPECT_THROW(compute_b0(B0Inputs{2.0, 0.1, 1.0, 1, 0.2}), NumericalError);
    EXPECT_THROW(compute_b0(B0Inputs{1e3, 1e-300, 0.0, 1, 0.01}), NumericalError);
    EXPECT_THROW(compute_b0(B0Inputs{2.0, 0.0, 1.0, 1, 0.01}), ValidationError);
}

TEST(Contraction, Example1Region)
{
    for (double e : {1.0 / 20.0, 1.0 / 6000.0}) {
        SkewProduct m = example1_map(Example1Params(e));
        const std::size_t n = 100000;
        ContractionRegion cr = find_contraction_region(m.fibre, 0.2, n);
        ASSERT_FALSE(cr.warning);
        ASSERT_EQ(cr.region.components(), 1u);
        const Arc& a = cr.region.arcs().front();
        double h = 1.0 / static_cast<double>(n);
        // h' ramps linearly from c0 to c1 over a width e, so h' = C at off into each ramp
        Example1Params p(e);
        double off = (0.2 - p.c0()) / (p.c1() - p.c0()) * e;
        double lo = 0.5 + 2.0 * e - off, hi = 1.5 - 2.0 * e + off;
        EXPECT_NEAR(a.start.value(), lo, 2.0 * h);
        EXPECT_NEAR(a.start.value() + a.length, hi, 2.0 * h);
        // inner approximation
        EXPECT_GE(a.start.value(), lo - 1e-12);
        EXPECT_LE(a.start.value() + a.length, hi + 1e-12);
    }
}

TEST(Contraction, IdentityIsEmpty)
{
    SkewProduct m = make_additive(5, GPiece::cos3pi(), HPiece::identity());
    for (double C : {0.1, 0.5, 0.99}) {
        ContractionRegion cr = find_contraction_region(m.fibre, C, 1000);
        EXPECT_TRUE(cr.warning);
        EXPECT_TRUE(cr.region.empty());
    }
}

TEST(Contraction, RefinementNeverShrinks)
{
    SkewProduct m = make_additive(40, GPiece::sine(0.05, 1), HPiece::sine(0.25, 0.1));
    ArcUnion coarse = find_contraction_region(m.fibre, 0.5, 1000).region;
    ArcUnion fine = find_contraction_region(m.fibre, 0.5, 2000).region;
    EXPECT_GE(fine.measure(), coarse.measure());
    for (int k = 0; k < 10000; ++k) {
        CirclePoint y((k + 0.5) / 10000.0);
        if (coarse.contains(y)) { ASSERT_TRUE(fine.contains(y)); }
    }
}

TEST(Escape, FullTargetHasNoEscape)
{
    SkewProduct m = example1_map(Example1Params(0.05));
    SublevelReport r = escape_set(m.fibre, ArcUnion::full_circle(), CirclePoint(0.3), 1000);
    EXPECT_EQ(r.components, 0u);
    EXPECT_EQ(r.measure, 0.0);
    FibreSweep sw = sup_escape_over_fibre(m.fibre, ArcUnion::full_circle(), 1000, 1000);
    EXPECT_EQ(sw.s, 0u);
    EXPECT_EQ(sw.eps, 0.0);
}

TEST(Escape, Figure2AgainstBruteForce)
{
    const double e = 0.05;
    SkewProduct m = example1_map(Example1Params(e));
    ArcUnion G = example1_contraction_target(e);
    SublevelReport r = escape_set(m.fibre, G, CirclePoint(0.5), 1000000);
    auto [comps, meas] = brute_escape(G, 1000000);
    EXPECT_EQ(r.components, comps);
    EXPECT_NEAR(r.measure, meas, 1e-4);
    // outer approximation
    EXPECT_GE(r.measure, meas - 1e-6);
}

TEST(Escape, Figure2Symmetry)
{
    Figure2 f = figure2(0.05, 10000, 1000000);
    ASSERT_EQ(f.escape.components, 3u);
    // cos(3 pi x) is even about x = 1/3: x -> 2/3 - x fixes the arc around 1/3
    // and swaps the arcs around 2/3 and 0
    auto mid = [](const Arc& a) { return a.start.value() + 0.5 * a.length; };
    const auto& arcs = f.escape.set.arcs();
    EXPECT_NEAR(mid(arcs[0]), 1.0 / 3.0, 2e-6);
    EXPECT_NEAR(circ_diff(mid(arcs[2]), 2.0 / 3.0 - mid(arcs[1])), 0.0, 2e-6);
    EXPECT_NEAR(arcs[1].length, arcs[2].length, 2e-6);
}

TEST(Escape, RefinementNeverGrowsMuch)
{
    SkewProduct m = example1_map(Example1Params(0.05));
    ArcUnion G = example1_contraction_target(0.05);
    for (double y : {0.1, 0.5, 0.8}) {
        SublevelReport a = escape_set(m.fibre, G, CirclePoint(y), 10000);
        SublevelReport b = escape_set(m.fibre, G, CirclePoint(y), 20000);
        EXPECT_LE(b.measure, a.measure + 2.0 * a.components / 10000.0 + 1e-12);
    }
}

TEST(Escape, EpsDecreasesWithEpsTilde)
{
    double prev = 1.0;
    for (double e : {1.0 / 20.0, 1.0 / 100.0, 1.0 / 1000.0}) {
        SkewProduct m = example1_map(Example1Params(e));
        ArcUnion G = find_contraction_region(m.fibre, 0.2, 100000).region;
        FibreSweep sw = sup_escape_over_fibre(m.fibre, G, 1000, 100000);
        EXPECT_LT(sw.eps, prev) << e;
        prev = sw.eps;
    }
}

TEST(Delta, Example1Positive)
{
    SkewProduct m = example1_map(Example1Params(0.05));
    ArcUnion G = find_contraction_region(m.fibre, 0.2, 10000).region;
    EscapeScanner sc(m.fibre, G, 10000);
    auto cells = adaptive_fibre_cells(m.fibre, 1000);
    FibreSweep sw = sweep_fibre(sc, cells);
    DeltaEstimate d = estimate_delta(sc, cells, sw.s, 2.0 * sw.eps, sw.per_cell);
    EXPECT_GT(d.delta, 0.0);

    // admissibility is monotone along the ladder
    bool passed = false;
    for (int k = 1; k <= 20; ++k) {
        FibreSweep fs = sweep_fibre(sc, cells, std::ldexp(1.0, -k));
        bool ok = fs.s <= sw.s && fs.eps <= 2.0 * sw.eps;
        if (passed) { ASSERT_TRUE(ok) << "rung " << k; }
        passed = passed || ok;
    }
    EXPECT_TRUE(passed);
}

TEST(Delta, ZeroFatteningReproducesSweep)
{
    SkewProduct m = make_additive(40, GPiece::sine(0.05, 1), HPiece::sine(0.25, 0.1));
    ArcUnion G = find_contraction_region(m.fibre, 0.5, 10000).region;
    EscapeScanner sc(m.fibre, G, 10000);
    auto cells = adaptive_fibre_cells(m.fibre, 1000);
    FibreSweep a = sweep_fibre(sc, cells), b = sweep_fibre(sc, cells, 0.0);
    EXPECT_EQ(a.s, b.s);
    EXPECT_EQ(a.eps, b.eps);
}

TEST(Counting, Examples)
{
    // m = 0: every step contracting
    OrbitRecord all_in;
    for (int i = 0; i < 10; ++i) {
        all_in.log_dy.push_back(std::log(0.4));
        all_in.in_G.push_back(true);
    }
    CountingCheck c = counting_bound_check(all_in, 0.5, 1.0);
    EXPECT_TRUE(c.hypothesis);
    EXPECT_TRUE(c.bound_held);

    // R = 2, C = 1/2, N = 12, m = 2: product 2^2 (1/2)^10 = 1/256 against 1/64
    OrbitRecord r;
    for (int i = 0; i < 12; ++i) {
        bool out = i < 2;
        r.log_dy.push_back(std::log(out ? 2.0 : 0.5));
        r.in_G.push_back(!out);
    }
    c = counting_bound_check(r, 0.5, 1.0);
    EXPECT_EQ(c.m, 2u);
    EXPECT_TRUE(c.hypothesis);
    EXPECT_TRUE(c.bound_held);
    EXPECT_NEAR(c.log_product, std::log(1.0 / 256.0), 1e-12);
    EXPECT_NEAR(c.log_bound, std::log(1.0 / 64.0), 1e-12);

    r.in_G[2] = false;
    c = counting_bound_check(r, 0.5, 1.0);
    EXPECT_FALSE(c.hypothesis);
}

TEST(Certify, Example1)
{
    SkewProduct m = example1_map(Example1Params(1.0 / 6000.0));
    ClassCertificate cert = certify(m, CertifyOptions{});
    ASSERT_TRUE(cert.certified) << cert.failure;
    EXPECT_TRUE(cert.validate().empty());
    EXPECT_LT(cert.eps, cert.eps_prime);
    EXPECT_LT(cert.eps_prime, cert.eps_ceiling());
    // b0 is far beyond a plain scan; check admissibility at b0 and not at b0 - 1
    auto admissible = [&](std::uint64_t b) {
        long double bb = static_cast<long double>(b), R = cert.R;
        std::uint64_t q = 2 * (cert.s + 1) + static_cast<std::uint64_t>(std::floor(cert.eps_prime * bb));
        std::uint64_t cap = static_cast<std::uint64_t>(std::floor(bb / (4.0L * (cert.l + 1.0L))));
        return bb > R && R / (bb - R) < cert.delta && q < cap;
    };
    EXPECT_TRUE(admissible(cert.b0));
    EXPECT_FALSE(admissible(cert.b0 - 1));
}

TEST(Certify, AdditiveReachableB0)
{
    SkewProduct m = make_additive(40, GPiece::sine(0.05, 1), HPiece::sine(0.25, 0.1));
    CertifyOptions o;
    o.C = 0.5;
    ClassCertificate cert = certify(m, o);
    ASSERT_TRUE(cert.certified) << cert.failure;
    EXPECT_EQ(cert.b0, scan_b0(cert.b0_inputs(), 100000));
    EXPECT_LT(cert.q_of_b(cert.b0), bad_children_cap(cert.l, cert.b0));
}

TEST(Certify, FailuresDoNotThrow)
{
    ClassCertificate c = certify(make_additive(5, GPiece::cos3pi(), HPiece::identity()), CertifyOptions{});
    EXPECT_FALSE(c.certified);
    EXPECT_NE(c.failure.find("condition (a)"), std::string::npos);
    c = certify(schrodinger_projective(SchrodingerParams(30.0, 0.0, Potential::cos2pi(), 10000)), CertifyOptions{});
    EXPECT_FALSE(c.certified);
}

TEST(Certify, JsonRoundTripRevalidates)
{
    SkewProduct m = make_additive(40, GPiece::sine(0.05, 1), HPiece::sine(0.25, 0.1));
    CertifyOptions o;
    o.C = 0.5;
    ClassCertificate cert = certify(m, o);
    nlohmann::json j = cert;
    ClassCertificate back = j.get<ClassCertificate>();
    EXPECT_TRUE(back.validate().empty());
    EXPECT_EQ(back.b0, cert.b0);
    EXPECT_EQ(back.G, cert.G);

    ClassCertificate tampered = back;
    ++tampered.b0;
    EXPECT_FALSE(tampered.validate().empty());
    tampered = back;
    tampered.eps_prime = tampered.eps_ceiling();
    EXPECT_FALSE(tampered.validate().empty());
}
