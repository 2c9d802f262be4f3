#include <gtest/gtest.h>

#include "fibresync/config.hpp"

using namespace fibresync;
using nlohmann::json;

namespace {

std::vector<std::string> errors_of(const std::string& sub, const json& doc)
{
    try {
        validate_config(sub, doc);
    } catch (const ConfigError& e) {
        return e.errors;
    }
    return {};
}

bool has(const std::vector<std::string>& v, const std::string& needle)
{
    for (const auto& s : v)
        if (s.find(needle) != std::string::npos) return true;
    return false;
}

} // namespace

TEST(Config, EpsTildeRange)
{
    auto e = errors_of("certify", {{"map", {{"family", "example1"}, {"eps_tilde", 0.2}}}});
    ASSERT_EQ(e.size(), 1u);
    EXPECT_EQ(e[0], "eps_tilde out of (0, 1/8)");
}

TEST(Config, DefaultSeedInjected)
{
    RunConfig c = validate_config("lyapunov", json::object());
    EXPECT_EQ(c.seed(), 20240601u);
    EXPECT_EQ(c.doc["seed"], 20240601);
    EXPECT_EQ(c.map()["family"], "example1");
    EXPECT_EQ(c.command()["n"], 10000);
}

TEST(Config, BaseMustBeAtLeastTwo)
{
    EXPECT_TRUE(has(errors_of("certify", {{"map", {{"family", "additive"}, {"b", 1}}}}), "b must be"));
    EXPECT_TRUE(has(errors_of("certify", {{"map", {{"family", "schrodinger"}, {"b", 1}}}}), "b must be"));
}

TEST(Config, RangesEnforced)
{
    EXPECT_TRUE(has(errors_of("certify", {{"map", {{"family", "schrodinger"}, {"lambda", -1}}}}), "lambda"));
    EXPECT_TRUE(has(errors_of("certify", {{"command", {{"C", 1.5}}}}), "C out of (0, 1)"));
    EXPECT_TRUE(has(errors_of("certify", {{"command", {{"C", 0}}}}), "C out of (0, 1)"));
}

TEST(Config, ErrorsAggregated)
{
    auto e = errors_of("certify", {{"map", {{"family", "example1"}, {"eps_tilde", 0.2}, {"c0", 5}}},
                                   {"command", {{"C", 2.0}, {"bogus", 1}}},
                                   {"seed", -4}});
    EXPECT_GE(e.size(), 5u);
    EXPECT_TRUE(has(e, "eps_tilde"));
    EXPECT_TRUE(has(e, "c0"));
    EXPECT_TRUE(has(e, "C out of"));
    EXPECT_TRUE(has(e, "bogus"));
    EXPECT_TRUE(has(e, "seed"));
}

TEST(Config, UnknownKeysRejected)
{
    EXPECT_TRUE(has(errors_of("orbit", {{"mystery", 1}}), "mystery"));
    EXPECT_TRUE(has(errors_of("orbit", {{"map", {{"family", "example1"}, {"b", 7}}}}), "'b'"));
    EXPECT_TRUE(has(errors_of("nonsense", json::object()), "unknown subcommand"));
}

TEST(Config, FamilyRestrictions)
{
    EXPECT_TRUE(has(errors_of("figure1", {{"map", {{"family", "additive"}}}}), "example1"));
    EXPECT_TRUE(has(errors_of("schrodinger", {{"map", {{"family", "example1"}}}}), "schrodinger"));
}

TEST(Config, RoundTrip)
{
    for (const auto& sub : subcommands()) {
        json doc = json::object();
        if (sub == "schrodinger") doc["map"] = {{"family", "schrodinger"}};
        if (sub == "audit-partition") doc["map"] = {{"family", "additive"}};
        RunConfig a = validate_config(sub, doc);
        RunConfig b = validate_config(sub, json::parse(a.doc.dump()));
        EXPECT_EQ(a.doc, b.doc) << sub;
    }
}

TEST(Config, Builders)
{
    RunConfig c = validate_config("certify", {{"map", {{"family", "additive"}, {"b", 40}}}, {"command", {{"C", 0.5}}}});
    SkewProduct m = make_map(c.map());
    EXPECT_EQ(m.b, 40);
    EXPECT_EQ(make_map(c.map(), 57).b, 57);
    CertifyOptions o = make_certify_options(c.command());
    EXPECT_EQ(o.C, 0.5);
    EXPECT_FALSE(o.eps_prime.has_value());

    RunConfig s = validate_config("schrodinger", json::object());
    SchrodingerParams p = make_schrodinger_params(s.map());
    EXPECT_EQ(p.lambda, 30.0);
    EXPECT_EQ(p.b, 10000);

    RunConfig f = validate_config("figure1", json::object());
    X0Descriptor x = make_x0(f.command()["x0"]);
    ASSERT_TRUE(std::holds_alternative<X0PiFraction>(x));
    EXPECT_EQ(std::get<X0PiFraction>(x).den, 350);
}
