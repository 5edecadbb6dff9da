#include <adaptz/regret_lab.hpp>

#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

namespace rl = adaptz::regret;

TEST(Regret, ScalarClosedForm) {
    const auto p = rl::make_scalar_closed_form(40, 0.25);
    const auto run = rl::run_oco(p);
    // theta_t = (1 - 2 gamma)^t and the gap at step t is theta_t^2
    double expected = 0.0;
    for (std::size_t t = 0; t < 40; ++t) expected += std::pow(0.25, static_cast<double>(t));
    EXPECT_NEAR(run.regret, expected, 1e-8);
    EXPECT_NEAR(run.regret, (1.0 - std::pow(0.25, 40.0)) / 0.75, 1e-8);
    for (std::size_t t = 0; t < 40; ++t) EXPECT_DOUBLE_EQ(run.trajectory[t][0], std::pow(0.5, static_cast<double>(t)));
    EXPECT_TRUE(rl::check_bound(run).pass);
}

TEST(Regret, NoiselessStaticProblemConvergesBelowBound) {
    rl::OCOProblem p = rl::base_problem("static", 3);
    p.noise_std = 0.0;
    p.theta_star.assign(1000, rl::Vec{0.3, -0.2, 0.4});
    const auto run = rl::run_oco(p);
    EXPECT_LE(run.b_hat, 1e-12);
    EXPECT_LE(run.lambda_hat, 1e-12);
    EXPECT_EQ(run.path_variation, 0.0);
    double dist = 0.0;
    for (std::size_t i = 0; i < 3; ++i) dist += std::pow(run.trajectory.back()[i] - p.theta_star[0][i], 2);
    EXPECT_LT(std::sqrt(dist), 1e-6);
    // sublinear: the second half contributes far less than the first
    rl::OCOProblem half = p;
    half.theta_star.resize(500);
    EXPECT_LT(run.regret - rl::run_oco(half).regret, 1e-6);
    EXPECT_TRUE(rl::check_bound(run).pass);
}

TEST(Regret, PathVariationMatchesBruteForce) {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<rl::Vec> path;
        for (int t = 0; t < 200; ++t) path.push_back(rl::random_in_ball(rng, 3, 1.0));
        long double brute = 0.0L;
        for (std::size_t t = 0; t + 1 < path.size(); ++t) {
            long double s = 0.0L;
            for (std::size_t i = 0; i < 3; ++i) s += (long double)(path[t][i] - path[t + 1][i]) * (path[t][i] - path[t + 1][i]);
            brute += std::sqrt(s);
        }
        EXPECT_NEAR(rl::path_variation(path), static_cast<double>(brute), 1e-12);
    }
}

TEST(Regret, PiecewiseJumpsGiveExactVariation) {
    std::vector<rl::Vec> path;
    for (int j = 0; j < 4; ++j)
        for (int t = 0; t < 10; ++t) path.push_back({0.25 * j, 0.0});
    EXPECT_DOUBLE_EQ(rl::path_variation(path), 3 * 0.25);
}

TEST(Regret, ComparatorFlagsAnUndersizedBound) {
    const auto run = rl::run_oco(rl::make_family("piecewise", 1));
    EXPECT_TRUE(rl::check_bound(run).pass);
    EXPECT_FALSE(rl::check_bound(run, run.regret / 2.0).pass);
}

TEST(Regret, BoundFormula) {
    EXPECT_DOUBLE_EQ(rl::bound_value(10, 2.0, 0.5, 3.0, 0.1, 0.4, 0.6), 10 * 2.0 * 0.01 + 4.0 * 3.0 + 10 * 0.5 * 1.0 / 2);
}

TEST(Regret, InvalidProblemsAreRejected) {
    rl::OCOProblem p = rl::make_scalar_closed_form();
    p.theta_star[3] = {2.0};
    EXPECT_THROW(rl::run_oco(p), std::invalid_argument);
    p = rl::make_scalar_closed_form();
    p.gamma = 0.0;
    EXPECT_THROW(rl::run_oco(p), std::invalid_argument);
    EXPECT_THROW(rl::make_family("spiral", 1), std::invalid_argument);
}

TEST(Regret, FamiliesRespectTheRadiusAndAreDeterministic) {
    for (const auto& f : rl::family_names()) {
        const auto p = rl::make_family(f, 9);
        EXPECT_EQ(p.horizon(), rl::kFamilyHorizon);
        for (const auto& s : p.theta_star) EXPECT_LE(rl::norm2(s), p.radius);
        const auto a = rl::run_oco(p), b = rl::run_oco(p);
        EXPECT_EQ(a.regret, b.regret);
        EXPECT_EQ(a.bound, b.bound);
    }
}

TEST(Regret, ReportRowFormat) {
    std::ostringstream out;
    rl::write_report_header(out);
    rl::write_report_row(out, rl::run_oco(rl::make_scalar_closed_form()));
    const std::string s = out.str();
    EXPECT_EQ(s.substr(0, s.find('\n')), "family,seed,T,gamma,R_d,V,b_hat,lambda_hat,G_hat,bound,pass");
    EXPECT_EQ(s.substr(s.size() - 3), ",1\n");
}
