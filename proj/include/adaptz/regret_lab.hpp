#pragma once

// Empirical check of the dynamic-regret bound for projected online gradient
// descent with noisy single-sample gradients on linear least squares:
//
//   R_d <= T r b^2 + (r / gamma) V + T gamma (G + lambda) / 2
//
// Observations are y_t = <theta*_t, x_t> + eps_t and the model is
// f(x | theta) = <theta, x>. Expectations are Monte Carlo estimates, and the
// suprema over t in b, lambda and G are approximated by maxima over the
// visited iterates.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <cstdio>
#include <ostream>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace adaptz::regret {

using Vec = std::vector<double>;

enum class InputKind { gaussian, ones };

struct OCOProblem {
    std::string family = "custom";
    std::size_t dim = 1;
    std::vector<Vec> theta_star;  // one entry per step, length T
    Vec theta0;
    InputKind input = InputKind::gaussian;
    double noise_std = 0.0;
    double radius = 1.0;
    double gamma = 0.01;
    std::size_t mc_draws = 1000;
    std::uint64_t seed = 2025;

    std::size_t horizon() const noexcept { return theta_star.size(); }
};

struct OCORun {
    std::string family;
    std::uint64_t seed = 0;
    std::size_t T = 0;
    double gamma = 0.0;
    double radius = 0.0;
    std::vector<Vec> trajectory;  // theta_t used at step t
    double regret = 0.0;          // R_d
    double path_variation = 0.0;  // V
    double b_hat = 0.0;
    double lambda_hat = 0.0;
    double G_hat = 0.0;
    double bound = 0.0;
};

struct BoundReport {
    bool pass = false;
    double regret = 0.0;
    double bound = 0.0;
    double b_hat = 0.0, lambda_hat = 0.0, G_hat = 0.0, V = 0.0, radius = 0.0;
    std::string note;
};

inline double dot(const Vec& a, const Vec& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}
inline double norm2(const Vec& a) { return std::sqrt(dot(a, a)); }

inline double path_variation(const std::vector<Vec>& path) {
    double v = 0.0;
    for (std::size_t t = 0; t + 1 < path.size(); ++t) {
        double s = 0.0;
        for (std::size_t i = 0; i < path[t].size(); ++i) {
            const double d = path[t][i] - path[t + 1][i];
            s += d * d;
        }
        v += std::sqrt(s);
    }
    return v;
}

inline double bound_value(std::size_t T, double r, double gamma, double V, double b, double lambda, double G) {
    const double Td = static_cast<double>(T);
    return Td * r * b * b + (r / gamma) * V + Td * gamma * (G + lambda) / 2.0;
}

inline void project_to_ball(Vec& theta, double r) {
    const double n = norm2(theta);
    if (n > r) {
        for (double& v : theta) v *= r / n;
    }
}

inline void validate(const OCOProblem& p) {
    if (p.dim == 0 || p.theta_star.empty()) throw std::invalid_argument("OCOProblem: empty problem");
    if (p.theta0.size() != p.dim) throw std::invalid_argument("OCOProblem: theta0 has wrong dimension");
    if (!(p.gamma > 0) || !(p.radius > 0) || p.noise_std < 0 || p.mc_draws < 2) {
        throw std::invalid_argument("OCOProblem: need gamma > 0, radius > 0, noise_std >= 0, mc_draws >= 2");
    }
    if (norm2(p.theta0) > p.radius * (1 + 1e-12)) throw std::invalid_argument("OCOProblem: theta0 outside the ball");
    for (const auto& s : p.theta_star) {
        if (s.size() != p.dim) throw std::invalid_argument("OCOProblem: theta* has wrong dimension");
        if (norm2(s) > p.radius * (1 + 1e-12)) throw std::invalid_argument("OCOProblem: ||theta*_t|| exceeds radius");
    }
}

namespace detail {

template <class Rng>
void draw_input(InputKind kind, Rng& rng, Vec& x) {
    if (kind == InputKind::ones) {
        std::fill(x.begin(), x.end(), 1.0);
        return;
    }
    std::normal_distribution<double> n01(0.0, 1.0);
    for (double& v : x) v = n01(rng);
}

}  // namespace detail

inline OCORun run_oco(const OCOProblem& p) {
    validate(p);
    const std::size_t n = p.dim, T = p.horizon(), M = p.mc_draws;
    std::mt19937_64 data_rng(p.seed);
    std::mt19937_64 regret_rng(p.seed ^ 0xA5A5A5A5DEADBEEFULL);
    std::mt19937_64 noise_rng(p.seed ^ 0x0123456789ABCDEFULL);
    std::normal_distribution<double> n01(0.0, 1.0);

    OCORun run;
    run.family = p.family;
    run.seed = p.seed;
    run.T = T;
    run.gamma = p.gamma;
    run.radius = p.radius;
    run.trajectory.reserve(T);

    Vec theta = p.theta0, x(n), diff(n), grad(n), eta(n), eta_mean(n);
    for (std::size_t t = 0; t < T; ++t) {
        const Vec& star = p.theta_star[t];
        run.trajectory.push_back(theta);
        for (std::size_t i = 0; i < n; ++i) diff[i] = theta[i] - star[i];

        // E_x[(f(x|theta*) - f(x|theta))^2]
        double gap = 0.0;
        for (std::size_t m = 0; m < M; ++m) {
            detail::draw_input(p.input, regret_rng, x);
            const double e = dot(x, diff);
            gap += e * e;
        }
        run.regret += gap / static_cast<double>(M);

        detail::draw_input(p.input, data_rng, x);
        const double residual = dot(x, diff);  // f(x|theta) - noiseless target
        for (std::size_t i = 0; i < n; ++i) grad[i] = 2.0 * x[i] * residual;

        // Noise-model Monte Carlo of the single-sample gradient at this x_t.
        double dev = 0.0, sq = 0.0;
        std::fill(eta_mean.begin(), eta_mean.end(), 0.0);
        std::vector<double> eps(M);
        for (std::size_t m = 0; m < M; ++m) {
            eps[m] = p.noise_std * n01(noise_rng);
            double dn = 0.0, en = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                const double ev = 2.0 * x[i] * (residual - eps[m]);
                eta_mean[i] += ev;
                dn += (grad[i] - ev) * (grad[i] - ev);
                en += ev * ev;
            }
            dev += std::sqrt(dn);
            sq += en;
        }
        for (double& v : eta_mean) v /= static_cast<double>(M);
        double trace_cov = 0.0;
        for (std::size_t m = 0; m < M; ++m) {
            for (std::size_t i = 0; i < n; ++i) {
                const double c = 2.0 * x[i] * (residual - eps[m]) - eta_mean[i];
                trace_cov += c * c;
            }
        }
        trace_cov /= static_cast<double>(M);
        run.b_hat = std::max(run.b_hat, dev / static_cast<double>(M));
        run.lambda_hat = std::max(run.lambda_hat, trace_cov);
        run.G_hat = std::max({run.G_hat, dot(grad, grad), sq / static_cast<double>(M)});

        const double y = dot(star, x) + p.noise_std * n01(data_rng);
        const double fit = dot(theta, x) - y;
        for (std::size_t i = 0; i < n; ++i) {
            eta[i] = 2.0 * x[i] * fit;
            if (!std::isfinite(eta[i])) throw std::runtime_error("run_oco: non-finite gradient at step " + std::to_string(t));
            theta[i] -= p.gamma * eta[i];
        }
        project_to_ball(theta, p.radius);
    }
    run.path_variation = path_variation(p.theta_star);
    run.bound = bound_value(T, p.radius, p.gamma, run.path_variation, run.b_hat, run.lambda_hat, run.G_hat);
    return run;
}

inline BoundReport check_bound(const OCORun& run, std::optional<double> bound_override = std::nullopt) {
    BoundReport r;
    r.regret = run.regret;
    r.bound = bound_override.value_or(run.bound);
    r.b_hat = run.b_hat;
    r.lambda_hat = run.lambda_hat;
    r.G_hat = run.G_hat;
    r.V = run.path_variation;
    r.radius = run.radius;
    r.pass = r.regret <= r.bound;
    r.note = "expectations by Monte Carlo; b, lambda, G are maxima over visited iterates";
    return r;
}

// ---- problem families ----

inline constexpr std::size_t kFamilyDim = 3;
inline constexpr std::size_t kFamilyHorizon = 1000;

inline OCOProblem base_problem(const std::string& family, std::uint64_t seed) {
    OCOProblem p;
    p.family = family;
    p.dim = kFamilyDim;
    p.theta0 = Vec(kFamilyDim, 0.0);
    p.input = InputKind::gaussian;
    p.noise_std = 0.5;
    p.radius = 1.0;
    p.gamma = 0.02;
    p.seed = seed;
    return p;
}

template <class Rng>
Vec random_in_ball(Rng& rng, std::size_t n, double max_norm) {
    std::normal_distribution<double> n01(0.0, 1.0);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Vec v(n);
    for (double& x : v) x = n01(rng);
    const double scale = max_norm * std::pow(u(rng), 1.0 / static_cast<double>(n)) / norm2(v);
    for (double& x : v) x *= scale;
    return v;
}

// static: fixed optimum; piecewise: 5 constant segments; rotating: optimum
// travels twice around a circle of radius 0.8.
inline OCOProblem make_family(const std::string& family, std::uint64_t seed) {
    OCOProblem p = base_problem(family, seed);
    std::mt19937_64 rng(seed * 7919 + 17);
    const std::size_t T = kFamilyHorizon;
    if (family == "static") {
        const Vec s = random_in_ball(rng, p.dim, 0.8);
        p.theta_star.assign(T, s);
    } else if (family == "piecewise") {
        const std::size_t segments = 5;
        for (std::size_t j = 0; j < segments; ++j) {
            const Vec s = random_in_ball(rng, p.dim, 0.8);
            for (std::size_t t = 0; t < T / segments; ++t) p.theta_star.push_back(s);
        }
    } else if (family == "rotating") {
        std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
        const double ph = phase(rng);
        for (std::size_t t = 0; t < T; ++t) {
            const double a = ph + 4.0 * std::numbers::pi * static_cast<double>(t) / static_cast<double>(T);
            p.theta_star.push_back({0.8 * std::cos(a), 0.8 * std::sin(a), 0.0});
        }
    } else {
        throw std::invalid_argument("unknown regret family '" + family + "' (static, piecewise, rotating)");
    }
    return p;
}

inline const std::vector<std::string>& family_names() {
    static const std::vector<std::string> names{"static", "piecewise", "rotating"};
    return names;
}

// theta* = 0, theta_1 = 1, x = 1, no noise: theta_t = (1 - 2 gamma)^(t-1).
inline OCOProblem make_scalar_closed_form(std::size_t T = 40, double gamma = 0.25) {
    OCOProblem p;
    p.family = "scalar";
    p.dim = 1;
    p.theta0 = {1.0};
    p.theta_star.assign(T, Vec{0.0});
    p.input = InputKind::ones;
    p.noise_std = 0.0;
    p.radius = 1.0;
    p.gamma = gamma;
    return p;
}

inline void write_report_header(std::ostream& out) {
    out << "family,seed,T,gamma,R_d,V,b_hat,lambda_hat,G_hat,bound,pass\n";
}

inline void write_report_row(std::ostream& out, const OCORun& run) {
    const BoundReport r = check_bound(run);
    char buf[512];
    std::snprintf(buf, sizeof buf, "%s,%llu,%zu,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%d\n",
                  run.family.c_str(), static_cast<unsigned long long>(run.seed), run.T, run.gamma, r.regret, r.V,
                  r.b_hat, r.lambda_hat, r.G_hat, r.bound, r.pass ? 1 : 0);
    out << buf;
}

}  // namespace adaptz::regret
