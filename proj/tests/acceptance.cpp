// Acceptance runner: one PASS/FAIL line per criterion, nonzero exit if any
// criterion fails. CSV artifacts go to --out (default ./acceptance_out).

#include <adaptz/checkpoint.hpp>
#include <adaptz/cli_runner.hpp>
#include <adaptz/regret_lab.hpp>

#include <support/oracles.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using adaptz::AdapterNet;
using adaptz::EngineConfig;
using adaptz::ForecastModel;
using adaptz::Method;
using adaptz::MetricsTrace;
using adaptz::Sample;

namespace {

constexpr std::uint64_t kSeeds[] = {2025, 2026, 2027, 2028, 2029};
constexpr std::size_t kHorizon = 24;

struct Outcome {
    bool pass = false;
    std::string detail;
};

struct Timer {
    std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    }
};

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

std::string trace_csv(const MetricsTrace& t) {
    std::ostringstream s;
    adaptz::write_trace(s, t);
    return s.str();
}

std::string param_bytes(const ForecastModel& m, const AdapterNet& a) {
    std::ostringstream s;
    adaptz::save_checkpoint(s, m, &a);
    return s.str();
}

adaptz::SeriesFrame drift_frame(std::size_t length, std::uint64_t seed) {
    adaptz::DriftSpec s = adaptz::default_drift_stream();
    s.length = length;
    s.change_points = {length / 2};
    s.seed = seed;
    return adaptz::gen_concept_drift(s);
}

EngineConfig engine(std::size_t k, Method m = Method::adaptz) {
    EngineConfig c;
    c.method = m;
    c.horizon = k;
    return c;
}

MetricsTrace run_method(Method m, const ForecastModel& model, std::span<const Sample> stream, const EngineConfig& cfg,
                        const adaptz::RunHooks& hooks = {}) {
    switch (m) {
        case Method::ori: return adaptz::run_ori(model, stream, hooks);
        case Method::fogd: return adaptz::run_fogd(model, stream, cfg, hooks);
        case Method::ogd: {
            ForecastModel copy = model;
            return adaptz::run_ogd(copy, stream, cfg, hooks);
        }
        case Method::adaptz: {
            ForecastModel copy = model;
            AdapterNet a(model.width(), model.width(), cfg.seed + 1);
            return adaptz::run_adaptz(copy, a, stream, cfg, hooks);
        }
    }
    return {};
}

constexpr Method kMethods[] = {Method::ori, Method::fogd, Method::ogd, Method::adaptz};

// 1
Outcome gradient_correctness() {
    Timer t;
    double worst[3] = {0, 0, 0};
    std::size_t tensors = 0;
    for (std::uint64_t s = 0; s < 100; ++s) {
        const auto a = oracle::check_forecaster_params(10000 + s);
        const auto b = oracle::check_feature_gradient(20000 + s);
        const auto c = oracle::check_adapter(30000 + s);
        worst[0] = std::max(worst[0], a.max_error);
        worst[1] = std::max(worst[1], b.max_error);
        worst[2] = std::max(worst[2], c.max_error);
        tensors += a.tensors + b.tensors + c.tensors;
    }
    const double secs = t.seconds();
    const bool ok = worst[0] < 1e-5 && worst[1] < 1e-5 && worst[2] < 1e-5 && secs < 30.0;
    return {ok, fmt("max rel err forecaster %.2e, feature %.2e, adapter %.2e over %zu tensors in 300 configs; %.1fs",
                    worst[0], worst[1], worst[2], tensors, secs)};
}

// 2
Outcome frozen_equivalence() {
    std::size_t compared = 0, mismatches = 0;
    const auto f = drift_frame(2000 + 96 + 48, 2025);
    for (std::size_t k : {1u, 24u, 48u}) {
        auto stream = oracle::windows(f, 96, k);
        stream.resize(2000);
        const ForecastModel m(adaptz::ModelShape{96, k, 64, 3, -1}, 2025);
        EngineConfig cfg = engine(k);
        cfg.lr_adapter = cfg.lr_head = cfg.lr_fogd = cfg.lr_ogd = 0.0;
        const std::string ori = trace_csv(adaptz::run_ori(m, stream));
        for (Method meth : kMethods) {
            ++compared;
            if (trace_csv(run_method(meth, m, stream, cfg)) != ori) ++mismatches;
        }
    }
    return {mismatches == 0, fmt("%zu/%zu (method, k) traces byte-identical to ori over 2000 steps, k in {1,24,48}",
                                 compared - mismatches, compared)};
}

// 3
Outcome prefix_property() {
    const std::size_t k = 8;
    const auto f = drift_frame(700, 2025);
    const auto stream = oracle::windows(f, 32, k);
    const ForecastModel m(adaptz::ModelShape{32, k, 16, 3, -1}, 2025);
    std::mt19937_64 rng(2025);
    adaptz::RunHooks keep;
    keep.keep_predictions = true;
    std::size_t pairs = 0, bad = 0;
    EngineConfig cfg = engine(k);
    cfg.hist_batch = 8;
    cfg.lookback = 32;
    for (Method meth : kMethods) {
        for (int i = 0; i < 50; ++i) {
            const std::size_t mlen = std::uniform_int_distribution<std::size_t>(1, stream.size() - 101)(rng);
            const std::size_t ext = std::uniform_int_distribution<std::size_t>(1, 100)(rng);
            const auto a = run_method(meth, m, std::span(stream).first(mlen), cfg, keep);
            const auto b = run_method(meth, m, std::span(stream).first(mlen + ext), cfg, keep);
            ++pairs;
            for (std::size_t j = 0; j < mlen; ++j) {
                if (!(a.predictions[j] == b.predictions[j])) {
                    ++bad;
                    break;
                }
            }
        }
    }
    return {bad == 0, fmt("%zu/%zu (m, extension) pairs bit-identical across 4 methods", pairs - bad, pairs)};
}

// 4
Outcome delay_audit() {
    const auto f = drift_frame(1500, 2025);
    const auto stream = oracle::windows(f, 96, kHorizon);
    const ForecastModel m(adaptz::ModelShape{96, kHorizon, 64, 3, -1}, 2025);
    std::size_t reads = 0, violations = 0;
    adaptz::RunHooks hooks;
    hooks.on_cache_read = [&](const adaptz::CacheRead& r) {
        ++reads;
        if (r.record_origin > r.observed_time - static_cast<std::int64_t>(kHorizon)) ++violations;
    };
    EngineConfig cfg = engine(kHorizon);
    cfg.hist_batch = 24;
    for (Method meth : {Method::fogd, Method::ogd, Method::adaptz}) run_method(meth, m, stream, cfg, hooks);
    return {violations == 0 && reads > 0,
            fmt("%zu cache reads audited over fogd/ogd/adaptz runs (k=24, b=24), %zu violations", reads, violations)};
}

struct DriftExperiment {
    adaptz::ExperimentPlan plan;
    std::vector<adaptz::RunResult> results;
    double seconds = 0.0;

    double mse(std::uint64_t seed, const std::string& label) const {
        for (const auto& r : results)
            if (r.spec.cfg.seed == seed && r.spec.label == label) return r.ok ? r.mse : std::nan("");
        return std::nan("");
    }
};

adaptz::ExperimentPlan drift_plan(const fs::path& out) {
    std::vector<std::string> sets{"method=ori,fogd,adaptz", "ablation=true", "horizon=24",
                                  "seed=2025,2026,2027,2028,2029", "out_dir=" + out.string()};
    return adaptz::make_plan(adaptz::parse_config({}, sets, "", nullptr));
}

DriftExperiment drift_experiment(const fs::path& out) {
    DriftExperiment e;
    e.plan = drift_plan(out);
    Timer t;
    e.results = adaptz::execute_plan(e.plan);
    e.seconds = t.seconds();
    return e;
}

// 5
Outcome drift_ordering(const DriftExperiment& e) {
    int a_ori = 0, f_ori = 0, a_f = 0;
    std::string per_seed;
    for (std::uint64_t s : kSeeds) {
        const double o = e.mse(s, "ori"), f = e.mse(s, "fogd"), a = e.mse(s, "adaptz");
        a_ori += a < o;
        f_ori += f < o;
        a_f += a <= f;
        per_seed += fmt(" [%llu ori %.5f fogd %.5f adaptz %.5f]", static_cast<unsigned long long>(s), o, f, a);
    }
    const bool ok = a_ori >= 4 && f_ori >= 4 && a_f >= 4 && e.seconds < 120.0;
    return {ok, fmt("adaptz<ori %d/5, fogd<ori %d/5, adaptz<=fogd %d/5; %.1fs;", a_ori, f_ori, a_f, e.seconds) +
                    per_seed};
}

// 6
Outcome ablation_ordering(const DriftExperiment& e) {
    int g = 0, f = 0;
    std::string per_seed;
    for (std::uint64_t s : kSeeds) {
        const double a = e.mse(s, "adaptz"), wg = e.mse(s, "adaptz_wo_grad"), wf = e.mse(s, "adaptz_wo_feat");
        g += a <= wg;
        f += a <= wf;
        per_seed += fmt(" [%llu full %.6f wo_grad %.6f wo_feat %.6f]", static_cast<unsigned long long>(s), a, wg, wf);
    }
    return {g >= 4 && f >= 4, fmt("adaptz<=wo_grad %d/5, adaptz<=wo_feat %d/5;", g, f) + per_seed};
}

// 7
Outcome stationary_offset() {
    const ForecastModel m(adaptz::ModelShape{96, kHorizon, 64, 3, -1}, 2025);
    const auto s = oracle::offset_stream(m, 3, 4000, 0.5, 0.1, 2025);
    EngineConfig cfg = engine(kHorizon, Method::fogd);
    cfg.lr_fogd = 1.0;
    const auto fogd = adaptz::run_fogd(m, s.samples, cfg);
    const std::size_t window = 500, from = s.samples.size() - window;
    double tail = 0.0, oracle_tail = 0.0;
    for (std::size_t i = from; i < s.samples.size(); ++i) {
        tail += fogd.rows[i].step_mse;
        const auto enc = m.encode(s.samples[i].x);
        oracle_tail += adaptz::mse(m.head_forward(enc.z + s.offset, enc.stats).y_hat, s.samples[i].y);
    }
    tail /= window;
    oracle_tail /= window;
    const double ori = adaptz::run_ori(m, s.samples).mse;
    const bool ok = tail <= 1.1 * oracle_tail;
    return {ok, fmt("final-%zu-step MSE fogd %.6f vs oracle %.6f (ratio %.4f, limit 1.1); ori %.6f; lr_fogd 1.0",
                    window, tail, oracle_tail, tail / oracle_tail, ori)};
}

// 8
Outcome regret_sweep(const fs::path& out) {
    namespace rl = adaptz::regret;
    Timer t;
    std::ofstream report(out / "regret_report.csv", std::ios::binary);
    rl::write_report_header(report);
    int pass = 0, total = 0;
    double worst_ratio = 0.0;
    for (const auto& fam : rl::family_names()) {
        for (std::uint64_t s = 0; s < 20; ++s) {
            const auto run = rl::run_oco(rl::make_family(fam, 2025 + s));
            rl::write_report_row(report, run);
            ++total;
            pass += rl::check_bound(run).pass;
            worst_ratio = std::max(worst_ratio, run.regret / run.bound);
        }
    }
    const auto scalar = rl::run_oco(rl::make_scalar_closed_form(40, 0.25));
    const double closed = (1.0 - std::pow(0.25, 40.0)) / 0.75;
    const double err = std::abs(scalar.regret - closed);
    const double secs = t.seconds();
    return {pass == total && err <= 1e-8 && secs < 60.0,
            fmt("%d/%d runs with R_d <= bound (max R_d/bound %.4f); scalar closed form |err| %.1e; %.1fs", pass, total,
                worst_ratio, err, secs)};
}

// 9
Outcome version_two() {
    const auto f = adaptz::gen_concept_drift([] {
        auto s = adaptz::default_drift_stream();
        s.seed = 2025;
        return s;
    }());
    const auto split = adaptz::chrono_split(f, adaptz::SplitSpec{}, 96, kHorizon);
    ForecastModel m(adaptz::ModelShape{96, kHorizon, 64, 3, -1}, 2025);
    adaptz::offline_train(m, split.train, adaptz::TrainOptions{5, 0.001, 32, 2025});
    EngineConfig cfg = engine(kHorizon);
    AdapterNet a(64, 64, 2026);
    adaptz::pretrain_adapter(m, a, split.val, cfg, cfg.pretrain_epochs);
    cfg.freeze_online = true;
    const std::string before = param_bytes(m, a);
    ForecastModel deployed = m;
    AdapterNet deployed_adapter = a;
    const auto v2 = adaptz::run_adaptz(deployed, deployed_adapter, split.test, cfg);
    const bool unchanged = param_bytes(deployed, deployed_adapter) == before;
    const auto ori = adaptz::run_ori(m, split.test);
    EngineConfig no_hist = cfg;
    no_hist.hist_batch = split.test.size() + 1;
    ForecastModel m2 = m;
    AdapterNet a2 = a;
    const auto without = adaptz::run_adaptz(m2, a2, split.test, no_hist);
    const bool differs = trace_csv(v2) != trace_csv(ori);
    const bool hist_active = trace_csv(v2) != trace_csv(without);
    return {unchanged && differs && hist_active,
            fmt("parameter bytes unchanged: %s; trace differs from ori: %s (mse %.6f vs %.6f); differs from the "
                "zero-hisgrad deployment: %s (mse %.6f)",
                unchanged ? "yes" : "no", differs ? "yes" : "no", v2.mse, ori.mse, hist_active ? "yes" : "no",
                without.mse)};
}

// 10
Outcome determinism(const fs::path& out, const adaptz::ExperimentPlan& first_plan) {
    std::vector<std::string> files{"results.csv", "summary.csv"};
    for (const auto& r : first_plan.runs) files.push_back("trace_" + r.run_id + ".csv");
    std::vector<std::string> snapshot;
    for (const auto& f : files) snapshot.push_back(slurp(out / "drift" / f));
    const std::string regret = slurp(out / "regret_report.csv");

    std::ostringstream log;
    adaptz::ExperimentPlan again = drift_plan(out / "drift_repeat");
    const int rc = adaptz::run_plan(again, log);
    std::size_t same = 0;
    for (std::size_t i = 0; i < files.size(); ++i) same += slurp(out / "drift_repeat" / files[i]) == snapshot[i];

    std::ostringstream regret_again;
    namespace rl = adaptz::regret;
    rl::write_report_header(regret_again);
    for (const auto& fam : rl::family_names())
        for (std::uint64_t s = 0; s < 20; ++s) rl::write_report_row(regret_again, rl::run_oco(rl::make_family(fam, 2025 + s)));
    const bool regret_same = regret_again.str() == regret;

    const ForecastModel m(adaptz::ModelShape{96, kHorizon, 64, 3, -1}, 2025);
    const auto s = oracle::offset_stream(m, 3, 600, 0.5, 0.1, 2025);
    EngineConfig cfg = engine(kHorizon);
    const bool engine_same = trace_csv(run_method(Method::ogd, m, s.samples, cfg)) ==
                             trace_csv(run_method(Method::ogd, m, s.samples, cfg));
    const bool ok = rc == 0 && same == files.size() && regret_same && engine_same;
    return {ok, fmt("%zu/%zu drift-experiment CSVs byte-identical on rerun; regret report identical: %s; ogd "
                    "trace identical: %s",
                    same, files.size(), regret_same ? "yes" : "no", engine_same ? "yes" : "no")};
}

}  // namespace

int main(int argc, char** argv) {
    fs::path out = "acceptance_out";
    for (int i = 1; i + 1 < argc; ++i)
        if (std::string(argv[i]) == "--out") out = argv[i + 1];
    fs::create_directories(out);

    int failures = 0;
    auto report = [&](int id, const char* name, const Outcome& o) {
        std::printf("[%s] %2d %s: %s\n", o.pass ? "PASS" : "FAIL", id, name, o.detail.c_str());
        std::fflush(stdout);
        failures += !o.pass;
    };
    auto guarded = [&](int id, const char* name, const std::function<Outcome()>& fn) {
        try {
            report(id, name, fn());
        } catch (const std::exception& ex) {
            report(id, name, Outcome{false, std::string("aborted: ") + ex.what()});
        }
    };

    guarded(1, "gradient correctness", gradient_correctness);
    guarded(2, "frozen equivalence", frozen_equivalence);
    guarded(3, "causality / prefix", prefix_property);
    guarded(4, "delayed-feedback audit", delay_audit);

    DriftExperiment drift;
    std::string drift_error;
    try {
        drift = drift_experiment(out / "drift");
        std::ostringstream log;
        if (adaptz::write_outputs(drift.plan, drift.results, log) != 0) drift_error = log.str();
    } catch (const std::exception& ex) {
        drift_error = ex.what();
    }
    if (drift_error.empty()) {
        guarded(5, "synthetic concept drift", [&] { return drift_ordering(drift); });
        guarded(6, "ablation ordering", [&] { return ablation_ordering(drift); });
    } else {
        report(5, "synthetic concept drift", {false, "aborted: " + drift_error});
        report(6, "ablation ordering", {false, "aborted: " + drift_error});
    }
    guarded(7, "stationary-offset oracle", stationary_offset);
    guarded(8, "dynamic-regret sweep", [&] { return regret_sweep(out); });
    guarded(9, "frozen deployment contract", version_two);
    guarded(10, "determinism", [&] { return determinism(out, drift.plan); });

    std::printf("%d/10 criteria passed\n", 10 - failures);
    return failures == 0 ? 0 : 1;
}
