#pragma once

// Experiment configuration and orchestration.
//
// Config files are flat `key = value` text. Blank lines and lines starting
// with '#' are ignored. List keys accept repeated lines and/or comma separated
// values; every other key may appear once. Relative paths are resolved
// against the directory of the config file. See `config_keys()` for the full
// key table and defaults.

#include <adaptz/datastream.hpp>
#include <adaptz/forecaster.hpp>
#include <adaptz/online_engine.hpp>

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace adaptz {

class ConfigError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

struct KeyValue {
    std::string key;
    std::string value;
    std::size_t line = 0;
};

namespace detail {

inline std::string trimmed(std::string_view s) { return std::string(trim(s)); }

inline std::vector<std::string> split_list(const std::string& v) {
    std::vector<std::string> out;
    for (auto part : split_fields(v)) {
        std::string p = trimmed(part);
        if (!p.empty()) out.push_back(std::move(p));
    }
    return out;
}

template <class Int>
Int parse_int(const std::string& key, const std::string& v) {
    Int out{};
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || ptr != v.data() + v.size()) {
        throw ConfigError("config: '" + key + "' expects an integer, got '" + v + "'");
    }
    return out;
}

inline double parse_real(const std::string& key, const std::string& v) {
    double out = 0.0;
    if (!parse_double(v, out)) throw ConfigError("config: '" + key + "' expects a real number, got '" + v + "'");
    return out;
}

inline bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw ConfigError("config: '" + key + "' expects true/false, got '" + v + "'");
}

inline std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

inline std::string csv_field(std::string s) {
    for (char& c : s) {
        if (c == ',' || c == '\n' || c == '\r') c = ';';
    }
    return s;
}

}  // namespace detail

inline std::vector<KeyValue> parse_key_values(std::istream& in, const std::string& source = "<config>") {
    std::vector<KeyValue> out;
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
        ++n;
        const std::string t = detail::trimmed(line);
        if (t.empty() || t.front() == '#') continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos) {
            throw ConfigError(source + ":" + std::to_string(n) + ": expected key = value, got '" + t + "'");
        }
        KeyValue kv{detail::trimmed(std::string_view(t).substr(0, eq)),
                    detail::trimmed(std::string_view(t).substr(eq + 1)), n};
        if (kv.key.empty()) throw ConfigError(source + ":" + std::to_string(n) + ": empty key");
        out.push_back(std::move(kv));
    }
    return out;
}

inline std::vector<KeyValue> read_key_value_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path);
    return parse_key_values(in, path);
}

// ---- drift spec files ----

inline const std::vector<std::string>& drift_spec_keys() {
    static const std::vector<std::string> keys{"kind",     "change_points", "magnitudes", "ar_coeff", "noise_std",
                                               "channels", "length",        "seed",       "trend",    "lag"};
    return keys;
}

// Returns the spec and whether the file fixed the seed.
inline std::pair<DriftSpec, bool> drift_spec_from_key_values(const std::vector<KeyValue>& kvs,
                                                             const std::string& source = "<drift spec>") {
    DriftSpec s;
    bool seeded = false;
    std::map<std::string, std::size_t> seen;
    for (const auto& kv : kvs) {
        const auto& keys = drift_spec_keys();
        if (std::find(keys.begin(), keys.end(), kv.key) == keys.end()) {
            std::string valid;
            for (const auto& k : keys) valid += (valid.empty() ? "" : ", ") + k;
            throw ConfigError(source + ":" + std::to_string(kv.line) + ": unknown key '" + kv.key +
                              "'; valid keys: " + valid);
        }
        if (seen[kv.key]++ && kv.key != "change_points" && kv.key != "magnitudes") {
            throw ConfigError(source + ": key '" + kv.key + "' given more than once");
        }
        if (kv.key == "kind") {
            if (kv.value == "mean_shift") s.kind = DriftKind::mean_shift;
            else if (kv.value == "concept_drift") s.kind = DriftKind::concept_drift;
            else throw ConfigError(source + ": kind must be mean_shift or concept_drift");
        } else if (kv.key == "change_points") {
            for (const auto& v : detail::split_list(kv.value)) s.change_points.push_back(detail::parse_int<std::size_t>(kv.key, v));
        } else if (kv.key == "magnitudes") {
            for (const auto& v : detail::split_list(kv.value)) s.magnitudes.push_back(detail::parse_real(kv.key, v));
        } else if (kv.key == "ar_coeff") s.ar_coeff = detail::parse_real(kv.key, kv.value);
        else if (kv.key == "noise_std") s.noise_std = detail::parse_real(kv.key, kv.value);
        else if (kv.key == "channels") s.channels = detail::parse_int<std::size_t>(kv.key, kv.value);
        else if (kv.key == "length") s.length = detail::parse_int<std::size_t>(kv.key, kv.value);
        else if (kv.key == "seed") {
            s.seed = detail::parse_int<std::uint64_t>(kv.key, kv.value);
            seeded = true;
        } else if (kv.key == "trend") s.trend = detail::parse_real(kv.key, kv.value);
        else if (kv.key == "lag") s.lag = detail::parse_int<std::size_t>(kv.key, kv.value);
    }
    validate(s);
    return {s, seeded};
}

inline std::string describe(const DriftSpec& s) {
    std::string d = std::string("kind=") + (s.kind == DriftKind::mean_shift ? "mean_shift" : "concept_drift");
    d += ";change_points=";
    for (std::size_t i = 0; i < s.change_points.size(); ++i) d += (i ? "," : "") + std::to_string(s.change_points[i]);
    d += ";magnitudes=";
    for (std::size_t i = 0; i < s.magnitudes.size(); ++i) d += (i ? "," : "") + detail::format_double(s.magnitudes[i]);
    d += ";ar_coeff=" + detail::format_double(s.ar_coeff) + ";noise_std=" + detail::format_double(s.noise_std) +
         ";channels=" + std::to_string(s.channels) + ";length=" + std::to_string(s.length) +
         ";trend=" + detail::format_double(s.trend) + ";lag=" + std::to_string(s.lag);
    return d;
}

// The built-in stream used when a plan names no data source: three channels,
// two trending drivers and a target whose first coefficient flips sign halfway.
inline DriftSpec default_drift_stream() {
    DriftSpec s;
    s.kind = DriftKind::concept_drift;
    s.length = 6000;
    s.channels = 3;
    s.change_points = {3000};
    s.magnitudes = {-1.0};
    s.ar_coeff = 0.95;
    s.noise_std = 0.1;
    s.trend = 0.01;
    s.lag = 1;
    return s;
}

// ---- experiment plans ----

struct StreamSource {
    std::string name;
    std::string csv_path;            // set for CSV sources
    std::optional<DriftSpec> drift;  // set for synthetic sources
    bool drift_seed_from_run = true;

    std::string identity(std::uint64_t run_seed) const {
        if (!drift) return "csv:" + csv_path;
        std::uint64_t seed = drift_seed_from_run ? run_seed : drift->seed;
        return "drift:" + describe(*drift) + ";seed=" + std::to_string(seed);
    }

    SeriesFrame load(std::uint64_t run_seed) const {
        if (!drift) return load_csv(csv_path);
        DriftSpec s = *drift;
        if (drift_seed_from_run) s.seed = run_seed;
        return generate(s);
    }
};

struct PlanConfig {
    std::vector<StreamSource> streams;
    std::vector<std::string> methods{"ori", "fogd", "ogd", "adaptz"};
    std::vector<std::size_t> horizons{24};
    std::vector<std::uint64_t> seeds{2025};
    std::vector<std::size_t> pretrain_epochs{3};
    EngineConfig engine;
    bool ablation = false;
    std::size_t width = 64;
    std::size_t n_blocks = 3;
    int tap_index = -1;
    TrainOptions train{5, 0.001, 32, 2025};
    SplitSpec split;
    std::string out_dir = "results";
    std::size_t threads = 0;  // 0: hardware concurrency
    bool traces = true;
};

struct ConfigKey {
    std::string name;
    bool list;
    std::string default_value;
    std::string help;
};

inline const std::vector<ConfigKey>& config_keys() {
    static const std::vector<ConfigKey> keys{
        {"dataset", true, "", "CSV file; header row, first column ignored"},
        {"drift_spec", true, "", "synthetic stream spec file (key = value); seed defaults to the run seed"},
        {"method", true, "ori,fogd,ogd,adaptz", "ori | fogd | ogd | adaptz"},
        {"horizon", true, "24", "forecast horizon k"},
        {"seed", true, "2025", "run seed (model init, training order, adapter init, synthetic streams)"},
        {"pretrain_epochs", true, "3", "adapter pretraining epochs on the validation split"},
        {"lookback", false, "96", "lookback window L"},
        {"hist_batch", false, "24", "historical-gradient window b"},
        {"lr_adapter", false, "0.0003", "online adapter learning rate"},
        {"lr_head", false, "0.00003", "online output-layer learning rate"},
        {"lr_fogd", false, "0.001", "feature-space OGD learning rate"},
        {"lr_ogd", false, "0.000003", "full-parameter OGD learning rate"},
        {"pretrain_lr", false, "0.001", "adapter pretraining learning rate"},
        {"use_feat", false, "true", "adapter feature path"},
        {"use_grad", false, "true", "adapter historical-gradient path"},
        {"freeze_online", false, "false", "deploy the adapter without online updates"},
        {"hisgrad_at_adjusted", false, "false", "experimental: evaluate the historical gradient at z + delta"},
        {"ablation", false, "false", "add adaptz_wo_grad and adaptz_wo_feat variants"},
        {"width", false, "64", "forecaster hidden width d"},
        {"n_blocks", false, "3", "forecaster blocks"},
        {"tap_index", false, "-1", "feature tap block; negative selects the second-last block"},
        {"train_epochs", false, "5", "offline training epochs"},
        {"train_lr", false, "0.001", "offline training learning rate"},
        {"train_batch", false, "32", "offline training batch size"},
        {"train_frac", false, "0.6", "chronological train fraction"},
        {"val_frac", false, "0.1", "chronological validation fraction"},
        {"test_frac", false, "0.3", "chronological test fraction"},
        {"out_dir", false, "results", "output directory"},
        {"threads", false, "0", "worker threads; 0 uses all cores"},
        {"traces", false, "true", "write trace_<run-id>.csv files"},
    };
    return keys;
}

namespace detail {

inline std::string resolve_path(const std::string& base_dir, const std::string& p) {
    if (p.empty() || base_dir.empty() || std::filesystem::path(p).is_absolute()) return p;
    return (std::filesystem::path(base_dir) / p).lexically_normal().string();
}

inline void apply_key(PlanConfig& c, const std::string& key, const std::vector<std::string>& values,
                      const std::string& base_dir) {
    auto one = [&]() -> const std::string& {
        if (values.size() != 1) throw ConfigError("config: key '" + key + "' given more than once");
        return values.front();
    };
    auto ints = [&]<class Int>(std::vector<Int>& dst) {
        dst.clear();
        for (const auto& v : values)
            for (const auto& p : split_list(v)) dst.push_back(parse_int<Int>(key, p));
        if (dst.empty()) throw ConfigError("config: key '" + key + "' has no values");
    };
    EngineConfig& e = c.engine;
    if (key == "dataset" || key == "drift_spec") {
        for (const auto& v : values) {
            for (const auto& p : split_list(v)) {
                const std::string path = resolve_path(base_dir, p);
                StreamSource s;
                s.name = std::filesystem::path(path).stem().string();
                if (key == "dataset") {
                    s.csv_path = path;
                } else {
                    auto [spec, seeded] = drift_spec_from_key_values(read_key_value_file(path), path);
                    s.drift = spec;
                    s.drift_seed_from_run = !seeded;
                }
                c.streams.push_back(std::move(s));
            }
        }
    } else if (key == "method") {
        c.methods.clear();
        for (const auto& v : values)
            for (const auto& p : split_list(v)) {
                method_from_string(p);
                c.methods.push_back(p);
            }
        if (c.methods.empty()) throw ConfigError("config: key 'method' has no values");
    } else if (key == "horizon") ints(c.horizons);
    else if (key == "seed") ints(c.seeds);
    else if (key == "pretrain_epochs") ints(c.pretrain_epochs);
    else if (key == "lookback") e.lookback = parse_int<std::size_t>(key, one());
    else if (key == "hist_batch") e.hist_batch = parse_int<std::size_t>(key, one());
    else if (key == "lr_adapter") e.lr_adapter = parse_real(key, one());
    else if (key == "lr_head") e.lr_head = parse_real(key, one());
    else if (key == "lr_fogd") e.lr_fogd = parse_real(key, one());
    else if (key == "lr_ogd") e.lr_ogd = parse_real(key, one());
    else if (key == "pretrain_lr") e.pretrain_lr = parse_real(key, one());
    else if (key == "use_feat") e.use_feat = parse_bool(key, one());
    else if (key == "use_grad") e.use_grad = parse_bool(key, one());
    else if (key == "freeze_online") e.freeze_online = parse_bool(key, one());
    else if (key == "hisgrad_at_adjusted") e.hisgrad_at_adjusted = parse_bool(key, one());
    else if (key == "ablation") c.ablation = parse_bool(key, one());
    else if (key == "width") c.width = parse_int<std::size_t>(key, one());
    else if (key == "n_blocks") c.n_blocks = parse_int<std::size_t>(key, one());
    else if (key == "tap_index") c.tap_index = parse_int<int>(key, one());
    else if (key == "train_epochs") c.train.epochs = parse_int<std::size_t>(key, one());
    else if (key == "train_lr") c.train.lr = parse_real(key, one());
    else if (key == "train_batch") c.train.batch = parse_int<std::size_t>(key, one());
    else if (key == "train_frac") c.split.train_frac = parse_real(key, one());
    else if (key == "val_frac") c.split.val_frac = parse_real(key, one());
    else if (key == "test_frac") c.split.test_frac = parse_real(key, one());
    else if (key == "out_dir") c.out_dir = resolve_path(base_dir, one());
    else if (key == "threads") c.threads = parse_int<std::size_t>(key, one());
    else if (key == "traces") c.traces = parse_bool(key, one());
}

inline const ConfigKey& find_key(const std::string& key) {
    for (const auto& k : config_keys())
        if (k.name == key) return k;
    std::string valid;
    for (const auto& k : config_keys()) valid += (valid.empty() ? "" : ", ") + k.name;
    throw ConfigError("config: unknown key '" + key + "'; valid keys: " + valid);
}

}  // namespace detail

// `overrides` are "key=value" strings from the command line. An override
// replaces every file value of its key and emits a warning when the file also
// set that key.
inline PlanConfig parse_config(const std::vector<KeyValue>& file_kvs, const std::vector<std::string>& overrides = {},
                               const std::string& base_dir = "", std::ostream* warnings = &std::cerr) {
    std::vector<std::string> order;
    std::map<std::string, std::vector<std::string>> values;
    for (const auto& kv : file_kvs) {
        const ConfigKey& k = detail::find_key(kv.key);
        if (!values.count(kv.key)) order.push_back(kv.key);
        auto& slot = values[kv.key];
        if (!k.list && !slot.empty()) {
            throw ConfigError("config: key '" + kv.key + "' given more than once (line " + std::to_string(kv.line) + ")");
        }
        slot.push_back(kv.value);
    }
    std::map<std::string, std::vector<std::string>> flag_values;
    for (const auto& o : overrides) {
        const auto eq = o.find('=');
        if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + o + "'");
        const std::string key = detail::trimmed(std::string_view(o).substr(0, eq));
        const std::string val = detail::trimmed(std::string_view(o).substr(eq + 1));
        const ConfigKey& k = detail::find_key(key);
        auto& slot = flag_values[key];
        if (!k.list && !slot.empty()) throw ConfigError("--set: key '" + key + "' given more than once");
        slot.push_back(val);
    }
    for (auto& [key, vals] : flag_values) {
        auto it = values.find(key);
        if (it != values.end()) {
            if (warnings) *warnings << "warning: --set " << key << " overrides the value from the config file\n";
            it->second = vals;
        } else {
            order.push_back(key);
            values[key] = vals;
        }
    }
    PlanConfig c;
    for (const auto& key : order) detail::apply_key(c, key, values[key], base_dir);
    validate(c.engine);
    if (c.width == 0 || c.n_blocks < 2) throw ConfigError("config: need width >= 1 and n_blocks >= 2");
    if (c.train.batch == 0) throw ConfigError("config: train_batch must be >= 1");
    for (std::size_t k : c.horizons)
        if (k == 0) throw ConfigError("config: horizon must be >= 1");
    if (c.streams.empty()) c.streams.push_back(StreamSource{"concept_drift", "", default_drift_stream(), true});
    return c;
}

inline PlanConfig parse_config_file(const std::string& path, const std::vector<std::string>& overrides = {},
                                    std::ostream* warnings = &std::cerr) {
    return parse_config(read_key_value_file(path), overrides, std::filesystem::path(path).parent_path().string(),
                        warnings);
}

struct RunSpec {
    std::size_t index = 0;
    std::size_t stream = 0;
    std::string dataset;
    std::string label;  // ori, fogd, ogd, adaptz, adaptz_wo_grad, adaptz_wo_feat
    EngineConfig cfg;
    std::size_t pretrain_epochs = 0;
    bool uses_pretraining = false;
    std::string canonical;
    std::string run_id;
};

struct ExperimentPlan {
    PlanConfig config;
    std::vector<RunSpec> runs;
};

namespace detail {

inline std::string canonical_run(const PlanConfig& c, const RunSpec& r) {
    const EngineConfig& e = r.cfg;
    std::ostringstream s;
    s << "stream=" << c.streams[r.stream].identity(e.seed) << "\nmethod=" << r.label << "\nhorizon=" << e.horizon
      << "\nseed=" << e.seed << "\nlookback=" << e.lookback << "\nwidth=" << c.width << "\nn_blocks=" << c.n_blocks
      << "\ntap_index=" << c.tap_index << "\ntrain_epochs=" << c.train.epochs
      << "\ntrain_lr=" << format_double(c.train.lr) << "\ntrain_batch=" << c.train.batch
      << "\nsplit=" << format_double(c.split.train_frac) << "," << format_double(c.split.val_frac) << ","
      << format_double(c.split.test_frac);
    switch (e.method) {
        case Method::ori: break;
        case Method::fogd: s << "\nlr_fogd=" << format_double(e.lr_fogd); break;
        case Method::ogd: s << "\nlr_ogd=" << format_double(e.lr_ogd); break;
        case Method::adaptz:
            s << "\nhist_batch=" << e.hist_batch << "\nlr_adapter=" << format_double(e.lr_adapter)
              << "\nlr_head=" << format_double(e.lr_head) << "\npretrain_epochs=" << r.pretrain_epochs
              << "\npretrain_lr=" << format_double(e.pretrain_lr) << "\nuse_feat=" << e.use_feat
              << "\nuse_grad=" << e.use_grad << "\nfreeze_online=" << e.freeze_online
              << "\nhisgrad_at_adjusted=" << e.hisgrad_at_adjusted;
            break;
    }
    return s.str();
}

inline std::string adaptz_label(const EngineConfig& e) {
    if (e.use_feat && e.use_grad) return "adaptz";
    if (e.use_feat) return "adaptz_wo_grad";
    if (e.use_grad) return "adaptz_wo_feat";
    return "adaptz_wo_feat_wo_grad";
}

}  // namespace detail

// Cartesian expansion: stream x horizon x seed x method. adaptz additionally
// expands over pretrain_epochs and, with ablation, over the two single-path
// variants.
inline ExperimentPlan make_plan(const PlanConfig& c) {
    ExperimentPlan plan{c, {}};
    for (std::size_t si = 0; si < c.streams.size(); ++si) {
        for (std::size_t k : c.horizons) {
            for (std::uint64_t seed : c.seeds) {
                for (const auto& m : c.methods) {
                    EngineConfig base = c.engine;
                    base.method = method_from_string(m);
                    base.horizon = k;
                    base.seed = seed;
                    std::vector<EngineConfig> variants{base};
                    if (base.method == Method::adaptz && c.ablation) {
                        EngineConfig a = base, b = base;
                        a.use_feat = true, a.use_grad = false;
                        b.use_feat = false, b.use_grad = true;
                        variants = {base, a, b};
                        variants[0].use_feat = variants[0].use_grad = true;
                    }
                    for (const auto& v : variants) {
                        const bool pre = v.method == Method::adaptz;
                        const std::vector<std::size_t> epochs = pre ? c.pretrain_epochs : std::vector<std::size_t>{0};
                        for (std::size_t ep : epochs) {
                            RunSpec r;
                            r.index = plan.runs.size();
                            r.stream = si;
                            r.dataset = c.streams[si].name;
                            r.label = pre ? detail::adaptz_label(v) : m;
                            r.cfg = v;
                            r.cfg.pretrain_epochs = ep;
                            r.pretrain_epochs = ep;
                            r.uses_pretraining = pre;
                            r.canonical = detail::canonical_run(c, r);
                            r.run_id = detail::hex64(detail::fnv1a64(r.canonical));
                            for (const auto& prev : plan.runs) {
                                if (prev.canonical == r.canonical) {
                                    throw ConfigError("config: duplicate run " + r.dataset + " " + r.label +
                                                      " k=" + std::to_string(k) + " seed=" + std::to_string(seed));
                                }
                            }
                            plan.runs.push_back(std::move(r));
                        }
                    }
                }
            }
        }
    }
    return plan;
}

// ---- execution ----

struct RunResult {
    RunSpec spec;
    bool ok = false;
    std::string status;
    double mse = std::numeric_limits<double>::quiet_NaN();
    MetricsTrace trace;
};

struct RunObserver {
    // Called right before adapter pretraining with the epoch count in use.
    std::function<void(const RunSpec&, std::size_t epochs)> on_pretrain;
};

namespace detail {

struct BaseModel {
    SplitSamples data;
    ForecastModel model;
    std::string error;
};

template <class Fn>
void parallel_for(std::size_t n, std::size_t threads, Fn&& fn) {
    if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
    threads = std::min(threads, n);
    if (threads <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < threads; ++w) {
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < n; i = next++) fn(i);
        });
    }
    for (auto& t : pool) t.join();
}

inline MetricsTrace execute_run(const RunSpec& r, const BaseModel& base, const PlanConfig& c,
                                const RunObserver& obs) {
    const auto& test = base.data.test;
    switch (r.cfg.method) {
        case Method::ori: return run_ori(base.model, test);
        case Method::fogd: return run_fogd(base.model, test, r.cfg);
        case Method::ogd: {
            ForecastModel m = base.model;
            return run_ogd(m, test, r.cfg);
        }
        case Method::adaptz: {
            AdapterNet adapter(c.width, c.width, r.cfg.seed + 1, r.cfg.use_feat, r.cfg.use_grad);
            if (obs.on_pretrain) obs.on_pretrain(r, r.pretrain_epochs);
            pretrain_adapter(base.model, adapter, base.data.val, r.cfg, r.pretrain_epochs);
            ForecastModel m = base.model;
            return run_adaptz(m, adapter, test, r.cfg);
        }
    }
    throw std::logic_error("execute_run: unknown method");
}

}  // namespace detail

// Runs every plan entry. One base model is trained per (stream, horizon,
// seed) and shared read-only by the runs that need it. Results come back in
// plan order regardless of thread count.
inline std::vector<RunResult> execute_plan(const ExperimentPlan& plan, const RunObserver& obs = {}) {
    const PlanConfig& c = plan.config;
    std::map<std::tuple<std::size_t, std::size_t, std::uint64_t>, std::size_t> group_of;
    std::vector<const RunSpec*> group_head;
    std::vector<std::size_t> run_group(plan.runs.size());
    for (const auto& r : plan.runs) {
        auto key = std::make_tuple(r.stream, r.cfg.horizon, r.cfg.seed);
        auto [it, fresh] = group_of.emplace(key, group_head.size());
        if (fresh) group_head.push_back(&r);
        run_group[r.index] = it->second;
    }
    std::vector<detail::BaseModel> bases(group_head.size());
    detail::parallel_for(bases.size(), c.threads, [&](std::size_t g) {
        const RunSpec& r = *group_head[g];
        try {
            const SeriesFrame f = c.streams[r.stream].load(r.cfg.seed);
            bases[g].data = chrono_split(f, c.split, r.cfg.lookback, r.cfg.horizon);
            if (bases[g].data.train.empty() || bases[g].data.test.empty()) {
                throw std::invalid_argument("empty train or test split");
            }
            ForecastModel m(ModelShape{r.cfg.lookback, r.cfg.horizon, c.width, c.n_blocks, c.tap_index}, r.cfg.seed);
            TrainOptions opt = c.train;
            opt.seed = r.cfg.seed;
            offline_train(m, bases[g].data.train, opt);
            bases[g].model = std::move(m);
        } catch (const std::exception& ex) {
            bases[g].error = ex.what();
        }
    });
    std::vector<RunResult> results(plan.runs.size());
    detail::parallel_for(plan.runs.size(), c.threads, [&](std::size_t i) {
        const RunSpec& r = plan.runs[i];
        RunResult& out = results[i];
        out.spec = r;
        const detail::BaseModel& base = bases[run_group[i]];
        if (!base.error.empty()) {
            out.status = "error: " + base.error;
            return;
        }
        try {
            out.trace = detail::execute_run(r, base, c, obs);
            out.mse = out.trace.mse;
            out.ok = true;
            out.status = "ok";
        } catch (const std::exception& ex) {
            out.status = std::string("error: ") + ex.what();
        }
    });
    return results;
}

inline void write_results(std::ostream& out, const std::vector<RunResult>& results) {
    out << "dataset,method,horizon,seed,mse,pretrain_epochs,status,run_id\n";
    for (const auto& r : results) {
        out << detail::csv_field(r.spec.dataset) << ',' << r.spec.label << ',' << r.spec.cfg.horizon << ','
            << r.spec.cfg.seed << ',' << detail::format_double(r.mse) << ',';
        if (r.spec.uses_pretraining) out << r.spec.pretrain_epochs;
        out << ',' << detail::csv_field(r.status) << ',' << r.spec.run_id << '\n';
    }
}

// IMP = (mse_ori - mse_adaptz) / mse_ori per (dataset, horizon, seed,
// pretrain_epochs), using the full two-path adapter.
inline void write_summary(std::ostream& out, const std::vector<RunResult>& results) {
    out << "dataset,horizon,seed,pretrain_epochs,mse_ori,mse_adaptz,imp\n";
    for (const auto& a : results) {
        if (a.spec.label != "adaptz" || !a.ok) continue;
        for (const auto& o : results) {
            if (o.spec.label != "ori" || !o.ok || o.spec.stream != a.spec.stream ||
                o.spec.cfg.horizon != a.spec.cfg.horizon || o.spec.cfg.seed != a.spec.cfg.seed) {
                continue;
            }
            out << detail::csv_field(a.spec.dataset) << ',' << a.spec.cfg.horizon << ',' << a.spec.cfg.seed << ','
                << a.spec.pretrain_epochs << ',' << detail::format_double(o.mse) << ','
                << detail::format_double(a.mse) << ',' << detail::format_double((o.mse - a.mse) / o.mse) << '\n';
            break;
        }
    }
}

// Writes results.csv, summary.csv, plan.txt and one trace_<run-id>.csv per
// successful run into the plan's out_dir. Returns 0 iff every run succeeded.
// Writes results.csv, summary.csv, plan.txt and one trace per successful run
// into plan.config.out_dir. Returns 0 iff every run succeeded.
inline int write_outputs(const ExperimentPlan& plan, const std::vector<RunResult>& results, std::ostream& log) {
    namespace fs = std::filesystem;
    const fs::path dir(plan.config.out_dir);
    fs::create_directories(dir);
    auto open = [&](const fs::path& p) {
        std::ofstream f(p, std::ios::binary);
        if (!f) throw std::runtime_error("cannot write " + p.string());
        return f;
    };
    {
        auto f = open(dir / "results.csv");
        write_results(f, results);
    }
    {
        auto f = open(dir / "summary.csv");
        write_summary(f, results);
    }
    {
        auto f = open(dir / "plan.txt");
        for (const auto& r : plan.runs) f << "[run " << r.run_id << "]\n" << r.canonical << "\n\n";
    }
    int failures = 0;
    for (const auto& r : results) {
        if (!r.ok) {
            ++failures;
            log << "run " << r.spec.run_id << " (" << r.spec.dataset << ' ' << r.spec.label << " k=" << r.spec.cfg.horizon
                << " seed=" << r.spec.cfg.seed << ") failed: " << r.status << '\n';
            continue;
        }
        if (plan.config.traces) {
            auto f = open(dir / ("trace_" + r.spec.run_id + ".csv"));
            write_trace(f, r.trace);
        }
    }
    log << results.size() - static_cast<std::size_t>(failures) << "/" << results.size() << " runs succeeded; outputs in "
        << dir.string() << '\n';
    return failures == 0 ? 0 : 1;
}

inline int run_plan(const ExperimentPlan& plan, std::ostream& log = std::cerr, const RunObserver& obs = {}) {
    return write_outputs(plan, execute_plan(plan, obs), log);
}

}  // namespace adaptz
