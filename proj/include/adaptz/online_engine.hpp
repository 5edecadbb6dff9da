#pragma once

// Delayed-feedback deployment loops. For a k-step horizon, the full target of
// the sample predicted at step t is known only after step t + k - 1, i.e.
// once the value at time origin_t + k arrives. Every loop below predicts
// first, then "observes" the value at origin_t + 1, which completes the
// sample made at step t - k + 1, and only then updates.
//
// Methods:
//   ori     frozen base model
//   fogd    persistent feature correction updated by delayed gradient descent
//   ogd     delayed single-sample gradient descent on all model parameters
//   adaptz  dual-path adapter fed with the feature and the windowed
//           historical feature-gradient, plus delayed updates of the adapter
//           and the model's output layer

#include <adaptz/adapter.hpp>
#include <adaptz/forecaster.hpp>

#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace adaptz {

enum class Method { ori, fogd, ogd, adaptz };

inline const char* to_string(Method m) {
    switch (m) {
        case Method::ori: return "ori";
        case Method::fogd: return "fogd";
        case Method::ogd: return "ogd";
        case Method::adaptz: return "adaptz";
    }
    return "?";
}

inline Method method_from_string(const std::string& s) {
    if (s == "ori") return Method::ori;
    if (s == "fogd") return Method::fogd;
    if (s == "ogd") return Method::ogd;
    if (s == "adaptz") return Method::adaptz;
    throw std::invalid_argument("unknown method '" + s + "' (expected ori, fogd, ogd, adaptz)");
}

struct EngineConfig {
    Method method = Method::adaptz;
    std::size_t horizon = 24;
    std::size_t lookback = 96;
    std::size_t hist_batch = 24;
    double lr_adapter = 0.0003;
    double lr_head = 0.00003;
    double lr_fogd = 0.001;
    double lr_ogd = 0.000003;
    std::size_t pretrain_epochs = 3;
    double pretrain_lr = 0.001;
    bool use_feat = true;
    bool use_grad = true;
    std::uint64_t seed = 2025;
    bool freeze_online = false;
    // Experimental: evaluate the historical gradient at g(z + delta) instead
    // of the unadjusted g(z).
    bool hisgrad_at_adjusted = false;
};

// Learning rates may be zero (frozen runs); negative rates are rejected.
inline void validate(const EngineConfig& c) {
    if (c.horizon < 1) throw std::invalid_argument("EngineConfig: horizon must be >= 1");
    if (c.hist_batch < 1) throw std::invalid_argument("EngineConfig: hist_batch must be >= 1");
    if (c.lookback < 2) throw std::invalid_argument("EngineConfig: lookback must be >= 2");
    for (double lr : {c.lr_adapter, c.lr_head, c.lr_fogd, c.lr_ogd, c.pretrain_lr}) {
        if (!(lr >= 0.0)) throw std::invalid_argument("EngineConfig: learning rates must be >= 0");
    }
}

struct TraceRow {
    std::int64_t t = 0;
    double step_mse = 0.0;
    double cum_mse = 0.0;
};

struct MetricsTrace {
    std::vector<TraceRow> rows;
    std::vector<Matrix> predictions;  // filled when RunHooks::keep_predictions
    double mse = 0.0;

    void push(std::int64_t t, const Matrix& y_hat, const Matrix& y, bool keep) {
        if (!all_finite(y_hat)) throw std::runtime_error("non-finite prediction at origin " + std::to_string(t));
        const double e = adaptz::mse(y_hat, y);
        sum_ += e;
        rows.push_back({t, e, sum_ / static_cast<double>(rows.size() + 1)});
        mse = rows.back().cum_mse;
        if (keep) predictions.push_back(y_hat);
    }

  private:
    double sum_ = 0.0;
};

inline void write_trace(std::ostream& out, const MetricsTrace& tr) {
    out << "t,step_mse,cum_mse\n";
    char buf[96];
    for (const auto& r : tr.rows) {
        std::snprintf(buf, sizeof buf, "%lld,%.17g,%.17g\n", static_cast<long long>(r.t), r.step_mse,
                      r.cum_mse);
        out << buf;
    }
}

// One read of a cached record by an update, for delay audits.
struct CacheRead {
    std::int64_t observed_time = 0;  // latest timestamp whose value is known
    std::int64_t record_origin = 0;
    const char* purpose = "";
};

struct RunHooks {
    std::function<void(const CacheRead&)> on_cache_read;
    bool keep_predictions = false;
};

struct StepRecord {
    std::int64_t step = -1;
    std::int64_t origin = 0;
    const Sample* sample = nullptr;
    Matrix z;
    Matrix hisgrad_used;
    Matrix delta;
    Matrix y_hat;
    NormStats stats;
    HeadTape head_tape;
    AdapterTape adapter_tape;
    std::optional<Matrix> target;    // set once the full target has been observed
    std::optional<Matrix> feat_grad;  // per-sample d MSE / d z at observation time
};

class InvariantViolation : public std::logic_error {
  public:
    using std::logic_error::logic_error;
};

// Fixed-capacity cache keyed by step index.
class RingCache {
  public:
    explicit RingCache(std::size_t capacity) : slots_(capacity) {
        if (capacity == 0) throw std::invalid_argument("RingCache: capacity must be positive");
    }

    std::size_t capacity() const noexcept { return slots_.size(); }

    StepRecord& put(StepRecord rec) {
        auto& slot = slots_[index(rec.step)];
        slot = std::move(rec);
        return slot;
    }

    bool contains(std::int64_t step) const noexcept {
        return step >= 0 && slots_[index(step)].step == step;
    }

    StepRecord& at(std::int64_t step) {
        if (!contains(step)) throw InvariantViolation("RingCache: record " + std::to_string(step) + " missing or evicted");
        return slots_[index(step)];
    }
    const StepRecord& at(std::int64_t step) const {
        if (!contains(step)) throw InvariantViolation("RingCache: record " + std::to_string(step) + " missing or evicted");
        return slots_[index(step)];
    }

    void clear() {
        for (auto& s : slots_) s = StepRecord{};
    }

  private:
    std::size_t index(std::int64_t step) const noexcept {
        return static_cast<std::size_t>(step) % slots_.size();
    }
    std::vector<StepRecord> slots_;
};

namespace detail {

inline void check_order(std::span<const Sample> stream, std::size_t t) {
    if (t > 0 && stream[t].origin != stream[t - 1].origin + 1) {
        throw std::invalid_argument("stream out of order at position " + std::to_string(t) + ": origin " +
                                    std::to_string(stream[t].origin) + " after " +
                                    std::to_string(stream[t - 1].origin));
    }
}

inline void audit(const RunHooks& hooks, std::int64_t observed, const StepRecord& r, const char* why) {
    if (hooks.on_cache_read) hooks.on_cache_read(CacheRead{observed, r.origin, why});
}

// Marks the record predicted at step j as complete and returns it, or nullptr
// when no record completes at this step.
inline StepRecord* observe(RingCache& cache, std::int64_t step, std::size_t k) {
    const std::int64_t j = step - static_cast<std::int64_t>(k) + 1;
    if (j < 0) return nullptr;
    StepRecord& r = cache.at(j);
    r.target = r.sample->y;
    return &r;
}

}  // namespace detail

// Mean over the b-sample window ending at the record completed at `step`
// (0-based) of the cached per-sample feature gradients. Zero until a full
// window is available, i.e. while step + 1 < k + b - 1.
inline Matrix compute_hisgrad(const RingCache& cache, std::int64_t step, std::size_t k, std::size_t b,
                              std::size_t channels, std::size_t width, const RunHooks& hooks = {},
                              std::int64_t observed_time = 0) {
    const std::int64_t end = step - static_cast<std::int64_t>(k) + 1;
    Matrix h(channels, width);
    if (end + 1 < static_cast<std::int64_t>(b)) return h;
    for (std::int64_t i = end - static_cast<std::int64_t>(b) + 1; i <= end; ++i) {
        const StepRecord& r = cache.at(i);
        if (!r.feat_grad) throw InvariantViolation("compute_hisgrad: record " + std::to_string(i) + " has no observed gradient");
        detail::audit(hooks, observed_time, r, "hisgrad");
        h += *r.feat_grad;
    }
    h *= 1.0 / static_cast<double>(b);
    return h;
}

// Gradient of the sample's MSE w.r.t. the feature, at g(feature).
inline Matrix feature_gradient(const ForecastModel& model, const Matrix& feature, const NormStats& stats,
                               const Matrix& target) {
    HeadPass p = model.head_forward(feature, stats);
    return model.grad_wrt_feature(p.tape, mse_with_grad(p.y_hat, target).grad);
}

inline MetricsTrace run_ori(const ForecastModel& model, std::span<const Sample> stream,
                            const RunHooks& hooks = {}) {
    MetricsTrace tr;
    for (std::size_t t = 0; t < stream.size(); ++t) {
        detail::check_order(stream, t);
        tr.push(stream[t].origin, model.predict(stream[t].x), stream[t].y, hooks.keep_predictions);
    }
    return tr;
}

inline MetricsTrace run_fogd(const ForecastModel& model, std::span<const Sample> stream,
                             const EngineConfig& cfg, const RunHooks& hooks = {}) {
    validate(cfg);
    const std::size_t k = cfg.horizon;
    RingCache cache(k + 1);
    MetricsTrace tr;
    Matrix delta;
    for (std::size_t t = 0; t < stream.size(); ++t) {
        detail::check_order(stream, t);
        const Sample& s = stream[t];
        Encoding e = model.encode(s.x);
        if (delta.empty()) delta = Matrix(e.z.rows(), e.z.cols());
        HeadPass p = model.head_forward(e.z + delta, e.stats);
        tr.push(s.origin, p.y_hat, s.y, hooks.keep_predictions);

        StepRecord rec;
        rec.step = static_cast<std::int64_t>(t);
        rec.origin = s.origin;
        rec.sample = &s;
        rec.delta = delta;
        rec.y_hat = std::move(p.y_hat);
        rec.head_tape = std::move(p.tape);
        cache.put(std::move(rec));

        if (StepRecord* done = detail::observe(cache, static_cast<std::int64_t>(t), k)) {
            detail::audit(hooks, s.origin + 1, *done, "fogd");
            const Matrix g = model.grad_wrt_feature(done->head_tape, mse_with_grad(done->y_hat, *done->target).grad);
            delta.axpy(-cfg.lr_fogd, g);
        }
    }
    return tr;
}

inline MetricsTrace run_ogd(ForecastModel& model, std::span<const Sample> stream, const EngineConfig& cfg,
                            const RunHooks& hooks = {}) {
    validate(cfg);
    const std::size_t k = cfg.horizon;
    RingCache cache(k + 1);
    MetricsTrace tr;
    for (std::size_t t = 0; t < stream.size(); ++t) {
        detail::check_order(stream, t);
        const Sample& s = stream[t];
        tr.push(s.origin, model.predict(s.x), s.y, hooks.keep_predictions);

        StepRecord rec;
        rec.step = static_cast<std::int64_t>(t);
        rec.origin = s.origin;
        rec.sample = &s;
        cache.put(std::move(rec));

        if (StepRecord* done = detail::observe(cache, static_cast<std::int64_t>(t), k)) {
            detail::audit(hooks, s.origin + 1, *done, "ogd");
            const Sample& old = *done->sample;
            model.sgd(sample_grads(model, Sample{old.x, *done->target, old.origin}), cfg.lr_ogd);
        }
    }
    return tr;
}

struct AdaptzRates {
    double adapter = 0.0;
    double head = 0.0;
    bool update = true;
};

namespace detail {

inline void adaptz_loop(ForecastModel& model, AdapterNet& adapter, std::span<const Sample> stream,
                        const EngineConfig& cfg, const AdaptzRates& rates, const RunHooks& hooks,
                        MetricsTrace* trace) {
    validate(cfg);
    if (adapter.feature_width() != model.width()) {
        throw ShapeError("run_adaptz: adapter width " + std::to_string(adapter.feature_width()) +
                         " != model feature width " + std::to_string(model.width()));
    }
    const std::size_t k = cfg.horizon, b = cfg.hist_batch;
    RingCache cache(k + b);
    Matrix hisgrad;
    for (std::size_t t = 0; t < stream.size(); ++t) {
        check_order(stream, t);
        const Sample& s = stream[t];
        const auto step = static_cast<std::int64_t>(t);
        Encoding e = model.encode(s.x);
        if (hisgrad.empty()) hisgrad = Matrix(e.z.rows(), e.z.cols());
        AdapterForward af = adapter.forward(e.z, hisgrad);
        Matrix z_adj = e.z + af.delta;
        HeadPass p = model.head_forward(z_adj, e.stats);
        if (!all_finite(p.y_hat)) throw std::runtime_error("adapter diverged: non-finite prediction at origin " + std::to_string(s.origin));
        if (trace) trace->push(s.origin, p.y_hat, s.y, hooks.keep_predictions);

        StepRecord rec;
        rec.step = step;
        rec.origin = s.origin;
        rec.sample = &s;
        rec.z = std::move(e.z);
        rec.hisgrad_used = hisgrad;
        rec.delta = std::move(af.delta);
        rec.y_hat = std::move(p.y_hat);
        rec.stats = std::move(e.stats);
        rec.head_tape = std::move(p.tape);
        rec.adapter_tape = std::move(af.tape);
        cache.put(std::move(rec));

        const std::int64_t observed = s.origin + 1;
        StepRecord* done = observe(cache, step, k);
        if (!done) continue;
        audit(hooks, observed, *done, "feature-gradient");
        done->feat_grad = feature_gradient(model, cfg.hisgrad_at_adjusted ? done->z + done->delta : done->z,
                                           done->stats, *done->target);

        const std::int64_t end = done->step;
        if (end + 1 < static_cast<std::int64_t>(b)) {
            hisgrad = Matrix(hisgrad.rows(), hisgrad.cols());
            continue;
        }
        hisgrad = compute_hisgrad(cache, step, k, b, hisgrad.rows(), hisgrad.cols(), hooks, observed);
        if (!rates.update) continue;

        // Window loss on the cached adjusted predictions.
        AdapterGrads ag = adapter.zero_grads();
        AffineGrads hg(model.head().out_dim(), model.head().in_dim());
        for (std::int64_t i = end - static_cast<std::int64_t>(b) + 1; i <= end; ++i) {
            const StepRecord& r = cache.at(i);
            if (!r.target) throw InvariantViolation("run_adaptz: window record without target");
            audit(hooks, observed, r, "window-loss");
            Matrix g = mse_with_grad(r.y_hat, *r.target).grad;
            g *= 1.0 / static_cast<double>(b);
            const Matrix g_delta = model.backprop_to_feature(r.head_tape, g, &hg);
            adapter.backward(r.adapter_tape, g_delta, ag);
        }
        adapter.sgd_step(ag, rates.adapter);
        model.head().sgd(hg, rates.head);
    }
}

}  // namespace detail

// Mutates model (output layer) and adapter unless cfg.freeze_online is set.
inline MetricsTrace run_adaptz(ForecastModel& model, AdapterNet& adapter, std::span<const Sample> stream,
                               const EngineConfig& cfg, const RunHooks& hooks = {}) {
    MetricsTrace tr;
    const AdaptzRates rates{cfg.lr_adapter, cfg.lr_head, !cfg.freeze_online};
    detail::adaptz_loop(model, adapter, stream, cfg, rates, hooks, &tr);
    return tr;
}

// Replays the validation split epochs times through the adapter loop with a
// fresh cache each epoch. Only the adapter learns; the model stays frozen.
inline void pretrain_adapter(const ForecastModel& model, AdapterNet& adapter, std::span<const Sample> val,
                             const EngineConfig& cfg, std::size_t epochs, const RunHooks& hooks = {}) {
    ForecastModel frozen = model;
    const AdaptzRates rates{cfg.pretrain_lr, 0.0, true};
    for (std::size_t e = 0; e < epochs; ++e) detail::adaptz_loop(frozen, adapter, val, cfg, rates, hooks, nullptr);
}

}  // namespace adaptz
