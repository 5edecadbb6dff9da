#pragma once

// Channel-independent MLP forecaster split into an encoder (blocks up to and
// including the tap) and a head (remaining blocks plus the output layer).
// Each channel of the lookback window is instance-normalized and pushed
// through the same weights as one row; predictions are denormalized with the
// statistics of the raw window.

#include <adaptz/diffmath.hpp>

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <random>
#include <string>
#include <vector>

namespace adaptz {

inline constexpr double kStdFloor = 1e-5;

struct NormStats {
    std::vector<double> mean;
    std::vector<double> stdev;

    std::size_t size() const noexcept { return mean.size(); }
    bool operator==(const NormStats&) const = default;
};

struct Sample {
    Matrix x;  // lookback, L x C
    Matrix y;  // target, k x C; row 0 is time origin + 1
    std::int64_t origin = 0;
};

struct Normalized {
    Matrix x_norm;
    NormStats stats;
};

// Per-channel (x - mean) / max(std, 1e-5), population standard deviation.
inline Normalized normalize(const Matrix& x) {
    if (x.rows() < 2) throw ShapeError("normalize: need at least 2 rows, got " + x.shape_str());
    const std::size_t L = x.rows(), C = x.cols();
    Normalized r{Matrix(L, C), NormStats{std::vector<double>(C), std::vector<double>(C)}};
    for (std::size_t c = 0; c < C; ++c) {
        double mean = 0.0;
        for (std::size_t t = 0; t < L; ++t) mean += x(t, c);
        mean /= static_cast<double>(L);
        double var = 0.0;
        for (std::size_t t = 0; t < L; ++t) var += (x(t, c) - mean) * (x(t, c) - mean);
        var /= static_cast<double>(L);
        const double sd = std::max(std::sqrt(var), kStdFloor);
        r.stats.mean[c] = mean;
        r.stats.stdev[c] = sd;
        for (std::size_t t = 0; t < L; ++t) r.x_norm(t, c) = (x(t, c) - mean) / sd;
    }
    return r;
}

// y_norm is k x C in sample layout.
inline Matrix denormalize(const Matrix& y_norm, const NormStats& stats) {
    if (y_norm.cols() != stats.size()) {
        throw ShapeError("denormalize: " + y_norm.shape_str() + " vs " +
                         std::to_string(stats.size()) + " channels");
    }
    Matrix y = y_norm;
    for (std::size_t t = 0; t < y.rows(); ++t)
        for (std::size_t c = 0; c < y.cols(); ++c) y(t, c) = y(t, c) * stats.stdev[c] + stats.mean[c];
    return y;
}

// Activations of a contiguous run of ReLU blocks.
struct BlockTape {
    std::vector<Matrix> inputs;
    std::vector<Matrix> pre;
};

struct Encoding {
    Matrix z;  // C x d, one row per channel
    NormStats stats;
    BlockTape tape;
};

struct HeadTape {
    NormStats stats;
    BlockTape blocks;  // blocks after the tap; inputs[0] is the adjusted feature
    Matrix head_input;

    bool empty() const noexcept { return head_input.empty(); }
};

struct HeadPass {
    Matrix y_hat;  // k x C
    HeadTape tape;
};

struct ModelGrads {
    std::vector<AffineGrads> blocks;
    AffineGrads head;

    ModelGrads& operator+=(const ModelGrads& o) {
        for (std::size_t i = 0; i < blocks.size(); ++i) blocks[i] += o.blocks[i];
        head += o.head;
        return *this;
    }
};

struct ModelShape {
    std::size_t lookback = 96;
    std::size_t horizon = 24;
    std::size_t width = 64;
    std::size_t n_blocks = 3;
    int tap_index = -1;  // negative: second-last block
};

class ForecastModel {
  public:
    ForecastModel() = default;

    ForecastModel(const ModelShape& shape, std::uint64_t seed)
        : lookback_(shape.lookback), horizon_(shape.horizon), width_(shape.width) {
        if (shape.n_blocks == 0) throw std::invalid_argument("ForecastModel: need at least one block");
        if (shape.lookback < 2 || shape.horizon < 1 || shape.width < 1) {
            throw std::invalid_argument("ForecastModel: lookback >= 2, horizon >= 1, width >= 1");
        }
        std::mt19937_64 rng(seed);
        for (std::size_t i = 0; i < shape.n_blocks; ++i) {
            blocks_.emplace_back(width_, i == 0 ? lookback_ : width_);
            blocks_.back().init_uniform(rng);
        }
        head_ = AffineLayer(horizon_, width_);
        head_.init_uniform(rng);
        set_tap_index(shape.tap_index < 0 ? default_tap() : shape.tap_index);
    }

    // Builds from explicit layers; used by checkpoints and hand-built tests.
    ForecastModel(std::vector<AffineLayer> blocks, AffineLayer head, int tap_index)
        : blocks_(std::move(blocks)), head_(std::move(head)) {
        if (blocks_.empty()) throw std::invalid_argument("ForecastModel: need at least one block");
        lookback_ = blocks_.front().in_dim();
        width_ = blocks_.front().out_dim();
        horizon_ = head_.out_dim();
        for (std::size_t i = 1; i < blocks_.size(); ++i) {
            if (blocks_[i].in_dim() != width_ || blocks_[i].out_dim() != width_)
                throw ShapeError("ForecastModel: block " + std::to_string(i) + " must be width x width");
        }
        if (head_.in_dim() != width_) throw ShapeError("ForecastModel: head input must be width");
        set_tap_index(tap_index < 0 ? default_tap() : tap_index);
    }

    std::size_t lookback() const noexcept { return lookback_; }
    std::size_t horizon() const noexcept { return horizon_; }
    std::size_t width() const noexcept { return width_; }
    std::size_t n_blocks() const noexcept { return blocks_.size(); }
    int tap_index() const noexcept { return tap_; }

    void set_tap_index(int tap) {
        if (tap < 0 || static_cast<std::size_t>(tap) >= blocks_.size()) {
            throw std::out_of_range("tap_index " + std::to_string(tap) + " outside [0, " +
                                    std::to_string(blocks_.size()) + ")");
        }
        tap_ = tap;
    }

    const std::vector<AffineLayer>& blocks() const noexcept { return blocks_; }
    std::vector<AffineLayer>& blocks() noexcept { return blocks_; }
    const AffineLayer& head() const noexcept { return head_; }
    AffineLayer& head() noexcept { return head_; }

    // ---- row-level passes: rows are independent channel windows ----

    // Runs blocks [0, tap] on normalized rows (N x L), returning N x d features.
    Matrix encode_rows(const Matrix& x_rows, BlockTape* tape) const {
        if (x_rows.cols() != lookback_) {
            throw ShapeError("encode: window length " + std::to_string(x_rows.cols()) +
                             " != model lookback " + std::to_string(lookback_));
        }
        return run_blocks(0, static_cast<std::size_t>(tap_) + 1, x_rows, tape);
    }

    // Remaining blocks and the output layer; returns normalized N x k output.
    Matrix head_rows(const Matrix& z_rows, HeadTape* tape) const {
        if (z_rows.cols() != width_) {
            throw ShapeError("head_forward: feature width " + std::to_string(z_rows.cols()) +
                             " != model width " + std::to_string(width_));
        }
        Matrix h = run_blocks(static_cast<std::size_t>(tap_) + 1, blocks_.size(), z_rows,
                              tape ? &tape->blocks : nullptr);
        Matrix out = head_.apply(h);
        if (tape) tape->head_input = std::move(h);
        return out;
    }

    // Backpropagates a gradient on the normalized N x k output down to the
    // feature rows. Optionally accumulates head and post-tap block gradients.
    Matrix backprop_head_rows(const HeadTape& tape, const Matrix& grad_out_rows,
                              AffineGrads* head_grads, std::vector<AffineGrads>* block_grads) const {
        if (tape.empty()) throw std::logic_error("grad_wrt_feature: no forward tape");
        if (grad_out_rows.rows() != tape.head_input.rows() || grad_out_rows.cols() != horizon_) {
            throw ShapeError("grad_wrt_feature: gradient " + grad_out_rows.shape_str() +
                             " does not match forward output");
        }
        if (head_grads) affine_accumulate_param_grads(tape.head_input, grad_out_rows, *head_grads);
        Matrix g = affine_grad_input(head_.weight, grad_out_rows);
        const std::size_t first = static_cast<std::size_t>(tap_) + 1;
        return backprop_blocks(first, tape.blocks, std::move(g), block_grads);
    }

    // ---- sample-level API ----

    Encoding encode(const Matrix& x) const {
        if (x.rows() != lookback_) {
            throw ShapeError("encode: sample has " + std::to_string(x.rows()) +
                             " rows, model lookback is " + std::to_string(lookback_));
        }
        Normalized n = normalize(x);
        Encoding e;
        e.stats = std::move(n.stats);
        e.z = encode_rows(n.x_norm.transposed(), &e.tape);
        return e;
    }

    HeadPass head_forward(const Matrix& z_adj, const NormStats& stats) const {
        if (z_adj.rows() != stats.size()) {
            throw ShapeError("head_forward: " + std::to_string(z_adj.rows()) + " feature rows vs " +
                             std::to_string(stats.size()) + " channels");
        }
        HeadPass p;
        Matrix out = head_rows(z_adj, &p.tape);
        p.y_hat = denormalize(out.transposed(), stats);
        p.tape.stats = stats;
        return p;
    }

    Matrix predict(const Matrix& x) const {
        Encoding e = encode(x);
        return head_forward(e.z, e.stats).y_hat;
    }

    // grad_y_hat is k x C in sample layout; gradient w.r.t. the (adjusted) feature, C x d.
    Matrix grad_wrt_feature(const HeadTape& tape, const Matrix& grad_y_hat) const {
        return backprop_to_feature(tape, grad_y_hat, nullptr);
    }

    // As grad_wrt_feature, additionally accumulating output-layer gradients.
    Matrix backprop_to_feature(const HeadTape& tape, const Matrix& grad_y_hat,
                               AffineGrads* head_grads) const {
        return backprop_head_rows(tape, output_grad_rows(tape, grad_y_hat), head_grads, nullptr);
    }

    AffineGrads grad_wrt_last_layer(const HeadTape& tape, const Matrix& grad_y_hat) const {
        if (tape.empty()) throw std::logic_error("grad_wrt_last_layer: no forward tape");
        AffineGrads g(horizon_, width_);
        affine_accumulate_param_grads(tape.head_input, output_grad_rows(tape, grad_y_hat), g);
        return g;
    }

    // Gradient of every parameter, for a forward pass that was encode() followed
    // by head_forward() on the unadjusted feature.
    ModelGrads grad_all(const Encoding& enc, const HeadTape& tape, const Matrix& grad_y_hat) const {
        ModelGrads g = zero_grads();
        Matrix gz = backprop_head_rows(tape, output_grad_rows(tape, grad_y_hat), &g.head, &g.blocks);
        backprop_blocks(0, enc.tape, std::move(gz), &g.blocks);
        return g;
    }

    ModelGrads zero_grads() const {
        ModelGrads g;
        for (const auto& b : blocks_) g.blocks.emplace_back(b.out_dim(), b.in_dim());
        g.head = AffineGrads(head_.out_dim(), head_.in_dim());
        return g;
    }

    void sgd(const ModelGrads& g, double lr) {
        for (std::size_t i = 0; i < blocks_.size(); ++i) blocks_[i].sgd(g.blocks[i], lr);
        head_.sgd(g.head, lr);
    }

    bool same_params(const ForecastModel& o) const {
        if (blocks_.size() != o.blocks_.size() || !head_.same_params(o.head_)) return false;
        for (std::size_t i = 0; i < blocks_.size(); ++i)
            if (!blocks_[i].same_params(o.blocks_[i])) return false;
        return true;
    }

  private:
    int default_tap() const noexcept {
        return blocks_.size() >= 2 ? static_cast<int>(blocks_.size()) - 2 : 0;
    }

    // Chain rule through the denormalization: d y / d y_norm = std per channel.
    Matrix output_grad_rows(const HeadTape& tape, const Matrix& grad_y_hat) const {
        if (tape.empty()) throw std::logic_error("backward: no forward tape");
        if (grad_y_hat.rows() != horizon_ || grad_y_hat.cols() != tape.stats.size()) {
            throw ShapeError("backward: output gradient " + grad_y_hat.shape_str() + " vs " +
                             std::to_string(horizon_) + "x" + std::to_string(tape.stats.size()));
        }
        Matrix g(grad_y_hat.cols(), horizon_);
        for (std::size_t c = 0; c < grad_y_hat.cols(); ++c)
            for (std::size_t t = 0; t < horizon_; ++t) g(c, t) = grad_y_hat(t, c) * tape.stats.stdev[c];
        return g;
    }

    Matrix run_blocks(std::size_t first, std::size_t last, const Matrix& input, BlockTape* tape) const {
        Matrix h = input;
        for (std::size_t i = first; i < last; ++i) {
            Matrix pre = blocks_[i].apply(h);
            Matrix next = relu(pre);
            if (tape) {
                tape->inputs.push_back(std::move(h));
                tape->pre.push_back(std::move(pre));
            }
            h = std::move(next);
        }
        return h;
    }

    Matrix backprop_blocks(std::size_t first, const BlockTape& tape, Matrix g,
                           std::vector<AffineGrads>* block_grads) const {
        for (std::size_t j = tape.pre.size(); j-- > 0;) {
            const std::size_t i = first + j;
            Matrix gp = relu_backward(tape.pre[j], g);
            if (block_grads) affine_accumulate_param_grads(tape.inputs[j], gp, (*block_grads)[i]);
            g = affine_grad_input(blocks_[i].weight, gp);
        }
        return g;
    }

    std::size_t lookback_ = 0;
    std::size_t horizon_ = 0;
    std::size_t width_ = 0;
    std::vector<AffineLayer> blocks_;
    AffineLayer head_;
    int tap_ = 0;
};

struct TrainOptions {
    std::size_t epochs = 5;
    double lr = 0.001;
    std::size_t batch = 32;
    std::uint64_t seed = 2025;
};

// Loss gradient of one sample for every parameter, evaluated at the current weights.
inline ModelGrads sample_grads(const ForecastModel& model, const Sample& s, double* loss = nullptr) {
    Encoding e = model.encode(s.x);
    HeadPass p = model.head_forward(e.z, e.stats);
    LossWithGrad l = mse_with_grad(p.y_hat, s.y);
    if (loss) *loss = l.loss;
    return model.grad_all(e, p.tape, l.grad);
}

// Mini-batch SGD on the averaged per-sample MSE. Returns the mean training
// loss of the last epoch (0 when epochs == 0).
inline double offline_train(ForecastModel& model, std::span<const Sample> samples,
                            const TrainOptions& opt) {
    if (samples.empty()) throw std::invalid_argument("offline_train: no training samples");
    if (opt.batch == 0) throw std::invalid_argument("offline_train: batch must be >= 1");
    std::mt19937_64 rng(opt.seed);
    std::vector<std::size_t> order(samples.size());
    double last_loss = 0.0;
    for (std::size_t epoch = 0; epoch < opt.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::shuffle(order.begin(), order.end(), rng);
        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < order.size(); start += opt.batch) {
            const std::size_t end = std::min(order.size(), start + opt.batch);
            ModelGrads acc = model.zero_grads();
            for (std::size_t i = start; i < end; ++i) {
                double loss = 0.0;
                acc += sample_grads(model, samples[order[i]], &loss);
                epoch_loss += loss;
            }
            model.sgd(acc, opt.lr / static_cast<double>(end - start));
        }
        last_loss = epoch_loss / static_cast<double>(order.size());
    }
    return last_loss;
}

inline double evaluate_mse(const ForecastModel& model, std::span<const Sample> samples) {
    if (samples.empty()) return 0.0;
    double s = 0.0;
    for (const auto& smp : samples) s += mse(model.predict(smp.x), smp.y);
    return s / static_cast<double>(samples.size());
}

}  // namespace adaptz
