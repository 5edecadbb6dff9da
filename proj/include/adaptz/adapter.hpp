#pragma once

// Dual-path correction network: separate projections of the feature and the
// historical feature-gradient are summed, then passed through two more
// layers to produce the additive feature correction delta.
//
//   delta = out(relu(hidden(relu(feat(z) + grad(hisgrad)))))
//
// The output layer starts at zero so a fresh adapter leaves the base model
// untouched. Rows are channels; all channels share the adapter weights.

#include <adaptz/diffmath.hpp>

#include <cstdint>
#include <random>

namespace adaptz {

struct AdapterTape {
    Matrix z;
    Matrix hisgrad;
    Matrix pre_sum;
    Matrix act_sum;
    Matrix pre_hidden;
    Matrix act_hidden;

    bool empty() const noexcept { return act_hidden.empty(); }
};

struct AdapterGrads {
    AffineGrads path_feat;
    AffineGrads path_grad;
    AffineGrads hidden;
    AffineGrads out;

    AdapterGrads& operator+=(const AdapterGrads& o) {
        path_feat += o.path_feat;
        path_grad += o.path_grad;
        hidden += o.hidden;
        out += o.out;
        return *this;
    }
};

struct AdapterForward {
    Matrix delta;
    AdapterTape tape;
};

class AdapterNet {
  public:
    AdapterNet() = default;

    AdapterNet(std::size_t feature_width, std::size_t hidden_width, std::uint64_t seed,
               bool use_feat = true, bool use_grad = true)
        : path_feat_(hidden_width, feature_width),
          path_grad_(hidden_width, feature_width),
          hidden_(hidden_width, hidden_width),
          out_(feature_width, hidden_width),
          use_feat_(use_feat),
          use_grad_(use_grad) {
        std::mt19937_64 rng(seed);
        path_feat_.init_uniform(rng);
        path_grad_.init_uniform(rng);
        hidden_.init_uniform(rng);
        out_.zero();
    }

    AdapterNet(AffineLayer path_feat, AffineLayer path_grad, AffineLayer hidden, AffineLayer out,
               bool use_feat = true, bool use_grad = true)
        : path_feat_(std::move(path_feat)),
          path_grad_(std::move(path_grad)),
          hidden_(std::move(hidden)),
          out_(std::move(out)),
          use_feat_(use_feat),
          use_grad_(use_grad) {
        const std::size_t d = out_.out_dim(), h = hidden_.out_dim();
        if (path_feat_.in_dim() != d || path_grad_.in_dim() != d || path_feat_.out_dim() != h ||
            path_grad_.out_dim() != h || hidden_.in_dim() != h || out_.in_dim() != h) {
            throw ShapeError("AdapterNet: inconsistent layer shapes");
        }
    }

    std::size_t feature_width() const noexcept { return out_.out_dim(); }
    std::size_t hidden_width() const noexcept { return hidden_.out_dim(); }
    bool use_feat() const noexcept { return use_feat_; }
    bool use_grad() const noexcept { return use_grad_; }

    const AffineLayer& path_feat() const noexcept { return path_feat_; }
    const AffineLayer& path_grad() const noexcept { return path_grad_; }
    const AffineLayer& hidden() const noexcept { return hidden_; }
    const AffineLayer& out() const noexcept { return out_; }
    AffineLayer& path_feat() noexcept { return path_feat_; }
    AffineLayer& path_grad() noexcept { return path_grad_; }
    AffineLayer& hidden() noexcept { return hidden_; }
    AffineLayer& out() noexcept { return out_; }

    // A disabled path is never evaluated, so its input cannot leak into delta.
    AdapterForward forward(const Matrix& z, const Matrix& hisgrad) const {
        const std::size_t d = feature_width();
        if (z.cols() != d || !z.same_shape(hisgrad)) {
            throw ShapeError("adapter_forward: z " + z.shape_str() + ", hisgrad " +
                             hisgrad.shape_str() + ", expected width " + std::to_string(d));
        }
        AdapterForward f;
        f.tape.pre_sum = Matrix(z.rows(), hidden_width());
        if (use_feat_) f.tape.pre_sum += path_feat_.apply(z);
        if (use_grad_) f.tape.pre_sum += path_grad_.apply(hisgrad);
        f.tape.act_sum = relu(f.tape.pre_sum);
        f.tape.pre_hidden = hidden_.apply(f.tape.act_sum);
        f.tape.act_hidden = relu(f.tape.pre_hidden);
        f.delta = out_.apply(f.tape.act_hidden);
        f.tape.z = z;
        f.tape.hisgrad = hisgrad;
        return f;
    }

    AdapterGrads zero_grads() const {
        return AdapterGrads{AffineGrads(path_feat_.out_dim(), path_feat_.in_dim()),
                            AffineGrads(path_grad_.out_dim(), path_grad_.in_dim()),
                            AffineGrads(hidden_.out_dim(), hidden_.in_dim()),
                            AffineGrads(out_.out_dim(), out_.in_dim())};
    }

    // Accumulates parameter gradients into acc. Disabled paths get nothing.
    void backward(const AdapterTape& tape, const Matrix& grad_delta, AdapterGrads& acc) const {
        if (tape.empty()) throw std::logic_error("adapter_backward: no forward tape");
        if (grad_delta.rows() != tape.act_hidden.rows() || grad_delta.cols() != feature_width()) {
            throw ShapeError("adapter_backward: grad_delta " + grad_delta.shape_str() +
                             " does not match forward output");
        }
        affine_accumulate_param_grads(tape.act_hidden, grad_delta, acc.out);
        Matrix g = relu_backward(tape.pre_hidden, affine_grad_input(out_.weight, grad_delta));
        affine_accumulate_param_grads(tape.act_sum, g, acc.hidden);
        g = relu_backward(tape.pre_sum, affine_grad_input(hidden_.weight, g));
        if (use_feat_) affine_accumulate_param_grads(tape.z, g, acc.path_feat);
        if (use_grad_) affine_accumulate_param_grads(tape.hisgrad, g, acc.path_grad);
    }

    AdapterGrads backward(const AdapterTape& tape, const Matrix& grad_delta) const {
        AdapterGrads g = zero_grads();
        backward(tape, grad_delta, g);
        return g;
    }

    void sgd_step(const AdapterGrads& g, double lr) {
        path_feat_.sgd(g.path_feat, lr);
        path_grad_.sgd(g.path_grad, lr);
        hidden_.sgd(g.hidden, lr);
        out_.sgd(g.out, lr);
    }

    bool same_params(const AdapterNet& o) const {
        return path_feat_.same_params(o.path_feat_) && path_grad_.same_params(o.path_grad_) &&
               hidden_.same_params(o.hidden_) && out_.same_params(o.out_);
    }

  private:
    AffineLayer path_feat_;
    AffineLayer path_grad_;
    AffineLayer hidden_;
    AffineLayer out_;
    bool use_feat_ = true;
    bool use_grad_ = true;
};

}  // namespace adaptz
