#pragma once

// Dense row-major matrices and the handful of differentiable primitives the
// forecaster and adapter are assembled from. Every backward pass here is
// written out by hand; there is no graph or tape machinery.

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <optional>
#include <random>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace adaptz {

class ShapeError : public std::invalid_argument {
  public:
    using std::invalid_argument::invalid_argument;
};

class Matrix {
  public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
        : rows_(rows), cols_(cols), data_(std::move(data)) {
        if (data_.size() != rows_ * cols_) {
            throw ShapeError("Matrix: data length " + std::to_string(data_.size()) +
                             " does not match " + std::to_string(rows_) + "x" +
                             std::to_string(cols_));
        }
    }
    Matrix(std::initializer_list<std::initializer_list<double>> rows) {
        rows_ = rows.size();
        cols_ = rows_ == 0 ? 0 : rows.begin()->size();
        data_.reserve(rows_ * cols_);
        for (const auto& r : rows) {
            if (r.size() != cols_) throw ShapeError("Matrix: ragged initializer");
            data_.insert(data_.end(), r.begin(), r.end());
        }
    }

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const noexcept {
        return {data_.data() + r * cols_, cols_};
    }

    std::vector<double>& data() noexcept { return data_; }
    const std::vector<double>& data() const noexcept { return data_; }

    bool same_shape(const Matrix& o) const noexcept { return rows_ == o.rows_ && cols_ == o.cols_; }

    std::string shape_str() const { return std::to_string(rows_) + "x" + std::to_string(cols_); }

    Matrix transposed() const {
        Matrix t(cols_, rows_);
        for (std::size_t r = 0; r < rows_; ++r)
            for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
        return t;
    }

    Matrix& operator+=(const Matrix& o) {
        require_same(o, "+=");
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
        return *this;
    }
    Matrix& operator-=(const Matrix& o) {
        require_same(o, "-=");
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
        return *this;
    }
    Matrix& operator*=(double s) noexcept {
        for (double& v : data_) v *= s;
        return *this;
    }
    friend Matrix operator+(Matrix a, const Matrix& b) { return a += b; }
    friend Matrix operator-(Matrix a, const Matrix& b) { return a -= b; }
    friend Matrix operator*(Matrix a, double s) { return a *= s; }

    // this += scale * b
    void axpy(double scale, const Matrix& b) {
        require_same(b, "axpy");
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += scale * b.data_[i];
    }

    bool operator==(const Matrix& o) const = default;

  private:
    void require_same(const Matrix& o, const char* op) const {
        if (!same_shape(o)) {
            throw ShapeError(std::string("Matrix ") + op + ": shape " + shape_str() + " vs " +
                             o.shape_str());
        }
    }

    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

inline bool all_finite(const Matrix& m) noexcept {
    for (double v : m.data())
        if (!(v - v == 0.0)) return false;
    return true;
}

// out = input * weight^T + bias, input batch x in, weight out x in.
inline Matrix affine_apply(const Matrix& weight, std::span<const double> bias, const Matrix& input) {
    if (input.cols() != weight.cols()) {
        throw ShapeError("affine_forward: input " + input.shape_str() + " incompatible with weight " +
                         weight.shape_str());
    }
    if (bias.size() != weight.rows()) {
        throw ShapeError("affine_forward: bias length " + std::to_string(bias.size()) +
                         " != weight rows " + std::to_string(weight.rows()));
    }
    const std::size_t n = input.rows(), out = weight.rows(), in = weight.cols();
    Matrix result(n, out);
    for (std::size_t i = 0; i < n; ++i) {
        const double* x = input.row(i).data();
        double* y = result.row(i).data();
        for (std::size_t j = 0; j < out; ++j) {
            const double* w = weight.row(j).data();
            double acc = 0.0;
            for (std::size_t m = 0; m < in; ++m) acc += w[m] * x[m];
            y[j] = acc + bias[j];
        }
    }
    return result;
}

struct AffineGrads {
    Matrix weight;
    std::vector<double> bias;

    AffineGrads() = default;
    AffineGrads(std::size_t out, std::size_t in) : weight(out, in), bias(out, 0.0) {}

    AffineGrads& operator+=(const AffineGrads& o) {
        weight += o.weight;
        for (std::size_t i = 0; i < bias.size(); ++i) bias[i] += o.bias[i];
        return *this;
    }
    void scale(double s) {
        weight *= s;
        for (double& b : bias) b *= s;
    }
};

// upstream * weight, the gradient flowing back into the layer input.
inline Matrix affine_grad_input(const Matrix& weight, const Matrix& upstream) {
    if (upstream.cols() != weight.rows()) {
        throw ShapeError("affine_backward: upstream " + upstream.shape_str() +
                         " incompatible with weight " + weight.shape_str());
    }
    const std::size_t n = upstream.rows(), out = weight.rows(), in = weight.cols();
    Matrix g(n, in);
    for (std::size_t i = 0; i < n; ++i) {
        double* gi = g.row(i).data();
        const double* u = upstream.row(i).data();
        for (std::size_t j = 0; j < out; ++j) {
            const double uj = u[j];
            if (uj == 0.0) continue;
            const double* w = weight.row(j).data();
            for (std::size_t m = 0; m < in; ++m) gi[m] += uj * w[m];
        }
    }
    return g;
}

// Accumulates upstream^T * input into grads.weight and column sums into grads.bias.
inline void affine_accumulate_param_grads(const Matrix& input, const Matrix& upstream,
                                          AffineGrads& grads) {
    if (input.rows() != upstream.rows() || grads.weight.rows() != upstream.cols() ||
        grads.weight.cols() != input.cols()) {
        throw ShapeError("affine_backward: upstream " + upstream.shape_str() + " / input " +
                         input.shape_str() + " vs weight " + grads.weight.shape_str());
    }
    const std::size_t n = input.rows(), out = upstream.cols(), in = input.cols();
    for (std::size_t i = 0; i < n; ++i) {
        const double* x = input.row(i).data();
        const double* u = upstream.row(i).data();
        for (std::size_t j = 0; j < out; ++j) {
            const double uj = u[j];
            grads.bias[j] += uj;
            if (uj == 0.0) continue;
            double* gw = grads.weight.row(j).data();
            for (std::size_t m = 0; m < in; ++m) gw[m] += uj * x[m];
        }
    }
}

struct AffineBackward {
    Matrix grad_input;
    AffineGrads grads;
};

// Stateful wrapper with the single-pending-forward cache. Tapes elsewhere in
// the library hold activations explicitly and call the free functions above.
struct AffineLayer {
    Matrix weight;
    std::vector<double> bias;
    std::optional<Matrix> cached_input;

    AffineLayer() = default;
    AffineLayer(std::size_t out, std::size_t in) : weight(out, in), bias(out, 0.0) {}
    AffineLayer(Matrix w, std::vector<double> b) : weight(std::move(w)), bias(std::move(b)) {
        if (bias.size() != weight.rows()) {
            throw ShapeError("AffineLayer: bias length " + std::to_string(bias.size()) +
                             " != weight rows " + std::to_string(weight.rows()));
        }
    }

    std::size_t in_dim() const noexcept { return weight.cols(); }
    std::size_t out_dim() const noexcept { return weight.rows(); }

    Matrix apply(const Matrix& input) const { return affine_apply(weight, bias, input); }

    Matrix forward(const Matrix& input) {
        Matrix out = apply(input);
        cached_input = input;
        return out;
    }

    AffineBackward backward(const Matrix& upstream) {
        if (!cached_input) throw std::logic_error("affine_backward: no cached forward pass");
        if (upstream.rows() != cached_input->rows() || upstream.cols() != out_dim()) {
            throw ShapeError("affine_backward: upstream " + upstream.shape_str() +
                             " does not match forward output " +
                             std::to_string(cached_input->rows()) + "x" +
                             std::to_string(out_dim()));
        }
        AffineBackward r{affine_grad_input(weight, upstream), AffineGrads(out_dim(), in_dim())};
        affine_accumulate_param_grads(*cached_input, upstream, r.grads);
        cached_input.reset();
        return r;
    }

    void sgd(const AffineGrads& g, double lr) {
        weight.axpy(-lr, g.weight);
        for (std::size_t i = 0; i < bias.size(); ++i) bias[i] -= lr * g.bias[i];
    }

    // Uniform(-1/sqrt(in), 1/sqrt(in)) for weight and bias, the common default
    // for linear layers.
    template <class Rng>
    void init_uniform(Rng& rng) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(in_dim()));
        std::uniform_real_distribution<double> dist(-bound, bound);
        for (double& w : weight.data()) w = dist(rng);
        for (double& b : bias) b = dist(rng);
    }

    void zero() {
        for (double& w : weight.data()) w = 0.0;
        for (double& b : bias) b = 0.0;
    }

    bool same_params(const AffineLayer& o) const { return weight == o.weight && bias == o.bias; }
};

inline Matrix relu(const Matrix& input) {
    Matrix out = input;
    for (double& v : out.data()) v = (v > 0.0 || std::isnan(v)) ? v : 0.0;
    return out;
}

// Passes upstream where input > 0; the subgradient at exactly 0 is 0.
inline Matrix relu_backward(const Matrix& input, const Matrix& upstream) {
    if (!input.same_shape(upstream)) {
        throw ShapeError("relu_backward: input " + input.shape_str() + " vs upstream " +
                         upstream.shape_str());
    }
    Matrix g(input.rows(), input.cols());
    const auto& x = input.data();
    const auto& u = upstream.data();
    auto& out = g.data();
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] > 0.0 ? u[i] : 0.0;
    return g;
}

struct LossWithGrad {
    double loss = 0.0;
    Matrix grad;
};

// Mean of squared errors over every entry, and its gradient w.r.t. pred.
inline LossWithGrad mse_with_grad(const Matrix& pred, const Matrix& target) {
    if (!pred.same_shape(target)) {
        throw ShapeError("mse_with_grad: pred " + pred.shape_str() + " vs target " +
                         target.shape_str());
    }
    if (pred.rows() == 0 || pred.cols() == 0) throw ShapeError("mse_with_grad: empty batch");
    const double n = static_cast<double>(pred.size());
    LossWithGrad r{0.0, Matrix(pred.rows(), pred.cols())};
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double e = pred.data()[i] - target.data()[i];
        r.loss += e * e;
        r.grad.data()[i] = 2.0 * e / n;
    }
    r.loss /= n;
    return r;
}

inline double mse(const Matrix& pred, const Matrix& target) {
    if (!pred.same_shape(target) || pred.empty()) {
        throw ShapeError("mse: pred " + pred.shape_str() + " vs target " + target.shape_str());
    }
    double s = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double e = pred.data()[i] - target.data()[i];
        s += e * e;
    }
    return s / static_cast<double>(pred.size());
}

}  // namespace adaptz
