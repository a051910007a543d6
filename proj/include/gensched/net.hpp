#pragma once

// Small dense networks with exact reverse-mode gradients over a flat
// parameter vector, an Adam optimizer, and a finite-difference harness.
//
// Parameter layout: for each layer l, weights W_l row-major (out x in)
// followed by the bias b_l. If per-step modulation is enabled, the layout is
// extended with T pairs (gain, shift), each of first-hidden-layer width,
// applied to the first hidden pre-activation as z' = (1 + gain_t) * z + shift_t.

#include <cmath>
#include <cstddef>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "gensched/rng.hpp"

namespace gensched {

enum class Activation { Tanh, Relu };

using GradVector = std::vector<double>;

struct StepModulationSpec {
    int steps = 0;  // T; 0 disables modulation
};

class DenseNet {
public:
    DenseNet() = default;

    DenseNet(std::vector<int> layer_sizes, Activation hidden_activation,
             StepModulationSpec modulation = {})
        : sizes_(std::move(layer_sizes)), act_(hidden_activation), mod_(modulation) {
        if (sizes_.size() < 2) throw std::invalid_argument("DenseNet: need at least two layers");
        for (int s : sizes_)
            if (s <= 0) throw std::invalid_argument("DenseNet: layer sizes must be positive");
        std::size_t count = 0;
        for (std::size_t l = 0; l + 1 < sizes_.size(); ++l)
            count += static_cast<std::size_t>(sizes_[l] + 1) * sizes_[l + 1];
        mod_offset_ = count;
        if (mod_.steps > 0) count += 2u * hidden_width() * mod_.steps;
        params_.assign(count, 0.0);
    }

    const std::vector<int>& layer_sizes() const { return sizes_; }
    Activation activation() const { return act_; }
    int modulation_steps() const { return mod_.steps; }
    int input_size() const { return sizes_.front(); }
    int output_size() const { return sizes_.back(); }
    std::size_t param_count() const { return params_.size(); }

    std::vector<double>& params() { return params_; }
    const std::vector<double>& params() const { return params_; }

    // flat index of a bias parameter: `layer` indexes weight layers, `unit`
    // the layer's outputs
    std::size_t bias_param_index(std::size_t layer, int unit) const {
        return layer_offset(layer) +
               static_cast<std::size_t>(sizes_[layer]) * sizes_[layer + 1] + unit;
    }

    void random_init(RngStream& rng, double last_layer_scale = 1.0) {
        std::size_t off = 0;
        for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
            const int n_in = sizes_[l], n_out = sizes_[l + 1];
            const bool last = (l + 2 == sizes_.size());
            const double bound =
                std::sqrt(6.0 / (n_in + n_out)) * (last ? last_layer_scale : 1.0);
            for (int i = 0; i < n_out * n_in; ++i) params_[off++] = rng.uniform(-bound, bound);
            for (int i = 0; i < n_out; ++i) params_[off++] = 0.0;
        }
        // gains/shifts start at zero: modulation is the identity at init
    }

    // Deterministic forward pass. `step` indexes the modulation table and must
    // be in [0, T) when modulation is enabled; pass -1 to bypass it.
    std::vector<double> forward(const std::vector<double>& input, int step = -1) const {
        Workspace ws;
        run_forward(input, step, ws);
        const std::vector<double>& out = ws.post.back();
        for (double v : out)
            if (!std::isfinite(v))
                throw std::runtime_error("DenseNet::forward: non-finite output");
        return out;
    }

    // Exact gradient of <output, cotangent> with respect to all parameters.
    GradVector backward(const std::vector<double>& input, int step,
                        const std::vector<double>& output_cotangent) const {
        GradVector grad(params_.size(), 0.0);
        backward_accumulate(input, step, output_cotangent, grad);
        return grad;
    }

    // Same as backward() but sums into an existing gradient accumulator,
    // optionally scaled; used by batch losses.
    void backward_accumulate(const std::vector<double>& input, int step,
                             const std::vector<double>& output_cotangent, GradVector& grad,
                             double scale = 1.0) const {
        if (output_cotangent.size() != static_cast<std::size_t>(sizes_.back()))
            throw std::invalid_argument("DenseNet::backward: cotangent size mismatch");
        if (grad.size() != params_.size())
            throw std::invalid_argument("DenseNet::backward: gradient size mismatch");
        Workspace ws;
        run_forward(input, step, ws);

        const std::size_t L = sizes_.size() - 1;
        std::vector<double> delta(output_cotangent);
        for (double& d : delta) d *= scale;

        for (std::size_t l = L; l-- > 0;) {
            const int n_in = sizes_[l], n_out = sizes_[l + 1];
            const bool is_output = (l + 1 == L);

            if (!is_output) {
                const std::vector<double>& z = ws.pre[l];
                for (int i = 0; i < n_out; ++i) delta[i] *= act_deriv(z[i]);
            }
            if (l == 0 && mod_.steps > 0 && step >= 0) {
                // d z' / d gain = raw pre-activation, d z' / d shift = 1
                const std::size_t moff = mod_offset_ + 2u * hidden_width() * step;
                const std::vector<double>& raw = ws.raw_first;
                for (int i = 0; i < n_out; ++i) {
                    grad[moff + i] += delta[i] * raw[i];
                    grad[moff + hidden_width() + i] += delta[i];
                    delta[i] *= 1.0 + params_[moff + i];
                }
            }
            const std::vector<double>& in = (l == 0) ? ws.input : ws.post[l - 1];
            const std::size_t off = layer_offset(l);
            for (int i = 0; i < n_out; ++i) {
                const double d = delta[i];
                const std::size_t row = off + static_cast<std::size_t>(i) * n_in;
                for (int j = 0; j < n_in; ++j) grad[row + j] += d * in[j];
                grad[off + static_cast<std::size_t>(n_out) * n_in + i] += d;
            }
            if (l > 0) {
                std::vector<double> prev(n_in, 0.0);
                for (int i = 0; i < n_out; ++i) {
                    const double d = delta[i];
                    const std::size_t row = off + static_cast<std::size_t>(i) * n_in;
                    for (int j = 0; j < n_in; ++j) prev[j] += d * params_[row + j];
                }
                delta = std::move(prev);
            }
        }
    }

private:
    struct Workspace {
        std::vector<double> input;
        std::vector<double> raw_first;             // first hidden pre-activation before modulation
        std::vector<std::vector<double>> pre;      // pre-activations (post modulation)
        std::vector<std::vector<double>> post;     // activations; back() is the linear output
    };

    void run_forward(const std::vector<double>& input, int step, Workspace& ws) const {
        if (input.size() != static_cast<std::size_t>(sizes_.front()))
            throw std::invalid_argument("DenseNet::forward: input size mismatch");
        if (mod_.steps > 0 && step >= mod_.steps)
            throw std::invalid_argument("DenseNet::forward: step out of range");
        ws.input = input;
        const std::size_t L = sizes_.size() - 1;
        ws.pre.resize(L);
        ws.post.resize(L);

        const std::vector<double>* cur = &ws.input;
        for (std::size_t l = 0; l < L; ++l) {
            const int n_in = sizes_[l], n_out = sizes_[l + 1];
            const std::size_t off = layer_offset(l);
            std::vector<double> z(n_out);
            for (int i = 0; i < n_out; ++i) {
                double acc = params_[off + static_cast<std::size_t>(n_out) * n_in + i];
                const std::size_t row = off + static_cast<std::size_t>(i) * n_in;
                for (int j = 0; j < n_in; ++j) acc += params_[row + j] * (*cur)[j];
                z[i] = acc;
            }
            if (l == 0 && mod_.steps > 0 && step >= 0) {
                ws.raw_first = z;
                const std::size_t moff = mod_offset_ + 2u * hidden_width() * step;
                for (int i = 0; i < n_out; ++i)
                    z[i] = (1.0 + params_[moff + i]) * z[i] + params_[moff + hidden_width() + i];
            }
            ws.pre[l] = z;
            if (l + 1 == L) {
                ws.post[l] = std::move(z);  // linear output layer
            } else {
                std::vector<double> h(n_out);
                for (int i = 0; i < n_out; ++i) h[i] = act_value(z[i]);
                ws.post[l] = std::move(h);
            }
            cur = &ws.post[l];
        }
    }

    double act_value(double z) const {
        return act_ == Activation::Tanh ? std::tanh(z) : (z > 0.0 ? z : 0.0);
    }
    double act_deriv(double z) const {
        if (act_ == Activation::Tanh) {
            const double t = std::tanh(z);
            return 1.0 - t * t;
        }
        return z > 0.0 ? 1.0 : 0.0;
    }

    std::size_t layer_offset(std::size_t l) const {
        std::size_t off = 0;
        for (std::size_t k = 0; k < l; ++k)
            off += static_cast<std::size_t>(sizes_[k] + 1) * sizes_[k + 1];
        return off;
    }

    unsigned hidden_width() const { return static_cast<unsigned>(sizes_[1]); }

    std::vector<int> sizes_;
    Activation act_ = Activation::Tanh;
    StepModulationSpec mod_;
    std::size_t mod_offset_ = 0;
    std::vector<double> params_;
};

struct OptState {
    std::vector<double> m, v;
    long step = 0;
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    OptState() = default;
    OptState(std::size_t n, double lr_, double b1 = 0.9, double b2 = 0.999)
        : m(n, 0.0), v(n, 0.0), lr(lr_), beta1(b1), beta2(b2) {}
};

// Bias-corrected Adam update. Returns false (and leaves everything untouched)
// when the gradient contains non-finite entries.
inline bool adam_step(std::vector<double>& params, const GradVector& grad, OptState& opt) {
    if (params.size() != grad.size() || params.size() != opt.m.size())
        throw std::invalid_argument("adam_step: size mismatch");
    for (double g : grad)
        if (!std::isfinite(g)) return false;
    opt.step += 1;
    const double bc1 = 1.0 - std::pow(opt.beta1, static_cast<double>(opt.step));
    const double bc2 = 1.0 - std::pow(opt.beta2, static_cast<double>(opt.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        opt.m[i] = opt.beta1 * opt.m[i] + (1.0 - opt.beta1) * grad[i];
        opt.v[i] = opt.beta2 * opt.v[i] + (1.0 - opt.beta2) * grad[i] * grad[i];
        const double mhat = opt.m[i] / bc1;
        const double vhat = opt.v[i] / bc2;
        params[i] -= opt.lr * mhat / (std::sqrt(vhat) + opt.eps);
    }
    return true;
}

// Compares the analytic gradient of `loss` against central finite differences
// coordinate by coordinate; returns the max relative error. The loss maps the
// network output to a scalar and provides its own output cotangent.
struct ScalarLoss {
    std::function<double(const std::vector<double>&)> value;
    std::function<std::vector<double>(const std::vector<double>&)> output_cotangent;
};

inline double finite_diff_check(DenseNet& net, const std::vector<double>& input, int step,
                                const ScalarLoss& loss, double eps) {
    if (eps < 1e-7 || eps > 1e-3)
        throw std::invalid_argument("finite_diff_check: eps out of [1e-7, 1e-3]");
    const std::vector<double> out = net.forward(input, step);
    const GradVector analytic = net.backward(input, step, loss.output_cotangent(out));

    double max_rel = 0.0;
    std::vector<double>& p = net.params();
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double saved = p[i];
        p[i] = saved + eps;
        const double up = loss.value(net.forward(input, step));
        p[i] = saved - eps;
        const double dn = loss.value(net.forward(input, step));
        p[i] = saved;
        const double fd = (up - dn) / (2.0 * eps);
        const double rel = std::abs(analytic[i] - fd) / std::max(std::abs(fd), 1e-6);
        max_rel = std::max(max_rel, rel);
    }
    return max_rel;
}

}  // namespace gensched
