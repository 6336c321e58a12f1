#include "bnsp/nn.hpp"

#include <cmath>
#include <sstream>

namespace bnsp::nn {

namespace {

void glorot_fill(MatrixXd& w, RngStream& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(w.rows() + w.cols()));
    for (Eigen::Index c = 0; c < w.cols(); ++c)
        for (Eigen::Index r = 0; r < w.rows(); ++r)
            w(r, c) = rng.uniform(-limit, limit);
}

VectorXd apply_activation(Activation act, const VectorXd& pre) {
    switch (act) {
        case Activation::kRelu:
            return pre.cwiseMax(0.0);
        case Activation::kNone:
            return pre;
    }
    return pre;
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

// -------------------------------------------------------------------------
// Dense / MLP
// -------------------------------------------------------------------------

DenseLayer make_dense(int in, int out, Activation act, RngStream& rng) {
    DenseLayer layer;
    layer.weights.resize(out, in);
    glorot_fill(layer.weights, rng);
    layer.bias = VectorXd::Zero(out);
    layer.activation = act;
    return layer;
}

DenseGrad zero_grad(const DenseLayer& layer) {
    return {MatrixXd::Zero(layer.weights.rows(), layer.weights.cols()),
            VectorXd::Zero(layer.bias.size())};
}

VectorXd dense_forward(const DenseLayer& layer, const VectorXd& input, DenseCache* cache) {
    if (input.size() != layer.in_size()) {
        std::ostringstream msg;
        msg << "dense_forward: input size " << input.size() << " != layer input "
            << layer.in_size();
        throw ShapeError(msg.str());
    }
    VectorXd pre = layer.weights * input + layer.bias;
    if (cache) {
        cache->input = input;
        cache->pre_activation = pre;
    }
    return apply_activation(layer.activation, pre);
}

VectorXd dense_backward(const DenseLayer& layer, const DenseCache& cache,
                        const VectorXd& d_output, DenseGrad& grad) {
    if (cache.input.size() != layer.in_size())
        throw ContractError("dense_backward: cache does not match layer");
    VectorXd d_pre = d_output;
    if (layer.activation == Activation::kRelu) {
        for (Eigen::Index i = 0; i < d_pre.size(); ++i)
            if (cache.pre_activation[i] <= 0.0) d_pre[i] = 0.0;
    }
    grad.weights.noalias() += d_pre * cache.input.transpose();
    grad.bias += d_pre;
    return layer.weights.transpose() * d_pre;
}

Mlp make_mlp(const std::vector<int>& dims, RngStream& rng) {
    if (dims.size() < 2) throw ContractError("make_mlp: need at least two dims");
    Mlp mlp;
    for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
        const bool last = (i + 2 == dims.size());
        mlp.layers.push_back(
            make_dense(dims[i], dims[i + 1], last ? Activation::kNone : Activation::kRelu, rng));
    }
    return mlp;
}

MlpGrad zero_grad(const Mlp& mlp) {
    MlpGrad grad;
    grad.layers.reserve(mlp.layers.size());
    for (const auto& layer : mlp.layers) grad.layers.push_back(zero_grad(layer));
    return grad;
}

VectorXd mlp_forward(const Mlp& mlp, const VectorXd& input, MlpCache* cache) {
    if (cache) cache->layers.resize(mlp.layers.size());
    VectorXd x = input;
    for (std::size_t i = 0; i < mlp.layers.size(); ++i)
        x = dense_forward(mlp.layers[i], x, cache ? &cache->layers[i] : nullptr);
    return x;
}

VectorXd mlp_backward(const Mlp& mlp, const MlpCache& cache, const VectorXd& d_output,
                      MlpGrad& grad) {
    if (cache.layers.size() != mlp.layers.size())
        throw ContractError("mlp_backward: cache does not match network");
    VectorXd d = d_output;
    for (std::size_t i = mlp.layers.size(); i-- > 0;)
        d = dense_backward(mlp.layers[i], cache.layers[i], d, grad.layers[i]);
    return d;
}

// -------------------------------------------------------------------------
// LSTM
// -------------------------------------------------------------------------

LstmCell make_lstm(int input_size, int hidden_size, RngStream& rng) {
    LstmCell cell;
    cell.input_size = input_size;
    cell.hidden_size = hidden_size;
    cell.w_input.resize(4 * hidden_size, input_size);
    cell.w_hidden.resize(4 * hidden_size, hidden_size);
    glorot_fill(cell.w_input, rng);
    glorot_fill(cell.w_hidden, rng);
    cell.bias = VectorXd::Zero(4 * hidden_size);
    return cell;
}

LstmGrad zero_grad(const LstmCell& cell) {
    return {MatrixXd::Zero(cell.w_input.rows(), cell.w_input.cols()),
            MatrixXd::Zero(cell.w_hidden.rows(), cell.w_hidden.cols()),
            VectorXd::Zero(cell.bias.size())};
}

LstmState zero_state(const LstmCell& cell) {
    return {VectorXd::Zero(cell.hidden_size), VectorXd::Zero(cell.hidden_size)};
}

LstmState lstm_step(const LstmCell& cell, const VectorXd& input, const LstmState& state,
                    LstmCache* cache) {
    if (input.size() != cell.input_size)
        throw ShapeError("lstm_step: input size does not match cell");
    if (state.hidden.size() != cell.hidden_size || state.cell.size() != cell.hidden_size)
        throw ShapeError("lstm_step: state size does not match cell");

    const int h = cell.hidden_size;
    VectorXd z = cell.w_input * input + cell.w_hidden * state.hidden + cell.bias;

    VectorXd gate_i(h), gate_f(h), gate_g(h), gate_o(h);
    for (int j = 0; j < h; ++j) {
        gate_i[j] = sigmoid(z[j]);
        gate_f[j] = sigmoid(z[h + j]);
        gate_g[j] = std::tanh(z[2 * h + j]);
        gate_o[j] = sigmoid(z[3 * h + j]);
    }

    LstmState next;
    next.cell = gate_f.cwiseProduct(state.cell) + gate_i.cwiseProduct(gate_g);
    VectorXd tanh_c = next.cell.array().tanh();
    next.hidden = gate_o.cwiseProduct(tanh_c);

    if (cache) {
        cache->input = input;
        cache->prev_hidden = state.hidden;
        cache->prev_cell = state.cell;
        cache->gate_i = gate_i;
        cache->gate_f = gate_f;
        cache->gate_g = gate_g;
        cache->gate_o = gate_o;
        cache->new_cell = next.cell;
        cache->tanh_new_cell = tanh_c;
    }
    return next;
}

LstmBackwardResult lstm_backward_step(const LstmCell& cell, const LstmCache& cache,
                                      const VectorXd& d_hidden, const VectorXd& d_cell,
                                      LstmGrad& grad) {
    const int h = cell.hidden_size;
    const VectorXd& t = cache.tanh_new_cell;

    VectorXd d_o = d_hidden.cwiseProduct(t);
    VectorXd d_c =
        d_cell + d_hidden.cwiseProduct(cache.gate_o).cwiseProduct(
                     (VectorXd::Ones(h) - t.cwiseProduct(t)));

    VectorXd d_i = d_c.cwiseProduct(cache.gate_g);
    VectorXd d_f = d_c.cwiseProduct(cache.prev_cell);
    VectorXd d_g = d_c.cwiseProduct(cache.gate_i);

    VectorXd d_z(4 * h);
    for (int j = 0; j < h; ++j) {
        d_z[j] = d_i[j] * cache.gate_i[j] * (1.0 - cache.gate_i[j]);
        d_z[h + j] = d_f[j] * cache.gate_f[j] * (1.0 - cache.gate_f[j]);
        d_z[2 * h + j] = d_g[j] * (1.0 - cache.gate_g[j] * cache.gate_g[j]);
        d_z[3 * h + j] = d_o[j] * cache.gate_o[j] * (1.0 - cache.gate_o[j]);
    }

    grad.w_input.noalias() += d_z * cache.input.transpose();
    grad.w_hidden.noalias() += d_z * cache.prev_hidden.transpose();
    grad.bias += d_z;

    LstmBackwardResult out;
    out.d_input = cell.w_input.transpose() * d_z;
    out.d_prev.hidden = cell.w_hidden.transpose() * d_z;
    out.d_prev.cell = d_c.cwiseProduct(cache.gate_f);
    return out;
}

std::vector<LstmState> lstm_forward_sequence(const LstmCell& cell,
                                             const std::vector<VectorXd>& inputs,
                                             std::vector<LstmCache>& caches) {
    caches.resize(inputs.size());
    std::vector<LstmState> states;
    states.reserve(inputs.size());
    LstmState state = zero_state(cell);
    for (std::size_t t = 0; t < inputs.size(); ++t) {
        state = lstm_step(cell, inputs[t], state, &caches[t]);
        states.push_back(state);
    }
    return states;
}

std::vector<VectorXd> lstm_backward_sequence(const LstmCell& cell,
                                             const std::vector<LstmCache>& caches,
                                             const std::vector<VectorXd>& d_hidden_per_step,
                                             LstmGrad& grad) {
    if (caches.size() != d_hidden_per_step.size())
        throw ContractError("lstm_backward_sequence: cache/gradient length mismatch");
    std::vector<VectorXd> d_inputs(caches.size());
    VectorXd d_h = VectorXd::Zero(cell.hidden_size);
    VectorXd d_c = VectorXd::Zero(cell.hidden_size);
    for (std::size_t t = caches.size(); t-- > 0;) {
        d_h += d_hidden_per_step[t];
        auto res = lstm_backward_step(cell, caches[t], d_h, d_c, grad);
        d_inputs[t] = std::move(res.d_input);
        d_h = std::move(res.d_prev.hidden);
        d_c = std::move(res.d_prev.cell);
    }
    return d_inputs;
}

// -------------------------------------------------------------------------
// Parameter views / Adam / gradient checks
// -------------------------------------------------------------------------

namespace {

void push_view(ParamViews& out, const std::string& path, MatrixXd& m) {
    out.push_back({path, m.data(), m.rows(), m.cols()});
}

void push_view(ParamViews& out, const std::string& path, VectorXd& v) {
    out.push_back({path, v.data(), v.size(), 1});
}

}  // namespace

void collect(DenseLayer& l, const std::string& prefix, ParamViews& out) {
    push_view(out, prefix + "/W", l.weights);
    push_view(out, prefix + "/b", l.bias);
}

void collect(DenseGrad& g, const std::string& prefix, ParamViews& out) {
    push_view(out, prefix + "/W", g.weights);
    push_view(out, prefix + "/b", g.bias);
}

void collect(Mlp& m, const std::string& prefix, ParamViews& out) {
    for (std::size_t i = 0; i < m.layers.size(); ++i)
        collect(m.layers[i], prefix + "/" + std::to_string(i), out);
}

void collect(MlpGrad& g, const std::string& prefix, ParamViews& out) {
    for (std::size_t i = 0; i < g.layers.size(); ++i)
        collect(g.layers[i], prefix + "/" + std::to_string(i), out);
}

void collect(LstmCell& c, const std::string& prefix, ParamViews& out) {
    push_view(out, prefix + "/Wx", c.w_input);
    push_view(out, prefix + "/Wh", c.w_hidden);
    push_view(out, prefix + "/b", c.bias);
}

void collect(LstmGrad& g, const std::string& prefix, ParamViews& out) {
    push_view(out, prefix + "/Wx", g.w_input);
    push_view(out, prefix + "/Wh", g.w_hidden);
    push_view(out, prefix + "/b", g.bias);
}

std::size_t total_size(const ParamViews& views) {
    std::size_t n = 0;
    for (const auto& v : views) n += static_cast<std::size_t>(v.size());
    return n;
}

void AdamState::init(const ParamViews& params) {
    first_moment.clear();
    second_moment.clear();
    for (const auto& p : params) {
        first_moment.push_back(VectorXd::Zero(p.size()));
        second_moment.push_back(VectorXd::Zero(p.size()));
    }
    step_count = 0;
}

void adam_update(AdamState& state, const ParamViews& params, const ParamViews& grads) {
    if (params.size() != grads.size())
        throw ContractError("adam_update: parameter/gradient group mismatch");
    if (state.first_moment.size() != params.size()) state.init(params);

    ++state.step_count;
    const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step_count));
    const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step_count));

    for (std::size_t k = 0; k < params.size(); ++k) {
        const ParamView& p = params[k];
        const ParamView& g = grads[k];
        if (p.size() != g.size())
            throw ContractError("adam_update: shape mismatch at " + p.path);
        VectorXd& m = state.first_moment[k];
        VectorXd& v = state.second_moment[k];
        for (Eigen::Index i = 0; i < p.size(); ++i) {
            const double gi = g.data[i];
            if (!std::isfinite(gi))
                throw NumericError("adam_update: non-finite gradient at " + p.path);
            m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * gi;
            v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * gi * gi;
            const double m_hat = m[i] / bc1;
            const double v_hat = v[i] / bc2;
            p.data[i] -= state.learning_rate * m_hat / (std::sqrt(v_hat) + state.epsilon);
        }
    }
}

GradCheckReport finite_difference_check(const ParamViews& params, const ParamViews& analytic,
                                        const std::function<double()>& loss, RngStream& rng,
                                        int probes, double step, double atol) {
    if (params.size() != analytic.size())
        throw ContractError("finite_difference_check: view group mismatch");
    const std::size_t total = total_size(params);
    if (total == 0) throw ContractError("finite_difference_check: empty parameter set");

    GradCheckReport report;
    report.probes = probes;
    for (int probe = 0; probe < probes; ++probe) {
        // Pick a random coordinate across all views.
        std::size_t flat = static_cast<std::size_t>(rng.uniform() * static_cast<double>(total));
        if (flat >= total) flat = total - 1;
        std::size_t view_idx = 0;
        while (flat >= static_cast<std::size_t>(params[view_idx].size())) {
            flat -= static_cast<std::size_t>(params[view_idx].size());
            ++view_idx;
        }
        double* slot = params[view_idx].data + flat;
        const double saved = *slot;

        *slot = saved + step;
        const double up = loss();
        *slot = saved - step;
        const double down = loss();
        *slot = saved;

        const double numeric = (up - down) / (2.0 * step);
        const double a = analytic[view_idx].data[flat];
        const double rel = std::abs(a - numeric) / (std::abs(a) + std::abs(numeric) + atol);
        if (rel > report.max_rel_error) {
            report.max_rel_error = rel;
            report.worst_path = params[view_idx].path;
            report.worst_index = static_cast<Eigen::Index>(flat);
            report.worst_analytic = a;
            report.worst_numeric = numeric;
        }
    }
    return report;
}

}  // namespace bnsp::nn
