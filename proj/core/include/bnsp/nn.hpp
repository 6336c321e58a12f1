#pragma once

#include <Eigen/Core>

#include <functional>
#include <string>
#include <vector>

#include "bnsp/rng.hpp"
#include "bnsp/types.hpp"

namespace bnsp::nn {

using Eigen::MatrixXd;
using Eigen::VectorXd;

enum class Activation { kNone, kRelu };

// ---------------------------------------------------------------------------
// Dense layers and MLPs
// ---------------------------------------------------------------------------

struct DenseLayer {
    MatrixXd weights;  // out x in
    VectorXd bias;     // out
    Activation activation = Activation::kNone;

    Eigen::Index in_size() const { return weights.cols(); }
    Eigen::Index out_size() const { return weights.rows(); }
};

struct DenseCache {
    VectorXd input;
    VectorXd pre_activation;
};

struct DenseGrad {
    MatrixXd weights;
    VectorXd bias;
};

DenseLayer make_dense(int in, int out, Activation act, RngStream& rng);
DenseGrad zero_grad(const DenseLayer& layer);

/// Affine map plus activation. `cache`, when non-null, stores what the
/// backward pass needs.
VectorXd dense_forward(const DenseLayer& layer, const VectorXd& input, DenseCache* cache);

/// Reverse-mode step for one dense layer. Accumulates parameter gradients
/// into `grad` and returns the gradient w.r.t. the layer input.
VectorXd dense_backward(const DenseLayer& layer, const DenseCache& cache,
                        const VectorXd& d_output, DenseGrad& grad);

struct Mlp {
    std::vector<DenseLayer> layers;

    Eigen::Index in_size() const { return layers.front().in_size(); }
    Eigen::Index out_size() const { return layers.back().out_size(); }
};

struct MlpCache {
    std::vector<DenseCache> layers;
};

struct MlpGrad {
    std::vector<DenseGrad> layers;
};

/// Builds an MLP from a dimension chain such as {2, 64, 256, 16}; hidden
/// layers use ReLU, the final layer is linear.
Mlp make_mlp(const std::vector<int>& dims, RngStream& rng);
MlpGrad zero_grad(const Mlp& mlp);

VectorXd mlp_forward(const Mlp& mlp, const VectorXd& input, MlpCache* cache);
VectorXd mlp_backward(const Mlp& mlp, const MlpCache& cache, const VectorXd& d_output,
                      MlpGrad& grad);

// ---------------------------------------------------------------------------
// LSTM cell
// ---------------------------------------------------------------------------

/// Single LSTM cell with combined gate matrices; gate row order is
/// [input, forget, candidate, output].
struct LstmCell {
    int input_size = 0;
    int hidden_size = 0;
    MatrixXd w_input;   // 4H x D
    MatrixXd w_hidden;  // 4H x H
    VectorXd bias;      // 4H
};

struct LstmState {
    VectorXd hidden;
    VectorXd cell;
};

struct LstmCache {
    VectorXd input;
    VectorXd prev_hidden;
    VectorXd prev_cell;
    VectorXd gate_i, gate_f, gate_g, gate_o;
    VectorXd new_cell;
    VectorXd tanh_new_cell;
};

struct LstmGrad {
    MatrixXd w_input;
    MatrixXd w_hidden;
    VectorXd bias;
};

LstmCell make_lstm(int input_size, int hidden_size, RngStream& rng);
LstmGrad zero_grad(const LstmCell& cell);
LstmState zero_state(const LstmCell& cell);

LstmState lstm_step(const LstmCell& cell, const VectorXd& input, const LstmState& state,
                    LstmCache* cache);

struct LstmBackwardResult {
    VectorXd d_input;
    LstmState d_prev;
};

/// Reverse-mode step: given gradients w.r.t. the produced hidden/cell state,
/// accumulates parameter gradients and returns gradients w.r.t. the input and
/// the previous state.
LstmBackwardResult lstm_backward_step(const LstmCell& cell, const LstmCache& cache,
                                      const VectorXd& d_hidden, const VectorXd& d_cell,
                                      LstmGrad& grad);

/// Unrolls the cell over a sequence from a zero state; returns per-step hidden
/// states and fills `caches`.
std::vector<LstmState> lstm_forward_sequence(const LstmCell& cell,
                                             const std::vector<VectorXd>& inputs,
                                             std::vector<LstmCache>& caches);

/// Backpropagation through time over a full sequence. `d_hidden_per_step[t]`
/// is the loss gradient w.r.t. the hidden state emitted at step t. Returns
/// gradients w.r.t. the inputs.
std::vector<VectorXd> lstm_backward_sequence(const LstmCell& cell,
                                             const std::vector<LstmCache>& caches,
                                             const std::vector<VectorXd>& d_hidden_per_step,
                                             LstmGrad& grad);

// ---------------------------------------------------------------------------
// Parameter views, Adam, gradient verification
// ---------------------------------------------------------------------------

/// Flat, named view over one parameter tensor. Everything that iterates
/// parameters (Adam, checkpoints, finite-difference probes) works on these.
struct ParamView {
    std::string path;
    double* data = nullptr;
    Eigen::Index rows = 0;
    Eigen::Index cols = 0;

    Eigen::Index size() const { return rows * cols; }
};

using ParamViews = std::vector<ParamView>;

void collect(DenseLayer& l, const std::string& prefix, ParamViews& out);
void collect(DenseGrad& g, const std::string& prefix, ParamViews& out);
void collect(Mlp& m, const std::string& prefix, ParamViews& out);
void collect(MlpGrad& g, const std::string& prefix, ParamViews& out);
void collect(LstmCell& c, const std::string& prefix, ParamViews& out);
void collect(LstmGrad& g, const std::string& prefix, ParamViews& out);

std::size_t total_size(const ParamViews& views);

/// Bias-corrected Adam over a group of parameter views.
struct AdamState {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    long step_count = 0;
    std::vector<VectorXd> first_moment;
    std::vector<VectorXd> second_moment;

    void init(const ParamViews& params);
};

/// One Adam step. `params` and `grads` must be structurally parallel.
/// Throws NumericError on a non-finite gradient.
void adam_update(AdamState& state, const ParamViews& params, const ParamViews& grads);

struct GradCheckReport {
    double max_rel_error = 0.0;
    std::string worst_path;
    Eigen::Index worst_index = 0;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
    int probes = 0;
};

/// Central-difference probe of `analytic` against `loss` at randomly chosen
/// parameter coordinates. Uses the absolute-floor corrected relative error
/// |a - fd| / (|a| + |fd| + atol) so near-zero gradients are not penalized
/// for finite-difference round-off.
GradCheckReport finite_difference_check(const ParamViews& params, const ParamViews& analytic,
                                        const std::function<double()>& loss, RngStream& rng,
                                        int probes, double step = 1e-5, double atol = 1e-8);

}  // namespace bnsp::nn
