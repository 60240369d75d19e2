#pragma once

#include <Eigen/Dense>

#include <iosfwd>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace mosopi {

enum class Activation { Linear, Tanh, Relu };

Activation parse_activation(const std::string& name);
std::string activation_name(Activation act);

/// Raised when a loss or gradient stops being finite.
class NonFiniteError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Activations recorded by Mlp::forward_record, consumed by Mlp::backward.
/// Batches are column-major: one sample per column.
struct ForwardPass {
    std::vector<Eigen::MatrixXd> inputs;       ///< inputs[l] feeds layer l; inputs[L] is the output
    std::vector<Eigen::MatrixXd> preactivation;

    bool empty() const { return inputs.empty(); }
    const Eigen::MatrixXd& output() const { return inputs.back(); }
};

/**
 * Fully connected feed-forward network.
 *
 * All weights and biases live in one flat parameter vector, laid out layer
 * by layer as [W_0 (column-major, out x in), b_0, W_1, b_1, ...]. Optimizers,
 * gradient clipping, checkpoints and target-network copies all work on that
 * vector directly.
 */
class Mlp {
public:
    Mlp() = default;
    /// widths = {input, hidden..., output}; one activation per layer.
    Mlp(std::vector<int> widths, std::vector<Activation> activations);

    /// Hidden layers share `hidden_act`; the output layer is linear.
    static Mlp make(int input, const std::vector<int>& hidden, int output, Activation hidden_act);

    /// Weights uniform in +-sqrt(6 / (fan_in + fan_out)), biases zero.
    void initialize(std::mt19937_64& rng);

    Eigen::VectorXd forward(const Eigen::VectorXd& input) const;
    Eigen::MatrixXd forward_batch(const Eigen::MatrixXd& inputs) const;
    ForwardPass forward_record(const Eigen::MatrixXd& inputs) const;

    /// Gradient of a scalar loss w.r.t. the flat parameters, given dLoss/dOutput
    /// for the recorded batch. Optionally also returns dLoss/dInput.
    Eigen::VectorXd backward(const ForwardPass& pass, const Eigen::MatrixXd& output_grad,
                             Eigen::MatrixXd* input_grad = nullptr) const;

    int input_dim() const { return widths_.empty() ? 0 : widths_.front(); }
    int output_dim() const { return widths_.empty() ? 0 : widths_.back(); }
    int n_layers() const { return static_cast<int>(activations_.size()); }
    Eigen::Index n_parameters() const { return params_.size(); }
    const std::vector<int>& widths() const { return widths_; }
    const std::vector<Activation>& activations() const { return activations_; }

    Eigen::VectorXd& parameters() { return params_; }
    const Eigen::VectorXd& parameters() const { return params_; }
    void set_parameters(const Eigen::VectorXd& params);

    Eigen::Map<Eigen::MatrixXd> weight(int layer);
    Eigen::Map<const Eigen::MatrixXd> weight(int layer) const;
    Eigen::Map<Eigen::VectorXd> bias(int layer);
    Eigen::Map<const Eigen::VectorXd> bias(int layer) const;

    void save(std::ostream& out) const;
    static Mlp load(std::istream& in);

private:
    std::vector<int> widths_;
    std::vector<Activation> activations_;
    std::vector<Eigen::Index> offsets_; ///< start of W_l in params_
    Eigen::VectorXd params_;
};

/// Adam hyperparameters and moment estimates.
struct AdamState {
    long step = 0;
    Eigen::VectorXd first_moment;
    Eigen::VectorXd second_moment;
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

class Adam {
public:
    explicit Adam(double learning_rate = 1e-3, double beta1 = 0.9, double beta2 = 0.999, double epsilon = 1e-8);

    /// params -= lr * m_hat / (sqrt(v_hat) + eps). Throws NonFiniteError on
    /// non-finite gradients; moments are sized lazily on the first call.
    void step(Eigen::VectorXd& params, const Eigen::VectorXd& grads);

    const AdamState& state() const { return state_; }
    void reset();

private:
    AdamState state_;
};

/// Rescales so that ||grads||_2 <= max_norm. Throws NonFiniteError on
/// non-finite input.
Eigen::VectorXd clip_gradients(Eigen::VectorXd grads, double max_norm);

void require_finite(const Eigen::VectorXd& grads, const char* what);

// Flat binary helpers shared by checkpoints.
void write_vector(std::ostream& out, const Eigen::VectorXd& v);
Eigen::VectorXd read_vector(std::istream& in);

} // namespace mosopi
