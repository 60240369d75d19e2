#include "mosopi/nn.hpp"

#include <cmath>
#include <cstdint>
#include <istream>
#include <ostream>

namespace mosopi {

namespace {

constexpr char kMlpMagic[4] = {'M', 'L', 'P', '1'};

// tanh through the vectorized exponential: tanh|x| = (1 - e) / (1 + e) with
// e = exp(-2|x|), and an odd Taylor polynomial near 0 where that form cancels.
void fast_tanh(Eigen::MatrixXd& x) {
    const Eigen::ArrayXXd a = x.array().abs();
    const Eigen::ArrayXXd e = (-2.0 * a).exp();
    const Eigen::ArrayXXd a2 = a.square();
    const Eigen::ArrayXXd poly =
        a * (1.0 + a2 * (-1.0 / 3.0 + a2 * (2.0 / 15.0 + a2 * (-17.0 / 315.0 + a2 * (62.0 / 2835.0)))));
    const Eigen::ArrayXXd mag = (a < 0.02).select(poly, (1.0 - e) / (1.0 + e));
    x = (x.array() < 0.0).select(-mag, mag);
}

void apply_activation(Activation act, Eigen::MatrixXd& x) {
    switch (act) {
    case Activation::Linear: break;
    case Activation::Tanh: fast_tanh(x); break;
    case Activation::Relu: x = x.array().max(0.0); break;
    }
}

// dLoss/dpre given dLoss/dpost, in place.
void activation_backward(Activation act, const Eigen::MatrixXd& pre, const Eigen::MatrixXd& post, Eigen::MatrixXd& grad) {
    switch (act) {
    case Activation::Linear: break;
    case Activation::Tanh: grad.array() *= 1.0 - post.array().square(); break;
    case Activation::Relu: grad.array() *= (pre.array() > 0.0).cast<double>(); break;
    }
}

template <typename T>
void write_pod(std::ostream& out, const T& value) {
    out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in) {
    T value{};
    in.read(reinterpret_cast<char*>(&value), sizeof(T));
    if (!in) throw std::runtime_error("checkpoint: unexpected end of data");
    return value;
}

} // namespace

Activation parse_activation(const std::string& name) {
    if (name == "linear") return Activation::Linear;
    if (name == "tanh") return Activation::Tanh;
    if (name == "relu") return Activation::Relu;
    throw std::invalid_argument("unknown activation '" + name + "'");
}

std::string activation_name(Activation act) {
    switch (act) {
    case Activation::Linear: return "linear";
    case Activation::Tanh: return "tanh";
    case Activation::Relu: return "relu";
    }
    return "linear";
}

Mlp::Mlp(std::vector<int> widths, std::vector<Activation> activations)
    : widths_(std::move(widths)), activations_(std::move(activations)) {
    if (widths_.size() < 2) throw std::invalid_argument("Mlp needs an input and an output width");
    if (activations_.size() + 1 != widths_.size()) throw std::invalid_argument("Mlp needs one activation per layer");
    Eigen::Index total = 0;
    for (std::size_t l = 0; l + 1 < widths_.size(); ++l) {
        if (widths_[l] < 1 || widths_[l + 1] < 1) throw std::invalid_argument("Mlp widths must be >= 1");
        offsets_.push_back(total);
        total += static_cast<Eigen::Index>(widths_[l + 1]) * (widths_[l] + 1);
    }
    params_ = Eigen::VectorXd::Zero(total);
}

Mlp Mlp::make(int input, const std::vector<int>& hidden, int output, Activation hidden_act) {
    std::vector<int> widths{input};
    widths.insert(widths.end(), hidden.begin(), hidden.end());
    widths.push_back(output);
    std::vector<Activation> acts(hidden.size(), hidden_act);
    acts.push_back(Activation::Linear);
    return Mlp(std::move(widths), std::move(acts));
}

void Mlp::initialize(std::mt19937_64& rng) {
    for (int l = 0; l < n_layers(); ++l) {
        const int fan_in = widths_[static_cast<std::size_t>(l)];
        const int fan_out = widths_[static_cast<std::size_t>(l) + 1];
        const double limit = std::sqrt(6.0 / (fan_in + fan_out));
        std::uniform_real_distribution<double> dist(-limit, limit);
        auto w = weight(l);
        for (Eigen::Index j = 0; j < w.cols(); ++j) {
            for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = dist(rng);
        }
        bias(l).setZero();
    }
}

void Mlp::set_parameters(const Eigen::VectorXd& params) {
    if (params.size() != params_.size()) throw std::invalid_argument("parameter vector has the wrong size");
    params_ = params;
}

Eigen::Map<Eigen::MatrixXd> Mlp::weight(int layer) {
    const auto l = static_cast<std::size_t>(layer);
    return {params_.data() + offsets_.at(l), widths_[l + 1], widths_[l]};
}

Eigen::Map<const Eigen::MatrixXd> Mlp::weight(int layer) const {
    const auto l = static_cast<std::size_t>(layer);
    return {params_.data() + offsets_.at(l), widths_[l + 1], widths_[l]};
}

Eigen::Map<Eigen::VectorXd> Mlp::bias(int layer) {
    const auto l = static_cast<std::size_t>(layer);
    return {params_.data() + offsets_.at(l) + static_cast<Eigen::Index>(widths_[l + 1]) * widths_[l], widths_[l + 1]};
}

Eigen::Map<const Eigen::VectorXd> Mlp::bias(int layer) const {
    const auto l = static_cast<std::size_t>(layer);
    return {params_.data() + offsets_.at(l) + static_cast<Eigen::Index>(widths_[l + 1]) * widths_[l], widths_[l + 1]};
}

Eigen::VectorXd Mlp::forward(const Eigen::VectorXd& input) const {
    return forward_batch(input);
}

Eigen::MatrixXd Mlp::forward_batch(const Eigen::MatrixXd& inputs) const {
    if (inputs.rows() != input_dim()) {
        throw std::invalid_argument("Mlp input has " + std::to_string(inputs.rows()) + " rows, expected " +
                                    std::to_string(input_dim()));
    }
    Eigen::MatrixXd x = inputs;
    for (int l = 0; l < n_layers(); ++l) {
        Eigen::MatrixXd y = weight(l) * x;
        y.colwise() += bias(l);
        apply_activation(activations_[static_cast<std::size_t>(l)], y);
        x = std::move(y);
    }
    return x;
}

ForwardPass Mlp::forward_record(const Eigen::MatrixXd& inputs) const {
    if (inputs.rows() != input_dim()) {
        throw std::invalid_argument("Mlp input has " + std::to_string(inputs.rows()) + " rows, expected " +
                                    std::to_string(input_dim()));
    }
    ForwardPass pass;
    pass.inputs.reserve(static_cast<std::size_t>(n_layers()) + 1);
    pass.preactivation.reserve(static_cast<std::size_t>(n_layers()));
    pass.inputs.push_back(inputs);
    for (int l = 0; l < n_layers(); ++l) {
        Eigen::MatrixXd pre = weight(l) * pass.inputs.back();
        pre.colwise() += bias(l);
        Eigen::MatrixXd post = pre;
        apply_activation(activations_[static_cast<std::size_t>(l)], post);
        pass.preactivation.push_back(std::move(pre));
        pass.inputs.push_back(std::move(post));
    }
    return pass;
}

Eigen::VectorXd Mlp::backward(const ForwardPass& pass, const Eigen::MatrixXd& output_grad,
                              Eigen::MatrixXd* input_grad) const {
    if (pass.empty() || pass.preactivation.size() != static_cast<std::size_t>(n_layers())) {
        throw std::logic_error("Mlp::backward called without a recorded forward pass");
    }
    if (output_grad.rows() != output_dim() || output_grad.cols() != pass.output().cols()) {
        throw std::invalid_argument("Mlp::backward: output gradient shape mismatch");
    }
    Eigen::VectorXd grads(params_.size());
    Eigen::MatrixXd delta = output_grad;
    for (int l = n_layers() - 1; l >= 0; --l) {
        const auto li = static_cast<std::size_t>(l);
        activation_backward(activations_[li], pass.preactivation[li], pass.inputs[li + 1], delta);
        Eigen::Map<Eigen::MatrixXd> grad_w(grads.data() + offsets_[li], widths_[li + 1], widths_[li]);
        Eigen::Map<Eigen::VectorXd> grad_b(grads.data() + offsets_[li] + static_cast<Eigen::Index>(widths_[li + 1]) * widths_[li],
                                           widths_[li + 1]);
        grad_w.noalias() = delta * pass.inputs[li].transpose();
        grad_b = delta.rowwise().sum();
        if (l > 0 || input_grad != nullptr) {
            Eigen::MatrixXd next = weight(l).transpose() * delta;
            delta = std::move(next);
        }
    }
    if (input_grad != nullptr) *input_grad = std::move(delta);
    return grads;
}

void Mlp::save(std::ostream& out) const {
    out.write(kMlpMagic, sizeof(kMlpMagic));
    write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(widths_.size()));
    for (const int w : widths_) write_pod<std::int32_t>(out, w);
    for (const Activation a : activations_) write_pod<std::uint8_t>(out, static_cast<std::uint8_t>(a));
    write_vector(out, params_);
    if (!out) throw std::runtime_error("checkpoint: write failed");
}

Mlp Mlp::load(std::istream& in) {
    char magic[4] = {};
    in.read(magic, sizeof(magic));
    if (!in || std::string(magic, 4) != std::string(kMlpMagic, 4)) throw std::runtime_error("checkpoint: bad Mlp header");
    const auto n_widths = read_pod<std::uint32_t>(in);
    if (n_widths < 2 || n_widths > 1024) throw std::runtime_error("checkpoint: implausible layer count");
    std::vector<int> widths;
    for (std::uint32_t i = 0; i < n_widths; ++i) widths.push_back(read_pod<std::int32_t>(in));
    std::vector<Activation> acts;
    for (std::uint32_t i = 0; i + 1 < n_widths; ++i) {
        const auto code = read_pod<std::uint8_t>(in);
        if (code > static_cast<std::uint8_t>(Activation::Relu)) throw std::runtime_error("checkpoint: bad activation");
        acts.push_back(static_cast<Activation>(code));
    }
    Mlp net(std::move(widths), std::move(acts));
    net.set_parameters(read_vector(in));
    return net;
}

Adam::Adam(double learning_rate, double beta1, double beta2, double epsilon) {
    if (!(learning_rate > 0.0)) throw std::invalid_argument("Adam learning rate must be positive");
    state_.learning_rate = learning_rate;
    state_.beta1 = beta1;
    state_.beta2 = beta2;
    state_.epsilon = epsilon;
}

void Adam::reset() {
    state_.step = 0;
    state_.first_moment.resize(0);
    state_.second_moment.resize(0);
}

void Adam::step(Eigen::VectorXd& params, const Eigen::VectorXd& grads) {
    if (params.size() != grads.size()) throw std::invalid_argument("Adam: gradient and parameter sizes differ");
    require_finite(grads, "Adam gradient");
    if (state_.first_moment.size() == 0) {
        state_.first_moment = Eigen::VectorXd::Zero(params.size());
        state_.second_moment = Eigen::VectorXd::Zero(params.size());
    } else if (state_.first_moment.size() != params.size()) {
        throw std::invalid_argument("Adam: parameter size changed between steps");
    }
    ++state_.step;
    state_.first_moment = state_.beta1 * state_.first_moment + (1.0 - state_.beta1) * grads;
    state_.second_moment = state_.beta2 * state_.second_moment + (1.0 - state_.beta2) * grads.cwiseAbs2();
    const double correction1 = 1.0 - std::pow(state_.beta1, static_cast<double>(state_.step));
    const double correction2 = 1.0 - std::pow(state_.beta2, static_cast<double>(state_.step));
    params.array() -= state_.learning_rate * (state_.first_moment.array() / correction1) /
                      ((state_.second_moment.array() / correction2).sqrt() + state_.epsilon);
}

void require_finite(const Eigen::VectorXd& grads, const char* what) {
    if (!grads.allFinite()) throw NonFiniteError(std::string(what) + " contains non-finite values");
}

Eigen::VectorXd clip_gradients(Eigen::VectorXd grads, double max_norm) {
    if (!(max_norm > 0.0)) throw std::invalid_argument("max_norm must be positive");
    require_finite(grads, "gradient");
    const double norm = grads.norm();
    if (norm > max_norm) grads *= max_norm / norm;
    return grads;
}

void write_vector(std::ostream& out, const Eigen::VectorXd& v) {
    write_pod<std::uint64_t>(out, static_cast<std::uint64_t>(v.size()));
    out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
}

Eigen::VectorXd read_vector(std::istream& in) {
    const auto n = read_pod<std::uint64_t>(in);
    if (n > (1ULL << 32)) throw std::runtime_error("checkpoint: implausible vector length");
    Eigen::VectorXd v(static_cast<Eigen::Index>(n));
    in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(double)));
    if (!in) throw std::runtime_error("checkpoint: truncated parameter data");
    return v;
}

} // namespace mosopi
