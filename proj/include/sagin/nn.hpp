#pragma once

#include <Eigen/Dense>

#include <random>
#include <span>
#include <vector>

namespace sagin::nn {

/// Adaptive-moment optimizer over a flat parameter vector.
class Adam {
public:
    Adam() = default;
    Adam(std::size_t size, double rate, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

    /// One descent step: params -= rate * m_hat / (sqrt(v_hat) + eps).
    void step(std::span<double> params, std::span<const double> grad);

    double rate() const { return rate_; }
    void set_rate(double r) { rate_ = r; }
    long steps() const { return t_; }

    // Raw state for checkpoints.
    std::vector<double>& first_moment() { return m_; }
    std::vector<double>& second_moment() { return v_; }
    const std::vector<double>& first_moment() const { return m_; }
    const std::vector<double>& second_moment() const { return v_; }
    void set_steps(long t) { t_ = t; }

private:
    double rate_ = 1e-3, beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
    long t_ = 0;
    std::vector<double> m_, v_;
};

/// Fully connected ReLU network with a linear output layer. Parameters live in one flat vector.
class Mlp {
public:
    struct Tape {
        std::vector<Eigen::VectorXd> activations;  // input, each hidden output, final output
    };

    Mlp() = default;
    Mlp(std::vector<int> sizes, std::mt19937_64& rng);

    int input_size() const { return sizes_.front(); }
    int output_size() const { return sizes_.back(); }
    const std::vector<int>& sizes() const { return sizes_; }

    Eigen::VectorXd forward(std::span<const double> x) const;
    Eigen::VectorXd forward(std::span<const double> x, Tape& tape) const;
    /// Adds d(output . upstream)/d(params) into grad.
    void backward(const Tape& tape, const Eigen::VectorXd& upstream, std::span<double> grad) const;

    std::span<double> parameters() { return params_; }
    std::span<const double> parameters() const { return params_; }
    std::size_t parameter_count() const { return params_.size(); }

private:
    struct Offsets {
        std::size_t weight, bias;
    };
    std::vector<int> sizes_;
    std::vector<Offsets> offsets_;
    std::vector<double> params_;
};

Eigen::VectorXd softmax(const Eigen::VectorXd& logits);

}  // namespace sagin::nn
