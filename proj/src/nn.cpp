#include "sagin/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace sagin::nn {

Adam::Adam(std::size_t size, double rate, double beta1, double beta2, double eps)
    : rate_(rate), beta1_(beta1), beta2_(beta2), eps_(eps), m_(size, 0.0), v_(size, 0.0) {
    if (!(rate >= 0.0)) throw std::invalid_argument("Adam: rate must be non-negative");
}

void Adam::step(std::span<double> params, std::span<const double> grad) {
    if (params.size() != m_.size() || grad.size() != m_.size()) throw std::invalid_argument("Adam: size mismatch");
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t k = 0; k < params.size(); ++k) {
        m_[k] = beta1_ * m_[k] + (1.0 - beta1_) * grad[k];
        v_[k] = beta2_ * v_[k] + (1.0 - beta2_) * grad[k] * grad[k];
        // Moments of parameters with zero gradient decay into subnormals, which are very slow.
        if (std::abs(m_[k]) < 1e-150) m_[k] = 0.0;
        if (v_[k] < 1e-150) v_[k] = 0.0;
        params[k] -= rate_ * (m_[k] / c1) / (std::sqrt(v_[k] / c2) + eps_);
    }
}

Mlp::Mlp(std::vector<int> sizes, std::mt19937_64& rng) : sizes_(std::move(sizes)) {
    if (sizes_.size() < 2) throw std::invalid_argument("Mlp needs at least input and output sizes");
    std::size_t n = 0;
    for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
        if (sizes_[l] < 1 || sizes_[l + 1] < 1) throw std::invalid_argument("Mlp layer sizes must be positive");
        const std::size_t w = static_cast<std::size_t>(sizes_[l]) * sizes_[l + 1];
        offsets_.push_back({n, n + w});
        n += w + sizes_[l + 1];
    }
    params_.assign(n, 0.0);
    // He-uniform weights, zero biases.
    for (std::size_t l = 0; l < offsets_.size(); ++l) {
        const double bound = std::sqrt(6.0 / sizes_[l]);
        std::uniform_real_distribution<double> u(-bound, bound);
        const std::size_t w = static_cast<std::size_t>(sizes_[l]) * sizes_[l + 1];
        for (std::size_t k = 0; k < w; ++k) params_[offsets_[l].weight + k] = u(rng);
    }
}

Eigen::VectorXd Mlp::forward(std::span<const double> x) const {
    Tape tape;
    return forward(x, tape);
}

Eigen::VectorXd Mlp::forward(std::span<const double> x, Tape& tape) const {
    if (static_cast<int>(x.size()) != sizes_.front()) throw std::invalid_argument("Mlp input size mismatch");
    tape.activations.clear();
    tape.activations.emplace_back(Eigen::Map<const Eigen::VectorXd>(x.data(), static_cast<Eigen::Index>(x.size())));
    for (std::size_t l = 0; l < offsets_.size(); ++l) {
        Eigen::Map<const Eigen::MatrixXd> W(params_.data() + offsets_[l].weight, sizes_[l + 1], sizes_[l]);
        Eigen::Map<const Eigen::VectorXd> b(params_.data() + offsets_[l].bias, sizes_[l + 1]);
        Eigen::VectorXd z = W * tape.activations.back() + b;
        if (l + 1 < offsets_.size()) z = z.cwiseMax(0.0);
        tape.activations.push_back(std::move(z));
    }
    return tape.activations.back();
}

void Mlp::backward(const Tape& tape, const Eigen::VectorXd& upstream, std::span<double> grad) const {
    if (grad.size() != params_.size()) throw std::invalid_argument("Mlp gradient size mismatch");
    Eigen::VectorXd delta = upstream;
    for (std::size_t l = offsets_.size(); l-- > 0;) {
        const auto& in = tape.activations[l];
        Eigen::Map<Eigen::MatrixXd> gW(grad.data() + offsets_[l].weight, sizes_[l + 1], sizes_[l]);
        Eigen::Map<Eigen::VectorXd> gb(grad.data() + offsets_[l].bias, sizes_[l + 1]);
        gW.noalias() += delta * in.transpose();
        gb += delta;
        if (l == 0) break;
        Eigen::Map<const Eigen::MatrixXd> W(params_.data() + offsets_[l].weight, sizes_[l + 1], sizes_[l]);
        Eigen::VectorXd back = W.transpose() * delta;
        for (Eigen::Index k = 0; k < back.size(); ++k) {
            if (in[k] <= 0.0) back[k] = 0.0;
        }
        delta = std::move(back);
    }
}

Eigen::VectorXd softmax(const Eigen::VectorXd& logits) {
    Eigen::VectorXd e = (logits.array() - logits.maxCoeff()).exp();
    return e / e.sum();
}

}  // namespace sagin::nn
