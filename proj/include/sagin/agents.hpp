#pragma once

#include <cstdint>
#include <deque>
#include <iosfwd>
#include <map>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sagin/env.hpp"
#include "sagin/nn.hpp"
#include "sagin/qcircuit.hpp"

namespace sagin::agents {

enum class Algorithm { qmarl, marl, iql, dqn, random };
enum class CriticKind { quantum, classical };

Algorithm parse_algorithm(std::string_view name);
std::string algorithm_name(Algorithm a);
std::vector<std::string> algorithm_names();

struct TrainingConfig {
    double gamma = 0.98;
    int batch_size = 64;    // DQN replay sample
    int update_chunk = 1;   // actor-critic steps per optimizer update; episode_length gives one update per episode
    double epsilon_init = 0.275;
    double epsilon_min = 1e-2;
    double epsilon_anneal = 5e-5;  // per environment step
    double actor_rate = 1e-3;
    double critic_rate = 2.5e-4;
    int epochs = 10000;
    std::vector<std::uint64_t> seeds{0};

    int actor_layers = 3;
    bool reupload = true;  // actor encoder repeated before each layer
    qc::ShiftRule shift_rule = qc::ShiftRule::Half;
    CriticKind critic = CriticKind::quantum;
    int critic_qubits = 4;
    int critic_layers = 3;
    /// Multiplier on the critic's raw output. 0 selects 1/(1 - gamma), or 1 when gamma == 1.
    double value_scale = 0.0;
    int hidden = 64;
    int replay_capacity = 10000;
    int target_sync = 100;  // DQN gradient steps between target snapshots

    void validate() const;
    double effective_value_scale() const;
};

/// Key/value store behind checkpoint files. Numbers are written in shortest round-trip form.
class Checkpoint {
public:
    static constexpr int kVersion = 1;

    void put(const std::string& key, std::span<const double> values);
    void put(const std::string& key, double value) { put(key, std::span<const double>(&value, 1)); }
    void put_text(const std::string& key, const std::string& text);

    const std::vector<double>& vec(const std::string& key) const;
    double scalar(const std::string& key) const;
    const std::string& text(const std::string& key) const;
    bool has(const std::string& key) const;

    void write(std::ostream& os) const;
    static Checkpoint read(std::istream& is);
    std::string str() const;
    static Checkpoint parse(const std::string& text);

private:
    std::map<std::string, std::vector<double>> vectors_;
    std::map<std::string, std::string> texts_;
};

/// Per-step sample for a policy update.
struct ActorSample {
    std::vector<double> observation;
    int action = 0;
    double advantage = 0.0;  // delta
};

/// A stochastic policy over 2^q joint scheduling patterns.
class Policy {
public:
    virtual ~Policy() = default;
    virtual std::size_t action_count() const = 0;
    virtual std::vector<double> probabilities(std::span<const double> observation) const = 0;
    /// Gradient of mean_t advantage_t * log max(pi(a_t | o_t), 1e-12).
    virtual std::vector<double> log_likelihood_gradient(std::span<const ActorSample> batch) const = 0;
    virtual std::span<double> parameters() = 0;
    virtual std::span<const double> parameters() const = 0;
    nn::Adam& optimizer() { return opt_; }
    const nn::Adam& optimizer() const { return opt_; }
    virtual void save(Checkpoint& ck, const std::string& prefix) const;
    virtual void load(const Checkpoint& ck, const std::string& prefix);

protected:
    nn::Adam opt_;
};

inline constexpr double kProbabilityFloor = 1e-12;

/// Quantum actor: one qubit per device slot, PVM readout over all basis states.
class QuantumActor : public Policy {
public:
    /// feature_qubits picks the encoding qubit per feature; empty cycles features over qubits.
    QuantumActor(int qubits, std::vector<qc::FeatureRange> ranges, int layers, bool reupload, double rate,
                 std::mt19937_64& rng, qc::ShiftRule rule = qc::ShiftRule::Half, std::vector<int> feature_qubits = {});
    /// Adopts an explicit layout and parameters.
    QuantumActor(qc::CircuitLayout layout, qc::ParameterVector params, double rate,
                 qc::ShiftRule rule = qc::ShiftRule::Half);

    std::size_t action_count() const override { return std::size_t{1} << layout_.qubits; }
    std::vector<double> probabilities(std::span<const double> observation) const override;
    std::vector<double> log_likelihood_gradient(std::span<const ActorSample> batch) const override;
    std::span<double> parameters() override { return params_.values(); }
    std::span<const double> parameters() const override { return params_.values(); }
    void save(Checkpoint& ck, const std::string& prefix) const override;
    void load(const Checkpoint& ck, const std::string& prefix) override;

    const qc::CircuitLayout& layout() const { return layout_; }
    const qc::ParameterVector& params() const { return params_; }
    int qubits() const { return layout_.qubits; }

private:
    qc::CircuitLayout layout_;
    qc::ParameterVector params_;
    qc::ShiftRule rule_;
};

/// Classical actor: ReLU network with a normalized-exponential head.
class SoftmaxActor : public Policy {
public:
    SoftmaxActor(int inputs, int actions, int hidden, std::vector<env::FeatureBounds> bounds, double rate,
                 std::mt19937_64& rng);

    std::size_t action_count() const override { return static_cast<std::size_t>(net_.output_size()); }
    std::vector<double> probabilities(std::span<const double> observation) const override;
    std::vector<double> log_likelihood_gradient(std::span<const ActorSample> batch) const override;
    std::span<double> parameters() override { return net_.parameters(); }
    std::span<const double> parameters() const override { return net_.parameters(); }

private:
    nn::Mlp net_;
    std::vector<env::FeatureBounds> bounds_;
};

/// Rescales features onto [-1, 1] using their bounds.
std::vector<double> normalize(std::span<const double> x, std::span<const env::FeatureBounds> bounds);

std::vector<double> policy_probabilities(const Policy& actor, std::span<const double> observation);
/// Inverse-CDF draw, or the first argmax when greedy.
int select_action(std::span<const double> probabilities, std::mt19937_64& rng, bool greedy = false);
int select_action(const Policy& actor, std::span<const double> observation, std::mt19937_64& rng, bool greedy = false);

/// Ascends mean advantage * log pi. Returns the applied gradient.
std::vector<double> actor_update(Policy& actor, std::span<const ActorSample> batch);

struct CriticSample {
    std::vector<double> state;
    std::vector<double> next_state;
    double reward = 0.0;
    bool done = false;
};

class Critic {
public:
    virtual ~Critic() = default;
    virtual double value(std::span<const double> state) const = 0;
    /// sum_t weights[t] * dV(states[t])/dparams.
    virtual std::vector<double> value_gradient(std::span<const std::vector<double>> states,
                                               std::span<const double> weights) const = 0;
    virtual std::span<double> parameters() = 0;
    virtual std::span<const double> parameters() const = 0;
    nn::Adam& optimizer() { return opt_; }
    const nn::Adam& optimizer() const { return opt_; }
    virtual void save(Checkpoint& ck, const std::string& prefix) const;
    virtual void load(const Checkpoint& ck, const std::string& prefix);

protected:
    nn::Adam opt_;
};

/// V(s) = scale * (sum_k w_k <Z_k> + b) over an encoder-plus-layers circuit. Parameters: slots, then w, then b.
class QuantumCritic : public Critic {
public:
    QuantumCritic(int qubits, int features, std::vector<qc::FeatureRange> ranges, int layers, double scale,
                  double rate, std::mt19937_64& rng, qc::ShiftRule rule = qc::ShiftRule::Half);

    double value(std::span<const double> state) const override;
    std::vector<double> value_gradient(std::span<const std::vector<double>> states,
                                       std::span<const double> weights) const override;
    std::span<double> parameters() override { return params_; }
    std::span<const double> parameters() const override { return params_; }
    void save(Checkpoint& ck, const std::string& prefix) const override;

    const qc::CircuitLayout& layout() const { return layout_; }
    double scale() const { return scale_; }

private:
    qc::CircuitLayout layout_;
    std::vector<double> params_;
    double scale_;
    qc::ShiftRule rule_;
};

/// V(s) = scale * mlp(normalized s).
class ClassicalCritic : public Critic {
public:
    ClassicalCritic(std::vector<env::FeatureBounds> bounds, int hidden, double scale, double rate, std::mt19937_64& rng);

    double value(std::span<const double> state) const override;
    std::vector<double> value_gradient(std::span<const std::vector<double>> states,
                                       std::span<const double> weights) const override;
    std::span<double> parameters() override { return net_.parameters(); }
    std::span<const double> parameters() const override { return net_.parameters(); }

private:
    nn::Mlp net_;
    std::vector<env::FeatureBounds> bounds_;
    double scale_;
};

double td_error(double reward, double value, double next_value, double gamma, bool done);
double td_error(const Critic& critic, const CriticSample& sample, double gamma);

/// Semi-gradient descent on mean delta^2. Returns the mean delta^2 before the step.
double critic_update(Critic& critic, std::span<const CriticSample> batch, double gamma);

double epsilon(long step, const TrainingConfig& cfg);

/// Action-value network with optional target snapshot, for IQL and DQN.
class QLearner {
public:
    QLearner(std::vector<env::FeatureBounds> bounds, int actions, int hidden, double rate, std::mt19937_64& rng);

    std::vector<double> q_values(std::span<const double> observation) const;
    std::vector<double> target_values(std::span<const double> observation) const;
    int act(std::span<const double> observation, double eps, std::mt19937_64& rng) const;

    struct Sample {
        std::vector<double> observation;
        int action = 0;
        double reward = 0.0;
        std::vector<double> next_observation;
        bool done = false;
    };
    /// One descent step on mean squared TD error; bootstraps from the target network when `use_target`.
    double update(std::span<const Sample> batch, double gamma, bool use_target);
    void sync_target();

    std::size_t action_count() const { return static_cast<std::size_t>(net_.output_size()); }
    std::span<double> parameters() { return net_.parameters(); }
    nn::Adam& optimizer() { return opt_; }
    void save(Checkpoint& ck, const std::string& prefix) const;
    void load(const Checkpoint& ck, const std::string& prefix);

private:
    nn::Mlp net_;
    nn::Mlp target_;
    std::vector<env::FeatureBounds> bounds_;
    nn::Adam opt_;
};

int random_policy(std::size_t actions, std::mt19937_64& rng);

struct EpochMetrics {
    int epoch = 0;
    double reward = 0.0;             // team reward summed over the episode
    double normalized_reward = 0.0;  // episode reward over the per-step best feasible utility, clamped to [0, 1]
    double qos = 0.0;
    double capacity = 0.0;
    double residual_cubesat = 0.0;
    double residual_uav = 0.0;
    double critic_loss = 0.0;
};

/// Rolls out one episode per epoch and applies the algorithm's updates.
class Trainer {
public:
    Trainer(env::ScenarioConfig scenario, Algorithm algo, TrainingConfig cfg, std::uint64_t seed);
    ~Trainer();
    Trainer(const Trainer&) = delete;
    Trainer& operator=(const Trainer&) = delete;

    EpochMetrics run_epoch(std::ostream* step_csv = nullptr);
    int epoch() const { return epoch_; }
    long global_step() const { return global_step_; }
    Algorithm algorithm() const { return algo_; }
    const env::Environment& environment() const { return env_; }

    const Policy* policy(int gs) const;
    const Critic* critic() const { return critic_.get(); }

    Checkpoint checkpoint() const;
    void restore(const Checkpoint& ck);
    void save(const std::string& path) const;
    void load(const std::string& path);

private:
    EpochMetrics actor_critic_epoch(std::ostream* step_csv);
    EpochMetrics q_epoch(std::ostream* step_csv);

    env::ScenarioConfig scenario_;
    Algorithm algo_;
    TrainingConfig cfg_;
    std::uint64_t seed_;
    env::Environment env_;
    std::mt19937_64 rng_;
    int epoch_ = 0;
    long global_step_ = 0;
    long q_updates_ = 0;

    std::vector<std::unique_ptr<Policy>> actors_;
    std::unique_ptr<Critic> critic_;
    std::vector<QLearner> learners_;
    std::vector<std::deque<QLearner::Sample>> replay_;
};

/// Runs `cfg.epochs` epochs from scratch.
std::vector<EpochMetrics> train(const env::ScenarioConfig& scenario, Algorithm algo, const TrainingConfig& cfg,
                                std::uint64_t seed, std::ostream* step_csv = nullptr);

}  // namespace sagin::agents
