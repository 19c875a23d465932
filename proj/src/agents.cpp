#include "sagin/agents.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace sagin::agents {

namespace {

bool all_zero(std::span<const double> v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return x == 0.0; });
}

// Device k's features encode on qubit k, whose bit schedules device k. Station features cycle over qubits.
std::vector<int> actor_feature_qubits(const env::Environment& e) {
    const int q = e.config().device_count();
    std::vector<int> out(e.observation_size());
    for (std::size_t f = 0; f < out.size(); ++f) {
        const int d = e.observation_device(f);
        out[f] = d < 0 ? static_cast<int>(f) % q : d;
    }
    return out;
}

std::vector<qc::FeatureRange> to_ranges(const std::vector<env::FeatureBounds>& b) {
    std::vector<qc::FeatureRange> r;
    r.reserve(b.size());
    for (const auto& f : b) r.push_back({f.min, f.max});
    return r;
}

void save_adam(Checkpoint& ck, const std::string& prefix, const nn::Adam& opt) {
    ck.put(prefix + "adam.m", opt.first_moment());
    ck.put(prefix + "adam.v", opt.second_moment());
    ck.put(prefix + "adam.t", static_cast<double>(opt.steps()));
}

void load_vec(const Checkpoint& ck, const std::string& key, std::span<double> out) {
    const auto& v = ck.vec(key);
    if (v.size() != out.size()) throw std::runtime_error("checkpoint: size mismatch for " + key);
    std::copy(v.begin(), v.end(), out.begin());
}

void load_adam(const Checkpoint& ck, const std::string& prefix, nn::Adam& opt) {
    load_vec(ck, prefix + "adam.m", opt.first_moment());
    load_vec(ck, prefix + "adam.v", opt.second_moment());
    opt.set_steps(static_cast<long>(ck.scalar(prefix + "adam.t")));
}

std::string rng_text(const std::mt19937_64& rng) {
    std::ostringstream os;
    os << rng;
    return os.str();
}

}  // namespace

// ---- names and config -------------------------------------------------------------------------

Algorithm parse_algorithm(std::string_view name) {
    if (name == "qmarl") return Algorithm::qmarl;
    if (name == "marl") return Algorithm::marl;
    if (name == "iql") return Algorithm::iql;
    if (name == "dqn") return Algorithm::dqn;
    if (name == "random") return Algorithm::random;
    throw std::invalid_argument("unknown algorithm: " + std::string(name));
}

std::string algorithm_name(Algorithm a) {
    switch (a) {
        case Algorithm::qmarl: return "qmarl";
        case Algorithm::marl: return "marl";
        case Algorithm::iql: return "iql";
        case Algorithm::dqn: return "dqn";
        case Algorithm::random: return "random";
    }
    return "?";
}

std::vector<std::string> algorithm_names() { return {"dqn", "iql", "marl", "qmarl", "random"}; }

void TrainingConfig::validate() const {
    if (!(gamma > 0.0 && gamma <= 1.0)) throw std::invalid_argument("training: gamma must be in (0, 1]");
    if (!(actor_rate > 0.0) || !(critic_rate > 0.0)) throw std::invalid_argument("training: rates must be positive");
    if (!(epsilon_min <= epsilon_init)) throw std::invalid_argument("training: epsilon_min exceeds epsilon_init");
    if (epsilon_min < 0.0 || epsilon_init > 1.0 || epsilon_anneal < 0.0) throw std::invalid_argument("training: bad epsilon schedule");
    if (batch_size < 1) throw std::invalid_argument("training: batch size must be positive");
    if (update_chunk < 1) throw std::invalid_argument("training: update chunk must be positive");
    if (epochs < 0) throw std::invalid_argument("training: epochs must be non-negative");
    if (seeds.empty()) throw std::invalid_argument("training: seed list is empty");
    if (actor_layers < 0 || critic_layers < 0 || critic_qubits < 1) throw std::invalid_argument("training: bad circuit shape");
    if (hidden < 1 || replay_capacity < 1 || target_sync < 1) throw std::invalid_argument("training: bad baseline shape");
    if (value_scale < 0.0) throw std::invalid_argument("training: value_scale must be non-negative");
}

double TrainingConfig::effective_value_scale() const {
    if (value_scale > 0.0) return value_scale;
    return gamma < 1.0 ? 1.0 / (1.0 - gamma) : 1.0;
}

// ---- checkpoint store -------------------------------------------------------------------------

void Checkpoint::put(const std::string& key, std::span<const double> values) {
    if (key.empty() || key.find_first_of(" \t\n") != std::string::npos) throw std::invalid_argument("checkpoint: bad key");
    vectors_[key].assign(values.begin(), values.end());
}

void Checkpoint::put_text(const std::string& key, const std::string& text) {
    if (key.empty() || key.find_first_of(" \t\n") != std::string::npos) throw std::invalid_argument("checkpoint: bad key");
    texts_[key] = text;
}

const std::vector<double>& Checkpoint::vec(const std::string& key) const {
    auto it = vectors_.find(key);
    if (it == vectors_.end()) throw std::runtime_error("checkpoint: missing " + key);
    return it->second;
}

double Checkpoint::scalar(const std::string& key) const {
    const auto& v = vec(key);
    if (v.size() != 1) throw std::runtime_error("checkpoint: " + key + " is not a scalar");
    return v[0];
}

const std::string& Checkpoint::text(const std::string& key) const {
    auto it = texts_.find(key);
    if (it == texts_.end()) throw std::runtime_error("checkpoint: missing " + key);
    return it->second;
}

bool Checkpoint::has(const std::string& key) const { return vectors_.count(key) > 0 || texts_.count(key) > 0; }

void Checkpoint::write(std::ostream& os) const {
    os << "sagin-checkpoint " << kVersion << '\n';
    char buf[32];
    for (const auto& [key, v] : vectors_) {
        os << "vec " << key << ' ' << v.size() << '\n';
        for (std::size_t k = 0; k < v.size(); ++k) {
            auto res = std::to_chars(buf, buf + sizeof buf, v[k]);
            os.write(buf, res.ptr - buf);
            os << ((k + 1 == v.size() || (k + 1) % 8 == 0) ? '\n' : ' ');
        }
    }
    for (const auto& [key, t] : texts_) {
        const auto lines = static_cast<std::size_t>(std::count(t.begin(), t.end(), '\n')) + (t.empty() || t.back() == '\n' ? 0 : 1);
        os << "text " << key << ' ' << lines << '\n' << t;
        if (!t.empty() && t.back() != '\n') os << '\n';
    }
    os << "end\n";
}

Checkpoint Checkpoint::read(std::istream& is) {
    std::string line;
    if (!std::getline(is, line)) throw std::runtime_error("checkpoint: empty input");
    {
        std::istringstream h(line);
        std::string magic;
        int version = 0;
        h >> magic >> version;
        if (magic != "sagin-checkpoint") throw std::runtime_error("checkpoint: bad header");
        if (version != kVersion) throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
    }
    Checkpoint ck;
    while (std::getline(is, line)) {
        if (line == "end") return ck;
        std::istringstream h(line);
        std::string kind, key;
        std::size_t n = 0;
        if (!(h >> kind >> key >> n)) throw std::runtime_error("checkpoint: bad record: " + line);
        if (kind == "vec") {
            std::vector<double> v;
            v.reserve(n);
            std::string tok;
            for (std::size_t k = 0; k < n; ++k) {
                if (!(is >> tok)) throw std::runtime_error("checkpoint: truncated " + key);
                double x = 0.0;
                auto res = std::from_chars(tok.data(), tok.data() + tok.size(), x);
                if (res.ec != std::errc() || res.ptr != tok.data() + tok.size()) throw std::runtime_error("checkpoint: bad number in " + key);
                v.push_back(x);
            }
            if (n > 0) is.ignore(std::numeric_limits<std::streamsize>::max(), '\n');
            ck.vectors_[key] = std::move(v);
        } else if (kind == "text") {
            std::string t;
            for (std::size_t k = 0; k < n; ++k) {
                if (!std::getline(is, line)) throw std::runtime_error("checkpoint: truncated " + key);
                t += line;
                t += '\n';
            }
            ck.texts_[key] = std::move(t);
        } else {
            throw std::runtime_error("checkpoint: unknown record " + kind);
        }
    }
    throw std::runtime_error("checkpoint: missing end marker");
}

std::string Checkpoint::str() const {
    std::ostringstream os;
    write(os);
    return os.str();
}

Checkpoint Checkpoint::parse(const std::string& text) {
    std::istringstream is(text);
    return read(is);
}

// ---- policies ---------------------------------------------------------------------------------

void Policy::save(Checkpoint& ck, const std::string& prefix) const {
    ck.put(prefix + "params", parameters());
    save_adam(ck, prefix, opt_);
}

void Policy::load(const Checkpoint& ck, const std::string& prefix) {
    load_vec(ck, prefix + "params", parameters());
    load_adam(ck, prefix, opt_);
}

QuantumActor::QuantumActor(int qubits, std::vector<qc::FeatureRange> ranges, int layers, bool reupload, double rate,
                           std::mt19937_64& rng, qc::ShiftRule rule, std::vector<int> feature_qubits)
    : rule_(rule) {
    qc::LayoutOptions o;
    o.qubits = qubits;
    o.features = static_cast<int>(ranges.size());
    o.layers = layers;
    o.reupload = reupload;
    o.feature_ranges = std::move(ranges);
    o.feature_qubits = std::move(feature_qubits);
    layout_ = qc::make_layout(o);
    params_ = qc::ParameterVector::random(static_cast<std::size_t>(layout_.slot_count), rng);
    opt_ = nn::Adam(params_.size(), rate);
}

QuantumActor::QuantumActor(qc::CircuitLayout layout, qc::ParameterVector params, double rate, qc::ShiftRule rule)
    : layout_(std::move(layout)), params_(std::move(params)), rule_(rule) {
    layout_.validate();
    if (params_.size() != static_cast<std::size_t>(layout_.slot_count)) throw qc::ShapeError("actor: parameter count mismatch");
    opt_ = nn::Adam(params_.size(), rate);
}

std::vector<double> QuantumActor::probabilities(std::span<const double> observation) const {
    return qc::basis_probabilities(qc::forward(layout_, params_, observation));
}

std::vector<double> QuantumActor::log_likelihood_gradient(std::span<const ActorSample> batch) const {
    std::vector<double> grad(params_.size(), 0.0);
    if (batch.empty()) return grad;
    const double inv_n = 1.0 / static_cast<double>(batch.size());
    qc::LinearObjective obj;
    obj.probability_weights.assign(action_count(), 0.0);
    for (const auto& s : batch) {
        if (s.advantage == 0.0) continue;
        if (s.action < 0 || static_cast<std::size_t>(s.action) >= action_count()) throw qc::IndexError("actor: action out of range");
        const double p = probabilities(s.observation)[static_cast<std::size_t>(s.action)];
        if (p < kProbabilityFloor) continue;  // log is flat below the clamp
        obj.probability_weights[static_cast<std::size_t>(s.action)] = s.advantage / p * inv_n;
        const auto g = qc::parameter_shift_gradient(layout_, params_, s.observation, obj, rule_);
        obj.probability_weights[static_cast<std::size_t>(s.action)] = 0.0;
        for (std::size_t k = 0; k < grad.size(); ++k) grad[k] += g[k];
    }
    return grad;
}

void QuantumActor::save(Checkpoint& ck, const std::string& prefix) const {
    Policy::save(ck, prefix);
    ck.put_text(prefix + "circuit", qc::to_manifest(layout_));
}

void QuantumActor::load(const Checkpoint& ck, const std::string& prefix) {
    if (ck.has(prefix + "circuit")) {
        const auto m = qc::parse_manifest(ck.text(prefix + "circuit"));
        if (m.layout.qubits != layout_.qubits || m.layout.slot_count != layout_.slot_count ||
            m.layout.ops.size() != layout_.ops.size())
            throw std::runtime_error("checkpoint: circuit layout does not match " + prefix);
    }
    Policy::load(ck, prefix);
}

std::vector<double> normalize(std::span<const double> x, std::span<const env::FeatureBounds> bounds) {
    if (x.size() != bounds.size()) throw qc::ShapeError("normalize: feature count mismatch");
    std::vector<double> out(x.size());
    for (std::size_t k = 0; k < x.size(); ++k) {
        const double span = bounds[k].max - bounds[k].min;
        out[k] = span > 0.0 ? std::clamp(2.0 * (x[k] - bounds[k].min) / span - 1.0, -1.0, 1.0) : 0.0;
    }
    return out;
}

SoftmaxActor::SoftmaxActor(int inputs, int actions, int hidden, std::vector<env::FeatureBounds> bounds, double rate,
                           std::mt19937_64& rng)
    : net_({inputs, hidden, hidden, actions}, rng), bounds_(std::move(bounds)) {
    if (static_cast<int>(bounds_.size()) != inputs) throw qc::ShapeError("softmax actor: bounds size mismatch");
    opt_ = nn::Adam(net_.parameter_count(), rate);
}

std::vector<double> SoftmaxActor::probabilities(std::span<const double> observation) const {
    const auto x = normalize(observation, bounds_);
    const Eigen::VectorXd p = nn::softmax(net_.forward(x));
    return {p.data(), p.data() + p.size()};
}

std::vector<double> SoftmaxActor::log_likelihood_gradient(std::span<const ActorSample> batch) const {
    std::vector<double> grad(net_.parameter_count(), 0.0);
    if (batch.empty()) return grad;
    const double inv_n = 1.0 / static_cast<double>(batch.size());
    nn::Mlp::Tape tape;
    for (const auto& s : batch) {
        if (s.advantage == 0.0) continue;
        if (s.action < 0 || s.action >= net_.output_size()) throw qc::IndexError("actor: action out of range");
        const auto x = normalize(s.observation, bounds_);
        const Eigen::VectorXd p = nn::softmax(net_.forward(x, tape));
        if (p[s.action] < kProbabilityFloor) continue;
        Eigen::VectorXd up = -p;
        up[s.action] += 1.0;
        net_.backward(tape, up * (s.advantage * inv_n), grad);
    }
    return grad;
}

std::vector<double> policy_probabilities(const Policy& actor, std::span<const double> observation) {
    return actor.probabilities(observation);
}

int select_action(std::span<const double> probabilities, std::mt19937_64& rng, bool greedy) {
    if (probabilities.empty()) throw qc::ShapeError("select_action: empty distribution");
    if (greedy) return static_cast<int>(std::max_element(probabilities.begin(), probabilities.end()) - probabilities.begin());
    const double total = std::accumulate(probabilities.begin(), probabilities.end(), 0.0);
    const double u = std::uniform_real_distribution<double>(0.0, total)(rng);
    double acc = 0.0;
    int last = 0;
    for (std::size_t k = 0; k < probabilities.size(); ++k) {
        if (probabilities[k] <= 0.0) continue;
        acc += probabilities[k];
        last = static_cast<int>(k);
        if (u < acc) return last;
    }
    return last;
}

int select_action(const Policy& actor, std::span<const double> observation, std::mt19937_64& rng, bool greedy) {
    return select_action(actor.probabilities(observation), rng, greedy);
}

std::vector<double> actor_update(Policy& actor, std::span<const ActorSample> batch) {
    if (batch.empty()) throw std::invalid_argument("actor_update: empty batch");
    auto grad = actor.log_likelihood_gradient(batch);
    if (all_zero(grad)) return grad;
    std::vector<double> descent(grad.size());
    std::transform(grad.begin(), grad.end(), descent.begin(), [](double g) { return -g; });
    actor.optimizer().step(actor.parameters(), descent);
    return grad;
}

// ---- critics ----------------------------------------------------------------------------------

void Critic::save(Checkpoint& ck, const std::string& prefix) const {
    ck.put(prefix + "params", parameters());
    save_adam(ck, prefix, opt_);
}

void Critic::load(const Checkpoint& ck, const std::string& prefix) {
    load_vec(ck, prefix + "params", parameters());
    load_adam(ck, prefix, opt_);
}

QuantumCritic::QuantumCritic(int qubits, int features, std::vector<qc::FeatureRange> ranges, int layers, double scale,
                             double rate, std::mt19937_64& rng, qc::ShiftRule rule)
    : scale_(scale), rule_(rule) {
    qc::LayoutOptions o;
    o.qubits = qubits;
    o.features = features;
    o.layers = layers;
    o.feature_ranges = std::move(ranges);
    layout_ = qc::make_layout(o);
    const auto theta = qc::ParameterVector::random(static_cast<std::size_t>(layout_.slot_count), rng);
    params_.assign(theta.values().begin(), theta.values().end());
    params_.resize(params_.size() + static_cast<std::size_t>(qubits) + 1, 0.0);
    opt_ = nn::Adam(params_.size(), rate);
}

double QuantumCritic::value(std::span<const double> state) const {
    const auto slots = static_cast<std::size_t>(layout_.slot_count);
    const qc::ParameterVector theta(std::vector<double>(params_.begin(), params_.begin() + static_cast<std::ptrdiff_t>(slots)));
    const auto z = qc::pauli_z_expectations(qc::forward(layout_, theta, state));
    double v = params_.back();
    for (std::size_t k = 0; k < z.size(); ++k) v += params_[slots + k] * z[k];
    return scale_ * v;
}

std::vector<double> QuantumCritic::value_gradient(std::span<const std::vector<double>> states,
                                                  std::span<const double> weights) const {
    if (states.size() != weights.size()) throw qc::ShapeError("critic: weights/states mismatch");
    const auto slots = static_cast<std::size_t>(layout_.slot_count);
    const auto nq = static_cast<std::size_t>(layout_.qubits);
    std::vector<double> grad(params_.size(), 0.0);
    const qc::ParameterVector theta(std::vector<double>(params_.begin(), params_.begin() + static_cast<std::ptrdiff_t>(slots)));
    const std::span<const double> w(params_.data() + slots, nq);
    const bool readout_zero = all_zero(w);
    for (std::size_t t = 0; t < states.size(); ++t) {
        const double g = weights[t] * scale_;
        if (g == 0.0) continue;
        const auto z = qc::pauli_z_expectations(qc::forward(layout_, theta, states[t]));
        for (std::size_t k = 0; k < nq; ++k) grad[slots + k] += g * z[k];
        grad.back() += g;
        if (readout_zero || slots == 0) continue;
        qc::LinearObjective obj;
        obj.z_weights.resize(nq);
        for (std::size_t k = 0; k < nq; ++k) obj.z_weights[k] = g * w[k];
        const auto gs = qc::parameter_shift_gradient(layout_, theta, states[t], obj, rule_);
        for (std::size_t k = 0; k < slots; ++k) grad[k] += gs[k];
    }
    return grad;
}

void QuantumCritic::save(Checkpoint& ck, const std::string& prefix) const {
    Critic::save(ck, prefix);
    ck.put_text(prefix + "circuit", qc::to_manifest(layout_));
}

ClassicalCritic::ClassicalCritic(std::vector<env::FeatureBounds> bounds, int hidden, double scale, double rate,
                                 std::mt19937_64& rng)
    : net_({static_cast<int>(bounds.size()), hidden, hidden, 1}, rng), bounds_(std::move(bounds)), scale_(scale) {
    opt_ = nn::Adam(net_.parameter_count(), rate);
}

double ClassicalCritic::value(std::span<const double> state) const {
    return scale_ * net_.forward(normalize(state, bounds_))[0];
}

std::vector<double> ClassicalCritic::value_gradient(std::span<const std::vector<double>> states,
                                                    std::span<const double> weights) const {
    if (states.size() != weights.size()) throw qc::ShapeError("critic: weights/states mismatch");
    std::vector<double> grad(net_.parameter_count(), 0.0);
    nn::Mlp::Tape tape;
    for (std::size_t t = 0; t < states.size(); ++t) {
        if (weights[t] == 0.0) continue;
        net_.forward(normalize(states[t], bounds_), tape);
        net_.backward(tape, Eigen::VectorXd::Constant(1, weights[t] * scale_), grad);
    }
    return grad;
}

double td_error(double reward, double value, double next_value, double gamma, bool done) {
    return reward + (done ? 0.0 : gamma * next_value) - value;
}

double td_error(const Critic& critic, const CriticSample& s, double gamma) {
    const double next = s.done ? 0.0 : critic.value(s.next_state);
    return td_error(s.reward, critic.value(s.state), next, gamma, s.done);
}

double critic_update(Critic& critic, std::span<const CriticSample> batch, double gamma) {
    if (batch.empty()) throw std::invalid_argument("critic_update: empty batch");
    const double inv_n = 1.0 / static_cast<double>(batch.size());
    std::vector<std::vector<double>> states;
    std::vector<double> weights;
    double loss = 0.0;
    for (const auto& s : batch) {
        const double d = td_error(critic, s, gamma);
        loss += d * d * inv_n;
        states.push_back(s.state);
        weights.push_back(-2.0 * d * inv_n);
    }
    const auto grad = critic.value_gradient(states, weights);
    if (!all_zero(grad)) critic.optimizer().step(critic.parameters(), grad);
    return loss;
}

double epsilon(long step, const TrainingConfig& cfg) {
    if (step < 0) throw std::invalid_argument("epsilon: negative step");
    return std::max(cfg.epsilon_min, cfg.epsilon_init - cfg.epsilon_anneal * static_cast<double>(step));
}

// ---- Q learners -------------------------------------------------------------------------------

QLearner::QLearner(std::vector<env::FeatureBounds> bounds, int actions, int hidden, double rate, std::mt19937_64& rng)
    : net_({static_cast<int>(bounds.size()), hidden, hidden, actions}, rng), target_(net_), bounds_(std::move(bounds)),
      opt_(net_.parameter_count(), rate) {}

std::vector<double> QLearner::q_values(std::span<const double> observation) const {
    const Eigen::VectorXd q = net_.forward(normalize(observation, bounds_));
    return {q.data(), q.data() + q.size()};
}

std::vector<double> QLearner::target_values(std::span<const double> observation) const {
    const Eigen::VectorXd q = target_.forward(normalize(observation, bounds_));
    return {q.data(), q.data() + q.size()};
}

int QLearner::act(std::span<const double> observation, double eps, std::mt19937_64& rng) const {
    if (std::uniform_real_distribution<double>(0.0, 1.0)(rng) < eps) return random_policy(action_count(), rng);
    const auto q = q_values(observation);
    return static_cast<int>(std::max_element(q.begin(), q.end()) - q.begin());
}

double QLearner::update(std::span<const Sample> batch, double gamma, bool use_target) {
    if (batch.empty()) throw std::invalid_argument("q update: empty batch");
    const double inv_n = 1.0 / static_cast<double>(batch.size());
    std::vector<double> grad(net_.parameter_count(), 0.0);
    nn::Mlp::Tape tape;
    double loss = 0.0;
    for (const auto& s : batch) {
        double y = s.reward;
        if (!s.done) {
            const auto next = use_target ? target_values(s.next_observation) : q_values(s.next_observation);
            y += gamma * *std::max_element(next.begin(), next.end());
        }
        const Eigen::VectorXd q = net_.forward(normalize(s.observation, bounds_), tape);
        const double err = q[s.action] - y;
        loss += err * err * inv_n;
        Eigen::VectorXd up = Eigen::VectorXd::Zero(q.size());
        up[s.action] = 2.0 * err * inv_n;
        net_.backward(tape, up, grad);
    }
    if (!all_zero(grad)) opt_.step(net_.parameters(), grad);
    return loss;
}

void QLearner::sync_target() { target_ = net_; }

void QLearner::save(Checkpoint& ck, const std::string& prefix) const {
    ck.put(prefix + "params", net_.parameters());
    ck.put(prefix + "target", target_.parameters());
    save_adam(ck, prefix, opt_);
}

void QLearner::load(const Checkpoint& ck, const std::string& prefix) {
    load_vec(ck, prefix + "params", net_.parameters());
    load_vec(ck, prefix + "target", target_.parameters());
    load_adam(ck, prefix, opt_);
}

int random_policy(std::size_t actions, std::mt19937_64& rng) {
    if (actions == 0) throw qc::ShapeError("random_policy: no actions");
    return static_cast<int>(std::uniform_int_distribution<std::size_t>(0, actions - 1)(rng));
}

// ---- trainer ----------------------------------------------------------------------------------

namespace {

std::vector<env::ScheduleAction> to_actions(const std::vector<int>& a) {
    std::vector<env::ScheduleAction> out;
    out.reserve(a.size());
    for (int k : a) out.push_back(env::ScheduleAction{static_cast<std::uint64_t>(k)});
    return out;
}

struct EpisodeTally {
    double reward = 0.0, reference = 0.0, qos = 0.0, capacity = 0.0;
    int links = 0, station_steps = 0;

    void add(const env::StepResult& res) {
        for (const auto& r : res.rewards) {
            reward += r.reward;
            reference += r.reference_utility;
            for (const auto& l : r.links) {
                if (l.selected) qos += l.quality, ++links;
            }
            capacity += r.capacity_limit > 0.0 ? std::min(1.0, r.delivered / r.capacity_limit) : 0.0;
            ++station_steps;
        }
    }

    EpochMetrics finish(int epoch, const env::SaginState& s) const {
        EpochMetrics m;
        m.epoch = epoch;
        m.reward = reward;
        m.normalized_reward = reference > 0.0 ? std::clamp(reward / reference, 0.0, 1.0) : 0.0;
        m.qos = links > 0 ? qos / links : 0.0;
        m.capacity = station_steps > 0 ? capacity / station_steps : 0.0;
        int nc = 0, nu = 0;
        for (const auto& d : s.devices) {
            if (d.kind == env::DeviceKind::CubeSat) m.residual_cubesat += d.energy_fraction(), ++nc;
            else m.residual_uav += d.energy_fraction(), ++nu;
        }
        if (nc) m.residual_cubesat /= nc;
        if (nu) m.residual_uav /= nu;
        return m;
    }
};

}  // namespace

Trainer::Trainer(env::ScenarioConfig scenario, Algorithm algo, TrainingConfig cfg, std::uint64_t seed)
    : scenario_(std::move(scenario)), algo_(algo), cfg_(std::move(cfg)), seed_(seed), env_(scenario_), rng_(seed) {
    cfg_.validate();
    const int gs = env_.gs_count();
    const int q = env_.action_bits();
    if (q > 20 && algo_ != Algorithm::random && algo_ != Algorithm::qmarl)
        throw std::invalid_argument("trainer: too many action bits for a dense classical head");
    const auto actions = std::size_t{1} << q;
    const auto obs_bounds = env_.observation_bounds();
    const double scale = cfg_.effective_value_scale();

    switch (algo_) {
        case Algorithm::qmarl:
        case Algorithm::marl:
            for (int i = 0; i < gs; ++i) {
                if (algo_ == Algorithm::qmarl)
                    actors_.push_back(std::make_unique<QuantumActor>(q, to_ranges(obs_bounds), cfg_.actor_layers, cfg_.reupload,
                                                                     cfg_.actor_rate, rng_, cfg_.shift_rule,
                                                                     actor_feature_qubits(env_)));
                else
                    actors_.push_back(std::make_unique<SoftmaxActor>(static_cast<int>(obs_bounds.size()), static_cast<int>(actions),
                                                                     cfg_.hidden, obs_bounds, cfg_.actor_rate, rng_));
            }
            if (cfg_.critic == CriticKind::quantum) {
                const auto sb = env_.state_bounds();
                critic_ = std::make_unique<QuantumCritic>(cfg_.critic_qubits, static_cast<int>(sb.size()), to_ranges(sb),
                                                          cfg_.critic_layers, scale, cfg_.critic_rate, rng_, cfg_.shift_rule);
            } else {
                critic_ = std::make_unique<ClassicalCritic>(env_.state_bounds(), cfg_.hidden, scale, cfg_.critic_rate, rng_);
            }
            break;
        case Algorithm::iql:
        case Algorithm::dqn:
            for (int i = 0; i < gs; ++i)
                learners_.emplace_back(obs_bounds, static_cast<int>(actions), cfg_.hidden, cfg_.critic_rate, rng_);
            replay_.resize(static_cast<std::size_t>(gs));
            break;
        case Algorithm::random:
            break;
    }
}

Trainer::~Trainer() = default;

const Policy* Trainer::policy(int gs) const {
    if (gs < 0 || static_cast<std::size_t>(gs) >= actors_.size()) return nullptr;
    return actors_[static_cast<std::size_t>(gs)].get();
}

EpochMetrics Trainer::run_epoch(std::ostream* step_csv) {
    return (algo_ == Algorithm::iql || algo_ == Algorithm::dqn) ? q_epoch(step_csv) : actor_critic_epoch(step_csv);
}

EpochMetrics Trainer::actor_critic_epoch(std::ostream* step_csv) {
    env_.reset(rng_());
    std::mt19937_64 act(rng_());
    const int gs = env_.gs_count();
    const std::size_t actions = std::size_t{1} << env_.action_bits();

    std::vector<CriticSample> critic_batch;
    std::vector<std::vector<ActorSample>> actor_batch(static_cast<std::size_t>(gs));
    EpisodeTally tally;
    int t = 0;
    while (!env_.state().done) {
        CriticSample cs;
        cs.state = env_.state_features();
        std::vector<int> chosen(static_cast<std::size_t>(gs));
        for (int i = 0; i < gs; ++i) {
            auto obs = env_.observation(i);
            const int a = algo_ == Algorithm::random ? random_policy(actions, act)
                                                     : select_action(*actors_[static_cast<std::size_t>(i)], obs, act);
            chosen[static_cast<std::size_t>(i)] = a;
            actor_batch[static_cast<std::size_t>(i)].push_back({std::move(obs), a, 0.0});
        }
        const auto res = env_.step(to_actions(chosen));
        tally.add(res);
        if (step_csv) env::write_step_rows(*step_csv, epoch_, t, env_.state(), res);
        for (const auto& r : res.rewards) cs.reward += r.reward;
        cs.next_state = env_.state_features();
        cs.done = res.done;
        critic_batch.push_back(std::move(cs));
        ++t;
        ++global_step_;
    }

    double loss = 0.0;
    if (algo_ != Algorithm::random && !critic_batch.empty()) {
        const std::size_t n = critic_batch.size();
        const auto b = static_cast<std::size_t>(cfg_.update_chunk);
        int chunks = 0;
        for (std::size_t lo = 0; lo < n; lo += b, ++chunks) {
            const std::span<const CriticSample> chunk(critic_batch.data() + lo, std::min(b, n - lo));
            loss += critic_update(*critic_, chunk, cfg_.gamma);
        }
        loss /= chunks;
        // One shared delta per step, from the updated critic.
        for (std::size_t k = 0; k < n; ++k) {
            const double d = td_error(*critic_, critic_batch[k], cfg_.gamma);
            for (auto& ab : actor_batch) ab[k].advantage = d;
        }
        for (int i = 0; i < gs; ++i) {
            auto& ab = actor_batch[static_cast<std::size_t>(i)];
            for (std::size_t lo = 0; lo < n; lo += b) {
                actor_update(*actors_[static_cast<std::size_t>(i)], std::span<const ActorSample>(ab.data() + lo, std::min(b, n - lo)));
            }
        }
    }
    auto m = tally.finish(epoch_, env_.state());
    m.critic_loss = loss;
    ++epoch_;
    return m;
}

EpochMetrics Trainer::q_epoch(std::ostream* step_csv) {
    env_.reset(rng_());
    std::mt19937_64 act(rng_());
    const int gs = env_.gs_count();
    const bool dqn = algo_ == Algorithm::dqn;
    EpisodeTally tally;
    double loss = 0.0;
    int updates = 0;
    int t = 0;
    while (!env_.state().done) {
        const double eps = epsilon(global_step_, cfg_);
        std::vector<std::vector<double>> obs(static_cast<std::size_t>(gs));
        std::vector<int> chosen(static_cast<std::size_t>(gs));
        for (int i = 0; i < gs; ++i) {
            obs[static_cast<std::size_t>(i)] = env_.observation(i);
            chosen[static_cast<std::size_t>(i)] = learners_[static_cast<std::size_t>(i)].act(obs[static_cast<std::size_t>(i)], eps, act);
        }
        const auto res = env_.step(to_actions(chosen));
        tally.add(res);
        if (step_csv) env::write_step_rows(*step_csv, epoch_, t, env_.state(), res);
        for (int i = 0; i < gs; ++i) {
            const auto ui = static_cast<std::size_t>(i);
            QLearner::Sample s{std::move(obs[ui]), chosen[ui], res.rewards[ui].reward, env_.observation(i), res.done};
            if (!dqn) {
                loss += learners_[ui].update(std::span<const QLearner::Sample>(&s, 1), cfg_.gamma, false);
                ++updates;
                continue;
            }
            auto& buf = replay_[ui];
            buf.push_back(std::move(s));
            if (buf.size() > static_cast<std::size_t>(cfg_.replay_capacity)) buf.pop_front();
            if (buf.size() < static_cast<std::size_t>(cfg_.batch_size)) continue;
            std::vector<QLearner::Sample> batch;
            batch.reserve(static_cast<std::size_t>(cfg_.batch_size));
            std::uniform_int_distribution<std::size_t> pick(0, buf.size() - 1);
            for (int k = 0; k < cfg_.batch_size; ++k) batch.push_back(buf[pick(act)]);
            loss += learners_[ui].update(batch, cfg_.gamma, true);
            ++updates;
        }
        if (dqn && updates > 0) {
            ++q_updates_;
            if (q_updates_ % cfg_.target_sync == 0) {
                for (auto& l : learners_) l.sync_target();
            }
        }
        ++t;
        ++global_step_;
    }
    auto m = tally.finish(epoch_, env_.state());
    m.critic_loss = updates > 0 ? loss / updates : 0.0;
    ++epoch_;
    return m;
}

Checkpoint Trainer::checkpoint() const {
    Checkpoint ck;
    ck.put_text("algorithm", algorithm_name(algo_) + "\n");
    ck.put_text("scenario", scenario_.name + "\n");
    ck.put_text("rng", rng_text(rng_) + "\n");
    ck.put("epoch", static_cast<double>(epoch_));
    ck.put("global_step", static_cast<double>(global_step_));
    ck.put("q_updates", static_cast<double>(q_updates_));
    for (std::size_t i = 0; i < actors_.size(); ++i) actors_[i]->save(ck, "actor" + std::to_string(i) + ".");
    if (critic_) critic_->save(ck, "critic.");
    for (std::size_t i = 0; i < learners_.size(); ++i) learners_[i].save(ck, "q" + std::to_string(i) + ".");
    for (std::size_t i = 0; i < replay_.size(); ++i) {
        const std::string p = "replay" + std::to_string(i) + ".";
        std::vector<double> obs, next, action, reward, done;
        for (const auto& s : replay_[i]) {
            obs.insert(obs.end(), s.observation.begin(), s.observation.end());
            next.insert(next.end(), s.next_observation.begin(), s.next_observation.end());
            action.push_back(s.action);
            reward.push_back(s.reward);
            done.push_back(s.done ? 1.0 : 0.0);
        }
        ck.put(p + "obs", obs);
        ck.put(p + "next", next);
        ck.put(p + "action", action);
        ck.put(p + "reward", reward);
        ck.put(p + "done", done);
    }
    return ck;
}

void Trainer::restore(const Checkpoint& ck) {
    if (ck.text("algorithm") != algorithm_name(algo_) + "\n") throw std::runtime_error("checkpoint: algorithm mismatch");
    if (ck.text("scenario") != scenario_.name + "\n") throw std::runtime_error("checkpoint: scenario mismatch");
    std::istringstream(ck.text("rng")) >> rng_;
    epoch_ = static_cast<int>(ck.scalar("epoch"));
    global_step_ = static_cast<long>(ck.scalar("global_step"));
    q_updates_ = static_cast<long>(ck.scalar("q_updates"));
    for (std::size_t i = 0; i < actors_.size(); ++i) actors_[i]->load(ck, "actor" + std::to_string(i) + ".");
    if (critic_) critic_->load(ck, "critic.");
    for (std::size_t i = 0; i < learners_.size(); ++i) learners_[i].load(ck, "q" + std::to_string(i) + ".");
    const std::size_t width = env_.observation_size();
    for (std::size_t i = 0; i < replay_.size(); ++i) {
        const std::string p = "replay" + std::to_string(i) + ".";
        const auto& obs = ck.vec(p + "obs");
        const auto& next = ck.vec(p + "next");
        const auto& action = ck.vec(p + "action");
        const auto& reward = ck.vec(p + "reward");
        const auto& done = ck.vec(p + "done");
        const std::size_t n = action.size();
        if (obs.size() != n * width || next.size() != n * width || reward.size() != n || done.size() != n)
            throw std::runtime_error("checkpoint: replay buffer shape mismatch");
        replay_[i].clear();
        for (std::size_t k = 0; k < n; ++k) {
            QLearner::Sample s;
            s.observation.assign(obs.begin() + static_cast<std::ptrdiff_t>(k * width), obs.begin() + static_cast<std::ptrdiff_t>((k + 1) * width));
            s.next_observation.assign(next.begin() + static_cast<std::ptrdiff_t>(k * width), next.begin() + static_cast<std::ptrdiff_t>((k + 1) * width));
            s.action = static_cast<int>(action[k]);
            s.reward = reward[k];
            s.done = done[k] != 0.0;
            replay_[i].push_back(std::move(s));
        }
    }
}

void Trainer::save(const std::string& path) const {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream os(tmp);
        if (!os) throw std::runtime_error("cannot write checkpoint: " + tmp);
        checkpoint().write(os);
        if (!os) throw std::runtime_error("checkpoint write failed: " + tmp);
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0) throw std::runtime_error("cannot move checkpoint into place: " + path);
}

void Trainer::load(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot read checkpoint: " + path);
    restore(Checkpoint::read(is));
}

std::vector<EpochMetrics> train(const env::ScenarioConfig& scenario, Algorithm algo, const TrainingConfig& cfg,
                                std::uint64_t seed, std::ostream* step_csv) {
    Trainer trainer(scenario, algo, cfg, seed);
    std::vector<EpochMetrics> history;
    history.reserve(static_cast<std::size_t>(cfg.epochs));
    for (int e = 0; e < cfg.epochs; ++e) history.push_back(trainer.run_epoch(step_csv));
    return history;
}

}  // namespace sagin::agents
