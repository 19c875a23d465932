#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "sagin/agents.hpp"
#include "sagin/scenario.hpp"

using namespace sagin;
using namespace sagin::agents;

namespace {

qc::CircuitLayout plain_layout(int qubits, int features, int layers, bool reupload = false) {
    qc::LayoutOptions o;
    o.qubits = qubits;
    o.features = features;
    o.layers = layers;
    o.reupload = reupload;
    return qc::make_layout(o);
}

std::vector<double> random_vector(std::size_t n, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> u(lo, hi);
    std::vector<double> v(n);
    for (auto& x : v) x = u(rng);
    return v;
}

// Within 3 sigma of a multinomial cell.
bool frequency_ok(int count, int draws, double p) {
    const double sigma = std::sqrt(draws * p * (1 - p));
    return std::abs(count - draws * p) <= 3 * sigma;
}

double cosine_distance(const std::vector<double>& a, const std::vector<double>& b) {
    const double dot = std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
    const double na = std::sqrt(std::inner_product(a.begin(), a.end(), a.begin(), 0.0));
    const double nb = std::sqrt(std::inner_product(b.begin(), b.end(), b.begin(), 0.0));
    return 1.0 - dot / (na * nb);
}

bool same_history(const std::vector<EpochMetrics>& a, const std::vector<EpochMetrics>& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t k = 0; k < a.size(); ++k) {
        if (a[k].reward != b[k].reward || a[k].normalized_reward != b[k].normalized_reward || a[k].qos != b[k].qos ||
            a[k].capacity != b[k].capacity || a[k].residual_cubesat != b[k].residual_cubesat ||
            a[k].residual_uav != b[k].residual_uav || a[k].critic_loss != b[k].critic_loss)
            return false;
    }
    return true;
}

TrainingConfig quick_config(int epochs) {
    TrainingConfig tc;
    tc.epochs = epochs;
    return tc;
}

}  // namespace

TEST_CASE("adam") {
    nn::Adam opt(3, 0.1);
    std::vector<double> p{1.0, 2.0, 3.0};
    const std::vector<double> g{0.5, -4.0, 0.0};
    opt.step(p, g);
    // First step: m_hat = g, v_hat = g^2, so each moves by rate * sign(g).
    CHECK(p[0] == doctest::Approx(0.9).epsilon(1e-7));
    CHECK(p[1] == doctest::Approx(2.1).epsilon(1e-7));
    CHECK(p[2] == 3.0);
    CHECK(opt.steps() == 1);
    CHECK_THROWS_AS(opt.step(p, std::vector<double>{1.0}), std::invalid_argument);

    // A gradient that stays at zero drains the moments to exactly 0 rather than subnormals.
    const std::vector<double> zero(3, 0.0);
    for (int k = 0; k < 5000; ++k) opt.step(p, zero);
    for (double m : opt.first_moment()) CHECK(m == 0.0);
    const double p0 = p[0];
    opt.step(p, zero);
    CHECK(p[0] == p0);
}

TEST_CASE("mlp backward matches finite differences") {
    std::mt19937_64 rng(3);
    nn::Mlp net({5, 7, 6, 3}, rng);
    // Biases start at zero; perturb so ReLU kinks are unlikely to sit on the sample.
    for (auto& w : net.parameters()) w += 0.01;
    const auto x = random_vector(5, rng);
    const Eigen::Vector3d up(0.3, -1.2, 0.8);
    nn::Mlp::Tape tape;
    net.forward(x, tape);
    std::vector<double> grad(net.parameter_count(), 0.0);
    net.backward(tape, up, grad);
    const double h = 1e-6;
    double worst = 0.0;
    for (std::size_t k = 0; k < net.parameter_count(); ++k) {
        const double keep = net.parameters()[k];
        net.parameters()[k] = keep + h;
        const double fp = up.dot(net.forward(x));
        net.parameters()[k] = keep - h;
        const double fm = up.dot(net.forward(x));
        net.parameters()[k] = keep;
        worst = std::max(worst, std::abs((fp - fm) / (2 * h) - grad[k]));
    }
    CHECK(worst < 1e-6);
}

TEST_CASE("policy probabilities") {
    SUBCASE("zero layers and zero features put all mass on action 0") {
        QuantumActor a(plain_layout(3, 0, 0), qc::ParameterVector{}, 1e-3);
        const auto p = policy_probabilities(a, {});
        REQUIRE(p.size() == 8);
        CHECK(p[0] == 1.0);
        CHECK(std::accumulate(p.begin() + 1, p.end(), 0.0) == 0.0);
    }
    SUBCASE("normalized for random parameters") {
        std::mt19937_64 rng(9);
        for (int trial = 0; trial < 20; ++trial) {
            const int q = 1 + trial % 5;
            QuantumActor a(plain_layout(q, 6, 2, trial % 2 == 0), qc::ParameterVector::random(static_cast<std::size_t>(4 * q), rng), 1e-3);
            const auto p = a.probabilities(random_vector(6, rng, -3, 3));
            CHECK(p.size() == (std::size_t{1} << q));
            CHECK(std::abs(std::accumulate(p.begin(), p.end(), 0.0) - 1.0) < 1e-9);
        }
    }
    SUBCASE("single qubit is Bernoulli in the summed RY angle") {
        // Layers alternate RY (even slots) and RZ (odd slots); RZ angles held at zero.
        std::vector<double> theta{0.4, 0.0, 1.1, 0.0, -0.3, 0.0};
        QuantumActor a(plain_layout(1, 0, 3), qc::ParameterVector(theta), 1e-3);
        const auto p = a.probabilities({});
        const double s = std::sin((0.4 + 1.1 - 0.3) / 2);
        CHECK(p[1] == doctest::Approx(s * s).epsilon(1e-12));
        CHECK(p[0] == doctest::Approx(1 - s * s).epsilon(1e-12));
    }
    SUBCASE("shape error") {
        QuantumActor a(plain_layout(2, 3, 1), qc::ParameterVector(4, 0.0), 1e-3);
        CHECK_THROWS_AS(a.probabilities(std::vector<double>{1.0}), qc::ShapeError);
    }
    SUBCASE("softmax actor sums to one") {
        std::mt19937_64 rng(1);
        std::vector<env::FeatureBounds> b(4, {-2.0, 2.0});
        SoftmaxActor a(4, 16, 64, b, 1e-3, rng);
        const auto p = a.probabilities(random_vector(4, rng));
        CHECK(p.size() == 16);
        CHECK(std::abs(std::accumulate(p.begin(), p.end(), 0.0) - 1.0) < 1e-12);
    }
}

TEST_CASE("select_action") {
    std::mt19937_64 rng(17);
    const std::vector<double> degenerate{1.0, 0.0, 0.0, 0.0};
    for (int k = 0; k < 1000; ++k) CHECK(select_action(degenerate, rng) == 0);
    CHECK(select_action(std::vector<double>{0.1, 0.7, 0.2, 0.0}, rng, true) == 1);

    const int draws = 100000;
    std::vector<int> counts(4, 0);
    const std::vector<double> uniform(4, 0.25);
    for (int k = 0; k < draws; ++k) ++counts[static_cast<std::size_t>(select_action(uniform, rng))];
    for (int c : counts) CHECK(frequency_ok(c, draws, 0.25));

    std::fill(counts.begin(), counts.end(), 0);
    const std::vector<double> skew{0.1, 0.6, 0.3, 0.0};
    for (int k = 0; k < draws; ++k) ++counts[static_cast<std::size_t>(select_action(skew, rng))];
    CHECK(frequency_ok(counts[0], draws, 0.1));
    CHECK(frequency_ok(counts[1], draws, 0.6));
    CHECK(counts[3] == 0);
}

TEST_CASE("td_error") {
    CHECK(td_error(1.5, 0.0, 123.0, 0.98, true) == 1.5);
    CHECK(td_error(0.0, 2.0, 2.0, 1.0, false) == 0.0);
    CHECK(td_error(1.0, 2.5, 2.0, 0.98, false) == doctest::Approx(0.46).epsilon(1e-14));
}

TEST_CASE("epsilon schedule") {
    TrainingConfig tc;
    CHECK(epsilon(0, tc) == 0.275);
    CHECK(epsilon(5300, tc) == doctest::Approx(0.01).epsilon(1e-12));
    CHECK(epsilon(5301, tc) == 0.01);
    CHECK(epsilon(100000, tc) == 0.01);
    double prev = 1.0;
    for (long s = 0; s < 7000; s += 13) {
        CHECK(epsilon(s, tc) <= prev);
        prev = epsilon(s, tc);
    }
    CHECK_THROWS(epsilon(-1, tc));
}

TEST_CASE("training config validation") {
    TrainingConfig tc;
    CHECK_NOTHROW(tc.validate());
    CHECK(tc.effective_value_scale() == doctest::Approx(50.0));
    tc.gamma = 0.0;
    CHECK_THROWS(tc.validate());
    tc = {};
    tc.actor_rate = 0.0;
    CHECK_THROWS(tc.validate());
    tc = {};
    tc.epsilon_min = 0.5;
    CHECK_THROWS(tc.validate());
    tc = {};
    tc.seeds.clear();
    CHECK_THROWS(tc.validate());
    tc = {};
    tc.update_chunk = 0;
    CHECK_THROWS(tc.validate());
    CHECK(parse_algorithm("qmarl") == Algorithm::qmarl);
    CHECK_THROWS_AS(parse_algorithm("ppo"), std::invalid_argument);
}

TEST_CASE("actor update") {
    std::mt19937_64 rng(23);
    const auto layout = plain_layout(3, 5, 2, true);
    auto make_batch = [&](bool zero) {
        std::vector<ActorSample> b;
        std::uniform_int_distribution<int> act(0, 7);
        for (int k = 0; k < 12; ++k) b.push_back({random_vector(5, rng, -2, 2), act(rng), zero ? 0.0 : random_vector(1, rng)[0]});
        return b;
    };

    SUBCASE("zero learning rate leaves parameters unchanged") {
        QuantumActor a(layout, qc::ParameterVector::random(12, rng), 0.0);
        const std::vector<double> before(a.parameters().begin(), a.parameters().end());
        actor_update(a, make_batch(false));
        CHECK(std::equal(before.begin(), before.end(), a.parameters().begin()));
    }
    SUBCASE("zero delta leaves parameters unchanged, even with optimizer momentum") {
        QuantumActor a(layout, qc::ParameterVector::random(12, rng), 1e-2);
        actor_update(a, make_batch(false));
        const std::vector<double> before(a.parameters().begin(), a.parameters().end());
        actor_update(a, make_batch(true));
        CHECK(std::equal(before.begin(), before.end(), a.parameters().begin()));
    }
    SUBCASE("gradient matches finite differences of the weighted log-likelihood") {
        for (int trial = 0; trial < 5; ++trial) {
            QuantumActor a(layout, qc::ParameterVector::random(12, rng), 1e-3);
            const auto batch = make_batch(false);
            const auto g = a.log_likelihood_gradient(batch);
            auto objective = [&](const QuantumActor& actor) {
                double j = 0.0;
                for (const auto& s : batch) j += s.advantage * std::log(actor.probabilities(s.observation)[static_cast<std::size_t>(s.action)]);
                return j / static_cast<double>(batch.size());
            };
            std::vector<double> fd(g.size());
            const double h = 1e-5;
            for (std::size_t k = 0; k < g.size(); ++k) {
                auto plus = a.params(), minus = a.params();
                plus[k] += h;
                minus[k] -= h;
                fd[k] = (objective(QuantumActor(layout, plus, 0.0)) - objective(QuantumActor(layout, minus, 0.0))) / (2 * h);
            }
            CHECK(cosine_distance(g, fd) < 1e-4);
        }
    }
    SUBCASE("softmax actor gradient matches finite differences") {
        std::vector<env::FeatureBounds> bounds(5, {-2.0, 2.0});
        SoftmaxActor a(5, 8, 16, bounds, 1e-3, rng);
        const auto batch = make_batch(false);
        const auto g = a.log_likelihood_gradient(batch);
        auto objective = [&] {
            double j = 0.0;
            for (const auto& s : batch) j += s.advantage * std::log(a.probabilities(s.observation)[static_cast<std::size_t>(s.action)]);
            return j / static_cast<double>(batch.size());
        };
        std::vector<double> fd(g.size());
        const double h = 1e-6;
        for (std::size_t k = 0; k < g.size(); ++k) {
            const double keep = a.parameters()[k];
            a.parameters()[k] = keep + h;
            const double fp = objective();
            a.parameters()[k] = keep - h;
            const double fm = objective();
            a.parameters()[k] = keep;
            fd[k] = (fp - fm) / (2 * h);
        }
        CHECK(cosine_distance(g, fd) < 1e-4);
    }
    SUBCASE("single-qubit bandit") {
        // Reward 1 only for action 1; with no critic delta equals the reward. Rate raised so 500 steps suffice.
        QuantumActor a(plain_layout(1, 0, 1), qc::ParameterVector(std::vector<double>{0.3, 0.0}), 0.02);
        std::mt19937_64 draw(5);
        for (int it = 0; it < 500; ++it) {
            std::vector<ActorSample> batch;
            for (int k = 0; k < 8; ++k) {
                const int act = select_action(a, {}, draw);
                batch.push_back({{}, act, act == 1 ? 1.0 : 0.0});
            }
            actor_update(a, batch);
        }
        CHECK(a.probabilities({})[1] > 0.9);
    }
}

TEST_CASE("critic update") {
    std::mt19937_64 rng(31);
    const int features = 6;
    std::vector<qc::FeatureRange> ranges(features, {-1.0, 1.0});
    std::vector<env::FeatureBounds> bounds(features, {-1.0, 1.0});

    SUBCASE("zero delta leaves parameters unchanged") {
        QuantumCritic c(3, features, ranges, 2, 10.0, 0.01, rng);
        const auto s = random_vector(features, rng);
        // Give the readout a nonzero value first.
        critic_update(c, std::vector<CriticSample>{{s, s, 1.0, true}}, 0.9);
        const std::vector<double> before(c.parameters().begin(), c.parameters().end());
        const CriticSample zero{s, s, c.value(s), true};
        CHECK(td_error(c, zero, 0.9) == 0.0);
        critic_update(c, std::vector<CriticSample>{zero}, 0.9);
        CHECK(std::equal(before.begin(), before.end(), c.parameters().begin()));
    }
    SUBCASE("fixed-reward chain converges to r / (1 - gamma)") {
        const double gamma = 0.9, r = 0.7;
        const auto s = random_vector(features, rng);
        const std::vector<CriticSample> batch{{s, s, r, false}};
        QuantumCritic q(3, features, ranges, 2, 1.0 / (1 - gamma), 0.01, rng);
        ClassicalCritic m(bounds, 16, 1.0 / (1 - gamma), 0.01, rng);
        for (int it = 0; it < 4000; ++it) {
            critic_update(q, batch, gamma);
            critic_update(m, batch, gamma);
        }
        CHECK(q.value(s) == doctest::Approx(r / (1 - gamma)).epsilon(0.01));
        CHECK(m.value(s) == doctest::Approx(r / (1 - gamma)).epsilon(0.01));
    }
    SUBCASE("loss is non-increasing on a frozen batch") {
        QuantumCritic c(3, features, ranges, 2, 5.0, 2.5e-3, rng);
        std::vector<CriticSample> batch;
        for (int k = 0; k < 8; ++k) batch.push_back({random_vector(features, rng), {}, random_vector(1, rng)[0] + 1.0, true});
        double prev = critic_update(c, batch, 0.98);
        for (int it = 0; it < 10; ++it) {
            const double loss = critic_update(c, batch, 0.98);
            CHECK(loss <= prev);
            prev = loss;
        }
    }
    SUBCASE("quantum critic gradient matches finite differences") {
        QuantumCritic c(3, features, ranges, 2, 4.0, 0.01, rng);
        for (auto& p : c.parameters()) p += 0.3;  // nonzero readout
        std::vector<std::vector<double>> states{random_vector(features, rng), random_vector(features, rng)};
        const std::vector<double> w{0.7, -1.3};
        const auto g = c.value_gradient(states, w);
        const double h = 1e-5;
        double worst = 0.0;
        for (std::size_t k = 0; k < g.size(); ++k) {
            const double keep = c.parameters()[k];
            c.parameters()[k] = keep + h;
            const double fp = w[0] * c.value(states[0]) + w[1] * c.value(states[1]);
            c.parameters()[k] = keep - h;
            const double fm = w[0] * c.value(states[0]) + w[1] * c.value(states[1]);
            c.parameters()[k] = keep;
            worst = std::max(worst, std::abs((fp - fm) / (2 * h) - g[k]));
        }
        CHECK(worst < 1e-6);
    }
}

TEST_CASE("baselines") {
    std::mt19937_64 rng(41);
    const int draws = 100000;
    SUBCASE("random over four actions") {
        std::vector<int> counts(4, 0);
        for (int k = 0; k < draws; ++k) ++counts[static_cast<std::size_t>(random_policy(4, rng))];
        for (int c : counts) CHECK(frequency_ok(c, draws, 0.25));
    }
    SUBCASE("epsilon = 1 is uniform") {
        std::vector<env::FeatureBounds> b(3, {-1.0, 1.0});
        QLearner q(b, 4, 16, 1e-3, rng);
        std::vector<int> counts(4, 0);
        const std::vector<double> obs{0.2, -0.4, 0.9};
        for (int k = 0; k < draws; ++k) ++counts[static_cast<std::size_t>(q.act(obs, 1.0, rng))];
        for (int c : counts) CHECK(frequency_ok(c, draws, 0.25));
        // Greedy with epsilon = 0.
        const auto values = q.q_values(obs);
        const int best = static_cast<int>(std::max_element(values.begin(), values.end()) - values.begin());
        CHECK(q.act(obs, 0.0, rng) == best);
    }
    SUBCASE("Q update moves toward the target") {
        std::vector<env::FeatureBounds> b(3, {-1.0, 1.0});
        QLearner q(b, 4, 16, 1e-2, rng);
        const std::vector<QLearner::Sample> batch{{{0.1, 0.2, 0.3}, 2, 5.0, {0.0, 0.0, 0.0}, true}};
        const double first = q.update(batch, 0.9, false);
        double last = first;
        for (int k = 0; k < 200; ++k) last = q.update(batch, 0.9, true);
        CHECK(last < 1e-2 * first);
        CHECK(q.q_values(batch[0].observation)[2] == doctest::Approx(5.0).epsilon(0.05));
    }
}

TEST_CASE("training") {
    const auto tiny = env::make_preset("tiny");
    SUBCASE("zero epochs") { CHECK(train(tiny, Algorithm::qmarl, quick_config(0), 1).empty()); }
    SUBCASE("same seed, identical history, for every algorithm") {
        for (const auto& name : algorithm_names()) {
            const auto algo = parse_algorithm(name);
            const auto a = train(tiny, algo, quick_config(6), 77);
            const auto b = train(tiny, algo, quick_config(6), 77);
            CHECK_MESSAGE(same_history(a, b), name);
            const auto c = train(tiny, algo, quick_config(6), 78);
            CHECK_MESSAGE(!same_history(a, c), name);
            for (const auto& m : a) {
                CHECK(m.normalized_reward >= 0.0);
                CHECK(m.normalized_reward <= 1.0);
                CHECK(m.qos >= 0.0);
                CHECK(m.qos <= 1.0);
                CHECK(m.capacity >= 0.0);
                CHECK(m.capacity <= 1.0);
            }
        }
    }
    SUBCASE("one qubit per device slot") {
        for (int bits : {1, 3, 4}) {
            const auto cfg = env::with_action_bits(env::make_preset("paper"), bits);
            Trainer t(cfg, Algorithm::qmarl, quick_config(1), 3);
            for (int i = 0; i < cfg.gs_count(); ++i) {
                const auto* actor = dynamic_cast<const QuantumActor*>(t.policy(i));
                REQUIRE(actor != nullptr);
                CHECK(actor->qubits() == bits);
                CHECK(actor->action_count() == (std::size_t{1} << bits));
            }
        }
    }
    SUBCASE("device features encode on the device's qubit") {
        const auto cfg = env::make_preset("small");
        const env::Environment e(cfg);
        Trainer t(cfg, Algorithm::qmarl, quick_config(1), 3);
        const auto* actor = dynamic_cast<const QuantumActor*>(t.policy(0));
        REQUIRE(actor != nullptr);
        int device_ops = 0;
        for (const auto& op : actor->layout().ops) {
            if (op.source != qc::ParamSource::Feature) continue;
            const int d = e.observation_device(static_cast<std::size_t>(op.index));
            if (d < 0) continue;
            CHECK(op.target == d);
            ++device_ops;
        }
        CHECK(device_ops == 7 * cfg.device_count() * quick_config(1).actor_layers);
    }
    SUBCASE("classical critic option") {
        auto tc = quick_config(3);
        tc.critic = CriticKind::classical;
        CHECK(train(tiny, Algorithm::qmarl, tc, 5).size() == 3);
    }
}

TEST_CASE("checkpoints") {
    SUBCASE("store round trip") {
        Checkpoint ck;
        ck.put("a", std::vector<double>{1.0, -2.5e-300, 0.1, 3.0, 4, 5, 6, 7, 8, 9});
        ck.put("empty", std::vector<double>{});
        ck.put("s", 42.0);
        ck.put_text("t", "line one\nline two\n");
        const auto back = Checkpoint::parse(ck.str());
        CHECK(back.vec("a") == ck.vec("a"));
        CHECK(back.vec("empty").empty());
        CHECK(back.scalar("s") == 42.0);
        CHECK(back.text("t") == "line one\nline two\n");
        CHECK(back.str() == ck.str());
        CHECK_THROWS(Checkpoint::parse("sagin-checkpoint 2\nend\n"));
        CHECK_THROWS(Checkpoint::parse("nonsense\n"));
        CHECK_THROWS(back.vec("missing"));
    }
    SUBCASE("resume reproduces an uninterrupted run") {
        const auto small = env::make_preset("small");
        for (const auto& name : algorithm_names()) {
            const auto algo = parse_algorithm(name);
            const auto straight = train(small, algo, quick_config(6), 12);
            Trainer first(small, algo, quick_config(6), 12);
            std::vector<EpochMetrics> resumed;
            for (int e = 0; e < 3; ++e) resumed.push_back(first.run_epoch());
            const auto text = first.checkpoint().str();
            Trainer second(small, algo, quick_config(6), 999);  // different init, overwritten by restore
            second.restore(Checkpoint::parse(text));
            CHECK(second.epoch() == 3);
            for (int e = 0; e < 3; ++e) resumed.push_back(second.run_epoch());
            CHECK_MESSAGE(same_history(straight, resumed), name);
        }
    }
    SUBCASE("mismatched restore") {
        const auto tiny = env::make_preset("tiny");
        Trainer q(tiny, Algorithm::qmarl, quick_config(1), 1);
        Trainer m(tiny, Algorithm::marl, quick_config(1), 1);
        CHECK_THROWS(m.restore(q.checkpoint()));
        Trainer other(env::make_preset("small"), Algorithm::qmarl, quick_config(1), 1);
        CHECK_THROWS(other.restore(q.checkpoint()));
    }
    SUBCASE("quantum checkpoints carry the circuit manifest") {
        Trainer q(env::make_preset("tiny"), Algorithm::qmarl, quick_config(1), 1);
        const auto ck = q.checkpoint();
        const auto m = qc::parse_manifest(ck.text("actor0.circuit"));
        CHECK(m.layout.qubits == 2);
    }
}
