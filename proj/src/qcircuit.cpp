#include "sagin/qcircuit.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <sstream>

namespace sagin::qc {

namespace {

constexpr double kPi = std::numbers::pi;
const Amplitude kI{0.0, 1.0};

void check_qubit(int q, int qubits) {
    if (q < 0 || q >= qubits) {
        throw IndexError("qubit index " + std::to_string(q) + " out of range for " + std::to_string(qubits) + " qubits");
    }
}

// Generic 2x2 unitary on `target`, optionally conditioned on `control` being |1>.
void apply_matrix(std::vector<Amplitude>& a, int target, int control, Amplitude m00, Amplitude m01, Amplitude m10,
                  Amplitude m11) {
    const std::size_t stride = std::size_t{1} << target;
    const std::size_t cmask = control >= 0 ? std::size_t{1} << control : 0;
    const std::size_t n = a.size();
    for (std::size_t base = 0; base < n; base += 2 * stride) {
        for (std::size_t i0 = base; i0 < base + stride; ++i0) {
            if ((i0 & cmask) != cmask) continue;
            const std::size_t i1 = i0 + stride;
            const Amplitude x = a[i0], y = a[i1];
            a[i0] = m00 * x + m01 * y;
            a[i1] = m10 * x + m11 * y;
        }
    }
}

void apply_ry(std::vector<Amplitude>& a, int target, double theta) {
    const double c = std::cos(theta / 2.0), s = std::sin(theta / 2.0);
    const std::size_t stride = std::size_t{1} << target;
    const std::size_t n = a.size();
    for (std::size_t base = 0; base < n; base += 2 * stride) {
        for (std::size_t i0 = base; i0 < base + stride; ++i0) {
            const std::size_t i1 = i0 + stride;
            const Amplitude x = a[i0], y = a[i1];
            a[i0] = c * x - s * y;
            a[i1] = s * x + c * y;
        }
    }
}

void apply_rz(std::vector<Amplitude>& a, int target, double theta) {
    const Amplitude p0 = std::polar(1.0, -theta / 2.0), p1 = std::polar(1.0, theta / 2.0);
    const std::size_t mask = std::size_t{1} << target;
    for (std::size_t k = 0; k < a.size(); ++k) a[k] *= (k & mask) ? p1 : p0;
}

void apply_cz(std::vector<Amplitude>& a, int control, int target) {
    const std::size_t mask = (std::size_t{1} << control) | (std::size_t{1} << target);
    for (std::size_t k = 0; k < a.size(); ++k) {
        if ((k & mask) == mask) a[k] = -a[k];
    }
}

void apply_to(std::vector<Amplitude>& a, const Gate& g) {
    const double c = std::cos(g.angle / 2.0), s = std::sin(g.angle / 2.0);
    switch (g.kind) {
        case GateKind::X: apply_matrix(a, g.target, -1, 0.0, 1.0, 1.0, 0.0); break;
        case GateKind::Y: apply_matrix(a, g.target, -1, 0.0, -kI, kI, 0.0); break;
        case GateKind::Z: apply_matrix(a, g.target, -1, 1.0, 0.0, 0.0, -1.0); break;
        case GateKind::RX: apply_matrix(a, g.target, -1, c, -kI * s, -kI * s, c); break;
        case GateKind::RY: apply_ry(a, g.target, g.angle); break;
        case GateKind::RZ: apply_rz(a, g.target, g.angle); break;
        case GateKind::CX: apply_matrix(a, g.target, g.control, 0.0, 1.0, 1.0, 0.0); break;
        case GateKind::CY: apply_matrix(a, g.target, g.control, 0.0, -kI, kI, 0.0); break;
        case GateKind::CZ: apply_cz(a, g.control, g.target); break;
        case GateKind::CRX: apply_matrix(a, g.target, g.control, c, -kI * s, -kI * s, c); break;
        case GateKind::CRY: apply_matrix(a, g.target, g.control, c, -s, s, c); break;
        case GateKind::CRZ:
            apply_matrix(a, g.target, g.control, std::polar(1.0, -g.angle / 2.0), 0.0, 0.0, std::polar(1.0, g.angle / 2.0));
            break;
    }
}

double operation_angle(const CircuitLayout& layout, const Operation& op, std::span<const double> params,
                       std::span<const double> features) {
    switch (op.source) {
        case ParamSource::None: return 0.0;
        case ParamSource::Fixed: return op.angle;
        case ParamSource::Slot: return params[static_cast<std::size_t>(op.index)];
        case ParamSource::Feature: return layout.feature_angle(op.index, features[static_cast<std::size_t>(op.index)]);
    }
    return 0.0;
}

Gate to_gate(const Operation& op, double angle) { return Gate{op.kind, op.target, op.control, angle}; }

Gate inverse(Gate g) {
    if (takes_angle(g.kind)) g.angle = -g.angle;  // the fixed gates are all self-inverse
    return g;
}

void check_shapes(const CircuitLayout& layout, std::size_t n_params, std::size_t n_features) {
    if (n_features != static_cast<std::size_t>(layout.feature_count)) {
        throw ShapeError("feature vector has " + std::to_string(n_features) + " entries, layout expects " +
                         std::to_string(layout.feature_count));
    }
    if (n_params != static_cast<std::size_t>(layout.slot_count)) {
        throw ShapeError("parameter vector has " + std::to_string(n_params) + " entries, layout expects " +
                         std::to_string(layout.slot_count));
    }
}

void run_ops(std::vector<Amplitude>& amps, const CircuitLayout& layout, std::size_t first, std::span<const double> params,
             std::span<const double> features) {
    for (std::size_t k = first; k < layout.ops.size(); ++k) {
        const auto& op = layout.ops[k];
        apply_to(amps, to_gate(op, operation_angle(layout, op, params, features)));
    }
}

}  // namespace

bool is_controlled(GateKind kind) {
    switch (kind) {
        case GateKind::CX:
        case GateKind::CY:
        case GateKind::CZ:
        case GateKind::CRX:
        case GateKind::CRY:
        case GateKind::CRZ: return true;
        default: return false;
    }
}

bool is_rotation(GateKind kind) { return kind == GateKind::RX || kind == GateKind::RY || kind == GateKind::RZ; }

bool takes_angle(GateKind kind) {
    return is_rotation(kind) || kind == GateKind::CRX || kind == GateKind::CRY || kind == GateKind::CRZ;
}

std::string gate_name(GateKind kind) {
    switch (kind) {
        case GateKind::X: return "x";
        case GateKind::Y: return "y";
        case GateKind::Z: return "z";
        case GateKind::RX: return "rx";
        case GateKind::RY: return "ry";
        case GateKind::RZ: return "rz";
        case GateKind::CX: return "cx";
        case GateKind::CY: return "cy";
        case GateKind::CZ: return "cz";
        case GateKind::CRX: return "crx";
        case GateKind::CRY: return "cry";
        case GateKind::CRZ: return "crz";
    }
    return "?";
}

GateKind gate_from_name(const std::string& name) {
    static const GateKind all[] = {GateKind::X,  GateKind::Y,  GateKind::Z,  GateKind::RX,  GateKind::RY,  GateKind::RZ,
                                   GateKind::CX, GateKind::CY, GateKind::CZ, GateKind::CRX, GateKind::CRY, GateKind::CRZ};
    for (auto k : all) {
        if (gate_name(k) == name) return k;
    }
    throw std::invalid_argument("unknown gate '" + name + "'");
}

StateVector::StateVector(int qubits) : qubits_(qubits) {
    if (qubits < 1 || qubits > kMaxQubits) {
        throw ShapeError("qubit count must be in [1, " + std::to_string(kMaxQubits) + "], got " + std::to_string(qubits));
    }
    amps_.assign(std::size_t{1} << qubits, Amplitude{0.0, 0.0});
    amps_[0] = 1.0;
}

StateVector StateVector::from_amplitudes(std::vector<Amplitude> amplitudes) {
    const std::size_t n = amplitudes.size();
    if (n < 2 || (n & (n - 1)) != 0) throw ShapeError("amplitude count must be a power of two >= 2");
    StateVector s;
    s.qubits_ = std::countr_zero(n);
    if (s.qubits_ > kMaxQubits) throw ShapeError("too many qubits");
    s.amps_ = std::move(amplitudes);
    return s;
}

double StateVector::norm_squared() const {
    double sum = 0.0;
    for (const auto& a : amps_) sum += std::norm(a);
    return sum;
}

void StateVector::apply(const Gate& gate) {
    check_qubit(gate.target, qubits_);
    if (is_controlled(gate.kind)) {
        check_qubit(gate.control, qubits_);
        if (gate.control == gate.target) throw IndexError("control and target qubits must differ");
    }
    apply_to(amps_, gate);
}

void StateVector::reset() {
    std::fill(amps_.begin(), amps_.end(), Amplitude{0.0, 0.0});
    amps_[0] = 1.0;
}

StateVector apply_gate(StateVector state, const Gate& gate) {
    state.apply(gate);
    return state;
}

void CircuitLayout::validate() const {
    if (qubits < 1 || qubits > kMaxQubits) throw ShapeError("layout qubit count out of range");
    if (feature_count < 0 || slot_count < 0) throw ShapeError("negative feature or slot count");
    if (!feature_ranges.empty() && feature_ranges.size() != static_cast<std::size_t>(feature_count)) {
        throw ShapeError("feature range count does not match feature count");
    }
    std::vector<int> slot_uses(static_cast<std::size_t>(slot_count), 0);
    for (const auto& op : ops) {
        check_qubit(op.target, qubits);
        if (is_controlled(op.kind)) {
            check_qubit(op.control, qubits);
            if (op.control == op.target) throw IndexError("control and target qubits must differ");
        }
        if (op.source == ParamSource::Slot) {
            if (op.index < 0 || op.index >= slot_count) throw IndexError("parameter slot out of range");
            ++slot_uses[static_cast<std::size_t>(op.index)];
        } else if (op.source == ParamSource::Feature) {
            if (op.index < 0 || op.index >= feature_count) throw IndexError("feature index out of range");
        }
    }
    for (std::size_t k = 0; k < slot_uses.size(); ++k) {
        if (slot_uses[k] != 1) {
            throw ShapeError("parameter slot " + std::to_string(k) + " is used " + std::to_string(slot_uses[k]) +
                             " times; slots must be unique and dense");
        }
    }
}

double CircuitLayout::feature_angle(int feature, double value) const {
    if (feature_ranges.empty()) return value;
    const auto& r = feature_ranges[static_cast<std::size_t>(feature)];
    const double span = r.max - r.min;
    if (!(span > 0.0)) return 0.0;
    const double t = std::clamp((value - r.min) / span, 0.0, 1.0);
    return -kPi + 2.0 * kPi * t;
}

CircuitLayout make_layout(const LayoutOptions& options) {
    CircuitLayout layout;
    layout.qubits = options.qubits;
    layout.feature_count = options.features;
    layout.feature_ranges = options.feature_ranges;
    const int q = options.qubits;

    if (!options.feature_qubits.empty() && static_cast<int>(options.feature_qubits.size()) != options.features)
        throw ShapeError("make_layout: feature_qubits size differs from feature count");
    auto append_encoder = [&] {
        std::vector<int> pass(static_cast<std::size_t>(std::max(q, 0)), 0);
        for (int f = 0; f < options.features; ++f) {
            const int k = options.feature_qubits.empty() ? f % q : options.feature_qubits[static_cast<std::size_t>(f)];
            if (k < 0 || k >= q) throw IndexError("make_layout: feature qubit out of range");
            const int n = pass[static_cast<std::size_t>(k)]++;
            layout.ops.push_back(Operation{n % 2 == 0 ? GateKind::RY : GateKind::RZ, k, -1, ParamSource::Feature, f});
        }
    };

    int slot = 0;
    if (!options.reupload) append_encoder();
    for (int l = 0; l < options.layers; ++l) {
        if (options.reupload) append_encoder();
        for (int k = 0; k < q; ++k) {
            layout.ops.push_back(Operation{GateKind::RY, k, -1, ParamSource::Slot, slot++});
            layout.ops.push_back(Operation{GateKind::RZ, k, -1, ParamSource::Slot, slot++});
        }
        if (q == 2) {
            layout.ops.push_back(Operation{GateKind::CZ, 1, 0});
        } else if (q > 2) {
            for (int k = 0; k < q; ++k) layout.ops.push_back(Operation{GateKind::CZ, (k + 1) % q, k});
        }
    }
    layout.slot_count = slot;
    layout.validate();
    return layout;
}

ParameterVector ParameterVector::random(std::size_t n, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.0, 2.0 * kPi);
    std::vector<double> v(n);
    for (auto& x : v) x = u(rng);
    return ParameterVector(std::move(v));
}

double pauli_z_expectation(const StateVector& state, int qubit) {
    check_qubit(qubit, state.qubit_count());
    const std::size_t mask = std::size_t{1} << qubit;
    double sum = 0.0;
    const auto amps = state.amplitudes();
    for (std::size_t k = 0; k < amps.size(); ++k) sum += (k & mask) ? -std::norm(amps[k]) : std::norm(amps[k]);
    return sum;
}

std::vector<double> pauli_z_expectations(const StateVector& state) {
    std::vector<double> z(static_cast<std::size_t>(state.qubit_count()), 0.0);
    const auto amps = state.amplitudes();
    for (std::size_t k = 0; k < amps.size(); ++k) {
        const double p = std::norm(amps[k]);
        for (std::size_t b = 0; b < z.size(); ++b) z[b] += ((k >> b) & 1U) ? -p : p;
    }
    return z;
}

std::vector<double> basis_probabilities(const StateVector& state) {
    const auto amps = state.amplitudes();
    std::vector<double> p(amps.size());
    for (std::size_t k = 0; k < amps.size(); ++k) p[k] = std::norm(amps[k]);
    return p;
}

double expectation(const StateVector& state, const Observable& obs) {
    if (obs.kind == Observable::Kind::PauliZ) return pauli_z_expectation(state, static_cast<int>(obs.index));
    if (obs.index >= state.dimension()) throw IndexError("projector basis index out of range");
    return std::norm(state[obs.index]);
}

LinearObjective LinearObjective::of(const Observable& obs, int qubits, double weight) {
    LinearObjective o;
    if (obs.kind == Observable::Kind::PauliZ) {
        if (obs.index >= static_cast<std::size_t>(qubits)) throw IndexError("Pauli-Z qubit out of range");
        o.z_weights.assign(static_cast<std::size_t>(qubits), 0.0);
        o.z_weights[obs.index] = weight;
    } else {
        const std::size_t dim = std::size_t{1} << qubits;
        if (obs.index >= dim) throw IndexError("projector basis index out of range");
        o.probability_weights.assign(dim, 0.0);
        o.probability_weights[obs.index] = weight;
    }
    return o;
}

double LinearObjective::evaluate(const StateVector& state) const {
    const auto amps = state.amplitudes();
    double total = 0.0;
    if (!z_weights.empty()) {
        if (z_weights.size() != static_cast<std::size_t>(state.qubit_count())) throw ShapeError("z weight count mismatch");
        for (std::size_t k = 0; k < amps.size(); ++k) {
            const double p = std::norm(amps[k]);
            double parity_sum = 0.0;
            for (std::size_t b = 0; b < z_weights.size(); ++b) parity_sum += ((k >> b) & 1U) ? -z_weights[b] : z_weights[b];
            total += p * parity_sum;
        }
    }
    if (!probability_weights.empty()) {
        if (probability_weights.size() != amps.size()) throw ShapeError("probability weight count mismatch");
        for (std::size_t k = 0; k < amps.size(); ++k) {
            if (probability_weights[k] != 0.0) total += probability_weights[k] * std::norm(amps[k]);
        }
    }
    return total;
}

StateVector encode(const CircuitLayout& layout, std::span<const double> features) {
    if (features.size() != static_cast<std::size_t>(layout.feature_count)) {
        throw ShapeError("feature vector has " + std::to_string(features.size()) + " entries, layout expects " +
                         std::to_string(layout.feature_count));
    }
    StateVector state(layout.qubits);
    for (const auto& op : layout.ops) {
        if (op.source != ParamSource::Feature) continue;
        state.apply(to_gate(op, layout.feature_angle(op.index, features[static_cast<std::size_t>(op.index)])));
    }
    return state;
}

StateVector forward(const CircuitLayout& layout, const ParameterVector& params, std::span<const double> features) {
    check_shapes(layout, params.size(), features.size());
    StateVector state(layout.qubits);
    std::vector<Amplitude> amps(state.amplitudes().begin(), state.amplitudes().end());
    run_ops(amps, layout, 0, params.values(), features);
    return StateVector::from_amplitudes(std::move(amps));
}

std::vector<double> parameter_shift_gradient(const CircuitLayout& layout, const ParameterVector& params,
                                             std::span<const double> features, const LinearObjective& objective,
                                             ShiftRule rule) {
    check_shapes(layout, params.size(), features.size());
    for (const auto& op : layout.ops) {
        if (op.source == ParamSource::Slot && !is_rotation(op.kind)) {
            throw UnsupportedGateError("parameter slot " + std::to_string(op.index) + " drives '" + gate_name(op.kind) +
                                       "', which has no two-term shift rule");
        }
    }
    const double scale = rule == ShiftRule::Half ? 0.5 : 1.0;
    const auto theta = params.values();
    std::vector<double> grad(params.size(), 0.0);

    // A few weighted basis probabilities and no Z terms: each shifted value is sum_b w_b |<chi_b|R(theta +- pi/2)|phi>|^2,
    // where chi_b is |b> pulled back through the gates after the slot. One backward sweep replaces a suffix per slot.
    std::vector<std::size_t> basis;
    for (std::size_t b = 0; b < objective.probability_weights.size(); ++b) {
        if (objective.probability_weights[b] != 0.0) basis.push_back(b);
    }
    const bool no_z = std::all_of(objective.z_weights.begin(), objective.z_weights.end(), [](double w) { return w == 0.0; });
    if (no_z && basis.size() <= 4) {
        const std::size_t dim = std::size_t{1} << layout.qubits;
        if (objective.probability_weights.size() > dim) throw ShapeError("probability weights exceed the basis size");
        std::vector<Amplitude> phi(dim, Amplitude{0.0, 0.0});
        phi[0] = 1.0;
        run_ops(phi, layout, 0, theta, features);
        std::vector<std::vector<Amplitude>> chi(basis.size(), std::vector<Amplitude>(dim, Amplitude{0.0, 0.0}));
        for (std::size_t j = 0; j < basis.size(); ++j) chi[j][basis[j]] = 1.0;
        std::vector<Amplitude> shifted(dim);
        for (std::size_t k = layout.ops.size(); k-- > 0;) {
            const auto& op = layout.ops[k];
            const double angle = operation_angle(layout, op, theta, features);
            const Gate undo = inverse(to_gate(op, angle));
            apply_to(phi, undo);
            if (op.source == ParamSource::Slot) {
                double value[2] = {0.0, 0.0};
                for (int sign = 0; sign < 2; ++sign) {
                    shifted = phi;
                    apply_to(shifted, to_gate(op, angle + (sign == 0 ? kPi / 2.0 : -kPi / 2.0)));
                    for (std::size_t j = 0; j < basis.size(); ++j) {
                        Amplitude overlap{0.0, 0.0};
                        for (std::size_t i = 0; i < dim; ++i) overlap += std::conj(chi[j][i]) * shifted[i];
                        value[sign] += objective.probability_weights[basis[j]] * std::norm(overlap);
                    }
                }
                grad[static_cast<std::size_t>(op.index)] += scale * (value[0] - value[1]);
            }
            for (auto& c : chi) apply_to(c, undo);
        }
        return grad;
    }

    std::vector<Amplitude> prefix(std::size_t{1} << layout.qubits, Amplitude{0.0, 0.0});
    prefix[0] = 1.0;
    std::vector<Amplitude> shifted(prefix.size());

    // The prefix state up to each slotted gate is shared by both shifted evaluations.
    for (std::size_t k = 0; k < layout.ops.size(); ++k) {
        const auto& op = layout.ops[k];
        const double angle = operation_angle(layout, op, theta, features);
        if (op.source == ParamSource::Slot) {
            double value[2];
            for (int sign = 0; sign < 2; ++sign) {
                shifted = prefix;
                apply_to(shifted, to_gate(op, angle + (sign == 0 ? kPi / 2.0 : -kPi / 2.0)));
                run_ops(shifted, layout, k + 1, theta, features);
                value[sign] = objective.evaluate(StateVector::from_amplitudes(shifted));
            }
            grad[static_cast<std::size_t>(op.index)] = scale * (value[0] - value[1]);
        }
        apply_to(prefix, to_gate(op, angle));
    }
    return grad;
}

std::string to_manifest(const CircuitLayout& layout, const ParameterVector* params) {
    std::ostringstream os;
    char buf[64];
    os << "sagin-circuit 1\n";
    os << "qubits " << layout.qubits << "\n";
    os << "features " << layout.feature_count << "\n";
    os << "slots " << layout.slot_count << "\n";
    for (std::size_t f = 0; f < layout.feature_ranges.size(); ++f) {
        std::snprintf(buf, sizeof buf, "%.17g %.17g", layout.feature_ranges[f].min, layout.feature_ranges[f].max);
        os << "range " << f << " " << buf << "\n";
    }
    for (const auto& op : layout.ops) {
        os << gate_name(op.kind) << " ";
        if (is_controlled(op.kind)) os << op.control << ",";
        os << op.target << " ";
        switch (op.source) {
            case ParamSource::None: os << "-"; break;
            case ParamSource::Slot: os << "s" << op.index; break;
            case ParamSource::Feature: os << "f" << op.index; break;
            case ParamSource::Fixed:
                std::snprintf(buf, sizeof buf, "%.17g", op.angle);
                os << buf;
                break;
        }
        os << "\n";
    }
    os << "end\n";
    if (params) {
        os << "params " << params->size() << "\n";
        for (std::size_t k = 0; k < params->size(); ++k) {
            std::snprintf(buf, sizeof buf, "%.17g", (*params)[k]);
            os << buf << "\n";
        }
    }
    return os.str();
}

Manifest parse_manifest(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    auto fail = [](const std::string& why) -> void { throw std::invalid_argument("circuit manifest: " + why); };

    if (!std::getline(in, line) || line != "sagin-circuit 1") fail("missing 'sagin-circuit 1' header");
    Manifest m;
    auto& layout = m.layout;
    bool ended = false;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ls(line);
        std::string head;
        ls >> head;
        if (head == "end") {
            ended = true;
            break;
        }
        if (head == "qubits") {
            ls >> layout.qubits;
        } else if (head == "features") {
            ls >> layout.feature_count;
        } else if (head == "slots") {
            ls >> layout.slot_count;
        } else if (head == "range") {
            std::size_t f = 0;
            FeatureRange r;
            ls >> f >> r.min >> r.max;
            if (layout.feature_ranges.size() <= f) layout.feature_ranges.resize(f + 1);
            layout.feature_ranges[f] = r;
        } else {
            Operation op;
            op.kind = gate_from_name(head);
            std::string targets, source;
            ls >> targets >> source;
            if (targets.empty() || source.empty()) fail("malformed gate line '" + line + "'");
            const auto comma = targets.find(',');
            if (is_controlled(op.kind)) {
                if (comma == std::string::npos) fail("controlled gate needs 'control,target': '" + line + "'");
                op.control = std::stoi(targets.substr(0, comma));
                op.target = std::stoi(targets.substr(comma + 1));
            } else {
                op.target = std::stoi(targets);
            }
            if (source == "-") {
                op.source = ParamSource::None;
            } else if (source[0] == 's') {
                op.source = ParamSource::Slot;
                op.index = std::stoi(source.substr(1));
            } else if (source[0] == 'f') {
                op.source = ParamSource::Feature;
                op.index = std::stoi(source.substr(1));
            } else {
                op.source = ParamSource::Fixed;
                op.angle = std::stod(source);
            }
            layout.ops.push_back(op);
        }
        if (ls.fail()) fail("malformed line '" + line + "'");
    }
    if (!ended) fail("missing 'end'");
    layout.validate();

    std::vector<double> values;
    if (std::getline(in, line) && line.rfind("params", 0) == 0) {
        std::size_t n = std::stoul(line.substr(6));
        values.reserve(n);
        for (std::size_t k = 0; k < n; ++k) {
            if (!std::getline(in, line)) fail("truncated parameter list");
            values.push_back(std::stod(line));
        }
        if (values.size() != static_cast<std::size_t>(layout.slot_count)) fail("parameter count does not match slots");
    }
    m.params = ParameterVector(std::move(values));
    return m;
}

}  // namespace sagin::qc
