#pragma once

#include <complex>
#include <cstddef>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace sagin::qc {

using Amplitude = std::complex<double>;

inline constexpr int kMaxQubits = 24;

class IndexError : public std::out_of_range {
public:
    using std::out_of_range::out_of_range;
};

class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class UnsupportedGateError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

enum class GateKind { X, Y, Z, RX, RY, RZ, CX, CY, CZ, CRX, CRY, CRZ };

bool is_controlled(GateKind kind);
bool is_rotation(GateKind kind);  // RX/RY/RZ only: the two-term shift family
bool takes_angle(GateKind kind);
std::string gate_name(GateKind kind);
GateKind gate_from_name(const std::string& name);

struct Gate {
    GateKind kind = GateKind::X;
    int target = 0;
    int control = -1;  // only for controlled kinds
    double angle = 0.0;
};

/// Dense 2^q amplitude vector. Qubit k is bit k of the basis index.
class StateVector {
public:
    explicit StateVector(int qubits);

    /// Takes ownership of amplitudes; size must be a power of two. Not renormalized.
    static StateVector from_amplitudes(std::vector<Amplitude> amplitudes);

    int qubit_count() const { return qubits_; }
    std::size_t dimension() const { return amps_.size(); }
    std::span<const Amplitude> amplitudes() const { return amps_; }
    const Amplitude& operator[](std::size_t k) const { return amps_[k]; }

    double norm_squared() const;

    void apply(const Gate& gate);
    void reset();

private:
    StateVector() = default;
    int qubits_ = 0;
    std::vector<Amplitude> amps_;
};

/// Functional form of StateVector::apply.
StateVector apply_gate(StateVector state, const Gate& gate);

enum class ParamSource { None, Feature, Slot, Fixed };

struct Operation {
    GateKind kind = GateKind::RY;
    int target = 0;
    int control = -1;
    ParamSource source = ParamSource::None;
    int index = 0;       // feature index or slot index
    double angle = 0.0;  // for Fixed
};

struct FeatureRange {
    double min = 0.0;
    double max = 1.0;
};

/// A gate program: encoder operations read features, trainable operations read parameter slots.
struct CircuitLayout {
    int qubits = 1;
    int feature_count = 0;
    int slot_count = 0;
    std::vector<Operation> ops;
    /// Per-feature affine map onto [-pi, pi]. Empty means features are used as raw angles.
    std::vector<FeatureRange> feature_ranges;

    /// Checks qubit indices, dense unique slots, and feature indices. Throws ShapeError/IndexError.
    void validate() const;
    double feature_angle(int feature, double value) const;
};

struct LayoutOptions {
    int qubits = 1;
    int features = 0;
    int layers = 3;
    /// Re-apply the encoder before every trainable layer instead of once up front.
    bool reupload = false;
    std::vector<FeatureRange> feature_ranges;
    /// Target qubit per feature. Empty means feature f goes to qubit f mod q.
    std::vector<int> feature_qubits;
};

/// Encoder: each feature is an RY or RZ on its qubit, alternating per earlier feature on that qubit.
/// Each layer: RY then RZ on every qubit followed by a CZ ring.
CircuitLayout make_layout(const LayoutOptions& options);

class ParameterVector {
public:
    ParameterVector() = default;
    explicit ParameterVector(std::vector<double> values) : values_(std::move(values)) {}
    ParameterVector(std::size_t n, double value) : values_(n, value) {}

    /// Uniform on [0, 2*pi).
    static ParameterVector random(std::size_t n, std::mt19937_64& rng);

    std::size_t size() const { return values_.size(); }
    double operator[](std::size_t k) const { return values_[k]; }
    double& operator[](std::size_t k) { return values_[k]; }
    std::span<const double> values() const { return values_; }
    std::span<double> values() { return values_; }

private:
    std::vector<double> values_;
};

struct Observable {
    enum class Kind { PauliZ, Projector };
    Kind kind = Kind::PauliZ;
    std::size_t index = 0;  // qubit for PauliZ, basis index for Projector

    static Observable pauli_z(std::size_t qubit) { return {Kind::PauliZ, qubit}; }
    static Observable projector(std::size_t basis) { return {Kind::Projector, basis}; }
};

double expectation(const StateVector& state, const Observable& obs);

/// sum_k z_weights[k] <Z_k> + sum_b probability_weights[b] |alpha_b|^2. Either part may be empty.
struct LinearObjective {
    std::vector<double> z_weights;
    std::vector<double> probability_weights;

    static LinearObjective of(const Observable& obs, int qubits, double weight = 1.0);
    double evaluate(const StateVector& state) const;
};

StateVector encode(const CircuitLayout& layout, std::span<const double> features);
StateVector forward(const CircuitLayout& layout, const ParameterVector& params, std::span<const double> features);

double pauli_z_expectation(const StateVector& state, int qubit);
std::vector<double> pauli_z_expectations(const StateVector& state);
std::vector<double> basis_probabilities(const StateVector& state);

enum class ShiftRule {
    Half,      // (f(+pi/2) - f(-pi/2)) / 2: the exact derivative for exp(-i theta G / 2)
    Verbatim,  // f(+pi/2) - f(-pi/2), twice the derivative
};

std::vector<double> parameter_shift_gradient(const CircuitLayout& layout, const ParameterVector& params,
                                             std::span<const double> features, const LinearObjective& objective,
                                             ShiftRule rule = ShiftRule::Half);

/// One gate per line: `<gate> <targets> <slot|feature|angle|->`, plus header and parameter lines.
std::string to_manifest(const CircuitLayout& layout, const ParameterVector* params = nullptr);

struct Manifest {
    CircuitLayout layout;
    ParameterVector params;
};
Manifest parse_manifest(const std::string& text);

}  // namespace sagin::qc
