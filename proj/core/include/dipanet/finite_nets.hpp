#pragma once
#include <optional>
#include <vector>

#include "dipanet/activation.hpp"
#include "dipanet/linalg.hpp"

namespace dipanet {

// Layer convention: Standard applies the activation to the full matrix-vector
// product; SumOfActivations applies it per connection inside a cell-weighted
// sum (the quadrature form emitted by width discretization).
struct Convention {
    enum class Kind { Standard, SumOfActivations };
    Kind kind = Kind::Standard;
    double dtau = 1.0; // SumOfActivations cell width

    static Convention standard() { return {Kind::Standard, 1.0}; }
    static Convention sum_of_activations(double dtau) { return {Kind::SumOfActivations, dtau}; }
    bool operator==(const Convention&) const = default;
};

enum class Residual { None, Plain, Skip };

// Per-layer activation: components (size 1 broadcasts across the layer) plus
// an outer factor applied to the finished layer value. Depth discretization
// stores its T/ell weight in `outer` so the layer recursion reproduces the
// Euler step arithmetic exactly.
struct LayerActivation {
    double outer = 1.0;
    std::vector<ResolvedAct> comps;

    LayerActivation() = default;
    LayerActivation(ActivationDescriptor d) : comps{resolve(d)} {} // implicit by design
    LayerActivation(double outer_, std::vector<ResolvedAct> comps_)
        : outer(outer_), comps(std::move(comps_)) {}

    const ResolvedAct& at(std::size_t j) const { return comps.size() == 1 ? comps.front() : comps[j]; }
};

struct FiniteNetParams {
    Matrix L;                        // n x p
    std::vector<Matrix> W;           // ell entries, n x n
    Matrix P;                        // q x n, or q x 2n for Residual::Skip
    std::vector<LayerActivation> act;
    Convention convention = Convention::standard();
    Residual residual = Residual::None;

    std::size_t width() const { return L.rows(); }
    std::size_t depth() const { return W.size(); }
    std::size_t input_dim() const { return L.cols(); }
    std::size_t output_dim() const { return P.rows(); }

    void validate() const;
};

using Trace = std::vector<Vec>; // hidden states Z_0..Z_ell

Vec eval_deepnet(const FiniteNetParams& params, const Vec& x, Trace* trace = nullptr);
Vec eval_deepresnet(const FiniteNetParams& params, const Vec& x, Trace* trace = nullptr);

// Shared evaluator; residual choice taken from params.
Vec eval_finite(const FiniteNetParams& params, const Vec& x, Trace* trace = nullptr);

// Bias reduction: X -> [X^T, 1]^T with padded matrices. The extra hidden
// component carries the constant 1 through every layer (identity activation
// in plain layers, zero contribution in residual ones).
FiniteNetParams with_bias(const FiniteNetParams& params, const Vec& lift_bias,
                          const std::vector<Vec>& layer_biases);
Vec augment_input(const Vec& x);

} // namespace dipanet
