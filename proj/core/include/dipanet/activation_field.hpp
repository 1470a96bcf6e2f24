#pragma once
#include <memory>
#include <optional>
#include <variant>
#include <vector>

#include "dipanet/activation.hpp"
#include "dipanet/funcrep.hpp"

namespace dipanet {

// Scale every term of a resolved activation by `factor`.
ResolvedAct scale_resolved(const ResolvedAct& r, double factor);

// Scalar activation field sigma(tau, t, v). Fields that do not use a
// coordinate ignore it, so the same type serves layer fields (tau only),
// ODE fields (t only) and distributed-parameter fields (both).
class ActivationField {
public:
    struct Desc {
        ActivationDescriptor d;
    };
    // gain_tau(tau) * gain_t(t) * d(v); either gain may be absent.
    struct Modulated {
        ActivationDescriptor d;
        std::optional<FunctionRep> gain_tau; // domain Unit
        std::optional<FunctionRep> gain_t;   // domain Time
    };
    // Piecewise-linear blend over t of pointwise activations placed at nodes
    // i*T/ell, constant on the final interval; every term scaled by outer.
    struct TimeBlend {
        double T = 1.0;
        double outer = 1.0;
        std::vector<ResolvedAct> nodes;
    };
    // As TimeBlend but with full (tau, v) fields at the nodes.
    struct TimeBlendFields {
        double T = 1.0;
        double outer = 1.0;
        std::vector<std::shared_ptr<const ActivationField>> nodes;
    };
    struct PinTau {
        std::shared_ptr<const ActivationField> inner;
        double tau = 0.0;
    };
    struct PinTime {
        std::shared_ptr<const ActivationField> inner;
        double t = 0.0;
        double outer = 1.0;
    };
    // Width-homogenized activation family: stabilized per-component
    // descriptors on the integer cells of [0,infinity), window-smoothed and
    // relabeled through tan(pi*tau/2). No Jacobian weight (the tau argument
    // is sampled, not integrated).
    struct WarpedBlend {
        std::vector<ActivationDescriptor> descs;
        double delta = 0.0;
    };
    using Node = std::variant<Desc, Modulated, TimeBlend, TimeBlendFields, PinTau, PinTime, WarpedBlend>;

    ActivationField() : node_(Desc{ActivationDescriptor{ActKind::Identity, 1.0}}) {}
    explicit ActivationField(Node n) : node_(std::move(n)) {}
    ActivationField(ActivationDescriptor d) : node_(Desc{d}) {} // implicit by design

    static ActivationField modulated(ActivationDescriptor d, std::optional<FunctionRep> gain_tau,
                                     std::optional<FunctionRep> gain_t = std::nullopt);
    static ActivationField time_blend(double T, std::vector<ResolvedAct> nodes, double outer = 1.0);
    static ActivationField time_blend_fields(double T, std::vector<ActivationField> nodes,
                                             double outer = 1.0);
    static ActivationField pin_tau(ActivationField inner, double tau);
    static ActivationField pin_time(ActivationField inner, double t, double outer = 1.0);

    ResolvedAct resolve(double tau, double t) const;

    const Node& node() const { return node_; }

private:
    Node node_;
};

// TimeBlend construction from per-layer pointwise activations: element i maps
// to node i*T/ell, scaled by outer.
ActivationField interpolant_depth(std::span<const ResolvedAct> values, double T, double outer = 1.0);

} // namespace dipanet
