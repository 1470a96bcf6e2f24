#include "dipanet/activation.hpp"
#include "dipanet/activation_field.hpp"

#include <algorithm>

namespace dipanet {

const char* to_string(ActKind k) {
    switch (k) {
        case ActKind::Zero: return "zero";
        case ActKind::Identity: return "identity";
        case ActKind::Relu: return "relu";
        case ActKind::Tanh: return "tanh";
    }
    return "zero";
}

ActKind act_kind_from_string(const std::string& s) {
    if (s == "zero") return ActKind::Zero;
    if (s == "identity") return ActKind::Identity;
    if (s == "relu") return ActKind::Relu;
    if (s == "tanh") return ActKind::Tanh;
    throw StructuralError("unknown activation kind: " + s);
}

ResolvedAct scale_resolved(const ResolvedAct& r, double factor) {
    ResolvedAct out = r;
    for (int i = 0; i < out.count; ++i) out.scale[i] = factor * out.scale[i];
    return out;
}

ActivationField ActivationField::modulated(ActivationDescriptor d, std::optional<FunctionRep> gain_tau,
                                           std::optional<FunctionRep> gain_t) {
    if (gain_tau) {
        if (gain_tau->domain() != Domain::Unit || gain_tau->rows() != 1 || gain_tau->cols() != 1)
            throw StructuralError("ActivationField: gain_tau must be scalar on [0,1)");
    }
    if (gain_t) {
        if (gain_t->domain() != Domain::Time || gain_t->rows() != 1 || gain_t->cols() != 1)
            throw StructuralError("ActivationField: gain_t must be scalar on [0,T]");
    }
    return ActivationField(Modulated{d, std::move(gain_tau), std::move(gain_t)});
}

ActivationField ActivationField::time_blend(double T, std::vector<ResolvedAct> nodes, double outer) {
    if (nodes.empty()) throw PreconditionError("ActivationField::time_blend: no nodes");
    if (!(T > 0.0)) throw PreconditionError("ActivationField::time_blend: T must be positive");
    return ActivationField(TimeBlend{T, outer, std::move(nodes)});
}

ActivationField ActivationField::time_blend_fields(double T, std::vector<ActivationField> nodes,
                                                   double outer) {
    if (nodes.empty()) throw PreconditionError("ActivationField::time_blend_fields: no nodes");
    TimeBlendFields tb;
    tb.T = T;
    tb.outer = outer;
    tb.nodes.reserve(nodes.size());
    for (auto& n : nodes) tb.nodes.push_back(std::make_shared<const ActivationField>(std::move(n)));
    return ActivationField(std::move(tb));
}

ActivationField ActivationField::pin_tau(ActivationField inner, double tau) {
    return ActivationField(PinTau{std::make_shared<const ActivationField>(std::move(inner)), tau});
}

ActivationField ActivationField::pin_time(ActivationField inner, double t, double outer) {
    return ActivationField(PinTime{std::make_shared<const ActivationField>(std::move(inner)), t, outer});
}

namespace {

// Node index and blend weight for time t against nodes i*T/ell, i=0..ell-1,
// constant on the final interval.
struct BlendPos {
    std::size_t left;
    double weight; // 0 => pure left node
};

BlendPos blend_position(double T, std::size_t count, double t) {
    if (count == 1) return {0, 0.0};
    TimeGrid grid(count, T);
    const double last = grid.node(count - 1);
    if (t >= last) return {count - 1, 0.0};
    if (t <= 0.0) return {0, 0.0};
    std::size_t i = grid.cell(t);
    if (i >= count - 1) return {count - 1, 0.0};
    const double a = grid.node(i), b = grid.node(i + 1);
    return {i, (t - a) / (b - a)};
}

void append_scaled(ResolvedAct& out, const ResolvedAct& in, double factor) {
    for (int i = 0; i < in.count; ++i) out.push(in.kind[i], factor * in.scale[i]);
}

} // namespace

ResolvedAct ActivationField::resolve(double tau, double t) const {
    ResolvedAct out;
    if (const auto* d = std::get_if<Desc>(&node_)) {
        out.push(d->d.kind, d->d.scale);
        return out;
    }
    if (const auto* m = std::get_if<Modulated>(&node_)) {
        double s = m->d.scale;
        if (m->gain_tau) s = s * m->gain_tau->eval_scalar1(tau);
        if (m->gain_t) s = s * m->gain_t->eval_scalar1(t);
        out.push(m->d.kind, s);
        return out;
    }
    if (const auto* tb = std::get_if<TimeBlend>(&node_)) {
        const BlendPos pos = blend_position(tb->T, tb->nodes.size(), t);
        if (pos.weight == 0.0) {
            append_scaled(out, tb->nodes[pos.left], tb->outer);
        } else {
            append_scaled(out, tb->nodes[pos.left], (1.0 - pos.weight) * tb->outer);
            append_scaled(out, tb->nodes[pos.left + 1], pos.weight * tb->outer);
        }
        return out;
    }
    if (const auto* tf = std::get_if<TimeBlendFields>(&node_)) {
        const BlendPos pos = blend_position(tf->T, tf->nodes.size(), t);
        if (pos.weight == 0.0) {
            append_scaled(out, tf->nodes[pos.left]->resolve(tau, t), tf->outer);
        } else {
            append_scaled(out, tf->nodes[pos.left]->resolve(tau, t), (1.0 - pos.weight) * tf->outer);
            append_scaled(out, tf->nodes[pos.left + 1]->resolve(tau, t), pos.weight * tf->outer);
        }
        return out;
    }
    if (const auto* pt = std::get_if<PinTau>(&node_)) {
        return pt->inner->resolve(pt->tau, t);
    }
    if (const auto* wb = std::get_if<WarpedBlend>(&node_)) {
        const double theta = smoothing_coordinate(tan_warp(tau), wb->delta, wb->descs.size());
        const auto lo = static_cast<std::size_t>(theta);
        const double w = theta - static_cast<double>(lo);
        if (w == 0.0 || lo + 1 == wb->descs.size()) {
            out.push(wb->descs[lo].kind, wb->descs[lo].scale);
        } else {
            out.push(wb->descs[lo].kind, (1.0 - w) * wb->descs[lo].scale);
            out.push(wb->descs[lo + 1].kind, w * wb->descs[lo + 1].scale);
        }
        return out;
    }
    const auto& pn = std::get<PinTime>(node_);
    return scale_resolved(pn.inner->resolve(tau, pn.t), pn.outer);
}

ActivationField interpolant_depth(std::span<const ResolvedAct> values, double T, double outer) {
    if (values.empty()) throw PreconditionError("interpolant_depth: need at least one activation");
    return ActivationField::time_blend(T, {values.begin(), values.end()}, outer);
}

} // namespace dipanet
