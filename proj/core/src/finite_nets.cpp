#include "dipanet/finite_nets.hpp"

#include <string>

namespace dipanet {

void FiniteNetParams::validate() const {
    const std::size_t n = width();
    if (n == 0 || depth() == 0) throw StructuralError("FiniteNetParams: empty net");
    for (const auto& w : W)
        if (w.rows() != n || w.cols() != n) throw StructuralError("FiniteNetParams: W shape mismatch");
    if (act.size() != depth()) throw StructuralError("FiniteNetParams: one activation per layer required");
    for (const auto& a : act)
        if (a.comps.size() != 1 && a.comps.size() != n)
            throw StructuralError("FiniteNetParams: activation component count mismatch");
    const std::size_t want_cols = residual == Residual::Skip ? 2 * n : n;
    if (P.cols() != want_cols)
        throw StructuralError("FiniteNetParams: P must have " + std::to_string(want_cols) + " columns");
    if (convention.kind == Convention::Kind::SumOfActivations && !(convention.dtau > 0.0))
        throw StructuralError("FiniteNetParams: SumOfActivations needs dtau > 0");
}

namespace {

void check_layer_finite(std::span<const double> z, std::size_t layer) {
    if (!all_finite(z))
        throw DivergenceError("finite net: non-finite hidden state after layer " + std::to_string(layer + 1),
                              static_cast<long>(layer));
}

} // namespace

Vec eval_finite(const FiniteNetParams& params, const Vec& x, Trace* trace) {
    params.validate();
    if (x.size() != params.input_dim()) throw StructuralError("eval: input dimension mismatch");
    const std::size_t n = params.width();
    const bool residual = params.residual != Residual::None;
    const bool sum_form = params.convention.kind == Convention::Kind::SumOfActivations;
    const double dtau = params.convention.dtau;

    Vec z0 = matvec(params.L, x);
    if (trace) {
        trace->clear();
        trace->push_back(z0);
    }
    Vec z = z0, layer_val(n), u(n);
    for (std::size_t i = 0; i < params.depth(); ++i) {
        const LayerActivation& act = params.act[i];
        if (sum_form) {
            for (std::size_t j = 0; j < n; ++j)
                layer_val[j] = dtau * row_accumulate(act.at(j), params.W[i].row(j), z);
        } else {
            matvec(params.W[i], z, u);
            for (std::size_t j = 0; j < n; ++j) layer_val[j] = act.at(j)(u[j]);
        }
        if (residual) {
            for (std::size_t j = 0; j < n; ++j) z[j] += act.outer * layer_val[j];
        } else {
            for (std::size_t j = 0; j < n; ++j) z[j] = act.outer * layer_val[j];
        }
        check_layer_finite(z, i);
        if (trace) trace->push_back(z);
    }

    if (params.residual == Residual::Skip) {
        Vec state(2 * n);
        std::copy(z.begin(), z.end(), state.begin());
        std::copy(z0.begin(), z0.end(), state.begin() + static_cast<std::ptrdiff_t>(n));
        return matvec(params.P, state);
    }
    return matvec(params.P, z);
}

Vec eval_deepnet(const FiniteNetParams& params, const Vec& x, Trace* trace) {
    if (params.residual != Residual::None)
        throw PreconditionError("eval_deepnet: params carry a residual flag; use eval_deepresnet");
    return eval_finite(params, x, trace);
}

Vec eval_deepresnet(const FiniteNetParams& params, const Vec& x, Trace* trace) {
    if (params.residual == Residual::None)
        throw PreconditionError("eval_deepresnet: params have no residual flag; use eval_deepnet");
    return eval_finite(params, x, trace);
}

Vec augment_input(const Vec& x) {
    Vec out = x;
    out.push_back(1.0);
    return out;
}

FiniteNetParams with_bias(const FiniteNetParams& params, const Vec& lift_bias,
                          const std::vector<Vec>& layer_biases) {
    params.validate();
    const std::size_t n = params.width();
    if (lift_bias.size() != n) throw StructuralError("with_bias: lift bias size mismatch");
    if (layer_biases.size() != params.depth()) throw StructuralError("with_bias: one bias per layer required");
    const bool residual = params.residual != Residual::None;

    FiniteNetParams out;
    out.convention = params.convention;
    out.residual = params.residual;

    // L' = [[L, b_L], [0, 1]]: lifting [X,1] yields [LX + b_L, 1].
    out.L = Matrix(n + 1, params.input_dim() + 1);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < params.input_dim(); ++j) out.L(i, j) = params.L(i, j);
        out.L(i, params.input_dim()) = lift_bias[i];
    }
    out.L(n, params.input_dim()) = 1.0;

    for (std::size_t layer = 0; layer < params.depth(); ++layer) {
        if (layer_biases[layer].size() != n) throw StructuralError("with_bias: layer bias size mismatch");
        Matrix w(n + 1, n + 1);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < n; ++j) w(i, j) = params.W[layer](i, j);
            w(i, n) = layer_biases[layer][i];
        }
        // Carrier component: plain layers reproduce 1 through an identity
        // activation on w*z = 1; residual layers add zero instead.
        if (!residual) w(n, n) = 1.0;
        out.W.push_back(std::move(w));

        const LayerActivation& src = params.act[layer];
        LayerActivation a;
        a.outer = src.outer;
        a.comps.reserve(n + 1);
        for (std::size_t j = 0; j < n; ++j) a.comps.push_back(src.at(j));
        ResolvedAct carrier;
        if (residual) {
            carrier.push(ActKind::Zero, 0.0);
        } else {
            // Undo the outer factor so the carrier stays exactly 1.
            carrier.push(ActKind::Identity, src.outer == 1.0 ? 1.0 : 1.0 / src.outer);
        }
        a.comps.push_back(carrier);
        out.act.push_back(std::move(a));
    }

    const std::size_t pcols = params.P.cols();
    const bool skip = params.residual == Residual::Skip;
    out.P = Matrix(params.output_dim(), skip ? 2 * (n + 1) : n + 1);
    for (std::size_t r = 0; r < params.output_dim(); ++r) {
        for (std::size_t c = 0; c < n; ++c) out.P(r, c) = params.P(r, c);
        if (skip)
            for (std::size_t c = n; c < pcols; ++c) out.P(r, c + 1) = params.P(r, c);
    }
    return out;
}

} // namespace dipanet
