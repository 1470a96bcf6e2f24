#include "dipanet/transforms.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "dipanet/rng.hpp"

namespace dipanet {

std::vector<Vec> sphere_inputs(std::size_t dim, std::size_t count, double radius,
                               std::uint64_t seed) {
    SplitMix64 rng(seed);
    std::vector<Vec> xs;
    xs.reserve(count + 1);
    for (std::size_t i = 0; i < count; ++i) {
        Vec x(dim);
        for (double& v : x) {
            double u1 = rng.uniform();
            if (u1 <= 0.0) u1 = 0x1.0p-53;
            const double u2 = rng.uniform();
            v = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
        }
        const double nrm = norm2(x);
        if (nrm < 1e-300) {
            x.assign(dim, 0.0);
            x[0] = radius;
        } else {
            for (double& v : x) v = v / nrm * radius;
        }
        xs.push_back(std::move(x));
    }
    xs.emplace_back(dim, 0.0);
    return xs;
}

// --------------------------- width direction ------------------------------

FiniteNetParams discretize_width(const ContinuumNetParams& params, std::size_t n) {
    params.validate();
    if (n == 0) throw PreconditionError("discretize_width: n must be >= 1");
    const GridSpec grid(n);
    const double dtau = grid.delta();

    FiniteNetParams net;
    net.convention = Convention::sum_of_activations(dtau);
    net.residual = params.residual ? Residual::Skip : Residual::None;

    const std::size_t p = params.input_dim();
    const std::size_t q = params.output_dim();
    net.L = Matrix(n, p);
    net.P = Matrix(q, params.residual ? 2 * n : n);
    Vec lrow(p);
    for (std::size_t j = 0; j < n; ++j) {
        const double tau = grid.node(j);
        params.lift.eval_into({&tau, 1}, lrow);
        for (std::size_t c = 0; c < p; ++c) net.L(j, c) = lrow[c];
        const Matrix pm = params.proj.eval({&tau, 1});
        for (std::size_t r = 0; r < q; ++r) {
            net.P(r, j) = pm(r, 0) * dtau;
            if (params.residual) net.P(r, n + j) = pm(r, 1) * dtau;
        }
    }

    net.W.reserve(params.depth());
    net.act.reserve(params.depth());
    for (std::size_t i = 0; i < params.depth(); ++i) {
        GridKernelSampler sampler(params.kernels[i], grid);
        Matrix w(n, n);
        sampler.fill(0.0, w);
        net.W.push_back(std::move(w));

        LayerActivation a;
        a.outer = 1.0;
        a.comps.reserve(n);
        for (std::size_t j = 0; j < n; ++j)
            a.comps.push_back(params.activations[i].resolve(grid.node(j), 0.0));
        net.act.push_back(std::move(a));
    }
    return net;
}

namespace {

FiniteNetParams family_net(const FamilySlice& slice) {
    FiniteNetParams net;
    net.L = slice.L;
    net.W = slice.W;
    net.P = slice.P;
    net.convention = Convention::sum_of_activations(1.0); // unit cells on [0,infinity)
    net.residual = Residual::None;
    net.act.reserve(slice.act.size());
    for (const auto& layer : slice.act) {
        LayerActivation a;
        a.comps.reserve(layer.size());
        for (const auto& d : layer) a.comps.push_back(resolve(d));
        net.act.push_back(std::move(a));
    }
    return net;
}

double smoothing_delta(double eps, double variation) {
    // The proof's delta = eps / V, kept strictly inside the unit-cell window
    // limit; V below eps already needs no real smoothing.
    return std::min(eps / std::max(variation, eps), 0.25);
}

} // namespace

HomogenizeWidthResult homogenize_width(const MatrixFamily& family, double eps, std::size_t n_max,
                                       const GapProbeOptions& opts) {
    if (!(eps > 0.0)) throw PreconditionError("homogenize_width: eps must be positive");
    if (n_max < 2) throw PreconditionError("homogenize_width: n_max must be >= 2");

    std::vector<std::size_t> all_sizes(n_max);
    for (std::size_t i = 0; i < n_max; ++i) all_sizes[i] = i + 1;
    const ConsistencyReport consistency = check_consistency(family, all_sizes);
    if (!consistency.pass)
        throw PreconditionError("homogenize_width: family is not consistent, first violation at " +
                                consistency.first_violation);
    const VariationReport variation = sequence_variation(family, n_max);
    if (variation.diverged)
        throw PreconditionError("homogenize_width: family variation exceeds the divergence cap");

    const FamilySlice stable = family.slice(n_max);
    const std::size_t p = family.input_dim();
    const std::size_t q = family.output_dim();

    ContinuumNetParams cont;
    cont.residual = false;
    {
        FunctionRep::HomogenizedLine lift;
        lift.delta = smoothing_delta(eps, variation.l_var);
        lift.jacobian = false; // the lift is sampled, not integrated
        for (std::size_t j = 0; j < n_max; ++j) {
            Matrix row(1, p);
            for (std::size_t c = 0; c < p; ++c) row(0, c) = stable.L(j, c);
            lift.levels.push_back(std::move(row));
        }
        cont.lift = FunctionRep(Domain::Unit, 0.0, 1, p, std::move(lift));
    }
    {
        FunctionRep::HomogenizedLine proj;
        proj.delta = smoothing_delta(eps, variation.p_var);
        proj.jacobian = true; // output integral over tau
        for (std::size_t j = 0; j < n_max; ++j) {
            Matrix col(q, 1);
            for (std::size_t r = 0; r < q; ++r) col(r, 0) = stable.P(r, j);
            proj.levels.push_back(std::move(col));
        }
        cont.proj = FunctionRep(Domain::Unit, 0.0, q, 1, std::move(proj));
    }
    for (std::size_t i = 0; i < family.layers(); ++i) {
        FunctionRep::HomogenizedKernel k;
        k.delta = smoothing_delta(eps, variation.w_var[i]);
        k.jacobian_s = true; // s is integrated
        k.levels = stable.W[i];
        cont.kernels.push_back(FunctionRep(Domain::UnitSquare, 0.0, 1, 1, std::move(k)));

        ActivationField::WarpedBlend wb;
        wb.delta = smoothing_delta(eps, variation.sigma_var[i]);
        wb.descs = stable.act[i];
        cont.activations.push_back(ActivationField(ActivationField::Node(std::move(wb))));
    }

    HomogenizeWidthResult result;
    result.params = cont;

    const std::vector<Vec> inputs = sphere_inputs(p, opts.input_count, opts.radius, opts.seed);
    EvalOptions eopts;
    eopts.threads = opts.threads;
    const std::vector<Vec> cont_y = eval_deepcnn_batch(cont, inputs, opts.eval_m, eopts);

    std::vector<std::size_t> probe_sizes;
    for (std::size_t n = 1; n <= n_max; n *= 2) probe_sizes.push_back(n);
    if (probe_sizes.back() != n_max) probe_sizes.push_back(n_max);
    for (std::size_t n : probe_sizes) {
        const FiniteNetParams net = family_net(family.slice(n));
        double gap = 0.0;
        for (std::size_t b = 0; b < inputs.size(); ++b)
            gap = std::max(gap, norm2_diff(eval_finite(net, inputs[b]), cont_y[b]));
        result.gaps.emplace_back(n, gap);
        if (result.certificate_n == 0 && gap <= eps) result.certificate_n = n;
        result.max_gap = gap;
    }
    return result;
}

// --------------------------- depth direction ------------------------------

FiniteNetParams discretize_depth(const OdeNetParams& params, std::size_t ell) {
    params.validate();
    if (ell == 0) throw PreconditionError("discretize_depth: ell must be >= 1");
    const TimeGrid grid(ell, params.T);
    const double h = grid.step();
    const std::size_t n = params.width();

    FiniteNetParams net;
    net.L = params.L;
    net.P = params.P;
    net.convention = params.convention;
    net.residual = params.residual ? Residual::Skip : Residual::Plain;
    net.W.reserve(ell);
    net.act.reserve(ell);
    const bool broadcast = params.activation.size() == 1;
    for (std::size_t i = 0; i < ell; ++i) {
        const double t = grid.node(i);
        Matrix w;
        params.kernel.fill(t, w);
        net.W.push_back(std::move(w));

        LayerActivation a;
        a.outer = h; // the Euler step weight; applied outside the layer sum
        if (broadcast) {
            a.comps.push_back(params.activation.front().resolve(0.0, t));
        } else {
            a.comps.reserve(n);
            for (std::size_t j = 0; j < n; ++j) a.comps.push_back(params.activation[j].resolve(0.0, t));
        }
        net.act.push_back(std::move(a));
    }
    return net;
}

HomogenizeDepthResult homogenize_depth(std::span<const FiniteNetParams> nets, double T,
                                       const GapProbeOptions& opts) {
    if (nets.empty()) throw PreconditionError("homogenize_depth: no nets supplied");
    const FiniteNetParams* deepest = &nets.front();
    for (const auto& net : nets) {
        net.validate();
        if (net.residual == Residual::None)
            throw StructuralError("homogenize_depth: nets must be residual");
        if (!(net.L == nets.front().L) || !(net.P == nets.front().P) ||
            net.residual != nets.front().residual || !(net.convention == nets.front().convention))
            throw StructuralError("homogenize_depth: nets must share L, P, residual form and convention");
        if (net.depth() > deepest->depth()) deepest = &net;
    }

    const std::size_t ell = deepest->depth();
    const std::size_t n = deepest->width();
    OdeNetParams ode;
    ode.L = deepest->L;
    ode.P = deepest->P;
    ode.T = T;
    ode.convention = deepest->convention;
    ode.residual = deepest->residual == Residual::Skip;
    ode.kernel = OdeKernel::from_function(interpolant_depth(deepest->W, T));

    const double inv_h = static_cast<double>(ell) / T;
    bool all_broadcast = true;
    for (const auto& layer : deepest->act) all_broadcast = all_broadcast && layer.comps.size() == 1;
    if (all_broadcast) {
        std::vector<ResolvedAct> nodes;
        nodes.reserve(ell);
        for (const auto& layer : deepest->act)
            nodes.push_back(scale_resolved(layer.comps.front(), inv_h * layer.outer));
        ode.activation.push_back(ActivationField::time_blend(T, std::move(nodes)));
    } else {
        ode.activation.reserve(n);
        for (std::size_t j = 0; j < n; ++j) {
            std::vector<ResolvedAct> nodes;
            nodes.reserve(ell);
            for (const auto& layer : deepest->act)
                nodes.push_back(scale_resolved(layer.at(j), inv_h * layer.outer));
            ode.activation.push_back(ActivationField::time_blend(T, std::move(nodes)));
        }
    }

    HomogenizeDepthResult result;
    result.ode = ode;
    const std::vector<Vec> inputs = sphere_inputs(deepest->input_dim(), opts.input_count,
                                                  opts.radius, opts.seed);
    EvalOptions eopts;
    eopts.threads = opts.threads;
    const Solver ref = Solver::rk4(opts.ref_multiplier * ell);
    const OdeOutputs ref_out = eval_neuralode_batch(ode, inputs, ref, eopts);
    for (const auto& net : nets) {
        double gap = 0.0;
        for (std::size_t b = 0; b < inputs.size(); ++b)
            gap = std::max(gap, norm2_diff(eval_finite(net, inputs[b]), ref_out.y[b]));
        result.gaps.emplace_back(net.depth(), gap);
    }
    return result;
}

// ------------------------ distributed parameter ---------------------------

OdeNetParams discretize_dipanet_width(const DipanetParams& params, std::size_t n) {
    return dipanet_method_of_lines(params, n);
}

ContinuumNetParams discretize_dipanet_depth(const DipanetParams& params, std::size_t ell) {
    params.validate();
    if (ell == 0) throw PreconditionError("discretize_dipanet_depth: ell must be >= 1");
    const TimeGrid grid(ell, params.T);
    const double h = grid.step();

    ContinuumNetParams out;
    out.lift = params.lift;
    out.residual = true; // the layer recursion is residual by construction
    out.proj = params.residual ? params.proj : params.proj.extend_columns_zero(1);
    out.kernels.reserve(ell);
    out.activations.reserve(ell);
    for (std::size_t i = 0; i < ell; ++i) {
        const double t = grid.node(i);
        out.kernels.push_back(params.kernel.time_slice(t));
        out.activations.push_back(ActivationField::pin_time(params.activation, t, h));
    }
    return out;
}

HomogenizeRescnnResult homogenize_rescnn_depth(std::span<const ContinuumNetParams> nets, double T,
                                               const GapProbeOptions& opts) {
    if (nets.empty()) throw PreconditionError("homogenize_rescnn_depth: no nets supplied");
    const ContinuumNetParams* deepest = &nets.front();
    for (const auto& net : nets) {
        net.validate();
        if (!net.residual) throw StructuralError("homogenize_rescnn_depth: nets must be residual");
        if (net.input_dim() != nets.front().input_dim() || net.output_dim() != nets.front().output_dim())
            throw StructuralError("homogenize_rescnn_depth: nets must share lift/proj shapes");
        if (net.depth() > deepest->depth()) deepest = &net;
    }
    const std::size_t ell = deepest->depth();

    DipanetParams out;
    out.lift = deepest->lift;
    out.proj = deepest->proj;
    out.T = T;
    out.residual = true;

    FunctionRep::TimeStack stack;
    const TimeGrid grid(ell, T);
    for (std::size_t i = 0; i < ell; ++i) {
        stack.positions.push_back(grid.node(i));
        stack.slices.push_back(deepest->kernels[i]);
    }
    out.kernel = FunctionRep(Domain::UnitSquareTime, T, 1, 1, std::move(stack));

    out.activation = ActivationField::time_blend_fields(
        T, std::vector<ActivationField>(deepest->activations.begin(), deepest->activations.end()),
        static_cast<double>(ell) / T);

    HomogenizeRescnnResult result;
    result.params = out;
    const std::vector<Vec> inputs = sphere_inputs(out.input_dim(), opts.input_count, opts.radius,
                                                  opts.seed);
    EvalOptions eopts;
    eopts.threads = opts.threads;
    eopts.work_budget = std::max<std::uint64_t>(
        eopts.work_budget, static_cast<std::uint64_t>(opts.eval_m) * opts.ref_multiplier * ell * 4);
    const Solver ref = Solver::rk4(opts.ref_multiplier * ell);
    const OdeOutputs ref_out = eval_dipanet_batch(out, inputs, opts.eval_m, ref, eopts);
    for (const auto& net : nets) {
        const std::vector<Vec> net_y = eval_deepcnn_batch(net, inputs, opts.eval_m, eopts);
        double gap = 0.0;
        for (std::size_t b = 0; b < inputs.size(); ++b)
            gap = std::max(gap, norm2_diff(net_y[b], ref_out.y[b]));
        result.gaps.emplace_back(net.depth(), gap);
    }
    return result;
}

FiniteNetParams roundtrip_corollary1(const DipanetParams& params, std::size_t n, std::size_t ell,
                                     Route route) {
    if (n == 0 || ell == 0) throw PreconditionError("roundtrip_corollary1: n and ell must be >= 1");
    if (route == Route::WidthThenDepth)
        return discretize_depth(discretize_dipanet_width(params, n), ell);
    return discretize_width(discretize_dipanet_depth(params, ell), n);
}

} // namespace dipanet
