#include "dipanet/selftest.hpp"

#include <cmath>
#include <functional>
#include <numbers>
#include <vector>

#include "dipanet/harness.hpp"
#include "dipanet/io.hpp"
#include "dipanet/rng.hpp"

namespace dipanet {

namespace {

bool close_rel(double a, double b, double tol) {
    const double scale = std::max({1.0, std::abs(a), std::abs(b)});
    return std::abs(a - b) <= tol * scale;
}

bool close_rel(const Vec& a, const Vec& b, double tol) {
    double scale = 1.0;
    for (double v : a) scale = std::max(scale, std::abs(v));
    for (double v : b) scale = std::max(scale, std::abs(v));
    return norm2_diff(a, b) <= tol * scale;
}

// --------------------------- numerics checks ------------------------------

bool quad_left_pwc_exact() {
    SplitMix64 rng(11);
    const std::size_t n = 16;
    Vec samples(n);
    for (double& v : samples) v = rng.uniform(-3.0, 3.0);
    const double got = quad_left(samples, 1.0 / 16.0);
    long double exact = 0.0L;
    for (double v : samples) exact += static_cast<long double>(v);
    exact /= 16.0L;
    const double ulp = std::ldexp(std::numeric_limits<double>::epsilon(),
                                  std::ilogb(std::max(1.0, std::abs(got))));
    return std::abs(got - static_cast<double>(exact)) <= 8.0 * ulp;
}

bool euler_zero_field_constant() {
    const Vec z0 = {1.25, -0.5, 3.0};
    auto field = [](double, std::span<const double>, std::span<double> dz) {
        for (double& v : dz) v = 0.0;
    };
    const Trajectory t = euler_solve(field, z0, TimeGrid(7, 2.0));
    for (const Vec& z : t.states)
        if (z != z0) return false;
    return true;
}

bool euler_linear_closed_form() {
    auto field = [](double, std::span<const double> z, std::span<double> dz) { dz[0] = z[0]; };
    const std::size_t ell = 8;
    const Trajectory t = euler_solve(field, {1.0}, TimeGrid(ell, 1.0));
    double expect = 1.0;
    const double h = 1.0 / static_cast<double>(ell);
    for (std::size_t i = 0; i < ell; ++i) expect += h * expect;
    return t.final()[0] == expect;
}

bool linear_smooth_bound() {
    PiecewiseConstantFn pwc;
    pwc.breaks = {0.0, 1.0, 2.0, 3.5};
    pwc.levels = {{0.0}, {1.0}, {-0.5}, {2.0}};
    const double delta = 0.125;
    const PiecewiseLinearFn sm = linear_smooth(pwc, delta);
    // continuity at window edges
    for (std::size_t k = 1; k < pwc.breaks.size(); ++k) {
        for (double edge : {pwc.breaks[k] - delta, pwc.breaks[k] + delta}) {
            const double lo = sm.eval(std::nextafter(edge, -1e300))[0];
            const double hi = sm.eval(std::nextafter(edge, 1e300))[0];
            if (std::abs(hi - lo) > 4 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(lo)))
                return false;
        }
    }
    const double measured = smooth_l1_gap(pwc, sm, delta);
    const double v = pwc.variation();
    return measured <= delta * v * (1.0 + 1e-9) && close_rel(measured, delta * v / 2.0, 1e-3);
}

bool total_variation_refinement() {
    std::vector<Vec> coarse = {{0.0}, {1.0}, {1.0}, {-2.0}};
    std::vector<Vec> refined;
    for (const Vec& v : coarse) {
        refined.push_back(v);
        refined.push_back(v); // duplicate = refine the cell
    }
    return total_variation(coarse) == total_variation(refined);
}

bool tan_compress_monotone() {
    auto expg = tan_compress([](double x) { return std::exp(-x); });
    auto rat = tan_compress([](double x) { return 1.0 / ((1.0 + x) * (1.0 + x)); });
    for (auto& fn : {std::function<double(double)>(expg), std::function<double(double)>(rat)}) {
        double prev = 1e300;
        for (std::size_t n = 256; n <= 4096; n *= 2) {
            GridSpec grid(n);
            Vec samples(n);
            for (std::size_t j = 0; j < n; ++j) samples[j] = fn(grid.node(j));
            const double err = std::abs(quad_left(samples, grid.delta()) - 1.0);
            if (err >= prev) return false;
            prev = err;
        }
    }
    return true;
}

// ---------------------------- funcrep checks ------------------------------

bool projection_composition() {
    for (std::size_t n = 1; n <= 8; ++n) {
        const Matrix eye = projection(n, n);
        if (!(eye == Matrix::identity(n))) return false;
        for (std::size_t np = n; np <= 8; ++np)
            for (std::size_t npp = np; npp <= 8; ++npp) {
                const Matrix a = projection(n, np);
                const Matrix b = projection(np, npp);
                const Matrix c = projection(n, npp);
                Matrix ab(n, npp);
                for (std::size_t i = 0; i < n; ++i)
                    for (std::size_t k = 0; k < npp; ++k) {
                        double s = 0.0;
                        for (std::size_t j = 0; j < np; ++j) s += a(i, j) * b(j, k);
                        ab(i, k) = s;
                    }
                if (!(ab == c)) return false;
            }
    }
    return true;
}

MatrixFamily demo_family() {
    return make_consistent_family(
        2, 1, 1, [](std::size_t j) { return Vec{std::pow(0.5, static_cast<double>(j))}; },
        [](std::size_t layer, std::size_t j, std::size_t k) {
            return (j == k ? 0.7 : 0.1) / static_cast<double>((layer + 1) * (j + 1) * (k + 1));
        },
        [](std::size_t j) { return Vec{1.0 / static_cast<double>((j + 1) * (j + 1))}; },
        [](std::size_t layer, std::size_t j) {
            return ActivationDescriptor{(layer + j) % 2 == 0 ? ActKind::Tanh : ActKind::Relu, 1.0};
        });
}

bool constructor_family_consistent() {
    const MatrixFamily fam = demo_family();
    const std::vector<std::size_t> sizes = {1, 2, 3, 5, 8};
    const ConsistencyReport rep = check_consistency(fam, sizes);
    return rep.pass && rep.max_residual == 0.0;
}

bool interpolant_nodes_bitwise() {
    std::vector<Matrix> vals;
    SplitMix64 rng(5);
    for (int i = 0; i < 4; ++i) {
        Matrix m(2, 2);
        for (double& v : m.flat()) v = rng.uniform(-1.0, 1.0);
        vals.push_back(std::move(m));
    }
    const FunctionRep f = interpolant_depth(vals, 2.0);
    const TimeGrid grid(vals.size(), 2.0);
    for (std::size_t i = 0; i < vals.size(); ++i) {
        const double t = grid.node(i);
        if (!(f.eval({&t, 1}) == vals[i])) return false;
    }
    return true;
}

bool pwc_right_continuity() {
    FunctionRep::PiecewiseConstant pc;
    pc.n = 5;
    for (std::size_t j = 0; j < 5; ++j) pc.values.push_back(Matrix(1, 1, {static_cast<double>(j)}));
    const FunctionRep f(Domain::Unit, 0.0, 1, 1, std::move(pc));
    const GridSpec grid(5);
    for (std::size_t j = 0; j < 5; ++j)
        if (f.eval_scalar1(grid.node(j)) != static_cast<double>(j)) return false;
    return true;
}

// -------------------------- finite net checks -----------------------------

bool finite_linearity() {
    const RandomSpec spec{.architecture = "deepnet", .p = 3, .q = 2, .n = 4, .ell = 3,
                          .amplitude = 0.8, .activation = "identity"};
    FiniteNetParams net = as_finite(random_params(42, spec));
    SplitMix64 rng(7);
    for (int trial = 0; trial < 5; ++trial) {
        Vec x1(3), x2(3), mix(3);
        for (std::size_t i = 0; i < 3; ++i) {
            x1[i] = rng.uniform(-1.0, 1.0);
            x2[i] = rng.uniform(-1.0, 1.0);
        }
        const double a = rng.uniform(-2.0, 2.0), b = rng.uniform(-2.0, 2.0);
        for (std::size_t i = 0; i < 3; ++i) mix[i] = a * x1[i] + b * x2[i];
        const Vec y1 = eval_deepnet(net, x1);
        const Vec y2 = eval_deepnet(net, x2);
        Vec want(2);
        for (std::size_t i = 0; i < 2; ++i) want[i] = a * y1[i] + b * y2[i];
        if (!close_rel(eval_deepnet(net, mix), want, 1e-12)) return false;
    }
    return true;
}

bool finite_zero_activation() {
    RandomSpec spec{.architecture = "deepnet", .p = 2, .q = 2, .n = 3, .ell = 2,
                    .amplitude = 1.0, .activation = "zero"};
    const FiniteNetParams net = as_finite(random_params(3, spec));
    const Vec x = {0.3, -0.7};
    for (double v : eval_deepnet(net, x))
        if (v != 0.0) return false;

    spec.architecture = "deepresnet";
    const FiniteNetParams res = as_finite(random_params(3, spec));
    const Vec y = eval_deepresnet(res, x);
    const Vec want = matvec(res.P, matvec(res.L, x));
    return y == want;
}

bool finite_trace_layout() {
    const RandomSpec spec{.architecture = "deepresnet", .p = 2, .q = 1, .n = 3, .ell = 4};
    const FiniteNetParams net = as_finite(random_params(8, spec));
    const Vec x = {0.2, 0.4};
    Trace trace;
    eval_deepresnet(net, x, &trace);
    return trace.size() == 5 && trace[0] == matvec(net.L, x);
}

bool soa_matches_standard_scalar() {
    FiniteNetParams a;
    a.L = Matrix(1, 1, {1.0});
    a.W.push_back(Matrix(1, 1, {1.7}));
    a.P = Matrix(1, 1, {1.0});
    a.act.push_back(LayerActivation(ActivationDescriptor{ActKind::Tanh, 1.0}));
    a.convention = Convention::standard();
    FiniteNetParams b = a;
    b.convention = Convention::sum_of_activations(1.0);
    const Vec x = {0.6};
    return eval_deepnet(a, x) == eval_deepnet(b, x);
}

// -------------------------- continuum checks ------------------------------

bool lemma3_equivalence() {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const RandomSpec spec{.architecture = "neuralode", .p = 2, .q = 2, .n = 3, .ell = 1,
                              .amplitude = 0.7};
        const OdeNetParams ode = as_ode(random_params(seed, spec));
        const std::vector<Vec> xs = sphere_inputs(2, 3, 1.0, seed);
        for (Solver s : {Solver::euler(64), Solver::rk4(32)}) {
            const OdeOutputs out = eval_neuralode_batch(ode, xs, s);
            for (std::size_t b = 0; b < xs.size(); ++b)
                if (!close_rel(out.y[b], out.y_integral_form[b], 1e-10)) return false;
        }
    }
    return true;
}

bool dipanet_form_equivalence() {
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
        const RandomSpec spec{.architecture = "dipanet", .p = 2, .q = 1, .amplitude = 0.7};
        const DipanetParams net = as_dipanet(random_params(seed, spec));
        const std::vector<Vec> xs = sphere_inputs(2, 2, 1.0, seed);
        const OdeOutputs out = eval_dipanet_batch(net, xs, 16, Solver::euler(32));
        for (std::size_t b = 0; b < xs.size(); ++b)
            if (!close_rel(out.y[b], out.y_integral_form[b], 1e-10)) return false;
    }
    return true;
}

bool dipanet_mol_bitwise() {
    const DipanetParams net = as_dipanet(
        random_params(9, RandomSpec{.architecture = "dipanet", .p = 2, .q = 2, .amplitude = 0.6}));
    const Vec x = {0.4, -0.3};
    for (Solver s : {Solver::euler(16), Solver::rk4(8)}) {
        const Vec direct = eval_dipanet(net, x, 12, s);
        const Vec via_ode = eval_neuralode(dipanet_method_of_lines(net, 12), x, s);
        if (!(direct == via_ode)) return false;
    }
    return true;
}

bool deepcnn_doubling_monotone() {
    const ContinuumNetParams net = lipschitz_kernel_cnn();
    const Vec x = {0.9};
    const Vec ref = eval_deepcnn(net, x, 2048);
    double prev = 1e300;
    for (std::size_t m = 16; m <= 256; m *= 2) {
        const double err = norm2_diff(eval_deepcnn(net, x, m), ref);
        if (err >= prev) return false;
        prev = err;
    }
    return true;
}

// -------------------------- transform checks ------------------------------

ContinuumNetParams aligned_pwc_cnn(std::size_t n, std::uint64_t seed) {
    SplitMix64 rng(seed);
    ContinuumNetParams net;
    {
        FunctionRep::PiecewiseConstant pc;
        pc.n = n;
        for (std::size_t j = 0; j < n; ++j) {
            Matrix m(1, 2);
            m(0, 0) = rng.uniform(-1.0, 1.0);
            m(0, 1) = rng.uniform(-1.0, 1.0);
            pc.values.push_back(std::move(m));
        }
        net.lift = FunctionRep(Domain::Unit, 0.0, 1, 2, std::move(pc));
    }
    {
        FunctionRep::PiecewiseConstant pc;
        pc.n = n;
        for (std::size_t c = 0; c < n * n; ++c)
            pc.values.push_back(Matrix(1, 1, {rng.uniform(-1.0, 1.0)}));
        net.kernels.push_back(FunctionRep(Domain::UnitSquare, 0.0, 1, 1, std::move(pc)));
    }
    net.activations.push_back(ActivationField(ActivationDescriptor{ActKind::Tanh, 1.0}));
    {
        FunctionRep::PiecewiseConstant pc;
        pc.n = n;
        for (std::size_t j = 0; j < n; ++j) pc.values.push_back(Matrix(1, 1, {rng.uniform(-1.0, 1.0)}));
        net.proj = FunctionRep(Domain::Unit, 0.0, 1, 1, std::move(pc));
    }
    return net;
}

bool exact_recovery_aligned() {
    for (std::size_t n : {8UL, 16UL}) {
        const ContinuumNetParams cnn = aligned_pwc_cnn(n, 100 + n);
        const FiniteNetParams net = discretize_width(cnn, n);
        const std::vector<Vec> xs = sphere_inputs(2, 50, 1.0, 17);
        for (const Vec& x : xs)
            if (!close_rel(eval_finite(net, x), eval_deepcnn(cnn, x, n), 1e-12)) return false;
    }
    return true;
}

bool euler_identity_bitwise() {
    const OdeNetParams ode = as_ode(random_params(
        21, RandomSpec{.architecture = "neuralode", .p = 2, .q = 2, .n = 3, .amplitude = 0.8}));
    const std::size_t ell = 16;
    const FiniteNetParams net = discretize_depth(ode, ell);
    const Vec x = {0.5, -0.25};
    const Vec via_net = eval_deepresnet(net, x);
    const Vec via_euler = eval_neuralode(ode, x, Solver::euler(ell));
    return via_net == via_euler;
}

bool route_commutation() {
    const DipanetParams mf = mean_field_dipanet();
    const Vec x = {0.75};
    for (std::size_t s : {4UL, 16UL}) {
        const Vec a = eval_finite(roundtrip_corollary1(mf, s, s, Route::WidthThenDepth), x);
        const Vec b = eval_finite(roundtrip_corollary1(mf, s, s, Route::DepthThenWidth), x);
        if (!(a == b)) return false;
        double expect = 1.0;
        const double h = 1.0 / static_cast<double>(s);
        for (std::size_t i = 0; i < s; ++i) expect += h * expect;
        if (!close_rel(a[0], expect * x[0], 1e-12)) return false;
    }
    const DipanetParams gen = as_dipanet(random_params(
        31, RandomSpec{.architecture = "dipanet", .p = 2, .q = 1, .amplitude = 0.6}));
    const std::vector<Vec> xs = sphere_inputs(2, 3, 1.0, 23);
    double prev = 1e300;
    for (std::size_t s = 16; s <= 64; s *= 2) {
        const FiniteNetParams na = roundtrip_corollary1(gen, s, s, Route::WidthThenDepth);
        const FiniteNetParams nb = roundtrip_corollary1(gen, s, s, Route::DepthThenWidth);
        double disc = 0.0;
        for (const Vec& xv : xs) disc = std::max(disc, norm2_diff(eval_finite(na, xv), eval_finite(nb, xv)));
        if (disc >= prev) return false;
        prev = disc;
    }
    return true;
}

bool homogenize_discretize_closure() {
    const OdeNetParams ode = as_ode(random_params(
        55, RandomSpec{.architecture = "neuralode", .p = 2, .q = 2, .n = 2, .amplitude = 0.6}));
    std::vector<FiniteNetParams> nets;
    for (std::size_t ell : {32UL, 64UL, 128UL}) nets.push_back(discretize_depth(ode, ell));
    GapProbeOptions opts;
    opts.input_count = 5;
    const HomogenizeDepthResult rec = homogenize_depth(nets, ode.T, opts);

    const std::vector<Vec> xs = sphere_inputs(2, 5, 1.0, opts.seed);
    const Solver ref = Solver::rk4(16 * 128);
    double recovered_gap = 0.0, euler_gap = 0.0;
    const OdeOutputs a = eval_neuralode_batch(ode, xs, ref);
    const OdeOutputs b = eval_neuralode_batch(rec.ode, xs, ref);
    for (std::size_t i = 0; i < xs.size(); ++i) {
        recovered_gap = std::max(recovered_gap, norm2_diff(a.y[i], b.y[i]));
        euler_gap = std::max(euler_gap, norm2_diff(eval_finite(nets.back(), xs[i]), a.y[i]));
    }
    return recovered_gap <= 2.0 * euler_gap + 1e-12;
}

// --------------------------- harness checks -------------------------------

bool sweep_reproducible() {
    const OdeNetParams ode = linear_scalar_ode();
    const std::vector<Vec> xs = sphere_inputs(1, 4, 1.0, 3);
    const std::vector<std::size_t> res = {8, 16, 32, 64};
    EvalOptions one;
    one.threads = 1;
    EvalOptions eight;
    eight.threads = 8;
    const SweepReport a = sweep_depth(ode, res, xs, Solver::rk4(1024), one);
    const SweepReport b = sweep_depth(ode, res, xs, Solver::rk4(1024), eight);
    return sweep_csv(a) == sweep_csv(b);
}

bool depth_error_bound() {
    const OdeNetParams ode = linear_scalar_ode();
    const std::vector<Vec> xs = sphere_inputs(1, 4, 1.0, 3);
    const std::vector<std::size_t> res = {8, 16, 32, 64, 128};
    const SweepReport rep = sweep_depth(ode, res, xs, Solver::rk4(4096));
    double cap = 0.0;
    for (const auto& r : rep.records)
        cap = std::max(cap, r.error * static_cast<double>(r.resolution));
    // spot-check twice the sweep range against the empirical constant
    const OdeOutputs ref = eval_neuralode_batch(ode, xs, Solver::rk4(4096));
    const OdeOutputs got = eval_neuralode_batch(ode, xs, Solver::euler(256));
    double err = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) err = std::max(err, norm2_diff(got.y[i], ref.y[i]));
    return err * 256.0 <= cap * 1.05;
}

bool two_route_gaps_decrease() {
    const DipanetParams gen = as_dipanet(random_params(
        77, RandomSpec{.architecture = "dipanet", .p = 1, .q = 1, .amplitude = 0.5}));
    const std::vector<Vec> xs = sphere_inputs(1, 2, 1.0, 5);
    const std::vector<std::pair<std::size_t, std::size_t>> sizes = {{8, 8}, {16, 16}, {32, 32}};
    const TwoRouteReport rep = two_route_check(gen, sizes, xs, 128, Solver::rk4(256));
    for (std::size_t i = 1; i < rep.records.size(); ++i) {
        if (rep.records[i].gap_a >= rep.records[i - 1].gap_a) return false;
        if (rep.records[i].gap_b >= rep.records[i - 1].gap_b) return false;
    }
    return true;
}

bool random_params_deterministic() {
    const RandomSpec spec{.architecture = "dipanet", .p = 2, .q = 2, .amplitude = 0.5};
    const std::string a = dump_json(params_to_json(random_params(123, spec)));
    const std::string b = dump_json(params_to_json(random_params(123, spec)));
    const std::string c = dump_json(params_to_json(random_params(124, spec)));
    return a == b && a != c;
}

} // namespace

bool run_selftest(std::ostream& os) {
    const std::vector<std::pair<const char*, std::function<bool()>>> checks = {
        {"numerics.quad_left_pwc_exact", quad_left_pwc_exact},
        {"numerics.euler_zero_field_constant", euler_zero_field_constant},
        {"numerics.euler_linear_closed_form", euler_linear_closed_form},
        {"numerics.linear_smooth_bound", linear_smooth_bound},
        {"numerics.total_variation_refinement", total_variation_refinement},
        {"numerics.tan_compress_monotone", tan_compress_monotone},
        {"funcrep.projection_composition", projection_composition},
        {"funcrep.constructor_family_consistent", constructor_family_consistent},
        {"funcrep.interpolant_nodes_bitwise", interpolant_nodes_bitwise},
        {"funcrep.pwc_right_continuity", pwc_right_continuity},
        {"finite_nets.identity_linearity", finite_linearity},
        {"finite_nets.zero_activation", finite_zero_activation},
        {"finite_nets.trace_layout", finite_trace_layout},
        {"finite_nets.soa_matches_standard_scalar", soa_matches_standard_scalar},
        {"continuum_nets.lemma3_equivalence", lemma3_equivalence},
        {"continuum_nets.dipanet_form_equivalence", dipanet_form_equivalence},
        {"continuum_nets.dipanet_mol_bitwise", dipanet_mol_bitwise},
        {"continuum_nets.deepcnn_doubling_monotone", deepcnn_doubling_monotone},
        {"transforms.exact_recovery_aligned", exact_recovery_aligned},
        {"transforms.euler_identity_bitwise", euler_identity_bitwise},
        {"transforms.route_commutation", route_commutation},
        {"transforms.homogenize_discretize_closure", homogenize_discretize_closure},
        {"harness.sweep_reproducible", sweep_reproducible},
        {"harness.depth_error_bound", depth_error_bound},
        {"harness.two_route_gaps_decrease", two_route_gaps_decrease},
        {"harness.random_params_deterministic", random_params_deterministic},
    };
    for (const auto& [name, fn] : checks) {
        bool ok = false;
        try {
            ok = fn();
        } catch (const std::exception& e) {
            os << "FAIL " << name << " (" << e.what() << ")\n";
            return false;
        }
        if (!ok) {
            os << "FAIL " << name << "\n";
            return false;
        }
        os << "ok " << name << "\n";
    }
    os << "selftest: all invariants hold\n";
    return true;
}

} // namespace dipanet
