#include <doctest.h>

#include <cmath>

#include "dipanet/harness.hpp"
#include "dipanet/io.hpp"
#include "dipanet/rng.hpp"
#include "dipanet/transforms.hpp"

using namespace dipanet;

namespace {

ContinuumNetParams aligned_pwc_cnn(std::size_t n, std::uint64_t seed, std::size_t layers = 1) {
    SplitMix64 rng(seed);
    ContinuumNetParams net;
    {
        FunctionRep::PiecewiseConstant pc;
        pc.n = n;
        for (std::size_t j = 0; j < n; ++j) {
            Matrix m(1, 2);
            m(0, 0) = rng.uniform(-1, 1);
            m(0, 1) = rng.uniform(-1, 1);
            pc.values.push_back(std::move(m));
        }
        net.lift = FunctionRep(Domain::Unit, 0.0, 1, 2, std::move(pc));
    }
    for (std::size_t layer = 0; layer < layers; ++layer) {
        FunctionRep::PiecewiseConstant pc;
        pc.n = n;
        for (std::size_t c = 0; c < n * n; ++c) pc.values.push_back(Matrix(1, 1, {rng.uniform(-1, 1)}));
        net.kernels.push_back(FunctionRep(Domain::UnitSquare, 0.0, 1, 1, std::move(pc)));
        net.activations.push_back(ActivationField(ActivationDescriptor{ActKind::Tanh, 1.0}));
    }
    {
        FunctionRep::PiecewiseConstant pc;
        pc.n = n;
        for (std::size_t j = 0; j < n; ++j) pc.values.push_back(Matrix(1, 1, {rng.uniform(-1, 1)}));
        net.proj = FunctionRep(Domain::Unit, 0.0, 1, 1, std::move(pc));
    }
    return net;
}

double close_scale(const Vec& a, const Vec& b) {
    double s = 1.0;
    for (double v : a) s = std::max(s, std::abs(v));
    for (double v : b) s = std::max(s, std::abs(v));
    return s;
}

} // namespace

TEST_CASE("discretize_width recovers aligned piecewise-constant nets") {
    for (std::size_t n : {8UL, 32UL}) {
        const ContinuumNetParams cnn = aligned_pwc_cnn(n, 300 + n, 2);
        const FiniteNetParams net = discretize_width(cnn, n);
        CHECK(net.convention.kind == Convention::Kind::SumOfActivations);
        CHECK(net.convention.dtau == 1.0 / static_cast<double>(n));
        const std::vector<Vec> xs = sphere_inputs(2, 50, 1.0, 17);
        for (const Vec& x : xs) {
            const Vec a = eval_finite(net, x);
            const Vec b = eval_deepcnn(cnn, x, n);
            CHECK(norm2_diff(a, b) <= 1e-12 * close_scale(a, b));
        }
    }
}

TEST_CASE("discretize_width of constants is exact at every n") {
    ContinuumNetParams net;
    net.lift = FunctionRep::constant(Domain::Unit, 0.0, Matrix(1, 1, {2.0}));
    net.kernels.push_back(FunctionRep::constant(Domain::UnitSquare, 0.0, Matrix(1, 1, {0.5})));
    net.activations.push_back(ActivationField(ActivationDescriptor{ActKind::Identity, 1.0}));
    net.proj = FunctionRep::constant(Domain::Unit, 0.0, Matrix(1, 1, {3.0}));
    // Y = 3 * (0.5 * 2x) = 3x for the exact integrals
    for (std::size_t n : {1UL, 2UL, 5UL, 64UL}) {
        const FiniteNetParams fin = discretize_width(net, n);
        const Vec y = eval_finite(fin, {1.0});
        CHECK(y[0] == doctest::Approx(3.0).epsilon(1e-13));
        CHECK(eval_deepcnn(net, {1.0}, n)[0] == doctest::Approx(y[0]).epsilon(1e-13));
    }
}

TEST_CASE("homogenize_width") {
    GapProbeOptions probe;
    probe.input_count = 5;
    probe.eval_m = 1024;

    SUBCASE("constant family with zero activation: outputs agree exactly") {
        const MatrixFamily fam = builtin_family("constant", 1, 1, 1, 5, 1.0, ActKind::Zero);
        const HomogenizeWidthResult res = homogenize_width(fam, 1e-2, 12, probe);
        CHECK(res.certificate_n == 1);
        CHECK(res.max_gap == 0.0);
        // homogenized lift survives smoothing and compression as a constant
        const Vec row0 = {fam.slice(1).L(0, 0)};
        for (double tau : {0.0, 0.3, 0.77, 0.999}) {
            const Matrix v = res.params.lift.eval({&tau, 1});
            CHECK(v(0, 0) == row0[0]);
        }
    }
    SUBCASE("zero-weight family: both sides vanish") {
        const MatrixFamily fam = builtin_family("zero", 2, 2, 2, 6, 1.0, ActKind::Tanh);
        const HomogenizeWidthResult res = homogenize_width(fam, 1e-2, 8, probe);
        CHECK(res.certificate_n == 1);
        CHECK(res.max_gap == 0.0);
    }
    SUBCASE("geometric family meets eps = 1e-2 with a reported certificate") {
        const MatrixFamily fam = builtin_family("geometric", 1, 2, 1, 7, 1.0, ActKind::Identity);
        probe.input_count = 20;
        const HomogenizeWidthResult res = homogenize_width(fam, 1e-2, 16, probe);
        CHECK(res.certificate_n > 0);
        CHECK(res.max_gap <= 1e-2);
    }
    SUBCASE("inconsistent family is rejected naming the violated relation") {
        MatrixFamily broken(1, 1, 1, [](std::size_t n) {
            FamilySlice s;
            s.L = Matrix(n, 1);
            for (std::size_t j = 0; j < n; ++j) s.L(j, 0) = n >= 3 && j == 0 ? 9.0 : 1.0;
            s.P = Matrix(1, n, 0.0);
            s.W.push_back(Matrix(n, n));
            s.act.push_back(std::vector<ActivationDescriptor>(n, {ActKind::Identity, 1.0}));
            return s;
        });
        try {
            homogenize_width(broken, 1e-2, 6, probe);
            FAIL("expected rejection");
        } catch (const PreconditionError& e) {
            CHECK(std::string(e.what()).find("L") != std::string::npos);
        }
    }
    SUBCASE("divergent variation is rejected") {
        auto fam = make_consistent_family(
            1, 1, 1, [](std::size_t j) { return Vec{j % 2 == 0 ? 1e5 : -1e5}; },
            [](std::size_t, std::size_t, std::size_t) { return 0.0; },
            [](std::size_t) { return Vec{0.0}; },
            [](std::size_t, std::size_t) { return ActivationDescriptor{ActKind::Identity, 1.0}; });
        CHECK_THROWS_AS(homogenize_width(fam, 1e-2, 32, probe), PreconditionError);
    }
}

TEST_CASE("discretize_depth") {
    SUBCASE("zero activation: P L X at any depth") {
        const RandomSpec spec{.architecture = "neuralode", .p = 2, .q = 1, .n = 3,
                              .amplitude = 0.8, .activation = "zero"};
        const OdeNetParams ode = as_ode(random_params(2, spec));
        const Vec x = {0.7, -0.1};
        const Vec want = matvec(ode.P, matvec(ode.L, x));
        for (std::size_t ell : {1UL, 4UL, 128UL})
            CHECK(eval_deepresnet(discretize_depth(ode, ell), x) == want);
    }
    SUBCASE("linear scalar problem at ell = 4: 1.25^4 P L X") {
        const FiniteNetParams net = discretize_depth(linear_scalar_ode(), 4);
        CHECK(eval_deepresnet(net, {1.0}) == Vec{2.44140625});
        CHECK(net.residual == Residual::Plain);
        CHECK(net.act.front().outer == 0.25);
    }
    SUBCASE("emitted net evaluates bitwise like euler_solve") {
        for (std::uint64_t seed : {21ULL, 22ULL, 23ULL}) {
            const RandomSpec spec{.architecture = "neuralode", .p = 2, .q = 2, .n = 3,
                                  .amplitude = 0.8};
            const OdeNetParams ode = as_ode(random_params(seed, spec));
            const std::vector<Vec> xs = sphere_inputs(2, 4, 1.0, seed);
            for (std::size_t ell : {3UL, 16UL, 50UL}) {
                const FiniteNetParams net = discretize_depth(ode, ell);
                for (const Vec& x : xs)
                    CHECK(eval_deepresnet(net, x) == eval_neuralode(ode, x, Solver::euler(ell)));
            }
        }
    }
    SUBCASE("residual ODE emits the skip read-out") {
        const RandomSpec spec{.architecture = "neuralresode", .p = 2, .q = 2, .n = 3,
                              .amplitude = 0.5};
        const OdeNetParams ode = as_ode(random_params(31, spec));
        const FiniteNetParams net = discretize_depth(ode, 8);
        CHECK(net.residual == Residual::Skip);
        const Vec x = {0.4, 0.2};
        CHECK(eval_deepresnet(net, x) == eval_neuralode(ode, x, Solver::euler(8)));
    }
}

TEST_CASE("homogenize_depth") {
    SUBCASE("constant kernel and scaled tanh recover W = A, sigma = tanh") {
        const Matrix a(2, 2, {0.3, -0.2, 0.1, 0.5});
        std::vector<FiniteNetParams> nets;
        for (std::size_t ell : {32UL, 256UL}) {
            FiniteNetParams net;
            net.L = Matrix::identity(2);
            net.P = Matrix::identity(2);
            net.residual = Residual::Plain;
            const double h = 1.0 / static_cast<double>(ell);
            for (std::size_t i = 0; i < ell; ++i) {
                net.W.push_back(a);
                LayerActivation act;
                act.outer = h;
                act.comps.push_back(resolve(ActivationDescriptor{ActKind::Tanh, 1.0}));
                net.act.push_back(std::move(act));
            }
            nets.push_back(std::move(net));
        }
        GapProbeOptions probe;
        probe.input_count = 5;
        const HomogenizeDepthResult res = homogenize_depth(nets, 1.0, probe);
        Matrix w;
        for (double t : {0.0, 0.31, 0.99, 1.0}) {
            res.ode.kernel.fill(t, w);
            CHECK(w == a);
        }
        for (double t : {0.0, 0.4, 1.0}) {
            const ResolvedAct r = res.ode.activation.front().resolve(0.0, t);
            CHECK(r(0.37) == doctest::Approx(std::tanh(0.37)).epsilon(1e-14));
        }
        // Theorem-2 direction: deeper supplied nets sit closer to the ODE
        REQUIRE(res.gaps.size() == 2);
        CHECK(res.gaps[1].second <= res.gaps[0].second);
    }
    SUBCASE("zero activations: zero field and zero gaps") {
        std::vector<FiniteNetParams> nets;
        for (std::size_t ell : {4UL, 8UL}) {
            FiniteNetParams net;
            net.L = Matrix(1, 1, {1.0});
            net.P = Matrix(1, 1, {1.0});
            net.residual = Residual::Plain;
            for (std::size_t i = 0; i < ell; ++i) {
                net.W.push_back(Matrix(1, 1, {2.0}));
                LayerActivation act;
                act.outer = 1.0 / static_cast<double>(ell);
                act.comps.push_back(resolve(ActivationDescriptor{ActKind::Zero, 1.0}));
                net.act.push_back(std::move(act));
            }
            nets.push_back(std::move(net));
        }
        GapProbeOptions probe;
        probe.input_count = 3;
        const HomogenizeDepthResult res = homogenize_depth(nets, 1.0, probe);
        for (const auto& [ell, gap] : res.gaps) CHECK(gap == 0.0);
    }
    SUBCASE("two scalar kernel values 0, 2 interpolate to 1 at t = 0.25") {
        FiniteNetParams net;
        net.L = Matrix(1, 1, {1.0});
        net.P = Matrix(1, 1, {1.0});
        net.residual = Residual::Plain;
        net.W.push_back(Matrix(1, 1, {0.0}));
        net.W.push_back(Matrix(1, 1, {2.0}));
        for (int i = 0; i < 2; ++i) {
            LayerActivation act;
            act.outer = 0.5;
            act.comps.push_back(resolve(ActivationDescriptor{ActKind::Identity, 1.0}));
            net.act.push_back(std::move(act));
        }
        GapProbeOptions probe;
        probe.input_count = 2;
        const HomogenizeDepthResult res = homogenize_depth({&net, 1}, 1.0, probe);
        Matrix w;
        res.ode.kernel.fill(0.25, w);
        CHECK(w(0, 0) == doctest::Approx(1.0));
    }
}

TEST_CASE("discretize_dipanet_width") {
    SUBCASE("mean-field problem reaches e x at every n") {
        const DipanetParams net = mean_field_dipanet();
        for (std::size_t n : {1UL, 4UL, 16UL}) {
            const OdeNetParams ode = discretize_dipanet_width(net, n);
            CHECK(ode.convention.kind == Convention::Kind::SumOfActivations);
            CHECK(eval_neuralode(ode, {1.0}, Solver::rk4(1000))[0] ==
                  doctest::Approx(std::exp(1.0)).epsilon(1e-9));
        }
    }
    SUBCASE("zero activation freezes the state") {
        DipanetParams net = mean_field_dipanet();
        net.activation = ActivationField(ActivationDescriptor{ActKind::Zero, 1.0});
        const OdeNetParams ode = discretize_dipanet_width(net, 8);
        CHECK(eval_neuralode(ode, {0.3}, Solver::euler(6))[0] == doctest::Approx(0.3).epsilon(1e-14));
    }
}

TEST_CASE("discretize_dipanet_depth") {
    SUBCASE("zero activation: DeepResCNN equals the DiPaNet exactly") {
        DipanetParams net = mean_field_dipanet();
        net.activation = ActivationField(ActivationDescriptor{ActKind::Zero, 1.0});
        for (std::size_t ell : {1UL, 3UL, 9UL}) {
            const ContinuumNetParams rescnn = discretize_dipanet_depth(net, ell);
            CHECK(rescnn.residual);
            for (std::size_t m : {4UL, 17UL}) {
                const Vec a = eval_deeprescnn(rescnn, {0.9}, m);
                const Vec b = eval_dipanet(net, {0.9}, m, Solver::euler(ell));
                CHECK(a[0] == doctest::Approx(b[0]).epsilon(1e-14));
            }
        }
    }
    SUBCASE("mean field: emitted net evaluates to (1 + T/ell)^ell x at any m") {
        const DipanetParams net = mean_field_dipanet();
        for (std::size_t ell : {2UL, 8UL}) {
            const ContinuumNetParams rescnn = discretize_dipanet_depth(net, ell);
            double expect = 1.0;
            const double h = 1.0 / static_cast<double>(ell);
            for (std::size_t i = 0; i < ell; ++i) expect += h * expect;
            for (std::size_t m : {1UL, 8UL, 21UL})
                CHECK(eval_deeprescnn(rescnn, {1.0}, m)[0] == doctest::Approx(expect).epsilon(1e-12));
        }
    }
    SUBCASE("time-Lipschitz kernel: gap to the DiPaNet shrinks as ell doubles") {
        const DipanetParams net = time_kernel_dipanet();
        const std::size_t m = 64;
        const Vec x = {1.0};
        const Vec ref = eval_dipanet(net, x, m, Solver::rk4(512));
        double prev = 1e300;
        for (std::size_t ell = 8; ell <= 64; ell *= 2) {
            const ContinuumNetParams rescnn = discretize_dipanet_depth(net, ell);
            const double err = std::abs(eval_deeprescnn(rescnn, x, m)[0] - ref[0]);
            CHECK(err < prev);
            prev = err;
        }
    }
}

TEST_CASE("homogenize_rescnn_depth") {
    SUBCASE("equal layer kernels give a time-constant kernel and tanh field") {
        AnalyticExpr e;
        e.arity = 2;
        Term t;
        t.coeff = 1.0;
        t.factors.push_back(Factor{FactorKind::Sin, 1, {2.0, -1.0}, 0.0, 0.3});
        e.terms.push_back(t);
        const FunctionRep k = FunctionRep::scalar_analytic(Domain::UnitSquare, 0.0, e);

        const std::size_t ell = 3;
        ContinuumNetParams net;
        net.residual = true;
        net.lift = FunctionRep::constant(Domain::Unit, 0.0, Matrix(1, 1, {1.0}));
        net.proj = FunctionRep::constant(Domain::Unit, 0.0, Matrix(1, 2, {1.0, 0.0}));
        for (std::size_t i = 0; i < ell; ++i) {
            net.kernels.push_back(k);
            net.activations.push_back(
                ActivationField(ActivationDescriptor{ActKind::Tanh, 1.0 / static_cast<double>(ell)}));
        }
        GapProbeOptions probe;
        probe.input_count = 2;
        probe.eval_m = 32;
        probe.ref_multiplier = 16;
        const HomogenizeRescnnResult res = homogenize_rescnn_depth({&net, 1}, 1.0, probe);
        CHECK(res.params.residual);
        for (double time : {0.0, 0.37, 0.9, 1.0})
            CHECK(res.params.kernel.eval_scalar3(0.3, 0.6, time) ==
                  doctest::Approx(k.eval_scalar2(0.3, 0.6)).epsilon(1e-14));
        for (double time : {0.0, 0.5, 1.0}) {
            const ResolvedAct r = res.params.activation.resolve(0.25, time);
            CHECK(r(0.4) == doctest::Approx(std::tanh(0.4)).epsilon(1e-14));
        }
    }
    SUBCASE("zero fields homogenize to a zero-field DiPaNet with zero gap") {
        ContinuumNetParams net;
        net.residual = true;
        net.lift = FunctionRep::constant(Domain::Unit, 0.0, Matrix(1, 1, {2.0}));
        net.proj = FunctionRep::constant(Domain::Unit, 0.0, Matrix(1, 2, {1.0, 1.0}));
        for (int i = 0; i < 2; ++i) {
            net.kernels.push_back(FunctionRep::constant(Domain::UnitSquare, 0.0, Matrix(1, 1, {3.0})));
            net.activations.push_back(ActivationField(ActivationDescriptor{ActKind::Zero, 1.0}));
        }
        GapProbeOptions probe;
        probe.input_count = 3;
        probe.eval_m = 16;
        probe.ref_multiplier = 8;
        const HomogenizeRescnnResult res = homogenize_rescnn_depth({&net, 1}, 1.0, probe);
        for (const auto& [ell, gap] : res.gaps) CHECK(gap <= 1e-14);
    }
    SUBCASE("two kernels 0 and 2K blend to K at t = T/4") {
        FunctionRep k_half = FunctionRep::constant(Domain::UnitSquare, 0.0, Matrix(1, 1, {0.0}));
        FunctionRep k_two = FunctionRep::constant(Domain::UnitSquare, 0.0, Matrix(1, 1, {2.0}));
        ContinuumNetParams net;
        net.residual = true;
        net.lift = FunctionRep::constant(Domain::Unit, 0.0, Matrix(1, 1, {1.0}));
        net.kernels = {k_half, k_two};
        net.activations = {ActivationField(ActivationDescriptor{ActKind::Identity, 0.5}),
                           ActivationField(ActivationDescriptor{ActKind::Identity, 0.5})};
        net.proj = FunctionRep::constant(Domain::Unit, 0.0, Matrix(1, 2, {1.0, 0.0}));
        GapProbeOptions probe;
        probe.input_count = 2;
        probe.eval_m = 16;
        probe.ref_multiplier = 8;
        const HomogenizeRescnnResult res = homogenize_rescnn_depth({&net, 1}, 1.0, probe);
        CHECK(res.params.kernel.eval_scalar3(0.2, 0.8, 0.25) == doctest::Approx(1.0));
    }
}

TEST_CASE("roundtrip_corollary1") {
    SUBCASE("mean field: both routes give (1 + T/ell)^ell x for any n") {
        const DipanetParams net = mean_field_dipanet();
        for (std::size_t n : {4UL, 16UL}) {
            for (std::size_t ell : {8UL, 32UL}) {
                double expect = 1.0;
                const double h = 1.0 / static_cast<double>(ell);
                for (std::size_t i = 0; i < ell; ++i) expect += h * expect;
                const Vec a = eval_finite(roundtrip_corollary1(net, n, ell, Route::WidthThenDepth), {1.0});
                const Vec b = eval_finite(roundtrip_corollary1(net, n, ell, Route::DepthThenWidth), {1.0});
                CHECK(a == b); // power-of-two sizes: bitwise route agreement
                CHECK(a[0] == doctest::Approx(expect).epsilon(1e-12));
            }
        }
    }
    SUBCASE("zero activation: both routes read quad(proj * lift) X exactly") {
        DipanetParams net = as_dipanet(random_params(
            61, RandomSpec{.architecture = "dipanet", .p = 2, .q = 2, .amplitude = 0.8,
                           .activation = "zero"}));
        const Vec x = {0.5, -0.5};
        const Vec a = eval_finite(roundtrip_corollary1(net, 16, 8, Route::WidthThenDepth), x);
        const Vec b = eval_finite(roundtrip_corollary1(net, 16, 8, Route::DepthThenWidth), x);
        CHECK(norm2_diff(a, b) <= 1e-15);
        // oracle: frozen-state read-out through the quadrature of proj * lift
        const GridSpec grid(16);
        Vec want(2, 0.0);
        for (std::size_t j = 0; j < 16; ++j) {
            const double tau = grid.node(j);
            const Matrix pm = net.proj.eval({&tau, 1});
            const Matrix lm = net.lift.eval({&tau, 1});
            const double z0 = lm(0, 0) * x[0] + lm(0, 1) * x[1];
            for (std::size_t r = 0; r < 2; ++r) want[r] += pm(r, 0) * z0;
        }
        for (double& v : want) v *= grid.delta();
        CHECK(norm2_diff(a, want) <= 1e-13);
    }
    SUBCASE("generic seeded problem: route discrepancy shrinks as n = ell doubles") {
        const DipanetParams net = as_dipanet(random_params(
            31, RandomSpec{.architecture = "dipanet", .p = 2, .q = 1, .amplitude = 0.6}));
        const std::vector<Vec> xs = sphere_inputs(2, 3, 1.0, 23);
        double prev = 1e300;
        for (std::size_t s = 16; s <= 128; s *= 2) {
            const FiniteNetParams na = roundtrip_corollary1(net, s, s, Route::WidthThenDepth);
            const FiniteNetParams nb = roundtrip_corollary1(net, s, s, Route::DepthThenWidth);
            double disc = 0.0;
            for (const Vec& xv : xs)
                disc = std::max(disc, norm2_diff(eval_finite(na, xv), eval_finite(nb, xv)));
            CHECK(disc < prev);
            prev = disc;
        }
    }
}

TEST_CASE("homogenize then discretize closes over the depth family") {
    const OdeNetParams ode = as_ode(random_params(
        55, RandomSpec{.architecture = "neuralode", .p = 2, .q = 2, .n = 2, .amplitude = 0.6}));
    std::vector<FiniteNetParams> nets;
    for (std::size_t ell : {32UL, 64UL, 128UL, 256UL}) nets.push_back(discretize_depth(ode, ell));
    GapProbeOptions probe;
    probe.input_count = 5;
    const HomogenizeDepthResult rec = homogenize_depth(nets, ode.T, probe);

    const std::vector<Vec> xs = sphere_inputs(2, 5, 1.0, probe.seed);
    const Solver ref = Solver::rk4(16 * 256);
    double recovered_gap = 0.0, euler_gap = 0.0;
    const OdeOutputs a = eval_neuralode_batch(ode, xs, ref);
    const OdeOutputs b = eval_neuralode_batch(rec.ode, xs, ref);
    for (std::size_t i = 0; i < xs.size(); ++i) {
        recovered_gap = std::max(recovered_gap, norm2_diff(a.y[i], b.y[i]));
        euler_gap = std::max(euler_gap, norm2_diff(eval_finite(nets.back(), xs[i]), a.y[i]));
    }
    CHECK(recovered_gap <= 2.0 * euler_gap + 1e-12);
}
