#include <doctest.h>

#include <cmath>

#include "dipanet/continuum_nets.hpp"
#include "dipanet/harness.hpp"
#include "dipanet/rng.hpp"

using namespace dipanet;

namespace {

ContinuumNetParams ones_cnn(ActKind act = ActKind::Identity) {
    ContinuumNetParams net;
    net.lift = FunctionRep::constant(Domain::Unit, 0.0, Matrix(1, 1, {1.0}));
    net.kernels.push_back(FunctionRep::constant(Domain::UnitSquare, 0.0, Matrix(1, 1, {1.0})));
    net.activations.push_back(ActivationField(ActivationDescriptor{act, 1.0}));
    net.proj = FunctionRep::constant(Domain::Unit, 0.0, Matrix(1, 1, {1.0}));
    return net;
}

} // namespace

TEST_CASE("eval_deepcnn examples") {
    SUBCASE("zero activation layer gives zero output") {
        ContinuumNetParams net = ones_cnn(ActKind::Zero);
        CHECK(eval_deepcnn(net, {5.0}, 33) == Vec{0.0});
    }
    SUBCASE("all-ones identity net is the identity at any m") {
        const ContinuumNetParams net = ones_cnn();
        for (std::size_t m : {1UL, 7UL, 64UL, 100UL}) {
            const Vec y = eval_deepcnn(net, {0.3}, m);
            CHECK(y[0] == doctest::Approx(0.3).epsilon(1e-13));
        }
    }
    SUBCASE("proj(tau) = 2 tau gives x (m-1)/m") {
        ContinuumNetParams net = ones_cnn();
        AnalyticExpr e;
        e.arity = 1;
        Term t;
        t.coeff = 2.0;
        t.factors.push_back(Factor{FactorKind::Poly, 1, {1.0}, 0.0, 0.0});
        e.terms.push_back(t);
        net.proj = FunctionRep::scalar_analytic(Domain::Unit, 0.0, std::move(e));
        for (std::size_t m : {4UL, 32UL, 111UL}) {
            const double expect =
                0.7 * static_cast<double>(m - 1) / static_cast<double>(m);
            CHECK(eval_deepcnn(net, {0.7}, m)[0] == doctest::Approx(expect).epsilon(1e-13));
        }
    }
    SUBCASE("m = 0 rejected") {
        CHECK_THROWS_AS(eval_deepcnn(ones_cnn(), {1.0}, 0), PreconditionError);
    }
}

TEST_CASE("eval_pointwise_cnn examples") {
    const FunctionRep one = FunctionRep::constant(Domain::Unit, 0.0, Matrix(1, 1, {1.0}));
    SUBCASE("zero activation") {
        const Vec y = eval_pointwise_cnn(one, {ActKind::Zero, 1.0}, one, {2.0}, 50);
        CHECK(y == Vec{0.0});
    }
    SUBCASE("relu(tau - 1/2) integrates to 1/8") {
        AnalyticExpr e;
        e.arity = 1;
        e.constant = -0.5;
        Term t;
        t.coeff = 1.0;
        t.factors.push_back(Factor{FactorKind::Poly, 1, {1.0}, 0.0, 0.0});
        e.terms.push_back(t);
        const FunctionRep lift = FunctionRep::scalar_analytic(Domain::Unit, 0.0, std::move(e));
        const Vec y = eval_pointwise_cnn(lift, {ActKind::Relu, 1.0}, one, {1.0}, 1000);
        CHECK(y[0] == doctest::Approx(0.125).epsilon(1e-3));
    }
    SUBCASE("constants are exact at any m") {
        const FunctionRep c = FunctionRep::constant(Domain::Unit, 0.0, Matrix(1, 1, {3.0}));
        const FunctionRep d = FunctionRep::constant(Domain::Unit, 0.0, Matrix(1, 1, {-2.0}));
        for (std::size_t m : {1UL, 5UL, 97UL}) {
            const Vec y = eval_pointwise_cnn(c, {ActKind::Identity, 1.0}, d, {0.5}, m);
            CHECK(y[0] == doctest::Approx(-2.0 * 3.0 * 0.5).epsilon(1e-13));
        }
    }
}

TEST_CASE("eval_deeprescnn examples") {
    SUBCASE("zero activation reads both state copies") {
        ContinuumNetParams net = ones_cnn(ActKind::Zero);
        net.residual = true;
        net.proj = FunctionRep::constant(Domain::Unit, 0.0, Matrix(1, 2, {1.0, 1.0}));
        const Vec y = eval_deeprescnn(net, {0.4}, 16);
        CHECK(y[0] == doctest::Approx(0.8).epsilon(1e-14)); // z_l = z_0 = 0.4
    }
    SUBCASE("ones identity with proj [1, 0]: z1 = x + x") {
        ContinuumNetParams net = ones_cnn();
        net.residual = true;
        net.proj = FunctionRep::constant(Domain::Unit, 0.0, Matrix(1, 2, {1.0, 0.0}));
        for (std::size_t m : {1UL, 9UL, 64UL})
            CHECK(eval_deeprescnn(net, {0.25}, m)[0] == doctest::Approx(0.5).epsilon(1e-13));
    }
    SUBCASE("proj [0, 1] reads the initial state") {
        ContinuumNetParams net = ones_cnn();
        net.residual = true;
        net.proj = FunctionRep::constant(Domain::Unit, 0.0, Matrix(1, 2, {0.0, 1.0}));
        CHECK(eval_deeprescnn(net, {0.25}, 32)[0] == doctest::Approx(0.25).epsilon(1e-13));
    }
}

TEST_CASE("eval_neuralode examples") {
    SUBCASE("zero activation gives P L X under any solver") {
        const RandomSpec spec{.architecture = "neuralode", .p = 2, .q = 2, .n = 3,
                              .amplitude = 0.9, .activation = "zero"};
        const OdeNetParams ode = as_ode(random_params(4, spec));
        const Vec x = {0.5, -1.0};
        const Vec want = matvec(ode.P, matvec(ode.L, x));
        CHECK(eval_neuralode(ode, x, Solver::euler(7)) == want);
        CHECK(eval_neuralode(ode, x, Solver::rk4(5)) == want);
    }
    SUBCASE("linear scalar problem: rk4(1000) hits e within 1e-9") {
        const OdeNetParams ode = linear_scalar_ode();
        const Vec y = eval_neuralode(ode, {0.8}, Solver::rk4(1000));
        CHECK(y[0] == doctest::Approx(std::exp(1.0) * 0.8).epsilon(1e-9));
    }
    SUBCASE("linear scalar problem: euler(4) gives 1.25^4 x exactly") {
        const OdeNetParams ode = linear_scalar_ode();
        CHECK(eval_neuralode(ode, {1.0}, Solver::euler(4)) == Vec{2.44140625});
    }
}

TEST_CASE("eval_dipanet examples") {
    SUBCASE("zero activation freezes the state: quad(proj * lift) X") {
        DipanetParams net = mean_field_dipanet();
        net.activation = ActivationField(ActivationDescriptor{ActKind::Zero, 1.0});
        const Vec y = eval_dipanet(net, {0.6}, 24, Solver::euler(10));
        CHECK(y[0] == doctest::Approx(0.6).epsilon(1e-13));
    }
    SUBCASE("mean field: rk4(1000) reaches e x at every m") {
        const DipanetParams net = mean_field_dipanet();
        for (std::size_t m : {1UL, 3UL, 16UL})
            CHECK(eval_dipanet(net, {0.5}, m, Solver::rk4(1000))[0] ==
                  doctest::Approx(std::exp(1.0) * 0.5).epsilon(1e-9));
    }
    SUBCASE("mean field: euler(ell) gives (1 + 1/ell)^ell x at every m") {
        const DipanetParams net = mean_field_dipanet();
        for (std::size_t ell : {4UL, 16UL}) {
            double expect = 1.0;
            const double h = 1.0 / static_cast<double>(ell);
            for (std::size_t i = 0; i < ell; ++i) expect += h * expect;
            for (std::size_t m : {1UL, 8UL, 33UL})
                CHECK(eval_dipanet(net, {1.0}, m, Solver::euler(ell))[0] ==
                      doctest::Approx(expect).epsilon(1e-12));
        }
    }
    SUBCASE("work budget guards m times solver resolution") {
        EvalOptions opts;
        opts.work_budget = 100;
        const DipanetParams net = mean_field_dipanet();
        CHECK_THROWS_AS(eval_dipanet(net, {1.0}, 64, Solver::euler(64), opts),
                        ResourceBudgetError);
    }
}

TEST_CASE("differential and integral forms agree (equivalence lemmas)") {
    SUBCASE("seeded NeuralODE instances") {
        for (std::uint64_t seed = 1; seed <= 20; ++seed) {
            const RandomSpec spec{.architecture = seed % 2 == 0 ? "neuralode" : "neuralresode",
                                  .p = 2, .q = 2, .n = 3, .amplitude = 0.7};
            const OdeNetParams ode = as_ode(random_params(seed, spec));
            const std::vector<Vec> xs = sphere_inputs(2, 2, 1.0, seed);
            for (Solver s : {Solver::euler(64), Solver::rk4(32)}) {
                const OdeOutputs out = eval_neuralode_batch(ode, xs, s);
                for (std::size_t b = 0; b < xs.size(); ++b) {
                    double scale = 1.0;
                    for (double v : out.y[b]) scale = std::max(scale, std::abs(v));
                    CHECK(norm2_diff(out.y[b], out.y_integral_form[b]) <= 1e-10 * scale);
                }
            }
        }
    }
    SUBCASE("seeded DiPaNet instances") {
        for (std::uint64_t seed = 1; seed <= 10; ++seed) {
            const RandomSpec spec{.architecture = seed % 2 == 0 ? "dipanet" : "diparesnet",
                                  .p = 2, .q = 1, .amplitude = 0.6};
            const DipanetParams net = as_dipanet(random_params(seed, spec));
            const std::vector<Vec> xs = sphere_inputs(2, 2, 1.0, seed);
            const OdeOutputs out = eval_dipanet_batch(net, xs, 12, Solver::euler(24));
            for (std::size_t b = 0; b < xs.size(); ++b) {
                double scale = 1.0;
                for (double v : out.y[b]) scale = std::max(scale, std::abs(v));
                CHECK(norm2_diff(out.y[b], out.y_integral_form[b]) <= 1e-10 * scale);
            }
        }
    }
}

TEST_CASE("eval_dipanet is bitwise the method of lines") {
    const DipanetParams net = as_dipanet(random_params(
        9, RandomSpec{.architecture = "dipanet", .p = 2, .q = 2, .amplitude = 0.6}));
    const OdeNetParams ode = dipanet_method_of_lines(net, 12);
    const Vec x = {0.4, -0.3};
    for (Solver s : {Solver::euler(16), Solver::rk4(8)})
        CHECK(eval_dipanet(net, x, 12, s) == eval_neuralode(ode, x, s));
}

TEST_CASE("doubling m decreases the Lipschitz-kernel error monotonically") {
    const ContinuumNetParams net = lipschitz_kernel_cnn();
    const std::vector<Vec> xs = sphere_inputs(1, 3, 1.0, 40);
    EvalOptions opts;
    opts.threads = 2;
    const std::vector<Vec> ref = eval_deepcnn_batch(net, xs, 2048, opts);
    double prev = 1e300;
    for (std::size_t m = 16; m <= 512; m *= 2) {
        const std::vector<Vec> got = eval_deepcnn_batch(net, xs, m, opts);
        double err = 0.0;
        for (std::size_t b = 0; b < xs.size(); ++b)
            err = std::max(err, norm2_diff(got[b], ref[b]));
        CHECK(err < prev);
        prev = err;
    }
}

TEST_CASE("evaluators with identity activations are linear in X") {
    SUBCASE("deepcnn") {
        const RandomSpec spec{.architecture = "deepcnn", .p = 2, .q = 2, .ell = 2,
                              .amplitude = 0.5, .activation = "identity"};
        const ContinuumNetParams net = as_continuum(random_params(5, spec));
        SplitMix64 rng(3);
        for (int trial = 0; trial < 4; ++trial) {
            const Vec x1 = {rng.uniform(-1, 1), rng.uniform(-1, 1)};
            const Vec x2 = {rng.uniform(-1, 1), rng.uniform(-1, 1)};
            const double a = rng.uniform(-2, 2), b = rng.uniform(-2, 2);
            const Vec mix = {a * x1[0] + b * x2[0], a * x1[1] + b * x2[1]};
            const Vec y1 = eval_deepcnn(net, x1, 32);
            const Vec y2 = eval_deepcnn(net, x2, 32);
            const Vec got = eval_deepcnn(net, mix, 32);
            Vec want(2);
            for (std::size_t i = 0; i < 2; ++i) want[i] = a * y1[i] + b * y2[i];
            double scale = 1.0;
            for (double v : want) scale = std::max(scale, std::abs(v));
            CHECK(norm2_diff(got, want) <= 1e-12 * scale);
        }
    }
    SUBCASE("neuralode") {
        const RandomSpec spec{.architecture = "neuralode", .p = 2, .q = 1, .n = 3,
                              .amplitude = 0.5, .activation = "identity"};
        const OdeNetParams ode = as_ode(random_params(6, spec));
        SplitMix64 rng(4);
        for (int trial = 0; trial < 4; ++trial) {
            const Vec x1 = {rng.uniform(-1, 1), rng.uniform(-1, 1)};
            const Vec x2 = {rng.uniform(-1, 1), rng.uniform(-1, 1)};
            const double a = rng.uniform(-2, 2), b = rng.uniform(-2, 2);
            const Vec mix = {a * x1[0] + b * x2[0], a * x1[1] + b * x2[1]};
            const Vec y1 = eval_neuralode(ode, x1, Solver::euler(32));
            const Vec y2 = eval_neuralode(ode, x2, Solver::euler(32));
            const Vec got = eval_neuralode(ode, mix, Solver::euler(32));
            Vec want(1);
            want[0] = a * y1[0] + b * y2[0];
            CHECK(norm2_diff(got, want) <= 1e-12 * std::max(1.0, std::abs(want[0])));
        }
    }
}

TEST_CASE("threaded evaluation is bitwise identical to serial") {
    const DipanetParams net = as_dipanet(random_params(
        123, RandomSpec{.architecture = "dipanet", .p = 2, .q = 2, .amplitude = 0.7}));
    const std::vector<Vec> xs = sphere_inputs(2, 3, 1.0, 11);
    EvalOptions serial;
    serial.threads = 1;
    EvalOptions eight;
    eight.threads = 8;
    const OdeOutputs a = eval_dipanet_batch(net, xs, 48, Solver::rk4(16), serial);
    const OdeOutputs b = eval_dipanet_batch(net, xs, 48, Solver::rk4(16), eight);
    for (std::size_t i = 0; i < xs.size(); ++i) CHECK(a.y[i] == b.y[i]);
}
