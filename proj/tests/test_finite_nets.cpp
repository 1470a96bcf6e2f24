#include <doctest.h>

#include "dipanet/finite_nets.hpp"
#include "dipanet/harness.hpp"
#include "dipanet/rng.hpp"

using namespace dipanet;

namespace {

FiniteNetParams identity_relu_net() {
    FiniteNetParams net;
    net.L = Matrix::identity(2);
    net.W.push_back(Matrix::identity(2));
    net.P = Matrix::identity(2);
    net.act.push_back(LayerActivation(ActivationDescriptor{ActKind::Relu, 1.0}));
    return net;
}

} // namespace

TEST_CASE("eval_deepnet examples") {
    SUBCASE("identity wiring with relu") {
        const FiniteNetParams net = identity_relu_net();
        CHECK(eval_deepnet(net, {1.0, -1.0}) == Vec{1.0, 0.0});
        CHECK(eval_deepnet(net, {-3.0, -4.0}) == Vec{0.0, 0.0});
    }
    SUBCASE("swap matrix") {
        FiniteNetParams net = identity_relu_net();
        net.W[0] = Matrix(2, 2, {0.0, 1.0, 1.0, 0.0});
        CHECK(eval_deepnet(net, {2.0, -1.0}) == Vec{0.0, 2.0});
    }
    SUBCASE("residual params rejected") {
        FiniteNetParams net = identity_relu_net();
        net.residual = Residual::Plain;
        CHECK_THROWS_AS(eval_deepnet(net, {1.0, 1.0}), PreconditionError);
    }
    SUBCASE("dimension mismatch is structural") {
        const FiniteNetParams net = identity_relu_net();
        CHECK_THROWS_AS(eval_deepnet(net, {1.0, 2.0, 3.0}), StructuralError);
    }
}

TEST_CASE("eval_deepresnet examples") {
    SUBCASE("zero activation: plain returns P L X for any depth") {
        const RandomSpec spec{.architecture = "deepresnet", .p = 3, .q = 2, .n = 4, .ell = 5,
                              .amplitude = 1.0, .activation = "zero"};
        const FiniteNetParams net = as_finite(random_params(10, spec));
        const Vec x = {0.3, -1.0, 0.5};
        CHECK(eval_deepresnet(net, x) == matvec(net.P, matvec(net.L, x)));
    }
    SUBCASE("zero activation skip: (P1 + P2) L X") {
        const RandomSpec spec{.architecture = "deepresnet_skip", .p = 2, .q = 2, .n = 3, .ell = 4,
                              .amplitude = 1.0, .activation = "zero"};
        const FiniteNetParams net = as_finite(random_params(11, spec));
        const Vec x = {1.0, -0.5};
        const Vec z0 = matvec(net.L, x);
        Vec want(2, 0.0);
        for (std::size_t r = 0; r < 2; ++r)
            for (std::size_t j = 0; j < 3; ++j)
                want[r] += net.P(r, j) * z0[j] + net.P(r, 3 + j) * z0[j];
        const Vec got = eval_deepresnet(net, x);
        CHECK(norm2_diff(got, want) <= 1e-14);
    }
    SUBCASE("scalar residual layer: 1 + relu(2) = 3") {
        FiniteNetParams net;
        net.L = Matrix(1, 1, {1.0});
        net.W.push_back(Matrix(1, 1, {2.0}));
        net.P = Matrix(1, 1, {1.0});
        net.act.push_back(LayerActivation(ActivationDescriptor{ActKind::Relu, 1.0}));
        net.residual = Residual::Plain;
        CHECK(eval_deepresnet(net, {1.0}) == Vec{3.0});
    }
}

TEST_CASE("identity activations make both conventions linear in X") {
    for (const char* arch : {"deepnet", "deepresnet"}) {
        RandomSpec spec{.architecture = arch, .p = 3, .q = 2, .n = 5, .ell = 3,
                        .amplitude = 0.9, .activation = "identity"};
        FiniteNetParams net = as_finite(random_params(77, spec));
        SUBCASE(arch) {
            for (auto convention :
                 {Convention::standard(), Convention::sum_of_activations(0.2)}) {
                net.convention = convention;
                SplitMix64 rng(13);
                for (int trial = 0; trial < 8; ++trial) {
                    Vec x1(3), x2(3), mix(3);
                    for (std::size_t i = 0; i < 3; ++i) {
                        x1[i] = rng.uniform(-1, 1);
                        x2[i] = rng.uniform(-1, 1);
                    }
                    const double a = rng.uniform(-2, 2), b = rng.uniform(-2, 2);
                    for (std::size_t i = 0; i < 3; ++i) mix[i] = a * x1[i] + b * x2[i];
                    const Vec y1 = eval_finite(net, x1);
                    const Vec y2 = eval_finite(net, x2);
                    Vec want(2);
                    for (std::size_t i = 0; i < 2; ++i) want[i] = a * y1[i] + b * y2[i];
                    const Vec got = eval_finite(net, mix);
                    double scale = 1.0;
                    for (double v : want) scale = std::max(scale, std::abs(v));
                    CHECK(norm2_diff(got, want) <= 1e-12 * scale);
                }
            }
        }
    }
}

TEST_CASE("zero activation deepnet outputs zero for any depth >= 1") {
    for (std::size_t ell : {1UL, 2UL, 6UL}) {
        const RandomSpec spec{.architecture = "deepnet", .p = 2, .q = 3, .n = 4, .ell = ell,
                              .amplitude = 1.0, .activation = "zero"};
        const FiniteNetParams net = as_finite(random_params(ell, spec));
        for (double v : eval_deepnet(net, {1.0, 2.0})) CHECK(v == 0.0);
    }
}

TEST_CASE("hidden trace has depth + 1 entries starting at L X") {
    const RandomSpec spec{.architecture = "deepnet", .p = 2, .q = 1, .n = 3, .ell = 4};
    const FiniteNetParams net = as_finite(random_params(5, spec));
    const Vec x = {0.25, -0.75};
    Trace trace;
    eval_deepnet(net, x, &trace);
    REQUIRE(trace.size() == 5);
    CHECK(trace[0] == matvec(net.L, x));
    for (const Vec& z : trace) CHECK(z.size() == 3);
}

TEST_CASE("SumOfActivations with dtau = 1 and width 1 matches Standard") {
    FiniteNetParams std_net;
    std_net.L = Matrix(1, 1, {1.3});
    std_net.W.push_back(Matrix(1, 1, {-0.8}));
    std_net.P = Matrix(1, 1, {2.0});
    std_net.act.push_back(LayerActivation(ActivationDescriptor{ActKind::Tanh, 1.0}));
    FiniteNetParams soa_net = std_net;
    soa_net.convention = Convention::sum_of_activations(1.0);
    for (double x : {-1.5, 0.0, 0.4, 2.0})
        CHECK(eval_deepnet(std_net, {x}) == eval_deepnet(soa_net, {x}));
}

TEST_CASE("bias augmentation carries the constant through the layers") {
    SUBCASE("plain deepnet") {
        FiniteNetParams net;
        net.L = Matrix(1, 1, {2.0});
        net.W.push_back(Matrix(1, 1, {1.0}));
        net.P = Matrix(1, 1, {1.0});
        net.act.push_back(LayerActivation(ActivationDescriptor{ActKind::Identity, 1.0}));
        // With lift bias 0.5 and layer bias -1: y = (2x + 0.5) - 1
        const FiniteNetParams aug = with_bias(net, {0.5}, {{-1.0}});
        const Vec x_aug = augment_input({3.0});
        REQUIRE(x_aug == Vec{3.0, 1.0});
        CHECK(eval_deepnet(aug, x_aug) == Vec{2.0 * 3.0 + 0.5 - 1.0});
    }
    SUBCASE("residual net keeps the carrier fixed") {
        FiniteNetParams net;
        net.L = Matrix(1, 1, {1.0});
        net.W.push_back(Matrix(1, 1, {1.0}));
        net.W.push_back(Matrix(1, 1, {1.0}));
        net.P = Matrix(1, 1, {1.0});
        net.act.push_back(LayerActivation(ActivationDescriptor{ActKind::Identity, 1.0}));
        net.act.push_back(LayerActivation(ActivationDescriptor{ActKind::Identity, 1.0}));
        net.residual = Residual::Plain;
        const FiniteNetParams aug = with_bias(net, {0.0}, {{1.0}, {1.0}});
        // z -> z + (z + 1) per layer: x=1 -> 3 -> 7
        Trace trace;
        CHECK(eval_deepresnet(aug, augment_input({1.0}), &trace) == Vec{7.0});
        for (const Vec& z : trace) CHECK(z.back() == 1.0); // carrier component
    }
}

TEST_CASE("divergence in a finite net names the layer") {
    FiniteNetParams net;
    net.L = Matrix(1, 1, {1e308});
    net.W.push_back(Matrix(1, 1, {1e308}));
    net.P = Matrix(1, 1, {1.0});
    net.act.push_back(LayerActivation(ActivationDescriptor{ActKind::Identity, 1.0}));
    CHECK_THROWS_AS(eval_deepnet(net, {1e5}), DivergenceError);
}
