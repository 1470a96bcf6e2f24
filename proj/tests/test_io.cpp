#include <doctest.h>

#include "dipanet/harness.hpp"
#include "dipanet/io.hpp"
#include "dipanet/transforms.hpp"

using namespace dipanet;

TEST_CASE("dump_json prints round-trippable doubles") {
    Json j;
    j["values"] = Json::array({1.0 / 3.0, 0.1, 1e-300, -2.5e17, 0.0});
    const std::string text = dump_json(j);
    const Json back = Json::parse(text);
    for (std::size_t i = 0; i < 5; ++i)
        CHECK(back["values"][i].get<double>() == j["values"][i].get<double>());
    // deterministic output
    CHECK(dump_json(j) == text);
}

TEST_CASE("matrix round trip") {
    Matrix m(2, 3, {1.0, -0.25, 1.0 / 3.0, 5e-4, 2.0, -7.0});
    CHECK(matrix_from_json(to_json(m)) == m);
    CHECK_THROWS_AS(matrix_from_json(Json::parse("[[1, 2], [3]]")), StructuralError);
}

namespace {

// serialize -> parse -> serialize equality (the parse must reconstruct the
// exact object)
template <class T, class FromJson>
void check_round_trip(const T& value, FromJson from) {
    const Json j = to_json(value);
    const std::string first = dump_json(j);
    const T back = from(j);
    CHECK(dump_json(to_json(back)) == first);
}

} // namespace

TEST_CASE("parameter round trips are bitwise stable") {
    SUBCASE("finite nets") {
        for (const char* arch : {"deepnet", "deepresnet", "deepresnet_skip"}) {
            const RandomSpec spec{.architecture = arch, .p = 2, .q = 2, .n = 3, .ell = 2};
            check_round_trip(as_finite(random_params(3, spec)), finite_from_json);
        }
    }
    SUBCASE("continuum nets") {
        for (const char* arch : {"deepcnn", "deeprescnn"}) {
            const RandomSpec spec{.architecture = arch, .p = 2, .q = 1, .ell = 2};
            check_round_trip(as_continuum(random_params(4, spec)), continuum_from_json);
        }
    }
    SUBCASE("neural odes, including kernels from transforms") {
        const RandomSpec spec{.architecture = "neuralode", .p = 2, .q = 2, .n = 3};
        check_round_trip(as_ode(random_params(5, spec)), ode_from_json);

        const RandomSpec dspec{.architecture = "dipanet", .p = 2, .q = 1};
        const DipanetParams net = as_dipanet(random_params(6, dspec));
        check_round_trip(discretize_dipanet_width(net, 6), ode_from_json);
    }
    SUBCASE("dipanet, including homogenized kernels") {
        const RandomSpec spec{.architecture = "diparesnet", .p = 2, .q = 2};
        check_round_trip(as_dipanet(random_params(7, spec)), dipanet_from_json);

        // depth-homogenized stack kernels and blended fields
        const DipanetParams src = as_dipanet(
            random_params(8, RandomSpec{.architecture = "dipanet", .p = 1, .q = 1}));
        std::vector<ContinuumNetParams> nets = {discretize_dipanet_depth(src, 3)};
        GapProbeOptions probe;
        probe.input_count = 1;
        probe.eval_m = 8;
        probe.ref_multiplier = 4;
        const auto rec = homogenize_rescnn_depth(nets, 1.0, probe);
        check_round_trip(rec.params, dipanet_from_json);
    }
    SUBCASE("width-homogenized continuum nets") {
        const MatrixFamily fam = builtin_family("geometric", 1, 2, 1, 7, 1.0, ActKind::Relu);
        GapProbeOptions probe;
        probe.input_count = 2;
        probe.eval_m = 64;
        const auto res = homogenize_width(fam, 1e-1, 8, probe);
        check_round_trip(res.params, continuum_from_json);
    }
    SUBCASE("depth-discretized finite nets carry blended activations") {
        const OdeNetParams ode = as_ode(
            random_params(9, RandomSpec{.architecture = "neuralode", .p = 1, .q = 1, .n = 2}));
        std::vector<FiniteNetParams> nets = {discretize_depth(ode, 4), discretize_depth(ode, 8)};
        GapProbeOptions probe;
        probe.input_count = 1;
        probe.ref_multiplier = 4;
        const auto rec = homogenize_depth(nets, ode.T, probe);
        check_round_trip(discretize_depth(rec.ode, 3), finite_from_json);
    }
}

TEST_CASE("architecture envelope") {
    const RandomSpec spec{.architecture = "neuralresode", .p = 2, .q = 1, .n = 2};
    const ParamsVariant v = random_params(11, spec);
    const Json j = params_to_json(v);
    CHECK(j["type"] == "neuralresode");
    const ParamsVariant back = params_from_json(j);
    CHECK(dump_json(params_to_json(back)) == dump_json(j));
    CHECK_THROWS_AS(params_from_json(Json{{"type", "mlp"}, {"params", Json::object()}}),
                    StructuralError);
}

TEST_CASE("strict schemas reject unknown keys") {
    Json j = to_json(Matrix(1, 1, {1.0}));
    Json net;
    net["L"] = j;
    net["W"] = Json::array({j});
    net["P"] = j;
    net["activations"] = Json::array({Json{{"outer", 1.0},
                                           {"components", Json::array({Json::array(
                                                              {Json{{"kind", "tanh"}, {"scale", 1.0}}})})}}});
    net["residual"] = "none";
    CHECK_NOTHROW(finite_from_json(net));
    net["extra_knob"] = 1;
    CHECK_THROWS_AS(finite_from_json(net), StructuralError);
}

TEST_CASE("solver serialization") {
    CHECK(solver_from_json(Json{{"euler", 12}}).method == Solver::Method::Euler);
    CHECK(solver_from_json(Json{{"rk4", 7}}).resolution == 7);
    CHECK_THROWS_AS(solver_from_json(Json{{"midpoint", 3}}), StructuralError);
}

TEST_CASE("sweep CSV schema") {
    SweepReport rep;
    rep.records.push_back({8, 0.125, 3.5, "rk4(128)"});
    rep.records.push_back({16, 0.0625, 4.5, "rk4(128)"});
    rep.fitted_order = 1.0;
    const std::string csv = sweep_csv(rep);
    CHECK(csv.rfind("resolution,error,runtime_s,reference_tag\n", 0) == 0);
    CHECK(csv.find("8,0.125,0,rk4(128)\n") != std::string::npos);
    // runtimes only with the explicit flag
    const std::string with_times = sweep_csv(rep, true);
    CHECK(with_times.find("3.5") != std::string::npos);
    CHECK(csv.find("3.5") == std::string::npos);
}
