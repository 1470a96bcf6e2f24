#pragma once
#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "dipanet/continuum_nets.hpp"
#include "dipanet/transforms.hpp"

namespace dipanet {

struct ConvergenceRecord {
    std::size_t resolution = 0;
    double error = 0.0;
    double runtime_s = 0.0; // coarse wall time; excluded from artifacts unless requested
    std::string reference_tag;
};

struct SweepReport {
    std::vector<ConvergenceRecord> records;
    std::optional<double> fitted_order; // absent when fewer than 3 non-degenerate errors
};

// Negated least-squares slope of log(error) against log(resolution); order 1
// means error ~ 1/resolution. Needs >= 3 records with error above 1e-14.
std::optional<double> fit_order(std::span<const ConvergenceRecord> records);

// error(ell) = max over inputs of |Y_euler(ell) - Y_reference| with an rk4
// reference at fixed steps (>= 16x the largest ell by convention).
SweepReport sweep_depth(const OdeNetParams& ode, std::span<const std::size_t> resolutions,
                        std::span<const Vec> inputs, Solver reference,
                        const EvalOptions& opts = {});

// error(n) = max over inputs of |Y_discretized(n) - Y_cnn(reference_m)|.
SweepReport sweep_width(const ContinuumNetParams& cnn, std::span<const std::size_t> resolutions,
                        std::span<const Vec> inputs, std::size_t reference_m,
                        const EvalOptions& opts = {});

struct TwoRouteRecord {
    std::size_t n = 0, ell = 0;
    double discrepancy = 0.0; // max over inputs of |Y_routeA - Y_routeB|
    double gap_a = 0.0;       // route A against the fine reference
    double gap_b = 0.0;
    double runtime_s = 0.0;
};

struct TwoRouteReport {
    std::vector<TwoRouteRecord> records;
    std::size_t reference_m = 0;
    Solver reference_solver;
};

TwoRouteReport two_route_check(const DipanetParams& params,
                               std::span<const std::pair<std::size_t, std::size_t>> sizes,
                               std::span<const Vec> inputs, std::size_t reference_m,
                               Solver reference_solver, const EvalOptions& opts = {});

// ---------------------------------------------------------------------------
// Deterministic random instances
// ---------------------------------------------------------------------------

struct RandomSpec {
    std::string architecture = "deepnet"; // deepnet, deepresnet, deepresnet_skip, deepcnn,
                                          // deeprescnn, neuralode, neuralresode, dipanet, diparesnet
    std::size_t p = 1, q = 1;
    std::size_t n = 4;   // width (finite and ODE nets)
    std::size_t ell = 2; // depth (layered nets)
    double T = 1.0;
    double amplitude = 1.0;
    std::vector<std::string> families = {"poly", "sin", "cos"}; // analytic factor kinds
    std::string activation = "tanh";
};

using ParamsVariant = std::variant<FiniteNetParams, ContinuumNetParams, OdeNetParams, DipanetParams>;

// Same seed and spec give identical parameters on every platform; every drawn
// coefficient lies in [-amplitude, amplitude] and analytic reps carry a
// Lipschitz bound computed from their coefficients.
ParamsVariant random_params(std::uint64_t seed, const RandomSpec& spec);

// Convenience accessors that throw StructuralError on the wrong alternative.
const OdeNetParams& as_ode(const ParamsVariant& v);
const DipanetParams& as_dipanet(const ParamsVariant& v);
const ContinuumNetParams& as_continuum(const ParamsVariant& v);
const FiniteNetParams& as_finite(const ParamsVariant& v);

// Consistent-by-construction families for homogenization runs:
//   geometric: rows/columns scaled by 2^-j, diagonal W blocks
//   constant:  every row, block and column equal to seeded constants
//   zero:      all-zero weights
MatrixFamily builtin_family(const std::string& kind, std::size_t layers, std::size_t p,
                            std::size_t q, std::uint64_t seed, double amplitude,
                            ActKind activation);

// ---------------------------------------------------------------------------
// Named desk-scale test problems
// ---------------------------------------------------------------------------

// dz/dt = z with L = P = 1: closed forms e^T and (1 + T/ell)^ell.
OdeNetParams linear_scalar_ode();

// Single hidden layer, kernel sin(2*pi*(tau+s)), tanh activation, smooth
// nonconstant lift and read-out.
ContinuumNetParams lipschitz_kernel_cnn();

// Constant-one lift, kernel and read-out with identity activation; every
// neuron stays equal, so the method of lines reduces to dz/dt = z exactly.
DipanetParams mean_field_dipanet();

// Kernel (1+t)*cos(2*pi*tau*s) with tanh activation: Lipschitz in time for
// the depth-discretization sweeps.
DipanetParams time_kernel_dipanet();

} // namespace dipanet
