#pragma once
#include <cstdint>
#include <span>
#include <vector>

#include "dipanet/continuum_nets.hpp"
#include "dipanet/finite_nets.hpp"
#include "dipanet/funcrep.hpp"

namespace dipanet {

// Seeded inputs on the sphere of the given radius, with the origin appended.
std::vector<Vec> sphere_inputs(std::size_t dim, std::size_t count, double radius, std::uint64_t seed);

// Options for the measured closeness reports attached to homogenizations.
struct GapProbeOptions {
    std::size_t input_count = 20;    // sphere points (origin added on top)
    double radius = 1.0;
    std::uint64_t seed = 2024;
    std::size_t eval_m = 2048;       // continuum-side quadrature resolution
    std::size_t ref_multiplier = 16; // reference rk4 steps per supplied depth
    unsigned threads = 1;
};

// --------------------------- width direction ------------------------------

// Samples the continuum parameters on the n-grid: L rows and W entries at the
// nodes, the output-integral cell width absorbed into P, activations bound
// per neuron label. Emits the SumOfActivations convention.
FiniteNetParams discretize_width(const ContinuumNetParams& params, std::size_t n);

struct HomogenizeWidthResult {
    ContinuumNetParams params;
    std::size_t certificate_n = 0; // smallest tested width meeting eps (0: none did)
    double max_gap = 0.0;          // gap at the largest tested width
    std::vector<std::pair<std::size_t, double>> gaps;
};

// Builds piecewise-constant functions on [0,infinity) from the stabilized
// family entries, smooths jumps with delta = eps / max(variation, eps)
// (capped below the window limit), compresses to [0,1) via the tan warp, and
// measures the finite-vs-continuum output gap over a doubling width search.
HomogenizeWidthResult homogenize_width(const MatrixFamily& family, double eps, std::size_t n_max,
                                       const GapProbeOptions& opts = {});

// --------------------------- depth direction ------------------------------

// Left-endpoint sampling of the kernel and the (T/ell)-scaled activation
// field; the emitted residual layer recursion is exactly the Euler step.
FiniteNetParams discretize_depth(const OdeNetParams& params, std::size_t ell);

struct HomogenizeDepthResult {
    OdeNetParams ode;
    std::vector<std::pair<std::size_t, double>> gaps; // per supplied net depth
};

// Recovers W(t) as the depth interpolant of the deepest supplied net and the
// activation field as the (ell/T)-scaled interpolant of its layer
// activations; reports each supplied net's output gap to the recovered ODE.
HomogenizeDepthResult homogenize_depth(std::span<const FiniteNetParams> nets, double T,
                                       const GapProbeOptions& opts = {});

// ------------------------ distributed parameter ---------------------------

OdeNetParams discretize_dipanet_width(const DipanetParams& params, std::size_t n);

ContinuumNetParams discretize_dipanet_depth(const DipanetParams& params, std::size_t ell);

struct HomogenizeRescnnResult {
    DipanetParams params;
    std::vector<std::pair<std::size_t, double>> gaps;
};

HomogenizeRescnnResult homogenize_rescnn_depth(std::span<const ContinuumNetParams> nets, double T,
                                               const GapProbeOptions& opts = {});

enum class Route { WidthThenDepth, DepthThenWidth };

// Both compositions of the two discretizations, each yielding a
// SumOfActivations residual net with n neurons and ell layers.
FiniteNetParams roundtrip_corollary1(const DipanetParams& params, std::size_t n, std::size_t ell,
                                     Route route);

} // namespace dipanet
