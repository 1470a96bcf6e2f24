#pragma once
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "dipanet/linalg.hpp"

namespace dipanet {

// Uniform grid of n nodes tau_j = j/n on the half-open interval [0,1).
struct GridSpec {
    explicit GridSpec(std::size_t n_) : n(n_) {
        if (n == 0) throw PreconditionError("GridSpec: n must be positive");
    }
    std::size_t n;
    double delta() const { return 1.0 / static_cast<double>(n); }
    double node(std::size_t j) const { return static_cast<double>(j) / static_cast<double>(n); }

    // Cell index for tau in [0,1); cells are delimited by the representable
    // node values, so evaluation at an exact node lands in the cell that
    // starts there (right-continuity).
    std::size_t cell(double tau) const;
};

// Uniform partition t_i = i*T/ell of [0,T], i = 0..ell.
struct TimeGrid {
    TimeGrid(std::size_t ell_, double T_) : ell(ell_), T(T_) {
        if (ell == 0) throw PreconditionError("TimeGrid: ell must be positive");
        if (!(T > 0.0)) throw PreconditionError("TimeGrid: T must be positive");
    }
    std::size_t ell;
    double T;
    double step() const { return T / static_cast<double>(ell); }
    double node(std::size_t i) const { return static_cast<double>(i) * T / static_cast<double>(ell); }
    std::size_t cell(double t) const;
};

// Discrete solution samples: one state per time node, plus the per-step slope
// actually used by the stepper (field value for Euler, averaged increment/h
// for RK4). The slopes let Eq.-style integral reconstructions reuse the exact
// arithmetic of the sweep that produced the trajectory.
struct Trajectory {
    TimeGrid grid;
    std::vector<Vec> states;      // grid.ell + 1 entries
    std::vector<Vec> step_slopes; // grid.ell entries

    const Vec& initial() const { return states.front(); }
    const Vec& final() const { return states.back(); }

    // z0 + quad_left(slopes, h): the integral-form reconstruction from the
    // stored slope samples.
    Vec reconstruct_final() const;
};

using OdeField = std::function<void(double t, std::span<const double> z, std::span<double> dz)>;

// Composite left-rectangle rule on a uniform grid: Delta * sum(samples).
double quad_left(std::span<const double> samples, double delta);

// Componentwise left-rectangle rule for vector samples.
Vec quad_left(std::span<const Vec> samples, double delta);

// Explicit Euler: z_{i+1} = z_i + h * field(t_i, z_i).
Trajectory euler_solve(const OdeField& field, const Vec& z0, const TimeGrid& grid);

// Classical fourth-order Runge-Kutta with fixed step T/steps. Reference
// integrator for error measurements.
Trajectory rk4_solve(const OdeField& field, const Vec& z0, std::size_t steps, double T);

// Total variation of an ordered list of vectors: sum of Euclidean norms of
// consecutive differences. For a piecewise-constant function this equals the
// supremum over partitions.
double total_variation(std::span<const Vec> values);

// Piecewise-constant function on [0, infinity): value levels[k] on
// [breaks[k], breaks[k+1]), with the last level extending to infinity.
// breaks[0] must be 0.
struct PiecewiseConstantFn {
    std::vector<double> breaks;
    std::vector<Vec> levels;

    std::size_t dim() const { return levels.empty() ? 0 : levels.front().size(); }
    const Vec& eval(double x) const;
    double variation() const;
    double min_gap() const;
};

// Continuous piecewise-linear function on [0, infinity); constant before the
// first knot and after the last.
struct PiecewiseLinearFn {
    std::vector<double> knots;
    std::vector<Vec> values;

    Vec eval(double x) const;
    void eval_into(double x, std::span<double> out) const;
};

// Replace each jump of a piecewise-constant function by a linear ramp across
// [x_k - delta, x_k + delta]. The result is continuous, equals the input
// outside the windows, and satisfies integral |F - F~| = delta * V(F) / 2.
PiecewiseLinearFn linear_smooth(const PiecewiseConstantFn& pwc, double delta);

// Exact L1 distance between a piecewise-constant function and its smoothing
// windows' linear interpolant would give delta*V/2; this measures it by
// refined quadrature inside each window (the smoothing oracle for tests).
double smooth_l1_gap(const PiecewiseConstantFn& pwc, const PiecewiseLinearFn& smoothed,
                     double delta, std::size_t nodes_per_window = 4096);

// Continuous cell index for the window-smoothed piecewise-constant function
// with levels on the integer cells [k, k+1) of [0, infinity): inside cell k
// (away from windows) the value is k; across the window [k-delta, k+delta]
// it ramps linearly from k-1 to k. Clamped to [0, level_count-1].
double smoothing_coordinate(double x, double delta, std::size_t level_count);

// x = tan(pi*tau/2) maps [0,1) onto [0,infinity).
double tan_warp(double tau);                     // throws DomainError outside [0,1)
double tan_warp_jacobian(double tau);            // (pi/2) * (1 + tan^2(pi*tau/2))

// Jacobian-weighted compression: integrating the result over [0,1) with
// quad_left approximates the improper integral of g over [0,infinity).
template <class G>
auto tan_compress(G g) {
    return [g](double tau) { return g(tan_warp(tau)) * tan_warp_jacobian(tau); };
}

// Pure domain relabeling, no Jacobian weight: for factors that are sampled
// rather than integrated.
template <class G>
auto tan_relabel(G g) {
    return [g](double tau) { return g(tan_warp(tau)); };
}

struct UniformSample {
    double delta_tau;
    std::vector<Vec> rows; // rows[j] = F(j * delta_tau), j = 0..n-1
};

// Chooses delta_tau = 1/n with n = ceil(lipschitz/nu) so the oscillation of F
// over any cell is at most nu, and samples F at the cell left endpoints.
UniformSample sample_uniform(const std::function<Vec(double)>& f,
                             std::optional<double> lipschitz, double nu);

} // namespace dipanet
