#include "dipanet/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

namespace dipanet {

std::size_t GridSpec::cell(double tau) const {
    if (!(tau >= 0.0) || tau >= 1.0) throw DomainError("GridSpec::cell: tau outside [0,1)");
    auto c = static_cast<long>(std::floor(tau * static_cast<double>(n)));
    c = std::clamp<long>(c, 0, static_cast<long>(n) - 1);
    // Snap against the representable node values so exact nodes open their
    // own cell.
    while (c + 1 < static_cast<long>(n) && node(static_cast<std::size_t>(c + 1)) <= tau) ++c;
    while (c > 0 && node(static_cast<std::size_t>(c)) > tau) --c;
    return static_cast<std::size_t>(c);
}

std::size_t TimeGrid::cell(double t) const {
    if (!(t >= 0.0) || t > T) throw DomainError("TimeGrid::cell: t outside [0,T]");
    auto c = static_cast<long>(std::floor(t / step()));
    c = std::clamp<long>(c, 0, static_cast<long>(ell) - 1);
    while (c + 1 < static_cast<long>(ell) && node(static_cast<std::size_t>(c + 1)) <= t) ++c;
    while (c > 0 && node(static_cast<std::size_t>(c)) > t) --c;
    return static_cast<std::size_t>(c);
}

Vec Trajectory::reconstruct_final() const {
    const double h = grid.step();
    Vec acc(states.front().size(), 0.0);
    for (const Vec& slope : step_slopes)
        for (std::size_t j = 0; j < acc.size(); ++j) acc[j] += slope[j];
    Vec z = states.front();
    for (std::size_t j = 0; j < z.size(); ++j) z[j] += h * acc[j];
    return z;
}

double quad_left(std::span<const double> samples, double delta) {
    if (samples.empty()) throw PreconditionError("quad_left: empty sample vector");
    if (!(delta > 0.0)) throw PreconditionError("quad_left: cell width must be positive");
    double s = 0.0;
    for (double v : samples) s += v;
    return delta * s;
}

Vec quad_left(std::span<const Vec> samples, double delta) {
    if (samples.empty()) throw PreconditionError("quad_left: empty sample vector");
    if (!(delta > 0.0)) throw PreconditionError("quad_left: cell width must be positive");
    Vec acc(samples.front().size(), 0.0);
    for (const Vec& v : samples)
        for (std::size_t j = 0; j < acc.size(); ++j) acc[j] += v[j];
    for (double& x : acc) x *= delta;
    return acc;
}

namespace {

void check_finite(std::span<const double> z, std::size_t step, const char* solver) {
    if (!all_finite(z))
        throw DivergenceError(std::string(solver) + ": non-finite state at step " + std::to_string(step),
                              static_cast<long>(step));
}

} // namespace

Trajectory euler_solve(const OdeField& field, const Vec& z0, const TimeGrid& grid) {
    const double h = grid.step();
    Trajectory traj{grid, {}, {}};
    traj.states.reserve(grid.ell + 1);
    traj.step_slopes.reserve(grid.ell);
    traj.states.push_back(z0);
    Vec z = z0;
    Vec slope(z.size());
    for (std::size_t i = 0; i < grid.ell; ++i) {
        field(grid.node(i), z, slope);
        for (std::size_t j = 0; j < z.size(); ++j) z[j] += h * slope[j];
        check_finite(z, i, "euler_solve");
        traj.step_slopes.push_back(slope);
        traj.states.push_back(z);
    }
    return traj;
}

Trajectory rk4_solve(const OdeField& field, const Vec& z0, std::size_t steps, double T) {
    TimeGrid grid(steps, T);
    const double h = grid.step();
    Trajectory traj{grid, {}, {}};
    traj.states.reserve(steps + 1);
    traj.step_slopes.reserve(steps);
    traj.states.push_back(z0);
    const std::size_t n = z0.size();
    Vec z = z0, k1(n), k2(n), k3(n), k4(n), tmp(n), slope(n);
    for (std::size_t i = 0; i < steps; ++i) {
        const double t = grid.node(i);
        field(t, z, k1);
        for (std::size_t j = 0; j < n; ++j) tmp[j] = z[j] + 0.5 * h * k1[j];
        field(t + 0.5 * h, tmp, k2);
        for (std::size_t j = 0; j < n; ++j) tmp[j] = z[j] + 0.5 * h * k2[j];
        field(t + 0.5 * h, tmp, k3);
        for (std::size_t j = 0; j < n; ++j) tmp[j] = z[j] + h * k3[j];
        field(t + h, tmp, k4);
        for (std::size_t j = 0; j < n; ++j) {
            slope[j] = (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]) / 6.0;
            z[j] += h * slope[j];
        }
        check_finite(z, i, "rk4_solve");
        traj.step_slopes.push_back(slope);
        traj.states.push_back(z);
    }
    return traj;
}

double total_variation(std::span<const Vec> values) {
    if (values.empty()) throw PreconditionError("total_variation: empty list");
    double v = 0.0;
    for (std::size_t i = 1; i < values.size(); ++i) v += norm2_diff(values[i], values[i - 1]);
    return v;
}

const Vec& PiecewiseConstantFn::eval(double x) const {
    if (!(x >= 0.0)) throw DomainError("PiecewiseConstantFn: x < 0");
    auto it = std::upper_bound(breaks.begin(), breaks.end(), x);
    const std::size_t k = static_cast<std::size_t>(it - breaks.begin());
    return levels[std::min(k == 0 ? 0 : k - 1, levels.size() - 1)];
}

double PiecewiseConstantFn::variation() const {
    if (levels.empty()) throw PreconditionError("PiecewiseConstantFn: no levels");
    return total_variation(levels);
}

double PiecewiseConstantFn::min_gap() const {
    double g = std::numeric_limits<double>::infinity();
    for (std::size_t k = 1; k < breaks.size(); ++k) g = std::min(g, breaks[k] - breaks[k - 1]);
    return g;
}

Vec PiecewiseLinearFn::eval(double x) const {
    Vec out(values.front().size());
    eval_into(x, out);
    return out;
}

void PiecewiseLinearFn::eval_into(double x, std::span<double> out) const {
    if (x <= knots.front()) {
        std::copy(values.front().begin(), values.front().end(), out.begin());
        return;
    }
    if (x >= knots.back()) {
        std::copy(values.back().begin(), values.back().end(), out.begin());
        return;
    }
    auto it = std::upper_bound(knots.begin(), knots.end(), x);
    const std::size_t k = static_cast<std::size_t>(it - knots.begin());
    const double w = (x - knots[k - 1]) / (knots[k] - knots[k - 1]);
    const Vec& a = values[k - 1];
    const Vec& b = values[k];
    for (std::size_t j = 0; j < out.size(); ++j) out[j] = a[j] + w * (b[j] - a[j]);
}

PiecewiseLinearFn linear_smooth(const PiecewiseConstantFn& pwc, double delta) {
    if (pwc.breaks.empty() || pwc.breaks.front() != 0.0)
        throw PreconditionError("linear_smooth: breakpoints must start at 0");
    if (pwc.breaks.size() != pwc.levels.size())
        throw PreconditionError("linear_smooth: breakpoints/levels size mismatch");
    if (!(delta > 0.0)) throw PreconditionError("linear_smooth: delta must be positive");
    if (pwc.breaks.size() > 1 && !(delta < 0.5 * pwc.min_gap()))
        throw PreconditionError("linear_smooth: delta >= half the minimum breakpoint gap; windows would merge");

    PiecewiseLinearFn out;
    if (pwc.breaks.size() == 1) { // single level: already continuous
        out.knots = {0.0};
        out.values = {pwc.levels.front()};
        return out;
    }
    out.knots.push_back(0.0);
    out.values.push_back(pwc.levels.front());
    for (std::size_t k = 1; k < pwc.breaks.size(); ++k) {
        out.knots.push_back(pwc.breaks[k] - delta);
        out.values.push_back(pwc.levels[k - 1]);
        out.knots.push_back(pwc.breaks[k] + delta);
        out.values.push_back(pwc.levels[k]);
    }
    return out;
}

double smooth_l1_gap(const PiecewiseConstantFn& pwc, const PiecewiseLinearFn& smoothed,
                     double delta, std::size_t nodes_per_window) {
    // The two functions agree outside the jump windows, so only the windows
    // are integrated, each with a refined left-rectangle rule.
    double total = 0.0;
    Vec sm(pwc.dim());
    for (std::size_t k = 1; k < pwc.breaks.size(); ++k) {
        const double lo = std::max(0.0, pwc.breaks[k] - delta);
        const double hi = pwc.breaks[k] + delta;
        const double dx = (hi - lo) / static_cast<double>(nodes_per_window);
        double acc = 0.0;
        for (std::size_t i = 0; i < nodes_per_window; ++i) {
            const double x = lo + (static_cast<double>(i) + 0.5) * dx; // midpoint inside the window
            smoothed.eval_into(x, sm);
            acc += norm2_diff(pwc.eval(x), sm);
        }
        total += acc * dx;
    }
    return total;
}

double smoothing_coordinate(double x, double delta, std::size_t level_count) {
    if (level_count == 0) throw PreconditionError("smoothing_coordinate: no levels");
    const double last = static_cast<double>(level_count - 1);
    if (!(x >= 0.0)) throw DomainError("smoothing_coordinate: x < 0");
    if (delta > 0.0) {
        const double k = std::floor(x + 0.5); // nearest integer breakpoint
        if (k >= 1.0 && k <= last && std::abs(x - k) <= delta)
            return (k - 1.0) + (x - (k - delta)) / (2.0 * delta);
    }
    return std::min(std::floor(x), last);
}

double tan_warp(double tau) {
    if (!(tau >= 0.0) || tau >= 1.0) throw DomainError("tan_warp: tau outside [0,1)");
    return std::tan(0.5 * std::numbers::pi * tau);
}

double tan_warp_jacobian(double tau) {
    const double t = tan_warp(tau);
    return 0.5 * std::numbers::pi * (1.0 + t * t);
}

UniformSample sample_uniform(const std::function<Vec(double)>& f,
                             std::optional<double> lipschitz, double nu) {
    if (!(nu > 0.0)) throw PreconditionError("sample_uniform: nu must be positive");
    if (!lipschitz) throw PreconditionError("sample_uniform: missing Lipschitz/modulus metadata");
    const double lip = *lipschitz;
    if (lip < 0.0) throw PreconditionError("sample_uniform: negative Lipschitz constant");
    std::size_t n = 1;
    if (lip > 0.0) n = static_cast<std::size_t>(std::max(1.0, std::ceil(lip / nu)));
    GridSpec grid(n);
    UniformSample s;
    s.delta_tau = grid.delta();
    s.rows.reserve(n);
    for (std::size_t j = 0; j < n; ++j) s.rows.push_back(f(grid.node(j)));
    return s;
}

} // namespace dipanet
