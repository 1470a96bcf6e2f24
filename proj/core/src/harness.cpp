#include "dipanet/harness.hpp"

#include <chrono>
#include <cmath>
#include <numbers>

#include "dipanet/rng.hpp"

namespace dipanet {

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void check_resolutions(std::span<const std::size_t> res) {
    if (res.size() < 2) throw PreconditionError("sweep: need at least two resolutions");
    for (std::size_t i = 1; i < res.size(); ++i)
        if (!(res[i] > res[i - 1])) throw PreconditionError("sweep: resolutions must increase");
}

double max_gap(std::span<const Vec> a, std::span<const Vec> b) {
    double g = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) g = std::max(g, norm2_diff(a[i], b[i]));
    return g;
}

} // namespace

std::optional<double> fit_order(std::span<const ConvergenceRecord> records) {
    std::vector<double> xs, ys;
    for (const auto& r : records) {
        if (r.error > 1e-14) {
            xs.push_back(std::log(static_cast<double>(r.resolution)));
            ys.push_back(std::log(r.error));
        }
    }
    if (xs.size() < 3) return std::nullopt;
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        mx += xs[i];
        my += ys[i];
    }
    mx /= static_cast<double>(xs.size());
    my /= static_cast<double>(xs.size());
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        num += (xs[i] - mx) * (ys[i] - my);
        den += (xs[i] - mx) * (xs[i] - mx);
    }
    return -num / den;
}

SweepReport sweep_depth(const OdeNetParams& ode, std::span<const std::size_t> resolutions,
                        std::span<const Vec> inputs, Solver reference, const EvalOptions& opts) {
    check_resolutions(resolutions);
    if (inputs.empty()) throw PreconditionError("sweep_depth: need at least one input");
    const OdeOutputs ref = eval_neuralode_batch(ode, inputs, reference, opts);
    const std::string tag = "rk4(" + std::to_string(reference.resolution) + ")";

    SweepReport report;
    for (std::size_t ell : resolutions) {
        const auto t0 = std::chrono::steady_clock::now();
        const OdeOutputs got = eval_neuralode_batch(ode, inputs, Solver::euler(ell), opts);
        ConvergenceRecord rec;
        rec.resolution = ell;
        rec.error = max_gap(got.y, ref.y);
        rec.runtime_s = seconds_since(t0);
        rec.reference_tag = tag;
        report.records.push_back(std::move(rec));
    }
    report.fitted_order = fit_order(report.records);
    return report;
}

SweepReport sweep_width(const ContinuumNetParams& cnn, std::span<const std::size_t> resolutions,
                        std::span<const Vec> inputs, std::size_t reference_m,
                        const EvalOptions& opts) {
    check_resolutions(resolutions);
    if (inputs.empty()) throw PreconditionError("sweep_width: need at least one input");
    if (reference_m < 4 * resolutions.back())
        throw PreconditionError("sweep_width: reference_m must be at least 4x the largest resolution");
    const std::vector<Vec> ref = eval_deepcnn_batch(cnn, inputs, reference_m, opts);
    const std::string tag = "deepcnn(m=" + std::to_string(reference_m) + ")";

    SweepReport report;
    for (std::size_t n : resolutions) {
        const auto t0 = std::chrono::steady_clock::now();
        const FiniteNetParams net = discretize_width(cnn, n);
        std::vector<Vec> got;
        got.reserve(inputs.size());
        for (const Vec& x : inputs) got.push_back(eval_finite(net, x));
        ConvergenceRecord rec;
        rec.resolution = n;
        rec.error = max_gap(got, ref);
        rec.runtime_s = seconds_since(t0);
        rec.reference_tag = tag;
        report.records.push_back(std::move(rec));
    }
    report.fitted_order = fit_order(report.records);
    return report;
}

TwoRouteReport two_route_check(const DipanetParams& params,
                               std::span<const std::pair<std::size_t, std::size_t>> sizes,
                               std::span<const Vec> inputs, std::size_t reference_m,
                               Solver reference_solver, const EvalOptions& opts) {
    if (sizes.empty()) throw PreconditionError("two_route_check: sizes must be nonempty");
    if (inputs.empty()) throw PreconditionError("two_route_check: need at least one input");

    TwoRouteReport report;
    report.reference_m = reference_m;
    report.reference_solver = reference_solver;
    const OdeOutputs ref = eval_dipanet_batch(params, inputs, reference_m, reference_solver, opts);

    for (const auto& [n, ell] : sizes) {
        const auto t0 = std::chrono::steady_clock::now();
        const FiniteNetParams net_a = roundtrip_corollary1(params, n, ell, Route::WidthThenDepth);
        const FiniteNetParams net_b = roundtrip_corollary1(params, n, ell, Route::DepthThenWidth);
        std::vector<Vec> ya, yb;
        ya.reserve(inputs.size());
        yb.reserve(inputs.size());
        for (const Vec& x : inputs) {
            ya.push_back(eval_finite(net_a, x));
            yb.push_back(eval_finite(net_b, x));
        }
        TwoRouteRecord rec;
        rec.n = n;
        rec.ell = ell;
        rec.discrepancy = max_gap(ya, yb);
        rec.gap_a = max_gap(ya, ref.y);
        rec.gap_b = max_gap(yb, ref.y);
        rec.runtime_s = seconds_since(t0);
        report.records.push_back(rec);
    }
    return report;
}

// ---------------------------------------------------------------------------
// Deterministic random instances
// ---------------------------------------------------------------------------

namespace {

FactorKind factor_kind_from_string(const std::string& s) {
    if (s == "poly") return FactorKind::Poly;
    if (s == "sin") return FactorKind::Sin;
    if (s == "cos") return FactorKind::Cos;
    if (s == "exp") return FactorKind::Exp;
    if (s == "gauss") return FactorKind::Gauss;
    throw PreconditionError("random_params: unknown analytic family '" + s + "'");
}

std::vector<std::pair<double, double>> domain_ranges(Domain d, double T) {
    switch (d) {
        case Domain::Unit: return {{0.0, 1.0}};
        case Domain::Time: return {{0.0, T}};
        case Domain::UnitSquare: return {{0.0, 1.0}, {0.0, 1.0}};
        case Domain::UnitSquareTime: return {{0.0, 1.0}, {0.0, 1.0}, {0.0, T}};
    }
    return {};
}

class RandomBuilder {
public:
    RandomBuilder(std::uint64_t seed, const RandomSpec& spec) : rng_(seed), spec_(spec) {
        if (!(spec.amplitude > 0.0)) throw PreconditionError("random_params: amplitude must be positive");
        if (spec.families.empty()) throw PreconditionError("random_params: no analytic families given");
        for (const auto& f : spec.families) kinds_.push_back(factor_kind_from_string(f));
    }

    double coeff() { return rng_.uniform(-spec_.amplitude, spec_.amplitude); }

    Matrix matrix(std::size_t r, std::size_t c) {
        Matrix m(r, c);
        for (double& v : m.flat()) v = coeff();
        return m;
    }

    Factor factor(std::size_t arity, std::span<const std::size_t> coords) {
        Factor f;
        f.kind = kinds_[static_cast<std::size_t>(rng_.below(kinds_.size()))];
        if (f.kind == FactorKind::Poly) f.degree = 1 + static_cast<int>(rng_.below(2));
        f.weights.assign(arity, 0.0);
        for (std::size_t c : coords) f.weights[c] = coeff();
        f.offset = coeff();
        return f;
    }

    // Scalar expression. On the space-time box, factors are drawn over either
    // the spatial coordinates or time, never both, so kernel slices stay
    // cacheable over the grid.
    AnalyticExpr expr(Domain d) {
        const std::size_t arity = domain_dims(d);
        AnalyticExpr e;
        e.arity = arity;
        e.constant = coeff();
        const std::size_t nterms = 1 + rng_.below(2);
        for (std::size_t t = 0; t < nterms; ++t) {
            Term term;
            term.coeff = coeff();
            if (d == Domain::UnitSquareTime) {
                const std::size_t space[2] = {0, 1};
                term.factors.push_back(factor(arity, space));
                if (rng_.below(2) == 0) {
                    const std::size_t time[1] = {2};
                    term.factors.push_back(factor(arity, time));
                }
            } else if (d == Domain::UnitSquare) {
                const std::size_t space[2] = {0, 1};
                term.factors.push_back(factor(arity, space));
            } else {
                const std::size_t only[1] = {0};
                term.factors.push_back(factor(arity, only));
            }
            e.terms.push_back(std::move(term));
        }
        return e;
    }

    FunctionRep rep(Domain d, double T, std::size_t rows, std::size_t cols) {
        FunctionRep::Analytic a;
        a.entries.reserve(rows * cols);
        const auto ranges = domain_ranges(d, T);
        double lip = 0.0;
        for (std::size_t i = 0; i < rows * cols; ++i) {
            a.entries.push_back(expr(d));
            lip = std::max(lip, lipschitz_bound(a.entries.back(), ranges));
        }
        return FunctionRep(d, T, rows, cols, std::move(a), lip);
    }

    ActivationDescriptor descriptor() { return {act_kind_from_string(spec_.activation), 1.0}; }

    ActivationField layer_field() {
        return ActivationField::modulated(descriptor(), rep(Domain::Unit, 0.0, 1, 1));
    }

    ActivationField ode_field(double T) {
        return ActivationField::modulated(descriptor(), std::nullopt, rep(Domain::Time, T, 1, 1));
    }

    ActivationField dipanet_field(double T) {
        return ActivationField::modulated(descriptor(), rep(Domain::Unit, 0.0, 1, 1),
                                          rep(Domain::Time, T, 1, 1));
    }

private:
    SplitMix64 rng_;
    RandomSpec spec_;
    std::vector<FactorKind> kinds_;
};

} // namespace

ParamsVariant random_params(std::uint64_t seed, const RandomSpec& spec) {
    RandomBuilder b(seed, spec);
    const std::string& arch = spec.architecture;

    if (arch == "deepnet" || arch == "deepresnet" || arch == "deepresnet_skip") {
        FiniteNetParams net;
        net.residual = arch == "deepnet"      ? Residual::None
                       : arch == "deepresnet" ? Residual::Plain
                                              : Residual::Skip;
        net.convention = Convention::standard();
        net.L = b.matrix(spec.n, spec.p);
        for (std::size_t i = 0; i < spec.ell; ++i) {
            net.W.push_back(b.matrix(spec.n, spec.n));
            net.act.push_back(LayerActivation(b.descriptor()));
        }
        net.P = b.matrix(spec.q, net.residual == Residual::Skip ? 2 * spec.n : spec.n);
        net.validate();
        return net;
    }
    if (arch == "deepcnn" || arch == "deeprescnn") {
        ContinuumNetParams net;
        net.residual = arch == "deeprescnn";
        net.lift = b.rep(Domain::Unit, 0.0, 1, spec.p);
        for (std::size_t i = 0; i < spec.ell; ++i) {
            net.kernels.push_back(b.rep(Domain::UnitSquare, 0.0, 1, 1));
            net.activations.push_back(b.layer_field());
        }
        net.proj = b.rep(Domain::Unit, 0.0, spec.q, net.residual ? 2 : 1);
        net.validate();
        return net;
    }
    if (arch == "neuralode" || arch == "neuralresode") {
        OdeNetParams ode;
        ode.residual = arch == "neuralresode";
        ode.T = spec.T;
        ode.L = b.matrix(spec.n, spec.p);
        ode.kernel = OdeKernel::from_function(b.rep(Domain::Time, spec.T, spec.n, spec.n));
        ode.activation.push_back(b.ode_field(spec.T));
        ode.P = b.matrix(spec.q, ode.residual ? 2 * spec.n : spec.n);
        ode.validate();
        return ode;
    }
    if (arch == "dipanet" || arch == "diparesnet") {
        DipanetParams net;
        net.residual = arch == "diparesnet";
        net.T = spec.T;
        net.lift = b.rep(Domain::Unit, 0.0, 1, spec.p);
        net.kernel = b.rep(Domain::UnitSquareTime, spec.T, 1, 1);
        net.activation = b.dipanet_field(spec.T);
        net.proj = b.rep(Domain::Unit, 0.0, spec.q, net.residual ? 2 : 1);
        net.validate();
        return net;
    }
    throw PreconditionError("random_params: unsupported architecture tag '" + arch + "'");
}

MatrixFamily builtin_family(const std::string& kind, std::size_t layers, std::size_t p,
                            std::size_t q, std::uint64_t seed, double amplitude,
                            ActKind activation) {
    SplitMix64 rng(seed);
    auto random_vec = [&rng, amplitude](std::size_t len) {
        Vec v(len);
        for (double& x : v) x = rng.uniform(-amplitude, amplitude);
        return v;
    };
    const auto l_base = std::make_shared<Vec>(random_vec(p));
    const auto p_base = std::make_shared<Vec>(random_vec(q));
    const auto w_base = std::make_shared<Vec>(random_vec(layers));
    const ActivationDescriptor desc{activation, 1.0};

    if (kind == "geometric") {
        return make_consistent_family(
            layers, p, q,
            [l_base](std::size_t j) {
                Vec row = *l_base;
                for (double& v : row) v *= std::pow(0.5, static_cast<double>(j));
                return row;
            },
            [w_base](std::size_t layer, std::size_t j, std::size_t k) {
                return j == k ? (*w_base)[layer] * std::pow(0.5, static_cast<double>(j)) : 0.0;
            },
            [p_base](std::size_t j) {
                Vec col = *p_base;
                for (double& v : col) v *= std::pow(0.5, static_cast<double>(j));
                return col;
            },
            [desc](std::size_t, std::size_t) { return desc; });
    }
    if (kind == "constant") {
        return make_consistent_family(
            layers, p, q, [l_base](std::size_t) { return *l_base; },
            [w_base](std::size_t layer, std::size_t, std::size_t) { return (*w_base)[layer]; },
            [p_base](std::size_t) { return *p_base; },
            [desc](std::size_t, std::size_t) { return desc; });
    }
    if (kind == "zero") {
        return make_consistent_family(
            layers, p, q, [p2 = p](std::size_t) { return Vec(p2, 0.0); },
            [](std::size_t, std::size_t, std::size_t) { return 0.0; },
            [q2 = q](std::size_t) { return Vec(q2, 0.0); },
            [desc](std::size_t, std::size_t) { return desc; });
    }
    throw PreconditionError("builtin_family: unknown kind '" + kind + "'");
}

const OdeNetParams& as_ode(const ParamsVariant& v) {
    if (const auto* p = std::get_if<OdeNetParams>(&v)) return *p;
    throw StructuralError("expected NeuralODE parameters");
}
const DipanetParams& as_dipanet(const ParamsVariant& v) {
    if (const auto* p = std::get_if<DipanetParams>(&v)) return *p;
    throw StructuralError("expected DiPaNet parameters");
}
const ContinuumNetParams& as_continuum(const ParamsVariant& v) {
    if (const auto* p = std::get_if<ContinuumNetParams>(&v)) return *p;
    throw StructuralError("expected continuum net parameters");
}
const FiniteNetParams& as_finite(const ParamsVariant& v) {
    if (const auto* p = std::get_if<FiniteNetParams>(&v)) return *p;
    throw StructuralError("expected finite net parameters");
}

// ---------------------------------------------------------------------------
// Named test problems
// ---------------------------------------------------------------------------

OdeNetParams linear_scalar_ode() {
    OdeNetParams ode;
    ode.L = Matrix(1, 1, {1.0});
    ode.P = Matrix(1, 1, {1.0});
    ode.T = 1.0;
    ode.kernel = OdeKernel::constant(Matrix(1, 1, {1.0}));
    ode.activation.push_back(ActivationField(ActivationDescriptor{ActKind::Identity, 1.0}));
    return ode;
}

ContinuumNetParams lipschitz_kernel_cnn() {
    ContinuumNetParams net;
    const double two_pi = 2.0 * std::numbers::pi;
    {
        // lift(tau) = 0.4 + 0.3 sin(2 pi tau)
        AnalyticExpr e;
        e.arity = 1;
        e.constant = 0.4;
        Term t;
        t.coeff = 0.3;
        t.factors.push_back(Factor{FactorKind::Sin, 1, {two_pi}, 0.0, 0.0});
        e.terms.push_back(std::move(t));
        net.lift = FunctionRep::scalar_analytic(Domain::Unit, 0.0, std::move(e), 0.3 * two_pi);
    }
    {
        // kernel(tau, s) = sin(2 pi (tau + s))
        AnalyticExpr e;
        e.arity = 2;
        Term t;
        t.coeff = 1.0;
        t.factors.push_back(Factor{FactorKind::Sin, 1, {two_pi, two_pi}, 0.0, 0.0});
        e.terms.push_back(std::move(t));
        net.kernels.push_back(FunctionRep::scalar_analytic(Domain::UnitSquare, 0.0, std::move(e),
                                                           two_pi * std::numbers::sqrt2));
    }
    net.activations.push_back(ActivationField(ActivationDescriptor{ActKind::Tanh, 1.0}));
    {
        // proj(tau) = 0.8 - 0.5 tau
        AnalyticExpr e;
        e.arity = 1;
        e.constant = 0.8;
        Term t;
        t.coeff = -0.5;
        t.factors.push_back(Factor{FactorKind::Poly, 1, {1.0}, 0.0, 0.0});
        e.terms.push_back(std::move(t));
        net.proj = FunctionRep::scalar_analytic(Domain::Unit, 0.0, std::move(e), 0.5);
    }
    return net;
}

DipanetParams mean_field_dipanet() {
    DipanetParams net;
    net.T = 1.0;
    net.lift = FunctionRep::constant(Domain::Unit, 0.0, Matrix(1, 1, {1.0}));
    net.kernel = FunctionRep::constant(Domain::UnitSquareTime, net.T, Matrix(1, 1, {1.0}));
    net.activation = ActivationField(ActivationDescriptor{ActKind::Identity, 1.0});
    net.proj = FunctionRep::constant(Domain::Unit, 0.0, Matrix(1, 1, {1.0}));
    return net;
}

DipanetParams time_kernel_dipanet() {
    DipanetParams net;
    net.T = 1.0;
    net.lift = FunctionRep::constant(Domain::Unit, 0.0, Matrix(1, 1, {1.0}));
    {
        // (1 + t) * cos(2 pi tau s)
        AnalyticExpr e;
        e.arity = 3;
        Term t;
        t.coeff = 1.0;
        Factor spatial;
        spatial.kind = FactorKind::Cos;
        spatial.weights = {0.0, 0.0, 0.0};
        spatial.pair_weight = 2.0 * std::numbers::pi;
        t.factors.push_back(std::move(spatial));
        Factor time;
        time.kind = FactorKind::Poly;
        time.degree = 1;
        time.weights = {0.0, 0.0, 1.0};
        time.offset = 1.0;
        t.factors.push_back(std::move(time));
        e.terms.push_back(std::move(t));
        net.kernel = FunctionRep::scalar_analytic(Domain::UnitSquareTime, net.T, std::move(e));
    }
    net.activation = ActivationField(ActivationDescriptor{ActKind::Tanh, 1.0});
    net.proj = FunctionRep::constant(Domain::Unit, 0.0, Matrix(1, 1, {1.0}));
    return net;
}

} // namespace dipanet
