#include "dipanet/funcrep.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "dipanet/rng.hpp"

namespace dipanet {

// ---------------------------------------------------------------------------
// Analytic expressions
// ---------------------------------------------------------------------------

double Factor::eval(std::span<const double> x) const {
    double u = offset;
    for (std::size_t c = 0; c < weights.size(); ++c) u += weights[c] * x[c];
    if (pair_weight != 0.0) u += pair_weight * x[0] * x[1];
    switch (kind) {
        case FactorKind::Poly: {
            double v = 1.0;
            for (int i = 0; i < degree; ++i) v *= u;
            return v;
        }
        case FactorKind::Sin: return std::sin(u);
        case FactorKind::Cos: return std::cos(u);
        case FactorKind::Exp: return std::exp(u);
        case FactorKind::Gauss: return std::exp(-u * u);
    }
    return 0.0;
}

double Term::eval(std::span<const double> x) const {
    double v = coeff;
    for (const Factor& f : factors) v *= f.eval(x);
    return v;
}

double AnalyticExpr::eval(std::span<const double> x) const {
    double v = constant;
    for (const Term& t : terms) v += t.eval(x);
    return v;
}

AnalyticExpr AnalyticExpr::substitute(std::size_t coord, double value) const {
    AnalyticExpr out;
    out.arity = arity - 1;
    out.constant = constant;
    for (const Term& t : terms) {
        Term nt;
        nt.coeff = t.coeff;
        bool term_constant = true;
        for (const Factor& f : t.factors) {
            Factor nf;
            nf.kind = f.kind;
            nf.degree = f.degree;
            nf.offset = f.offset;
            if (coord < f.weights.size()) nf.offset += f.weights[coord] * value;
            for (std::size_t c = 0; c < f.weights.size(); ++c) {
                if (c == coord) continue;
                nf.weights.push_back(f.weights[c]);
            }
            if (f.pair_weight != 0.0) {
                if (coord < 2) {
                    // pinning one square coordinate turns the product linear
                    nf.weights[0] += f.pair_weight * value;
                } else {
                    nf.pair_weight = f.pair_weight;
                }
            }
            bool still_varies = nf.pair_weight != 0.0;
            for (double w : nf.weights) still_varies = still_varies || (w != 0.0);
            if (still_varies) {
                term_constant = false;
                nt.factors.push_back(std::move(nf));
            } else {
                nt.coeff *= nf.eval({}); // fold the now-constant factor
            }
        }
        if (term_constant)
            out.constant += nt.coeff;
        else
            out.terms.push_back(std::move(nt));
    }
    return out;
}

AnalyticExpr AnalyticExpr::constant_fn(std::size_t arity, double c) {
    AnalyticExpr e;
    e.arity = arity;
    e.constant = c;
    return e;
}

namespace {

struct FactorBounds {
    double value_bound; // sup |f(u)|
    double slope_bound; // sup |f'(u)|
};

FactorBounds factor_bounds(const Factor& f, std::span<const std::pair<double, double>> ranges) {
    double umin = f.offset, umax = f.offset;
    for (std::size_t c = 0; c < f.weights.size(); ++c) {
        const double w = f.weights[c];
        const double a = w * ranges[c].first, b = w * ranges[c].second;
        umin += std::min(a, b);
        umax += std::max(a, b);
    }
    if (f.pair_weight != 0.0 && ranges.size() >= 2) {
        double lo = std::numeric_limits<double>::infinity();
        double hi = -std::numeric_limits<double>::infinity();
        for (double a : {ranges[0].first, ranges[0].second})
            for (double b : {ranges[1].first, ranges[1].second}) {
                const double v = f.pair_weight * a * b;
                lo = std::min(lo, v);
                hi = std::max(hi, v);
            }
        umin += lo;
        umax += hi;
    }
    const double uabs = std::max(std::abs(umin), std::abs(umax));
    switch (f.kind) {
        case FactorKind::Poly: {
            if (f.degree == 0) return {1.0, 0.0};
            double vb = 1.0, sb = static_cast<double>(f.degree);
            for (int i = 0; i < f.degree; ++i) vb *= uabs;
            for (int i = 0; i < f.degree - 1; ++i) sb *= uabs;
            return {vb, sb};
        }
        case FactorKind::Sin:
        case FactorKind::Cos:
            return {1.0, 1.0};
        case FactorKind::Exp:
            return {std::exp(umax), std::exp(umax)};
        case FactorKind::Gauss: {
            double vb = 1.0;
            if (umin > 0.0 || umax < 0.0) {
                const double m = std::min(std::abs(umin), std::abs(umax));
                vb = std::exp(-m * m);
            }
            return {vb, std::sqrt(2.0) * std::exp(-0.5)}; // global max of |2u e^{-u^2}|
        }
    }
    return {0.0, 0.0};
}

} // namespace

double lipschitz_bound(const AnalyticExpr& e, std::span<const std::pair<double, double>> ranges) {
    std::vector<double> grad(e.arity, 0.0);
    for (const Term& t : e.terms) {
        std::vector<FactorBounds> fb;
        fb.reserve(t.factors.size());
        for (const Factor& f : t.factors) fb.push_back(factor_bounds(f, ranges));
        for (std::size_t i = 0; i < t.factors.size(); ++i) {
            double others = std::abs(t.coeff);
            for (std::size_t g = 0; g < t.factors.size(); ++g)
                if (g != i) others *= fb[g].value_bound;
            const Factor& f = t.factors[i];
            for (std::size_t c = 0; c < f.weights.size() && c < e.arity; ++c) {
                double du = std::abs(f.weights[c]);
                if (f.pair_weight != 0.0 && c < 2 && ranges.size() >= 2) {
                    const auto& other = ranges[1 - c];
                    du += std::abs(f.pair_weight) *
                          std::max(std::abs(other.first), std::abs(other.second));
                }
                grad[c] += others * fb[i].slope_bound * du;
            }
        }
    }
    return norm2(grad);
}

// ---------------------------------------------------------------------------
// FunctionRep
// ---------------------------------------------------------------------------

std::size_t domain_dims(Domain d) {
    switch (d) {
        case Domain::Unit:
        case Domain::Time: return 1;
        case Domain::UnitSquare: return 2;
        case Domain::UnitSquareTime: return 3;
    }
    return 0;
}

FunctionRep::FunctionRep(Domain d, double T, std::size_t rows, std::size_t cols, Form form,
                         std::optional<double> lipschitz)
    : domain_(d), horizon_(T), rows_(rows), cols_(cols),
      form_(std::make_shared<const Form>(std::move(form))), lipschitz_(lipschitz) {
    const bool has_time = d == Domain::Time || d == Domain::UnitSquareTime;
    if (has_time && !(horizon_ > 0.0)) throw StructuralError("FunctionRep: time domain requires T > 0");
    if (rows_ == 0 || cols_ == 0) throw StructuralError("FunctionRep: empty codomain shape");

    if (const auto* a = std::get_if<Analytic>(&*form_)) {
        if (a->entries.size() != rows_ * cols_)
            throw StructuralError("FunctionRep: analytic entry count mismatch");
        for (const auto& e : a->entries)
            if (e.arity != domain_dims(d)) throw StructuralError("FunctionRep: analytic arity mismatch");
    } else if (const auto* pc = std::get_if<PiecewiseConstant>(&*form_)) {
        if (d == Domain::UnitSquareTime)
            throw StructuralError("FunctionRep: piecewise-constant form unsupported on [0,1)^2 x [0,T]");
        if (pc->n == 0) throw StructuralError("FunctionRep: piecewise-constant grid empty");
        const std::size_t want = d == Domain::UnitSquare ? pc->n * pc->n : pc->n;
        if (pc->values.size() != want) throw StructuralError("FunctionRep: piecewise-constant cell count mismatch");
        for (const auto& m : pc->values)
            if (m.rows() != rows_ || m.cols() != cols_)
                throw StructuralError("FunctionRep: piecewise-constant value shape mismatch");
    } else if (const auto* pl = std::get_if<PiecewiseLinear>(&*form_)) {
        if (d != Domain::Unit && d != Domain::Time)
            throw StructuralError("FunctionRep: piecewise-linear form needs a 1-D domain");
        if (pl->positions.empty() || pl->positions.size() != pl->values.size())
            throw StructuralError("FunctionRep: piecewise-linear node mismatch");
        for (std::size_t i = 1; i < pl->positions.size(); ++i)
            if (!(pl->positions[i] > pl->positions[i - 1]))
                throw StructuralError("FunctionRep: piecewise-linear positions must increase");
        for (const auto& m : pl->values)
            if (m.rows() != rows_ || m.cols() != cols_)
                throw StructuralError("FunctionRep: piecewise-linear value shape mismatch");
    } else if (const auto* ts = std::get_if<TimeStack>(&*form_)) {
        if (d != Domain::UnitSquareTime)
            throw StructuralError("FunctionRep: time-stack form needs [0,1)^2 x [0,T]");
        if (ts->positions.empty() || ts->positions.size() != ts->slices.size())
            throw StructuralError("FunctionRep: time-stack node mismatch");
        for (const auto& s : ts->slices)
            if (s.domain() != Domain::UnitSquare || s.rows() != rows_ || s.cols() != cols_)
                throw StructuralError("FunctionRep: time-stack slice shape mismatch");
    } else if (const auto* hl = std::get_if<HomogenizedLine>(&*form_)) {
        if (d != Domain::Unit) throw StructuralError("FunctionRep: homogenized line needs [0,1)");
        if (hl->levels.empty()) throw StructuralError("FunctionRep: homogenized line has no levels");
        if (!(hl->delta >= 0.0 && hl->delta < 0.5))
            throw StructuralError("FunctionRep: smoothing half-width must lie in [0, 0.5)");
        for (const auto& m : hl->levels)
            if (m.rows() != rows_ || m.cols() != cols_)
                throw StructuralError("FunctionRep: homogenized level shape mismatch");
    } else if (const auto* hk = std::get_if<HomogenizedKernel>(&*form_)) {
        if (d != Domain::UnitSquare || rows_ != 1 || cols_ != 1)
            throw StructuralError("FunctionRep: homogenized kernel must be scalar on [0,1)^2");
        if (hk->levels.empty()) throw StructuralError("FunctionRep: homogenized kernel has no levels");
        if (hk->levels.rows() != hk->levels.cols())
            throw StructuralError("FunctionRep: homogenized kernel level grid must be square");
        if (!(hk->delta >= 0.0 && hk->delta < 0.5))
            throw StructuralError("FunctionRep: smoothing half-width must lie in [0, 0.5)");
    }
}

FunctionRep FunctionRep::constant(Domain d, double T, const Matrix& value) {
    Analytic a;
    a.entries.reserve(value.rows() * value.cols());
    for (double v : value.flat()) a.entries.push_back(AnalyticExpr::constant_fn(domain_dims(d), v));
    return FunctionRep(d, T, value.rows(), value.cols(), std::move(a), 0.0);
}

FunctionRep FunctionRep::scalar_analytic(Domain d, double T, AnalyticExpr expr,
                                         std::optional<double> lipschitz) {
    Analytic a;
    a.entries.push_back(std::move(expr));
    return FunctionRep(d, T, 1, 1, std::move(a), lipschitz);
}

void FunctionRep::check_point(std::span<const double> point) const {
    if (point.size() != domain_dims(domain_)) throw DomainError("FunctionRep: wrong point dimension");
    auto unit = [](double v) { return v >= 0.0 && v < 1.0; };
    switch (domain_) {
        case Domain::Unit:
            if (!unit(point[0])) throw DomainError("FunctionRep: tau outside [0,1)");
            break;
        case Domain::Time:
            if (!(point[0] >= 0.0 && point[0] <= horizon_)) throw DomainError("FunctionRep: t outside [0,T]");
            break;
        case Domain::UnitSquare:
            if (!unit(point[0]) || !unit(point[1])) throw DomainError("FunctionRep: point outside [0,1)^2");
            break;
        case Domain::UnitSquareTime:
            if (!unit(point[0]) || !unit(point[1]) || !(point[2] >= 0.0 && point[2] <= horizon_))
                throw DomainError("FunctionRep: point outside [0,1)^2 x [0,T]");
            break;
    }
}

void FunctionRep::eval_into(std::span<const double> point, std::span<double> out) const {
    check_point(point);
    if (out.size() != rows_ * cols_) throw StructuralError("FunctionRep: wrong output size");

    if (const auto* a = std::get_if<Analytic>(&*form_)) {
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = a->entries[i].eval(point);
        return;
    }
    if (const auto* pc = std::get_if<PiecewiseConstant>(&*form_)) {
        std::size_t idx = 0;
        if (domain_ == Domain::Unit) {
            idx = GridSpec(pc->n).cell(point[0]);
        } else if (domain_ == Domain::Time) {
            idx = TimeGrid(pc->n, horizon_).cell(point[0]);
        } else { // UnitSquare
            const GridSpec g(pc->n);
            idx = g.cell(point[0]) * pc->n + g.cell(point[1]);
        }
        const auto& m = pc->values[idx];
        std::copy(m.flat().begin(), m.flat().end(), out.begin());
        return;
    }
    if (const auto* pl = std::get_if<PiecewiseLinear>(&*form_)) {
        const auto& pos = pl->positions;
        const double x = point[0];
        if (x <= pos.front()) {
            std::copy(pl->values.front().flat().begin(), pl->values.front().flat().end(), out.begin());
            return;
        }
        if (x >= pos.back()) {
            std::copy(pl->values.back().flat().begin(), pl->values.back().flat().end(), out.begin());
            return;
        }
        auto it = std::upper_bound(pos.begin(), pos.end(), x);
        const std::size_t k = static_cast<std::size_t>(it - pos.begin());
        const double w = (x - pos[k - 1]) / (pos[k] - pos[k - 1]);
        auto a0 = pl->values[k - 1].flat();
        auto b0 = pl->values[k].flat();
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = a0[i] + w * (b0[i] - a0[i]);
        return;
    }
    if (const auto* hl = std::get_if<HomogenizedLine>(&*form_)) {
        const double theta = smoothing_coordinate(tan_warp(point[0]), hl->delta, hl->levels.size());
        const auto lo = static_cast<std::size_t>(theta);
        const double w = theta - static_cast<double>(lo);
        auto a = hl->levels[lo].flat();
        if (w == 0.0 || lo + 1 == hl->levels.size()) {
            std::copy(a.begin(), a.end(), out.begin());
        } else {
            auto b = hl->levels[lo + 1].flat();
            for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + w * (b[i] - a[i]);
        }
        if (hl->jacobian) {
            const double jw = tan_warp_jacobian(point[0]);
            for (double& v : out) v *= jw;
        }
        return;
    }
    if (const auto* hk = std::get_if<HomogenizedKernel>(&*form_)) {
        const std::size_t count = hk->levels.rows();
        const double th_tau = smoothing_coordinate(tan_warp(point[0]), hk->delta, count);
        const double th_s = smoothing_coordinate(tan_warp(point[1]), hk->delta, count);
        const auto j0 = static_cast<std::size_t>(th_tau);
        const auto k0 = static_cast<std::size_t>(th_s);
        const double wj = th_tau - static_cast<double>(j0);
        const double wk = th_s - static_cast<double>(k0);
        const std::size_t j1 = std::min(j0 + 1, count - 1);
        const std::size_t k1 = std::min(k0 + 1, count - 1);
        const double v0 = hk->levels(j0, k0) + wk * (hk->levels(j0, k1) - hk->levels(j0, k0));
        const double v1 = hk->levels(j1, k0) + wk * (hk->levels(j1, k1) - hk->levels(j1, k0));
        double v = v0 + wj * (v1 - v0);
        if (hk->jacobian_s) v *= tan_warp_jacobian(point[1]);
        out[0] = v;
        return;
    }
    const auto& ts = std::get<TimeStack>(*form_);
    const double t = point[2];
    const double pt2[2] = {point[0], point[1]};
    const auto& pos = ts.positions;
    if (t <= pos.front() || pos.size() == 1) {
        ts.slices.front().eval_into(pt2, out);
        return;
    }
    if (t >= pos.back()) {
        ts.slices.back().eval_into(pt2, out);
        return;
    }
    auto it = std::upper_bound(pos.begin(), pos.end(), t);
    const std::size_t k = static_cast<std::size_t>(it - pos.begin());
    const double w = (t - pos[k - 1]) / (pos[k] - pos[k - 1]);
    Vec a(out.size()), b(out.size());
    ts.slices[k - 1].eval_into(pt2, a);
    ts.slices[k].eval_into(pt2, b);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + w * (b[i] - a[i]);
}

Matrix FunctionRep::eval(std::span<const double> point) const {
    Matrix m(rows_, cols_);
    eval_into(point, m.flat());
    return m;
}

double FunctionRep::eval_scalar(std::span<const double> point) const {
    if (rows_ != 1 || cols_ != 1) throw StructuralError("FunctionRep: eval_scalar on non-scalar shape");
    double v;
    eval_into(point, {&v, 1});
    return v;
}

FunctionRep FunctionRep::time_slice(double t) const {
    if (domain_ != Domain::UnitSquareTime)
        throw StructuralError("FunctionRep: time_slice needs [0,1)^2 x [0,T]");
    if (!(t >= 0.0 && t <= horizon_)) throw DomainError("FunctionRep: slice time outside [0,T]");

    if (const auto* a = std::get_if<Analytic>(&*form_)) {
        Analytic out;
        out.entries.reserve(a->entries.size());
        for (const auto& e : a->entries) out.entries.push_back(e.substitute(2, t));
        return FunctionRep(Domain::UnitSquare, 0.0, rows_, cols_, std::move(out));
    }
    const auto& ts = std::get<TimeStack>(*form_);
    const auto& pos = ts.positions;
    if (t <= pos.front() || pos.size() == 1) return ts.slices.front();
    if (t >= pos.back()) return ts.slices.back();
    auto it = std::upper_bound(pos.begin(), pos.end(), t);
    const std::size_t k = static_cast<std::size_t>(it - pos.begin());
    const double w = (t - pos[k - 1]) / (pos[k] - pos[k - 1]);
    const FunctionRep& fa = ts.slices[k - 1];
    const FunctionRep& fb = ts.slices[k];
    // Blend two slices: analytic pairs combine exactly; aligned
    // piecewise-constant pairs blend cellwise.
    if (const auto* ea = std::get_if<Analytic>(&fa.form())) {
        const auto* eb = std::get_if<Analytic>(&fb.form());
        if (!eb) throw StructuralError("FunctionRep: time-stack slice forms differ");
        Analytic out;
        out.entries.reserve(ea->entries.size());
        for (std::size_t i = 0; i < ea->entries.size(); ++i) {
            AnalyticExpr e;
            e.arity = 2;
            e.constant = ea->entries[i].constant + w * (eb->entries[i].constant - ea->entries[i].constant);
            for (const Term& term : ea->entries[i].terms) {
                Term nt = term;
                nt.coeff *= (1.0 - w);
                e.terms.push_back(std::move(nt));
            }
            for (const Term& term : eb->entries[i].terms) {
                Term nt = term;
                nt.coeff *= w;
                e.terms.push_back(std::move(nt));
            }
            out.entries.push_back(std::move(e));
        }
        return FunctionRep(Domain::UnitSquare, 0.0, rows_, cols_, std::move(out));
    }
    const auto* pa = std::get_if<PiecewiseConstant>(&fa.form());
    const auto* pb = std::get_if<PiecewiseConstant>(&fb.form());
    if (!pa || !pb || pa->n != pb->n)
        throw StructuralError("FunctionRep: time-stack slices not blendable");
    PiecewiseConstant out;
    out.n = pa->n;
    out.values.reserve(pa->values.size());
    for (std::size_t c = 0; c < pa->values.size(); ++c) {
        Matrix m(rows_, cols_);
        auto af = pa->values[c].flat();
        auto bf = pb->values[c].flat();
        for (std::size_t i = 0; i < m.flat().size(); ++i) m.flat()[i] = af[i] + w * (bf[i] - af[i]);
        out.values.push_back(std::move(m));
    }
    return FunctionRep(Domain::UnitSquare, 0.0, rows_, cols_, std::move(out));
}

FunctionRep FunctionRep::extend_columns_zero(std::size_t extra_cols) const {
    const std::size_t nc = cols_ + extra_cols;
    if (const auto* a = std::get_if<Analytic>(&*form_)) {
        Analytic out;
        out.entries.reserve(rows_ * nc);
        for (std::size_t r = 0; r < rows_; ++r) {
            for (std::size_t c = 0; c < cols_; ++c) out.entries.push_back(a->entries[r * cols_ + c]);
            for (std::size_t c = 0; c < extra_cols; ++c)
                out.entries.push_back(AnalyticExpr::constant_fn(domain_dims(domain_), 0.0));
        }
        return FunctionRep(domain_, horizon_, rows_, nc, std::move(out), lipschitz_);
    }
    auto widen = [&](const Matrix& m) {
        Matrix out(rows_, nc);
        for (std::size_t r = 0; r < rows_; ++r)
            for (std::size_t c = 0; c < cols_; ++c) out(r, c) = m(r, c);
        return out;
    };
    if (const auto* pc = std::get_if<PiecewiseConstant>(&*form_)) {
        PiecewiseConstant out;
        out.n = pc->n;
        for (const auto& m : pc->values) out.values.push_back(widen(m));
        return FunctionRep(domain_, horizon_, rows_, nc, std::move(out), lipschitz_);
    }
    if (const auto* pl = std::get_if<PiecewiseLinear>(&*form_)) {
        PiecewiseLinear out;
        out.positions = pl->positions;
        for (const auto& m : pl->values) out.values.push_back(widen(m));
        return FunctionRep(domain_, horizon_, rows_, nc, std::move(out), lipschitz_);
    }
    if (const auto* hl = std::get_if<HomogenizedLine>(&*form_)) {
        HomogenizedLine out;
        out.delta = hl->delta;
        out.jacobian = hl->jacobian;
        for (const auto& m : hl->levels) out.levels.push_back(widen(m));
        return FunctionRep(domain_, horizon_, rows_, nc, std::move(out), lipschitz_);
    }
    if (std::holds_alternative<HomogenizedKernel>(*form_))
        throw StructuralError("FunctionRep: cannot widen a scalar homogenized kernel");
    const auto& ts = std::get<TimeStack>(*form_);
    TimeStack out;
    out.positions = ts.positions;
    for (const auto& s : ts.slices) out.slices.push_back(s.extend_columns_zero(extra_cols));
    return FunctionRep(domain_, horizon_, rows_, nc, std::move(out), lipschitz_);
}

// ---------------------------------------------------------------------------
// GridKernelSampler
// ---------------------------------------------------------------------------

GridKernelSampler::GridKernelSampler(FunctionRep kernel, GridSpec grid)
    : kernel_(std::move(kernel)), grid_(grid) {
    if (kernel_.rows() != 1 || kernel_.cols() != 1)
        throw StructuralError("GridKernelSampler: kernel must be scalar-valued");
    const Domain d = kernel_.domain();
    if (d != Domain::UnitSquare && d != Domain::UnitSquareTime)
        throw StructuralError("GridKernelSampler: kernel domain must be a square (x time)");
    time_dependent_ = d == Domain::UnitSquareTime;
    const std::size_t n = grid_.n;

    if (const auto* a = std::get_if<FunctionRep::Analytic>(&kernel_.form())) {
        const AnalyticExpr& e = a->entries.front();
        constant_ = e.constant;
        for (const Term& t : e.terms) {
            bool separable = true;
            std::vector<Factor> spatial, temporal;
            for (const Factor& f : t.factors) {
                const bool on_space = f.depends_on(0) || f.depends_on(1);
                const bool on_time = f.depends_on(2);
                if (on_space && on_time) separable = false;
                if (on_time)
                    temporal.push_back(f);
                else
                    spatial.push_back(f);
                if (!separable) break;
            }
            if (!separable) {
                direct_terms_.push_back(t);
                continue;
            }
            CachedTerm ct;
            ct.coeff = t.coeff;
            ct.time_part = std::move(temporal);
            ct.spatial = Matrix(n, n);
            for (std::size_t j = 0; j < n; ++j) {
                const double tau = grid_.node(j);
                auto row = ct.spatial.row(j);
                for (std::size_t k = 0; k < n; ++k) {
                    const double pt[3] = {tau, grid_.node(k), 0.0};
                    double v = 1.0;
                    for (const Factor& f : spatial) v *= f.eval(pt);
                    row[k] = v;
                }
            }
            cached_.push_back(std::move(ct));
        }
        return;
    }
    if (std::get_if<FunctionRep::PiecewiseConstant>(&kernel_.form())) {
        CachedTerm ct;
        ct.coeff = 1.0;
        ct.spatial = Matrix(n, n);
        for (std::size_t j = 0; j < n; ++j) {
            const double pt[2] = {grid_.node(j), 0.0};
            auto row = ct.spatial.row(j);
            for (std::size_t k = 0; k < n; ++k) {
                const double p2[2] = {pt[0], grid_.node(k)};
                row[k] = kernel_.eval_scalar(p2);
            }
        }
        cached_.push_back(std::move(ct));
        return;
    }
    if (const auto* ts = std::get_if<FunctionRep::TimeStack>(&kernel_.form())) {
        stack_positions_ = ts->positions;
        stack_slices_.reserve(ts->slices.size());
        for (const auto& s : ts->slices) {
            GridKernelSampler inner(s, grid_);
            Matrix m(n, n);
            inner.fill(0.0, m);
            stack_slices_.push_back(std::move(m));
        }
        return;
    }
    direct_eval_ = true; // homogenized kernels and other closed forms
}

void GridKernelSampler::fill_row(std::size_t j, double t, std::span<double> out) const {
    const std::size_t n = grid_.n;
    if (direct_eval_) {
        const double tau = grid_.node(j);
        for (std::size_t k = 0; k < n; ++k) {
            if (time_dependent_) {
                const double pt[3] = {tau, grid_.node(k), t};
                out[k] = kernel_.eval_scalar(pt);
            } else {
                const double pt[2] = {tau, grid_.node(k)};
                out[k] = kernel_.eval_scalar(pt);
            }
        }
        return;
    }
    if (!stack_slices_.empty()) {
        const auto& pos = stack_positions_;
        if (t <= pos.front() || pos.size() == 1) {
            auto r = stack_slices_.front().row(j);
            std::copy(r.begin(), r.end(), out.begin());
            return;
        }
        if (t >= pos.back()) {
            auto r = stack_slices_.back().row(j);
            std::copy(r.begin(), r.end(), out.begin());
            return;
        }
        auto it = std::upper_bound(pos.begin(), pos.end(), t);
        const std::size_t k = static_cast<std::size_t>(it - pos.begin());
        const double w = (t - pos[k - 1]) / (pos[k] - pos[k - 1]);
        auto ra = stack_slices_[k - 1].row(j);
        auto rb = stack_slices_[k].row(j);
        for (std::size_t i = 0; i < n; ++i) out[i] = ra[i] + w * (rb[i] - ra[i]);
        return;
    }
    for (std::size_t k = 0; k < n; ++k) out[k] = constant_;
    const double tp[1] = {t};
    for (const CachedTerm& ct : cached_) {
        double c = ct.coeff;
        for (const Factor& f : ct.time_part) c *= f.eval(tp);
        auto row = ct.spatial.row(j);
        for (std::size_t k = 0; k < n; ++k) out[k] += c * row[k];
    }
    if (!direct_terms_.empty()) {
        const double tau = grid_.node(j);
        for (std::size_t k = 0; k < n; ++k) {
            const double pt[3] = {tau, grid_.node(k), t};
            for (const Term& term : direct_terms_)
                out[k] += term.eval(std::span<const double>(pt, time_dependent_ ? 3 : 2));
        }
    }
}

void GridKernelSampler::fill(double t, Matrix& out) const {
    if (out.rows() != grid_.n || out.cols() != grid_.n) out = Matrix(grid_.n, grid_.n);
    for (std::size_t j = 0; j < grid_.n; ++j) fill_row(j, t, out.row(j));
}

// ---------------------------------------------------------------------------
// Families
// ---------------------------------------------------------------------------

Matrix projection(std::size_t n, std::size_t nprime) {
    if (n == 0 || n > nprime) throw PreconditionError("projection: need 0 < n <= n'");
    Matrix m(n, nprime);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

MatrixFamily::MatrixFamily(std::size_t layers, std::size_t p, std::size_t q,
                           std::function<FamilySlice(std::size_t)> generator)
    : layers_(layers), p_(p), q_(q), gen_(std::move(generator)) {
    if (layers_ == 0) throw PreconditionError("MatrixFamily: need at least one layer");
}

FamilySlice MatrixFamily::slice(std::size_t n) const {
    if (n == 0) throw PreconditionError("MatrixFamily: slice size must be positive");
    FamilySlice s = gen_(n);
    if (s.L.rows() != n || s.L.cols() != p_) throw StructuralError("MatrixFamily: L shape mismatch");
    if (s.P.rows() != q_ || s.P.cols() != n) throw StructuralError("MatrixFamily: P shape mismatch");
    if (s.W.size() != layers_ || s.act.size() != layers_)
        throw StructuralError("MatrixFamily: layer count mismatch");
    for (const auto& w : s.W)
        if (w.rows() != n || w.cols() != n) throw StructuralError("MatrixFamily: W shape mismatch");
    for (const auto& a : s.act)
        if (a.size() != n) throw StructuralError("MatrixFamily: activation component count mismatch");
    return s;
}

MatrixFamily make_consistent_family(
    std::size_t layers, std::size_t p, std::size_t q,
    std::function<Vec(std::size_t)> l_row,
    std::function<double(std::size_t, std::size_t, std::size_t)> w_entry,
    std::function<Vec(std::size_t)> p_col,
    std::function<ActivationDescriptor(std::size_t, std::size_t)> act) {
    auto gen = [=](std::size_t n) {
        FamilySlice s;
        s.L = Matrix(n, p);
        for (std::size_t j = 0; j < n; ++j) {
            Vec row = l_row(j);
            if (row.size() != p) throw StructuralError("consistent family: L row size mismatch");
            for (std::size_t c = 0; c < p; ++c) s.L(j, c) = row[c];
        }
        s.P = Matrix(q, n);
        for (std::size_t j = 0; j < n; ++j) {
            Vec col = p_col(j);
            if (col.size() != q) throw StructuralError("consistent family: P column size mismatch");
            for (std::size_t r = 0; r < q; ++r) s.P(r, j) = col[r];
        }
        s.W.reserve(layers);
        s.act.reserve(layers);
        for (std::size_t i = 0; i < layers; ++i) {
            Matrix w(n, n);
            for (std::size_t j = 0; j < n; ++j)
                for (std::size_t k = 0; k <= j; ++k) w(j, k) = w_entry(i, j, k);
            s.W.push_back(std::move(w));
            std::vector<ActivationDescriptor> descs;
            descs.reserve(n);
            for (std::size_t j = 0; j < n; ++j) descs.push_back(act(i, j));
            s.act.push_back(std::move(descs));
        }
        return s;
    };
    return MatrixFamily(layers, p, q, std::move(gen));
}

ConsistencyReport check_consistency(const MatrixFamily& family, std::span<const std::size_t> sizes,
                                    double tol) {
    if (sizes.empty()) throw PreconditionError("check_consistency: sizes must be nonempty");
    for (std::size_t i = 1; i < sizes.size(); ++i)
        if (!(sizes[i] > sizes[i - 1])) throw PreconditionError("check_consistency: sizes must ascend");

    std::vector<FamilySlice> slices;
    slices.reserve(sizes.size());
    for (std::size_t n : sizes) slices.push_back(family.slice(n));

    ConsistencyReport rep;
    auto note = [&](double residual, const std::string& label) {
        if (residual > rep.max_residual) rep.max_residual = residual;
        if (residual > tol && rep.pass) {
            rep.pass = false;
            rep.first_violation = label;
        }
    };

    for (std::size_t ia = 0; ia < sizes.size(); ++ia) {
        for (std::size_t ib = ia; ib < sizes.size(); ++ib) {
            const std::size_t a = sizes[ia], b = sizes[ib];
            const FamilySlice& sa = slices[ia];
            const FamilySlice& sb = slices[ib];
            const std::string pair = " (n=" + std::to_string(a) + ", n'=" + std::to_string(b) + ")";

            double r = 0.0; // L^a = top a rows of L^b
            for (std::size_t j = 0; j < a; ++j)
                for (std::size_t c = 0; c < sa.L.cols(); ++c) {
                    const double d = sa.L(j, c) - sb.L(j, c);
                    r += d * d;
                }
            note(std::sqrt(r), "L" + pair);

            r = 0.0; // P^a = first a columns of P^b
            for (std::size_t row = 0; row < sa.P.rows(); ++row)
                for (std::size_t c = 0; c < a; ++c) {
                    const double d = sa.P(row, c) - sb.P(row, c);
                    r += d * d;
                }
            note(std::sqrt(r), "P" + pair);

            for (std::size_t i = 0; i < family.layers(); ++i) {
                // W^a Pi = Pi W^b: top-left block agrees and top-right block
                // of W^b vanishes.
                r = 0.0;
                for (std::size_t j = 0; j < a; ++j) {
                    for (std::size_t k = 0; k < a; ++k) {
                        const double d = sa.W[i](j, k) - sb.W[i](j, k);
                        r += d * d;
                    }
                    for (std::size_t k = a; k < b; ++k) r += sb.W[i](j, k) * sb.W[i](j, k);
                }
                note(std::sqrt(r), "W[" + std::to_string(i) + "]" + pair);
            }

            SplitMix64 rng(0x5EEDC0DEULL);
            double sig = 0.0;
            for (int s = 0; s < 100; ++s) {
                Vec z(b);
                for (double& v : z) v = rng.uniform(-10.0, 10.0);
                for (std::size_t i = 0; i < family.layers(); ++i) {
                    double acc = 0.0;
                    for (std::size_t j = 0; j < a; ++j) {
                        const double d = sa.act[i][j](z[j]) - sb.act[i][j](z[j]);
                        acc += d * d;
                    }
                    sig = std::max(sig, std::sqrt(acc));
                }
            }
            note(sig, "sigma" + pair);
        }
    }
    return rep;
}

VariationReport sequence_variation(const MatrixFamily& family, std::size_t n_max, double cap) {
    if (n_max < 2) throw PreconditionError("sequence_variation: n_max must be >= 2");
    std::vector<FamilySlice> slices;
    slices.reserve(n_max);
    for (std::size_t n = 1; n <= n_max; ++n) slices.push_back(family.slice(n));
    auto sl = [&](std::size_t n) -> const FamilySlice& { return slices[n - 1]; };

    VariationReport rep;
    rep.cap = cap;
    rep.w_var.assign(family.layers(), 0.0);
    rep.sigma_var.assign(family.layers(), 0.0);

    for (std::size_t n = 1; n + 1 <= n_max; ++n) {
        // New last row of L and last column of P against their predecessors.
        rep.l_var += norm2_diff(sl(n + 1).L.row(n), sl(n).L.row(n - 1));
        double pc = 0.0;
        for (std::size_t r = 0; r < family.output_dim(); ++r) {
            const double d = sl(n + 1).P(r, n) - sl(n).P(r, n - 1);
            pc += d * d;
        }
        rep.p_var += std::sqrt(pc);
    }

    // W condition, taken literally per column index m (1-based); the reported
    // per-layer value is the max over m. The m = 1 inner-difference term
    // references an undefined column and is skipped.
    for (std::size_t i = 0; i < family.layers(); ++i) {
        double worst = 0.0;
        for (std::size_t m = 1; m < n_max; ++m) {
            double sum = 0.0;
            for (std::size_t n = std::max<std::size_t>(m, 1); n + 1 <= n_max; ++n) {
                sum += std::abs(sl(n + 1).W[i](n, m - 1) - sl(n).W[i](n - 1, m - 1));
                if (m >= 2) sum += std::abs(sl(n).W[i](n - 1, m - 1) - sl(n).W[i](n - 1, m - 2));
            }
            worst = std::max(worst, sum);
        }
        rep.w_var[i] = worst;
    }

    // Sampled sup of the activation increments over [-10,10]^(n+1).
    for (std::size_t i = 0; i < family.layers(); ++i) {
        double total = 0.0;
        for (std::size_t n = 1; n + 1 <= n_max; ++n) {
            SplitMix64 rng(0xAC71Full + n);
            double sup = 0.0;
            for (int s = 0; s < 1000; ++s) {
                double acc = 0.0;
                for (std::size_t j = 0; j < n; ++j) {
                    const double z = rng.uniform(-10.0, 10.0);
                    const double d = sl(n + 1).act[i][j](z) - sl(n).act[i][j](z);
                    acc += d * d;
                }
                rng.uniform(-10.0, 10.0); // component n+1 of the sample, projected away
                sup = std::max(sup, std::sqrt(acc));
            }
            total += sup;
        }
        rep.sigma_var[i] = total;
    }

    rep.diverged = rep.max_component() > cap;
    return rep;
}

double VariationReport::max_component() const {
    double m = std::max(l_var, p_var);
    for (double v : w_var) m = std::max(m, v);
    for (double v : sigma_var) m = std::max(m, v);
    return m;
}

FunctionRep interpolant_depth(std::span<const Matrix> values, double T) {
    if (values.empty()) throw PreconditionError("interpolant_depth: need at least one value");
    const std::size_t ell = values.size();
    FunctionRep::PiecewiseLinear pl;
    pl.positions.reserve(ell);
    pl.values.assign(values.begin(), values.end());
    TimeGrid grid(ell, T);
    for (std::size_t i = 0; i < ell; ++i) pl.positions.push_back(grid.node(i));
    return FunctionRep(Domain::Time, T, values.front().rows(), values.front().cols(), std::move(pl));
}

} // namespace dipanet
