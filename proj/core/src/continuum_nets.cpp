#include "dipanet/continuum_nets.hpp"

#include <cmath>
#include <string>

#include "dipanet/threading.hpp"

namespace dipanet {

// ---------------------------------------------------------------------------
// OdeKernel
// ---------------------------------------------------------------------------

OdeKernel OdeKernel::constant(Matrix m) {
    if (m.rows() != m.cols() || m.rows() == 0) throw StructuralError("OdeKernel: matrix must be square");
    return OdeKernel(ConstantK{std::move(m)});
}

OdeKernel OdeKernel::from_function(FunctionRep rep) {
    if (rep.domain() != Domain::Time) throw StructuralError("OdeKernel: function kernel needs [0,T] domain");
    if (rep.rows() != rep.cols() || rep.rows() == 0)
        throw StructuralError("OdeKernel: function kernel must be square-valued");
    return OdeKernel(FunctionK{std::move(rep)});
}

OdeKernel OdeKernel::dipanet_slice(FunctionRep kernel3, std::size_t n) {
    if (kernel3.domain() != Domain::UnitSquareTime)
        throw StructuralError("OdeKernel: slice kernel needs [0,1)^2 x [0,T] domain");
    auto sampler = std::make_shared<const GridKernelSampler>(kernel3, GridSpec(n));
    return OdeKernel(DipanetK{std::move(kernel3), n, std::move(sampler)});
}

std::size_t OdeKernel::dim() const {
    if (const auto* c = std::get_if<ConstantK>(&form_)) return c->value.rows();
    if (const auto* f = std::get_if<FunctionK>(&form_)) return f->rep.rows();
    return std::get<DipanetK>(form_).n;
}

bool OdeKernel::time_dependent() const { return !std::holds_alternative<ConstantK>(form_); }

void OdeKernel::fill(double t, Matrix& out) const {
    const std::size_t n = dim();
    if (out.rows() != n || out.cols() != n) out = Matrix(n, n);
    if (const auto* c = std::get_if<ConstantK>(&form_)) {
        out = c->value;
        return;
    }
    if (const auto* f = std::get_if<FunctionK>(&form_)) {
        const double pt[1] = {t};
        f->rep.eval_into(pt, out.flat());
        return;
    }
    std::get<DipanetK>(form_).sampler->fill(t, out);
}

void OdeKernel::fill_row(std::size_t j, double t, std::span<double> out) const {
    if (const auto* c = std::get_if<ConstantK>(&form_)) {
        auto r = c->value.row(j);
        std::copy(r.begin(), r.end(), out.begin());
        return;
    }
    if (std::holds_alternative<FunctionK>(form_)) {
        // Matrix-valued function reps evaluate whole matrices; row access is
        // only needed on the distributed-parameter fast path.
        Matrix tmp;
        fill(t, tmp);
        auto r = tmp.row(j);
        std::copy(r.begin(), r.end(), out.begin());
        return;
    }
    std::get<DipanetK>(form_).sampler->fill_row(j, t, out);
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

void ContinuumNetParams::validate() const {
    if (lift.domain() != Domain::Unit || lift.rows() != 1)
        throw StructuralError("ContinuumNetParams: lift must map [0,1) to R^{1 x p}");
    if (kernels.empty()) throw StructuralError("ContinuumNetParams: need at least one layer");
    if (activations.size() != kernels.size())
        throw StructuralError("ContinuumNetParams: one activation field per layer required");
    for (const auto& k : kernels)
        if (k.domain() != Domain::UnitSquare || k.rows() != 1 || k.cols() != 1)
            throw StructuralError("ContinuumNetParams: kernels must be scalar on [0,1)^2");
    if (proj.domain() != Domain::Unit) throw StructuralError("ContinuumNetParams: proj must live on [0,1)");
    const std::size_t want = residual ? 2 : 1;
    if (proj.cols() != want)
        throw StructuralError("ContinuumNetParams: proj must have " + std::to_string(want) + " columns");
}

void OdeNetParams::validate() const {
    const std::size_t n = width();
    if (n == 0) throw StructuralError("OdeNetParams: empty lift");
    if (kernel.dim() != n) throw StructuralError("OdeNetParams: kernel dimension mismatch");
    if (activation.size() != 1 && activation.size() != n)
        throw StructuralError("OdeNetParams: activation must broadcast or match the width");
    const std::size_t want_cols = residual ? 2 * n : n;
    if (P.cols() != want_cols)
        throw StructuralError("OdeNetParams: P must have " + std::to_string(want_cols) + " columns");
    if (!(T > 0.0)) throw StructuralError("OdeNetParams: T must be positive");
    if (convention.kind == Convention::Kind::SumOfActivations && !(convention.dtau > 0.0))
        throw StructuralError("OdeNetParams: SumOfActivations needs dtau > 0");
}

void DipanetParams::validate() const {
    if (lift.domain() != Domain::Unit || lift.rows() != 1)
        throw StructuralError("DipanetParams: lift must map [0,1) to R^{1 x p}");
    if (kernel.domain() != Domain::UnitSquareTime || kernel.rows() != 1 || kernel.cols() != 1)
        throw StructuralError("DipanetParams: kernel must be scalar on [0,1)^2 x [0,T]");
    if (proj.domain() != Domain::Unit) throw StructuralError("DipanetParams: proj must live on [0,1)");
    const std::size_t want = residual ? 2 : 1;
    if (proj.cols() != want)
        throw StructuralError("DipanetParams: proj must have " + std::to_string(want) + " columns");
    if (!(T > 0.0)) throw StructuralError("DipanetParams: T must be positive");
    if (kernel.horizon() != T) throw StructuralError("DipanetParams: kernel horizon differs from T");
}

// ---------------------------------------------------------------------------
// DeepCNN / DeepResCNN evaluation (streamed method of cells)
// ---------------------------------------------------------------------------

namespace {

std::vector<Vec> project_output(const FunctionRep& proj, const GridSpec& grid, bool residual,
                                const std::vector<Vec>& z_final, const std::vector<Vec>& z_initial) {
    const std::size_t m = grid.n;
    const std::size_t q = proj.rows();
    std::vector<Vec> out;
    out.reserve(z_final.size());
    std::vector<Matrix> psamples;
    psamples.reserve(m);
    for (std::size_t j = 0; j < m; ++j) {
        const double tau = grid.node(j);
        psamples.push_back(proj.eval({&tau, 1}));
    }
    for (std::size_t b = 0; b < z_final.size(); ++b) {
        Vec acc(q, 0.0);
        for (std::size_t j = 0; j < m; ++j) {
            const Matrix& pm = psamples[j];
            if (residual) {
                for (std::size_t r = 0; r < q; ++r)
                    acc[r] += pm(r, 0) * z_final[b][j] + pm(r, 1) * z_initial[b][j];
            } else {
                for (std::size_t r = 0; r < q; ++r) acc[r] += pm(r, 0) * z_final[b][j];
            }
        }
        for (double& v : acc) v *= grid.delta();
        out.push_back(std::move(acc));
    }
    return out;
}

} // namespace

std::vector<Vec> eval_deepcnn_batch(const ContinuumNetParams& params, std::span<const Vec> xs,
                                    std::size_t m, const EvalOptions& opts) {
    params.validate();
    if (m == 0) throw PreconditionError("eval_deepcnn: m must be >= 1");
    if (xs.empty()) throw PreconditionError("eval_deepcnn: no inputs");
    for (const Vec& x : xs)
        if (x.size() != params.input_dim()) throw StructuralError("eval_deepcnn: input dimension mismatch");

    const GridSpec grid(m);
    const double dtau = grid.delta();
    const std::size_t B = xs.size();

    std::vector<Vec> z(B, Vec(m));
    {
        Vec lrow(params.input_dim());
        for (std::size_t j = 0; j < m; ++j) {
            const double tau = grid.node(j);
            params.lift.eval_into({&tau, 1}, lrow);
            for (std::size_t b = 0; b < B; ++b) z[b][j] = dot(lrow, xs[b]);
        }
    }
    std::vector<Vec> z0;
    if (params.residual) z0 = z;

    std::vector<Vec> next(B, Vec(m));
    for (std::size_t layer = 0; layer < params.depth(); ++layer) {
        const GridKernelSampler sampler(params.kernels[layer], grid);
        const ActivationField& field = params.activations[layer];
        std::vector<ResolvedAct> ract(m);
        for (std::size_t j = 0; j < m; ++j) ract[j] = field.resolve(grid.node(j), 0.0);

        parallel_for(m, opts.threads, [&](std::size_t begin, std::size_t end) {
            Vec wrow(m);
            for (std::size_t j = begin; j < end; ++j) {
                sampler.fill_row(j, 0.0, wrow);
                for (std::size_t b = 0; b < B; ++b) {
                    const double c = dtau * row_accumulate(ract[j], wrow, z[b]);
                    next[b][j] = params.residual ? z[b][j] + c : c;
                }
            }
        });
        std::swap(z, next);
        for (std::size_t b = 0; b < B; ++b)
            if (!all_finite(z[b]))
                throw DivergenceError("eval_deepcnn: non-finite hidden state after layer " +
                                          std::to_string(layer + 1),
                                      static_cast<long>(layer));
    }
    return project_output(params.proj, grid, params.residual, z, z0);
}

Vec eval_deepcnn(const ContinuumNetParams& params, const Vec& x, std::size_t m,
                 const EvalOptions& opts) {
    if (params.residual) throw PreconditionError("eval_deepcnn: params carry the residual flag");
    return eval_deepcnn_batch(params, {&x, 1}, m, opts).front();
}

Vec eval_deeprescnn(const ContinuumNetParams& params, const Vec& x, std::size_t m,
                    const EvalOptions& opts) {
    if (!params.residual) throw PreconditionError("eval_deeprescnn: params lack the residual flag");
    return eval_deepcnn_batch(params, {&x, 1}, m, opts).front();
}

Vec eval_pointwise_cnn(const FunctionRep& lift, const ActivationDescriptor& sigma,
                       const FunctionRep& proj, const Vec& x, std::size_t m) {
    if (m == 0) throw PreconditionError("eval_pointwise_cnn: m must be >= 1");
    if (lift.domain() != Domain::Unit || lift.rows() != 1 || lift.cols() != x.size())
        throw StructuralError("eval_pointwise_cnn: lift shape mismatch");
    if (proj.domain() != Domain::Unit || proj.cols() != 1)
        throw StructuralError("eval_pointwise_cnn: proj must be a column on [0,1)");
    const GridSpec grid(m);
    const std::size_t q = proj.rows();
    Vec acc(q, 0.0), lrow(x.size()), pcol(q);
    for (std::size_t j = 0; j < m; ++j) {
        const double tau = grid.node(j);
        lift.eval_into({&tau, 1}, lrow);
        proj.eval_into({&tau, 1}, pcol);
        const double s = sigma(dot(lrow, x));
        for (std::size_t r = 0; r < q; ++r) acc[r] += pcol[r] * s;
    }
    for (double& v : acc) v *= grid.delta();
    return acc;
}

// ---------------------------------------------------------------------------
// NeuralODE / DiPaNet evaluation
// ---------------------------------------------------------------------------

namespace {

// Batched right-hand side over concatenated state blocks; kernel rows are
// sampled once per (row, time) and shared across the batch.
class OdeRhs {
public:
    OdeRhs(const OdeNetParams& p, std::size_t batch, unsigned threads)
        : p_(p), n_(p.width()), batch_(batch), threads_(threads) {
        if (!p_.kernel.time_dependent() &&
            p_.convention.kind == Convention::Kind::Standard)
            p_.kernel.fill(0.0, wslice_);
    }

    void operator()(double t, std::span<const double> z, std::span<double> dz) {
        if (p_.convention.kind == Convention::Kind::Standard) {
            if (p_.kernel.time_dependent()) p_.kernel.fill(t, wslice_);
            const bool broadcast = p_.activation.size() == 1;
            ResolvedAct shared;
            if (broadcast) shared = p_.activation.front().resolve(0.0, t);
            Vec u(n_);
            for (std::size_t b = 0; b < batch_; ++b) {
                auto zb = z.subspan(b * n_, n_);
                matvec(wslice_, zb, u);
                auto db = dz.subspan(b * n_, n_);
                for (std::size_t j = 0; j < n_; ++j) {
                    const ResolvedAct& r = broadcast ? shared : acts_scratch(j, t);
                    db[j] = r(u[j]);
                }
            }
            return;
        }
        const double dtau = p_.convention.dtau;
        parallel_for(n_, threads_, [&](std::size_t begin, std::size_t end) {
            Vec wrow(n_);
            for (std::size_t j = begin; j < end; ++j) {
                const ResolvedAct r =
                    p_.activation.size() == 1 ? p_.activation.front().resolve(0.0, t)
                                              : p_.activation[j].resolve(0.0, t);
                p_.kernel.fill_row(j, t, wrow);
                for (std::size_t b = 0; b < batch_; ++b) {
                    auto zb = z.subspan(b * n_, n_);
                    dz[b * n_ + j] = dtau * row_accumulate(r, wrow, zb);
                }
            }
        });
    }

private:
    const ResolvedAct& acts_scratch(std::size_t j, double t) {
        scratch_ = p_.activation[j].resolve(0.0, t);
        return scratch_;
    }

    OdeNetParams p_;
    std::size_t n_, batch_;
    unsigned threads_;
    Matrix wslice_;
    ResolvedAct scratch_;
};

struct FinalState {
    Vec z;         // state at T
    Vec slope_sum; // sum of per-step slopes (unscaled)
};

template <class Rhs>
FinalState integrate_final(Rhs& rhs, Vec z0, double T, Solver solver) {
    if (solver.resolution == 0) throw PreconditionError("solver resolution must be >= 1");
    const TimeGrid grid(solver.resolution, T);
    const double h = grid.step();
    const std::size_t dim = z0.size();
    FinalState st{std::move(z0), Vec(dim, 0.0)};
    Vec slope(dim);
    if (solver.method == Solver::Method::Euler) {
        for (std::size_t i = 0; i < grid.ell; ++i) {
            rhs(grid.node(i), st.z, slope);
            for (std::size_t j = 0; j < dim; ++j) {
                st.z[j] += h * slope[j];
                st.slope_sum[j] += slope[j];
            }
            if (!all_finite(st.z))
                throw DivergenceError("euler: non-finite state at step " + std::to_string(i),
                                      static_cast<long>(i));
        }
        return st;
    }
    Vec k1(dim), k2(dim), k3(dim), k4(dim), tmp(dim);
    for (std::size_t i = 0; i < grid.ell; ++i) {
        const double t = grid.node(i);
        rhs(t, st.z, k1);
        for (std::size_t j = 0; j < dim; ++j) tmp[j] = st.z[j] + 0.5 * h * k1[j];
        rhs(t + 0.5 * h, tmp, k2);
        for (std::size_t j = 0; j < dim; ++j) tmp[j] = st.z[j] + 0.5 * h * k2[j];
        rhs(t + 0.5 * h, tmp, k3);
        for (std::size_t j = 0; j < dim; ++j) tmp[j] = st.z[j] + h * k3[j];
        rhs(t + h, tmp, k4);
        for (std::size_t j = 0; j < dim; ++j) {
            slope[j] = (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]) / 6.0;
            st.z[j] += h * slope[j];
            st.slope_sum[j] += slope[j];
        }
        if (!all_finite(st.z))
            throw DivergenceError("rk4: non-finite state at step " + std::to_string(i),
                                  static_cast<long>(i));
    }
    return st;
}

Vec read_out(const OdeNetParams& p, std::span<const double> z_final, std::span<const double> z_init) {
    if (!p.residual) return matvec(p.P, z_final);
    Vec state(2 * p.width());
    std::copy(z_final.begin(), z_final.end(), state.begin());
    std::copy(z_init.begin(), z_init.end(), state.begin() + static_cast<std::ptrdiff_t>(p.width()));
    return matvec(p.P, state);
}

} // namespace

OdeOutputs eval_neuralode_batch(const OdeNetParams& params, std::span<const Vec> xs, Solver solver,
                                const EvalOptions& opts) {
    params.validate();
    if (xs.empty()) throw PreconditionError("eval_neuralode: no inputs");
    for (const Vec& x : xs)
        if (x.size() != params.input_dim())
            throw StructuralError("eval_neuralode: input dimension mismatch");

    const std::size_t n = params.width();
    const std::size_t B = xs.size();
    Vec z0(B * n);
    for (std::size_t b = 0; b < B; ++b) matvec(params.L, xs[b], std::span<double>(z0).subspan(b * n, n));

    OdeRhs rhs(params, B, opts.threads);
    FinalState st = integrate_final(rhs, z0, params.T, solver);

    const double h = params.T / static_cast<double>(solver.resolution);
    OdeOutputs out;
    out.y.reserve(B);
    out.y_integral_form.reserve(B);
    Vec recon(n);
    for (std::size_t b = 0; b < B; ++b) {
        auto zb = std::span<const double>(st.z).subspan(b * n, n);
        auto z0b = std::span<const double>(z0).subspan(b * n, n);
        out.y.push_back(read_out(params, zb, z0b));
        for (std::size_t j = 0; j < n; ++j) recon[j] = z0b[j] + h * st.slope_sum[b * n + j];
        out.y_integral_form.push_back(read_out(params, recon, z0b));
    }
    return out;
}

Vec eval_neuralode(const OdeNetParams& params, const Vec& x, Solver solver, const EvalOptions& opts) {
    return eval_neuralode_batch(params, {&x, 1}, solver, opts).y.front();
}

OdeNetParams dipanet_method_of_lines(const DipanetParams& params, std::size_t m) {
    params.validate();
    if (m == 0) throw PreconditionError("dipanet discretization: m must be >= 1");
    const GridSpec grid(m);
    const double dtau = grid.delta();

    OdeNetParams ode;
    ode.T = params.T;
    ode.residual = params.residual;
    ode.convention = Convention::sum_of_activations(dtau);
    ode.kernel = OdeKernel::dipanet_slice(params.kernel, m);

    const std::size_t p = params.input_dim();
    const std::size_t q = params.output_dim();
    ode.L = Matrix(m, p);
    ode.P = Matrix(q, params.residual ? 2 * m : m);
    Vec lrow(p);
    for (std::size_t j = 0; j < m; ++j) {
        const double tau = grid.node(j);
        params.lift.eval_into({&tau, 1}, lrow);
        for (std::size_t c = 0; c < p; ++c) ode.L(j, c) = lrow[c];
        const Matrix pm = params.proj.eval({&tau, 1});
        for (std::size_t r = 0; r < q; ++r) {
            ode.P(r, j) = pm(r, 0) * dtau;
            if (params.residual) ode.P(r, m + j) = pm(r, 1) * dtau;
        }
    }

    ode.activation.reserve(m);
    for (std::size_t j = 0; j < m; ++j)
        ode.activation.push_back(ActivationField::pin_tau(params.activation, grid.node(j)));
    return ode;
}

OdeOutputs eval_dipanet_batch(const DipanetParams& params, std::span<const Vec> xs, std::size_t m,
                              Solver solver, const EvalOptions& opts) {
    if (m == 0 || solver.resolution == 0)
        throw PreconditionError("eval_dipanet: m and solver resolution must be >= 1");
    const std::uint64_t work = static_cast<std::uint64_t>(m) * solver.resolution;
    if (work > opts.work_budget)
        throw ResourceBudgetError("eval_dipanet: m * resolution = " + std::to_string(work) +
                                  " exceeds the work budget " + std::to_string(opts.work_budget));
    return eval_neuralode_batch(dipanet_method_of_lines(params, m), xs, solver, opts);
}

Vec eval_dipanet(const DipanetParams& params, const Vec& x, std::size_t m, Solver solver,
                 const EvalOptions& opts) {
    return eval_dipanet_batch(params, {&x, 1}, m, solver, opts).y.front();
}

} // namespace dipanet
