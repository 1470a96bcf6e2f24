#pragma once
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "dipanet/activation.hpp"
#include "dipanet/linalg.hpp"
#include "dipanet/numerics.hpp"

namespace dipanet {

// ---------------------------------------------------------------------------
// Analytic expressions
// ---------------------------------------------------------------------------

enum class FactorKind { Poly, Sin, Cos, Exp, Gauss };

// A unary primitive applied to an affine-plus-bilinear function of the
// coordinates:
//   u = dot(weights, x) + pair_weight * x[0] * x[1] + offset
//   Poly: u^degree, Sin/Cos/Exp as named, Gauss: exp(-u^2).
struct Factor {
    FactorKind kind = FactorKind::Poly;
    int degree = 1; // Poly only
    std::vector<double> weights;
    double pair_weight = 0.0; // coefficient of x[0]*x[1] (kernels on squares)
    double offset = 0.0;

    double eval(std::span<const double> x) const;
    bool depends_on(std::size_t coord) const {
        if (pair_weight != 0.0 && coord < 2) return true;
        return coord < weights.size() && weights[coord] != 0.0;
    }
};

struct Term {
    double coeff = 1.0;
    std::vector<Factor> factors;

    double eval(std::span<const double> x) const;
};

// constant + sum of coefficient-weighted products of factors.
struct AnalyticExpr {
    std::size_t arity = 1;
    double constant = 0.0;
    std::vector<Term> terms;

    double eval(std::span<const double> x) const;
    // Partial evaluation: pin coordinate `coord`, reducing arity by one.
    AnalyticExpr substitute(std::size_t coord, double value) const;

    static AnalyticExpr constant_fn(std::size_t arity, double c);
};

// Upper bound on the Lipschitz constant of the expression over the given
// per-coordinate ranges (Euclidean norm in the domain).
double lipschitz_bound(const AnalyticExpr& e, std::span<const std::pair<double, double>> ranges);

// ---------------------------------------------------------------------------
// FunctionRep
// ---------------------------------------------------------------------------

enum class Domain { Unit, Time, UnitSquare, UnitSquareTime };

std::size_t domain_dims(Domain d);

// A matrix-valued function on one of the four spec domains, in analytic,
// piecewise-constant or piecewise-linear form. Values are immutable after
// construction.
class FunctionRep {
public:
    struct Analytic {
        std::vector<AnalyticExpr> entries; // rows*cols, row-major
    };
    struct PiecewiseConstant {
        std::size_t n = 0;          // grid cells per axis (Unit/UnitSquare) or steps (Time)
        std::vector<Matrix> values; // one per cell; square kernels are cell-(j,k) row-major
    };
    struct PiecewiseLinear {
        std::vector<double> positions; // strictly increasing node coordinates
        std::vector<Matrix> values;    // one per node; clamped outside
    };
    // Piecewise-linear-in-time stack of 2D slices, for kernels built by depth
    // homogenization. Constant on the final interval like the interpolants.
    struct TimeStack {
        std::vector<double> positions;
        std::vector<FunctionRep> slices; // UnitSquare reps of equal shape
    };
    // Width homogenization output on [0,1): stabilized family entries on the
    // integer cells of [0,infinity), window-smoothed with half-width delta
    // and pulled back through tan(pi*tau/2). Integrated factors carry the
    // warp Jacobian.
    struct HomogenizedLine {
        std::vector<Matrix> levels; // per integer cell
        double delta = 0.0;
        bool jacobian = false;
    };
    struct HomogenizedKernel {
        Matrix levels; // scalar value per (j,k) integer cell
        double delta = 0.0;
        bool jacobian_s = false; // Jacobian weight on the integrated s axis
    };
    using Form = std::variant<Analytic, PiecewiseConstant, PiecewiseLinear, TimeStack,
                              HomogenizedLine, HomogenizedKernel>;

    FunctionRep() = default;
    FunctionRep(Domain d, double T, std::size_t rows, std::size_t cols, Form form,
                std::optional<double> lipschitz = std::nullopt);

    static FunctionRep constant(Domain d, double T, const Matrix& value);
    static FunctionRep scalar_analytic(Domain d, double T, AnalyticExpr expr,
                                       std::optional<double> lipschitz = std::nullopt);

    Domain domain() const { return domain_; }
    double horizon() const { return horizon_; }
    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    const Form& form() const { return *form_; }
    std::optional<double> lipschitz() const { return lipschitz_; }

    void eval_into(std::span<const double> point, std::span<double> out) const;
    Matrix eval(std::span<const double> point) const;
    double eval_scalar(std::span<const double> point) const; // 1x1 shape only

    double eval_scalar1(double a) const { return eval_scalar(std::span<const double>(&a, 1)); }
    double eval_scalar2(double a, double b) const {
        const double pt[2] = {a, b};
        return eval_scalar(pt);
    }
    double eval_scalar3(double a, double b, double c) const {
        const double pt[3] = {a, b, c};
        return eval_scalar(pt);
    }

    // Time slice of a UnitSquareTime kernel as a UnitSquare rep.
    FunctionRep time_slice(double t) const;

    // [this, 0]: append zero columns on the right (residual read-out padding).
    FunctionRep extend_columns_zero(std::size_t extra_cols) const;

private:
    Domain domain_ = Domain::Unit;
    double horizon_ = 0.0; // T for domains containing time
    std::size_t rows_ = 1, cols_ = 1;
    std::shared_ptr<const Form> form_;
    std::optional<double> lipschitz_;

    void check_point(std::span<const double> point) const;
};

// Samples a scalar kernel on [0,1)^2 (optionally x [0,T]) over a fixed grid.
// Analysis performed once at construction:
//   - analytic terms that are separable from time are pre-sampled on the
//     (tau, s) grid into cached matrices, so a row at time t costs one
//     multiply-add per cached term;
//   - everything else falls back to direct pointwise evaluation.
class GridKernelSampler {
public:
    GridKernelSampler(FunctionRep kernel, GridSpec grid);

    std::size_t size() const { return grid_.n; }
    // out[k] = K(tau_j, tau_k [, t]), k = 0..n-1
    void fill_row(std::size_t j, double t, std::span<double> out) const;
    void fill(double t, Matrix& out) const;
    bool time_dependent() const { return time_dependent_; }

private:
    struct CachedTerm {
        Matrix spatial;                 // sampled spatial part on the grid
        std::vector<Factor> time_part;  // factors in t only (may be empty)
        double coeff = 1.0;
    };
    FunctionRep kernel_;
    GridSpec grid_;
    bool time_dependent_ = false;
    bool direct_eval_ = false;          // no cache; pointwise kernel evaluation
    double constant_ = 0.0;
    std::vector<CachedTerm> cached_;
    std::vector<Term> direct_terms_;    // analytic terms mixing t with tau/s
    std::vector<double> stack_positions_;
    std::vector<Matrix> stack_slices_;  // sampled TimeStack slices
};

// ---------------------------------------------------------------------------
// Consistent families of finite-net matrices
// ---------------------------------------------------------------------------

// Truncation projection [I_n 0] from R^{nprime} to R^n.
Matrix projection(std::size_t n, std::size_t nprime);

struct FamilySlice {
    Matrix L;                                             // n x p
    std::vector<Matrix> W;                                // ell entries, n x n
    Matrix P;                                             // q x n
    std::vector<std::vector<ActivationDescriptor>> act;   // per layer, per component
};

class MatrixFamily {
public:
    MatrixFamily(std::size_t layers, std::size_t p, std::size_t q,
                 std::function<FamilySlice(std::size_t)> generator);

    std::size_t layers() const { return layers_; }
    std::size_t input_dim() const { return p_; }
    std::size_t output_dim() const { return q_; }
    FamilySlice slice(std::size_t n) const; // validates shapes

private:
    std::size_t layers_, p_, q_;
    std::function<FamilySlice(std::size_t)> gen_;
};

// Family built from per-entry generators; consistent by construction (L grows
// by rows, W by bordered blocks with the forced zero upper-right coupling,
// P by columns, activations by components).
MatrixFamily make_consistent_family(
    std::size_t layers, std::size_t p, std::size_t q,
    std::function<Vec(std::size_t j)> l_row,
    std::function<double(std::size_t layer, std::size_t j, std::size_t k)> w_entry, // k <= j
    std::function<Vec(std::size_t j)> p_col,
    std::function<ActivationDescriptor(std::size_t layer, std::size_t j)> act);

struct ConsistencyReport {
    bool pass = true;
    std::string first_violation; // empty when pass
    double max_residual = 0.0;
};

// Verifies the four truncation relations for every ordered pair of sizes.
// The activation relation is checked on 100 seeded random vectors.
ConsistencyReport check_consistency(const MatrixFamily& family, std::span<const std::size_t> sizes,
                                    double tol = 1e-12);

struct VariationReport {
    double l_var = 0.0;
    std::vector<double> w_var;     // per layer; max over the column index m
    double p_var = 0.0;
    std::vector<double> sigma_var; // per layer; sampled sup over a box
    bool diverged = false;
    double cap = 1e6;

    double max_component() const;
};

// Partial sums of the bounded-variation conditions up to n_max. The sigma
// supremum is approximated by a seeded sampled maximum over [-10,10]^(n+1).
VariationReport sequence_variation(const MatrixFamily& family, std::size_t n_max, double cap = 1e6);

// Maps list element i (the layer-(i+1) value) to node i*T/ell, linear between
// nodes and constant on the final interval.
FunctionRep interpolant_depth(std::span<const Matrix> values, double T);

} // namespace dipanet
