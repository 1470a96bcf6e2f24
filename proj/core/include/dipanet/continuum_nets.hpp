#pragma once
#include <cstdint>
#include <memory>
#include <variant>
#include <vector>

#include "dipanet/activation_field.hpp"
#include "dipanet/finite_nets.hpp"
#include "dipanet/funcrep.hpp"
#include "dipanet/numerics.hpp"

namespace dipanet {

// Time-dependent n x n kernel W(t) for NeuralODE right-hand sides.
class OdeKernel {
public:
    struct ConstantK {
        Matrix value;
    };
    // Matrix-valued FunctionRep on [0,T] (analytic or piecewise-linear).
    struct FunctionK {
        FunctionRep rep;
    };
    // Width-discretized distributed-parameter kernel: row j at time t holds
    // W(tau_j, tau_k, t) over the grid. Sampled through a GridKernelSampler
    // so separable analytic terms cost one multiply-add per entry.
    struct DipanetK {
        FunctionRep kernel; // UnitSquareTime scalar
        std::size_t n = 0;
        std::shared_ptr<const GridKernelSampler> sampler;
    };
    using Form = std::variant<ConstantK, FunctionK, DipanetK>;

    OdeKernel() : form_(ConstantK{Matrix(1, 1)}) {}

    static OdeKernel constant(Matrix m);
    static OdeKernel from_function(FunctionRep rep);
    static OdeKernel dipanet_slice(FunctionRep kernel3, std::size_t n);

    std::size_t dim() const;
    bool time_dependent() const;
    void fill(double t, Matrix& out) const;
    void fill_row(std::size_t j, double t, std::span<double> out) const;

    const Form& form() const { return form_; }

private:
    explicit OdeKernel(Form f) : form_(std::move(f)) {}
    Form form_;
};

// ---------------------------------------------------------------------------
// Parameter types
// ---------------------------------------------------------------------------

struct ContinuumNetParams {
    FunctionRep lift;                          // [0,1) -> R^{1 x p}
    std::vector<FunctionRep> kernels;          // per layer, scalar on [0,1)^2
    std::vector<ActivationField> activations;  // per layer, (tau, v)
    FunctionRep proj;                          // [0,1) -> R^{q x 1} (q x 2 residual)
    bool residual = false;

    std::size_t depth() const { return kernels.size(); }
    std::size_t input_dim() const { return lift.cols(); }
    std::size_t output_dim() const { return proj.rows(); }
    void validate() const;
};

struct OdeNetParams {
    Matrix L;                                  // n x p
    OdeKernel kernel;                          // W(t)
    std::vector<ActivationField> activation;   // size 1 (broadcast) or n, (t, v)
    Matrix P;                                  // q x n (q x 2n residual)
    double T = 1.0;
    Convention convention = Convention::standard();
    bool residual = false;

    std::size_t width() const { return L.rows(); }
    std::size_t input_dim() const { return L.cols(); }
    std::size_t output_dim() const { return P.rows(); }
    void validate() const;
};

struct DipanetParams {
    FunctionRep lift;        // [0,1) -> R^{1 x p}
    FunctionRep kernel;      // scalar on [0,1)^2 x [0,T]
    ActivationField activation; // (tau, t, v)
    FunctionRep proj;        // [0,1) -> R^{q x 1} (q x 2 residual)
    double T = 1.0;
    bool residual = false;

    std::size_t input_dim() const { return lift.cols(); }
    std::size_t output_dim() const { return proj.rows(); }
    void validate() const;
};

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

struct Solver {
    enum class Method { Euler, Rk4 };
    Method method = Method::Euler;
    std::size_t resolution = 256;

    static Solver euler(std::size_t ell) { return {Method::Euler, ell}; }
    static Solver rk4(std::size_t steps) { return {Method::Rk4, steps}; }
};

struct EvalOptions {
    unsigned threads = 1;
    // Guard on m * solver resolution for distributed-parameter evaluations.
    std::uint64_t work_budget = 100'000'000ULL;
};

std::vector<Vec> eval_deepcnn_batch(const ContinuumNetParams& params, std::span<const Vec> xs,
                                    std::size_t m, const EvalOptions& opts = {});
Vec eval_deepcnn(const ContinuumNetParams& params, const Vec& x, std::size_t m,
                 const EvalOptions& opts = {});
Vec eval_deeprescnn(const ContinuumNetParams& params, const Vec& x, std::size_t m,
                    const EvalOptions& opts = {});

// Single-layer pointwise CNN: Y = integral of P(tau) * sigma(L(tau) X) dtau.
Vec eval_pointwise_cnn(const FunctionRep& lift, const ActivationDescriptor& sigma,
                       const FunctionRep& proj, const Vec& x, std::size_t m);

// Differential-form output plus the integral-form reconstruction from the
// stored right-hand-side samples (the two sides of the equivalence lemmas).
struct OdeOutputs {
    std::vector<Vec> y;
    std::vector<Vec> y_integral_form;
};

OdeOutputs eval_neuralode_batch(const OdeNetParams& params, std::span<const Vec> xs, Solver solver,
                                const EvalOptions& opts = {});
Vec eval_neuralode(const OdeNetParams& params, const Vec& x, Solver solver,
                   const EvalOptions& opts = {});

OdeOutputs eval_dipanet_batch(const DipanetParams& params, std::span<const Vec> xs, std::size_t m,
                              Solver solver, const EvalOptions& opts = {});
Vec eval_dipanet(const DipanetParams& params, const Vec& x, std::size_t m, Solver solver,
                 const EvalOptions& opts = {});

// Method-of-lines reduction of a DiPaNet onto the m-grid; eval_dipanet
// integrates exactly this system, and the width-discretization transform
// returns it unchanged, which is what makes the two bitwise identical.
OdeNetParams dipanet_method_of_lines(const DipanetParams& params, std::size_t m);

} // namespace dipanet
