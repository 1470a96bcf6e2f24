#pragma once
#include <array>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "dipanet/errors.hpp"
#include "dipanet/linalg.hpp"

namespace dipanet {

enum class ActKind { Zero, Identity, Relu, Tanh };

inline double apply_kind(ActKind k, double v) {
    switch (k) {
        case ActKind::Zero: return 0.0;
        case ActKind::Identity: return v;
        case ActKind::Relu: return v > 0.0 ? v : 0.0;
        case ActKind::Tanh: return std::tanh(v);
    }
    return 0.0;
}

// Scalar activation with an output scale: scale * kind(v). The scaled form
// covers the (T/ell)-weighted activations emitted by depth discretization.
struct ActivationDescriptor {
    ActKind kind = ActKind::Identity;
    double scale = 1.0;

    double operator()(double v) const { return scale * apply_kind(kind, v); }
    bool operator==(const ActivationDescriptor&) const = default;
};

inline ActivationDescriptor scaled(const ActivationDescriptor& d, double factor) {
    return {d.kind, factor * d.scale};
}

// A pointwise activation resolved to a flat sum of scaled kinds. A single
// descriptor resolves to one term; time-interpolated fields resolve to two;
// blends of blends stay within four.
struct ResolvedAct {
    static constexpr int kMaxTerms = 4;
    int count = 0;
    std::array<ActKind, kMaxTerms> kind{};
    std::array<double, kMaxTerms> scale{};

    void push(ActKind k, double s) {
        if (count == kMaxTerms) throw StructuralError("ResolvedAct: too many blended activation terms");
        kind[count] = k;
        scale[count] = s;
        ++count;
    }

    double operator()(double v) const {
        double acc = 0.0;
        for (int i = 0; i < count; ++i) acc += scale[i] * apply_kind(kind[i], v);
        return acc;
    }

    bool is_zero() const {
        for (int i = 0; i < count; ++i)
            if (kind[i] != ActKind::Zero && scale[i] != 0.0) return false;
        return true;
    }
};

inline ResolvedAct resolve(const ActivationDescriptor& d) {
    ResolvedAct r;
    r.push(d.kind, d.scale);
    return r;
}

// sum_k act(w[k] * z[k]) with a fixed left-to-right accumulation order. Every
// evaluator (finite nets, method of lines, streamed continuum layers) funnels
// its inner sum through here so results match bitwise across code paths.
inline double row_accumulate(const ResolvedAct& act, std::span<const double> w,
                             std::span<const double> z) {
    double acc = 0.0;
    if (act.count == 1) {
        const ActKind k = act.kind[0];
        const double s = act.scale[0];
        switch (k) {
            case ActKind::Zero:
                return 0.0;
            case ActKind::Identity:
                for (std::size_t i = 0; i < w.size(); ++i) acc += s * (w[i] * z[i]);
                return acc;
            case ActKind::Relu:
                for (std::size_t i = 0; i < w.size(); ++i) {
                    const double v = w[i] * z[i];
                    acc += s * (v > 0.0 ? v : 0.0);
                }
                return acc;
            case ActKind::Tanh:
                for (std::size_t i = 0; i < w.size(); ++i) acc += s * std::tanh(w[i] * z[i]);
                return acc;
        }
    }
    for (std::size_t i = 0; i < w.size(); ++i) acc += act(w[i] * z[i]);
    return acc;
}

const char* to_string(ActKind k);
ActKind act_kind_from_string(const std::string& s);

} // namespace dipanet
