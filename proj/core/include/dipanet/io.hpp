#pragma once
#include <string>

#include <json.hpp>

#include "dipanet/harness.hpp"

namespace dipanet {

using Json = nlohmann::json;

// Serialized artifacts print doubles with 17 significant digits so values
// round-trip exactly; object keys are emitted in sorted order.
std::string dump_json(const Json& j, int indent = 2);

// Strict-schema helper: throws StructuralError naming the offending key.
void reject_unknown_keys(const Json& obj, std::initializer_list<const char*> allowed,
                         const std::string& context);

Json to_json(const Matrix& m);
Matrix matrix_from_json(const Json& j);

Json to_json(const AnalyticExpr& e);
AnalyticExpr expr_from_json(const Json& j);

Json to_json(const FunctionRep& f);
FunctionRep funcrep_from_json(const Json& j);

Json to_json(const ResolvedAct& r);
ResolvedAct resolved_from_json(const Json& j);

Json to_json(const ActivationDescriptor& d);
ActivationDescriptor descriptor_from_json(const Json& j);

Json to_json(const ActivationField& f);
ActivationField field_from_json(const Json& j);

Json to_json(const FiniteNetParams& p);
FiniteNetParams finite_from_json(const Json& j);

Json to_json(const ContinuumNetParams& p);
ContinuumNetParams continuum_from_json(const Json& j);

Json to_json(const OdeKernel& k);
OdeKernel ode_kernel_from_json(const Json& j);

Json to_json(const OdeNetParams& p);
OdeNetParams ode_from_json(const Json& j);

Json to_json(const DipanetParams& p);
DipanetParams dipanet_from_json(const Json& j);

Json to_json(const Solver& s);
Solver solver_from_json(const Json& j);

// {"type": <architecture tag>, "params": {...}}
Json params_to_json(const ParamsVariant& v);
ParamsVariant params_from_json(const Json& j);
std::string architecture_tag(const ParamsVariant& v);

// Reports. Runtime columns are zeroed unless with_runtimes is set, keeping
// the default artifacts bitwise reproducible across runs and thread counts.
Json to_json(const SweepReport& r, bool with_runtimes = false);
std::string sweep_csv(const SweepReport& r, bool with_runtimes = false);
Json to_json(const TwoRouteReport& r, bool with_runtimes = false);
std::string two_route_csv(const TwoRouteReport& r, bool with_runtimes = false);

} // namespace dipanet
