#include "dipanet/io.hpp"

#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace dipanet {

// ---------------------------------------------------------------------------
// Deterministic dumping
// ---------------------------------------------------------------------------

namespace {

std::string format_double(double v) {
    if (!std::isfinite(v)) throw StructuralError("dump_json: non-finite number in artifact");
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

void dump_rec(const Json& j, std::string& out, int indent, int depth) {
    const std::string pad(static_cast<std::size_t>(indent * depth), ' ');
    const std::string pad_in(static_cast<std::size_t>(indent * (depth + 1)), ' ');
    switch (j.type()) {
        case Json::value_t::null: out += "null"; break;
        case Json::value_t::boolean: out += j.get<bool>() ? "true" : "false"; break;
        case Json::value_t::number_integer: out += std::to_string(j.get<std::int64_t>()); break;
        case Json::value_t::number_unsigned: out += std::to_string(j.get<std::uint64_t>()); break;
        case Json::value_t::number_float: out += format_double(j.get<double>()); break;
        case Json::value_t::string: out += Json(j.get<std::string>()).dump(); break;
        case Json::value_t::array: {
            if (j.empty()) {
                out += "[]";
                break;
            }
            out += "[\n";
            for (std::size_t i = 0; i < j.size(); ++i) {
                out += pad_in;
                dump_rec(j[i], out, indent, depth + 1);
                if (i + 1 < j.size()) out += ",";
                out += "\n";
            }
            out += pad + "]";
            break;
        }
        case Json::value_t::object: {
            if (j.empty()) {
                out += "{}";
                break;
            }
            out += "{\n";
            std::size_t i = 0;
            for (auto it = j.begin(); it != j.end(); ++it, ++i) {
                out += pad_in + Json(it.key()).dump() + ": ";
                dump_rec(it.value(), out, indent, depth + 1);
                if (i + 1 < j.size()) out += ",";
                out += "\n";
            }
            out += pad + "}";
            break;
        }
        default: throw StructuralError("dump_json: unsupported JSON value type");
    }
}

} // namespace

std::string dump_json(const Json& j, int indent) {
    std::string out;
    dump_rec(j, out, indent, 0);
    out += "\n";
    return out;
}

void reject_unknown_keys(const Json& obj, std::initializer_list<const char*> allowed,
                         const std::string& context) {
    if (!obj.is_object()) throw StructuralError(context + ": expected a JSON object");
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        bool ok = false;
        for (const char* k : allowed) ok = ok || it.key() == k;
        if (!ok) throw StructuralError(context + ": unknown key '" + it.key() + "'");
    }
}

namespace {

double get_number(const Json& j, const char* key, const std::string& context) {
    if (!j.contains(key)) throw StructuralError(context + ": missing '" + key + "'");
    if (!j[key].is_number()) throw StructuralError(context + ": '" + key + "' must be a number");
    return j[key].get<double>();
}

std::size_t get_size(const Json& j, const char* key, const std::string& context) {
    const double v = get_number(j, key, context);
    if (v < 0 || v != std::floor(v)) throw StructuralError(context + ": '" + key + "' must be a nonnegative integer");
    return static_cast<std::size_t>(v);
}

} // namespace

// ---------------------------------------------------------------------------
// Matrices and expressions
// ---------------------------------------------------------------------------

Json to_json(const Matrix& m) {
    Json rows = Json::array();
    for (std::size_t i = 0; i < m.rows(); ++i) {
        Json row = Json::array();
        for (std::size_t c = 0; c < m.cols(); ++c) row.push_back(m(i, c));
        rows.push_back(std::move(row));
    }
    return rows;
}

Matrix matrix_from_json(const Json& j) {
    if (!j.is_array() || j.empty() || !j[0].is_array())
        throw StructuralError("matrix: expected a nested array of rows");
    const std::size_t rows = j.size();
    const std::size_t cols = j[0].size();
    Matrix m(rows, cols);
    for (std::size_t i = 0; i < rows; ++i) {
        if (!j[i].is_array() || j[i].size() != cols) throw StructuralError("matrix: ragged rows");
        for (std::size_t c = 0; c < cols; ++c) {
            if (!j[i][c].is_number()) throw StructuralError("matrix: entries must be numbers");
            m(i, c) = j[i][c].get<double>();
        }
    }
    return m;
}

namespace {

const char* factor_kind_name(FactorKind k) {
    switch (k) {
        case FactorKind::Poly: return "poly";
        case FactorKind::Sin: return "sin";
        case FactorKind::Cos: return "cos";
        case FactorKind::Exp: return "exp";
        case FactorKind::Gauss: return "gauss";
    }
    return "poly";
}

FactorKind factor_kind_parse(const std::string& s) {
    if (s == "poly") return FactorKind::Poly;
    if (s == "sin") return FactorKind::Sin;
    if (s == "cos") return FactorKind::Cos;
    if (s == "exp") return FactorKind::Exp;
    if (s == "gauss") return FactorKind::Gauss;
    throw StructuralError("factor: unknown kind '" + s + "'");
}

Json factor_to_json(const Factor& f) {
    Json j;
    j["kind"] = factor_kind_name(f.kind);
    if (f.kind == FactorKind::Poly) j["degree"] = f.degree;
    j["weights"] = f.weights;
    if (f.pair_weight != 0.0) j["pair_weight"] = f.pair_weight;
    j["offset"] = f.offset;
    return j;
}

Factor factor_from_json(const Json& j) {
    reject_unknown_keys(j, {"kind", "degree", "weights", "pair_weight", "offset"}, "factor");
    Factor f;
    f.kind = factor_kind_parse(j.at("kind").get<std::string>());
    if (j.contains("degree")) f.degree = j["degree"].get<int>();
    if (f.degree < 0) throw StructuralError("factor: degree must be nonnegative");
    f.weights = j.at("weights").get<std::vector<double>>();
    if (j.contains("pair_weight")) f.pair_weight = j["pair_weight"].get<double>();
    if (j.contains("offset")) f.offset = j["offset"].get<double>();
    return f;
}

} // namespace

Json to_json(const AnalyticExpr& e) {
    Json j;
    j["arity"] = e.arity;
    j["constant"] = e.constant;
    Json terms = Json::array();
    for (const Term& t : e.terms) {
        Json jt;
        jt["coeff"] = t.coeff;
        Json fs = Json::array();
        for (const Factor& f : t.factors) fs.push_back(factor_to_json(f));
        jt["factors"] = std::move(fs);
        terms.push_back(std::move(jt));
    }
    j["terms"] = std::move(terms);
    return j;
}

AnalyticExpr expr_from_json(const Json& j) {
    reject_unknown_keys(j, {"arity", "constant", "terms"}, "analytic expression");
    AnalyticExpr e;
    e.arity = get_size(j, "arity", "analytic expression");
    if (j.contains("constant")) e.constant = j["constant"].get<double>();
    if (j.contains("terms")) {
        for (const Json& jt : j["terms"]) {
            reject_unknown_keys(jt, {"coeff", "factors"}, "term");
            Term t;
            t.coeff = jt.value("coeff", 1.0);
            if (jt.contains("factors"))
                for (const Json& jf : jt["factors"]) t.factors.push_back(factor_from_json(jf));
            for (const Factor& f : t.factors) {
                if (f.weights.size() != e.arity)
                    throw StructuralError("factor: weight count must equal the expression arity");
                if (f.pair_weight != 0.0 && e.arity < 2)
                    throw StructuralError("factor: pair_weight needs at least two coordinates");
            }
            e.terms.push_back(std::move(t));
        }
    }
    return e;
}

// ---------------------------------------------------------------------------
// FunctionRep
// ---------------------------------------------------------------------------

namespace {

const char* domain_name(Domain d) {
    switch (d) {
        case Domain::Unit: return "unit";
        case Domain::Time: return "time";
        case Domain::UnitSquare: return "unit_square";
        case Domain::UnitSquareTime: return "unit_square_time";
    }
    return "unit";
}

Domain domain_parse(const std::string& s) {
    if (s == "unit") return Domain::Unit;
    if (s == "time") return Domain::Time;
    if (s == "unit_square") return Domain::UnitSquare;
    if (s == "unit_square_time") return Domain::UnitSquareTime;
    throw StructuralError("function rep: unknown domain '" + s + "'");
}

} // namespace

Json to_json(const FunctionRep& f) {
    Json j;
    j["domain"] = domain_name(f.domain());
    if (f.domain() == Domain::Time || f.domain() == Domain::UnitSquareTime) j["T"] = f.horizon();
    j["shape"] = Json::array({f.rows(), f.cols()});
    if (f.lipschitz()) j["lipschitz"] = *f.lipschitz();

    Json payload;
    if (const auto* a = std::get_if<FunctionRep::Analytic>(&f.form())) {
        j["form"] = "analytic";
        Json entries = Json::array();
        for (const auto& e : a->entries) entries.push_back(to_json(e));
        payload["entries"] = std::move(entries);
    } else if (const auto* pc = std::get_if<FunctionRep::PiecewiseConstant>(&f.form())) {
        j["form"] = "piecewise_constant";
        payload["n"] = pc->n;
        Json values = Json::array();
        for (const auto& m : pc->values) values.push_back(to_json(m));
        payload["values"] = std::move(values);
    } else if (const auto* pl = std::get_if<FunctionRep::PiecewiseLinear>(&f.form())) {
        j["form"] = "piecewise_linear";
        payload["positions"] = pl->positions;
        Json values = Json::array();
        for (const auto& m : pl->values) values.push_back(to_json(m));
        payload["values"] = std::move(values);
    } else if (const auto* ts = std::get_if<FunctionRep::TimeStack>(&f.form())) {
        j["form"] = "time_stack";
        payload["positions"] = ts->positions;
        Json slices = Json::array();
        for (const auto& s : ts->slices) slices.push_back(to_json(s));
        payload["slices"] = std::move(slices);
    } else if (const auto* hl = std::get_if<FunctionRep::HomogenizedLine>(&f.form())) {
        j["form"] = "homogenized_line";
        payload["delta"] = hl->delta;
        payload["jacobian"] = hl->jacobian;
        Json levels = Json::array();
        for (const auto& m : hl->levels) levels.push_back(to_json(m));
        payload["levels"] = std::move(levels);
    } else {
        const auto& hk = std::get<FunctionRep::HomogenizedKernel>(f.form());
        j["form"] = "homogenized_kernel";
        payload["delta"] = hk.delta;
        payload["jacobian_s"] = hk.jacobian_s;
        payload["levels"] = to_json(hk.levels);
    }
    j["payload"] = std::move(payload);
    return j;
}

FunctionRep funcrep_from_json(const Json& j) {
    reject_unknown_keys(j, {"domain", "T", "shape", "form", "payload", "lipschitz"}, "function rep");
    const Domain d = domain_parse(j.at("domain").get<std::string>());
    const double T = j.value("T", 0.0);
    if (!j.contains("shape") || !j["shape"].is_array() || j["shape"].size() != 2)
        throw StructuralError("function rep: shape must be [rows, cols]");
    const std::size_t rows = j["shape"][0].get<std::size_t>();
    const std::size_t cols = j["shape"][1].get<std::size_t>();
    std::optional<double> lip;
    if (j.contains("lipschitz")) lip = j["lipschitz"].get<double>();
    const std::string form = j.at("form").get<std::string>();
    const Json& payload = j.at("payload");

    if (form == "analytic") {
        reject_unknown_keys(payload, {"entries"}, "analytic payload");
        FunctionRep::Analytic a;
        for (const Json& je : payload.at("entries")) a.entries.push_back(expr_from_json(je));
        return FunctionRep(d, T, rows, cols, std::move(a), lip);
    }
    if (form == "piecewise_constant") {
        reject_unknown_keys(payload, {"n", "values"}, "piecewise-constant payload");
        FunctionRep::PiecewiseConstant pc;
        pc.n = get_size(payload, "n", "piecewise-constant payload");
        for (const Json& jm : payload.at("values")) pc.values.push_back(matrix_from_json(jm));
        return FunctionRep(d, T, rows, cols, std::move(pc), lip);
    }
    if (form == "piecewise_linear") {
        reject_unknown_keys(payload, {"positions", "values"}, "piecewise-linear payload");
        FunctionRep::PiecewiseLinear pl;
        pl.positions = payload.at("positions").get<std::vector<double>>();
        for (const Json& jm : payload.at("values")) pl.values.push_back(matrix_from_json(jm));
        return FunctionRep(d, T, rows, cols, std::move(pl), lip);
    }
    if (form == "time_stack") {
        reject_unknown_keys(payload, {"positions", "slices"}, "time-stack payload");
        FunctionRep::TimeStack ts;
        ts.positions = payload.at("positions").get<std::vector<double>>();
        for (const Json& js : payload.at("slices")) ts.slices.push_back(funcrep_from_json(js));
        return FunctionRep(d, T, rows, cols, std::move(ts), lip);
    }
    if (form == "homogenized_line") {
        reject_unknown_keys(payload, {"levels", "delta", "jacobian"}, "homogenized-line payload");
        FunctionRep::HomogenizedLine hl;
        hl.delta = get_number(payload, "delta", "homogenized-line payload");
        hl.jacobian = payload.value("jacobian", false);
        for (const Json& jm : payload.at("levels")) hl.levels.push_back(matrix_from_json(jm));
        return FunctionRep(d, T, rows, cols, std::move(hl), lip);
    }
    if (form == "homogenized_kernel") {
        reject_unknown_keys(payload, {"levels", "delta", "jacobian_s"}, "homogenized-kernel payload");
        FunctionRep::HomogenizedKernel hk;
        hk.delta = get_number(payload, "delta", "homogenized-kernel payload");
        hk.jacobian_s = payload.value("jacobian_s", false);
        hk.levels = matrix_from_json(payload.at("levels"));
        return FunctionRep(d, T, rows, cols, std::move(hk), lip);
    }
    throw StructuralError("function rep: unknown form '" + form + "'");
}

// ---------------------------------------------------------------------------
// Activations
// ---------------------------------------------------------------------------

Json to_json(const ActivationDescriptor& d) {
    Json j;
    j["kind"] = to_string(d.kind);
    j["scale"] = d.scale;
    return j;
}

ActivationDescriptor descriptor_from_json(const Json& j) {
    reject_unknown_keys(j, {"kind", "scale"}, "activation descriptor");
    ActivationDescriptor d;
    d.kind = act_kind_from_string(j.at("kind").get<std::string>());
    d.scale = j.value("scale", 1.0);
    return d;
}

Json to_json(const ResolvedAct& r) {
    Json terms = Json::array();
    for (int i = 0; i < r.count; ++i) {
        Json t;
        t["kind"] = to_string(r.kind[i]);
        t["scale"] = r.scale[i];
        terms.push_back(std::move(t));
    }
    return terms;
}

ResolvedAct resolved_from_json(const Json& j) {
    if (!j.is_array()) throw StructuralError("resolved activation: expected an array of terms");
    ResolvedAct r;
    for (const Json& jt : j) {
        reject_unknown_keys(jt, {"kind", "scale"}, "activation term");
        r.push(act_kind_from_string(jt.at("kind").get<std::string>()), jt.value("scale", 1.0));
    }
    if (r.count == 0) r.push(ActKind::Zero, 0.0);
    return r;
}

Json to_json(const ActivationField& f) {
    Json j;
    if (const auto* d = std::get_if<ActivationField::Desc>(&f.node())) {
        j["descriptor"] = to_json(d->d);
        return j;
    }
    if (const auto* m = std::get_if<ActivationField::Modulated>(&f.node())) {
        Json inner;
        inner["descriptor"] = to_json(m->d);
        if (m->gain_tau) inner["gain_tau"] = to_json(*m->gain_tau);
        if (m->gain_t) inner["gain_t"] = to_json(*m->gain_t);
        j["modulated"] = std::move(inner);
        return j;
    }
    if (const auto* tb = std::get_if<ActivationField::TimeBlend>(&f.node())) {
        Json inner;
        inner["T"] = tb->T;
        inner["outer"] = tb->outer;
        Json nodes = Json::array();
        for (const auto& n : tb->nodes) nodes.push_back(to_json(n));
        inner["nodes"] = std::move(nodes);
        j["time_blend"] = std::move(inner);
        return j;
    }
    if (const auto* tf = std::get_if<ActivationField::TimeBlendFields>(&f.node())) {
        Json inner;
        inner["T"] = tf->T;
        inner["outer"] = tf->outer;
        Json nodes = Json::array();
        for (const auto& n : tf->nodes) nodes.push_back(to_json(*n));
        inner["nodes"] = std::move(nodes);
        j["time_blend_fields"] = std::move(inner);
        return j;
    }
    if (const auto* pt = std::get_if<ActivationField::PinTau>(&f.node())) {
        Json inner;
        inner["inner"] = to_json(*pt->inner);
        inner["tau"] = pt->tau;
        j["pin_tau"] = std::move(inner);
        return j;
    }
    if (const auto* pn = std::get_if<ActivationField::PinTime>(&f.node())) {
        Json inner;
        inner["inner"] = to_json(*pn->inner);
        inner["t"] = pn->t;
        inner["outer"] = pn->outer;
        j["pin_time"] = std::move(inner);
        return j;
    }
    const auto& wb = std::get<ActivationField::WarpedBlend>(f.node());
    Json inner;
    inner["delta"] = wb.delta;
    Json descs = Json::array();
    for (const auto& d : wb.descs) descs.push_back(to_json(d));
    inner["descs"] = std::move(descs);
    j["warped_blend"] = std::move(inner);
    return j;
}

ActivationField field_from_json(const Json& j) {
    reject_unknown_keys(j,
                        {"descriptor", "modulated", "time_blend", "time_blend_fields", "pin_tau",
                         "pin_time", "warped_blend"},
                        "activation field");
    if (j.size() != 1) throw StructuralError("activation field: expected exactly one variant key");
    if (j.contains("descriptor")) return ActivationField(descriptor_from_json(j["descriptor"]));
    if (j.contains("modulated")) {
        const Json& m = j["modulated"];
        reject_unknown_keys(m, {"descriptor", "gain_tau", "gain_t"}, "modulated field");
        std::optional<FunctionRep> gtau, gt;
        if (m.contains("gain_tau")) gtau = funcrep_from_json(m["gain_tau"]);
        if (m.contains("gain_t")) gt = funcrep_from_json(m["gain_t"]);
        return ActivationField::modulated(descriptor_from_json(m.at("descriptor")), std::move(gtau),
                                          std::move(gt));
    }
    if (j.contains("time_blend")) {
        const Json& tb = j["time_blend"];
        reject_unknown_keys(tb, {"T", "outer", "nodes"}, "time-blend field");
        std::vector<ResolvedAct> nodes;
        for (const Json& n : tb.at("nodes")) nodes.push_back(resolved_from_json(n));
        return ActivationField::time_blend(get_number(tb, "T", "time-blend field"), std::move(nodes),
                                           tb.value("outer", 1.0));
    }
    if (j.contains("time_blend_fields")) {
        const Json& tb = j["time_blend_fields"];
        reject_unknown_keys(tb, {"T", "outer", "nodes"}, "time-blend-fields field");
        std::vector<ActivationField> nodes;
        for (const Json& n : tb.at("nodes")) nodes.push_back(field_from_json(n));
        return ActivationField::time_blend_fields(get_number(tb, "T", "time-blend-fields field"),
                                                  std::move(nodes), tb.value("outer", 1.0));
    }
    if (j.contains("pin_tau")) {
        const Json& p = j["pin_tau"];
        reject_unknown_keys(p, {"inner", "tau"}, "pinned-tau field");
        return ActivationField::pin_tau(field_from_json(p.at("inner")),
                                        get_number(p, "tau", "pinned-tau field"));
    }
    if (j.contains("pin_time")) {
        const Json& p = j["pin_time"];
        reject_unknown_keys(p, {"inner", "t", "outer"}, "pinned-time field");
        return ActivationField::pin_time(field_from_json(p.at("inner")),
                                         get_number(p, "t", "pinned-time field"), p.value("outer", 1.0));
    }
    const Json& wb = j.at("warped_blend");
    reject_unknown_keys(wb, {"descs", "delta"}, "warped-blend field");
    ActivationField::WarpedBlend node;
    node.delta = get_number(wb, "delta", "warped-blend field");
    for (const Json& d : wb.at("descs")) node.descs.push_back(descriptor_from_json(d));
    return ActivationField(ActivationField::Node(std::move(node)));
}

// ---------------------------------------------------------------------------
// Nets
// ---------------------------------------------------------------------------

namespace {

Json convention_to_json(const Convention& c) {
    if (c.kind == Convention::Kind::Standard) return Json("standard");
    Json j;
    j["sum_of_activations"] = c.dtau;
    return j;
}

Convention convention_from_json(const Json& j) {
    if (j.is_string()) {
        if (j.get<std::string>() == "standard") return Convention::standard();
        throw StructuralError("convention: unknown tag '" + j.get<std::string>() + "'");
    }
    reject_unknown_keys(j, {"sum_of_activations"}, "convention");
    return Convention::sum_of_activations(get_number(j, "sum_of_activations", "convention"));
}

Json layer_act_to_json(const LayerActivation& a) {
    Json j;
    j["outer"] = a.outer;
    Json comps = Json::array();
    for (const auto& c : a.comps) comps.push_back(to_json(c));
    j["components"] = std::move(comps);
    return j;
}

LayerActivation layer_act_from_json(const Json& j) {
    reject_unknown_keys(j, {"outer", "components"}, "layer activation");
    LayerActivation a;
    a.outer = j.value("outer", 1.0);
    for (const Json& c : j.at("components")) a.comps.push_back(resolved_from_json(c));
    if (a.comps.empty()) throw StructuralError("layer activation: needs at least one component");
    return a;
}

const char* residual_name(Residual r) {
    switch (r) {
        case Residual::None: return "none";
        case Residual::Plain: return "plain";
        case Residual::Skip: return "skip";
    }
    return "none";
}

Residual residual_parse(const std::string& s) {
    if (s == "none") return Residual::None;
    if (s == "plain") return Residual::Plain;
    if (s == "skip") return Residual::Skip;
    throw StructuralError("residual: unknown tag '" + s + "'");
}

} // namespace

Json to_json(const FiniteNetParams& p) {
    Json j;
    j["L"] = to_json(p.L);
    Json ws = Json::array();
    for (const auto& w : p.W) ws.push_back(to_json(w));
    j["W"] = std::move(ws);
    j["P"] = to_json(p.P);
    Json acts = Json::array();
    for (const auto& a : p.act) acts.push_back(layer_act_to_json(a));
    j["activations"] = std::move(acts);
    j["convention"] = convention_to_json(p.convention);
    j["residual"] = residual_name(p.residual);
    return j;
}

FiniteNetParams finite_from_json(const Json& j) {
    reject_unknown_keys(j, {"L", "W", "P", "activations", "convention", "residual"}, "finite net");
    FiniteNetParams p;
    p.L = matrix_from_json(j.at("L"));
    for (const Json& w : j.at("W")) p.W.push_back(matrix_from_json(w));
    p.P = matrix_from_json(j.at("P"));
    for (const Json& a : j.at("activations")) p.act.push_back(layer_act_from_json(a));
    if (j.contains("convention")) p.convention = convention_from_json(j["convention"]);
    if (j.contains("residual")) p.residual = residual_parse(j["residual"].get<std::string>());
    p.validate();
    return p;
}

Json to_json(const ContinuumNetParams& p) {
    Json j;
    j["lift"] = to_json(p.lift);
    Json ks = Json::array();
    for (const auto& k : p.kernels) ks.push_back(to_json(k));
    j["kernels"] = std::move(ks);
    Json as = Json::array();
    for (const auto& a : p.activations) as.push_back(to_json(a));
    j["activations"] = std::move(as);
    j["proj"] = to_json(p.proj);
    j["residual"] = p.residual;
    return j;
}

ContinuumNetParams continuum_from_json(const Json& j) {
    reject_unknown_keys(j, {"lift", "kernels", "activations", "proj", "residual"}, "continuum net");
    ContinuumNetParams p;
    p.lift = funcrep_from_json(j.at("lift"));
    for (const Json& k : j.at("kernels")) p.kernels.push_back(funcrep_from_json(k));
    for (const Json& a : j.at("activations")) p.activations.push_back(field_from_json(a));
    p.proj = funcrep_from_json(j.at("proj"));
    p.residual = j.value("residual", false);
    p.validate();
    return p;
}

Json to_json(const OdeKernel& k) {
    Json j;
    if (const auto* c = std::get_if<OdeKernel::ConstantK>(&k.form())) {
        j["constant"] = to_json(c->value);
        return j;
    }
    if (const auto* f = std::get_if<OdeKernel::FunctionK>(&k.form())) {
        j["function"] = to_json(f->rep);
        return j;
    }
    const auto& d = std::get<OdeKernel::DipanetK>(k.form());
    Json inner;
    inner["kernel"] = to_json(d.kernel);
    inner["n"] = d.n;
    j["dipanet_slice"] = std::move(inner);
    return j;
}

OdeKernel ode_kernel_from_json(const Json& j) {
    reject_unknown_keys(j, {"constant", "function", "dipanet_slice"}, "ode kernel");
    if (j.size() != 1) throw StructuralError("ode kernel: expected exactly one variant key");
    if (j.contains("constant")) return OdeKernel::constant(matrix_from_json(j["constant"]));
    if (j.contains("function")) return OdeKernel::from_function(funcrep_from_json(j["function"]));
    const Json& d = j.at("dipanet_slice");
    reject_unknown_keys(d, {"kernel", "n"}, "dipanet-slice kernel");
    return OdeKernel::dipanet_slice(funcrep_from_json(d.at("kernel")),
                                    get_size(d, "n", "dipanet-slice kernel"));
}

Json to_json(const OdeNetParams& p) {
    Json j;
    j["L"] = to_json(p.L);
    j["kernel"] = to_json(p.kernel);
    Json as = Json::array();
    for (const auto& a : p.activation) as.push_back(to_json(a));
    j["activation"] = std::move(as);
    j["P"] = to_json(p.P);
    j["T"] = p.T;
    j["convention"] = convention_to_json(p.convention);
    j["residual"] = p.residual;
    return j;
}

OdeNetParams ode_from_json(const Json& j) {
    reject_unknown_keys(j, {"L", "kernel", "activation", "P", "T", "convention", "residual"},
                        "neural ode");
    OdeNetParams p;
    p.L = matrix_from_json(j.at("L"));
    p.kernel = ode_kernel_from_json(j.at("kernel"));
    for (const Json& a : j.at("activation")) p.activation.push_back(field_from_json(a));
    p.P = matrix_from_json(j.at("P"));
    p.T = get_number(j, "T", "neural ode");
    if (j.contains("convention")) p.convention = convention_from_json(j["convention"]);
    p.residual = j.value("residual", false);
    p.validate();
    return p;
}

Json to_json(const DipanetParams& p) {
    Json j;
    j["lift"] = to_json(p.lift);
    j["kernel"] = to_json(p.kernel);
    j["activation"] = to_json(p.activation);
    j["proj"] = to_json(p.proj);
    j["T"] = p.T;
    j["residual"] = p.residual;
    return j;
}

DipanetParams dipanet_from_json(const Json& j) {
    reject_unknown_keys(j, {"lift", "kernel", "activation", "proj", "T", "residual"}, "dipanet");
    DipanetParams p;
    p.lift = funcrep_from_json(j.at("lift"));
    p.kernel = funcrep_from_json(j.at("kernel"));
    p.activation = field_from_json(j.at("activation"));
    p.proj = funcrep_from_json(j.at("proj"));
    p.T = get_number(j, "T", "dipanet");
    p.residual = j.value("residual", false);
    p.validate();
    return p;
}

Json to_json(const Solver& s) {
    Json j;
    if (s.method == Solver::Method::Euler)
        j["euler"] = s.resolution;
    else
        j["rk4"] = s.resolution;
    return j;
}

Solver solver_from_json(const Json& j) {
    reject_unknown_keys(j, {"euler", "rk4"}, "solver");
    if (j.size() != 1) throw StructuralError("solver: expected {\"euler\": l} or {\"rk4\": steps}");
    if (j.contains("euler")) return Solver::euler(get_size(j, "euler", "solver"));
    return Solver::rk4(get_size(j, "rk4", "solver"));
}

// ---------------------------------------------------------------------------
// Architecture variants
// ---------------------------------------------------------------------------

std::string architecture_tag(const ParamsVariant& v) {
    if (const auto* f = std::get_if<FiniteNetParams>(&v)) {
        switch (f->residual) {
            case Residual::None: return "deepnet";
            case Residual::Plain: return "deepresnet";
            case Residual::Skip: return "deepresnet_skip";
        }
    }
    if (const auto* c = std::get_if<ContinuumNetParams>(&v)) return c->residual ? "deeprescnn" : "deepcnn";
    if (const auto* o = std::get_if<OdeNetParams>(&v)) return o->residual ? "neuralresode" : "neuralode";
    const auto& d = std::get<DipanetParams>(v);
    return d.residual ? "diparesnet" : "dipanet";
}

Json params_to_json(const ParamsVariant& v) {
    Json j;
    j["type"] = architecture_tag(v);
    if (const auto* f = std::get_if<FiniteNetParams>(&v))
        j["params"] = to_json(*f);
    else if (const auto* c = std::get_if<ContinuumNetParams>(&v))
        j["params"] = to_json(*c);
    else if (const auto* o = std::get_if<OdeNetParams>(&v))
        j["params"] = to_json(*o);
    else
        j["params"] = to_json(std::get<DipanetParams>(v));
    return j;
}

ParamsVariant params_from_json(const Json& j) {
    reject_unknown_keys(j, {"type", "params", "provenance"}, "architecture");
    const std::string type = j.at("type").get<std::string>();
    const Json& p = j.at("params");
    if (type == "deepnet" || type == "deepresnet" || type == "deepresnet_skip")
        return finite_from_json(p);
    if (type == "deepcnn" || type == "deeprescnn") return continuum_from_json(p);
    if (type == "neuralode" || type == "neuralresode") return ode_from_json(p);
    if (type == "dipanet" || type == "diparesnet") return dipanet_from_json(p);
    throw StructuralError("architecture: unknown type '" + type + "'");
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

namespace {

double runtime_cell(double measured, bool with_runtimes) { return with_runtimes ? measured : 0.0; }

} // namespace

Json to_json(const SweepReport& r, bool with_runtimes) {
    Json j;
    Json recs = Json::array();
    for (const auto& rec : r.records) {
        Json e;
        e["resolution"] = rec.resolution;
        e["error"] = rec.error;
        e["runtime_s"] = runtime_cell(rec.runtime_s, with_runtimes);
        e["reference_tag"] = rec.reference_tag;
        recs.push_back(std::move(e));
    }
    j["records"] = std::move(recs);
    if (r.fitted_order)
        j["fitted_order"] = *r.fitted_order;
    else
        j["fitted_order"] = "degenerate";
    return j;
}

std::string sweep_csv(const SweepReport& r, bool with_runtimes) {
    std::string out = "resolution,error,runtime_s,reference_tag\n";
    for (const auto& rec : r.records) {
        out += std::to_string(rec.resolution);
        out += ",";
        out += format_double(rec.error);
        out += ",";
        out += format_double(runtime_cell(rec.runtime_s, with_runtimes));
        out += ",";
        out += rec.reference_tag;
        out += "\n";
    }
    return out;
}

namespace {

std::string two_route_tag(const TwoRouteReport& r) {
    return "routeA_vs_routeB(ref m=" + std::to_string(r.reference_m) + ", rk4(" +
           std::to_string(r.reference_solver.resolution) + "))";
}

} // namespace

Json to_json(const TwoRouteReport& r, bool with_runtimes) {
    Json j;
    j["reference_m"] = r.reference_m;
    j["reference_solver"] = to_json(r.reference_solver);
    Json recs = Json::array();
    for (const auto& rec : r.records) {
        Json e;
        e["n"] = rec.n;
        e["ell"] = rec.ell;
        e["discrepancy"] = rec.discrepancy;
        e["gap_route_a"] = rec.gap_a;
        e["gap_route_b"] = rec.gap_b;
        e["runtime_s"] = runtime_cell(rec.runtime_s, with_runtimes);
        recs.push_back(std::move(e));
    }
    j["records"] = std::move(recs);
    return j;
}

std::string two_route_csv(const TwoRouteReport& r, bool with_runtimes) {
    const std::string tag = two_route_tag(r);
    std::string out = "resolution,error,runtime_s,reference_tag\n";
    for (const auto& rec : r.records) {
        out += std::to_string(rec.n);
        out += ",";
        out += format_double(rec.discrepancy);
        out += ",";
        out += format_double(runtime_cell(rec.runtime_s, with_runtimes));
        out += ",";
        out += tag;
        out += "\n";
    }
    return out;
}

} // namespace dipanet
