#include "purimode/model.hpp"

#include <algorithm>
#include <stdexcept>
#include <unordered_map>

#include "json.hpp"

namespace purimode {

namespace {

using nlohmann::json;

void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument("model: " + msg);
}

double max_abs(const Eigen::MatrixXcd& m) {
  return m.size() ? m.cwiseAbs().maxCoeff() : 0.0;
}

}  // namespace

const coupling_spec* system_spec::find_coupling(
    const std::string& label) const {
  for (const auto& c : couplings)
    if (c.label == label) return &c;
  return nullptr;
}

const field_spec* system_spec::find_field(const std::string& label) const {
  for (const auto& f : fields)
    if (f.label == label) return &f;
  return nullptr;
}

void system_spec::validate() const {
  require(dim >= 1, "system dimension must be >= 1");
  require(h_s.rows() == dim && h_s.cols() == dim,
          "h_s must be dim x dim");
  const double h_tol = 1e-12 * std::max(1.0, max_abs(h_s));
  require(max_abs(h_s - h_s.adjoint()) <= h_tol, "h_s must be Hermitian");
  for (size_t i = 0; i < couplings.size(); ++i) {
    const auto& c = couplings[i];
    require(!c.label.empty(), "coupling label must be non-empty");
    require(c.s.rows() == dim && c.s.cols() == dim,
            "coupling '" + c.label + "' operator must be dim x dim");
    require(find_coupling(c.adjoint_label) != nullptr,
            "coupling '" + c.label + "' adjoint label '" + c.adjoint_label +
                "' does not resolve");
    for (size_t j = i + 1; j < couplings.size(); ++j)
      require(couplings[j].label != c.label,
              "duplicate coupling label '" + c.label + "'");
  }
  for (size_t i = 0; i < fields.size(); ++i) {
    const auto& f = fields[i];
    require(!f.label.empty(), "field label must be non-empty");
    for (size_t j = i + 1; j < fields.size(); ++j)
      require(fields[j].label != f.label,
              "duplicate field label '" + f.label + "'");
    if (f.proportional)
      require(find_coupling(f.x_label) != nullptr,
              "field '" + f.label + "' references unknown coupling '" +
                  f.x_label + "'");
    else
      require(find_coupling(f.label) == nullptr,
              "field '" + f.label +
                  "' shadows a coupling label; declare it proportional");
  }
  for (const auto& l : lindblads) {
    require(l.op.rows() == dim && l.op.cols() == dim,
            "collapse operator must be dim x dim");
    require(l.rate >= 0.0, "dissipator rate must be >= 0");
  }
}

const purified_mode& model_spec::mode(int id) const {
  require(id >= 0 && id < int(modes.size()), "mode id out of range");
  return modes[size_t(id)];
}

const field_insertion& model_spec::output(const std::string& label) const {
  for (const auto& ins : insertions)
    if (ins.timing == insertion_timing::output && ins.label == label)
      return ins;
  throw std::out_of_range("model: no output field '" + label + "'");
}

bool model_spec::has_output(const std::string& label) const {
  for (const auto& ins : insertions)
    if (ins.timing == insertion_timing::output && ins.label == label)
      return true;
  return false;
}

std::vector<const field_insertion*> model_spec::input_sequence() const {
  std::vector<const field_insertion*> seq;
  for (const auto& ins : insertions)
    if (ins.timing == insertion_timing::input) seq.push_back(&ins);
  return seq;
}

namespace {

// slot amplitudes of an entry's term: plus entries split their own weight;
// closure-generated minus entries inherit the conjugated amplitudes of the
// generating plus entry so that the principal-branch choice stays paired
std::pair<cplx, cplx> slot_amplitudes(const correlation_set& corr,
                                      const corr_entry& entry,
                                      int term_index) {
  const exp_term& term = entry.terms[size_t(term_index)];
  if (entry.key.sign == time_sign::minus && entry.from_closure &&
      corr.has_adjoint(entry.key.first) && corr.has_adjoint(entry.key.second)) {
    corr_key partner{corr.adjoint(entry.key.second),
                     corr.adjoint(entry.key.first), time_sign::plus};
    if (corr.has(partner) &&
        corr.at(partner).terms.size() == entry.terms.size()) {
      const cplx lam =
          split_weight(corr.at(partner).terms[size_t(term_index)].w);
      return {std::conj(lam), std::conj(lam)};
    }
  }
  const cplx lam = split_weight(term.w);
  return {lam, lam};
}

purified_mode make_mode(model_spec& m, const corr_entry& entry,
                        int term_index, mode_role role) {
  const exp_term& term = entry.terms[size_t(term_index)];
  purified_mode mode;
  mode.id = int(m.modes.size());
  mode.chi = entry.key.sign == time_sign::plus ? chirality::right
                                               : chirality::left;
  mode.z = cplx(term.omega, -term.gamma);
  mode.role = role;
  mode.source = entry.key;
  mode.term_index = term_index;
  std::tie(mode.lambda_a, mode.lambda_b) =
      slot_amplitudes(m.corr, entry, term_index);
  m.modes.push_back(mode);
  return mode;
}

// free-evolution term of one mode; all generator coefficients are stored as
// i * (d rho/dt), so a right mode carries z d^+d rho and a left mode
// -z^* rho d^+d, both of which damp once the assembler folds in the -i
void emit_diagonal(model_spec& m, const purified_mode& mode) {
  super_term st;
  if (mode.chi == chirality::right) {
    st.coeff = mode.z;
    st.left = {op_factor::mode(mode.id, true), op_factor::mode(mode.id, false)};
  } else {
    st.coeff = -std::conj(mode.z);
    st.right = {op_factor::mode(mode.id, true),
                op_factor::mode(mode.id, false)};
  }
  m.generator.push_back(std::move(st));
}

// coupling vertex for the LATER slot: the commutator pair
void emit_later_vertex(model_spec& m, const purified_mode& mode,
                       const std::string& sys_label, cplx lam) {
  if (mode.chi == chirality::right) {
    m.generator.push_back(
        {lam,
         {op_factor::mode(mode.id, false), op_factor::sys(sys_label)},
         {}});
    m.generator.push_back(
        {-lam, {op_factor::mode(mode.id, false)}, {op_factor::sys(sys_label)}});
  } else {
    m.generator.push_back(
        {lam, {op_factor::sys(sys_label)}, {op_factor::mode(mode.id, true)}});
    m.generator.push_back(
        {-lam,
         {},
         {op_factor::sys(sys_label), op_factor::mode(mode.id, true)}});
  }
}

// coupling vertex for the EARLIER slot: one-sided
void emit_earlier_vertex(model_spec& m, const purified_mode& mode,
                         const std::string& sys_label, cplx lam) {
  if (mode.chi == chirality::right) {
    m.generator.push_back(
        {lam, {op_factor::mode(mode.id, true), op_factor::sys(sys_label)}, {}});
  } else {
    m.generator.push_back(
        {-lam,
         {},
         {op_factor::sys(sys_label), op_factor::mode(mode.id, false)}});
  }
}

}  // namespace

model_spec build_system_model(const system_spec& sys,
                              const correlation_set& corr) {
  sys.validate();
  model_spec m;
  m.system = sys;
  m.corr = corr;
  m.rho0 = Eigen::MatrixXcd::Zero(sys.dim, sys.dim);

  for (const auto& [key, entry] : corr.entries()) {
    const bool fc = sys.find_coupling(key.first) != nullptr;
    const bool sc = sys.find_coupling(key.second) != nullptr;
    const bool ff = sys.find_field(key.first) != nullptr;
    const bool sf = sys.find_field(key.second) != nullptr;
    require(fc || ff, "correlation entry " + to_string(key) +
                          " references undeclared label '" + key.first + "'");
    require(sc || sf, "correlation entry " + to_string(key) +
                          " references undeclared label '" + key.second + "'");
    if (!(fc && sc)) continue;  // field entries are consumed by attach_*

    for (int ti = 0; ti < int(entry.terms.size()); ++ti) {
      const purified_mode mode =
          make_mode(m, entry, ti, mode_role::system_dynamics);
      emit_diagonal(m, mode);
      if (mode.chi == chirality::right) {
        emit_later_vertex(m, mode, key.first, mode.lambda_a);
        emit_earlier_vertex(m, mode, key.second, mode.lambda_b);
      } else {
        emit_earlier_vertex(m, mode, key.first, mode.lambda_a);
        emit_later_vertex(m, mode, key.second, mode.lambda_b);
      }
    }
  }
  return m;
}

namespace {

const field_spec& resolve_field(const model_spec& m,
                                const std::string& field_label) {
  const field_spec* f = m.system.find_field(field_label);
  if (!f)
    throw std::invalid_argument(
        "model: field '" + field_label +
        "' is not declared on the system (no correlations to resolve it)");
  return *f;
}

void require_new_insertion(const model_spec& m, const std::string& label,
                           insertion_timing timing, bool left_side) {
  for (const auto& ins : m.insertions)
    if (ins.timing == timing && ins.label == label &&
        ins.left_side == left_side)
      throw std::invalid_argument("model: field '" + label +
                                  "' already attached on this side");
}

}  // namespace

void attach_output_field(model_spec& model, const std::string& field_label,
                         bool left_side) {
  const field_spec& f = resolve_field(model, field_label);
  require_new_insertion(model, field_label, insertion_timing::output,
                        left_side);

  field_insertion ins;
  ins.label = field_label;
  ins.resolved_label = f.proportional ? f.x_label : f.label;
  ins.factor = f.proportional ? f.factor : cplx(1.0);
  ins.left_side = left_side;
  ins.timing = insertion_timing::output;

  if (f.proportional) {
    // ride the existing modes: every mode whose matching slot carries the
    // proportional bath operator contributes one lowering term
    for (const auto& mode : model.modes) {
      if (left_side && mode.chi == chirality::right &&
          mode.source.first == ins.resolved_label) {
        ins.terms.push_back({ins.factor * mode.lambda_a,
                             {op_factor::mode(mode.id, false)},
                             {}});
      } else if (!left_side && mode.chi == chirality::left &&
                 mode.source.second == ins.resolved_label) {
        ins.terms.push_back({ins.factor * mode.lambda_b,
                             {},
                             {op_factor::mode(mode.id, true)}});
      }
    }
  } else {
    // dedicated observation modes from the field-coupling correlations
    for (const auto& [key, entry] : model.corr.entries()) {
      if (left_side) {
        if (key.sign != time_sign::plus || key.first != ins.resolved_label)
          continue;
        if (!model.system.find_coupling(key.second)) continue;
        for (int ti = 0; ti < int(entry.terms.size()); ++ti) {
          const purified_mode mode =
              make_mode(model, entry, ti, mode_role::output_field);
          emit_diagonal(model, mode);
          emit_earlier_vertex(model, mode, key.second, mode.lambda_b);
          ins.terms.push_back(
              {mode.lambda_a, {op_factor::mode(mode.id, false)}, {}});
        }
      } else {
        if (key.sign != time_sign::minus || key.second != ins.resolved_label)
          continue;
        if (!model.system.find_coupling(key.first)) continue;
        for (int ti = 0; ti < int(entry.terms.size()); ++ti) {
          const purified_mode mode =
              make_mode(model, entry, ti, mode_role::output_field);
          emit_diagonal(model, mode);
          emit_earlier_vertex(model, mode, key.first, mode.lambda_a);
          ins.terms.push_back(
              {mode.lambda_b, {}, {op_factor::mode(mode.id, true)}});
        }
      }
    }
  }
  model.insertions.push_back(std::move(ins));
}

void attach_input_field(model_spec& model, const std::string& field_label,
                        bool left_side, cplx amplitude) {
  const field_spec& f = resolve_field(model, field_label);

  field_insertion ins;
  ins.label = field_label;
  ins.resolved_label = f.proportional ? f.x_label : f.label;
  ins.factor = amplitude * (f.proportional ? f.factor : cplx(1.0));
  ins.left_side = left_side;
  ins.timing = insertion_timing::input;

  std::vector<int> new_mode_ids;
  for (const auto& [key, entry] : model.corr.entries()) {
    if (left_side) {
      // preparation on the ket side pairs with later ket-side vertices
      if (key.sign != time_sign::plus || key.second != ins.resolved_label)
        continue;
      if (!model.system.find_coupling(key.first)) continue;
      for (int ti = 0; ti < int(entry.terms.size()); ++ti) {
        const purified_mode mode =
            make_mode(model, entry, ti, mode_role::input_field);
        emit_diagonal(model, mode);
        emit_later_vertex(model, mode, key.first, mode.lambda_a);
        ins.terms.push_back(
            {ins.factor * mode.lambda_b, {op_factor::mode(mode.id, true)}, {}});
        new_mode_ids.push_back(mode.id);
      }
    } else {
      if (key.sign != time_sign::minus || key.first != ins.resolved_label)
        continue;
      if (!model.system.find_coupling(key.second)) continue;
      for (int ti = 0; ti < int(entry.terms.size()); ++ti) {
        const purified_mode mode =
            make_mode(model, entry, ti, mode_role::input_field);
        emit_diagonal(model, mode);
        emit_later_vertex(model, mode, key.second, mode.lambda_b);
        ins.terms.push_back(
            {ins.factor * mode.lambda_a,
             {},
             {op_factor::mode(mode.id, false)}});
        new_mode_ids.push_back(mode.id);
      }
    }
  }

  // a proportional readout attached earlier must also ride the modes created
  // here, or it would miss the equal-time contraction against this
  // preparation (e.g. the occupation deposited by a single-photon state)
  for (auto& prev : model.insertions) {
    if (prev.timing != insertion_timing::output) continue;
    const field_spec* pf = model.system.find_field(prev.label);
    if (!pf || !pf->proportional) continue;
    for (int id : new_mode_ids) {
      const purified_mode& mode = model.mode(id);
      if (prev.left_side && mode.chi == chirality::right &&
          mode.source.first == prev.resolved_label) {
        prev.terms.push_back({prev.factor * mode.lambda_a,
                              {op_factor::mode(mode.id, false)},
                              {}});
      } else if (!prev.left_side && mode.chi == chirality::left &&
                 mode.source.second == prev.resolved_label) {
        prev.terms.push_back({prev.factor * mode.lambda_b,
                              {},
                              {op_factor::mode(mode.id, true)}});
      }
    }
  }
  model.insertions.push_back(std::move(ins));
}

mode_counts count_modes(const model_spec& model) {
  mode_counts c;
  for (const auto& mode : model.modes) {
    const bool r = mode.chi == chirality::right;
    switch (mode.role) {
      case mode_role::system_dynamics:
        (r ? c.right_system : c.left_system)++;
        break;
      case mode_role::output_field:
        (r ? c.right_output : c.left_output)++;
        break;
      case mode_role::input_field:
        (r ? c.right_input : c.left_input)++;
        break;
    }
  }
  auto tally_reuse = [&](const std::vector<op_factor>& factors) {
    for (const auto& of : factors)
      if (of.is_mode &&
          model.mode(of.mode_id).role != mode_role::output_field)
        c.reuse_records++;
  };
  for (const auto& ins : model.insertions) {
    if (ins.timing != insertion_timing::output) continue;
    for (const auto& term : ins.terms) {
      tally_reuse(term.left);
      tally_reuse(term.right);
    }
  }
  return c;
}

std::vector<std::pair<std::uint32_t, cplx>> input_expansion(
    const model_spec& m) {
  const auto inputs = m.input_sequence();
  const int n = int(inputs.size());
  require(n <= 20, "too many input insertions for subset expansion");

  // contraction order: right-side insertions as applied, then left-side
  // insertions in reverse application order (operator order under the
  // vacuum trace)
  std::vector<int> eff;
  for (int i = 0; i < n; ++i)
    if (!inputs[size_t(i)]->left_side) eff.push_back(i);
  for (int i = n - 1; i >= 0; --i)
    if (inputs[size_t(i)]->left_side) eff.push_back(i);
  std::vector<int> rank(size_t(n), 0);
  for (int r = 0; r < n; ++r) rank[size_t(eff[size_t(r)])] = r;

  auto pair_value = [&](int a, int b) -> cplx {
    if (rank[size_t(a)] > rank[size_t(b)]) std::swap(a, b);
    const auto& ia = *inputs[size_t(a)];
    const auto& ib = *inputs[size_t(b)];
    for (time_sign sign : {time_sign::plus, time_sign::minus}) {
      corr_key key{ia.resolved_label, ib.resolved_label, sign};
      if (m.corr.has(key))
        return ia.factor * ib.factor * m.corr.eval(key, 0.0);
    }
    return 0.0;
  };

  std::unordered_map<std::uint32_t, cplx> memo;
  auto pairing_sum = [&](auto&& self, std::uint32_t mask) -> cplx {
    if (mask == 0) return 1.0;
    auto it = memo.find(mask);
    if (it != memo.end()) return it->second;
    // contract the element earliest in the effective order with each partner
    int first = -1;
    for (int r = 0; r < n && first < 0; ++r)
      if (mask & (1u << eff[size_t(r)])) first = eff[size_t(r)];
    cplx acc = 0.0;
    for (int j = 0; j < n; ++j) {
      if (j == first || !(mask & (1u << j))) continue;
      const cplx pv = pair_value(first, j);
      if (pv == cplx(0.0)) continue;
      acc += pv * self(self, mask & ~(1u << first) & ~(1u << j));
    }
    memo.emplace(mask, acc);
    return acc;
  };

  std::vector<std::pair<std::uint32_t, cplx>> out;
  const std::uint32_t full = n == 32 ? ~0u : ((1u << n) - 1u);
  for (std::uint32_t mask = 0; mask <= full; ++mask) {
    const cplx w = pairing_sum(pairing_sum, full & ~mask);
    if (w != cplx(0.0)) out.emplace_back(mask, w);
    if (full == 0) break;
  }
  return out;
}

// ---------------------------------------------------------------------------
// serialization

namespace {

json mat_to_json(const Eigen::MatrixXcd& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c)
      row.push_back({m(r, c).real(), m(r, c).imag()});
    rows.push_back(std::move(row));
  }
  return rows;
}

Eigen::MatrixXcd mat_from_json(const json& j) {
  const Eigen::Index rows = Eigen::Index(j.size());
  const Eigen::Index cols = rows ? Eigen::Index(j.at(0).size()) : 0;
  Eigen::MatrixXcd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) {
      const auto& e = j.at(size_t(r)).at(size_t(c));
      m(r, c) = cplx(e.at(0).get<double>(), e.at(1).get<double>());
    }
  return m;
}

json cplx_to_json(cplx z) { return {z.real(), z.imag()}; }

cplx cplx_from_json(const json& j) {
  return {j.at(0).get<double>(), j.at(1).get<double>()};
}

json key_to_json(const corr_key& k) {
  return {{"first", k.first},
          {"second", k.second},
          {"sign", k.sign == time_sign::plus ? "+" : "-"}};
}

corr_key key_from_json(const json& j) {
  return {j.at("first").get<std::string>(), j.at("second").get<std::string>(),
          j.at("sign").get<std::string>() == "+" ? time_sign::plus
                                                 : time_sign::minus};
}

json factor_to_json(const op_factor& f) {
  if (f.is_mode) return {{"mode", f.mode_id}, {"raise", f.raise_op}};
  return {{"sys", f.sys_label}};
}

op_factor factor_from_json(const json& j) {
  if (j.contains("mode"))
    return op_factor::mode(j.at("mode").get<int>(),
                           j.at("raise").get<bool>());
  return op_factor::sys(j.at("sys").get<std::string>());
}

json term_to_json(const super_term& t) {
  json jl = json::array(), jr = json::array();
  for (const auto& f : t.left) jl.push_back(factor_to_json(f));
  for (const auto& f : t.right) jr.push_back(factor_to_json(f));
  return {{"coeff", cplx_to_json(t.coeff)},
          {"left", std::move(jl)},
          {"right", std::move(jr)}};
}

super_term term_from_json(const json& j) {
  super_term t;
  t.coeff = cplx_from_json(j.at("coeff"));
  for (const auto& f : j.at("left")) t.left.push_back(factor_from_json(f));
  for (const auto& f : j.at("right")) t.right.push_back(factor_from_json(f));
  return t;
}

json corr_to_json(const correlation_set& c) {
  json adj = json::object();
  for (const auto& [a, b] : c.adjoints()) adj[a] = b;
  json entries = json::array();
  for (const auto& [key, e] : c.entries()) {
    json terms = json::array();
    for (const auto& t : e.terms)
      terms.push_back({t.w.real(), t.w.imag(), t.omega, t.gamma});
    entries.push_back({{"key", key_to_json(key)},
                       {"from_closure", e.from_closure},
                       {"terms", std::move(terms)}});
  }
  json meta = json::object();
  for (const auto& [k, v] : c.metadata) meta[k] = v;
  return {{"adjoints", std::move(adj)},
          {"entries", std::move(entries)},
          {"metadata", std::move(meta)}};
}

correlation_set corr_from_json(const json& j) {
  correlation_set c;
  for (const auto& [a, b] : j.at("adjoints").items()) {
    if (!c.has_adjoint(a)) c.set_adjoint(a, b.get<std::string>());
  }
  for (const auto& e : j.at("entries")) {
    std::vector<exp_term> terms;
    for (const auto& t : e.at("terms"))
      terms.push_back({cplx(t.at(0).get<double>(), t.at(1).get<double>()),
                       t.at(2).get<double>(), t.at(3).get<double>()});
    c.add_entry(key_from_json(e.at("key")), std::move(terms),
                e.at("from_closure").get<bool>());
  }
  for (const auto& [k, v] : j.at("metadata").items())
    c.metadata[k] = v.get<std::string>();
  return c;
}

}  // namespace

std::string model_to_json(const model_spec& m) {
  json sys;
  sys["dim"] = m.system.dim;
  sys["h_s"] = mat_to_json(m.system.h_s);
  sys["couplings"] = json::array();
  for (const auto& c : m.system.couplings)
    sys["couplings"].push_back({{"label", c.label},
                                {"s", mat_to_json(c.s)},
                                {"adjoint_label", c.adjoint_label}});
  sys["fields"] = json::array();
  for (const auto& f : m.system.fields)
    sys["fields"].push_back({{"label", f.label},
                             {"proportional", f.proportional},
                             {"x_label", f.x_label},
                             {"factor", cplx_to_json(f.factor)}});
  sys["lindblads"] = json::array();
  for (const auto& l : m.system.lindblads)
    sys["lindblads"].push_back(
        {{"op", mat_to_json(l.op)}, {"rate", l.rate}});

  json modes = json::array();
  for (const auto& mode : m.modes)
    modes.push_back(
        {{"id", mode.id},
         {"chirality", mode.chi == chirality::right ? "right" : "left"},
         {"z", cplx_to_json(mode.z)},
         {"role", mode.role == mode_role::system_dynamics ? "system"
                  : mode.role == mode_role::output_field  ? "output"
                                                          : "input"},
         {"source", key_to_json(mode.source)},
         {"term_index", mode.term_index},
         {"lambda_a", cplx_to_json(mode.lambda_a)},
         {"lambda_b", cplx_to_json(mode.lambda_b)}});

  json gen = json::array();
  for (const auto& t : m.generator) gen.push_back(term_to_json(t));

  json ins = json::array();
  for (const auto& i : m.insertions) {
    json terms = json::array();
    for (const auto& t : i.terms) terms.push_back(term_to_json(t));
    ins.push_back(
        {{"label", i.label},
         {"resolved_label", i.resolved_label},
         {"factor", cplx_to_json(i.factor)},
         {"left_side", i.left_side},
         {"timing", i.timing == insertion_timing::output ? "output" : "input"},
         {"terms", std::move(terms)}});
  }

  json doc;
  doc["system"] = std::move(sys);
  doc["modes"] = std::move(modes);
  doc["generator"] = std::move(gen);
  doc["insertions"] = std::move(ins);
  doc["rho0"] = mat_to_json(m.rho0);
  doc["corr"] = corr_to_json(m.corr);
  return doc.dump(2);
}

model_spec model_from_json(const std::string& text) {
  const json doc = json::parse(text);
  model_spec m;
  const json& sys = doc.at("system");
  m.system.dim = sys.at("dim").get<int>();
  m.system.h_s = mat_from_json(sys.at("h_s"));
  for (const auto& c : sys.at("couplings"))
    m.system.couplings.push_back({c.at("label").get<std::string>(),
                                  mat_from_json(c.at("s")),
                                  c.at("adjoint_label").get<std::string>()});
  for (const auto& f : sys.at("fields"))
    m.system.fields.push_back({f.at("label").get<std::string>(),
                               f.at("proportional").get<bool>(),
                               f.at("x_label").get<std::string>(),
                               cplx_from_json(f.at("factor"))});
  for (const auto& l : sys.at("lindblads"))
    m.system.lindblads.push_back(
        {mat_from_json(l.at("op")), l.at("rate").get<double>()});

  for (const auto& j : doc.at("modes")) {
    purified_mode mode;
    mode.id = j.at("id").get<int>();
    mode.chi = j.at("chirality").get<std::string>() == "right"
                   ? chirality::right
                   : chirality::left;
    mode.z = cplx_from_json(j.at("z"));
    const std::string role = j.at("role").get<std::string>();
    mode.role = role == "system"   ? mode_role::system_dynamics
                : role == "output" ? mode_role::output_field
                                   : mode_role::input_field;
    mode.source = key_from_json(j.at("source"));
    mode.term_index = j.at("term_index").get<int>();
    mode.lambda_a = cplx_from_json(j.at("lambda_a"));
    mode.lambda_b = cplx_from_json(j.at("lambda_b"));
    m.modes.push_back(std::move(mode));
  }
  for (const auto& j : doc.at("generator"))
    m.generator.push_back(term_from_json(j));
  for (const auto& j : doc.at("insertions")) {
    field_insertion i;
    i.label = j.at("label").get<std::string>();
    i.resolved_label = j.at("resolved_label").get<std::string>();
    i.factor = cplx_from_json(j.at("factor"));
    i.left_side = j.at("left_side").get<bool>();
    i.timing = j.at("timing").get<std::string>() == "output"
                   ? insertion_timing::output
                   : insertion_timing::input;
    for (const auto& t : j.at("terms")) i.terms.push_back(term_from_json(t));
    m.insertions.push_back(std::move(i));
  }
  m.rho0 = mat_from_json(doc.at("rho0"));
  m.corr = corr_from_json(doc.at("corr"));
  return m;
}

}  // namespace purimode
