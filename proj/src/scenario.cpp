#include "purimode/scenario.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "json.hpp"
#include "purimode/csvio.hpp"
#include "purimode/dynamics.hpp"
#include "purimode/expfit.hpp"
#include "purimode/heom.hpp"
#include "purimode/liouville.hpp"
#include "purimode/ode.hpp"

namespace purimode {

namespace {

using nlohmann::json;

void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument("scenario: " + msg);
}

// ---------------------------------------------------------------------------
// small operator helpers on the two-emitter space (basis index 2*i1 + i2,
// 0 = ground per emitter) and on single bosonic factors

Eigen::MatrixXcd sigma_minus_1q() {
  Eigen::MatrixXcd s = Eigen::MatrixXcd::Zero(2, 2);
  s(0, 1) = 1.0;
  return s;
}

Eigen::MatrixXcd kron2(const Eigen::MatrixXcd& a, const Eigen::MatrixXcd& b) {
  Eigen::MatrixXcd out(a.rows() * b.rows(), a.cols() * b.cols());
  for (long i = 0; i < a.rows(); ++i)
    for (long j = 0; j < a.cols(); ++j)
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

Eigen::MatrixXcd emitter_lower(int which) {
  const Eigen::MatrixXcd sm = sigma_minus_1q();
  const Eigen::MatrixXcd id = Eigen::MatrixXcd::Identity(2, 2);
  return which == 1 ? kron2(sm, id) : kron2(id, sm);
}

Eigen::MatrixXcd emitter_pop(int which) {
  const Eigen::MatrixXcd sm = emitter_lower(which);
  return sm.adjoint() * sm;
}

Eigen::MatrixXcd lower_ladder(long d) {
  Eigen::MatrixXcd m = Eigen::MatrixXcd::Zero(d, d);
  for (long k = 1; k < d; ++k) m(k - 1, k) = std::sqrt(double(k));
  return m;
}

Eigen::MatrixXcd raise_ladder(long d) {
  return lower_ladder(d).adjoint();
}

int emitter_excitation(int basis_index) {
  return ((basis_index >> 1) & 1) + (basis_index & 1);
}

// ---------------------------------------------------------------------------
// configuration document

const std::set<std::string>& bath_labels() {
  static const std::set<std::string> labels{lbl_c1, lbl_c1dag, lbl_c2,
                                            lbl_c2dag};
  return labels;
}

void check_keys(const json& j, const std::string& where,
                std::initializer_list<const char*> allowed) {
  require(j.is_object(), where + " must be an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool known = false;
    for (const char* k : allowed)
      if (it.key() == k) {
        known = true;
        break;
      }
    require(known, "unknown key '" + it.key() + "' in " + where);
  }
}

double get_num(const json& j, const char* key, double dflt) {
  if (!j.contains(key)) return dflt;
  require(j[key].is_number(), std::string("'") + key + "' must be a number");
  return j[key].get<double>();
}

int get_int(const json& j, const char* key, int dflt) {
  if (!j.contains(key)) return dflt;
  require(j[key].is_number_integer(),
          std::string("'") + key + "' must be an integer");
  return j[key].get<int>();
}

bool get_bool(const json& j, const char* key, bool dflt) {
  if (!j.contains(key)) return dflt;
  require(j[key].is_boolean(), std::string("'") + key + "' must be a boolean");
  return j[key].get<bool>();
}

std::string get_str(const json& j, const char* key, const std::string& dflt) {
  if (!j.contains(key)) return dflt;
  require(j[key].is_string(), std::string("'") + key + "' must be a string");
  return j[key].get<std::string>();
}

void get_pair(const json& j, const char* key, double out[2]) {
  if (!j.contains(key)) return;
  const json& v = j[key];
  require(v.is_array() && v.size() == 2 && v[0].is_number() && v[1].is_number(),
          std::string("'") + key + "' must be an array of two numbers");
  out[0] = v[0].get<double>();
  out[1] = v[1].get<double>();
}

cplx get_cplx(const json& v, const std::string& where) {
  if (v.is_number()) return cplx(v.get<double>(), 0.0);
  require(v.is_array() && v.size() == 2 && v[0].is_number() && v[1].is_number(),
          where + " must be a number or [re, im]");
  return cplx(v[0].get<double>(), v[1].get<double>());
}

json pair_json(const double v[2]) { return json::array({v[0], v[1]}); }

void validate_config(const scenario_config& c) {
  require(c.initial == "e1" || c.initial == "e2" || c.initial == "both" ||
              c.initial == "ground",
          "system.initial must be e1|e2|both|ground");
  require(c.method == "case1" || c.method == "case2" || c.method == "fit",
          "decomposition.method must be case1|case2|fit");
  require(c.engine == "tiered" || c.engine == "dense" || c.engine == "lindblad",
          "simulation.engine must be tiered|dense|lindblad");
  require(c.n_poles >= 1, "decomposition.n_poles must be >= 1");
  require(c.n_self_terms >= 1, "decomposition.n_self_terms must be >= 1");
  require(c.n_terms >= 1, "decomposition.n_terms must be >= 1");
  require(c.t_max > 0.0, "simulation.t_max must be positive");
  require(c.samples >= 2, "simulation.samples must be >= 2");
  require(c.rtol > 0.0 && c.atol > 0.0, "tolerances must be positive");
  require(c.tier >= 1, "simulation.tier must be >= 1");
  require(c.truncation >= 1, "simulation.truncation must be >= 1");
  require(c.tau_max > 0.0, "simulation.tau_max must be positive");
  require(c.tau_samples >= 2, "simulation.tau_samples must be >= 2");
  require(c.steady_t_max > 0.0, "simulation.steady_t_max must be positive");
  for (const std::string& o : c.outputs)
    require(o == lbl_c1 || o == lbl_c2,
            "fields.outputs entries must be c1 or c2");
  for (const auto& in : c.inputs)
    require(bath_labels().count(in.label) == 1,
            "fields.inputs label '" + in.label + "' is not a bath operator");
  for (const auto& cf : c.corr_files) {
    require(bath_labels().count(cf.first) == 1 &&
                bath_labels().count(cf.second) == 1,
            "bath.corr_files labels must be bath operators");
    require(!cf.path.empty(), "bath.corr_files path must be non-empty");
  }
  if (c.window.set) {
    require(c.window.re_max > c.window.re_min &&
                c.window.im_max > c.window.im_min,
            "decomposition.window bounds must be increasing");
    require(c.window.nx >= 2 && c.window.ny >= 2,
            "decomposition.window grid must be >= 2 per axis");
  }
  require(c.bath.lambda0_nm > 0 && c.bath.v_g > 0 &&
              c.bath.xd_wavelengths >= 0,
          "bath geometry must be positive");
  for (int n = 1; n <= 2; ++n) {
    require(c.bath.kappa(n) >= 0.0 && c.bath.kappa_i(n) >= 0.0,
            "cavity rates must be non-negative");
    require(c.bath.coupling_v(n) >= 0.0, "couplings must be non-negative");
  }
}

std::string hex64(std::uint64_t v) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::vector<double> linspace(double t_max, int n) {
  std::vector<double> t(static_cast<size_t>(n));
  for (int k = 0; k < n; ++k) t[size_t(k)] = t_max * double(k) / (n - 1);
  return t;
}

std::string join_path(const std::string& dir, const std::string& name) {
  if (dir.empty()) return name;
  return dir.back() == '/' ? dir + name : dir + "/" + name;
}

void ensure_dir(const std::string& dir) {
  if (!dir.empty()) std::filesystem::create_directories(dir);
}

const char* sign_name(time_sign s) {
  return s == time_sign::plus ? "plus" : "minus";
}

std::map<std::string, std::string> base_meta(const scenario_config& cfg,
                                             const std::string& cmd) {
  std::map<std::string, std::string> m;
  m["config"] = config_hash(cfg);
  m["command"] = cmd;
  m["time_unit"] = "ps";
  m["frequency_unit"] = "rad/ps";
  m["frame_omega_r"] = format_g17(frame_omega(cfg));
  return m;
}

double broadening_of(const waveguide_params& p, int n, int m) {
  return 0.25 * (p.kappa_i(n) + p.kappa_i(m));
}

void emit_table(command_result& r, const std::string& dir,
                const std::string& name, const csv_table& t) {
  const std::string path = join_path(dir, name);
  write_csv(path, t);
  r.files.push_back(path);
}

Eigen::MatrixXcd initial_rho(const scenario_config& cfg) {
  int idx = 0;
  if (cfg.initial == "e1") idx = 2;
  else if (cfg.initial == "e2") idx = 1;
  else if (cfg.initial == "both") idx = 3;
  Eigen::MatrixXcd rho = Eigen::MatrixXcd::Zero(4, 4);
  rho(idx, idx) = 1.0;
  return rho;
}

double effective_pump(const scenario_config& cfg) {
  if (cfg.pump_rate == 0.0) return 0.0;
  return cfg.pump_rate > 0.0 ? cfg.pump_rate : cfg.bath.kappa(1) / 20.0;
}

int cavity_of_label(const std::string& label) {
  return (label == lbl_c1 || label == lbl_c1dag) ? 1 : 2;
}

}  // namespace

// ---------------------------------------------------------------------------
// configuration round trip

scenario_config config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("scenario: config parse error: ") +
                                e.what());
  }
  check_keys(j, "config",
             {"system", "bath", "decomposition", "fields", "simulation",
              "output"});
  scenario_config c;

  if (j.contains("system")) {
    const json& s = j["system"];
    check_keys(s, "system",
               {"lambda_e_nm", "v_fraction", "v_override", "initial",
                "pump_rate"});
    get_pair(s, "lambda_e_nm", c.bath.lambda_e_nm);
    get_pair(s, "v_fraction", c.bath.v_fraction);
    get_pair(s, "v_override", c.bath.v_override);
    c.initial = get_str(s, "initial", c.initial);
    c.pump_rate = get_num(s, "pump_rate", c.pump_rate);
  }

  if (j.contains("bath")) {
    const json& b = j["bath"];
    check_keys(b, "bath",
               {"lambda_c_nm", "quality", "intrinsic_fraction",
                "kappa_override", "kappa_i_override", "xd_wavelengths",
                "lambda0_nm", "v_g_nm_per_ps", "corr_files"});
    get_pair(b, "lambda_c_nm", c.bath.lambda_c_nm);
    get_pair(b, "quality", c.bath.quality);
    c.bath.intrinsic_fraction =
        get_num(b, "intrinsic_fraction", c.bath.intrinsic_fraction);
    get_pair(b, "kappa_override", c.bath.kappa_override);
    get_pair(b, "kappa_i_override", c.bath.kappa_i_override);
    c.bath.xd_wavelengths = get_num(b, "xd_wavelengths", c.bath.xd_wavelengths);
    c.bath.lambda0_nm = get_num(b, "lambda0_nm", c.bath.lambda0_nm);
    c.bath.v_g = get_num(b, "v_g_nm_per_ps", c.bath.v_g);
    if (b.contains("corr_files")) {
      require(b["corr_files"].is_array(), "bath.corr_files must be an array");
      for (const json& e : b["corr_files"]) {
        check_keys(e, "bath.corr_files entry", {"first", "second", "path"});
        scenario_config::corr_file cf;
        cf.first = get_str(e, "first", "");
        cf.second = get_str(e, "second", "");
        cf.path = get_str(e, "path", "");
        c.corr_files.push_back(std::move(cf));
      }
    }
  }

  if (j.contains("decomposition")) {
    const json& d = j["decomposition"];
    check_keys(d, "decomposition",
               {"method", "n_poles", "n_self_terms", "n_terms", "window"});
    c.method = get_str(d, "method", c.method);
    c.n_poles = get_int(d, "n_poles", c.n_poles);
    c.n_self_terms = get_int(d, "n_self_terms", c.n_self_terms);
    c.n_terms = get_int(d, "n_terms", c.n_terms);
    if (d.contains("window") && !d["window"].is_null()) {
      const json& w = d["window"];
      check_keys(w, "decomposition.window",
                 {"re_min", "re_max", "im_min", "im_max", "nx", "ny"});
      c.window.set = true;
      c.window.re_min = get_num(w, "re_min", 0.0);
      c.window.re_max = get_num(w, "re_max", 0.0);
      c.window.im_min = get_num(w, "im_min", 0.0);
      c.window.im_max = get_num(w, "im_max", 0.0);
      c.window.nx = get_int(w, "nx", 400);
      c.window.ny = get_int(w, "ny", 400);
    }
  }

  if (j.contains("fields")) {
    const json& f = j["fields"];
    check_keys(f, "fields", {"outputs", "inputs"});
    if (f.contains("outputs")) {
      require(f["outputs"].is_array(), "fields.outputs must be an array");
      for (const json& o : f["outputs"]) {
        require(o.is_string(), "fields.outputs entries must be strings");
        c.outputs.push_back(o.get<std::string>());
      }
    }
    if (f.contains("inputs")) {
      require(f["inputs"].is_array(), "fields.inputs must be an array");
      for (const json& e : f["inputs"]) {
        check_keys(e, "fields.inputs entry", {"label", "side", "amplitude"});
        input_field_config ic;
        ic.label = get_str(e, "label", "");
        const std::string side = get_str(e, "side", "left");
        require(side == "left" || side == "right",
                "fields.inputs side must be left or right");
        ic.left_side = side == "left";
        if (e.contains("amplitude"))
          ic.amplitude = get_cplx(e["amplitude"], "fields.inputs amplitude");
        c.inputs.push_back(std::move(ic));
      }
    }
  }

  if (j.contains("simulation")) {
    const json& s = j["simulation"];
    check_keys(s, "simulation",
               {"t_max", "samples", "rtol", "atol", "engine", "tier",
                "truncation", "tau_max", "tau_samples", "steady_t_max"});
    c.t_max = get_num(s, "t_max", c.t_max);
    c.samples = get_int(s, "samples", c.samples);
    c.rtol = get_num(s, "rtol", c.rtol);
    c.atol = get_num(s, "atol", c.atol);
    c.engine = get_str(s, "engine", c.engine);
    c.tier = get_int(s, "tier", c.tier);
    c.truncation = get_int(s, "truncation", c.truncation);
    c.tau_max = get_num(s, "tau_max", c.tau_max);
    c.tau_samples = get_int(s, "tau_samples", c.tau_samples);
    c.steady_t_max = get_num(s, "steady_t_max", c.steady_t_max);
  }

  if (j.contains("output")) {
    const json& o = j["output"];
    check_keys(o, "output", {"dir", "svg"});
    c.out_dir = get_str(o, "dir", c.out_dir);
    c.svg = get_bool(o, "svg", c.svg);
  }

  validate_config(c);
  return c;
}

std::string config_to_json(const scenario_config& c) {
  json j;
  j["system"] = {{"lambda_e_nm", pair_json(c.bath.lambda_e_nm)},
                 {"v_fraction", pair_json(c.bath.v_fraction)},
                 {"v_override", pair_json(c.bath.v_override)},
                 {"initial", c.initial},
                 {"pump_rate", c.pump_rate}};
  json files = json::array();
  for (const auto& cf : c.corr_files)
    files.push_back(
        {{"first", cf.first}, {"second", cf.second}, {"path", cf.path}});
  j["bath"] = {{"lambda_c_nm", pair_json(c.bath.lambda_c_nm)},
               {"quality", pair_json(c.bath.quality)},
               {"intrinsic_fraction", c.bath.intrinsic_fraction},
               {"kappa_override", pair_json(c.bath.kappa_override)},
               {"kappa_i_override", pair_json(c.bath.kappa_i_override)},
               {"xd_wavelengths", c.bath.xd_wavelengths},
               {"lambda0_nm", c.bath.lambda0_nm},
               {"v_g_nm_per_ps", c.bath.v_g},
               {"corr_files", files}};
  json window;
  if (c.window.set)
    window = {{"re_min", c.window.re_min}, {"re_max", c.window.re_max},
              {"im_min", c.window.im_min}, {"im_max", c.window.im_max},
              {"nx", c.window.nx},         {"ny", c.window.ny}};
  j["decomposition"] = {{"method", c.method},
                        {"n_poles", c.n_poles},
                        {"n_self_terms", c.n_self_terms},
                        {"n_terms", c.n_terms},
                        {"window", window}};
  json inputs = json::array();
  for (const auto& ic : c.inputs)
    inputs.push_back({{"label", ic.label},
                      {"side", ic.left_side ? "left" : "right"},
                      {"amplitude", json::array({ic.amplitude.real(),
                                                 ic.amplitude.imag()})}});
  j["fields"] = {{"outputs", c.outputs}, {"inputs", inputs}};
  j["simulation"] = {{"t_max", c.t_max},
                     {"samples", c.samples},
                     {"rtol", c.rtol},
                     {"atol", c.atol},
                     {"engine", c.engine},
                     {"tier", c.tier},
                     {"truncation", c.truncation},
                     {"tau_max", c.tau_max},
                     {"tau_samples", c.tau_samples},
                     {"steady_t_max", c.steady_t_max}};
  j["output"] = {{"dir", c.out_dir}, {"svg", c.svg}};
  return j.dump(2) + "\n";
}

scenario_config load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(bool(in), "cannot open config file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return config_from_json(ss.str());
}

std::string config_hash(const scenario_config& cfg) {
  return hex64(fnv1a64(config_to_json(cfg)));
}

// ---------------------------------------------------------------------------
// pipeline stages

double frame_omega(const scenario_config& cfg) {
  return 0.5 * (cfg.bath.omega_c(1) + cfg.bath.omega_c(2));
}

system_spec scenario_system(const scenario_config& cfg, double frame_w) {
  const waveguide_params& p = cfg.bath;
  system_spec sys;
  sys.dim = 4;
  sys.h_s = Eigen::MatrixXcd::Zero(4, 4);
  for (int n = 1; n <= 2; ++n)
    sys.h_s += (p.omega_e(n) - frame_w) * emitter_pop(n);

  for (int n = 1; n <= 2; ++n) {
    const double v = p.coupling_v(n);
    const Eigen::MatrixXcd sm = emitter_lower(n);
    const std::string c = n == 1 ? lbl_c1 : lbl_c2;
    const std::string cd = n == 1 ? lbl_c1dag : lbl_c2dag;
    sys.couplings.push_back({c, v * sm.adjoint(), cd});
    sys.couplings.push_back({cd, v * sm, c});
  }

  for (const std::string& l : bath_labels()) {
    field_spec f;
    f.label = "phi_" + l;
    f.proportional = true;
    f.x_label = l;
    f.factor = 1.0;
    sys.fields.push_back(std::move(f));
  }

  const double pump = effective_pump(cfg);
  if (pump > 0.0)
    sys.lindblads.push_back({emitter_lower(1).adjoint(), pump});

  sys.validate();
  return sys;
}

namespace {

// all-exponential decomposition from direct integration of the delayed
// amplitude equations (observed cavity n, initially excited cavity m);
// data is generated in the waveguide rotating frame without intrinsic
// losses, fitted, then moved to the lab frame and broadened
void add_fitted_entry(correlation_set& set, const waveguide_params& p, int n,
                      int m, int n_terms) {
  const double t_cap = 200.0;
  const int n_probe = 400;
  std::vector<double> probe(n_probe);
  for (int k = 0; k < n_probe; ++k)
    probe[size_t(k)] = t_cap * double(k + 1) / n_probe;
  auto pr = delay_ode_amplitudes(p, m, probe, /*lab_frame=*/false);
  const auto& pamp = (n == 1) ? pr.eps1 : pr.eps2;
  double peak = 0.0;
  for (const cplx& v : pamp) peak = std::max(peak, std::abs(v));
  const corr_key key{n == 1 ? lbl_c1 : lbl_c2, m == 1 ? lbl_c1dag : lbl_c2dag,
                     time_sign::plus};
  if (peak < 1e-14) return;  // identically dark channel needs no modes

  double t_end = t_cap;
  for (int k = n_probe - 1; k >= 0; --k) {
    if (std::abs(pamp[size_t(k)]) > 1e-4 * peak) {
      t_end = probe[size_t(std::min(k + 1, n_probe - 1))];
      break;
    }
    t_end = probe[size_t(k)];
  }

  const int n_samp = 2048;
  std::vector<double> tg(n_samp);
  for (int k = 0; k < n_samp; ++k)
    tg[size_t(k)] = t_end * double(k) / (n_samp - 1);
  auto tr = delay_ode_amplitudes(p, m, tg, /*lab_frame=*/false);
  const auto& amp = (n == 1) ? tr.eps1 : tr.eps2;

  fit_options fo;
  fo.n_terms = n_terms;
  fit_result fit = fit_exponentials(tg, amp, fo);
  if (fit.terms.empty())
    throw std::runtime_error("scenario: exponential fit for <" + key.first +
                             "(t) " + key.second + "> produced no terms: " +
                             fit.note);
  for (const auto& term : fit.terms)
    set.add_term(key, {term.w, term.omega + p.omega0(),
                       term.gamma + broadening_of(p, n, m)});
  const std::string tag = "fit_" + key.first + "_" + key.second;
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", fit.rel_residual);
  set.metadata[tag + "_residual"] = buf;
  if (!fit.note.empty()) set.metadata[tag + "_note"] = fit.note;
}

correlation_set fit_file_correlations(const scenario_config& cfg) {
  correlation_set set;
  set.set_adjoint(lbl_c1, lbl_c1dag);
  set.set_adjoint(lbl_c2, lbl_c2dag);
  for (const auto& cf : cfg.corr_files) {
    csv_table t = read_csv(cf.path);
    require(t.columns == std::vector<std::string>({"t", "re", "im"}),
            "sampled correlation file '" + cf.path +
                "' must have columns t,re,im");
    std::vector<double> tg;
    std::vector<cplx> f;
    tg.reserve(t.rows.size());
    f.reserve(t.rows.size());
    for (const auto& row : t.rows) {
      tg.push_back(row[0]);
      f.push_back(cplx(row[1], row[2]));
    }
    fit_options fo;
    fo.n_terms = cfg.n_terms;
    fit_result fit = fit_exponentials(tg, f, fo);
    if (fit.terms.empty())
      throw std::runtime_error("scenario: fit of '" + cf.path +
                               "' produced no terms: " + fit.note);
    const corr_key key{cf.first, cf.second, time_sign::plus};
    for (const auto& term : fit.terms) set.add_term(key, term);
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6g", fit.rel_residual);
    set.metadata["fit_" + cf.first + "_" + cf.second + "_residual"] = buf;
  }
  set.time_reverse_close();
  set.metadata["method"] = "fit_files";
  // sampled files are interpreted in the simulation frame already
  return set;
}

}  // namespace

correlation_set scenario_correlations(const scenario_config& cfg) {
  const waveguide_params& p = cfg.bath;
  if (cfg.method == "fit" && !cfg.corr_files.empty())
    return fit_file_correlations(cfg);

  correlation_set set;
  if (cfg.method == "case1") {
    set = case1_correlations(p);
  } else if (cfg.method == "case2") {
    pole_window w = cfg.window.set
                        ? pole_window{cfg.window.re_min, cfg.window.re_max,
                                      cfg.window.im_min, cfg.window.im_max,
                                      cfg.window.nx, cfg.window.ny}
                        : case2_window(p, cfg.n_poles);
    pole_set ps = find_poles(p, w);
    require(int(ps.s.size()) >= cfg.n_poles,
            "pole search found " + std::to_string(ps.s.size()) +
                " roots, fewer than the requested " +
                std::to_string(cfg.n_poles));
    ps = keep_poles(std::move(ps), cfg.n_poles);
    set = case2_correlations(p, ps, cfg.n_self_terms);
  } else {
    set.set_adjoint(lbl_c1, lbl_c1dag);
    set.set_adjoint(lbl_c2, lbl_c2dag);
    for (int n = 1; n <= 2; ++n)
      for (int m = 1; m <= 2; ++m) add_fitted_entry(set, p, n, m, cfg.n_terms);
    set.time_reverse_close();
    set.metadata["method"] = "fit";
  }
  set.shift_frame(frame_omega(cfg));
  return set;
}

model_spec scenario_model(const scenario_config& cfg) {
  const system_spec sys = scenario_system(cfg, frame_omega(cfg));
  const correlation_set corr = scenario_correlations(cfg);
  model_spec m = build_system_model(sys, corr);
  m.rho0 = initial_rho(cfg);

  // occupation readout <c^+ c> = Tr[c rho c^+]: annihilation applied on the
  // left, creation on the right, then the vacuum-block trace
  std::vector<std::string> outs = cfg.outputs;
  std::sort(outs.begin(), outs.end());
  outs.erase(std::unique(outs.begin(), outs.end()), outs.end());
  for (const std::string& label : outs) {
    attach_output_field(m, "phi_" + label, /*left_side=*/true);
    attach_output_field(m, "phi_" + label + "dag", /*left_side=*/false);
  }
  for (const auto& ic : cfg.inputs)
    attach_input_field(m, "phi_" + ic.label, ic.left_side, ic.amplitude);
  return m;
}

// ---------------------------------------------------------------------------
// corr / poles / fit

command_result cmd_corr(const scenario_config& cfg, const std::string& out) {
  ensure_dir(out);
  command_result r;
  correlation_set set = scenario_correlations(cfg);
  const std::vector<double> grid = linspace(cfg.t_max, cfg.samples);

  std::vector<std::pair<std::string, std::vector<double>>> plot;
  for (const auto& [key, entry] : set.entries()) {
    const std::string stem =
        key.first + "_" + key.second + "_" + sign_name(key.sign);

    csv_table terms;
    terms.meta = base_meta(cfg, "corr");
    terms.meta.insert(set.metadata.begin(), set.metadata.end());
    terms.meta["first"] = key.first;
    terms.meta["second"] = key.second;
    terms.meta["sign"] = sign_name(key.sign);
    terms.meta["from_closure"] = entry.from_closure ? "true" : "false";
    terms.columns = {"re_w", "im_w", "omega", "gamma"};
    for (const auto& t : entry.terms)
      terms.rows.push_back({t.w.real(), t.w.imag(), t.omega, t.gamma});
    emit_table(r, out, "terms_" + stem + ".csv", terms);

    csv_table samp;
    samp.meta = terms.meta;
    samp.columns = {"t", "re", "im"};
    std::vector<double> re_series;
    for (double t : grid) {
      const cplx v = set.eval(key, t);
      samp.rows.push_back({t, v.real(), v.imag()});
      re_series.push_back(v.real());
    }
    emit_table(r, out, "corr_" + stem + ".csv", samp);
    if (key.sign == time_sign::plus)
      plot.emplace_back(key.first + "·" + key.second, std::move(re_series));
  }

  if (cfg.svg && !plot.empty()) {
    const std::string path = join_path(out, "corr.svg");
    write_svg_lines(path, "bath correlations (Re, frame omega_r)", grid, plot);
    r.files.push_back(path);
  }

  char buf[160];
  std::snprintf(buf, sizeof buf,
                "%zu correlation entries (%s); C_{11}(0) = %.6g",
                set.entries().size(),
                set.metadata.count("method") ? set.metadata.at("method").c_str()
                                             : cfg.method.c_str(),
                set.eval({lbl_c1, lbl_c1dag, time_sign::plus}, 0.0).real());
  r.summary = buf;
  return r;
}

command_result cmd_poles(const scenario_config& cfg, const std::string& out) {
  ensure_dir(out);
  command_result r;
  const waveguide_params& p = cfg.bath;
  pole_window w =
      cfg.window.set
          ? pole_window{cfg.window.re_min, cfg.window.re_max, cfg.window.im_min,
                        cfg.window.im_max, cfg.window.nx, cfg.window.ny}
          : (cfg.method == "case2" ? case2_window(p, cfg.n_poles)
                                   : default_pole_window(p));
  pole_set ps = find_poles(p, w);
  if (cfg.method == "case2" && int(ps.s.size()) > cfg.n_poles)
    ps = keep_poles(std::move(ps), cfg.n_poles);
  add_residues(p, ps, 1);
  add_residues(p, ps, 2);

  auto meta = base_meta(cfg, "poles");
  meta["re_min"] = format_g17(w.re_min);
  meta["re_max"] = format_g17(w.re_max);
  meta["im_min"] = format_g17(w.im_min);
  meta["im_max"] = format_g17(w.im_max);
  meta["n_roots"] = std::to_string(ps.s.size());
  if (cfg.method == "case1") {
    try {
      auto [s1, s2] = case1_poles(p);
      meta["closed_form_s1"] =
          format_g17(s1.real()) + "+" + format_g17(s1.imag()) + "j";
      meta["closed_form_s2"] =
          format_g17(s2.real()) + "+" + format_g17(s2.imag()) + "j";
    } catch (const std::exception&) {
      meta["closed_form_note"] = "degenerate pair";
    }
  }

  csv_table poles;
  poles.meta = meta;
  poles.columns = {"re_s", "im_s"};
  for (const cplx& s : ps.s) poles.rows.push_back({s.real(), s.imag()});
  emit_table(r, out, "poles.csv", poles);

  csv_table grid;
  grid.meta = meta;
  grid.columns = {"re_s", "im_s", "log10_absF"};
  grid.rows.reserve(size_t(w.nx) * size_t(w.ny));
  for (int iy = 0; iy < w.ny; ++iy) {
    const double im = w.im_min + (w.im_max - w.im_min) * iy / (w.ny - 1);
    for (int ix = 0; ix < w.nx; ++ix) {
      const double re = w.re_min + (w.re_max - w.re_min) * ix / (w.nx - 1);
      const double absf = std::abs(transcendental_F(p, cplx(re, im)));
      grid.rows.push_back({re, im, std::log10(std::max(absf, 1e-300))});
    }
  }
  emit_table(r, out, "fgrid.csv", grid);

  for (int obs = 1; obs <= 2; ++obs)
    for (int init = 1; init <= 2; ++init) {
      const auto& wts = ps.residue_weights.at({obs, init});
      csv_table wt;
      wt.meta = meta;
      wt.meta["observed_cavity"] = std::to_string(obs);
      wt.meta["initial_cavity"] = std::to_string(init);
      wt.columns = {"re_s", "im_s", "re_w", "im_w"};
      for (size_t k = 0; k < ps.s.size(); ++k)
        wt.rows.push_back({ps.s[k].real(), ps.s[k].imag(), wts[k].real(),
                           wts[k].imag()});
      emit_table(r, out,
                 "weights_obs" + std::to_string(obs) + "_init" +
                     std::to_string(init) + ".csv",
                 wt);
    }

  char buf[160];
  std::snprintf(buf, sizeof buf,
                "%zu roots in [%.3g, %.3g] x [%.3g, %.3g]i", ps.s.size(),
                w.re_min, w.re_max, w.im_min, w.im_max);
  r.summary = buf;
  return r;
}

command_result cmd_fit(const scenario_config& cfg, const std::string& out) {
  ensure_dir(out);
  command_result r;
  const waveguide_params& p = cfg.bath;
  correlation_set set = scenario_correlations(cfg);
  const double w0 = p.omega0(), wr = frame_omega(cfg);
  const std::vector<double> grid = linspace(cfg.t_max, cfg.samples);
  const bool from_files = cfg.method == "fit" && !cfg.corr_files.empty();

  std::ostringstream summary;
  summary << "decomposition quality (sup deviation / max |reference|):";
  for (const auto& [key, entry] : set.entries()) {
    if (key.sign != time_sign::plus) continue;
    const int n = cavity_of_label(key.first);
    const int m = cavity_of_label(key.second);

    std::vector<double> tg = grid;
    std::vector<cplx> ref;
    if (from_files) {
      const auto it =
          std::find_if(cfg.corr_files.begin(), cfg.corr_files.end(),
                       [&](const scenario_config::corr_file& cf) {
                         return cf.first == key.first && cf.second == key.second;
                       });
      if (it == cfg.corr_files.end()) continue;
      csv_table t = read_csv(it->path);
      tg.clear();
      for (const auto& row : t.rows) {
        tg.push_back(row[0]);
        ref.push_back(cplx(row[1], row[2]));
      }
    } else {
      auto ode = delay_ode_amplitudes(p, m, tg, /*lab_frame=*/false);
      const auto& amp = (n == 1) ? ode.eps1 : ode.eps2;
      const double b = broadening_of(p, n, m);
      ref.resize(tg.size());
      for (size_t k = 0; k < tg.size(); ++k)
        ref[k] = amp[k] * std::exp(-(iu * (w0 - wr) + b) * tg[k]);
    }

    const double dev = reconstruction_error(set, key, tg, ref);
    csv_table t;
    t.meta = base_meta(cfg, "fit");
    t.meta["first"] = key.first;
    t.meta["second"] = key.second;
    t.meta["rel_deviation"] = format_g17(dev);
    t.meta["reference"] = from_files ? "sampled_file" : "delay_ode";
    t.columns = {"t", "data_re", "data_im", "recon_re", "recon_im"};
    for (size_t k = 0; k < tg.size(); ++k) {
      const cplx v = set.eval(key, tg[k]);
      t.rows.push_back({tg[k], ref[k].real(), ref[k].imag(), v.real(),
                        v.imag()});
    }
    emit_table(r, out, "fit_" + key.first + "_" + key.second + ".csv", t);

    csv_table terms;
    terms.meta = t.meta;
    terms.columns = {"re_w", "im_w", "omega", "gamma"};
    for (const auto& term : entry.terms)
      terms.rows.push_back(
          {term.w.real(), term.w.imag(), term.omega, term.gamma});
    emit_table(r, out, "terms_" + key.first + "_" + key.second + ".csv", terms);

    char buf[96];
    std::snprintf(buf, sizeof buf, " <%s|%s> %.3e;", key.first.c_str(),
                  key.second.c_str(), dev);
    summary << buf;
  }
  r.summary = summary.str();
  return r;
}

// ---------------------------------------------------------------------------
// build

command_result cmd_build(const scenario_config& cfg, const std::string& out) {
  ensure_dir(out);
  command_result r;
  model_spec m = scenario_model(cfg);

  {
    const std::string path = join_path(out, "model.json");
    std::ofstream f(path, std::ios::binary);
    require(bool(f), "cannot write '" + path + "'");
    f << model_to_json(m);
    r.files.push_back(path);
  }

  const mode_counts counts = count_modes(m);
  int n_right = 0, n_left = 0;
  for (const auto& md : m.modes)
    (md.chi == chirality::right ? n_right : n_left)++;

  json audit;
  audit["config"] = config_hash(cfg);
  audit["d_s"] = m.system.dim;
  audit["system_dynamics_modes"] = counts.right_system + counts.left_system;
  audit["output_field_modes"] = counts.right_output + counts.left_output;
  audit["input_field_modes"] = counts.right_input + counts.left_input;
  audit["reused_output_attachments"] = counts.reuse_records;
  audit["total_modes"] = counts.total_modes();
  audit["right_chirality"] = n_right;
  audit["left_chirality"] = n_left;
  audit["tier_cap"] = cfg.tier;
  const auto space = enumerate_ados(n_right, n_left, cfg.tier);
  audit["hierarchy_keys"] = space->count();
  audit["hierarchy_dimension"] =
      space->count() * std::int64_t(m.system.dim) * m.system.dim;
  {
    const std::string path = join_path(out, "audit.json");
    std::ofstream f(path, std::ios::binary);
    require(bool(f), "cannot write '" + path + "'");
    f << audit.dump(2) << "\n";
    r.files.push_back(path);
  }

  char buf[256];
  std::snprintf(buf, sizeof buf,
                "%d system-dynamics modes, %d output-field modes, %d "
                "input-field modes (total %d: %d right / %d left); tier-%d "
                "hierarchy: %lld keys, dimension %lld",
                counts.right_system + counts.left_system,
                counts.right_output + counts.left_output,
                counts.right_input + counts.left_input, counts.total_modes(),
                n_right, n_left, cfg.tier,
                static_cast<long long>(space->count()),
                static_cast<long long>(space->count() * m.system.dim *
                                       m.system.dim));
  r.summary = buf;
  return r;
}

// ---------------------------------------------------------------------------
// simulate

namespace {

evolution scenario_evolution(const scenario_config& cfg, const model_spec& m) {
  if (cfg.engine == "tiered") return make_tier_evolution(m, cfg.tier);
  if (cfg.engine == "dense") return make_dense_evolution(m, cfg.truncation);
  require(cfg.method == "case1",
          "the lindblad engine needs the short-delay bath (method case1)");
  require(cfg.inputs.empty(),
          "the lindblad engine does not support input-field insertions");
  const system_spec sys = scenario_system(cfg, cfg.bath.omega0());
  assembled_op a =
      assemble_case1_lindblad(cfg.bath, sys, std::max(1, cfg.truncation));
  return make_doubled_evolution(std::move(a), initial_rho(cfg));
}

std::map<std::string, state_observable> occupation_functionals(
    const scenario_config& cfg, const model_spec& m, const evolution& ev) {
  std::map<std::string, state_observable> fns;
  std::vector<std::string> outs = cfg.outputs;
  std::sort(outs.begin(), outs.end());
  outs.erase(std::unique(outs.begin(), outs.end()), outs.end());
  if (cfg.engine == "lindblad") {
    // rebuild the assembly layout (cheap) so the mode-pair indexing used for
    // the number operators is the authoritative one
    const system_spec sys = scenario_system(cfg, cfg.bath.omega0());
    const space_layout lay =
        assemble_case1_lindblad(cfg.bath, sys, std::max(1, cfg.truncation))
            .layout;
    for (const std::string& label : outs) {
      const int factor = 1 + (label == lbl_c1 ? 0 : 1);
      const long dd = std::max(1, cfg.truncation) + 1;
      const Eigen::MatrixXcd num = raise_ladder(dd) * lower_ladder(dd);
      auto op = std::make_shared<sparse_super_op>(
          doubled_one_sided(lay, factor, num, /*left=*/true));
      auto red = ev.reduced;
      fns["n_" + label] = [op, red](const Eigen::VectorXcd& y) {
        return red((*op) * y).trace();
      };
    }
    return fns;
  }
  for (const std::string& label : outs) {
    const field_insertion lower = m.output("phi_" + label);
    const field_insertion raise = m.output("phi_" + label + "dag");
    auto ins = ev.insert;
    auto red = ev.reduced;
    fns["n_" + label] = [ins, red, lower, raise](const Eigen::VectorXcd& y) {
      return red(ins(ins(y, lower), raise)).trace();
    };
  }
  return fns;
}

}  // namespace

command_result cmd_simulate(const scenario_config& cfg,
                            const std::string& out) {
  ensure_dir(out);
  command_result r;
  model_spec m = scenario_model(cfg);
  evolution ev = scenario_evolution(cfg, m);

  std::map<std::string, Eigen::MatrixXcd> obs;
  obs["pop_e1"] = emitter_pop(1);
  obs["pop_e2"] = emitter_pop(2);
  obs["trace"] = Eigen::MatrixXcd::Identity(4, 4);
  std::map<std::string, state_observable> fns =
      occupation_functionals(cfg, m, ev);
  {
    auto red = ev.reduced;
    fns["herm_defect"] = [red](const Eigen::VectorXcd& y) {
      const Eigen::MatrixXcd rho = red(y);
      return cplx((rho - rho.adjoint()).cwiseAbs().maxCoeff(), 0.0);
    };
  }

  const std::vector<double> grid = linspace(cfg.t_max, cfg.samples);
  ode_options opt;
  opt.rtol = cfg.rtol;
  opt.atol = cfg.atol;
  trajectory tr = integrate(ev, grid, obs, fns, opt);

  csv_table t;
  t.meta = base_meta(cfg, "simulate");
  t.meta["engine"] = cfg.engine;
  t.meta["initial"] = cfg.initial;
  t.meta["dimension"] = std::to_string(ev.dim);
  t.meta["norm_factor_re"] = format_g17(ev.norm_factor.real());
  t.meta["norm_factor_im"] = format_g17(ev.norm_factor.imag());
  t.columns = {"t"};
  for (const auto& [name, series] : tr.observables) {
    t.columns.push_back(name + "_re");
    t.columns.push_back(name + "_im");
  }
  for (size_t k = 0; k < grid.size(); ++k) {
    std::vector<double> row{grid[k]};
    for (const auto& [name, series] : tr.observables) {
      row.push_back(series[k].real());
      row.push_back(series[k].imag());
    }
    t.rows.push_back(std::move(row));
  }
  emit_table(r, out, "trajectory.csv", t);

  if (cfg.svg) {
    std::vector<std::pair<std::string, std::vector<double>>> plot;
    for (const auto& [name, series] : tr.observables) {
      if (name == "trace" || name == "herm_defect") continue;
      std::vector<double> re(series.size());
      for (size_t k = 0; k < series.size(); ++k) re[k] = series[k].real();
      plot.emplace_back(name, std::move(re));
    }
    const std::string path = join_path(out, "trajectory.svg");
    write_svg_lines(path, "populations and occupations", grid, plot);
    r.files.push_back(path);
  }

  double trace_drift = 0.0, herm = 0.0;
  for (size_t k = 0; k < grid.size(); ++k) {
    trace_drift = std::max(
        trace_drift, std::abs(tr.observables.at("trace")[k] - cplx(1.0)));
    herm = std::max(herm, tr.observables.at("herm_defect")[k].real());
  }
  char buf[256];
  std::snprintf(buf, sizeof buf,
                "engine %s, dimension %lld; final pop_e1 = %.6g, pop_e2 = "
                "%.6g; max |trace - 1| = %.2e, max hermiticity defect = %.2e",
                cfg.engine.c_str(), static_cast<long long>(ev.dim),
                tr.observables.at("pop_e1").back().real(),
                tr.observables.at("pop_e2").back().real(), trace_drift, herm);
  r.summary = buf;
  return r;
}

// ---------------------------------------------------------------------------
// spectrum

command_result cmd_spectrum(const scenario_config& cfg,
                            const std::string& out) {
  ensure_dir(out);
  command_result r;
  require(cfg.method == "case1",
          "spectrum uses the short-delay reference dynamics (method case1)");
  require(cfg.pump_rate != 0.0,
          "spectrum needs an incoherent pump: set system.pump_rate (< 0 "
          "selects the default kappa_1/20)");
  require(cfg.inputs.empty(),
          "spectrum starts from the pumped steady state; input-field "
          "insertions are not supported here");

  const waveguide_params& p = cfg.bath;
  const system_spec sys = scenario_system(cfg, p.omega0());
  const int n_max = std::max(1, cfg.truncation);
  assembled_op a = assemble_case1_lindblad(p, sys, n_max);
  const space_layout lay = a.layout;
  evolution ev = make_doubled_evolution(std::move(a), initial_rho(cfg));

  ode_options opt;
  opt.rtol = cfg.rtol;
  opt.atol = cfg.atol;
  const Eigen::VectorXcd steady = steady_state(ev, cfg.steady_t_max, opt);

  const long d = n_max + 1;
  auto op_low = std::make_shared<sparse_super_op>(
      doubled_one_sided(lay, 2, lower_ladder(d), /*left=*/true));
  auto op_rai = std::make_shared<sparse_super_op>(
      doubled_one_sided(lay, 2, raise_ladder(d), /*left=*/true));
  state_map apply_b = [op_low](const Eigen::VectorXcd& y) {
    return (*op_low) * y;
  };
  state_map apply_a = [op_rai](const Eigen::VectorXcd& y) {
    return (*op_rai) * y;
  };

  const std::vector<double> tau = linspace(cfg.tau_max, cfg.tau_samples);
  const std::vector<cplx> series =
      two_time_correlation(ev, apply_a, apply_b, steady, tau, opt);
  spectrum_result spec = spectrum(series, tau, /*hann=*/false, /*zero_pad=*/4);

  // report the axis relative to the mean cavity frequency
  const double shift = p.omega0() - frame_omega(cfg);
  csv_table t;
  t.meta = base_meta(cfg, "spectrum");
  t.meta["pump_rate"] = format_g17(effective_pump(cfg));
  t.meta["n_max"] = std::to_string(n_max);
  t.meta["v2"] = format_g17(p.coupling_v(2));
  t.meta["decay_warning"] = spec.decay_warning ? "true" : "false";
  t.meta["steady_occupation_c2"] = format_g17(series.front().real());
  t.columns = {"omega", "S"};
  for (size_t k = 0; k < spec.omega.size(); ++k)
    t.rows.push_back({spec.omega[k] + shift, spec.s[k]});
  emit_table(r, out, "spectrum.csv", t);

  if (cfg.svg) {
    std::vector<double> x, y;
    for (size_t k = 0; k < spec.omega.size(); ++k) {
      const double w = spec.omega[k] + shift;
      if (w < -4.0 || w > 4.0) continue;
      x.push_back(w);
      y.push_back(spec.s[k]);
    }
    const std::string path = join_path(out, "spectrum.svg");
    write_svg_lines(path, "emission spectrum of cavity 2", x, {{"S", y}});
    r.files.push_back(path);
  }

  size_t peak = 0;
  for (size_t k = 1; k < spec.s.size(); ++k)
    if (spec.s[k] > spec.s[peak]) peak = k;
  char buf[256];
  std::snprintf(buf, sizeof buf,
                "pump %.4g, V2 = %.4g, steady <n_c2> = %.4g; peak S = %.4g at "
                "delta omega = %.4g%s",
                effective_pump(cfg), p.coupling_v(2), series.front().real(),
                spec.s[peak], spec.omega[peak] + shift,
                spec.decay_warning ? " (decay warning)" : "");
  r.summary = buf;
  return r;
}

// ---------------------------------------------------------------------------
// validate

namespace {

struct check_row {
  std::string name;
  double measured = 0.0;
  double bound = 0.0;
  bool pass = false;
  std::string note;
};

check_row make_check(const std::string& name, double measured, double bound,
                     const std::string& note = "") {
  check_row c;
  c.name = name;
  c.measured = measured;
  c.bound = bound;
  c.pass = measured <= bound;
  c.note = note;
  return c;
}

// a throwing check is reported as FAIL with the message, never aborts the run
void guarded(std::vector<check_row>& checks, const std::string& name,
             const std::function<check_row()>& fn) {
  try {
    checks.push_back(fn());
  } catch (const std::exception& e) {
    check_row c;
    c.name = name;
    c.measured = 1.0;
    c.bound = 0.0;
    c.note = e.what();
    checks.push_back(c);
  }
}

waveguide_params validate_bath() {
  waveguide_params p;  // defaults: resonant, 4 lambda0
  return p;
}

// qubit coupled to one complex-Lorentzian term: the shared small model for
// the equivalence checks
struct qubit_model {
  system_spec sys;
  correlation_set corr;
  double omega = 1.0, gamma = 0.3, lambda = 0.2;
};

qubit_model make_qubit_model() {
  qubit_model q;
  q.sys.dim = 2;
  Eigen::MatrixXcd sz = Eigen::MatrixXcd::Zero(2, 2);
  sz(0, 0) = 1.0;
  sz(1, 1) = -1.0;
  q.sys.h_s = 0.5 * sz;
  Eigen::MatrixXcd sx = Eigen::MatrixXcd::Zero(2, 2);
  sx(0, 1) = sx(1, 0) = 1.0;
  q.sys.couplings.push_back({"b", sx, "b"});
  q.corr.set_adjoint("b", "b");
  q.corr.add_term({"b", "b", time_sign::plus},
                  {q.lambda * q.lambda, q.omega, q.gamma});
  q.corr.time_reverse_close();
  return q;
}

Eigen::MatrixXcd excited_qubit() {
  Eigen::MatrixXcd rho = Eigen::MatrixXcd::Zero(2, 2);
  rho(0, 0) = 1.0;
  return rho;
}

}  // namespace

command_result cmd_validate(const scenario_config& cfg,
                            const std::string& out) {
  ensure_dir(out);
  command_result r;
  std::vector<check_row> checks;
  const waveguide_params p = validate_bath();

  // deterministic serialization and the reference hash vector
  guarded(checks, "csv_determinism_and_hash", [&]() -> check_row {
    csv_table t;
    t.meta["a"] = "1";
    t.columns = {"x", "y"};
    t.rows = {{0.1, 0.2}, {1.0 / 3.0, 2.0 / 3.0}};
    const bool stable = write_csv_string(t) == write_csv_string(t);
    const bool hash_ok = fnv1a64("a") == 0xaf63dc4c8601ec8cULL;
    return make_check("csv_determinism_and_hash",
                      (stable && hash_ok) ? 0.0 : 1.0, 0.0);
  });

  // closure is idempotent on the short-delay correlations
  guarded(checks, "closure_idempotent", [&]() -> check_row {
    correlation_set set = case1_correlations(p);
    const size_t before = set.entries().size();
    std::ostringstream s1, s2;
    for (const auto& [k, e] : set.entries())
      for (const auto& t : e.terms)
        s1 << to_string(k) << t.w << t.omega << t.gamma << ";";
    set.time_reverse_close();
    for (const auto& [k, e] : set.entries())
      for (const auto& t : e.terms)
        s2 << to_string(k) << t.w << t.omega << t.gamma << ";";
    const bool same = before == set.entries().size() && s1.str() == s2.str();
    return make_check("closure_idempotent", same ? 0.0 : 1.0, 0.0);
  });

  // single-photon normalization of the self correlation
  guarded(checks, "case1_weight_sum", [&]() -> check_row {
    correlation_set set = case1_correlations(p);
    const double dev =
        std::abs(set.eval({lbl_c1, lbl_c1dag, time_sign::plus}, 0.0) -
                 cplx(1.0));
    return make_check("case1_weight_sum", dev, 1e-12);
  });

  // closed-form roots solve the short-delay quadratic (the delay factor
  // e^{-2 s t_d} frozen at 1, the propagation phase kept)
  guarded(checks, "case1_pole_residual", [&]() -> check_row {
    auto [s1, s2] = case1_poles(p);
    const cplx cross =
        0.25 * p.kappa(1) * p.kappa(2) * std::exp(2.0 * iu * p.phase());
    double worst = 0.0;
    for (const cplx& s : {s1, s2}) {
      const cplx q = (s + p.z(1)) * (s + p.z(2)) - cross;
      worst = std::max(worst, std::abs(q) / std::max(1.0, std::norm(s)));
    }
    return make_check("case1_pole_residual", worst, 1e-12);
  });

  // closed-form decomposition matches direct integration of the delayed
  // amplitude equations; the closed form drops the retardation inside the
  // correlation, so its error scales with kappa*t_d -- checked well inside
  // the short-delay regime (one wavelength of separation)
  guarded(checks, "corr_vs_delay_ode", [&]() -> check_row {
    waveguide_params ps = p;
    ps.xd_wavelengths = 1.0;
    correlation_set set = case1_correlations(ps);
    const double t_end = 5.0 / ps.kappa(1);
    std::vector<double> tg = linspace(t_end, 101);
    double worst = 0.0;
    for (int init = 1; init <= 2; ++init) {
      auto ode = delay_ode_amplitudes(ps, init, tg, /*lab_frame=*/true);
      for (int n = 1; n <= 2; ++n) {
        const auto& amp = (n == 1) ? ode.eps1 : ode.eps2;
        std::vector<cplx> ref(tg.size());
        const double b = broadening_of(ps, n, init);
        for (size_t k = 0; k < tg.size(); ++k)
          ref[k] = amp[k] * std::exp(-b * tg[k]);
        const corr_key key{n == 1 ? lbl_c1 : lbl_c2,
                           init == 1 ? lbl_c1dag : lbl_c2dag, time_sign::plus};
        worst = std::max(worst, reconstruction_error(set, key, tg, ref));
      }
    }
    return make_check("corr_vs_delay_ode", worst, 1e-2);
  });

  // purified pair reproduces the conventional single-pseudomode equation
  // (exact identity; deviations are truncation + integration error only)
  guarded(checks, "purified_equals_conventional", [&]() -> check_row {
    qubit_model q = make_qubit_model();
    model_spec m = build_system_model(q.sys, q.corr);
    m.rho0 = excited_qubit();
    evolution pur = make_dense_evolution(m, 8);
    Eigen::MatrixXcd sx = q.sys.couplings[0].s;
    assembled_op conv =
        assemble_conventional_pm(q.sys, q.omega, q.gamma, q.lambda, sx, 8);
    evolution ref = make_doubled_evolution(std::move(conv), m.rho0);
    const std::vector<double> tg = linspace(10.0, 26);
    ode_options tight;
    tight.rtol = 1e-12;
    tight.atol = 1e-14;
    trajectory t1 = integrate(pur, tg, {{"p", excited_qubit()}}, tight);
    trajectory t2 = integrate(ref, tg, {{"p", excited_qubit()}}, tight);
    double worst = 0.0;
    for (size_t k = 0; k < tg.size(); ++k)
      worst = std::max(worst, std::abs(t1.observables.at("p")[k] -
                                       t2.observables.at("p")[k]));
    return make_check("purified_equals_conventional", worst, 1e-8);
  });

  // tiered propagation agrees with the dense assembly once both truncations
  // envelop the occupied configurations (total cap twice the per-mode cap
  // covers every per-mode-8 box configuration this weak drive reaches)
  guarded(checks, "tier_matches_dense", [&]() -> check_row {
    qubit_model q = make_qubit_model();
    model_spec m = build_system_model(q.sys, q.corr);
    m.rho0 = excited_qubit();
    evolution dense = make_dense_evolution(m, 8);
    evolution tier = make_tier_evolution(m, 16);
    const std::vector<double> tg = linspace(10.0, 11);
    ode_options tight;
    tight.rtol = 1e-12;
    tight.atol = 1e-14;
    trajectory t1 = integrate(dense, tg, {{"p", excited_qubit()}}, tight);
    trajectory t2 = integrate(tier, tg, {{"p", excited_qubit()}}, tight);
    double worst = 0.0;
    for (size_t k = 0; k < tg.size(); ++k)
      worst = std::max(worst, std::abs(t1.observables.at("p")[k] -
                                       t2.observables.at("p")[k]));
    return make_check("tier_matches_dense", worst, 1e-10);
  });

  // hierarchy sizes follow the occupancy combinatorics
  guarded(checks, "hierarchy_count", [&]() -> check_row {
    const bool ok = enumerate_ados(2, 2, 2)->count() == 15 &&
                    enumerate_ados(8, 8, 2)->count() == 153;
    return make_check("hierarchy_count", ok ? 0.0 : 1.0, 0.0);
  });

  // scenario presets for the remaining checks
  scenario_config photon = figure3_config('d');
  photon.bath = p;  // resonant variant keeps the check fast and parameter-free

  // prepared-photon weight equals the equal-time correlation value
  guarded(checks, "prepared_photon_weight", [&]() -> check_row {
    correlation_set set = scenario_correlations(photon);
    model_spec m = scenario_model(photon);
    evolution ev = make_tier_evolution(m, photon.tier);
    const double c0 =
        set.eval({lbl_c1, lbl_c1dag, time_sign::plus}, 0.0).real();
    const double dev = std::abs(ev.norm_factor - cplx(c0));
    return make_check("prepared_photon_weight", dev, 1e-10);
  });

  // trajectory invariants of the prepared-photon run
  guarded(checks, "photon_run_invariants", [&]() -> check_row {
    scenario_config run = photon;
    run.t_max = 5.0;
    run.samples = 51;
    run.svg = false;
    model_spec m = scenario_model(run);
    evolution ev = make_tier_evolution(m, run.tier);
    std::map<std::string, Eigen::MatrixXcd> obs;
    obs["trace"] = Eigen::MatrixXcd::Identity(4, 4);
    auto red = ev.reduced;
    std::map<std::string, state_observable> fns;
    fns["herm"] = [red](const Eigen::VectorXcd& y) {
      const Eigen::MatrixXcd rho = red(y);
      return cplx((rho - rho.adjoint()).cwiseAbs().maxCoeff(), 0.0);
    };
    trajectory tr = integrate(ev, linspace(run.t_max, run.samples), obs, fns);
    double worst = 0.0;
    for (size_t k = 0; k < tr.times.size(); ++k) {
      worst = std::max(worst,
                       std::abs(tr.observables.at("trace")[k] - cplx(1.0)));
      worst = std::max(worst, tr.observables.at("herm")[k].real());
    }
    return make_check("photon_run_invariants", worst, 1e-6);
  });

  // the generator preserves the excitation grading of the hierarchy
  guarded(checks, "excitation_grading", [&]() -> check_row {
    scenario_config run;  // resonant 4 lambda0, emitter 1 excited
    model_spec m = scenario_model(run);
    std::vector<int> slot_is_right;  // slot order: right modes, then left
    for (const auto& md : m.modes)
      if (md.chi == chirality::right) slot_is_right.push_back(1);
    for (const auto& md : m.modes)
      if (md.chi == chirality::left) slot_is_right.push_back(0);
    const int n_right = int(
        std::count(slot_is_right.begin(), slot_is_right.end(), 1));
    auto space = enumerate_ados(n_right,
                                int(slot_is_right.size()) - n_right, 2);
    heom_state st = heom_initial_state(m, space);
    heom_state ds = heom_rhs(m, st);
    // the source state is pure grade (1, 1): every derivative block entry
    // must stay in that grade
    double leak = 0.0, scale = 0.0;
    for (std::int64_t k = 0; k < space->count(); ++k) {
      const std::vector<int> occ = space->occupations(k);
      int ket_mode = 0, bra_mode = 0;
      for (size_t s = 0; s < occ.size(); ++s)
        (slot_is_right[s] ? ket_mode : bra_mode) += occ[s];
      const auto blk = ds.block(k);
      for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) {
          const double mag = std::abs(blk(i, j));
          scale = std::max(scale, mag);
          if (emitter_excitation(i) + ket_mode != 1 ||
              emitter_excitation(j) + bra_mode != 1)
            leak = std::max(leak, mag);
        }
    }
    return make_check("excitation_grading", leak / std::max(scale, 1e-300),
                      1e-12);
  });

  // direct and integrated steady states agree on a pumped two-level system
  guarded(checks, "steady_state_dual", [&]() -> check_row {
    system_spec sys;
    sys.dim = 2;
    sys.h_s = Eigen::MatrixXcd::Zero(2, 2);
    const double gamma = 0.4, gp = 0.12;
    Eigen::MatrixXcd sm = sigma_minus_1q();
    sys.lindblads.push_back({sm, gamma});
    sys.lindblads.push_back({sm.adjoint(), gp});
    Eigen::MatrixXcd init = Eigen::MatrixXcd::Zero(2, 2);
    init(1, 1) = 1.0;  // excited (index 1; the lowering operator maps 1 -> 0)
    assembled_op a = assemble_conventional_pm(
        sys, 1.0, 1.0, 0.0, Eigen::MatrixXcd::Zero(2, 2), 1);
    evolution ev = make_doubled_evolution(std::move(a), init);
    const Eigen::VectorXcd direct = steady_state(ev);
    evolution by_time = ev;
    by_time.matrix.reset();  // force the integration route
    ode_options tight;
    tight.rtol = 1e-12;
    tight.atol = 1e-14;
    const Eigen::VectorXcd integ = steady_state(by_time, 1e4, tight);
    const double dev_vec = (direct - integ).norm();
    const double pop = ev.reduced(direct)(1, 1).real();
    const double dev_pop = std::abs(pop - gp / (gp + gamma));
    return make_check("steady_state_dual",
                      std::max(dev_vec / 1e-6 * 1e-8, dev_pop), 1e-8,
                      "pump/(pump+decay) balance");
  });

  // spectrum of a single oscillating exponential peaks at its frequency
  guarded(checks, "spectrum_kernel", [&]() -> check_row {
    const double wb = 1.3, gb = 0.21;
    const std::vector<double> tau = linspace(60.0, 6001);
    std::vector<cplx> series(tau.size());
    for (size_t k = 0; k < tau.size(); ++k)
      series[k] = std::exp((iu * wb - gb) * tau[k]);
    spectrum_result spec = spectrum(series, tau);
    size_t peak = 0;
    for (size_t k = 1; k < spec.s.size(); ++k)
      if (spec.s[k] > spec.s[peak]) peak = k;
    const double dw = spec.omega[1] - spec.omega[0];
    const double loc = std::abs(spec.omega[peak] - wb) / dw;
    const double height = std::abs(spec.s[peak] - 2.0 / gb) / (2.0 / gb);
    return make_check("spectrum_kernel", std::max(loc, height / 0.02), 1.0,
                      "peak location (grid units) and height");
  });

  // the constructed model survives a serialization round trip
  guarded(checks, "model_json_roundtrip", [&]() -> check_row {
    model_spec m = scenario_model(photon);
    const std::string once = model_to_json(m);
    const std::string twice = model_to_json(model_from_json(once));
    return make_check("model_json_roundtrip", once == twice ? 0.0 : 1.0, 0.0);
  });

  // report
  json rep;
  rep["config"] = config_hash(cfg);
  json arr = json::array();
  std::ostringstream lines;
  bool all = true;
  for (const auto& c : checks) {
    all = all && c.pass;
    json jc = {{"name", c.name},
               {"pass", c.pass},
               {"measured", c.measured},
               {"bound", c.bound}};
    if (!c.note.empty()) jc["note"] = c.note;
    arr.push_back(jc);
    char buf[160];
    std::snprintf(buf, sizeof buf, "%s %-32s measured %.3e bound %.3e\n",
                  c.pass ? "PASS" : "FAIL", c.name.c_str(), c.measured,
                  c.bound);
    lines << buf;
  }
  rep["checks"] = arr;
  rep["all_pass"] = all;
  {
    const std::string path = join_path(out, "validate.json");
    std::ofstream f(path, std::ios::binary);
    require(bool(f), "cannot write '" + path + "'");
    f << rep.dump(2) << "\n";
    r.files.push_back(path);
  }
  lines << (all ? "all checks passed" : "SOME CHECKS FAILED");
  r.summary = lines.str();
  r.ok = all;
  return r;
}

// ---------------------------------------------------------------------------
// figure presets

scenario_config figure3_config(char panel, double xd_override) {
  scenario_config c;
  auto detuned = [&] {
    c.bath.lambda_c_nm[0] = 945.0;
    c.bath.lambda_c_nm[1] = 945.76;
    c.bath.lambda_e_nm[0] = 944.62;
    c.bath.lambda_e_nm[1] = 945.38;
  };
  switch (panel) {
    case 'a':
      c.method = "case1";
      c.initial = "e1";
      break;
    case 'b':
      c.bath.xd_wavelengths = xd_override > 0 ? xd_override : 4.0;
      c.method = c.bath.xd_wavelengths <= 100.0 ? "case1" : "case2";
      c.initial = "e1";
      c.outputs = {lbl_c1, lbl_c2};
      c.samples = 801;
      break;
    case 'c':
      c.bath.xd_wavelengths = xd_override > 0 ? xd_override : 1500.0;
      c.method = c.bath.xd_wavelengths <= 100.0 ? "case1" : "case2";
      c.initial = "both";
      c.outputs = {lbl_c1, lbl_c2};
      break;
    case 'd':
      detuned();
      c.method = "case1";
      c.initial = "ground";
      c.inputs = {{lbl_c1dag, /*left_side=*/true, 1.0},
                  {lbl_c1, /*left_side=*/false, 1.0}};
      c.outputs = {lbl_c1, lbl_c2};
      c.samples = 801;
      break;
    case 'e':
      detuned();
      c.method = "case1";
      c.initial = "ground";
      c.pump_rate = -1.0;  // default incoherent drive
      break;
    default:
      require(false, std::string("unknown figure panel '") + panel + "'");
  }
  if (xd_override > 0) c.bath.xd_wavelengths = xd_override;
  c.out_dir = std::string("out/figure3_") + panel;
  return c;
}

command_result cmd_figure3(char panel, double xd_override,
                           const std::string& out) {
  const scenario_config cfg = figure3_config(panel, xd_override);
  const std::string dir = out.empty() ? cfg.out_dir : out;
  auto merge = [](command_result& into, command_result part) {
    into.files.insert(into.files.end(), part.files.begin(), part.files.end());
    if (!into.summary.empty()) into.summary += "\n";
    into.summary += part.summary;
    into.ok = into.ok && part.ok;
  };
  command_result r;
  switch (panel) {
    case 'a':
      merge(r, cmd_corr(cfg, dir));
      merge(r, cmd_poles(cfg, dir));
      merge(r, cmd_build(cfg, dir));
      break;
    case 'b': {
      merge(r, cmd_simulate(cfg, dir));
      if (cfg.method == "case1") {
        scenario_config ref = cfg;
        ref.engine = "lindblad";
        merge(r, cmd_simulate(ref, join_path(dir, "lindblad_ref")));
      }
      break;
    }
    case 'c':
      merge(r, cmd_simulate(cfg, dir));
      break;
    case 'd':
      merge(r, cmd_build(cfg, dir));
      merge(r, cmd_simulate(cfg, dir));
      break;
    case 'e': {
      merge(r, cmd_spectrum(cfg, join_path(dir, "v2_on")));
      scenario_config off = cfg;
      off.bath.v_override[1] = 0.0;
      merge(r, cmd_spectrum(off, join_path(dir, "v2_off")));
      break;
    }
    default:
      require(false, std::string("unknown figure panel '") + panel + "'");
  }
  return r;
}

}  // namespace purimode
