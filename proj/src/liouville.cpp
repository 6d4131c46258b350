#include "purimode/liouville.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace purimode {

namespace {

void check(bool cond, const std::string& msg) {
  if (!cond) throw std::runtime_error("liouville: " + msg);
}

std::vector<std::int64_t> factor_dims(const space_layout& lay) {
  std::vector<std::int64_t> dims;
  dims.reserve(2 + lay.n_max.size());
  dims.push_back(lay.d_s);
  dims.push_back(lay.d_s);
  for (int n : lay.n_max) {
    check(n >= 1, "mode truncation must be >= 1");
    dims.push_back(std::int64_t(n) + 1);
  }
  return dims;
}

}  // namespace

std::int64_t space_layout::dim() const {
  std::int64_t d = 1;
  for (std::int64_t f : factor_dims(*this)) d *= f;
  return d;
}

std::vector<std::int64_t> space_layout::strides() const {
  const auto dims = factor_dims(*this);
  std::vector<std::int64_t> st(dims.size());
  std::int64_t acc = 1;
  for (int i = int(dims.size()) - 1; i >= 0; --i) {
    st[size_t(i)] = acc;
    acc *= dims[size_t(i)];
  }
  return st;
}

std::int64_t space_layout::index(int s_ket, int s_bra,
                                 const std::vector<int>& occ) const {
  check(occ.size() == n_max.size(), "occupation list length mismatch");
  const auto st = strides();
  std::int64_t idx = s_ket * st[0] + s_bra * st[1];
  for (size_t k = 0; k < occ.size(); ++k) {
    check(occ[k] >= 0 && occ[k] <= n_max[k], "occupation out of range");
    idx += occ[k] * st[k + 2];
  }
  return idx;
}

void sparse_super_op::add(std::int64_t r, std::int64_t c, cplx v) {
  check(r >= 0 && r < dimension && c >= 0 && c < dimension,
        "entry outside matrix");
  check(std::isfinite(v.real()) && std::isfinite(v.imag()),
        "non-finite matrix entry");
  if (v == cplx(0.0)) return;
  row.push_back(r);
  col.push_back(c);
  val.push_back(v);
}

void sparse_super_op::apply(const Eigen::VectorXcd& y,
                            Eigen::VectorXcd& out) const {
  check(y.size() == dimension, "state dimension mismatch");
  out.setZero(dimension);
  for (size_t k = 0; k < val.size(); ++k)
    out[row[k]] += val[k] * y[col[k]];
}

Eigen::VectorXcd sparse_super_op::operator*(const Eigen::VectorXcd& y) const {
  Eigen::VectorXcd out;
  apply(y, out);
  return out;
}

Eigen::MatrixXcd sparse_super_op::dense() const {
  Eigen::MatrixXcd m = Eigen::MatrixXcd::Zero(dimension, dimension);
  for (size_t k = 0; k < val.size(); ++k) m(row[k], col[k]) += val[k];
  return m;
}

namespace {

Eigen::MatrixXcd lower_ladder(std::int64_t dim) {
  Eigen::MatrixXcd m = Eigen::MatrixXcd::Zero(dim, dim);
  for (std::int64_t n = 0; n + 1 < dim; ++n)
    m(n, n + 1) = std::sqrt(double(n + 1));
  return m;
}

Eigen::MatrixXcd raise_ladder(std::int64_t dim) {
  return lower_ladder(dim).transpose();
}

Eigen::MatrixXcd number_op(std::int64_t dim) {
  Eigen::MatrixXcd m = Eigen::MatrixXcd::Zero(dim, dim);
  for (std::int64_t n = 0; n < dim; ++n) m(n, n) = double(n);
  return m;
}

void mul_into(Eigen::MatrixXcd& slot, const Eigen::MatrixXcd& m) {
  slot = slot.size() ? Eigen::MatrixXcd(slot * m) : m;
}

// scatter coeff * kron(mats) into the sparse op; a 0-size matrix stands for
// the identity on that factor
void scatter(sparse_super_op& op, const std::vector<std::int64_t>& dims,
             const std::vector<std::int64_t>& st, cplx coeff,
             const std::vector<Eigen::MatrixXcd>& mats) {
  const int nf = int(dims.size());
  auto rec = [&](auto&& self, int f, std::int64_t r, std::int64_t c,
                 cplx v) -> void {
    if (f == nf) {
      op.add(r, c, coeff * v);
      return;
    }
    const auto& m = mats[size_t(f)];
    if (m.size() == 0) {
      for (std::int64_t i = 0; i < dims[size_t(f)]; ++i)
        self(self, f + 1, r + i * st[size_t(f)], c + i * st[size_t(f)], v);
      return;
    }
    check(m.rows() == dims[size_t(f)] && m.cols() == dims[size_t(f)],
          "factor matrix dimension mismatch");
    for (std::int64_t i = 0; i < m.rows(); ++i)
      for (std::int64_t j = 0; j < m.cols(); ++j)
        if (m(i, j) != cplx(0.0))
          self(self, f + 1, r + i * st[size_t(f)], c + j * st[size_t(f)],
               v * m(i, j));
  };
  if (coeff != cplx(0.0)) rec(rec, 0, 0, 0, cplx(1.0));
}

// accumulate the per-layout-factor matrices of one coeff * (left) rho
// (right) term on a purified layout and scatter it
void add_purified_term(sparse_super_op& op, const space_layout& lay,
                       const std::vector<std::int64_t>& dims,
                       const std::vector<std::int64_t>& st,
                       const model_spec& model, const super_term& t,
                       cplx coeff_scale) {
  const int n_modes = int(lay.n_max.size());
  std::vector<Eigen::MatrixXcd> mats(size_t(2 + n_modes));

  auto sys_matrix = [&](const std::string& label) -> const Eigen::MatrixXcd& {
    const coupling_spec* c = model.system.find_coupling(label);
    check(c != nullptr, "unresolved system operator label '" + label + "'");
    return c->s;
  };
  auto ladder = [&](int mode_id, bool raise) {
    check(mode_id >= 0 && mode_id < n_modes,
          "factor references a mode absent from the layout");
    const std::int64_t d = lay.n_max[size_t(mode_id)] + 1;
    return raise ? raise_ladder(d) : lower_ladder(d);
  };

  for (const op_factor& f : t.left) {
    if (!f.is_mode) {
      mul_into(mats[0], sys_matrix(f.sys_label));
    } else {
      check(model.mode(f.mode_id).chi == chirality::right,
            "left-chirality mode used as a left factor");
      mul_into(mats[size_t(2 + f.mode_id)], ladder(f.mode_id, f.raise_op));
    }
  }
  Eigen::MatrixXcd bra;
  std::vector<Eigen::MatrixXcd> mode_r(static_cast<size_t>(n_modes));
  for (const op_factor& f : t.right) {
    if (!f.is_mode) {
      mul_into(bra, sys_matrix(f.sys_label));
    } else {
      check(model.mode(f.mode_id).chi == chirality::left,
            "right-chirality mode used as a right factor");
      mul_into(mode_r[size_t(f.mode_id)], ladder(f.mode_id, f.raise_op));
    }
  }
  if (bra.size()) mats[1] = bra.transpose();
  for (int k = 0; k < n_modes; ++k) {
    if (!mode_r[size_t(k)].size()) continue;
    check(mats[size_t(2 + k)].size() == 0,
          "mode factor touched from both sides");
    mats[size_t(2 + k)] = mode_r[size_t(k)].transpose();
  }
  scatter(op, dims, st, coeff_scale * t.coeff, mats);
}

// dissipator rate * (l rho l^+ - {l^+ l, rho}/2) on the system factor of any
// layout kind
void add_system_lindblad(sparse_super_op& op,
                         const std::vector<std::int64_t>& dims,
                         const std::vector<std::int64_t>& st,
                         const Eigen::MatrixXcd& l, double rate,
                         size_t n_factors) {
  std::vector<Eigen::MatrixXcd> mats(n_factors);
  mats[0] = l;
  mats[1] = l.conjugate();  // (l^+)^T acting on the bra factor
  scatter(op, dims, st, rate, mats);
  const Eigen::MatrixXcd ll = l.adjoint() * l;
  mats.assign(n_factors, {});
  mats[0] = ll;
  scatter(op, dims, st, -0.5 * rate, mats);
  mats.assign(n_factors, {});
  mats[1] = ll.transpose();
  scatter(op, dims, st, -0.5 * rate, mats);
}

}  // namespace

assembled_op assemble_purified(const model_spec& model,
                               const std::vector<int>& truncations) {
  check(truncations.size() == model.modes.size(),
        "one truncation per mode required");
  assembled_op out;
  out.layout.d_s = model.system.dim;
  out.layout.n_max = truncations;
  out.layout.doubled = false;
  const auto dims = factor_dims(out.layout);
  const auto st = out.layout.strides();
  out.op.dimension = out.layout.dim();

  for (const super_term& t : model.generator)
    add_purified_term(out.op, out.layout, dims, st, model, t, -iu);

  std::vector<Eigen::MatrixXcd> mats(dims.size());
  mats[0] = model.system.h_s;
  scatter(out.op, dims, st, -iu, mats);
  mats.assign(dims.size(), {});
  mats[1] = model.system.h_s.transpose();
  scatter(out.op, dims, st, iu, mats);

  for (const lindblad_spec& l : model.system.lindblads)
    add_system_lindblad(out.op, dims, st, l.op, l.rate, dims.size());
  return out;
}

assembled_op assemble_purified(const model_spec& model, int truncation) {
  return assemble_purified(
      model, std::vector<int>(model.modes.size(), truncation));
}

namespace {

// doubled layouts: one Hilbert factor h maps to layout factors (ket, bra);
// h = 0 is the system, h = 1 + k the k-th mode pair
struct doubled_assembler {
  space_layout layout;
  std::vector<std::int64_t> dims, st;
  sparse_super_op* op = nullptr;

  // coeff * (prod A_h) rho (prod B_h); each list gives (hilbert factor,
  // matrix) products in operator order
  void add(cplx coeff,
           const std::vector<std::pair<int, Eigen::MatrixXcd>>& a,
           const std::vector<std::pair<int, Eigen::MatrixXcd>>& b) {
    std::vector<Eigen::MatrixXcd> mats(dims.size());
    for (const auto& [h, m] : a) mul_into(mats[size_t(2 * h)], m);
    std::vector<Eigen::MatrixXcd> bra(dims.size() / 2);
    for (const auto& [h, m] : b) mul_into(bra[size_t(h)], m);
    for (size_t h = 0; h < bra.size(); ++h)
      if (bra[h].size()) mats[2 * h + 1] = bra[h].transpose();
    scatter(*op, dims, st, coeff, mats);
  }

  void add_lindblad(int h, const Eigen::MatrixXcd& l, double rate) {
    add(rate, {{h, l}}, {{h, l.adjoint()}});
    const Eigen::MatrixXcd ll = l.adjoint() * l;
    add(-0.5 * rate, {{h, ll}}, {});
    add(-0.5 * rate, {}, {{h, ll}});
  }

  // -i [H_part, rho] with the SAME (possibly non-Hermitian) coefficient on
  // both sides, as analytic continuation requires
  void add_commutator(cplx coeff,
                      const std::vector<std::pair<int, Eigen::MatrixXcd>>& h) {
    add(-iu * coeff, h, {});
    add(iu * coeff, {}, h);
  }
};

doubled_assembler make_doubled(int d_s, const std::vector<int>& mode_n_max,
                               sparse_super_op& op) {
  doubled_assembler da;
  da.layout.d_s = d_s;
  da.layout.doubled = true;
  for (int n : mode_n_max) {
    da.layout.n_max.push_back(n);
    da.layout.n_max.push_back(n);
  }
  da.dims = factor_dims(da.layout);
  da.st = da.layout.strides();
  op.dimension = da.layout.dim();
  da.op = &op;
  return da;
}

}  // namespace

assembled_op assemble_conventional_pm(const system_spec& sys,
                                      const std::vector<pm_level>& levels,
                                      const Eigen::MatrixXcd& s, int n_max) {
  sys.validate();
  check(s.rows() == sys.dim && s.cols() == sys.dim,
        "coupling operator must be d_S x d_S");
  for (const pm_level& lv : levels)
    check(lv.gamma >= 0.0, "pseudomode rate must be >= 0");

  assembled_op out;
  doubled_assembler da = make_doubled(
      sys.dim, std::vector<int>(levels.size(), n_max), out.op);

  da.add_commutator(1.0, {{0, sys.h_s}});
  for (int k = 0; k < int(levels.size()); ++k) {
    const pm_level& lv = levels[size_t(k)];
    const std::int64_t d = n_max + 1;
    const Eigen::MatrixXcd low = lower_ladder(d), rai = raise_ladder(d);
    da.add_commutator(lv.omega, {{1 + k, number_op(d)}});
    da.add_commutator(lv.lambda, {{0, s}, {1 + k, low + rai}});
    // gamma (2 d rho d^+ - d^+d rho - rho d^+d)
    da.add(2.0 * lv.gamma, {{1 + k, low}}, {{1 + k, rai}});
    da.add(-lv.gamma, {{1 + k, rai * low}}, {});
    da.add(-lv.gamma, {}, {{1 + k, rai * low}});
  }
  for (const lindblad_spec& l : sys.lindblads) da.add_lindblad(0, l.op, l.rate);
  out.layout = da.layout;
  return out;
}

assembled_op assemble_conventional_pm(const system_spec& sys, double omega,
                                      double gamma, cplx lambda,
                                      const Eigen::MatrixXcd& s, int n_max) {
  return assemble_conventional_pm(sys, {{cplx(omega), gamma, lambda}}, s,
                                  n_max);
}

assembled_op assemble_finite_a(const system_spec& sys, double omega,
                               double gamma, cplx lambda,
                               const Eigen::MatrixXcd& s, double a,
                               int n_max) {
  check(a >= 0.0, "frequency shift a must be >= 0");
  return assemble_conventional_pm(
      sys,
      {{cplx(omega, a), gamma + a, lambda}, {cplx(omega, -a), gamma + a, lambda}},
      s, n_max);
}

assembled_op assemble_case1_lindblad(const waveguide_params& p,
                                     const system_spec& sys, int n_max) {
  sys.validate();
  assembled_op out;
  doubled_assembler da = make_doubled(sys.dim, {n_max, n_max}, out.op);
  const std::int64_t d = n_max + 1;
  const Eigen::MatrixXcd low = lower_ladder(d), rai = raise_ladder(d);

  da.add_commutator(1.0, {{0, sys.h_s}});
  for (int n = 1; n <= 2; ++n)
    da.add_commutator(p.delta_c(n), {{n, number_op(d)}});

  // emitter-cavity couplings as declared: H_int = sum_labels s_label x X_label
  for (const coupling_spec& c : sys.couplings) {
    int cav = 0;
    bool raise_cav = false;
    if (c.label == lbl_c1) cav = 1;
    else if (c.label == lbl_c2) cav = 2;
    else if (c.label == lbl_c1dag) cav = 1, raise_cav = true;
    else if (c.label == lbl_c2dag) cav = 2, raise_cav = true;
    else
      check(false, "coupling label '" + c.label +
                       "' is not a cavity amplitude of this bath");
    da.add_commutator(1.0, {{0, c.s}, {cav, raise_cav ? rai : low}});
  }

  for (int n = 1; n <= 2; ++n)
    da.add_lindblad(n, low, p.kappa(n) + p.kappa_i(n));

  // waveguide-mediated terms between the cavities, summed over ordered pairs
  const double g = 0.5 * std::sqrt(p.kappa(1) * p.kappa(2));
  const cplx ph = std::exp(iu * p.phase());
  for (int n = 1; n <= 2; ++n) {
    const int m = 3 - n;
    da.add(g * std::conj(ph), {{m, low}}, {{n, rai}});
    da.add(-g * std::conj(ph), {}, {{n, rai}, {m, low}});
    da.add(g * ph, {{n, low}}, {{m, rai}});
    da.add(-g * ph, {{m, rai}, {n, low}}, {});
  }

  for (const lindblad_spec& l : sys.lindblads) da.add_lindblad(0, l.op, l.rate);
  out.layout = da.layout;
  return out;
}

Eigen::MatrixXcd extract_rho_s(const space_layout& lay,
                               const Eigen::VectorXcd& y) {
  check(y.size() == lay.dim(), "state dimension mismatch");
  Eigen::MatrixXcd rho = Eigen::MatrixXcd::Zero(lay.d_s, lay.d_s);
  if (!lay.doubled) {
    const std::vector<int> occ(lay.n_max.size(), 0);
    for (int i = 0; i < lay.d_s; ++i)
      for (int j = 0; j < lay.d_s; ++j) rho(i, j) = y[lay.index(i, j, occ)];
    return rho;
  }
  check(lay.n_max.size() % 2 == 0, "doubled layout needs mode factor pairs");
  const size_t pairs = lay.n_max.size() / 2;
  std::vector<int> occ(lay.n_max.size(), 0);
  std::vector<int> m(pairs, 0);
  for (;;) {
    for (size_t k = 0; k < pairs; ++k) occ[2 * k] = occ[2 * k + 1] = m[k];
    for (int i = 0; i < lay.d_s; ++i)
      for (int j = 0; j < lay.d_s; ++j) rho(i, j) += y[lay.index(i, j, occ)];
    size_t k = 0;
    while (k < pairs && ++m[k] > lay.n_max[2 * k]) m[k++] = 0;
    if (k == pairs) break;
  }
  return rho;
}

Eigen::VectorXcd embed_rho_s(const space_layout& lay,
                             const Eigen::MatrixXcd& rho) {
  check(rho.rows() == lay.d_s && rho.cols() == lay.d_s,
        "initial matrix must be d_S x d_S");
  Eigen::VectorXcd y = Eigen::VectorXcd::Zero(lay.dim());
  const std::vector<int> occ(lay.n_max.size(), 0);
  for (int i = 0; i < lay.d_s; ++i)
    for (int j = 0; j < lay.d_s; ++j) y[lay.index(i, j, occ)] = rho(i, j);
  return y;
}

Eigen::VectorXcd apply_insertion(const space_layout& lay,
                                 const model_spec& model,
                                 const Eigen::VectorXcd& y,
                                 const field_insertion& ins) {
  check(!lay.doubled, "insertions act on purified layouts");
  check(y.size() == lay.dim(), "state dimension mismatch");
  // plain operator application: terms enter with their stored coefficients
  // (scale 1, no -i)
  sparse_super_op op;
  op.dimension = lay.dim();
  const auto dims = factor_dims(lay);
  const auto st = lay.strides();
  for (const super_term& t : ins.terms)
    add_purified_term(op, lay, dims, st, model, t, 1.0);
  return op * y;
}

Eigen::VectorXcd initial_state(const space_layout& lay, const model_spec& m) {
  Eigen::VectorXcd y = embed_rho_s(lay, m.rho0);
  const auto inputs = m.input_sequence();
  if (inputs.empty()) return y;
  check(!lay.doubled, "input insertions act on purified layouts");
  Eigen::VectorXcd acc = Eigen::VectorXcd::Zero(lay.dim());
  for (const auto& [mask, w] : input_expansion(m)) {
    Eigen::VectorXcd part = y;
    for (size_t i = 0; i < inputs.size(); ++i)
      if (mask & (1u << i)) part = apply_insertion(lay, m, part, *inputs[i]);
    acc += w * part;
  }
  return acc;
}

sparse_super_op doubled_one_sided(const space_layout& lay, int hilbert_factor,
                                  const Eigen::MatrixXcd& op, bool left) {
  check(lay.doubled, "one-sided multiplication targets doubled layouts");
  const int n_pairs = int(lay.n_max.size()) / 2;
  check(hilbert_factor >= 0 && hilbert_factor <= n_pairs,
        "hilbert factor out of range");
  const std::int64_t want =
      hilbert_factor == 0 ? lay.d_s
                          : lay.n_max[size_t(2 * (hilbert_factor - 1))] + 1;
  check(op.rows() == want && op.cols() == want,
        "one-sided operator dimension mismatch");
  sparse_super_op out;
  doubled_assembler da;
  da.layout = lay;
  da.dims = factor_dims(lay);
  da.st = lay.strides();
  out.dimension = lay.dim();
  da.op = &out;
  if (left)
    da.add(1.0, {{hilbert_factor, op}}, {});
  else
    da.add(1.0, {}, {{hilbert_factor, op}});
  return out;
}

}  // namespace purimode
