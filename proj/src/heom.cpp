#include "purimode/heom.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <stdexcept>
#include <string>
#include <thread>

#include "purimode/ode.hpp"

namespace purimode {

namespace {

void check(bool cond, const std::string& msg) {
  if (!cond) throw std::runtime_error("tiered: " + msg);
}

constexpr std::uint64_t overflow_guard = std::uint64_t(1) << 62;

}  // namespace

int ado_space::tier(std::int64_t k) const {
  int t = 0;
  for (std::int64_t e = offset[k]; e < offset[k + 1]; ++e) t += nz[e].second;
  return t;
}

std::vector<int> ado_space::occupations(std::int64_t k) const {
  std::vector<int> occ(n_slots(), 0);
  for (std::int64_t e = offset[k]; e < offset[k + 1]; ++e)
    occ[size_t(nz[e].first)] = nz[e].second;
  return occ;
}

std::uint64_t ado_space::choose(int n, int k) const {
  if (k < 0 || n < 0 || k > n) return 0;
  check(k <= tier_cap, "binomial order above tier cap");
  check(n <= n_slots() + tier_cap, "binomial argument out of table");
  return binom[size_t(n) * size_t(tier_cap + 1) + size_t(k)];
}

std::int64_t ado_space::rank(const std::pair<int, int>* occ,
                             int n_occ) const {
  const int m = n_slots();
  int t = 0;
  for (int e = 0; e < n_occ; ++e) t += occ[e].second;
  check(t <= tier_cap, "key above tier cap");
  std::uint64_t r = tier_base[size_t(t)];
  int rem = t;
  for (int e = 0; e < n_occ; ++e) {
    const int i = occ[e].first, k = occ[e].second;
    // keys smaller at slot i take value v < k there; the remaining rem - v
    // excitations distribute over the m - i - 1 later slots
    for (int v = 0; v < k; ++v) r += choose(rem - v + m - i - 2, rem - v);
    rem -= k;
  }
  return std::int64_t(r);
}

std::shared_ptr<const ado_space> enumerate_ados(int n_right, int n_left,
                                                int tier_cap) {
  check(n_right >= 0 && n_left >= 0 && tier_cap >= 0,
        "negative slot count or tier cap");
  auto sp = std::make_shared<ado_space>();
  sp->n_right = n_right;
  sp->n_left = n_left;
  sp->tier_cap = tier_cap;
  const int m = sp->n_slots();

  // Pascal table C(n, k) for k <= cap, n <= m + cap
  const int kw = tier_cap + 1;
  sp->binom.assign(size_t(m + tier_cap + 1) * size_t(kw), 0);
  for (int n = 0; n <= m + tier_cap; ++n) {
    sp->binom[size_t(n) * size_t(kw)] = 1;
    for (int k = 1; k <= std::min(n, tier_cap); ++k) {
      const std::uint64_t a =
          sp->binom[size_t(n - 1) * size_t(kw) + size_t(k - 1)];
      const std::uint64_t b =
          k <= n - 1 ? sp->binom[size_t(n - 1) * size_t(kw) + size_t(k)] : 0;
      check(a < overflow_guard && b < overflow_guard,
            "tier space too large to index");
      sp->binom[size_t(n) * size_t(kw) + size_t(k)] = a + b;
    }
  }

  sp->tier_base.assign(size_t(tier_cap + 2), 0);
  for (int t = 0; t <= tier_cap; ++t) {
    const std::uint64_t in_tier =
        m == 0 ? (t == 0 ? 1 : 0) : sp->choose(t + m - 1, t);
    sp->tier_base[size_t(t + 1)] = sp->tier_base[size_t(t)] + in_tier;
  }
  check(sp->tier_base.back() <= std::uint64_t(2e8),
        "tier space too large to store");

  sp->offset.push_back(0);
  std::vector<int> scratch(size_t(std::max(m, 1)), 0);
  auto push_key = [&]() {
    for (int i = 0; i < m; ++i)
      if (scratch[size_t(i)] > 0) sp->nz.emplace_back(i, scratch[size_t(i)]);
    sp->offset.push_back(std::int64_t(sp->nz.size()));
  };

  for (int t = 0; t <= tier_cap; ++t) {
    if (t == 0) {
      std::fill(scratch.begin(), scratch.end(), 0);
      push_key();
      continue;
    }
    if (m == 0) break;
    std::fill(scratch.begin(), scratch.end(), 0);
    scratch[size_t(m - 1)] = t;
    for (;;) {
      push_key();
      int p = m - 1;
      while (p >= 0 && scratch[size_t(p)] == 0) --p;
      if (p <= 0) break;  // (t, 0, ..., 0) is the last key of the tier
      const int r = scratch[size_t(p)] - 1;
      scratch[size_t(p)] = 0;
      scratch[size_t(p - 1)] += 1;
      scratch[size_t(m - 1)] += r;
    }
  }
  check(std::uint64_t(sp->count()) == sp->tier_base.back(),
        "enumeration/count mismatch");
  return sp;
}

Eigen::Map<Eigen::MatrixXcd> heom_state::block(std::int64_t k) {
  return {data.data() + k * d_s * d_s, d_s, d_s};
}

Eigen::Map<const Eigen::MatrixXcd> heom_state::block(std::int64_t k) const {
  return {data.data() + k * d_s * d_s, d_s, d_s};
}

namespace {

struct slot_map {
  std::vector<int> slot;  // by mode id
  int n_right = 0, n_left = 0;
};

slot_map make_slot_map(const model_spec& m) {
  slot_map sm;
  sm.slot.assign(m.modes.size(), -1);
  for (const purified_mode& mode : m.modes)
    if (mode.chi == chirality::right)
      sm.slot[size_t(mode.id)] = sm.n_right++;
  for (const purified_mode& mode : m.modes)
    if (mode.chi == chirality::left)
      sm.slot[size_t(mode.id)] = sm.n_left++;
  for (const purified_mode& mode : m.modes)
    if (mode.chi == chirality::left) sm.slot[size_t(mode.id)] += sm.n_right;
  return sm;
}

int env_threads() {
  if (const char* e = std::getenv("PURIMODE_THREADS")) {
    const int n = std::atoi(e);
    if (n >= 1) return std::min(n, 64);
  }
  const unsigned hc = std::thread::hardware_concurrency();
  return int(std::min(hc ? hc : 1u, 8u));
}

void mul_into(Eigen::MatrixXcd& slot, const Eigen::MatrixXcd& m) {
  slot = slot.size() ? Eigen::MatrixXcd(slot * m) : m;
}

// classify super terms into the hierarchy actions; scale folds the -i of
// generator terms (insertions pass 1)
void classify_terms(const model_spec& model, const slot_map& sm,
                    const std::vector<super_term>& terms, cplx scale,
                    heom_context& ctx) {
  struct ladder_event {
    int slot;
    bool raise;
    bool left;
  };
  for (const super_term& t : terms) {
    Eigen::MatrixXcd a, b;
    std::vector<ladder_event> ev;
    auto sys_matrix = [&](const std::string& label) -> const Eigen::MatrixXcd& {
      const coupling_spec* c = model.system.find_coupling(label);
      check(c != nullptr, "unresolved system operator label '" + label + "'");
      return c->s;
    };
    for (const op_factor& f : t.left) {
      if (!f.is_mode) {
        mul_into(a, sys_matrix(f.sys_label));
      } else {
        check(model.mode(f.mode_id).chi == chirality::right,
              "left-chirality mode used as a left factor");
        ev.push_back({sm.slot[size_t(f.mode_id)], f.raise_op, true});
      }
    }
    for (const op_factor& f : t.right) {
      if (!f.is_mode) {
        mul_into(b, sys_matrix(f.sys_label));
      } else {
        check(model.mode(f.mode_id).chi == chirality::left,
              "right-chirality mode used as a right factor");
        ev.push_back({sm.slot[size_t(f.mode_id)], f.raise_op, false});
      }
    }
    const cplx coeff = scale * t.coeff;
    if (ev.empty()) {
      ctx.plain.push_back({coeff, a, b, -1, 0});
    } else if (ev.size() == 1) {
      // destination-centric edge: which neighbor sources this key
      const int delta = ev[0].left == !ev[0].raise ? +1 : -1;
      auto& bucket = delta > 0 ? ctx.up[size_t(ev[0].slot)]
                               : ctx.down[size_t(ev[0].slot)];
      bucket.push_back({coeff, a, b, ev[0].slot, delta});
    } else if (ev.size() == 2 && ev[0].slot == ev[1].slot &&
               ev[0].left == ev[1].left && ev[0].raise && !ev[1].raise) {
      // same-side raise*lower pair: occupation-diagonal damping
      check(a.size() == 0 && b.size() == 0,
            "unsupported term: system factors on a diagonal mode pair");
      ctx.diag_coeff[size_t(ev[0].slot)] += coeff;
    } else {
      check(false, "unsupported term: multi-ladder factor combination");
    }
  }
}

heom_context compile_terms(const model_spec& model,
                           std::shared_ptr<const ado_space> space,
                           const std::vector<super_term>& terms, cplx scale,
                           bool add_system_parts) {
  const slot_map sm = make_slot_map(model);
  check(space->n_right == sm.n_right && space->n_left == sm.n_left,
        "key space does not match the model's mode chiralities");
  heom_context ctx;
  ctx.space = std::move(space);
  ctx.d_s = model.system.dim;
  ctx.diag_coeff.assign(size_t(sm.n_right + sm.n_left), cplx(0.0));
  ctx.up.resize(size_t(sm.n_right + sm.n_left));
  ctx.down.resize(size_t(sm.n_right + sm.n_left));
  classify_terms(model, sm, terms, scale, ctx);
  if (add_system_parts) {
    const Eigen::MatrixXcd& h = model.system.h_s;
    ctx.plain.push_back({-iu, h, {}, -1, 0});
    ctx.plain.push_back({iu, {}, h, -1, 0});
    for (const lindblad_spec& l : model.system.lindblads) {
      const Eigen::MatrixXcd ll = l.op.adjoint() * l.op;
      ctx.plain.push_back({l.rate, l.op, l.op.adjoint(), -1, 0});
      ctx.plain.push_back({-0.5 * l.rate, ll, {}, -1, 0});
      ctx.plain.push_back({-0.5 * l.rate, {}, ll, -1, 0});
    }
  }
  ctx.n_threads = env_threads();
  return ctx;
}

// dst occupations with occ[slot] += delta, kept sorted; returns the new
// length or -1 when the move is invalid
int shifted_key(const std::pair<int, int>* occ, int n_occ, int slot,
                int delta, std::pair<int, int>* out) {
  int n_out = 0;
  bool placed = false;
  for (int e = 0; e < n_occ; ++e) {
    if (occ[e].first == slot) {
      const int v = occ[e].second + delta;
      if (v < 0) return -1;
      if (v > 0) out[n_out++] = {slot, v};
      placed = true;
    } else {
      if (!placed && occ[e].first > slot && delta > 0) {
        out[n_out++] = {slot, delta};
        placed = true;
      }
      out[n_out++] = occ[e];
    }
  }
  if (!placed) {
    if (delta < 0) return -1;
    out[n_out++] = {slot, delta};
  }
  return n_out;
}

void sweep_range(const heom_context& ctx, const Eigen::VectorXcd& y,
                 Eigen::VectorXcd& dydt, std::int64_t lo, std::int64_t hi) {
  const ado_space& sp = *ctx.space;
  const int d = ctx.d_s;
  const std::int64_t d2 = std::int64_t(d) * d;
  const int n_slots = sp.n_slots();
  Eigen::MatrixXcd tmp(d, d);
  std::vector<std::pair<int, int>> buf(size_t(sp.tier_cap) + 1);

  auto apply = [&](Eigen::Map<Eigen::MatrixXcd>& out, const heom_term& t,
                   std::int64_t src, double factor) {
    const Eigen::Map<const Eigen::MatrixXcd> in(y.data() + src * d2, d, d);
    const cplx v = t.coeff * factor;
    if (t.a.size() && t.b.size()) {
      tmp.noalias() = t.a * in;
      out.noalias() += v * (tmp * t.b);
    } else if (t.a.size()) {
      out.noalias() += v * (t.a * in);
    } else if (t.b.size()) {
      out.noalias() += v * (in * t.b);
    } else {
      out.noalias() += v * in;
    }
  };

  for (std::int64_t k = lo; k < hi; ++k) {
    Eigen::Map<Eigen::MatrixXcd> out(dydt.data() + k * d2, d, d);
    const std::pair<int, int>* occ = sp.nz.data() + sp.offset[k];
    const int n_occ = int(sp.offset[k + 1] - sp.offset[k]);
    int tier = 0;
    cplx dscal = 0.0;
    for (int e = 0; e < n_occ; ++e) {
      tier += occ[e].second;
      dscal += double(occ[e].second) * ctx.diag_coeff[size_t(occ[e].first)];
    }

    for (const heom_term& t : ctx.plain) apply(out, t, k, 1.0);
    if (dscal != cplx(0.0)) {
      const Eigen::Map<const Eigen::MatrixXcd> self(y.data() + k * d2, d, d);
      out.noalias() += dscal * self;
    }
    // edges sourcing one occupation below: need occ[slot] > 0 here
    for (int e = 0; e < n_occ; ++e) {
      const int slot = occ[e].first;
      const auto& bucket = ctx.down[size_t(slot)];
      if (bucket.empty()) continue;
      const int n_src = shifted_key(occ, n_occ, slot, -1, buf.data());
      const std::int64_t src = sp.rank(buf.data(), n_src);
      const double factor = std::sqrt(double(occ[e].second));
      for (const heom_term& t : bucket) apply(out, t, src, factor);
    }
    // edges sourcing one occupation above: any slot, if the cap allows
    if (tier < sp.tier_cap) {
      for (int slot = 0; slot < n_slots; ++slot) {
        const auto& bucket = ctx.up[size_t(slot)];
        if (bucket.empty()) continue;
        int cur = 0;
        for (int e = 0; e < n_occ; ++e)
          if (occ[e].first == slot) cur = occ[e].second;
        const int n_src = shifted_key(occ, n_occ, slot, +1, buf.data());
        const std::int64_t src = sp.rank(buf.data(), n_src);
        const double factor = std::sqrt(double(cur) + 1.0);
        for (const heom_term& t : bucket) apply(out, t, src, factor);
      }
    }
  }
}

}  // namespace

heom_context compile_heom(const model_spec& model,
                          std::shared_ptr<const ado_space> space) {
  return compile_terms(model, std::move(space), model.generator, -iu, true);
}

void heom_rhs_into(const heom_context& ctx, const Eigen::VectorXcd& y,
                   Eigen::VectorXcd& dydt) {
  const std::int64_t n = ctx.space->count();
  const std::int64_t d2 = std::int64_t(ctx.d_s) * ctx.d_s;
  check(y.size() == n * d2, "state size does not match the key space");
  dydt.setZero(n * d2);
  const int nt = std::max(
      1, int(std::min<std::int64_t>(ctx.n_threads, (n + 255) / 256)));
  if (nt == 1) {
    sweep_range(ctx, y, dydt, 0, n);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(size_t(nt));
  for (int w = 0; w < nt; ++w) {
    const std::int64_t lo = n * w / nt, hi = n * (w + 1) / nt;
    pool.emplace_back(
        [&, lo, hi]() { sweep_range(ctx, y, dydt, lo, hi); });
  }
  for (auto& th : pool) th.join();
}

heom_state heom_rhs(const model_spec& model, const heom_state& state) {
  const heom_context ctx = compile_heom(model, state.space);
  heom_state out;
  out.space = state.space;
  out.d_s = state.d_s;
  heom_rhs_into(ctx, state.data, out.data);
  return out;
}

heom_state heom_apply_insertion(const model_spec& model,
                                const heom_state& state,
                                const field_insertion& ins) {
  const heom_context ctx =
      compile_terms(model, state.space, ins.terms, 1.0, false);
  heom_state out;
  out.space = state.space;
  out.d_s = state.d_s;
  heom_rhs_into(ctx, state.data, out.data);
  return out;
}

heom_state heom_initial_state(const model_spec& model,
                              std::shared_ptr<const ado_space> space) {
  heom_state base;
  base.d_s = model.system.dim;
  base.space = std::move(space);
  base.data.setZero(base.space->count() * base.d_s * base.d_s);
  base.block(0) = model.rho0;
  const auto inputs = model.input_sequence();
  if (inputs.empty()) return base;
  heom_state acc = base;
  acc.data.setZero();
  for (const auto& [mask, w] : input_expansion(model)) {
    heom_state part = base;
    for (size_t i = 0; i < inputs.size(); ++i)
      if (mask & (1u << i))
        part = heom_apply_insertion(model, part, *inputs[i]);
    acc.data += w * part.data;
  }
  return acc;
}

Eigen::MatrixXcd heom_rho_s(const heom_state& state) {
  return state.block(0);
}

double conjugation_defect(const model_spec& model, const heom_state& state) {
  const slot_map sm = make_slot_map(model);
  const ado_space& sp = *state.space;
  std::vector<int> partner_slot(sm.slot.size(), -1);
  for (const purified_mode& mi : model.modes) {
    check(model.corr.has_adjoint(mi.source.first) &&
              model.corr.has_adjoint(mi.source.second),
          "conjugation check needs adjoints for all mode labels");
    const corr_key want{model.corr.adjoint(mi.source.second),
                        model.corr.adjoint(mi.source.first),
                        mi.source.sign == time_sign::plus ? time_sign::minus
                                                          : time_sign::plus};
    int found = -1;
    for (const purified_mode& mj : model.modes)
      if (mj.chi != mi.chi && mj.term_index == mi.term_index &&
          mj.source == want) {
        found = mj.id;
        break;
      }
    check(found >= 0, "mode set is not closed under conjugation");
    partner_slot[size_t(sm.slot[size_t(mi.id)])] =
        sm.slot[size_t(found)];
  }

  double defect = 0.0;
  std::vector<std::pair<int, int>> buf;
  for (std::int64_t k = 0; k < sp.count(); ++k) {
    buf.clear();
    for (std::int64_t e = sp.offset[k]; e < sp.offset[k + 1]; ++e)
      buf.emplace_back(partner_slot[size_t(sp.nz[e].first)],
                       sp.nz[e].second);
    std::sort(buf.begin(), buf.end());
    const std::int64_t kp = sp.rank(buf.data(), int(buf.size()));
    const Eigen::MatrixXcd diff =
        state.block(k) - state.block(kp).adjoint().eval();
    defect = std::max(defect, diff.cwiseAbs().maxCoeff());
  }
  return defect;
}

tier_report tier_convergence(
    const model_spec& model,
    const std::function<double(const Eigen::MatrixXcd&)>& observable,
    const std::vector<double>& t_grid, const std::vector<int>& l_list,
    double tol) {
  check(!l_list.empty(), "need at least one tier cap");
  for (size_t i = 1; i < l_list.size(); ++i)
    check(l_list[i] > l_list[i - 1], "tier caps must increase");
  check(!t_grid.empty(), "need a sample grid");

  const slot_map sm = make_slot_map(model);
  tier_report rep;
  rep.tiers = l_list;
  for (int cap : l_list) {
    auto space = enumerate_ados(sm.n_right, sm.n_left, cap);
    const heom_context ctx = compile_heom(model, space);
    heom_state st = heom_initial_state(model, space);
    const cplx tr0 = heom_rho_s(st).trace();
    if (std::abs(tr0) > 0.0) st.data /= tr0;
    std::vector<double> series;
    series.reserve(t_grid.size());
    const int d = st.d_s;
    auto rhs = [&](double, const Eigen::VectorXcd& y,
                   Eigen::VectorXcd& dydt) { heom_rhs_into(ctx, y, dydt); };
    auto sink = [&](double, const Eigen::VectorXcd& y) {
      const Eigen::Map<const Eigen::MatrixXcd> rho(y.data(), d, d);
      series.push_back(observable(rho));
    };
    integrate_dp54(rhs, st.data, t_grid.front(), t_grid.back(), t_grid, sink,
                   [](double, const Eigen::VectorXcd&,
                      const Eigen::VectorXcd&) { return true; });
    rep.observable.push_back(std::move(series));
  }
  for (size_t i = 0; i + 1 < rep.observable.size(); ++i) {
    double dev = 0.0;
    for (size_t j = 0; j < t_grid.size(); ++j)
      dev = std::max(dev, std::abs(rep.observable[i][j] -
                                   rep.observable[i + 1][j]));
    rep.deviation.push_back(dev);
  }
  rep.converged = !rep.deviation.empty() && rep.deviation.back() <= tol;
  return rep;
}

}  // namespace purimode
