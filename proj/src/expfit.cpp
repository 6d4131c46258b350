#include "purimode/expfit.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace purimode {

namespace {

using Mat = Eigen::MatrixXcd;
using Vec = Eigen::VectorXcd;

void check_uniform(const std::vector<double>& t) {
  if (t.size() < 2) throw std::domain_error("fit_exponentials: need >= 2 samples");
  const double dt = t[1] - t[0];
  if (dt <= 0.0) throw std::domain_error("fit_exponentials: grid not ascending");
  const double span = t.back() - t.front();
  for (size_t k = 0; k < t.size(); ++k)
    if (std::abs(t[k] - t[0] - double(k) * dt) > 1e-7 * std::max(span, dt))
      throw std::domain_error("fit_exponentials: grid is not uniform");
}

// basis column i: exp(s_i * (t - t0)) evaluated on the grid
Mat basis(const std::vector<cplx>& s, long n_samples, double dt) {
  Mat a(n_samples, long(s.size()));
  for (long i = 0; i < long(s.size()); ++i) {
    cplx z = std::exp(s[size_t(i)] * dt);
    cplx acc = 1.0;
    for (long k = 0; k < n_samples; ++k, acc *= z) a(k, i) = acc;
  }
  return a;
}

Vec weights_ls(const Mat& a, const Vec& f) {
  return a.colPivHouseholderQr().solve(f);
}

double sup_abs(const Vec& v) {
  double m = 0.0;
  for (long k = 0; k < v.size(); ++k) m = std::max(m, std::abs(v[k]));
  return m;
}

// Levenberg iterations on the poles with the weights eliminated (variable
// projection, Kaufman form of the Jacobian)
void varpro_refine(std::vector<cplx>& s, const Vec& f, double dt,
                   int max_iter) {
  const long n_par = long(s.size());
  const long n = f.size();
  Eigen::VectorXd tgrid(n);
  for (long k = 0; k < n; ++k) tgrid[k] = double(k) * dt;

  double mu = 1e-3;
  Mat a = basis(s, n, dt);
  Vec w = weights_ls(a, f);
  Vec r = f - a * w;
  double cost = r.squaredNorm();

  for (int it = 0; it < max_iter; ++it) {
    // complex derivative of the residual w.r.t. each pole (Kaufman: skip the
    // derivative of the eliminated weights)
    Eigen::HouseholderQR<Mat> qr(a);
    Mat jc(n, n_par);
    for (long i = 0; i < n_par; ++i) {
      Vec da = (tgrid.cast<cplx>().array() * a.col(i).array()).matrix() * w[i];
      // project out the current column space
      Vec tmp = qr.householderQ().adjoint() * da;
      tmp.head(n_par).setZero();
      jc.col(i) = -(qr.householderQ() * tmp);
    }

    // real parametrization: delta s_i = dx_i + i dy_i
    Eigen::MatrixXd jr(2 * n, 2 * n_par);
    Eigen::VectorXd rr(2 * n);
    for (long k = 0; k < n; ++k) {
      rr[k] = r[k].real();
      rr[n + k] = r[k].imag();
      for (long i = 0; i < n_par; ++i) {
        cplx jre = jc(k, i);          // d r / d Re(s_i)
        cplx jim = iu * jc(k, i);     // d r / d Im(s_i)
        jr(k, 2 * i) = jre.real();
        jr(n + k, 2 * i) = jre.imag();
        jr(k, 2 * i + 1) = jim.real();
        jr(n + k, 2 * i + 1) = jim.imag();
      }
    }
    Eigen::MatrixXd jtj = jr.transpose() * jr;
    Eigen::VectorXd jtr = -jr.transpose() * rr;
    bool improved = false;
    for (int sub = 0; sub < 8; ++sub) {
      Eigen::MatrixXd m = jtj;
      m.diagonal().array() += mu * jtj.diagonal().array().maxCoeff();
      Eigen::VectorXd step = m.ldlt().solve(jtr);
      std::vector<cplx> s_try(s);
      for (long i = 0; i < n_par; ++i)
        s_try[size_t(i)] += cplx(step[2 * i], step[2 * i + 1]);
      Mat a_try = basis(s_try, n, dt);
      Vec w_try = weights_ls(a_try, f);
      Vec r_try = f - a_try * w_try;
      double cost_try = r_try.squaredNorm();
      if (cost_try < cost) {
        s = std::move(s_try);
        a = std::move(a_try);
        w = std::move(w_try);
        r = std::move(r_try);
        mu = std::max(mu * 0.3, 1e-12);
        improved = (cost - cost_try) > 1e-13 * std::max(cost, 1e-300);
        cost = cost_try;
        break;
      }
      mu *= 10.0;
    }
    if (!improved) break;
  }
}

fit_result finish(const std::vector<cplx>& s, const std::vector<double>& t,
                  const Vec& f, double dt, std::string note,
                  const fit_options& opt) {
  Mat a = basis(s, f.size(), dt);
  Vec w = weights_ls(a, f);
  // fold the grid offset t0 into the weights
  fit_result res;
  for (size_t i = 0; i < s.size(); ++i) {
    cplx wi = w[long(i)] * std::exp(-s[i] * t[0]);
    res.terms.push_back({wi, -s[i].imag(), -s[i].real()});
  }
  double fmax = sup_abs(f);
  res.rel_residual = fmax > 0 ? sup_abs(f - a * w) / fmax : sup_abs(f - a * w);
  res.ok = res.rel_residual <= opt.max_rel_residual && !res.terms.empty();
  res.note = std::move(note);
  if (!res.ok && res.note.empty())
    res.note = "residual above threshold";
  return res;
}

fit_result fit_n(const std::vector<double>& t, const Vec& f, int n_terms,
                 const fit_options& opt, std::string note) {
  const long n = f.size();
  const double dt = t[1] - t[0];
  if (n_terms < 1)
    return fit_result{{}, 1.0, false, note + "; no terms left"};
  if (n < 2 * n_terms + 2)
    throw std::invalid_argument("fit_exponentials: too few samples for order");

  // matrix pencil / ESPRIT pole estimate; the pencil window must be long
  // enough to see the slowest structure in the record, so cap it by a
  // fraction of the record rather than a fixed row count
  long l = std::clamp<long>(std::max<long>(2 * n_terms + 2, 64), 2 * n_terms + 2,
                            std::min<long>(n / 2, 1024));
  long m = n - l + 1;
  Mat h(l, m);
  for (long i = 0; i < l; ++i)
    for (long j = 0; j < m; ++j) h(i, j) = f[i + j];
  Eigen::BDCSVD<Mat> svd(h, Eigen::ComputeThinU);
  long rank = std::min<long>(n_terms, svd.singularValues().size());
  Mat us = svd.matrixU().leftCols(rank);
  Mat u0 = us.topRows(l - 1);
  Mat u1 = us.bottomRows(l - 1);
  Mat z = (u0.adjoint() * u0).ldlt().solve(u0.adjoint() * u1);
  Eigen::ComplexEigenSolver<Mat> eig(z);

  std::vector<cplx> s;
  for (long i = 0; i < rank; ++i) {
    cplx zi = eig.eigenvalues()[i];
    if (std::abs(zi) < 1e-14) continue;  // spurious fully-damped pole
    s.push_back(std::log(zi) / dt);
  }
  if (s.empty())
    return fit_result{{}, 1.0, false, note + "; pencil found no usable poles"};

  varpro_refine(s, f, dt, opt.varpro_max_iter);

  // decay-rate sign policy: reflect, refit, then drop if still growing
  double rate_scale = 0.0;
  for (const auto& si : s) rate_scale = std::max(rate_scale, std::abs(si));
  const double tol_pos = 1e-10 * std::max(rate_scale, 1.0 / (t.back() - t[0]));
  bool reflected = false;
  for (auto& si : s)
    if (si.real() > tol_pos) {
      si = cplx(-si.real(), si.imag());
      reflected = true;
    }
  if (reflected) {
    varpro_refine(s, f, dt, opt.varpro_max_iter);
    std::vector<cplx> kept;
    bool dropped = false;
    for (const auto& si : s) {
      if (si.real() > tol_pos)
        dropped = true;
      else
        kept.push_back(si);
    }
    if (dropped) {
      note += "; dropped growing pole, retrying with fewer terms";
      return fit_n(t, f, int(kept.size()), opt, std::move(note));
    }
    note += "; reflected growing pole(s)";
  }
  // clamp harmless +0 decay rates to exactly zero
  for (auto& si : s)
    if (si.real() > 0.0) si = cplx(0.0, si.imag());

  return finish(s, t, f, dt, std::move(note), opt);
}

}  // namespace

fit_result fit_exponentials(const std::vector<double>& t,
                            const std::vector<cplx>& f,
                            const fit_options& opt) {
  check_uniform(t);
  if (t.size() != f.size())
    throw std::invalid_argument("fit_exponentials: grid/data size mismatch");
  Vec fv(long(f.size()));
  for (size_t k = 0; k < f.size(); ++k) fv[long(k)] = f[k];
  return fit_n(t, fv, opt.n_terms, opt, "");
}

}  // namespace purimode
