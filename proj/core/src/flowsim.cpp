// Copyright 2026 The edistill Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "edistill/flowsim.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>

#include "edistill/error.hpp"
#include "edistill/spectral.hpp"

namespace edistill::flowsim {

void check_pair(const ProjectionPair& p) {
  require(p.q.rows() >= 1 && p.q.cols() >= 1, ErrorKind::kDomain,
          "projection pair: Q is empty");
  require(p.o.rows() == p.q.cols() && p.o.cols() == p.q.rows(),
          ErrorKind::kDomain, "projection pair: O must be D' x D for Q D x D'");
  require(p.q.allFinite() && p.o.allFinite(), ErrorKind::kData,
          "projection pair: non-finite entries");
}

const SpectralSnapshot& FlowTrace::at(std::int64_t step) const {
  auto it = std::lower_bound(
      snapshots.begin(), snapshots.end(), step,
      [](const SpectralSnapshot& s, std::int64_t v) { return s.step < v; });
  if (it == snapshots.end() || it->step != step) {
    fail(ErrorKind::kDomain, "step " + std::to_string(step) + " not in trace");
  }
  return *it;
}

Matrix covariance(const Matrix& x) {
  require(x.rows() >= 1, ErrorKind::kDomain, "covariance: empty X");
  Matrix s = Matrix::Zero(x.cols(), x.cols());
  s.selfadjointView<Eigen::Lower>().rankUpdate(x.transpose(),
                                               1.0 / double(x.rows()));
  return s.selfadjointView<Eigen::Lower>();
}

double recon_loss(const Matrix& x, const ProjectionPair& p) {
  check_pair(p);
  require(x.cols() == p.dim(), ErrorKind::kDomain,
          "recon_loss: X has " + std::to_string(x.cols()) +
              " columns, pair expects " + std::to_string(p.dim()));
  const Matrix r = x - (x * p.q) * p.o;
  return r.squaredNorm() / (2.0 * double(x.rows()));
}

Gradients flow_gradients_cov(const Matrix& sigma, const ProjectionPair& p) {
  check_pair(p);
  require(sigma.rows() == p.dim() && sigma.cols() == p.dim(),
          ErrorKind::kDomain, "flow_gradients: covariance does not match D");
  // Sigma (QO - I) = (Sigma Q) O - Sigma; Sigma is symmetric.
  const Matrix sq = sigma * p.q;
  Gradients g;
  g.grad_o = (sq.transpose() * p.q) * p.o - sq.transpose();
  g.grad_q = sq * (p.o * p.o.transpose()) - sigma * p.o.transpose();
  return g;
}

Gradients flow_gradients(const Matrix& x, const ProjectionPair& p) {
  check_pair(p);
  require(x.cols() == p.dim(), ErrorKind::kDomain,
          "flow_gradients: X does not match D");
  return flow_gradients_cov(covariance(x), p);
}

namespace {

ProjectionPair axpy(const ProjectionPair& p, double a, const Gradients& g) {
  return {p.q + a * g.grad_q, p.o + a * g.grad_o};
}

}  // namespace

ProjectionPair flow_step(const Matrix& sigma, const ProjectionPair& p,
                         double eta, Integrator integrator) {
  if (integrator == Integrator::kEuler) {
    return axpy(p, -eta, flow_gradients_cov(sigma, p));
  }
  const Gradients k1 = flow_gradients_cov(sigma, p);
  const Gradients k2 = flow_gradients_cov(sigma, axpy(p, -0.5 * eta, k1));
  const Gradients k3 = flow_gradients_cov(sigma, axpy(p, -0.5 * eta, k2));
  const Gradients k4 = flow_gradients_cov(sigma, axpy(p, -eta, k3));
  ProjectionPair out = p;
  out.q -= (eta / 6.0) *
           (k1.grad_q + 2.0 * k2.grad_q + 2.0 * k3.grad_q + k4.grad_q);
  out.o -= (eta / 6.0) *
           (k1.grad_o + 2.0 * k2.grad_o + 2.0 * k3.grad_o + k4.grad_o);
  return out;
}

SpectralSnapshot snapshot(const Matrix& x, const ProjectionPair& p,
                          std::int64_t step) {
  const Index dp = p.reduced_dim();
  SpectralSnapshot s;
  s.step = step;
  s.sigma_m = singular_values(p.product()).head(dp);
  s.sigma_q = singular_values(p.q);
  s.sigma_o = singular_values(p.o);
  s.loss = recon_loss(x, p);
  s.balancedness_drift = balancedness_drift(p);
  const Matrix hidden = x * p.q;
  if (hidden.rows() >= 2 && hidden.cwiseAbs().maxCoeff() > 0) {
    s.hidden_erank = spectral::erank(hidden).erank;
  } else {
    s.hidden_erank = std::numeric_limits<double>::quiet_NaN();
  }
  return s;
}

FlowTrace simulate(const Matrix& x, const ProjectionPair& init,
                   const FlowConfig& cfg) {
  check_pair(init);
  require(x.cols() == init.dim(), ErrorKind::kDomain,
          "simulate: X does not match pair dimension");
  require(cfg.step_size > 0 && std::isfinite(cfg.step_size),
          ErrorKind::kDomain, "simulate: step size must be positive");
  require(cfg.num_steps >= 1, ErrorKind::kDomain,
          "simulate: num_steps must be >= 1");
  require(cfg.record_every >= 1, ErrorKind::kDomain,
          "simulate: record_every must be >= 1");

  const Matrix sigma = covariance(x);
  FlowTrace trace;
  trace.config = cfg;
  ProjectionPair p = init;
  trace.snapshots.push_back(snapshot(x, p, 0));
  const double initial_loss = trace.snapshots.front().loss;
  const double loss_cap = 1e6 * initial_loss;

  auto diverged = [&](std::int64_t step, const std::string& why) {
    fail(ErrorKind::kDivergence,
         "flow diverged at step " + std::to_string(step) + ": " + why);
  };

  for (std::int64_t step = 1; step <= cfg.num_steps; ++step) {
    p = flow_step(sigma, p, cfg.step_size, cfg.integrator);
    if (!p.q.allFinite() || !p.o.allFinite()) diverged(step, "non-finite");
    const bool record = step % cfg.record_every == 0 || step == cfg.num_steps;
    if (record) {
      trace.snapshots.push_back(snapshot(x, p, step));
      const double loss = trace.snapshots.back().loss;
      if (!std::isfinite(loss)) diverged(step, "non-finite loss");
      if (initial_loss > 0 && loss > loss_cap) {
        diverged(step, "loss exceeded 1e6x its initial value");
      }
    } else if (step % 64 == 0 && initial_loss > 0) {
      const Matrix e = Matrix::Identity(p.dim(), p.dim()) - p.product();
      const double loss = 0.5 * (e.transpose() * sigma * e).trace();
      if (!(loss <= loss_cap)) diverged(step, "loss exceeded 1e6x initial");
    }
  }
  return trace;
}

SvdResult oriented_svd(const Matrix& m) {
  Eigen::JacobiSVD<Matrix> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  SvdResult r{svd.singularValues(), svd.matrixU(), svd.matrixV()};
  const double tiny = 1e-12 * std::max(1.0, r.u.cwiseAbs().maxCoeff());
  const Index k = std::min(r.u.cols(), r.v.cols());
  for (Index c = 0; c < k; ++c) {
    for (Index i = 0; i < r.u.rows(); ++i) {
      const double v = r.u(i, c);
      if (std::abs(v) > tiny) {
        if (v < 0) {
          r.u.col(c) *= -1.0;
          r.v.col(c) *= -1.0;
        }
        break;
      }
    }
  }
  return r;
}

SigmaDotPrediction predicted_sigma_dot(const Matrix& sigma_cov,
                                       const Matrix& m, Index reduced_dim) {
  require(m.rows() == m.cols() && sigma_cov.rows() == m.rows() &&
              sigma_cov.cols() == m.cols(),
          ErrorKind::kDomain, "predicted_sigma_dot: shapes must be D x D");
  require(reduced_dim >= 1 && reduced_dim <= m.rows(), ErrorKind::kDomain,
          "predicted_sigma_dot: reduced_dim out of range");
  const SvdResult svd = oriented_svd(m);
  const Index d = svd.sigma.size();
  const double smax = d ? svd.sigma(0) : 0.0;
  SigmaDotPrediction out;
  out.rate = Vector::Zero(reduced_dim);
  out.reliable.assign(std::size_t(reduced_dim), true);
  for (Index r = 0; r < reduced_dim; ++r) {
    const double s = svd.sigma(r);
    const Vector u = svd.u.col(r);
    const Vector v = svd.v.col(r);
    out.rate(r) = 2.0 * s * u.dot(sigma_cov * (v - s * u));
    double gap = std::numeric_limits<double>::infinity();
    for (Index t = 0; t < d; ++t) {
      if (t != r) gap = std::min(gap, std::abs(s - svd.sigma(t)));
    }
    out.reliable[std::size_t(r)] = gap >= 1e-6 * smax;
  }
  return out;
}

double balancedness_drift(const ProjectionPair& p) {
  check_pair(p);
  return (p.q.transpose() * p.q - p.o * p.o.transpose()).norm();
}

double spectral_coupling_residual(const ProjectionPair& p) {
  check_pair(p);
  const Index dp = p.reduced_dim();
  const Vector sm = singular_values(p.product());
  const Vector sq = singular_values(p.q);
  const Vector so = singular_values(p.o);
  double worst = 0.0;
  for (Index r = 0; r < dp; ++r) {
    worst = std::max(worst, std::abs(sq(r) - so(r)));
    worst = std::max(worst, std::abs(sq(r) - std::sqrt(std::max(sm(r), 0.0))));
  }
  return worst;
}

double growth_correlation(const FlowTrace& trace, std::int64_t from_step,
                          std::int64_t to_step) {
  const SpectralSnapshot& a = trace.at(from_step);
  const SpectralSnapshot& b = trace.at(to_step);
  const Index n = std::min(a.sigma_m.size(), b.sigma_m.size());
  if (n < 3) {
    fail(ErrorKind::kUndefinedCorrelation,
         "growth_correlation needs at least 3 singular values");
  }
  std::vector<double> sigma(static_cast<std::size_t>(n));
  std::vector<double> growth(static_cast<std::size_t>(n));
  for (Index r = 0; r < n; ++r) {
    sigma[std::size_t(r)] = a.sigma_m(r);
    growth[std::size_t(r)] = b.sigma_m(r) - a.sigma_m(r);
  }
  const double corr = pearson(sigma, growth);
  if (!std::isfinite(corr)) {
    fail(ErrorKind::kUndefinedCorrelation,
         "growth_correlation: zero variance in sigma or growth");
  }
  return corr;
}

std::string trace_csv(const FlowTrace& trace) {
  std::ostringstream os;
  os << std::setprecision(17);
  const Index dp =
      trace.snapshots.empty() ? 0 : trace.snapshots.front().sigma_m.size();
  os << "step,loss,drift,erank";
  for (Index r = 0; r < dp; ++r) os << ",sigma_" << (r + 1);
  os << "\n";
  for (const SpectralSnapshot& s : trace.snapshots) {
    os << s.step << ',' << s.loss << ',' << s.balancedness_drift << ','
       << s.hidden_erank;
    for (Index r = 0; r < s.sigma_m.size(); ++r) os << ',' << s.sigma_m(r);
    os << "\n";
  }
  return os.str();
}

std::string to_string(Integrator integrator) {
  return integrator == Integrator::kEuler ? "euler" : "rk4";
}

Integrator parse_integrator(const std::string& name) {
  if (name == "euler") return Integrator::kEuler;
  if (name == "rk4") return Integrator::kRk4;
  fail(ErrorKind::kDomain, "unknown integrator '" + name + "'");
}

}  // namespace edistill::flowsim
