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


#include "checks.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>

#include "edistill/error.hpp"
#include "edistill/spectral.hpp"
#include "edistill/widthnet.hpp"

namespace edistill::tools {
namespace {

std::string fmt(const char* f, double a, double b = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b);
  return buf;
}

Index draw(Rng& rng, Index lo, Index hi) {
  return std::uniform_int_distribution<Index>(lo, hi)(rng);
}

}  // namespace

nlohmann::ordered_json to_json(const CheckResult& r) {
  nlohmann::ordered_json j;
  j["name"] = r.name;
  j["pass"] = r.pass;
  j["value"] = r.value;
  j["threshold"] = r.threshold;
  j["detail"] = r.detail;
  return j;
}

nlohmann::ordered_json to_json(const std::vector<CheckResult>& rs) {
  nlohmann::ordered_json j = nlohmann::ordered_json::array();
  for (const CheckResult& r : rs) j.push_back(to_json(r));
  return j;
}

bool all_pass(const std::vector<CheckResult>& rs) {
  return std::all_of(rs.begin(), rs.end(),
                     [](const CheckResult& r) { return r.pass; });
}

CheckResult check_gradients(const Matrix& x, Index dprime, int instances,
                            Rng& rng) {
  const Index d = x.cols();
  const double h = 1e-5;
  double worst = 0.0;
  for (int i = 0; i < instances; ++i) {
    flowsim::ProjectionPair p{gaussian_matrix(d, dprime, 0.5, rng),
                              gaussian_matrix(dprime, d, 0.5, rng)};
    const flowsim::Gradients g = flowsim::flow_gradients(x, p);
    const double scale = std::max(g.grad_q.cwiseAbs().maxCoeff(),
                                  g.grad_o.cwiseAbs().maxCoeff());
    auto probe = [&](Matrix& m, const Matrix& analytic) {
      for (Index k = 0; k < m.size(); ++k) {
        const double keep = m.data()[k];
        m.data()[k] = keep + h;
        const double up = flowsim::recon_loss(x, p);
        m.data()[k] = keep - h;
        const double down = flowsim::recon_loss(x, p);
        m.data()[k] = keep;
        const double fd = (up - down) / (2 * h);
        worst = std::max(worst, std::abs(fd - analytic.data()[k]) / scale);
      }
    };
    probe(p.q, g.grad_q);
    probe(p.o, g.grad_o);
  }
  return {"gradients", worst < 1e-6, worst, 1e-6,
          "max relative error vs central differences"};
}

CheckResult check_balancedness(const Matrix& sigma,
                               const flowsim::ProjectionPair& balanced,
                               double eta, double horizon) {
  auto drift_at = [&](double step) {
    flowsim::ProjectionPair p = balanced;
    const auto n = std::int64_t(std::llround(horizon / step));
    for (std::int64_t t = 0; t < n; ++t)
      p = flowsim::flow_step(sigma, p, step, flowsim::Integrator::kEuler);
    return flowsim::balancedness_drift(p);
  };
  const double full = drift_at(eta);
  const double half = drift_at(eta / 2);
  if (!(full > 0)) {
    return {"balancedness", true, 0.0, 0.6, "no drift at eta"};
  }
  const double ratio = half / full;
  return {"balancedness", ratio <= 0.6, ratio, 0.6,
          fmt("drift %.3e at eta, %.3e at eta/2", full, half)};
}

CheckResult check_coupling(const flowsim::FlowTrace& trace) {
  double worst = 0.0;
  for (const flowsim::SpectralSnapshot& s : trace.snapshots) {
    for (Index r = 0; r < s.sigma_m.size(); ++r) {
      worst = std::max(worst, std::abs(s.sigma_q(r) - s.sigma_o(r)));
      worst = std::max(worst, std::abs(s.sigma_q(r) - std::sqrt(s.sigma_m(r))));
    }
  }
  return {"spectral_coupling", worst < 1e-6, worst, 1e-6,
          fmt("max residual over %.0f snapshots", double(trace.snapshots.size()))};
}

CheckResult check_sigma_dot(const Matrix& sigma,
                            const flowsim::ProjectionPair& balanced,
                            std::int64_t steps) {
  const double eta = 1e-4;
  const Index dp = balanced.reduced_dim();
  std::size_t checked = 0, good = 0;
  flowsim::ProjectionPair prev = balanced, p = balanced;
  for (std::int64_t step = 1; step <= steps; ++step) {
    const flowsim::ProjectionPair next =
        flowsim::flow_step(sigma, p, eta, flowsim::Integrator::kRk4);
    if (step % 100 == 0) {
      const Vector lo = singular_values(prev.product());
      const Vector hi = singular_values(next.product());
      const auto pred = flowsim::predicted_sigma_dot(sigma, p.product(), dp);
      for (Index r = 0; r < dp; ++r) {
        if (!pred.reliable[std::size_t(r)]) continue;
        const double fd = (hi(r) - lo(r)) / (2 * eta);
        const double rate = pred.rate(r);
        ++checked;
        if (std::abs(fd - rate) < 1e-3 * std::abs(rate)) ++good;
      }
    }
    prev = p;
    p = next;
  }
  const double frac = checked ? double(good) / double(checked) : 0.0;
  return {"sigma_dot", checked > 0 && frac >= 0.95, frac, 0.95,
          fmt("%.0f of %.0f points within 1e-3", double(good), double(checked))};
}

CheckResult check_vanishing(const Matrix& sigma,
                            const flowsim::ProjectionPair& selection,
                            double eta) {
  const Index dp = selection.reduced_dim();
  const Vector s0 = singular_values(selection.product()).head(dp);
  auto jump = [&](double step) {
    const flowsim::ProjectionPair p1 = flowsim::flow_step(
        sigma, selection, step, flowsim::Integrator::kEuler);
    return (singular_values(p1.product()).head(dp) - s0).cwiseAbs().maxCoeff();
  };
  const double full = jump(eta), half = jump(eta / 2);
  if (full < 1e-14) {
    return {"vanishing_dynamics", true, 0.0, 0.3,
            "selection is a stationary point of the flow"};
  }
  const double ratio = half / full;
  return {"vanishing_dynamics", ratio <= 0.3, ratio, 0.3,
          fmt("max |dsigma| %.3e at eta, %.3e at eta/2", full, half)};
}

std::vector<CheckResult> check_bounds(int count, Rng& rng) {
  int jensen = 0, cosine = 0, tv = 0, rank1 = 0;
  for (int i = 0; i < count; ++i) {
    const Index l = draw(rng, 4, 64);
    const Index d = draw(rng, 2, 32);
    const double decay = std::uniform_real_distribution<double>(0, 3)(rng);
    std::vector<double> spec(static_cast<std::size_t>(d));
    for (Index j = 0; j < d; ++j) spec[std::size_t(j)] = std::pow(j + 1.0, -decay);

    const Matrix x = dumps::synth_matrix(l, d, spec, std::nullopt, rng());
    const spectral::PreppedMatrix p = spectral::preprocess(x);
    const auto e = spectral::erank(p.data());
    if (e.collision_probability < 1.0 / e.erank - 1e-12) ++jensen;
    if (spectral::max_abs_cosine(p).value <
        spectral::rep_bound(l, e.erank) - 1e-12)
      ++cosine;

    const Index voc = draw(rng, 2, 64);
    const Vector center = gaussian_matrix(d, 1, 1.0, rng).col(0);
    const spectral::PreppedMatrix c = spectral::preprocess(
        dumps::synth_matrix(l, d, spec, center, rng()), false);
    dumps::UnembeddingBlock u;
    u.g_final = (Vector::Ones(d) + gaussian_matrix(d, 1, 0.3, rng).col(0))
                    .cast<float>();
    u.w_u = gaussian_matrix(d, voc, 1.0, rng).cast<float>();
    const double bound =
        spectral::prob_bound(l, spectral::erank(c.data()).erank, voc,
                             spectral::scaled_unembedding_norm(u));
    if (spectral::min_tv(spectral::logits(c, u)).value > bound + 1e-12) ++tv;

    Vector a(l);
    for (Index t = 0; t < l; ++t) a(t) = (rng() % 2 ? 1.0 : -1.0) * (1.0 + t % 3);
    const Matrix r1 = a * gaussian_matrix(1, d, 1.0, rng);
    const Matrix z = spectral::logits(spectral::preprocess(r1, false), u);
    if (spectral::distinct_rows(z, 1e-9) > 2) ++rank1;
  }
  const double n = count;
  return {
      {"jensen", jensen == 0, jensen / n, 0.0, "sum p^2 >= 1/erank"},
      {"cosine_bound", cosine == 0, cosine / n, 0.0, "max_cos >= rep_bound"},
      {"tv_bound", tv == 0, tv / n, 0.0, "min_tv <= prob_bound (cone)"},
      {"rank1_logits", rank1 == 0, rank1 / n, 0.0, "<= 2 distinct rows"},
  };
}

CheckResult check_merge(int count, Rng& rng) {
  double worst = 0.0;
  for (int i = 0; i < count; ++i) {
    const Index d = draw(rng, 4, 16);
    const widthnet::TeacherLayer t = widthnet::random_teacher_layer(
        d, draw(rng, 1, 3), draw(rng, 1, 4), draw(rng, 2, 16), rng);
    const widthnet::WrappedLayer w =
        widthnet::random_wrapped_layer(t, draw(rng, 1, d - 1), rng);
    const Matrix x = gaussian_matrix(draw(rng, 1, 8), w.reduced_dim(), 1.0, rng);
    const Matrix a = widthnet::wrapped_block(x, w);
    const Matrix b = widthnet::teacher_block(x, widthnet::merge(w));
    worst = std::max(worst, (a - b).norm() / std::max(a.norm(), 1e-300));
  }
  return {"merge_equivalence", worst < 1e-5, worst, 1e-5,
          "wrapped vs merged relative error"};
}

double min_relative_sigma(const flowsim::FlowTrace& trace) {
  double worst = 1.0;
  for (const flowsim::SpectralSnapshot& s : trace.snapshots) {
    if (s.sigma_m.size() == 0 || !(s.sigma_m(0) > 0)) continue;
    const double top = s.sigma_m(0);
    for (Index r = 0; r < s.sigma_m.size(); ++r) {
      if (s.sigma_m(r) > 1e-12 * top) worst = std::min(worst, s.sigma_m(r) / top);
    }
  }
  return worst;
}

}  // namespace edistill::tools
