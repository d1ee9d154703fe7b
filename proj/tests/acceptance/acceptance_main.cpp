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

// Acceptance gate: one PASS/FAIL line per criterion, non-zero exit if any
// criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "edistill/dumps.hpp"
#include "edistill/error.hpp"
#include "edistill/flowsim.hpp"
#include "edistill/initlab.hpp"
#include "edistill/proxytrain.hpp"
#include "edistill/spectral.hpp"
#include "edistill/widthnet.hpp"
#include "test_data.hpp"

namespace {

using namespace edistill;
using flowsim::ProjectionPair;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

std::uniform_int_distribution<Index> uniform(Index lo, Index hi) {
  return std::uniform_int_distribution<Index>(lo, hi);
}

// ---------------------------------------------------------------------------

Outcome gradient_correctness() {
  Rng rng(101);
  double worst = 0.0;
  for (int inst = 0; inst < 50; ++inst) {
    const Index l = uniform(2, 64)(rng);
    const Index d = uniform(2, 32)(rng);
    const Index dp = uniform(1, d - 1)(rng);
    const Matrix x = gaussian_matrix(l, d, 1.0, rng);
    ProjectionPair p{gaussian_matrix(d, dp, 0.5, rng),
                     gaussian_matrix(dp, d, 0.5, rng)};
    const flowsim::Gradients g = flowsim::flow_gradients(x, p);
    const double h = 1e-5;
    double err = 0.0;
    const double scale =
        std::max(g.grad_q.cwiseAbs().maxCoeff(), g.grad_o.cwiseAbs().maxCoeff());
    auto probe = [&](Matrix& m, const Matrix& analytic) {
      for (Index i = 0; i < m.size(); ++i) {
        const double keep = m.data()[i];
        m.data()[i] = keep + h;
        const double up = flowsim::recon_loss(x, p);
        m.data()[i] = keep - h;
        const double down = flowsim::recon_loss(x, p);
        m.data()[i] = keep;
        const double fd = (up - down) / (2 * h);
        err = std::max(err, std::abs(fd - analytic.data()[i]) / scale);
      }
    };
    probe(p.q, g.grad_q);
    probe(p.o, g.grad_o);
    worst = std::max(worst, err);
  }
  return {worst < 1e-6, fmt("max relative error %.3e over 50 instances", worst)};
}

Outcome balancedness_conservation() {
  const double horizon = 2.0, eta = 0.01;
  double worst_ratio = 0.0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(200 + seed);
    const Matrix x = dumps::synth_matrix(64, 16, testing::power_law(16, 1.0),
                                         std::nullopt, 300 + seed);
    const ProjectionPair init = testing::balanced_pair(16, 6, 0.3, rng);
    const Matrix sigma = flowsim::covariance(x);
    auto drift_at = [&](double step) {
      ProjectionPair p = init;
      const auto n = std::int64_t(std::llround(horizon / step));
      for (std::int64_t t = 0; t < n; ++t)
        p = flowsim::flow_step(sigma, p, step, flowsim::Integrator::kEuler);
      return flowsim::balancedness_drift(p);
    };
    const double full = drift_at(eta);
    const double half = drift_at(eta / 2);
    if (!(full > 0)) return {false, fmt("seed %d: zero drift at eta", int(seed))};
    worst_ratio = std::max(worst_ratio, half / full);
  }
  return {worst_ratio <= 0.6,
          fmt("max drift(eta/2)/drift(eta) = %.4f over 10 seeds", worst_ratio)};
}

Outcome sigma_dot_prediction() {
  const double eta = 1e-4;
  const auto rk4 = flowsim::Integrator::kRk4;
  std::size_t checked = 0, good = 0;
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Rng rng(400 + seed);
    const Index d = 12, dp = 5;
    const Matrix x = dumps::synth_matrix(48, d, testing::power_law(d, 1.0),
                                         std::nullopt, 500 + seed);
    const Matrix sigma = flowsim::covariance(x);
    ProjectionPair p = testing::balanced_pair(d, dp, 0.3, rng);
    ProjectionPair prev = p;
    for (std::int64_t step = 1; step <= 2000; ++step) {
      const ProjectionPair next = flowsim::flow_step(sigma, p, eta, rk4);
      if (step % 100 == 0) {
        const Vector s_prev = singular_values(prev.product());
        const Vector s_next = singular_values(next.product());
        const flowsim::SigmaDotPrediction pred =
            flowsim::predicted_sigma_dot(sigma, p.product(), dp);
        for (Index r = 0; r < dp; ++r) {
          if (!pred.reliable[std::size_t(r)]) continue;
          const double fd = (s_next(r) - s_prev(r)) / (2 * eta);
          const double rel =
              std::abs(fd - pred.rate(r)) / std::max(std::abs(pred.rate(r)), 1e-300);
          ++checked;
          if (rel < 1e-3) ++good;
          worst = std::max(worst, rel);
        }
      }
      prev = p;
      p = next;
    }
  }
  const double frac = checked ? double(good) / double(checked) : 0.0;
  return {checked > 0 && frac >= 0.95,
          fmt("%zu/%zu points within 1e-3 (%.1f%%), worst %.2e", good, checked,
              100 * frac, worst)};
}

Outcome spectral_coupling() {
  double worst = 0.0;
  std::size_t snaps = 0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Rng rng(600 + seed);
    const Matrix x = dumps::synth_matrix(64, 16, testing::power_law(16, 1.0),
                                         std::nullopt, 700 + seed);
    const ProjectionPair init = testing::balanced_pair(16, 6, 0.3, rng);
    flowsim::FlowConfig cfg;
    cfg.step_size = 1e-2;
    cfg.num_steps = 1000;
    cfg.integrator = flowsim::Integrator::kRk4;
    cfg.record_every = 10;
    const flowsim::FlowTrace trace = flowsim::simulate(x, init, cfg);
    for (const flowsim::SpectralSnapshot& s : trace.snapshots) {
      for (Index r = 0; r < s.sigma_m.size(); ++r) {
        worst = std::max(worst, std::abs(s.sigma_q(r) - s.sigma_o(r)));
        worst = std::max(worst,
                         std::abs(s.sigma_q(r) - std::sqrt(s.sigma_m(r))));
      }
      ++snaps;
    }
  }
  return {worst < 1e-6,
          fmt("max residual %.3e over %zu snapshots", worst, snaps)};
}

Outcome vanishing_initial_dynamics() {
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Index d = 24, dp = 10;
    const Matrix x = dumps::synth_matrix(96, d, testing::power_law(d, 1.0),
                                         std::nullopt, 800 + seed);
    const auto sel = initlab::select_topk(
        initlab::importance_mean_abs(testing::single_layer_dump(x)), dp);
    const ProjectionPair p0 = initlab::build_selection_pair(sel, d);
    const Matrix sigma = flowsim::covariance(x);
    const Vector s0 = singular_values(p0.product()).head(dp);
    auto jump = [&](double eta) {
      const ProjectionPair p1 =
          flowsim::flow_step(sigma, p0, eta, flowsim::Integrator::kEuler);
      return (singular_values(p1.product()).head(dp) - s0).cwiseAbs().maxCoeff();
    };
    const double full = jump(1e-2), half = jump(5e-3);
    if (!(full > 0)) return {false, fmt("seed %d: no motion", int(seed))};
    worst = std::max(worst, half / full);
  }
  return {worst <= 0.3,
          fmt("max |dsigma|(eta/2) / |dsigma|(eta) = %.4f over 10 seeds", worst)};
}

Outcome winner_take_all() {
  int early_ok = 0, ordered = 0;
  double min_early = 1.0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Index d = 32, dp = 16;
    const Matrix x = testing::channel_aligned(128, testing::power_law(d, 1.5),
                                              900 + seed);
    const initlab::InitSpec spec{initlab::Gaussian{0.02}, 1000 + seed};
    flowsim::FlowConfig cfg;
    cfg.step_size = 0.05;
    cfg.num_steps = 4000;
    cfg.record_every = 50;
    const flowsim::FlowTrace trace =
        flowsim::simulate(x, initlab::build_pair(spec, d, dp), cfg);
    const double early = flowsim::growth_correlation(trace, 0, 200);
    const double late = flowsim::growth_correlation(trace, 2000, 4000);
    min_early = std::min(min_early, early);
    if (early > 0.5) ++early_ok;
    if (late < early) ++ordered;
  }
  return {early_ok >= 8 && ordered == 10,
          fmt("early r > 0.5 in %d/10 seeds (min %.3f); late < early in %d/10",
              early_ok, min_early, ordered)};
}

Outcome proxy_ordering() {
  const Index l = 512, dp = 64;
  proxytrain::TrainConfig cfg;
  cfg.learning_rate = 1e-4;
  cfg.epochs = 100;
  int wins = 0;
  std::string last;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Matrix x = testing::proxy_activations(l, 1100 + seed);
    const double x_erank = spectral::erank(x).erank;
    if (std::abs(x_erank - 40.0) > 4.0)
      return {false, fmt("seed %d: X erank %.1f not near 40", int(seed), x_erank)};
    const auto sel = initlab::select_topk(
        initlab::importance_mean_abs(testing::single_layer_dump(x)), dp);
    const auto s = proxytrain::train_autoencoder(
        x, {initlab::ChannelSelect{sel}, seed}, dp, cfg);
    const auto g = proxytrain::train_autoencoder(
        x, {initlab::Gaussian{0.02}, seed}, dp, cfg);
    const auto o = proxytrain::train_autoencoder(
        x, {initlab::Orthogonal{}, seed}, dp, cfg);
    const bool ok = s.final_loss < g.final_loss &&
                    s.hidden_erank >= 1.5 * g.hidden_erank &&
                    o.hidden_erank > g.hidden_erank &&
                    o.hidden_erank < s.hidden_erank;
    if (ok) ++wins;
    last = fmt("loss sel/gauss/orth %.3f/%.3f/%.3f, hidden erank %.1f/%.1f/%.1f",
               s.final_loss, g.final_loss, o.final_loss, s.hidden_erank,
               g.hidden_erank, o.hidden_erank);
  }
  return {wins >= 9, fmt("ordering holds in %d/10 seeds; last seed: ", wins) + last};
}

Outcome bound_suites() {
  Rng rng(1300);
  std::size_t jensen_bad = 0, cos_bad = 0, tv_bad = 0, rank1_bad = 0;
  for (int i = 0; i < 500; ++i) {
    const Index l = uniform(4, 64)(rng);
    const Index d = uniform(2, 32)(rng);
    const Index rank = uniform(1, d)(rng);
    const double decay = std::uniform_real_distribution<double>(0, 3)(rng);
    std::vector<double> spec = testing::power_law(rank, decay);
    spec.resize(std::size_t(d), 0.0);
    const Matrix x = dumps::synth_matrix(l, d, spec, std::nullopt, rng());
    spectral::PreppedMatrix p = [&] {
      try {
        return spectral::preprocess(x);
      } catch (const Error&) {
        return spectral::preprocess(x, false);
      }
    }();
    const auto e = spectral::erank(p.data());
    if (e.collision_probability < 1.0 / e.erank - 1e-12) ++jensen_bad;
    if (spectral::max_abs_cosine(p).value <
        spectral::rep_bound(l, e.erank) - 1e-12)
      ++cos_bad;
  }
  for (int i = 0; i < 200; ++i) {
    const Index l = uniform(4, 64)(rng);
    const Index d = uniform(2, 32)(rng);
    const Index voc = uniform(2, 64)(rng);
    Vector center = gaussian_matrix(d, 1, 1.0, rng).col(0);
    const double decay = std::uniform_real_distribution<double>(0, 3)(rng);
    const Matrix x = dumps::synth_matrix(l, d, testing::power_law(d, decay),
                                         center, rng());
    const spectral::PreppedMatrix p = spectral::preprocess(x, false);
    dumps::UnembeddingBlock u;
    u.g_final = (Vector::Ones(d) + gaussian_matrix(d, 1, 0.3, rng).col(0))
                    .cast<float>();
    u.epsilon = 1e-6f;
    u.w_u = gaussian_matrix(d, voc, 1.0, rng).cast<float>();
    const Matrix z = spectral::logits(p, u);
    const double r = spectral::erank(p.data()).erank;
    const double bound = spectral::prob_bound(
        l, r, voc, spectral::scaled_unembedding_norm(u));
    if (spectral::min_tv(z).value > bound + 1e-12) ++tv_bad;

    Vector v = gaussian_matrix(d, 1, 1.0, rng).col(0);
    Vector a(l);
    for (Index t = 0; t < l; ++t)
      a(t) = (rng() % 2 ? 1.0 : -1.0) *
             std::uniform_real_distribution<double>(0.5, 2.0)(rng);
    const Matrix r1 = a * v.transpose();
    const Matrix z1 = spectral::logits(spectral::preprocess(r1, false), u);
    if (spectral::distinct_rows(z1, 1e-9) > 2) ++rank1_bad;
  }
  const bool pass = !jensen_bad && !cos_bad && !tv_bad && !rank1_bad;
  return {pass, fmt("violations: jensen %zu/500, cosine %zu/500, tv %zu/200, "
                    "rank-1 %zu/200",
                    jensen_bad, cos_bad, tv_bad, rank1_bad)};
}

Outcome merge_equivalence() {
  Rng rng(1400);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    const Index d = uniform(4, 24)(rng);
    const Index dp = uniform(1, d - 1)(rng);
    const Index heads = uniform(1, 3)(rng);
    const Index hd = uniform(1, 6)(rng);
    const Index ff = uniform(2, 32)(rng);
    const Index len = uniform(1, 12)(rng);
    const widthnet::TeacherLayer t =
        widthnet::random_teacher_layer(d, heads, hd, ff, rng);
    const widthnet::WrappedLayer w = widthnet::random_wrapped_layer(t, dp, rng);
    const Matrix x = gaussian_matrix(len, dp, 1.0, rng);
    const Matrix a = widthnet::wrapped_block(x, w);
    const Matrix b = widthnet::teacher_block(x, widthnet::merge(w));
    worst = std::max(worst, (a - b).norm() / std::max(a.norm(), 1e-300));
  }
  // Identity projections with the teacher's own gains.
  bool exact = true;
  for (int i = 0; i < 10; ++i) {
    const Index d = uniform(2, 16)(rng);
    std::vector<widthnet::TeacherLayer> teacher;
    std::vector<widthnet::MergedLayer> merged;
    for (int k = 0; k < 3; ++k) {
      teacher.push_back(widthnet::random_teacher_layer(d, 2, 3, 8, rng));
      widthnet::WrappedLayer w;
      w.teacher = teacher.back();
      w.o_a = w.o_f = w.q_a = w.q_f = Matrix::Identity(d, d);
      w.g_a = teacher.back().g_a;
      w.g_f = teacher.back().g_f;
      merged.push_back(widthnet::merge(w));
    }
    const Matrix x = gaussian_matrix(7, d, 1.0, rng);
    const auto ref = widthnet::teacher_forward(x, teacher);
    const auto got = widthnet::merged_forward(x, merged);
    for (std::size_t k = 0; k < ref.size(); ++k)
      exact = exact && (ref[k].array() == got[k].array()).all();
  }
  return {worst < 1e-5 && exact,
          fmt("max relative error %.3e over 100 layers; identity case %s",
              worst, exact ? "bit-exact" : "NOT exact")};
}

Outcome importance_agreement() {
  double min_cross = 1.0, min_split = 1.0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    dumps::SynthDumpConfig cfg;
    cfg.profile = dumps::SynthProfile::kAnisotropic;
    cfg.hidden_dim = 64;
    cfg.num_layers = 4;
    cfg.num_sequences = 8;
    cfg.seq_len = 64;
    cfg.seed = 1500 + seed;
    const dumps::ActivationDump dump = dumps::synth_dump(cfg);
    const Index dp = 32;
    const auto a = initlab::select_topk(initlab::importance_mean_abs(dump), dp);
    const auto b = initlab::select_topk(initlab::importance_qr(dump), dp);
    min_cross = std::min(min_cross, initlab::overlap_ratio(a, b));
    min_split = std::min(
        min_split,
        initlab::split_half_overlap(dump, initlab::Strategy::kMeanAbs, dp)
            .overlap);
  }
  return {min_cross >= 0.6 && min_split >= 0.7,
          fmt("min mean_abs/qr_pivot overlap %.3f, min split-half %.3f "
              "over 5 dumps",
              min_cross, min_split)};
}

Outcome collapse_correlation() {
  dumps::SynthDumpConfig cfg;
  cfg.profile = dumps::SynthProfile::kCollapse;
  cfg.hidden_dim = 32;
  cfg.num_layers = 8;
  cfg.num_sequences = 4;
  cfg.seq_len = 48;
  cfg.unembedding = true;
  cfg.vocab_size = 64;
  cfg.seed = 1600;
  const spectral::DumpAnalysis a = spectral::analyze_dump(dumps::synth_dump(cfg));
  return {a.erank_min_tv_correlation > 0,
          fmt("corr(erank, min_tv) = %.4f across %zu layers",
              a.erank_min_tv_correlation, a.layers.size())};
}

struct Criterion {
  const char* name;
  double budget_seconds;  // 0 when the criterion sets no runtime limit
  std::function<Outcome()> run;
};

}  // namespace

int main() {
  const std::vector<Criterion> criteria = {
      {"gradient-correctness", 10, gradient_correctness},
      {"balancedness-conservation", 30, balancedness_conservation},
      {"singular-value-dynamics", 60, sigma_dot_prediction},
      {"spectral-coupling", 0, spectral_coupling},
      {"vanishing-initial-dynamics", 0, vanishing_initial_dynamics},
      {"winner-take-all", 0, winner_take_all},
      {"proxy-ordering", 300, proxy_ordering},
      {"bound-suites", 60, bound_suites},
      {"merge-equivalence", 0, merge_equivalence},
      {"importance-agreement", 0, importance_agreement},
      {"collapse-correlation", 0, collapse_correlation},
  };
  int failures = 0;
  for (const Criterion& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome out;
    try {
      out = c.run();
    } catch (const std::exception& e) {
      out = {false, std::string("exception: ") + e.what()};
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
            .count();
    bool pass = out.pass;
    if (c.budget_seconds > 0 && secs > c.budget_seconds) {
      pass = false;
      out.detail += fmt(" [over time budget %.0fs]", c.budget_seconds);
    }
    if (!pass) ++failures;
    std::printf("%s %-28s %7.2fs  %s\n", pass ? "PASS" : "FAIL", c.name, secs,
                out.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", int(criteria.size()) - failures,
              criteria.size());
  return failures == 0 ? 0 : 1;
}
