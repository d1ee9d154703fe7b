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

#include "edistill/proxytrain.hpp"

#include <cmath>
#include <iomanip>
#include <sstream>

#include <json.hpp>

#include "edistill/error.hpp"
#include "edistill/spectral.hpp"

namespace edistill::proxytrain {

void check_config(const TrainConfig& cfg) {
  require(cfg.learning_rate > 0 && std::isfinite(cfg.learning_rate),
          ErrorKind::kDomain, "learning rate must be positive");
  require(cfg.epochs >= 0, ErrorKind::kDomain, "epochs must be >= 0");
  require(cfg.beta1 > 0 && cfg.beta1 < 1 && cfg.beta2 > 0 && cfg.beta2 < 1,
          ErrorKind::kDomain, "Adam betas must lie in (0, 1)");
  require(cfg.eps > 0, ErrorKind::kDomain, "Adam eps must be > 0");
  require(cfg.orthogonal_penalty_weight >= 0, ErrorKind::kDomain,
          "orthogonal penalty weight must be >= 0");
}

AdamState AdamState::zeros_like(const ProjectionPair& p) {
  AdamState s;
  s.m_q = s.v_q = Matrix::Zero(p.q.rows(), p.q.cols());
  s.m_o = s.v_o = Matrix::Zero(p.o.rows(), p.o.cols());
  return s;
}

namespace {

void adam_update(Matrix& x, const Matrix& grad, Matrix& m, Matrix& v,
                 std::int64_t t, const TrainConfig& cfg) {
  m = cfg.beta1 * m + (1 - cfg.beta1) * grad;
  v = cfg.beta2 * v + (1 - cfg.beta2) * grad.cwiseAbs2();
  const double c1 = 1 - std::pow(cfg.beta1, double(t));
  const double c2 = 1 - std::pow(cfg.beta2, double(t));
  x.array() -= cfg.learning_rate * (m.array() / c1) /
               ((v.array() / c2).sqrt() + cfg.eps);
}

double erank_or_nan(const Matrix& m, bool reprep) {
  if (!(m.cwiseAbs().maxCoeff() > 0)) return std::nan("");
  if (reprep) return spectral::erank(spectral::preprocess(m).data()).erank;
  return spectral::erank(m).erank;
}

}  // namespace

void adam_step(ProjectionPair& p, const flowsim::Gradients& g, AdamState& s,
               const TrainConfig& cfg) {
  ++s.step;
  adam_update(p.q, g.grad_q, s.m_q, s.v_q, s.step, cfg);
  adam_update(p.o, g.grad_o, s.m_o, s.v_o, s.step, cfg);
}

PenaltyResult orthogonal_penalty(const ProjectionPair& p, double weight) {
  require(weight >= 0, ErrorKind::kDomain, "penalty weight must be >= 0");
  flowsim::check_pair(p);
  PenaltyResult r;
  r.grad_q = Matrix::Zero(p.q.rows(), p.q.cols());
  r.grad_o = Matrix::Zero(p.o.rows(), p.o.cols());
  if (weight == 0) return r;
  const Index dp = p.reduced_dim();
  const Matrix eq = p.q.transpose() * p.q - Matrix::Identity(dp, dp);
  const Matrix eo = p.o * p.o.transpose() - Matrix::Identity(dp, dp);
  r.value = weight * (eq.squaredNorm() + eo.squaredNorm());
  r.grad_q = 4.0 * weight * p.q * eq;
  r.grad_o = 4.0 * weight * eo * p.o;
  return r;
}

TrainReport train_from_pair(const Matrix& x, ProjectionPair init,
                            const std::string& init_kind,
                            const TrainConfig& cfg) {
  check_config(cfg);
  flowsim::check_pair(init);
  require(x.cols() == init.dim(), ErrorKind::kDomain,
          "train: X does not match pair dimension");
  require(x.rows() >= 2 && x.allFinite(), ErrorKind::kDomain,
          "train: X needs L >= 2 finite rows");

  const Matrix sigma = flowsim::covariance(x);
  const double lambda = cfg.orthogonal_penalty_weight;
  ProjectionPair p = std::move(init);
  AdamState state = AdamState::zeros_like(p);

  auto total_loss = [&](const ProjectionPair& pp) {
    return flowsim::recon_loss(x, pp) + orthogonal_penalty(pp, lambda).value;
  };

  TrainReport report;
  report.init_kind = init_kind;
  report.loss_curve.reserve(std::size_t(cfg.epochs + 1));
  const double initial = total_loss(p);
  report.loss_curve.push_back(initial);

  for (std::int64_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    flowsim::Gradients g = flowsim::flow_gradients_cov(sigma, p);
    if (lambda > 0) {
      const PenaltyResult pen = orthogonal_penalty(p, lambda);
      g.grad_q += pen.grad_q;
      g.grad_o += pen.grad_o;
    }
    adam_step(p, g, state, cfg);
    const double loss = total_loss(p);
    if (!std::isfinite(loss) || (initial > 0 && loss > 1e6 * initial)) {
      fail(ErrorKind::kDivergence,
           "training diverged at epoch " + std::to_string(epoch));
    }
    report.loss_curve.push_back(loss);
  }

  report.final_loss = flowsim::recon_loss(x, p);
  const Matrix hidden = x * p.q;
  report.hidden_erank = erank_or_nan(hidden, cfg.reprep_erank);
  report.recon_erank = erank_or_nan(hidden * p.o, cfg.reprep_erank);
  report.final_pair = std::move(p);
  return report;
}

TrainReport train_autoencoder(const Matrix& x, const initlab::InitSpec& init,
                              Index dprime, const TrainConfig& cfg) {
  if (const auto* sel = std::get_if<initlab::ChannelSelect>(&init.kind)) {
    dprime = Index(sel->selection.indices.size());
  }
  ProjectionPair pair = initlab::build_pair(init, x.cols(), dprime);
  return train_from_pair(x, std::move(pair), init.name(), cfg);
}

std::string report_json(const TrainReport& report) {
  nlohmann::ordered_json j;
  j["init"] = report.init_kind;
  j["final_recon_loss"] = report.final_loss;
  j["hidden_erank"] = report.hidden_erank;
  j["recon_erank"] = report.recon_erank;
  j["epochs"] = report.loss_curve.empty() ? 0 : report.loss_curve.size() - 1;
  j["loss_curve"] = report.loss_curve;
  return j.dump(2) + "\n";
}

std::string loss_curve_csv(const TrainReport& report) {
  std::ostringstream os;
  os << std::setprecision(17) << "epoch,loss\n";
  for (std::size_t e = 0; e < report.loss_curve.size(); ++e)
    os << e << ',' << report.loss_curve[e] << "\n";
  return os.str();
}

}  // namespace edistill::proxytrain
