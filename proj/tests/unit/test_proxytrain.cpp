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


#include <gtest/gtest.h>

#include <cmath>
#include <string>

#include <json.hpp>

#include "edistill/error.hpp"
#include "edistill/proxytrain.hpp"
#include "test_data.hpp"

namespace edistill::proxytrain {
namespace {

ProjectionPair random_pair(Index dim, Index dprime, double stddev, Rng& rng) {
  return {gaussian_matrix(dim, dprime, stddev, rng),
          gaussian_matrix(dprime, dim, stddev, rng)};
}

TEST(OrthogonalPenalty, ZeroOnOrthonormalPairs) {
  Rng rng(1);
  const Matrix q = random_orthonormal(8, 3, rng);
  const PenaltyResult r = orthogonal_penalty({q, q.transpose()}, 2.0);
  EXPECT_NEAR(r.value, 0.0, 1e-24);
  EXPECT_LT(r.grad_q.cwiseAbs().maxCoeff(), 1e-12);
  const PenaltyResult off = orthogonal_penalty(random_pair(8, 3, 1.0, rng), 0.0);
  EXPECT_EQ(off.value, 0.0);
  EXPECT_EQ(off.grad_o.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_THROW(orthogonal_penalty({q, q.transpose()}, -1.0), Error);
}

TEST(OrthogonalPenalty, GradientsMatchFiniteDifferences) {
  Rng rng(2);
  const ProjectionPair p = random_pair(5, 3, 0.8, rng);
  const double w = 0.7, h = 1e-6;
  const PenaltyResult r = orthogonal_penalty(p, w);
  for (Index i = 0; i < 5; ++i) {
    for (Index j = 0; j < 3; ++j) {
      ProjectionPair a = p, b = p;
      a.q(i, j) += h;
      b.q(i, j) -= h;
      EXPECT_NEAR(r.grad_q(i, j),
                  (orthogonal_penalty(a, w).value - orthogonal_penalty(b, w).value) / (2 * h),
                  1e-6);
      a = p;
      b = p;
      a.o(j, i) += h;
      b.o(j, i) -= h;
      EXPECT_NEAR(r.grad_o(j, i),
                  (orthogonal_penalty(a, w).value - orthogonal_penalty(b, w).value) / (2 * h),
                  1e-6);
    }
  }
}

TEST(Adam, FirstStepsMatchHandComputation) {
  ProjectionPair p{Matrix::Constant(1, 1, 1.0), Matrix::Constant(1, 1, -2.0)};
  flowsim::Gradients g;
  g.grad_q = Matrix::Constant(1, 1, -0.5);
  g.grad_o = Matrix::Constant(1, 1, 0.25);
  TrainConfig cfg;
  cfg.learning_rate = 0.1;
  AdamState s = AdamState::zeros_like(p);
  adam_step(p, g, s, cfg);
  // Bias correction makes the first step lr * sign(grad) up to eps.
  EXPECT_NEAR(p.q(0, 0), 1.0 + 0.1, 1e-6);
  EXPECT_NEAR(p.o(0, 0), -2.0 - 0.1, 1e-6);
  g.grad_q(0, 0) = 1.0;
  adam_step(p, g, s, cfg);
  const double m = 0.9 * 0.1 * -0.5 + 0.1 * 1.0;
  const double v = 0.999 * 0.001 * 0.25 + 0.001 * 1.0;
  const double mhat = m / (1 - 0.81), vhat = v / (1 - 0.999 * 0.999);
  const double q1 = 1.0 + 0.1 * 0.5 / (0.5 + 1e-8);
  EXPECT_NEAR(p.q(0, 0), q1 - 0.1 * mhat / (std::sqrt(vhat) + 1e-8), 1e-12);
  EXPECT_EQ(s.step, 2);
}

TEST(CheckConfig, RejectsInvalid) {
  TrainConfig cfg;
  EXPECT_NO_THROW(check_config(cfg));
  cfg.learning_rate = 0;
  EXPECT_THROW(check_config(cfg), Error);
  cfg = {};
  cfg.beta1 = 1.0;
  EXPECT_THROW(check_config(cfg), Error);
  cfg = {};
  cfg.epochs = -1;
  EXPECT_THROW(check_config(cfg), Error);
  cfg = {};
  cfg.orthogonal_penalty_weight = -0.1;
  EXPECT_THROW(check_config(cfg), Error);
}

TEST(Train, SelectionOnExactSupportStaysAtZeroLoss) {
  std::vector<double> spec = {1.0, 0.5, 0.25, 0.0, 0.0, 0.0};
  const Matrix x = testing::channel_aligned(40, spec, 3);
  initlab::ChannelSelection g;
  for (Index j = 0; j < 6; ++j)
    if (x.col(j).norm() > 0) g.indices.push_back(j);
  ASSERT_EQ(g.indices.size(), 3u);
  TrainConfig cfg;
  cfg.epochs = 50;
  cfg.learning_rate = 1e-2;
  const TrainReport r =
      train_autoencoder(x, {initlab::ChannelSelect{g}, 0}, 0, cfg);
  EXPECT_LT(r.final_loss, 1e-6);
  EXPECT_EQ(r.init_kind, "channel_select");
  EXPECT_NEAR(r.hidden_erank, testing::spectrum_erank({1.0, 0.5, 0.25}), 1e-9);
}

TEST(Train, LearnsAnExactSubspace) {
  const Matrix x = dumps::synth_matrix(60, 8, std::vector<double>{1.0, 0.6, 0, 0, 0, 0, 0, 0},
                                       std::nullopt, 4);
  TrainConfig cfg;
  cfg.epochs = 3000;
  cfg.learning_rate = 1e-2;
  const TrainReport r = train_autoencoder(x, {initlab::Orthogonal{}, 5}, 2, cfg);
  EXPECT_LT(r.final_loss, 1e-3 * r.loss_curve.front());
}

TEST(Train, LossCurveShapeAndFirstStep) {
  Rng rng(6);
  const Matrix x = gaussian_matrix(30, 6, 1.0, rng);
  TrainConfig cfg;
  cfg.epochs = 20;
  cfg.learning_rate = 1e-3;
  const ProjectionPair init = random_pair(6, 3, 0.3, rng);
  const TrainReport r = train_from_pair(x, init, "gaussian", cfg);
  ASSERT_EQ(r.loss_curve.size(), 21u);
  EXPECT_DOUBLE_EQ(r.loss_curve[0], flowsim::recon_loss(x, init));
  EXPECT_LT(r.loss_curve[1], r.loss_curve[0]);
  EXPECT_DOUBLE_EQ(r.final_loss, flowsim::recon_loss(x, r.final_pair));
}

TEST(Train, ZeroEpochsReturnsInit) {
  Rng rng(7);
  const Matrix x = gaussian_matrix(10, 4, 1.0, rng);
  TrainConfig cfg;
  cfg.epochs = 0;
  const ProjectionPair init = random_pair(4, 2, 0.3, rng);
  const TrainReport r = train_from_pair(x, init, "gaussian", cfg);
  EXPECT_EQ(r.final_pair.q, init.q);
  EXPECT_EQ(r.loss_curve.size(), 1u);
}

TEST(Train, Deterministic) {
  Rng rng(8);
  const Matrix x = gaussian_matrix(20, 6, 1.0, rng);
  TrainConfig cfg;
  cfg.epochs = 30;
  const initlab::InitSpec spec{initlab::Gaussian{0.1}, 9};
  const TrainReport a = train_autoencoder(x, spec, 3, cfg);
  const TrainReport b = train_autoencoder(x, spec, 3, cfg);
  EXPECT_EQ(a.loss_curve, b.loss_curve);
  EXPECT_EQ(report_json(a), report_json(b));
}

TEST(Train, DivergenceIsReported) {
  Rng rng(10);
  const Matrix x = gaussian_matrix(20, 4, 1.0, rng);
  TrainConfig cfg;
  cfg.epochs = 200;
  cfg.learning_rate = 1e3;
  try {
    train_from_pair(x, random_pair(4, 2, 0.01, rng), "gaussian", cfg);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kDivergence);
    EXPECT_NE(std::string(e.what()).find("epoch"), std::string::npos);
  }
}

TEST(Train, ShapeMismatch) {
  Rng rng(11);
  EXPECT_THROW(train_from_pair(gaussian_matrix(5, 3, 1.0, rng), random_pair(4, 2, 1.0, rng),
                               "gaussian", {}),
               Error);
}

TEST(Report, JsonAndCsv) {
  TrainReport r;
  r.init_kind = "orthogonal";
  r.loss_curve = {2.0, 1.5, 1.0};
  r.final_loss = 1.0;
  const auto j = nlohmann::json::parse(report_json(r));
  EXPECT_EQ(j["init"], "orthogonal");
  EXPECT_EQ(j["epochs"], 2);
  EXPECT_EQ(loss_curve_csv(r), "epoch,loss\n0,2\n1,1.5\n2,1\n");
}

}  // namespace
}  // namespace edistill::proxytrain
