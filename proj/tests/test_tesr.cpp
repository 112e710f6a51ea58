#include <gtest/gtest.h>

#include "tesr/finite_difference.hpp"
#include "tesr/metrics.hpp"
#include "tesr/simgen.hpp"
#include "tesr/training.hpp"
#include "test_util.hpp"

using namespace tesr;
using tesr::test::max_rel_error;
using tesr::test::randn;

namespace {

DomainDataset regression_set(const Tensor2D& x, const Tensor2D& y, int id = 0) {
  DomainDataset ds;
  ds.x = x;
  ds.y = y;
  ds.domain_id = id;
  ds.task = TaskKind::regression;
  return ds;
}

DomainDataset binary_set(const Tensor2D& x, const Tensor2D& labels) {
  DomainDataset ds;
  ds.x = x;
  ds.y = labels;
  ds.task = TaskKind::classification;
  ds.num_classes = 2;
  return ds;
}

/// Two well separated Gaussian blobs in R^2 with labels 0/1.
DomainDataset blobs(Index n, std::mt19937_64& rng) {
  Tensor2D x = randn(n, 2, rng, 0.5);
  Tensor2D y(n, 1);
  for (Index i = 0; i < n; ++i) {
    y(i, 0) = i % 2;
    x.row(i).array() += i % 2 ? 4.0 : -4.0;
  }
  return binary_set(x, y);
}

TesrConfig small_config() {
  TesrConfig c;
  c.rc_dim = 4;
  c.rt_dim = 3;
  c.hidden = {8, 6};
  c.batch_size = 16;
  c.epochs = 5;
  return c;
}

}  // namespace

TEST(SourceLoss, ConstantRepresentationNoPenalties) {
  std::mt19937_64 rng(1);
  const std::vector<Tensor2D> reps{Tensor2D::Constant(8, 3, 1.0)};
  const std::vector<Tensor2D> ys{randn(8, 1, rng)};
  const SourceLossResult r = source_loss(reps, ys, {randn(8, 3, rng)}, 0.0, 0.0);
  EXPECT_EQ(r.loss, 0.0);
}

TEST(SourceLoss, ZeroMapHasNoInvariancePenalty) {
  std::mt19937_64 rng(2);
  const std::vector<Tensor2D> reps{Tensor2D::Zero(6, 2), Tensor2D::Zero(6, 2), Tensor2D::Zero(6, 2)};
  const std::vector<Tensor2D> ys{randn(6, 1, rng), randn(6, 1, rng), randn(6, 1, rng)};
  const std::vector<Tensor2D> gs{randn(6, 2, rng), randn(6, 2, rng), randn(6, 2, rng)};
  const SourceLossResult r = source_loss(reps, ys, gs, 0.0, 1.0);
  EXPECT_EQ(r.invariance, 0.0);
}

TEST(SourceLoss, TermsMatchDefinition) {
  std::mt19937_64 rng(3);
  const std::vector<Tensor2D> reps{randn(7, 2, rng), randn(9, 2, rng)};
  const std::vector<Tensor2D> ys{randn(7, 1, rng), randn(9, 1, rng)};
  const std::vector<Tensor2D> gs{randn(7, 2, rng), randn(9, 2, rng)};
  const SourceLossResult r = source_loss(reps, ys, gs, 0.3, 0.7);
  Tensor2D z = Tensor2D::Zero(16, 2);
  z.topRows(7).col(0).setOnes();
  z.bottomRows(9).col(1).setOnes();
  const double expect = -dcov_u(reps[0], ys[0]) - dcov_u(reps[1], ys[1]) +
                        0.3 * (energy_distance(reps[0], gs[0]) + energy_distance(reps[1], gs[1])) +
                        0.7 * dcov_u(vconcat(reps[0], reps[1]), z);
  EXPECT_NEAR(r.loss, expect, 1e-12);
}

TEST(SourceLoss, TooSmallBatchThrows) {
  EXPECT_THROW(source_loss({Tensor2D::Zero(3, 2)}, {Tensor2D::Zero(3, 1)}, {Tensor2D::Zero(3, 2)}, 0.1, 0.1), Error);
}

TEST(SourceLoss, GradientThroughNetworkMatchesFiniteDifferences) {
  std::mt19937_64 rng(4);
  MlpNet net = build_rep_net(3, 2, rng, {5, 4});
  const Tensor2D x = randn(20, 3, rng);
  const std::vector<Tensor2D> ys{randn(10, 1, rng), randn(10, 1, rng)};
  const std::vector<Tensor2D> gs{randn(10, 2, rng), randn(10, 2, rng)};
  for (bool standardize : {false, true}) {
    auto loss_of = [&](const MlpNet& n) {
      const RepBatch b = rep_forward_train(n, x, standardize);
      return source_loss({b.output.topRows(10), b.output.bottomRows(10)}, ys, gs, 0.1, 0.1);
    };
    const RepBatch b = rep_forward_train(net, x, standardize);
    const SourceLossResult l = loss_of(net);
    const ParameterSet g = rep_backward_train(net, b, vconcat(l.grads[0], l.grads[1]));
    const ParameterSet fd = finite_difference_gradient(
        [&](const ParameterSet& p) {
          MlpNet n = net;
          n.params = p;
          return loss_of(n).loss;
        },
        net.params, 1e-5);
    EXPECT_LT(max_rel_error(g.flatten(), fd.flatten()), 1e-4) << "standardize=" << standardize;
  }
}

TEST(TargetLoss, ConstantRtReducesToRcTerm) {
  std::mt19937_64 rng(5);
  const Tensor2D rc = randn(10, 3, rng), y = randn(10, 1, rng);
  const TargetLossResult r = target_loss(Tensor2D::Constant(10, 2, 0.5), rc, y, randn(10, 2, rng), 0.4, 0.0);
  EXPECT_NEAR(r.sufficiency, dcov_u(rc, y), 1e-12);
  EXPECT_EQ(r.independence, 0.0);
}

TEST(TargetLoss, IndependencePenaltyIsDcov) {
  std::mt19937_64 rng(6);
  const Tensor2D rt = randn(10, 2, rng), rc = randn(10, 3, rng), y = randn(10, 1, rng);
  const TargetLossResult r = target_loss(rt, rc, y, randn(10, 2, rng), 0.1, 0.1);
  EXPECT_NEAR(r.independence, dcov_u_bruteforce(rt, rc), 1e-10);
}

TEST(TargetLoss, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(7);
  for (int rep = 0; rep < 5; ++rep) {
    const Tensor2D rt = randn(12, 2, rng), rc = randn(12, 3, rng), y = randn(12, 1, rng), g = randn(12, 2, rng);
    const TargetLossResult r = target_loss(rt, rc, y, g, 0.3, 0.2);
    const Tensor2D fd = finite_difference_gradient(
        [&](const Tensor2D& t) { return target_loss(t, rc, y, g, 0.3, 0.2).loss; }, rt, 1e-5);
    EXPECT_LT(max_rel_error(r.grad, fd), 1e-4);
  }
}

TEST(TargetLoss, RowMismatchThrows) {
  EXPECT_THROW(target_loss(Tensor2D::Zero(6, 2), Tensor2D::Zero(5, 2), Tensor2D::Zero(6, 1), Tensor2D::Zero(6, 2),
                           0.1, 0.1),
               Error);
}

TEST(SupervisedLoss, GradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(8);
  const Tensor2D out1 = randn(9, 1, rng), out3 = randn(9, 3, rng), yr = randn(9, 1, rng);
  Tensor2D yb(9, 1), yc(9, 1);
  for (Index i = 0; i < 9; ++i) {
    yb(i, 0) = i % 2;
    yc(i, 0) = i % 3;
  }
  struct Case {
    const Tensor2D* out;
    const Tensor2D* y;
    TaskKind task;
  };
  for (const Case c : {Case{&out1, &yb, TaskKind::classification}, Case{&out3, &yc, TaskKind::classification},
                       Case{&out1, &yr, TaskKind::regression}}) {
    const SupervisedLoss l = supervised_loss(*c.out, *c.y, c.task);
    const Tensor2D fd = finite_difference_gradient(
        [&](const Tensor2D& o) { return supervised_loss(o, *c.y, c.task).loss; }, *c.out, 1e-5);
    EXPECT_LT(max_rel_error(l.grad, fd), 1e-6);
  }
}

TEST(Stage1, PureDcovLossDecreasesOverFirstEpoch) {
  std::mt19937_64 data_rng(9);
  const Tensor2D x = randn(256, 5, data_rng);
  Tensor2D y = x.col(0).array().square().matrix() + 0.3 * randn(256, 1, data_rng);
  const std::vector<DomainDataset> src{regression_set(x, y)};
  TesrConfig c = small_config();
  c.lambda_e = 0.0;
  c.lambda_z = 0.0;
  c.epochs = 0;
  Rng r0(1);
  const MlpNet init = train_stage1(src, c, r0);
  c.epochs = 1;
  Rng r1(1);
  const MlpNet after = train_stage1(src, c, r1);
  Rng g(0);
  EXPECT_LT(source_objective(after, src, c, g).loss, source_objective(init, src, c, g).loss);
}

TEST(Stage1, RejectsInconsistentSources) {
  std::mt19937_64 rng(10);
  const std::vector<DomainDataset> src{regression_set(randn(20, 3, rng), randn(20, 1, rng)),
                                       regression_set(randn(20, 4, rng), randn(20, 1, rng))};
  Rng r(1);
  EXPECT_THROW(train_stage1(src, small_config(), r), Error);
  EXPECT_THROW(train_stage1({}, small_config(), r), Error);
}

TEST(Stage1, ConfigValidation) {
  TesrConfig c = small_config();
  c.batch_size = 3;
  EXPECT_THROW(c.validate(), Error);
  c = small_config();
  c.lambda_c = -1;
  EXPECT_THROW(c.validate(), Error);
}

TEST(Stage1, DiagnosticsImproveOnSmallExample1) {
  const auto st = sim::gen_example1(400, 100, 10, 3, 10);
  const auto held = sim::gen_example1(200, 100, 10, 4, 10);
  TesrConfig c = small_config();
  c.rc_dim = 8;
  c.hidden = {32, 16};
  c.epochs = 0;
  Rng r0(2);
  const MlpNet init = train_stage1(st.sources, c, r0);
  c.epochs = 40;
  Rng r1(2);
  const MlpNet rc = train_stage1(st.sources, c, r1);
  auto diag = [&](const MlpNet& net) {
    Rng g(77);
    return source_objective(net, held.sources, c, g);
  };
  const SourceLossResult before = diag(init), after = diag(rc);
  EXPECT_LT(after.invariance, before.invariance);
  EXPECT_GT(after.sufficiency, before.sufficiency);

  // The Gaussian penalty pulls the held-out representation towards N(0, I).
  c.lambda_e = 0.0;
  Rng r2(2);
  const MlpNet free = train_stage1(st.sources, c, r2);
  c.lambda_e = 10.0;
  Rng r3(2);
  const MlpNet pulled = train_stage1(st.sources, c, r3);
  EXPECT_LT(diag(pulled).gaussianity, diag(free).gaussianity);
}

TEST(Stage2, LeavesRcUntouchedAndFeaturesConcatenate) {
  const auto st = sim::gen_example1(200, 80, 10, 5, 50);
  TesrConfig c = small_config();
  Rng r(3);
  const MlpNet rc = train_stage1(st.sources, c, r);
  const Vector before = rc.params.flatten();
  const MlpNet rt = train_stage2(st.targets[0], rc, c, r);
  EXPECT_TRUE((rc.params.flatten().array() == before.array()).all());
  const TesrModel m{rc, rt};
  const Tensor2D f = tesr_features(m, st.tests[0].x);
  EXPECT_EQ(f.cols(), c.rc_dim + c.rt_dim);
  EXPECT_EQ((f - hconcat(rep_forward(rc, st.tests[0].x), rep_forward(rt, st.tests[0].x))).cwiseAbs().maxCoeff(), 0.0);
}

TEST(Stage2, ZeroNetworksGiveZeroFeatures) {
  std::mt19937_64 rng(1);
  MlpNet a = build_rep_net(4, 2, rng), b = build_rep_net(4, 3, rng);
  a.params = a.params.zeros_like();
  b.params = b.params.zeros_like();
  const Tensor2D f = tesr_features({a, b}, randn(5, 4, rng));
  EXPECT_EQ(f.cols(), 5);
  EXPECT_EQ(f.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Stage2, LossDecreasesOverFirstEpoch) {
  const auto st = sim::gen_example1(200, 256, 10, 6, 50);
  TesrConfig c = small_config();
  c.lambda_e0 = 0.0;  // no reference sample noise in the objective
  Rng r(4);
  const MlpNet rc = train_stage1(st.sources, c, r);
  const DomainDataset& t = st.targets[0];
  const Tensor2D rc_out = rep_forward(rc, t.x);
  const Tensor2D y = response_features(t);
  auto objective = [&](const MlpNet& rt) {
    return target_loss(rep_forward(rt, t.x), rc_out, y, Tensor2D::Zero(t.size(), c.rt_dim), c.lambda_c, 0.0).loss;
  };
  c.epochs = 0;
  Rng r0(5);
  const MlpNet init = train_stage2(t, rc, c, r0);
  c.epochs = 1;
  Rng r1(5);
  const MlpNet after = train_stage2(t, rc, c, r1);
  EXPECT_LT(objective(after), objective(init));
}

TEST(Stage2, DimensionMismatchThrows) {
  std::mt19937_64 rng(1);
  const MlpNet rc = build_rep_net(5, 2, rng);
  Tensor2D y(10, 1);
  y.setZero();
  y(0, 0) = 1;
  Rng r(1);
  EXPECT_THROW(train_stage2(binary_set(randn(10, 4, rng), y), rc, small_config(), r), Error);
}

TEST(Ddr, EquivalentToStage1OnTarget) {
  const auto st = sim::gen_example1(50, 120, 10, 7, 50);
  TesrConfig c = small_config();
  std::vector<double> t1, t2;
  TrainOptions o1, o2;
  o1.loss_trace = &t1;
  o2.loss_trace = &t2;
  Rng a(11), b(11);
  const MlpNet d = train_ddr(st.targets[0], c, a, o1);
  TesrConfig c0 = c;
  c0.lambda_z = 0.0;
  const MlpNet s = train_stage1({st.targets[0]}, c0, b, o2);
  ASSERT_FALSE(t1.empty());
  EXPECT_EQ(t1, t2);
  EXPECT_EQ(d.output_dim(), c.rc_dim);
}

TEST(Ddr, HeldOutDependenceIncreases) {
  const auto st = sim::gen_example1(50, 300, 10, 8, 500);
  TesrConfig c = small_config();
  c.epochs = 0;
  Rng r0(3);
  const MlpNet init = train_ddr(st.targets[0], c, r0);
  c.epochs = 30;
  Rng r1(3);
  const MlpNet trained = train_ddr(st.targets[0], c, r1);
  const DomainDataset& test = st.tests[0];
  EXPECT_GT(dcov_u(rep_forward(trained, test.x), test.y), dcov_u(rep_forward(init, test.x), test.y));
}

TEST(Dnn, SeparableBlobs) {
  std::mt19937_64 rng(12);
  const DomainDataset d = blobs(200, rng);
  TesrConfig c;
  c.epochs = 300;
  Rng r(1);
  const MlpNet net = train_dnn(d, c, r);
  EXPECT_GT(score(rep_forward(net, d.x), d), 0.99);
}

TEST(Dnn, ConstantLabelsGiveMajorityShare) {
  std::mt19937_64 rng(13);
  DomainDataset d = binary_set(randn(100, 3, rng), Tensor2D::Ones(100, 1));
  TesrConfig c;
  c.epochs = 50;
  Rng r(1);
  const MlpNet net = train_dnn(d, c, r);
  DomainDataset test = binary_set(randn(200, 3, rng), Tensor2D::Ones(200, 1));
  EXPECT_EQ(score(rep_forward(net, test.x), test), 1.0);
}

TEST(Dnn, NoiselessLinearRegression) {
  std::mt19937_64 rng(14);
  const Tensor2D x = randn(500, 3, rng), xt = randn(500, 3, rng);
  const DomainDataset d = regression_set(x, x.col(0));
  const DomainDataset test = regression_set(xt, xt.col(0));
  TesrConfig c;
  c.epochs = 300;
  Rng r(1);
  const MlpNet net = train_dnn(d, c, r);
  EXPECT_LT(score(rep_forward(net, test.x), test), 0.01);
}

TEST(Predictor, SeparableFeatures) {
  std::mt19937_64 rng(15);
  const DomainDataset d = blobs(200, rng);
  TesrConfig c;
  Rng r(2);
  const MlpNet head = train_predictor(d.x, d, c, r);
  EXPECT_GT(score(rep_forward(head, d.x), d), 0.99);
  EXPECT_EQ(head.output_dim(), 1);
}

TEST(Predictor, MulticlassHeadWidth) {
  std::mt19937_64 rng(16);
  Tensor2D x = randn(90, 2, rng, 0.3), y(90, 1);
  for (Index i = 0; i < 90; ++i) {
    y(i, 0) = i % 3;
    x(i, 0) += 3.0 * (i % 3);
  }
  DomainDataset d;
  d.x = x;
  d.y = y;
  d.task = TaskKind::classification;
  d.num_classes = 3;
  TesrConfig c;
  c.epochs = 100;
  Rng r(1);
  const MlpNet head = train_predictor(d.x, d, c, r);
  EXPECT_EQ(head.output_dim(), 3);
  EXPECT_GT(score(rep_forward(head, d.x), d), 0.95);
}

TEST(Pipeline, ReproducibleBitForBit) {
  const auto st = sim::gen_example1(100, 60, 10, 9, 100);
  auto run = [&]() {
    TesrConfig c = small_config();
    Rng r(21);
    const MlpNet rc = train_stage1(st.sources, c, r);
    const MlpNet rt = train_stage2(st.targets[0], rc, c, r);
    const TesrModel m{rc, rt};
    const MlpNet head = train_predictor(tesr_features(m, st.targets[0].x), st.targets[0], c, r);
    return rep_forward(head, tesr_features(m, st.tests[0].x));
  };
  const Tensor2D a = run(), b = run();
  EXPECT_TRUE((a.array() == b.array()).all());
}

TEST(Selection, KeepsBestScoringEpoch) {
  std::mt19937_64 rng(17);
  const DomainDataset d = blobs(60, rng);
  TesrConfig c;
  c.epochs = 6;
  int calls = 0;
  TrainOptions o;
  // Scores favour the third epoch.
  std::vector<Vector> seen;
  o.select = [&](const MlpNet& net) {
    seen.push_back(net.params.flatten());
    return std::abs(++calls - 3.0);
  };
  Rng r(1);
  const MlpNet net = train_dnn(d, c, r, o);
  ASSERT_EQ(calls, 6);
  EXPECT_TRUE((net.params.flatten().array() == seen[2].array()).all());
}
