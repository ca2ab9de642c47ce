#include <cmath>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "casegraph/kge.hpp"
#include "oracles.hpp"
#include "planted.hpp"

using namespace casegraph;

namespace {

ComplexVector random_complex(Eigen::Index d, Rng& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  ComplexVector z(d);
  for (Eigen::Index j = 0; j < d; ++j) z(j) = {n(rng), n(rng)};
  return z;
}

Vector random_phases(Eigen::Index d, Rng& rng) {
  std::uniform_real_distribution<double> u(-kPi, kPi);
  Vector v(d);
  for (Eigen::Index j = 0; j < d; ++j) v(j) = u(rng);
  return v;
}

TripleStore tiny_store() {
  TripleStore s;
  s.add(Partition::Train, "a", "r", "b");
  s.add(Partition::Train, "b", "r", "c");
  s.add(Partition::Train, "c", "q", "a");
  s.add(Partition::Test, "a", "q", "c");
  return s;
}

}  // namespace

TEST(TripleStore, LoadsTsvAndRejectsDuplicates) {
  std::istringstream in("a\tr\tb\nb\tr\tc\n\nc\tq\ta\n");
  TripleStore s;
  s.load_tsv(in, Partition::Train);
  EXPECT_EQ(s.num_entities(), 3);
  EXPECT_EQ(s.num_relations(), 2);
  EXPECT_EQ(s.triples(Partition::Train).size(), 3u);
  EXPECT_TRUE(s.is_known({s.entity_id("a"), s.relation_id("r"), s.entity_id("b")}));
  EXPECT_FALSE(s.is_known({s.entity_id("b"), s.relation_id("r"), s.entity_id("a")}));
  std::istringstream dup("a\tr\tb\n");
  EXPECT_THROW(s.load_tsv(dup, Partition::Train), DataError);
  std::istringstream same_elsewhere("a\tr\tb\n");
  EXPECT_NO_THROW(s.load_tsv(same_elsewhere, Partition::Test));
  std::istringstream bad("a\tr\n");
  EXPECT_THROW(s.load_tsv(bad, Partition::Valid), DataError);
  EXPECT_THROW(s.entity_id("zz"), ArgumentError);

  std::ostringstream out;
  s.write_tsv(out, Partition::Train);
  EXPECT_EQ(out.str(), "a\tr\tb\nb\tr\tc\nc\tq\ta\n");
}

TEST(RotateApply, Examples) {
  Rng rng(1);
  ComplexVector h = random_complex(5, rng);
  EXPECT_TRUE(rotate_apply(h, Vector::Zero(5)).isApprox(h, 0));
  ComplexVector ones = ComplexVector::Constant(3, {1.0, 0.0});
  ComplexVector q = rotate_apply(ones, Vector::Constant(3, kPi / 2));
  for (int j = 0; j < 3; ++j) {
    EXPECT_NEAR(q(j).real(), 0.0, 1e-15);
    EXPECT_NEAR(q(j).imag(), 1.0, 1e-15);
  }
  EXPECT_THROW(rotate_apply(h, Vector::Zero(4)), ArgumentError);
}

TEST(RotateApply, MatchesRotationMatrixAndPreservesModulus) {
  Rng rng(2);
  for (int trial = 0; trial < 200; ++trial) {
    ComplexVector h = random_complex(6, rng);
    Vector theta = random_phases(6, rng);
    ComplexVector got = rotate_apply(h, theta);
    for (int j = 0; j < 6; ++j) {
      const double c = std::cos(theta(j)), s = std::sin(theta(j));
      EXPECT_NEAR(got(j).real(), c * h(j).real() - s * h(j).imag(), 1e-12);
      EXPECT_NEAR(got(j).imag(), s * h(j).real() + c * h(j).imag(), 1e-12);
      EXPECT_NEAR(std::abs(got(j)), std::abs(h(j)), 1e-12);
    }
    EXPECT_NEAR(rotate_score(h, theta, got), 0.0, 1e-12);
  }
}

TEST(RotateScore, Examples) {
  ComplexVector h(1), t(1);
  h << std::complex<double>(1, 0);
  t << std::complex<double>(0, 0);
  EXPECT_DOUBLE_EQ(rotate_score(h, Vector::Zero(1), t), 1.0);

  Rng rng(3);
  ComplexVector a = random_complex(4, rng), b = random_complex(4, rng);
  Vector th = random_phases(4, rng);
  double l1 = 0.0, sq = 0.0;
  for (int j = 0; j < 4; ++j) {
    const double re = a(j).real() * std::cos(th(j)) - a(j).imag() * std::sin(th(j)) - b(j).real();
    const double im = a(j).real() * std::sin(th(j)) + a(j).imag() * std::cos(th(j)) - b(j).imag();
    l1 += std::sqrt(re * re + im * im);
    sq += re * re + im * im;
  }
  EXPECT_NEAR(rotate_score(a, th, b), l1, 1e-12);
  EXPECT_NEAR(rotate_score(a, th, b, DistanceNorm::L2), std::sqrt(sq), 1e-12);
}

TEST(RelationAngleVector, Examples) {
  Rng rng(4);
  ComplexVector h = random_complex(3, rng);
  EXPECT_TRUE(relation_angle_vector(h, h).isZero(0));
  ComplexVector one(1), i(1);
  one << std::complex<double>(1, 0);
  i << std::complex<double>(0, 1);
  EXPECT_DOUBLE_EQ(relation_angle_vector(one, i)(0), kPi / 2);
  ComplexVector p3(1), m3(1);
  p3 << std::polar(1.0, 3.0);
  m3 << std::polar(1.0, -3.0);
  EXPECT_NEAR(relation_angle_vector(p3, m3)(0), 2 * kPi - 6.0, 1e-12);
  ComplexVector zero = ComplexVector::Zero(1);
  EXPECT_THROW(relation_angle_vector(zero, one), DataError);
}

TEST(RelationAngleVector, AntisymmetricUnderSwap) {
  Rng rng(5);
  for (int trial = 0; trial < 500; ++trial) {
    ComplexVector h = random_complex(8, rng), t = random_complex(8, rng);
    Vector s = relation_angle_vector(h, t) + relation_angle_vector(t, h);
    for (int j = 0; j < 8; ++j) EXPECT_NEAR(std::abs(wrap_angle(s(j))), 0.0, 1e-12);
  }
}

TEST(CollectRelationAngles, RowsPerPairAndRange) {
  auto planted = planted::two_cluster(6, 50, 1.0, 0.05, 7);
  Matrix a = collect_relation_angles(planted.store, planted.model, 0);
  EXPECT_EQ(a.rows(), 100);
  EXPECT_TRUE((a.array() > -kPi).all() && (a.array() <= kPi).all());
  EXPECT_EQ(a, collect_relation_angles(planted.store, planted.model, 0));

  TripleStore one;
  one.add(Partition::Train, "x", "r", "y");
  one.add_relation("unused");
  KgeModel m(KgeKind::RotatE, 2, 2, 3);
  Rng rng(1);
  m.initialize(6.0, rng);
  EXPECT_EQ(collect_relation_angles(one, m, 0).rows(), 1);
  EXPECT_THROW(collect_relation_angles(one, m, 1), DataError);
}

TEST(DeriveComponents, Examples) {
  Vector v(3);
  v << 0.3, -1.2, 2.0;
  Matrix same = v.transpose().replicate(10, 1);
  auto one = derive_components(same);
  EXPECT_EQ(one.components.count(), 1);
  EXPECT_TRUE(one.components.phases.row(0).transpose().isApprox(v, 1e-12));

  auto single = derive_components(v.transpose());
  EXPECT_EQ(single.components.count(), 1);
  EXPECT_TRUE(single.components.phases.row(0).transpose().isApprox(v, 1e-12));

  DeriveConfig too_big;
  too_big.pca_dim = 4;
  EXPECT_THROW(derive_components(same, too_big), ArgumentError);
}

TEST(DeriveComponents, RecoversTwoPlantedClusters) {
  auto planted = planted::two_cluster(16, 50, 1.0, 0.05, 11);
  Matrix a = collect_relation_angles(planted.store, planted.model, 0);
  auto d = derive_components(a);
  ASSERT_EQ(d.components.count(), 2);
  EXPECT_EQ(d.components.sizes, (std::vector<std::size_t>{50, 50}));
  for (Eigen::Index k = 0; k < 2; ++k) {
    const double target = d.components.phases(k, 0) > 0 ? 1.0 : -1.0;
    EXPECT_LT((d.components.phases.row(k).array() - target).abs().maxCoeff(), 0.1);
  }
}

TEST(DeriveComponents, InvariantUnderRowPermutation) {
  auto planted = planted::two_cluster(8, 20, 1.2, 0.1, 12);
  Matrix a = collect_relation_angles(planted.store, planted.model, 0);
  auto base = derive_components(a);
  Rng rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<Eigen::Index> perm(static_cast<std::size_t>(a.rows()));
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    auto other = derive_components(a(perm, Eigen::all));
    ASSERT_EQ(other.components.count(), base.components.count());
    EXPECT_TRUE(other.components.phases.isApprox(base.components.phases, 1e-9));
  }
}

TEST(DeriveComponents, SingletonsFoldIntoNearestCluster) {
  Matrix a(9, 2);
  a << 0.0, 0.0, 0.01, 0.0, 0.0, 0.01, 0.01, 0.01,  //
      2.0, 2.0, 2.01, 2.0, 2.0, 2.01, 2.01, 2.01,    //
      2.6, 2.6;
  DeriveConfig cfg;
  cfg.bandwidth = 0.3;
  auto d = derive_components(a, cfg);
  EXPECT_EQ(d.components.count(), 2);
  EXPECT_EQ(d.components.assignments[8], d.components.assignments[4]);
  cfg.min_cluster_size = 1;
  EXPECT_EQ(derive_components(a, cfg).components.count(), 3);
}

TEST(DeriveComponents, CircularMeanHandlesBranchCut) {
  Matrix a(4, 1);
  a << 3.1, -3.1, 3.12, -3.12;
  DeriveConfig cfg;
  cfg.pca_dim = 1;
  cfg.bandwidth = 10.0;
  auto circ = derive_components(a, cfg);
  EXPECT_NEAR(std::abs(circ.components.phases(0, 0)), kPi, 1e-9);
  cfg.arithmetic_mean = true;
  EXPECT_NEAR(derive_components(a, cfg).components.phases(0, 0), 0.0, 1e-12);
}

TEST(MsreScore, Examples) {
  Rng rng(6);
  ComplexVector h = random_complex(4, rng), t = random_complex(4, rng);
  Vector v = random_phases(4, rng);
  auto k1 = msre_score(h, v.transpose(), t);
  EXPECT_EQ(k1.score, -rotate_score(h, v, t));
  EXPECT_EQ(k1.component, 0);

  Matrix zero_pi(2, 4);
  zero_pi.row(0).setZero();
  zero_pi.row(1).setConstant(kPi);
  auto s = msre_score(h, zero_pi, h);
  EXPECT_EQ(s.score, 0.0);
  EXPECT_EQ(s.component, 0);
  Matrix pi_zero = zero_pi.colwise().reverse();
  EXPECT_EQ(msre_score(h, pi_zero, h).component, 1);

  Matrix four(4, 4);
  for (int k = 0; k < 4; ++k) four.row(k) = random_phases(4, rng).transpose();
  double best = -1e300;
  for (int k = 0; k < 4; ++k) best = std::max(best, -rotate_score(h, four.row(k).transpose(), t));
  EXPECT_NEAR(msre_score(h, four, t).score, best, 1e-12);
  EXPECT_THROW(msre_score(h, Matrix(0, 4), t), ArgumentError);
}

TEST(MsreScore, MonotoneWhenComponentsAreAppended) {
  Rng rng(7);
  for (int trial = 0; trial < 200; ++trial) {
    ComplexVector h = random_complex(5, rng), t = random_complex(5, rng);
    Matrix comps(1, 5);
    comps.row(0) = random_phases(5, rng).transpose();
    double prev = msre_score(h, comps, t).score;
    for (int k = 0; k < 4; ++k) {
      comps.conservativeResize(comps.rows() + 1, Eigen::NoChange);
      comps.row(comps.rows() - 1) = random_phases(5, rng).transpose();
      const double now = msre_score(h, comps, t).score;
      EXPECT_GE(now, prev);
      prev = now;
    }
  }
}

TEST(Complete, SingleComponentMatchesPlainRanking) {
  TripleStore s = tiny_store();
  KgeModel m(KgeKind::RotatE, s.num_entities(), s.num_relations(), 4);
  Rng rng(8);
  m.initialize(6.0, rng);
  for (int r = 0; r < s.num_relations(); ++r) m.components()[r] = {m.phase(r).transpose(), {1}, {0}};
  CompletionQuery q{0, 0, std::nullopt};
  auto a = complete(s, msre_scorer(m), q);
  auto b = complete(s, plain_scorer(m), q);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].entity, b[i].entity);
  for (std::size_t i = 1; i < a.size(); ++i) EXPECT_GE(a[i - 1].score, a[i].score);

  EXPECT_THROW(complete(s, plain_scorer(m), {0, 9, std::nullopt}), ArgumentError);
  EXPECT_THROW(complete(s, plain_scorer(m), {0, 0, 1}), ArgumentError);
  auto filtered = complete(s, plain_scorer(m), q, true);
  EXPECT_EQ(filtered.size(), a.size() - 1);  // (a, r, b) is known
  for (const auto& r : filtered) EXPECT_NE(r.entity, s.entity_id("b"));
}

TEST(EvalLinkPrediction, PerfectAndAntagonisticScorers) {
  TripleStore s;
  const int n = 20;
  for (int i = 0; i < n; ++i) s.add_entity(planted::ent(i));
  for (int i = 0; i < 10; ++i) s.add(Partition::Test, planted::ent(i), "r", planted::ent(i + 10));
  auto truth = [&](int h, int r, int t) { return s.is_known({h, r, t}) ? 1.0 : 0.0; };
  auto perfect = eval_link_prediction(s, truth);
  EXPECT_DOUBLE_EQ(perfect.mrr, 1.0);
  EXPECT_DOUBLE_EQ(perfect.hits1, 1.0);
  EXPECT_DOUBLE_EQ(perfect.hits10, 1.0);
  EXPECT_EQ(perfect.queries, 20u);

  auto worst = eval_link_prediction(s, [&](int h, int r, int t) { return -truth(h, r, t); }, Partition::Test, false);
  EXPECT_DOUBLE_EQ(worst.mrr, 1.0 / n);
  EXPECT_DOUBLE_EQ(worst.mean_rank, n);

  // all scores equal: every candidate ties, mean rank is the middle position
  auto flat = eval_link_prediction(s, [](int, int, int) { return 0.0; }, Partition::Test, false);
  EXPECT_DOUBLE_EQ(flat.mean_rank, (1.0 + n) / 2.0);
}

TEST(EvalLinkPrediction, RandomScorerMatchesUniformRankExpectation) {
  TripleStore s;
  const int n = 100, queries = 1000;
  for (int i = 0; i < n; ++i) s.add_entity(planted::ent(i));
  Rng rng(9);
  std::uniform_int_distribution<int> pick(0, n - 1);
  for (int q = 0; q < queries; ++q) s.add(Partition::Test, planted::ent(pick(rng)), "r" + std::to_string(q), planted::ent(pick(rng)));
  auto scorer = [](int h, int r, int t) {
    Rng local(static_cast<std::uint64_t>(h) * 1000003ULL + static_cast<std::uint64_t>(r) * 7919ULL + static_cast<std::uint64_t>(t));
    return std::uniform_real_distribution<double>(0.0, 1.0)(local);
  };
  auto m = eval_link_prediction(s, scorer, Partition::Test, false);
  double e1 = 0.0, e2 = 0.0;
  for (int i = 1; i <= n; ++i) e1 += 1.0 / i / n, e2 += 1.0 / (static_cast<double>(i) * i) / n;
  const double sd = std::sqrt((e2 - e1 * e1) / queries);
  EXPECT_LT(std::abs(m.mrr - e1), 3 * sd) << m.mrr << " vs " << e1;
}

TEST(CheckPattern, Examples) {
  const Eigen::Index d = 6;
  EXPECT_TRUE(check_pattern(Pattern::Symmetric, {Vector::Constant(d, kPi)}, 1e-9).holds);
  EXPECT_TRUE(check_pattern(Pattern::Symmetric, {Vector::Zero(d)}, 1e-9).holds);
  EXPECT_FALSE(check_pattern(Pattern::Antisymmetric, {Vector::Constant(d, kPi)}, 1e-9).holds);
  Vector half = Vector::Constant(d, kPi);
  half(3) = 1.0;
  EXPECT_TRUE(check_pattern(Pattern::Antisymmetric, {half}, 0.1).holds);
  EXPECT_FALSE(check_pattern(Pattern::Symmetric, {half}, 0.1).holds);
  EXPECT_TRUE(check_pattern(Pattern::Symmetric, {half}, 0.1, 0.8).holds);

  EXPECT_TRUE(check_pattern(Pattern::Inverse, {Vector::Constant(d, 0.4), Vector::Constant(d, -0.4)}, 1e-9).holds);
  // congruence holds across the branch cut
  EXPECT_TRUE(check_pattern(Pattern::Inverse, {Vector::Constant(d, 3.0), Vector::Constant(d, 2 * kPi - 3.0 - 2 * kPi)}, 1e-9).holds);

  const double tol = 0.05;
  std::vector<Vector> comp = {Vector::Constant(d, 0.9), Vector::Constant(d, 0.4), Vector::Constant(d, 0.5)};
  EXPECT_TRUE(check_pattern(Pattern::Composition, comp, tol).holds);
  comp[0](2) += 2 * tol;
  auto flipped = check_pattern(Pattern::Composition, comp, tol);
  EXPECT_FALSE(flipped.holds);
  EXPECT_NEAR(flipped.residuals(2), 2 * tol, 1e-12);
  EXPECT_THROW(check_pattern(Pattern::Inverse, {Vector::Zero(d)}, tol), ArgumentError);
}

TEST(CheckPattern, ComponentSetsNeedOneSatisfyingChoice) {
  Matrix r1(2, 3), r2(2, 3);
  r1.row(0).setConstant(1.0);
  r1.row(1).setConstant(0.4);
  r2.row(0).setConstant(2.0);
  r2.row(1).setConstant(-0.4);
  EXPECT_TRUE(check_pattern(Pattern::Inverse, std::vector<const Matrix*>{&r1, &r2}, 1e-9).holds);
  r2.row(1).setConstant(-0.3);
  EXPECT_FALSE(check_pattern(Pattern::Inverse, std::vector<const Matrix*>{&r1, &r2}, 1e-9).holds);
}

TEST(KgeLoss, GradientMatchesFiniteDifferences) {
  for (auto [kind, norm] : {std::pair{KgeKind::RotatE, DistanceNorm::L1}, std::pair{KgeKind::RotatE, DistanceNorm::L2},
                            std::pair{KgeKind::TransE, DistanceNorm::L2}}) {
    Rng rng(10);
    for (int trial = 0; trial < 10; ++trial) {
      KgeModel m(kind, 6, 2, 4, norm);
      fill_normal(m.entity_table().value, rng, 0.7);
      fill_normal(m.relation_table().value, rng, 1.0);
      Triple pos{0, 1, 2};
      std::vector<Triple> negs = {{3, 1, 2}, {0, 1, 4}, {5, 1, 2}};
      ParameterList params = m.parameters();
      zero_grads(params);
      kge_loss(m, pos, negs, 2.0, false, 1.0, 1.0, true);
      Vector analytic = flatten_grads(params);
      Vector x = flatten_values(params);
      Vector numeric = oracle::numeric_gradient(
          [&](const Vector& v) {
            assign_values(params, v);
            return kge_loss(m, pos, negs, 2.0, false, 1.0, 1.0, false);
          },
          x);
      assign_values(params, x);
      EXPECT_LT(relative_error(analytic, numeric), 1e-4);
    }
  }
}

TEST(KgeLoss, AdversarialWeightsFavourHardNegatives) {
  KgeModel m(KgeKind::RotatE, 4, 1, 2);
  Rng rng(11);
  m.initialize(6.0, rng);
  const Triple pos{0, 0, 1};
  const std::vector<Triple> negs = {{0, 0, 2}, {0, 0, 3}};
  const double uniform = kge_loss(m, pos, negs, 6.0, false, 1.0, 1.0, false);
  const double adv = kge_loss(m, pos, negs, 6.0, true, 1.0, 1.0, false);
  EXPECT_TRUE(std::isfinite(adv));
  // with two negatives the adversarial weighting shifts mass to the closer (harder) one
  const double d2 = m.distance(0, 0, 2), d3 = m.distance(0, 0, 3);
  if (std::abs(d2 - d3) > 1e-9) {
    EXPECT_GT(adv, uniform);
  }
  EXPECT_THROW(kge_loss(m, pos, {}, 6.0, false, 1.0, 1.0, false), ArgumentError);
}

TEST(TrainKge, ValidationAndDeterminism) {
  KgeTrainConfig cfg;
  EXPECT_THROW(train_kge(TripleStore(), cfg), ArgumentError);
  cfg.gamma = 0.0;
  EXPECT_THROW(cfg.validate(), ArgumentError);
  cfg = {};
  cfg.negatives = 0;
  EXPECT_THROW(cfg.validate(), ArgumentError);

  cfg = {};
  cfg.dim = 8;
  cfg.epochs = 20;
  auto store = planted::symmetric(30, 4);
  KgeModel a = train_kge(store, cfg), b = train_kge(store, cfg);
  EXPECT_EQ(a.entity_values(), b.entity_values());
  EXPECT_EQ(a.relation_values(), b.relation_values());
  EXPECT_TRUE((a.relation_values().array() > -kPi).all() && (a.relation_values().array() <= kPi).all());
}

TEST(TrainKge, HalvesLearningRateAfterStaleValidation) {
  auto store = planted::symmetric(20, 5);
  // a validation triple the model can never rank well keeps MRR flat
  store.add(Partition::Valid, planted::ent(0), "sym", planted::ent(0));
  KgeTrainConfig cfg;
  cfg.dim = 4;
  cfg.epochs = 40;
  cfg.eval_every = 1;
  cfg.patience = 3;
  cfg.learning_rate = 1e-9;
  KgeTrainReport report;
  train_kge(store, cfg, &report);
  ASSERT_EQ(report.learning_rates.size(), 40u);
  EXPECT_LT(report.learning_rates.back(), 1e-9);
  const double ratio = report.learning_rates.front() / report.learning_rates.back();
  EXPECT_NEAR(std::log2(ratio), std::round(std::log2(ratio)), 1e-9);
}

TEST(TrainKge, TransEBaselineLearnsChain) {
  TripleStore s;
  for (int i = 0; i < 10; ++i) s.add(Partition::Train, planted::ent(i), "next", planted::ent(i + 1));
  KgeTrainConfig cfg;
  cfg.kind = KgeKind::TransE;
  cfg.dim = 8;
  cfg.epochs = 200;
  cfg.learning_rate = 0.02;
  KgeModel m = train_kge(s, cfg);
  auto metrics = eval_link_prediction(s, plain_scorer(m), Partition::Train);
  EXPECT_GT(metrics.mrr, 0.5);
}

TEST(KgeModel, CheckpointRoundTrip) {
  auto planted = planted::two_cluster(4, 5, 1.0, 0.05, 3);
  KgeModel& m = planted.model;
  m.components()[0] = derive_components(collect_relation_angles(planted.store, m, 0)).components;
  KgeModel back = KgeModel::from_json(nlohmann::json::parse(m.to_json(&planted.store).dump()));
  EXPECT_EQ(back.entity_values(), m.entity_values());
  EXPECT_EQ(back.components().at(0).phases, m.components().at(0).phases);
  EXPECT_EQ(back.components().at(0).sizes, m.components().at(0).sizes);
  auto j = m.to_json();
  j["version"] = "casegraph.kge/0";
  EXPECT_THROW(KgeModel::from_json(j), DataError);
}

TEST(AngleProjection, WritesOneRowPerPair) {
  auto planted = planted::two_cluster(4, 3, 1.0, 0.05, 3);
  auto d = derive_components(collect_relation_angles(planted.store, planted.model, 0));
  std::ostringstream out;
  write_angle_projection(out, d);
  const std::string text = out.str();
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 7);
  EXPECT_EQ(text.rfind("pair,pc1,pc2,component\n", 0), 0u);
}
