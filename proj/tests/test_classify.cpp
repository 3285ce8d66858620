#include <gtest/gtest.h>

#include <cmath>

#include "mshift/classify.hpp"

using namespace mshift;

namespace {

ProductTree prod2(RootedTree a, RootedTree b, int budget) { return make_product({a, b}, budget); }

double factorial(int n) { return std::tgamma(n + 1.0); }

// sum_{|alpha|=n} n!/alpha! ||S^alpha e_v||^2 by iterated apply, own multinomial
double q_brute(const ProductTree& p, const WeightSystem& ws, int n, PVertex v) {
  double s = 0;
  for (const auto& a : multi_indices_exact(p.d(), n)) {
    double m = factorial(n);
    for (int k : a) m /= factorial(k);
    s += m * moment_brute(ws, p, a, v);
  }
  return s;
}

// (nabla^beta phi)(alpha) = sum_{gamma <= beta} (-1)^|gamma| C(beta, gamma) phi(alpha + gamma)
double forward_difference(const ProductTree& p, const WeightSystem& ws, PVertex v, const MultiIndex& alpha, const MultiIndex& beta) {
  double s = 0;
  for (const auto& g : multi_indices_box(p.d(), *std::max_element(beta.begin(), beta.end()))) {
    bool inside = true;
    double c = 1;
    MultiIndex ag = alpha;
    for (std::size_t j = 0; j < g.size(); ++j) {
      if (g[j] > beta[j]) inside = false;
      else c *= factorial(beta[j]) / (factorial(g[j]) * factorial(beta[j] - g[j]));
      ag[j] += g[j];
    }
    if (!inside) continue;
    s += (total(g) % 2 ? -c : c) * moment_brute(ws, p, ag, v);
  }
  return s;
}

}  // namespace

TEST(Qn, WorkedValues) {
  auto chains = prod2(RootedTree::tnk(1, 0), RootedTree::tnk(1, 0), 12);
  auto da = WeightSystem::power(1);
  EXPECT_EQ(q_power_diag(chains, da, 0, chains.root()), 1.0);
  EXPECT_NEAR(q_power_diag(chains, da, 2, chains.root()), 3.0, 1e-13);
  // a = d gives a joint isometry on every product
  for (auto p : {chains, prod2(RootedTree::tnk(2, 0), RootedTree::tnk(2, 0), 10)}) {
    auto iso = WeightSystem::power(2);
    for (PVertex v : p.vertices_upto(3))
      for (int n = 0; n <= 5; ++n) EXPECT_NEAR(q_power_diag(p, iso, n, v), 1.0, 1e-12);
  }
}

TEST(Qn, MatchesBruteForce) {
  auto p = prod2(RootedTree::tnk(2, 0), RootedTree::tnk(1, 0), 10);
  for (auto ws : {WeightSystem::power(1), WeightSystem::power(3), random_commuting_weights(p, 10, 2)})
    for (PVertex v : p.vertices_upto(3))
      for (int n = 0; n <= 4; ++n) {
        double b = q_brute(p, ws, n, v);
        EXPECT_LE(std::abs(q_power_diag(p, ws, n, v) - b), 1e-12 * b);
      }
  EXPECT_THROW(q_power_diag(p, WeightSystem::power(2), 5, p.intern({8, 5})), std::out_of_range);
}

TEST(Qn, IdentityWithAssociatedShift) {
  std::vector<ProductTree> shapes = {prod2(RootedTree::tnk(2, 0), RootedTree::tnk(1, 0), 12), prod2(RootedTree::tnk(2, 0), RootedTree::tnk(2, 0), 12),
                                     make_product({RootedTree::tnk(2, 0)}, 12)};
  for (auto& p : shapes)
    for (double a : {1.0, 2.0, 3.0}) {
      auto r = qn_identity_check(p, WeightSystem::power(a), 6, 4);
      EXPECT_LE(r.max_relerr, 1e-10);
      EXPECT_GT(r.checked, 0u);
      EXPECT_NEAR(r.max_q, r.max_theta, 1e-10 * r.max_theta);
    }
}

TEST(AssociatedShift, ChainMoments) {
  auto p = prod2(RootedTree::tnk(1, 0), RootedTree::tnk(1, 0), 12);
  for (double a : {1.0, 2.0, 3.0}) {
    auto S = associated_shift(p, WeightSystem::power(a));
    for (int n = 0; n <= 8; ++n) {
      double expect = 1;
      for (int q = 0; q < n; ++q) expect *= (q + 2.0) / (q + a);
      EXPECT_NEAR(S.moment(n, 0), expect, 1e-12 * expect);
      EXPECT_NEAR(S.moment_closed(n, 0), expect, 1e-12 * expect);
    }
    // the tensor root component of two chains is a chain
    EXPECT_EQ(S.tree.tree->generation_size(5), 1u);
  }
}

TEST(AssociatedShift, TreeShapesAndMoments) {
  auto m = associated_shift(prod2(RootedTree::tnk(2, 0), RootedTree::tnk(1, 0), 10), WeightSystem::power(2));
  auto sq = associated_shift(prod2(RootedTree::tnk(2, 0), RootedTree::tnk(2, 0), 10), WeightSystem::power(3));
  for (int g = 1; g <= 4; ++g) {
    EXPECT_EQ(m.tree.tree->generation_size(g), 2u);
    EXPECT_EQ(sq.tree.tree->generation_size(g), 4u);
  }
  for (const AssociatedShift* S : {&m, &sq})
    for (int t = 0; t <= 3; ++t)
      for (int k = 0; k <= 5; ++k) {
        double c = S->moment_closed(k, t);
        EXPECT_NEAR(S->moment(k, S->vertex_at(t)), c, 1e-12 * c);
      }
}

TEST(AssociatedShift, RejectsUnbalanced) {
  auto p = prod2(RootedTree::tnk(2, 0), RootedTree::tnk(1, 0), 10);
  EXPECT_THROW(associated_shift(p, random_weights(p, 10, 1)), std::invalid_argument);
}

TEST(Radii, ConstantSequence) {
  for (double c : {0.25, 1.0, 2.0}) {
    auto r = radii_estimates([c](int) { return c; }, 16, 32);
    EXPECT_NEAR(r.r_est, std::sqrt(c), 1e-12);
    EXPECT_NEAR(r.m_inf_est, std::sqrt(c), 1e-12);
  }
}

TEST(Radii, PowerFamilyApproachesOne) {
  auto p = prod2(RootedTree::tnk(2, 0), RootedTree::tnk(2, 0), 16);
  for (double a : {2.0, 3.0}) {
    auto r = radii_estimates(p, WeightSystem::power(a), 64, 512);
    EXPECT_GE(r.r_est, 0.95);
    EXPECT_LE(r.r_est, 1.0 + 1e-12);
    EXPECT_GE(r.m_inf_est, 0.95);
    EXPECT_LE(r.m_inf_est, 1.0 + 1e-12);
    EXPECT_LE(r.m_inf_est, r.r_est + 1e-12);
  }
  // a < d: every finite-n estimate stays above 1, approaching it slowly
  auto da = radii_estimates(p, WeightSystem::power(1), 64, 512);
  EXPECT_GT(da.r_est, 1.0);
  EXPECT_LT(da.r_est, 1.05);
}

TEST(Subnormality, PowerFamilyMatrix) {
  auto p = prod2(RootedTree::tnk(2, 0), RootedTree::tnk(2, 0), 16);
  for (double a : {2.0, 3.0}) {
    auto r = subnormality_classify(p, WeightSystem::power(a), 10);
    EXPECT_EQ(r.verdict, Verdict::YesAtWindow) << a;
    EXPECT_EQ(r.window, 10);
    EXPECT_FALSE(r.witness.has_value());
    EXPECT_EQ(r.spherical_path, Verdict::YesAtWindow);
    EXPECT_GT(r.differences_checked, 0u);
    // W~ = ({root} + Chi(V_prec))^2 on T_{2,0}^2
    EXPECT_EQ(r.W_tilde.size(), 9u);
  }
  auto ws = WeightSystem::power(1);
  auto r = subnormality_classify(p, ws, 10);
  ASSERT_EQ(r.verdict, Verdict::No);
  ASSERT_TRUE(r.witness.has_value());
  // C_t > 1 for a < d, so the contraction-only fast path is not taken
  EXPECT_FALSE(r.spherical_path.has_value());
  const auto& w = *r.witness;
  double oracle = forward_difference(p, ws, p.intern(w.v), w.alpha, w.beta);
  EXPECT_LT(oracle, -1e-9);
  EXPECT_NEAR(oracle, w.value, 1e-12);
}

TEST(Subnormality, ToralIsometryAndChains) {
  auto c = prod2(RootedTree::tnk(1, 0), RootedTree::tnk(1, 0), 16);
  EXPECT_EQ(subnormality_classify(c, WeightSystem::torally_balanced_ratio({1, 1}, 1, 1), 6).verdict, Verdict::YesAtWindow);
  EXPECT_EQ(subnormality_classify(c, WeightSystem::power(3), 6).verdict, Verdict::YesAtWindow);
  auto r = subnormality_classify(c, WeightSystem::power(1), 6);
  EXPECT_EQ(r.verdict, Verdict::No);
}

TEST(Subnormality, ContractionPrecondition) {
  auto c = prod2(RootedTree::tnk(1, 0), RootedTree::tnk(1, 0), 12);
  EXPECT_THROW(subnormality_classify(c, WeightSystem::torally_balanced_ratio({2, 1}, 1, 1), 3), std::invalid_argument);
}

TEST(Subnormality, DifferenceOracle) {
  // the one-variable Bergman moments 1/(k+1) form a Hausdorff moment sequence
  auto p = make_product({RootedTree::tnk(1, 0)}, 30);
  auto ws = WeightSystem::power(1);
  ASSERT_NEAR(moment_brute(ws, p, {3}, p.root()), 1.0, 1e-12);
  auto berg = WeightSystem::power(2);
  auto phi = [&](const MultiIndex& a) { return moment_brute(berg, p, a, p.root()); };
  EXPECT_NEAR(phi({4}), 1.0 / 5.0, 1e-14);
  EXPECT_FALSE(complete_monotonicity(1, 8, phi, 1e-12).has_value());
  // 1, 2, 3, ... is not
  auto bad = complete_monotonicity(1, 3, [](const MultiIndex& a) { return a[0] + 1.0; }, 1e-12);
  ASSERT_TRUE(bad.has_value());
}

TEST(Hyponormality, PowerFamilyMatrix) {
  auto p = prod2(RootedTree::tnk(2, 0), RootedTree::tnk(2, 0), 16);
  for (double a : {2.0, 3.0}) {
    auto h = hyponormality_classify(p, WeightSystem::power(a), 10);
    EXPECT_EQ(h.verdict, Verdict::Yes) << a;
    EXPECT_EQ(h.spherical_path, Verdict::Yes);
  }
  auto ws = WeightSystem::power(1);
  auto h = hyponormality_classify(p, ws, 10);
  ASSERT_EQ(h.verdict, Verdict::No);
  EXPECT_EQ(h.spherical_path, Verdict::No);
  ASSERT_TRUE(h.witness.has_value());
  // sum_{i,j} <[S_j^*, S_i] f_j, f_i> for the witness f, recomputed by applying the operators
  std::vector<VertexFunction> f(2);
  for (const auto& [key, x] : h.witness->vector) f[static_cast<std::size_t>(key.first)][p.intern(key.second)] += x;
  double q = 0;
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) {
      auto comm = difference(apply(ws, p, j, apply(ws, p, i, f[j]), true), apply(ws, p, i, apply(ws, p, j, f[j], true)));
      q += inner(comm, f[i]);
    }
  EXPECT_LT(q, -1e-8);
  double nf = norm2(f[0]) + norm2(f[1]);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(hyponormality_gram(p, ws, h.witness->generation));
  EXPECT_NEAR(q / nf, es.eigenvalues()(0), 1e-12);
}

TEST(Hyponormality, GramIsSymmetricAndMatchesEntries) {
  auto p = prod2(RootedTree::tnk(2, 0), RootedTree::tnk(1, 0), 8);
  auto ws = random_commuting_weights(p, 8, 3);
  for (int t = 0; t <= 4; ++t) {
    auto G = hyponormality_gram(p, ws, t);
    auto gen = p.generation(t);
    const auto n = static_cast<Eigen::Index>(gen.size());
    ASSERT_EQ(G.rows(), 2 * n);
    EXPECT_LE((G - G.transpose()).norm(), 1e-13);
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j)
        for (Eigen::Index w = 0; w < n; ++w)
          for (Eigen::Index v = 0; v < n; ++v) {
            auto ev = delta(gen[static_cast<std::size_t>(v)]);
            auto c = difference(apply(ws, p, j, apply(ws, p, i, ev), true), apply(ws, p, i, apply(ws, p, j, ev, true)));
            auto it = c.find(gen[static_cast<std::size_t>(w)]);
            double x = it == c.end() ? 0.0 : it->second;
            EXPECT_NEAR(G(i * n + w, j * n + v), x, 1e-13);
          }
  }
}

TEST(Hyponormality, RequiresCommuting) {
  auto p = prod2(RootedTree::tnk(2, 0), RootedTree::tnk(2, 0), 8);
  EXPECT_THROW(hyponormality_classify(p, random_weights(p, 8, 1), 4), std::invalid_argument);
}

TEST(Consistency, SubnormalImpliesNotNonHyponormal) {
  std::vector<ProductTree> shapes = {prod2(RootedTree::tnk(1, 0), RootedTree::tnk(1, 0), 14), prod2(RootedTree::tnk(2, 0), RootedTree::tnk(1, 0), 14),
                                     prod2(RootedTree::tnk(2, 0), RootedTree::tnk(2, 0), 14)};
  for (auto& p : shapes)
    for (auto ws : {WeightSystem::power(1), WeightSystem::power(2), WeightSystem::power(2.5), WeightSystem::power(3), WeightSystem::torally_balanced_ratio({1, 1}, 2, 1)}) {
      auto s = subnormality_classify(p, ws, 4);
      auto h = hyponormality_classify(p, ws, 8);
      if (s.verdict == Verdict::YesAtWindow) {
        EXPECT_NE(h.verdict, Verdict::No);
      }
    }
}

TEST(Consistency, GramAndMonotonePathsAgree) {
  std::vector<ProductTree> shapes = {prod2(RootedTree::tnk(2, 0), RootedTree::tnk(1, 0), 12), prod2(RootedTree::tnk(2, 0), RootedTree::tnk(2, 0), 12)};
  std::vector<WeightSystem> systems = {WeightSystem::power(1), WeightSystem::power(1.5), WeightSystem::power(2), WeightSystem::power(3),
                                       WeightSystem::spherically_balanced({0.5, 0.9, 0.7, 0.8, 0.8, 0.8, 0.8, 0.8, 0.8, 0.8, 0.8, 0.8}),
                                       WeightSystem::spherically_balanced({0.5, 0.6, 0.7, 0.8, 0.85, 0.9, 0.92, 0.94, 0.95, 0.96, 0.97, 0.98})};
  for (auto& p : shapes)
    for (auto& ws : systems) {
      auto h = hyponormality_classify(p, ws, 8);
      ASSERT_TRUE(h.spherical_path.has_value());
      EXPECT_EQ(h.verdict, *h.spherical_path);
    }
}

TEST(EssentialNormality, UnaryDiagonalFormula) {
  auto p = prod2(RootedTree::tnk(1, 0), RootedTree::tnk(1, 0), 14);
  const double a = 2;
  auto ws = WeightSystem::power(a);
  for (int t1 = 1; t1 <= 6; ++t1)
    for (int t2 = 0; t2 <= 6; ++t2) {
      const double t = t1 + t2;
      double expect = (t - t1 + a - 1) / ((t + a) * (t + a - 1));
      EXPECT_NEAR(commutator_diag(p, ws, 0, p.intern({static_cast<VertexId>(t1), static_cast<VertexId>(t2)})), expect, 1e-14);
    }
  auto scan = essential_normality_scan(p, ws, 12);
  for (const auto& row : scan.rows)
    if (row.t >= 2) {
      EXPECT_LE(row.max_A, 1.0 / row.t);
    }
}

TEST(EssentialNormality, ClassicalHasNoBlocks) {
  auto p = make_product({RootedTree::tnk(1, 0)}, 14);
  auto scan = essential_normality_scan(p, WeightSystem::power(1), 12);
  for (const auto& row : scan.rows) {
    EXPECT_EQ(row.max_B_norm, 0.0);
  }
}

TEST(EssentialNormality, BlockIsDiagMinusRankOne) {
  auto p = prod2(RootedTree::tnk(2, 0), RootedTree::tnk(2, 0), 8);
  auto ws = WeightSystem::power(2);
  PVertex v = p.intern({1, 2});
  auto cls = p.sib(0, v);
  ASSERT_EQ(cls.size(), 2u);
  auto B = commutator_block(p, ws, 0, v);
  for (std::size_t x = 0; x < 2; ++x)
    for (std::size_t y = 0; y < 2; ++y) {
      // <[S_1^*, S_1] e_y, e_x> by applying the operators
      auto ey = delta(cls[y]);
      auto c = difference(apply(ws, p, 0, apply(ws, p, 0, ey), true), apply(ws, p, 0, apply(ws, p, 0, ey, true)));
      auto it = c.find(cls[x]);
      EXPECT_NEAR(B(static_cast<Eigen::Index>(x), static_cast<Eigen::Index>(y)), it == c.end() ? 0.0 : it->second, 1e-14);
    }
}

TEST(EssentialNormality, PowerFamilyDecay) {
  auto p = prod2(RootedTree::tnk(2, 0), RootedTree::tnk(2, 0), 16);
  auto scan = essential_normality_scan(p, WeightSystem::power(1), 12);
  EXPECT_NEAR(scan.slope, -1.0, 0.2);
  // block norms times t stay bounded along the tail
  double hi = 0, lo = 1e9;
  for (const auto& row : scan.rows)
    if (row.t >= 4 && row.max_B_norm > 0) {
      hi = std::max(hi, row.max_B_norm * row.t);
      lo = std::min(lo, row.max_B_norm * row.t);
    }
  EXPECT_LT(hi / lo, 2.0);
}

TEST(EssentialNormality, NaryDiagonalWalk) {
  auto p = prod2(RootedTree::nary(2), RootedTree::nary(2), 26);
  const double a = 3;
  auto walk = commutator_diagonal_walk(p, WeightSystem::power(a), 12);
  for (auto [k, x] : walk) {
    // ||S_1 e_v||^2 - lambda_v^2 at depth (k, k)
    double expect = (k + 1.0) / (2 * k + a) - k / (2.0 * (2 * k + a - 1));
    EXPECT_NEAR(x, expect, 1e-14);
  }
  EXPECT_GE(walk.back().second, 0.24);
  EXPECT_LE(walk.back().second, 0.26);
}

TEST(VonNeumann, ConstantPolynomial) {
  auto p = prod2(RootedTree::tnk(1, 0), RootedTree::tnk(1, 0), 8);
  auto r = von_neumann_spot_check(p, WeightSystem::power(2), DualMode::Spherical, 5, 0, 1);
  EXPECT_NEAR(r.worst_ratio * (1 + r.slack), 1.0, 1e-12);
}

TEST(VonNeumann, Szego) {
  auto p = prod2(RootedTree::tnk(1, 0), RootedTree::tnk(1, 0), 8);
  auto r = von_neumann_spot_check(p, WeightSystem::power(2), DualMode::Spherical, 100, 3, 11);
  EXPECT_LE(r.worst_ratio, 1 + 1e-6);
  EXPECT_GT(r.worst_ratio, 0.1);
  auto t = von_neumann_spot_check(p, WeightSystem::torally_balanced_ratio({1, 1}, 1, 1), DualMode::Toral, 20, 3, 12);
  EXPECT_LE(t.worst_ratio, 1 + 1e-6);
}

TEST(VonNeumann, MonomialBound) {
  std::mt19937_64 rng(1);
  Poly z11{{{1, 1}, {1, 0}}};
  EXPECT_NEAR(grid_sup(z11, 2, false, rng), 1.0, 1e-12);
  EXPECT_NEAR(grid_sup(z11, 2, true, rng), 0.5, 1e-12);
  auto p = prod2(RootedTree::tnk(1, 0), RootedTree::tnk(1, 0), 8);
  auto ws = WeightSystem::power(2);
  // ||z1 z2||^2 in the Hardy space of the ball is 1!1!/3! = 1/6
  EXPECT_NEAR(moment_brute(ws, p, {1, 1}, p.root()), 1.0 / 6.0, 1e-14);
  for (PVertex v : p.vertices_upto(4)) EXPECT_LE(std::sqrt(moment_brute(ws, p, {1, 1}, v)), 0.5 * (1 + 1e-12));
}

TEST(VonNeumann, Preconditions) {
  auto p = prod2(RootedTree::tnk(2, 0), RootedTree::tnk(2, 0), 8);
  EXPECT_THROW(von_neumann_spot_check(p, random_weights(p, 8, 1), DualMode::Spherical, 1, 2, 1), std::invalid_argument);
  EXPECT_THROW(von_neumann_spot_check(p, WeightSystem::power(1), DualMode::Spherical, 1, 2, 1), std::invalid_argument);
}
