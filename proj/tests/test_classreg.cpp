#include "otfed/ot/classreg.hpp"
#include "oracles.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

using namespace otfed;
using namespace otfed::ot;

namespace {

struct Toy {
    Dataset source;
    Matrix target;
};

// Two labelled source blobs on the x axis; the target is the same pair of
// blobs moved by (1, 2).
Toy two_class_toy(double separation, double sigma, int n = 40, std::uint64_t seed = 1)
{
    Rng rng(seed);
    Matrix xs(n, 2);
    Matrix xt(n, 2);
    Labels y(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        const int c = i % 2;
        const double cx = c ? separation / 2 : -separation / 2;
        y[static_cast<std::size_t>(i)] = c;
        xs(i, 0) = cx + sigma * rng.normal();
        xs(i, 1) = sigma * rng.normal();
        xt(i, 0) = cx + sigma * rng.normal() + 1.0;
        xt(i, 1) = 2.0 + sigma * rng.normal();
    }
    return {Dataset(xs, y, "toy"), xt};
}

Matrix random_plan(Rng& rng, Eigen::Index n, Eigen::Index m)
{
    Matrix p = testing_support::random_matrix(rng, n, m, 0.05, 1.0);
    return p / p.sum();
}

} // namespace

TEST(ClassRegConfig, Defaults)
{
    const ClassRegConfig cfg;
    EXPECT_EQ(cfg.epsilon, 50.0);
    EXPECT_EQ(cfg.eta, 5000.0);
    EXPECT_EQ(cfg.outer_iters, 10);
    EXPECT_EQ(cfg.outer_tol, 1e-6);
}

TEST(ClassRegConfig, Validation)
{
    const auto toy = two_class_toy(6, 1);
    ClassRegConfig cfg;
    cfg.epsilon = 0.0;
    EXPECT_THROW(class_regularized_transport(toy.source, toy.target, cfg), Error);
    cfg = {};
    cfg.eta = -1.0;
    EXPECT_THROW(class_regularized_transport(toy.source, toy.target, cfg), Error);
    cfg = {};
    cfg.outer_iters = 0;
    EXPECT_THROW(class_regularized_transport(toy.source, toy.target, cfg), Error);
    const Dataset unlabeled(toy.source.features, std::nullopt, "u");
    EXPECT_THROW(class_regularized_transport(unlabeled, toy.target, {}), Error);
}

TEST(GroupNormMajorizer, MatchesFiniteDifferences)
{
    Rng rng(8);
    for (int t = 0; t < 20; ++t) {
        const auto n = static_cast<Eigen::Index>(3 + rng.below(5));
        const auto m = static_cast<Eigen::Index>(2 + rng.below(5));
        const Matrix plan = random_plan(rng, n, m);
        Labels y(static_cast<std::size_t>(n));
        for (auto& v : y) {
            v = static_cast<int>(rng.below(3));
        }
        const Matrix g = group_norm_majorizer(plan, y);
        const Eigen::Map<const Vector> flat(plan.data(), plan.size());
        const Vector fd = oracle::central_difference(
            [&](const Vector& v) { return group_lasso_penalty(Eigen::Map<const Matrix>(v.data(), n, m), y); }, flat, 1e-7);
        const Eigen::Map<const Vector> gflat(g.data(), g.size());
        EXPECT_LT((gflat - fd).norm() / fd.norm(), 1e-5);
    }
}

TEST(GroupNormMajorizer, SingleClassColumnsHaveUnitNorm)
{
    Rng rng(3);
    const Matrix plan = random_plan(rng, 5, 4);
    const Labels one(5, 0);
    const Matrix g = group_norm_majorizer(plan, one);
    for (Eigen::Index j = 0; j < g.cols(); ++j) {
        EXPECT_NEAR(g.col(j).norm(), 1.0, 1e-9);
    }
    // With equal entries down a column the gradient is constant down it.
    const Matrix flat = Matrix::Constant(5, 4, 0.05);
    const Matrix gu = group_norm_majorizer(flat, one);
    for (Eigen::Index j = 0; j < 4; ++j) {
        EXPECT_NEAR(gu.col(j).maxCoeff() - gu.col(j).minCoeff(), 0.0, 1e-15);
    }
}

TEST(GroupNormMajorizer, ZeroPlanIsFinite)
{
    const Matrix g = group_norm_majorizer(Matrix::Zero(4, 3), Labels{0, 1, 0, 1});
    EXPECT_TRUE(g.allFinite());
    EXPECT_EQ(g.cwiseAbs().maxCoeff(), 0.0);
}

TEST(GroupLasso, HandValue)
{
    Matrix plan(2, 1);
    plan << 0.3, 0.4;
    EXPECT_NEAR(group_lasso_penalty(plan, Labels{0, 0}), 0.5, 1e-15);
    EXPECT_NEAR(group_lasso_penalty(plan, Labels{0, 1}), 0.7, 1e-15);
}

TEST(ClassReg, EtaZeroIsPlainSinkhorn)
{
    const auto toy = two_class_toy(6, 1.5);
    ClassRegConfig cfg;
    cfg.eta = 0.0;
    const auto reg = class_regularized_transport(toy.source, toy.target, cfg);
    const auto plain = sinkhorn(cost_matrix(toy.source.features, toy.target), toy.source.weights,
                                uniform_weights(toy.target.rows()), {cfg.epsilon, cfg.inner_tol, cfg.inner_max_iter});
    EXPECT_LT((reg.coupling.plan - plain.plan).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(ClassReg, ObjectiveNonIncreasingAndCouplingValid)
{
    for (double sep : {6.0, 14.0}) {
        for (double sig : {1.5, 3.0}) {
            const auto toy = two_class_toy(sep, sig);
            const auto r = class_regularized_transport(toy.source, toy.target, {});
            ASSERT_GE(r.objective_history.size(), 2u);
            for (std::size_t i = 1; i < r.objective_history.size(); ++i) {
                EXPECT_LE(r.objective_history[i], r.objective_history[i - 1] + 1e-8);
            }
            EXPECT_LE(r.coupling.row_violation(), 1e-9);
            EXPECT_LE(r.coupling.col_violation(), 1e-9);
            EXPECT_GE(r.coupling.plan.minCoeff(), 0.0);
            const double obj = class_reg_objective(r.coupling.plan, cost_matrix(toy.source.features, toy.target).values,
                                                   *toy.source.labels, 50.0, 5000.0);
            EXPECT_NEAR(obj, r.objective_history.back(), 1e-9 * std::abs(obj));
        }
    }
}

TEST(ClassReg, PurityBeatsPlainSinkhorn)
{
    for (double sep : {6.0, 14.0}) {
        for (double sig : {1.5, 3.0}) {
            const auto toy = two_class_toy(sep, sig);
            ClassRegConfig plain_cfg;
            plain_cfg.eta = 0.0;
            const auto plain = class_regularized_transport(toy.source, toy.target, plain_cfg);
            const auto reg = class_regularized_transport(toy.source, toy.target, {});
            const auto& y = *toy.source.labels;
            EXPECT_GT(column_class_purity(reg.coupling.plan, y), column_class_purity(plain.coupling.plan, y))
                << "sep " << sep << " sigma " << sig;
        }
    }
}

TEST(ClassReg, StrongRegularisationConcentratesColumns)
{
    // Well separated: a heavy class penalty leaves each target column fed by one class.
    const auto toy = two_class_toy(20, 0.5);
    ClassRegConfig cfg;
    cfg.eta = 1e5;
    cfg.outer_iters = 50;
    const auto r = class_regularized_transport(toy.source, toy.target, cfg);
    EXPECT_GE(column_class_purity(r.coupling.plan, *toy.source.labels), 0.99);
}

TEST(ClassReg, NormalizedCostPath)
{
    const auto toy = two_class_toy(6, 1.5);
    ClassRegConfig cfg;
    cfg.normalize_cost = true;
    cfg.epsilon = 0.05;
    cfg.eta = 5.0;
    const auto r = class_regularized_transport(toy.source, toy.target, cfg);
    EXPECT_LE(r.coupling.marginal_violation, 1e-9);
    EXPECT_GT(column_class_purity(r.coupling.plan, *toy.source.labels), 0.9);
}

TEST(ClassRegObjective, MatchesDefinition)
{
    Matrix plan(2, 2);
    plan << 0.25, 0.25, 0.5, 0.0;
    Matrix cost(2, 2);
    cost << 1, 2, 3, 4;
    const Labels y{0, 1};
    const double expected = (0.25 + 0.5 + 1.5) + 2.0 * (0.5 * std::log(0.25) + 0.5 * std::log(0.5)) + 3.0 * (0.25 + 0.25 + 0.5);
    EXPECT_NEAR(class_reg_objective(plan, cost, y, 2.0, 3.0), expected, 1e-14);
    EXPECT_NEAR(column_class_purity(plan, y), (2.0 / 3.0 + 1.0) / 2.0, 1e-15);
}
