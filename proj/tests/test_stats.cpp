#include "otfed/stats.hpp"
#include "oracles.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

using namespace otfed;
using namespace otfed::stats;

namespace {

const std::string fixtures = OTFED_FIXTURES;

AccuracyTable vlsc() { return load_accuracy_table(fixtures + "/vlsc_table.csv"); }
AccuracyTable office() { return load_accuracy_table(fixtures + "/office_table.csv"); }

std::vector<double> column(const Matrix& m, Eigen::Index c)
{
    std::vector<double> v;
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        v.push_back(m(r, c));
    }
    return v;
}

std::vector<double> row(const Matrix& m, Eigen::Index r)
{
    std::vector<double> v;
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
        v.push_back(m(r, c));
    }
    return v;
}

struct Expected {
    const char* method;
    double mr;
    double med;
    double mad;
};

void check_fixture(const AccuracyTable& t, const std::vector<Expected>& expected)
{
    const auto rep = analyze(t);
    for (const auto& e : expected) {
        const auto it = std::find(rep.methods.begin(), rep.methods.end(), e.method);
        ASSERT_NE(it, rep.methods.end()) << e.method;
        const auto i = static_cast<std::size_t>(it - rep.methods.begin());
        EXPECT_NEAR(rep.mean_ranks(static_cast<Eigen::Index>(i)), e.mr, 1e-9) << e.method;
        EXPECT_NEAR(rep.summaries[i].median, e.med, 5e-4) << e.method;
        EXPECT_NEAR(rep.summaries[i].mad, e.mad, 5e-4) << e.method;
    }
}

} // namespace

TEST(Load, ShapeAndErrors)
{
    const auto t = vlsc();
    EXPECT_EQ(t.methods.size(), 7u);
    EXPECT_EQ(t.samples, (std::vector<std::string>{"V", "L", "S", "C", "AVG"}));
    const auto dir = testing_support::scratch_dir("stats_load");
    const auto bad = testing_support::write_text(dir / "bad.csv", "method,a,b\nx,1,oops\ny,2,3\n");
    try {
        load_accuracy_table(bad);
        FAIL();
    } catch (const Error& e) {
        EXPECT_NE(std::string(e.what()).find("oops"), std::string::npos);
    }
    EXPECT_THROW(load_accuracy_table(testing_support::write_text(dir / "one.csv", "method,a,b\nx,1,2\n")), Error);
    EXPECT_THROW(load_accuracy_table((dir / "missing.csv").string()), Error);
}

TEST(Ranks, MatchOracleOnBothTables)
{
    for (const auto& t : {vlsc(), office()}) {
        const Matrix r = rank_matrix(t);
        for (Eigen::Index c = 0; c < t.values.cols(); ++c) {
            EXPECT_EQ(column(r, c), oracle::ranks_desc(column(t.values, c)));
        }
    }
}

TEST(Ranks, VlscFixture)
{
    check_fixture(vlsc(), {{"CMSD", 6.8, 37.30, 2.34},
                             {"DS", 6.2, 41.87, 2.35},
                             {"TCA+CMSD", 4.6, 64.31, 7.62},
                             {"TCA+WAF", 4.0, 64.60, 8.20},
                             {"TCA+WDS", 3.0, 65.68, 5.97},
                             {"TCA+WDSC", 2.4, 65.82, 4.06},
                             {"CMDA-OT", 1.0, 69.00, 4.25}});
}

TEST(Ranks, OfficeFixture)
{
    check_fixture(office(), {{"ResNet-101", 6.0, 92.9, 5.3},
                               {"DAN", 4.1, 94.8, 4.3},
                               {"DCTN", 4.1, 95.3, 3.7},
                               {"MCD", 3.1, 95.6, 3.5},
                               {"CMDA-OT", 2.0, 96.5, 2.7},
                               {"M3SDA", 1.7, 96.4, 2.8}});
}

TEST(Ranks, AllTiedColumnGetsMiddleRank)
{
    AccuracyTable t{{"a", "b", "c", "d"}, {"x", "y"}, Matrix::Constant(4, 2, 50.0)};
    EXPECT_EQ(rank_matrix(t), Matrix::Constant(4, 2, 2.5));
    EXPECT_EQ(friedman(rank_matrix(t)).statistic, 0.0);
    EXPECT_EQ(friedman(rank_matrix(t)).p_value, 1.0);
}

TEST(Ranks, InvariantUnderMonotoneTransformAndShift)
{
    Rng rng(4);
    for (int trial = 0; trial < 20; ++trial) {
        AccuracyTable t{{"a", "b", "c", "d", "e"}, {"1", "2", "3"}, testing_support::random_matrix(rng, 5, 3, 0, 100)};
        t.values(1, 0) = t.values(3, 0);  // a tie
        AccuracyTable u = t;
        u.values = t.values.array().log().matrix() * 3.0;
        for (Eigen::Index c = 0; c < 3; ++c) {
            u.values.col(c).array() += 17.0 * static_cast<double>(c);
        }
        const Matrix r = rank_matrix(t);
        EXPECT_EQ(r, rank_matrix(u));
        const Vector sums = r.colwise().sum();
        EXPECT_LT((sums.array() - 15.0).abs().maxCoeff(), 1e-12);  // k(k+1)/2
    }
}

TEST(Friedman, VlscStatisticAndPValue)
{
    const auto f = friedman(rank_matrix(vlsc()));
    EXPECT_NEAR(f.statistic, 27.428571428571, 1e-9);
    EXPECT_EQ(f.df, 6);
    EXPECT_NEAR(f.p_value, oracle::chi_square_sf_even(f.statistic, 6), 1e-12);
    EXPECT_NEAR(f.p_value, 1.2034028377078086e-04, 1e-12);
    EXPECT_TRUE(analyze(vlsc()).reject_null);
}

TEST(Friedman, OfficeStatistic)
{
    const auto f = friedman(rank_matrix(office()));
    EXPECT_NEAR(f.statistic, 18.028571428571, 1e-9);
    EXPECT_NEAR(f.p_value, 2.9108089817078964e-03, 1e-10);
}

TEST(ChiSquare, AgreesWithClosedFormForEvenDf)
{
    for (int df : {2, 4, 6, 10, 20}) {
        for (double x : {0.1, 1.0, 5.0, 12.0, 40.0}) {
            EXPECT_NEAR(chi_square_sf(x, df), oracle::chi_square_sf_even(x, df), 1e-12) << df << " " << x;
        }
    }
    EXPECT_EQ(chi_square_sf(0.0, 3), 1.0);
    EXPECT_NEAR(chi_square_sf(3.841458820694124, 1), 0.05, 1e-10);
}

TEST(Nemenyi, TabulatedCriticalValues)
{
    const std::vector<double> demsar = {1.960, 2.343, 2.569, 2.728, 2.850, 2.949, 3.031, 3.102, 3.164};
    for (std::size_t i = 0; i < demsar.size(); ++i) {
        EXPECT_NEAR(nemenyi_q05[i + 2], demsar[i], 1e-3);
    }
    EXPECT_NEAR(nemenyi_cd(2, 9), 1.959963985 / 3.0, 1e-9);
    EXPECT_NEAR(nemenyi_cd(7, 5), 4.0282, 1e-4);
    for (int n = 1; n < 30; ++n) {
        EXPECT_GT(nemenyi_cd(6, n), nemenyi_cd(6, n + 1));
    }
    EXPECT_THROW(nemenyi_cd(21, 5), Error);
    EXPECT_THROW(nemenyi_cd(5, 5, 0.1), Error);
}

TEST(Median, HandCasesAndPermutationInvariance)
{
    EXPECT_EQ(median({3.0, 1.0, 2.0}), 2.0);
    EXPECT_EQ(median({4.0, 1.0, 2.0, 3.0}), 2.5);
    EXPECT_THROW(median({}), Error);
    const auto mm = median_mad({1, 2, 3, 4, 100});
    EXPECT_EQ(mm.median, 3.0);
    EXPECT_EQ(mm.mad, 1.0);

    Rng rng(6);
    std::vector<double> v = row(testing_support::random_matrix(rng, 1, 9), 0);
    const double m = median(v);
    std::reverse(v.begin(), v.end());
    EXPECT_EQ(median(v), m);
}

TEST(Groups, VlscAtSmallCriticalDifference)
{
    const auto t = vlsc();
    const auto groups = significance_groups(mean_ranks(rank_matrix(t)), 1.274);
    std::vector<std::vector<std::string>> named;
    for (const auto& g : groups) {
        named.emplace_back();
        for (auto i : g) {
            named.back().push_back(t.methods[i]);
        }
    }
    const std::vector<std::vector<std::string>> expected = {
        {"CMDA-OT"}, {"TCA+WDSC", "TCA+WDS"}, {"TCA+WDS", "TCA+WAF"}, {"TCA+WAF", "TCA+CMSD"}, {"DS", "CMSD"}};
    EXPECT_EQ(named, expected);
}

TEST(Groups, LargeCdGivesOverlappingWindows)
{
    const auto rep = analyze(vlsc());
    EXPECT_NEAR(rep.cd, 4.0282, 1e-4);
    ASSERT_EQ(rep.groups.size(), 3u);  // 6.8 - 1.0 exceeds 4.03
    EXPECT_EQ(rep.groups.front().front(), 6u);
}

TEST(Analyze, TwoMethods)
{
    const auto rep = analyze(load_accuracy_table(fixtures + "/two_methods.csv"));
    EXPECT_NEAR(rep.mean_ranks(0), 4.0 / 3.0, 1e-12);
    EXPECT_NEAR(rep.cd, 1.959963985 * std::sqrt(1.0 / 3.0), 1e-9);
    EXPECT_EQ(rep.friedman.df, 1);
}
