#include <algorithm>
#include <random>
#include <set>
#include <vector>

#include <gtest/gtest.h>

#include "attentrack/assignment.hpp"
#include "support.hpp"

using namespace attentrack;

namespace {

CostMatrix from_rows(const std::vector<std::vector<double>>& rows)
{
    CostMatrix c(rows.size(), rows.empty() ? 0 : rows[0].size());
    for (std::size_t r = 0; r < rows.size(); ++r)
        for (std::size_t k = 0; k < rows[r].size(); ++k) c(r, k) = rows[r][k];
    return c;
}

void expect_valid_assignment(const CostMatrix& c, const Assignment& a)
{
    ASSERT_EQ(a.pairs.size(), std::min(c.rows(), c.cols()));
    std::set<std::size_t> rows, cols;
    for (const auto& [r, col] : a.pairs) {
        EXPECT_LT(r, c.rows());
        EXPECT_LT(col, c.cols());
        rows.insert(r);
        cols.insert(col);
    }
    EXPECT_EQ(rows.size(), a.pairs.size());
    EXPECT_EQ(cols.size(), a.pairs.size());
    EXPECT_TRUE(std::is_sorted(a.pairs.begin(), a.pairs.end()));
}

}  // namespace

TEST(Hungarian, SingleEntry)
{
    const Assignment a = hungarian_min_cost(from_rows({{7}}));
    ASSERT_EQ(a.pairs.size(), 1u);
    EXPECT_EQ(a.pairs[0], (std::pair<std::size_t, std::size_t>{0, 0}));
    EXPECT_EQ(a.total_cost, 7.0);
}

TEST(Hungarian, PrefersAntiDiagonal)
{
    const Assignment a = hungarian_min_cost(from_rows({{1, 2}, {2, 1}}));
    EXPECT_EQ(a.total_cost, 2.0);
    const Assignment b = hungarian_min_cost(from_rows({{4, 1}, {2, 8}}));
    EXPECT_EQ(b.total_cost, 3.0);
    EXPECT_EQ(b.pairs[0].second, 1u);
    EXPECT_EQ(b.pairs[1].second, 0u);
}

TEST(Hungarian, EmptyMatrix)
{
    EXPECT_TRUE(hungarian_min_cost(CostMatrix(0, 0)).pairs.empty());
    EXPECT_TRUE(hungarian_min_cost(CostMatrix(3, 0)).pairs.empty());
    EXPECT_TRUE(hungarian_min_cost(CostMatrix(0, 4)).pairs.empty());
}

TEST(Hungarian, RejectsNonFiniteCosts)
{
    CostMatrix c(2, 2, 1.0);
    c(1, 0) = std::numeric_limits<double>::infinity();
    EXPECT_THROW(hungarian_min_cost(c), InvalidArgument);
    c(1, 0) = std::nan("");
    EXPECT_THROW(hungarian_min_cost(c), InvalidArgument);
}

TEST(Hungarian, MatchesBruteForceOnSquareMatrices)
{
    std::mt19937_64 rng(100);
    for (std::size_t n = 1; n <= 7; ++n)
        for (int k = 0; k < 40; ++k) {
            const CostMatrix c = test::random_dyadic_costs(rng, n, n);
            const Assignment a = hungarian_min_cost(c);
            expect_valid_assignment(c, a);
            EXPECT_EQ(a.total_cost, test::brute_force_min_cost(c)) << "n=" << n;
        }
}

TEST(Hungarian, MatchesBruteForceOnRectangularMatrices)
{
    std::mt19937_64 rng(101);
    for (std::size_t rows = 1; rows <= 6; ++rows)
        for (std::size_t cols = 1; cols <= 6; ++cols) {
            if (rows == cols) continue;
            for (int k = 0; k < 10; ++k) {
                const CostMatrix c = test::random_dyadic_costs(rng, rows, cols);
                const Assignment a = hungarian_min_cost(c);
                expect_valid_assignment(c, a);
                EXPECT_EQ(a.total_cost, test::brute_force_min_cost(c)) << rows << "x" << cols;
            }
        }
}

TEST(Hungarian, TiesAndConstantMatrices)
{
    const CostMatrix flat(5, 5, 3.0);
    EXPECT_EQ(hungarian_min_cost(flat).total_cost, 15.0);
    std::mt19937_64 rng(7);
    std::uniform_int_distribution<int> small(0, 2);
    for (int k = 0; k < 200; ++k) {
        CostMatrix c(5, 4);
        for (std::size_t r = 0; r < 5; ++r)
            for (std::size_t col = 0; col < 4; ++col) c(r, col) = small(rng);
        EXPECT_EQ(hungarian_min_cost(c).total_cost, test::brute_force_min_cost(c));
    }
}

TEST(Hungarian, RowPermutationLeavesOptimumUnchanged)
{
    std::mt19937_64 rng(102);
    for (int k = 0; k < 100; ++k) {
        const CostMatrix c = test::random_dyadic_costs(rng, 6, 6);
        std::vector<std::size_t> perm(6);
        std::iota(perm.begin(), perm.end(), 0);
        std::shuffle(perm.begin(), perm.end(), rng);
        CostMatrix p(6, 6);
        for (std::size_t r = 0; r < 6; ++r)
            for (std::size_t col = 0; col < 6; ++col) p(r, col) = c(perm[r], col);
        EXPECT_EQ(hungarian_min_cost(p).total_cost, hungarian_min_cost(c).total_cost);
        EXPECT_EQ(hungarian_min_cost(c.transposed()).total_cost, hungarian_min_cost(c).total_cost);
    }
}

TEST(Hungarian, Deterministic)
{
    std::mt19937_64 rng(103);
    const CostMatrix c = test::random_dyadic_costs(rng, 7, 5);
    const Assignment a = hungarian_min_cost(c);
    for (int k = 0; k < 5; ++k) EXPECT_EQ(hungarian_min_cost(c).pairs, a.pairs);
}

TEST(Associate, IdenticalBoxesMatch)
{
    const std::vector<BoundingBox> dets{{0, 0, 10, 10}}, trks{{0, 0, 10, 10}};
    const AssociationResult r = associate(dets, trks, 0.3);
    ASSERT_EQ(r.matches.size(), 1u);
    EXPECT_EQ(r.matches[0].detection, 0u);
    EXPECT_EQ(r.matches[0].track, 0u);
    EXPECT_EQ(r.matches[0].iou, 1.0);
    EXPECT_TRUE(r.unmatched_detections.empty());
    EXPECT_TRUE(r.unmatched_tracks.empty());
}

TEST(Associate, LowOverlapStaysUnmatched)
{
    CostMatrix m(1, 1, 0.2);
    const AssociationResult r = associate_iou(m, 0.3);
    EXPECT_TRUE(r.matches.empty());
    EXPECT_EQ(r.unmatched_detections, std::vector<std::size_t>{0});
    EXPECT_EQ(r.unmatched_tracks, std::vector<std::size_t>{0});
}

TEST(Associate, ThresholdIsInclusive)
{
    CostMatrix m(1, 1, 0.3);
    EXPECT_EQ(associate_iou(m, 0.3).matches.size(), 1u);
}

TEST(Associate, GlobalOptimumBeatsGreedy)
{
    // Greedy would take D0-T0 (0.667) and leave D1-T1 at 0.053.
    const std::vector<BoundingBox> trks{{0, 0, 10, 10}, {6, 0, 16, 10}};
    const std::vector<BoundingBox> dets{{2, 0, 12, 10}, {-3, 0, 7, 10}};
    const AssociationResult r = associate(dets, trks, 0.3);
    ASSERT_EQ(r.matches.size(), 2u);
    for (const Match& m : r.matches) {
        EXPECT_EQ(m.track, m.detection == 0 ? 1u : 0u);
        EXPECT_GE(m.iou, 0.3);
    }
    EXPECT_NEAR(r.matches[0].iou + r.matches[1].iou, 60.0 / 140.0 + 70.0 / 130.0, 1e-12);
}

TEST(Associate, RejectsThresholdOutsideUnitInterval)
{
    EXPECT_THROW(associate_iou(CostMatrix(1, 1), -0.1), InvalidArgument);
    EXPECT_THROW(associate_iou(CostMatrix(1, 1), 1.5), InvalidArgument);
}

TEST(Associate, FuzzGatingAndPartition)
{
    std::mt19937_64 rng(104);
    std::uniform_int_distribution<int> count(0, 8);
    std::uniform_real_distribution<double> thr(0.0, 1.0);
    for (int k = 0; k < 500; ++k) {
        std::vector<BoundingBox> dets(static_cast<std::size_t>(count(rng)));
        std::vector<BoundingBox> trks(static_cast<std::size_t>(count(rng)));
        for (auto& b : dets) b = test::random_box(rng, 60.0, 30.0);
        for (auto& b : trks) b = test::random_box(rng, 60.0, 30.0);
        const double threshold = thr(rng);
        const AssociationResult r = associate(dets, trks, threshold);

        std::set<std::size_t> d_seen, t_seen;
        for (const Match& m : r.matches) {
            EXPECT_GE(m.iou, threshold);
            EXPECT_EQ(m.iou, iou(dets[m.detection], trks[m.track]));
            EXPECT_TRUE(d_seen.insert(m.detection).second);
            EXPECT_TRUE(t_seen.insert(m.track).second);
        }
        for (std::size_t d : r.unmatched_detections) EXPECT_TRUE(d_seen.insert(d).second);
        for (std::size_t t : r.unmatched_tracks) EXPECT_TRUE(t_seen.insert(t).second);
        EXPECT_EQ(d_seen.size(), dets.size());
        EXPECT_EQ(t_seen.size(), trks.size());
    }
}
