#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <utility>
#include <vector>

#include "attentrack/error.hpp"
#include "attentrack/geometry.hpp"

namespace attentrack {

/// Dense row-major cost matrix. Rows are detections, columns tracks.
class CostMatrix {
public:
    CostMatrix() = default;
    CostMatrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    bool empty() const noexcept { return rows_ == 0 || cols_ == 0; }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    CostMatrix transposed() const
    {
        CostMatrix t(cols_, rows_);
        for (std::size_t r = 0; r < rows_; ++r)
            for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
        return t;
    }

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

struct Assignment {
    std::vector<std::pair<std::size_t, std::size_t>> pairs;  // (row, col), ascending row
    double total_cost = 0.0;
};

namespace assignment_detail {

// Shortest augmenting path with row/column potentials, rows <= cols.
// Returns the column assigned to each row.
inline std::vector<std::size_t> solve_wide(const CostMatrix& c)
{
    const std::size_t n = c.rows();
    const std::size_t m = c.cols();
    constexpr double inf = std::numeric_limits<double>::infinity();

    std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
    std::vector<std::size_t> owner(m + 1, 0), way(m + 1, 0);  // owner[j]: 1-based row

    for (std::size_t i = 1; i <= n; ++i) {
        owner[0] = i;
        std::size_t j0 = 0;
        std::vector<double> minv(m + 1, inf);
        std::vector<char> used(m + 1, 0);
        do {
            used[j0] = 1;
            const std::size_t i0 = owner[j0];
            double delta = inf;
            std::size_t j1 = 0;
            for (std::size_t j = 1; j <= m; ++j) {
                if (used[j]) continue;
                const double cur = c(i0 - 1, j - 1) - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (std::size_t j = 0; j <= m; ++j) {
                if (used[j]) {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (owner[j0] != 0);
        do {
            const std::size_t j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
        } while (j0 != 0);
    }

    std::vector<std::size_t> row_to_col(n, 0);
    for (std::size_t j = 1; j <= m; ++j)
        if (owner[j] != 0) row_to_col[owner[j] - 1] = j - 1;
    return row_to_col;
}

}  // namespace assignment_detail

/// Exact minimum-cost assignment of min(rows, cols) pairs (Hungarian method).
/// Surplus rows or columns stay unassigned. The result is deterministic for a
/// given matrix. Total cost is summed in ascending row order.
inline Assignment hungarian_min_cost(const CostMatrix& c)
{
    Assignment out;
    if (c.empty()) return out;
    for (std::size_t r = 0; r < c.rows(); ++r)
        for (std::size_t col = 0; col < c.cols(); ++col)
            if (!std::isfinite(c(r, col))) throw InvalidArgument("cost matrix entries must be finite");

    if (c.rows() <= c.cols()) {
        const auto cols = assignment_detail::solve_wide(c);
        for (std::size_t r = 0; r < cols.size(); ++r) out.pairs.emplace_back(r, cols[r]);
    } else {
        const auto rows = assignment_detail::solve_wide(c.transposed());
        std::vector<std::size_t> col_of_row(c.rows(), c.cols());
        for (std::size_t col = 0; col < rows.size(); ++col) col_of_row[rows[col]] = col;
        for (std::size_t r = 0; r < c.rows(); ++r)
            if (col_of_row[r] != c.cols()) out.pairs.emplace_back(r, col_of_row[r]);
    }
    for (const auto& [r, col] : out.pairs) out.total_cost += c(r, col);
    return out;
}

struct Match {
    std::size_t detection = 0;
    std::size_t track = 0;
    double iou = 0.0;
};

struct AssociationResult {
    std::vector<Match> matches;
    std::vector<std::size_t> unmatched_detections;
    std::vector<std::size_t> unmatched_tracks;
};

/// Associates from a precomputed IoU matrix (rows detections, columns tracks).
/// The global assignment over C = -IoU is solved first; pairs below the
/// threshold are then split back into the unmatched lists.
inline AssociationResult associate_iou(const CostMatrix& iou_matrix, double threshold)
{
    if (!(threshold >= 0.0 && threshold <= 1.0))
        throw InvalidArgument("IoU threshold must lie in [0, 1]");

    const std::size_t n_det = iou_matrix.rows();
    const std::size_t n_trk = iou_matrix.cols();
    AssociationResult out;
    std::vector<char> det_used(n_det, 0), trk_used(n_trk, 0);

    if (n_det > 0 && n_trk > 0) {
        CostMatrix cost(n_det, n_trk);
        for (std::size_t i = 0; i < n_det; ++i)
            for (std::size_t j = 0; j < n_trk; ++j) cost(i, j) = -iou_matrix(i, j);

        for (const auto& [d, t] : hungarian_min_cost(cost).pairs) {
            const double overlap = iou_matrix(d, t);
            if (overlap < threshold) continue;
            out.matches.push_back({d, t, overlap});
            det_used[d] = 1;
            trk_used[t] = 1;
        }
    }
    for (std::size_t d = 0; d < n_det; ++d)
        if (!det_used[d]) out.unmatched_detections.push_back(d);
    for (std::size_t t = 0; t < n_trk; ++t)
        if (!trk_used[t]) out.unmatched_tracks.push_back(t);
    return out;
}

inline CostMatrix iou_matrix(std::span<const BoundingBox> detections,
                             std::span<const BoundingBox> tracks)
{
    CostMatrix m(detections.size(), tracks.size());
    for (std::size_t i = 0; i < detections.size(); ++i)
        for (std::size_t j = 0; j < tracks.size(); ++j) m(i, j) = iou(detections[i], tracks[j]);
    return m;
}

inline AssociationResult associate(std::span<const BoundingBox> detections,
                                   std::span<const BoundingBox> predicted_tracks,
                                   double threshold = 0.3)
{
    return associate_iou(iou_matrix(detections, predicted_tracks), threshold);
}

}  // namespace attentrack
