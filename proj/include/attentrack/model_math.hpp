#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <vector>

#include "attentrack/error.hpp"

namespace attentrack {

/// Softmax probability of class `index`, evaluated after subtracting the
/// largest logit so that large inputs cannot overflow.
inline double softmax_probability(std::span<const double> logits, std::size_t index)
{
    if (logits.empty()) throw InvalidArgument("softmax of an empty logit vector");
    if (index >= logits.size()) throw InvalidArgument("softmax class index out of range");
    for (double z : logits)
        if (!std::isfinite(z)) throw InvalidArgument("logits must be finite");

    const double peak = *std::max_element(logits.begin(), logits.end());
    double denom = 0.0;
    for (double z : logits) denom += std::exp(z - peak);
    return std::exp(logits[index] - peak) / denom;
}

inline double dot(std::span<const double> a, std::span<const double> b)
{
    return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

inline double l2_norm(std::span<const double> v) { return std::sqrt(dot(v, v)); }

/// Cosine of the angle between two nonzero vectors of equal length.
inline double cosine_similarity(std::span<const double> a, std::span<const double> b)
{
    if (a.size() != b.size()) throw InvalidArgument("cosine similarity of unequal lengths");
    const double na = l2_norm(a);
    const double nb = l2_norm(b);
    if (!(na > 0.0) || !(nb > 0.0)) throw InvalidArgument("cosine similarity of a zero vector");
    return std::clamp(dot(a, b) / (na * nb), -1.0, 1.0);
}

/// One (cell, box) slot of a detection grid: prediction, ground truth and the
/// object-presence indicator. The no-object indicator is the complement.
struct GridSlot {
    double x_pred = 0.0;
    double y_pred = 0.0;
    double conf_pred = 0.0;
    double x_true = 0.0;
    double y_true = 0.0;
    double conf_true = 0.0;
    bool has_object = false;
};

/// Per-cell class distributions and the cell-level object indicator.
struct GridCell {
    std::vector<GridSlot> slots;        // B entries
    std::vector<double> class_pred;     // p_hat(c)
    std::vector<double> class_true;     // p(c); need not be one-hot
    bool has_object = false;
};

struct GridPrediction {
    std::size_t grid_size = 1;          // S, so S*S cells
    std::size_t boxes_per_cell = 1;     // B
    std::vector<GridCell> cells;
};

struct LossWeights {
    double lambda_coord = 5.0;
    double lambda_noobj = 0.5;
};

/// Three-term detection loss: weighted center error on object slots,
/// weighted confidence error on empty slots, and class error on object
/// cells. There is no width/height term and no object-confidence term.
inline double yolo_detection_loss(const GridPrediction& pred, const LossWeights& w)
{
    if (pred.grid_size < 1 || pred.boxes_per_cell < 1)
        throw InvalidArgument("grid size and boxes per cell must be at least 1");
    if (pred.cells.size() != pred.grid_size * pred.grid_size)
        throw InvalidArgument("grid cell count must equal S*S");
    if (!(w.lambda_coord >= 0.0) || !(w.lambda_noobj >= 0.0))
        throw InvalidArgument("loss weights must be non-negative");

    double coord = 0.0;
    double noobj = 0.0;
    double cls = 0.0;
    for (const GridCell& cell : pred.cells) {
        if (cell.slots.size() != pred.boxes_per_cell)
            throw InvalidArgument("cell slot count must equal B");
        if (cell.class_pred.size() != cell.class_true.size())
            throw InvalidArgument("class distributions differ in length");
        for (const GridSlot& s : cell.slots) {
            if (s.has_object) {
                const double dx = s.x_true - s.x_pred;
                const double dy = s.y_true - s.y_pred;
                coord += dx * dx + dy * dy;
            } else {
                const double dc = s.conf_true - s.conf_pred;
                noobj += dc * dc;
            }
        }
        if (cell.has_object) {
            for (std::size_t c = 0; c < cell.class_true.size(); ++c) {
                const double dp = cell.class_true[c] - cell.class_pred[c];
                cls += dp * dp;
            }
        }
    }
    return w.lambda_coord * coord + w.lambda_noobj * noobj + cls;
}

}  // namespace attentrack
