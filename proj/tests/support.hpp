// Test-only helpers: random generators, independent oracles, temp dirs.
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include <boost/multiprecision/cpp_dec_float.hpp>

#include "attentrack/assignment.hpp"
#include "attentrack/geometry.hpp"
#include "attentrack/kalman.hpp"
#include "attentrack/scene.hpp"

namespace attentrack::test {

inline BoundingBox random_box(std::mt19937_64& rng, double extent = 100.0, double max_size = 40.0)
{
    std::uniform_real_distribution<double> pos(0.0, extent);
    std::uniform_real_distribution<double> size(0.5, max_size);
    const double x = pos(rng);
    const double y = pos(rng);
    return {x, y, x + size(rng), y + size(rng)};
}

/// Counts cells of a fine grid covered by the intersection and the union.
/// Only exact for boxes whose corners lie on the grid.
inline double rasterized_iou(const BoundingBox& a, const BoundingBox& b, double cell)
{
    const double lo_x = std::min(a.x1, b.x1), hi_x = std::max(a.x2, b.x2);
    const double lo_y = std::min(a.y1, b.y1), hi_y = std::max(a.y2, b.y2);
    const auto nx = static_cast<long>(std::llround((hi_x - lo_x) / cell));
    const auto ny = static_cast<long>(std::llround((hi_y - lo_y) / cell));
    long inter = 0, uni = 0;
    auto inside = [](const BoundingBox& r, double px, double py) {
        return px > r.x1 && px < r.x2 && py > r.y1 && py < r.y2;
    };
    for (long i = 0; i < nx; ++i)
        for (long j = 0; j < ny; ++j) {
            const double px = lo_x + (static_cast<double>(i) + 0.5) * cell;
            const double py = lo_y + (static_cast<double>(j) + 0.5) * cell;
            const bool ia = inside(a, px, py), ib = inside(b, px, py);
            inter += (ia && ib) ? 1 : 0;
            uni += (ia || ib) ? 1 : 0;
        }
    return uni ? static_cast<double>(inter) / static_cast<double>(uni) : 0.0;
}

/// Exhaustive minimum over all injections of the smaller side into the larger.
inline double brute_force_min_cost(const CostMatrix& c)
{
    if (c.empty()) return 0.0;
    const bool wide = c.rows() <= c.cols();
    const std::size_t small = wide ? c.rows() : c.cols();
    const std::size_t large = wide ? c.cols() : c.rows();
    std::vector<std::size_t> perm(large);
    std::iota(perm.begin(), perm.end(), 0);
    double best = std::numeric_limits<double>::infinity();
    // Every injection is the prefix of some permutation of the larger side.
    do {
        double total = 0.0;
        if (wide) {
            for (std::size_t r = 0; r < small; ++r) total += c(r, perm[r]);
        } else {
            // Sum in ascending row order to match the solver's summation order.
            std::vector<std::pair<std::size_t, std::size_t>> pairs;
            for (std::size_t col = 0; col < small; ++col) pairs.emplace_back(perm[col], col);
            std::sort(pairs.begin(), pairs.end());
            for (const auto& [r, col] : pairs) total += c(r, col);
        }
        best = std::min(best, total);
    } while (std::next_permutation(perm.begin(), perm.end()));
    return best;
}

/// Costs on a 1/64 grid so that every partial sum is exact in double.
inline CostMatrix random_dyadic_costs(std::mt19937_64& rng, std::size_t rows, std::size_t cols)
{
    std::uniform_int_distribution<int> k(-6400, 6400);
    CostMatrix c(rows, cols);
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t col = 0; col < cols; ++col) c(r, col) = k(rng) / 64.0;
    return c;
}

/// `count` faces on separate horizontal lanes, each moving on a straight line.
/// Boxes of distinct objects never overlap.
inline SceneScript lane_scene(std::size_t count, double duration, double fps = 10.0)
{
    SceneScript s;
    s.fps = fps;
    s.duration = duration;
    s.seed = 1;
    for (std::size_t i = 0; i < count; ++i) {
        SceneObject o;
        o.id = i + 1;
        o.label = ClassLabel::Face;
        const double lane = 60.0 + 120.0 * static_cast<double>(i);
        const double speed = 8.0 + 4.0 * static_cast<double>(i);  // pixels per second
        const double dir = i % 2 == 0 ? 1.0 : -1.0;
        const double x0 = dir > 0 ? 60.0 : 60.0 + speed * duration;
        o.waypoints = {{0.0, x0, lane, 40.0 + 4.0 * static_cast<double>(i), 48.0},
                       {duration, x0 + dir * speed * duration, lane, 40.0 + 4.0 * static_cast<double>(i), 48.0}};
        s.objects.push_back(o);
    }
    return s;
}

using Dense = std::vector<std::vector<double>>;

inline Dense dense_identity(std::size_t n)
{
    Dense m(n, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < n; ++i) m[i][i] = 1.0;
    return m;
}

/// The constant-velocity transition written out entry by entry.
inline Dense dense_transition()
{
    Dense f = dense_identity(7);
    f[0][4] = 1.0;
    f[1][5] = 1.0;
    f[2][6] = 1.0;
    return f;
}

inline Dense dense_mul(const Dense& a, const Dense& b)
{
    Dense out(a.size(), std::vector<double>(b[0].size(), 0.0));
    for (std::size_t i = 0; i < a.size(); ++i)
        for (std::size_t j = 0; j < b[0].size(); ++j)
            for (std::size_t k = 0; k < b.size(); ++k) out[i][j] += a[i][k] * b[k][j];
    return out;
}

inline Dense dense_transpose(const Dense& a)
{
    Dense out(a[0].size(), std::vector<double>(a.size(), 0.0));
    for (std::size_t i = 0; i < a.size(); ++i)
        for (std::size_t j = 0; j < a[0].size(); ++j) out[j][i] = a[i][j];
    return out;
}

inline std::vector<double> dense_apply(const Dense& a, const std::vector<double>& x)
{
    std::vector<double> out(a.size(), 0.0);
    for (std::size_t i = 0; i < a.size(); ++i)
        for (std::size_t k = 0; k < x.size(); ++k) out[i] += a[i][k] * x[k];
    return out;
}

template <typename M>
Dense to_dense(const M& m)
{
    Dense out(static_cast<std::size_t>(m.rows()), std::vector<double>(static_cast<std::size_t>(m.cols())));
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j) out[i][j] = m(i, j);
    return out;
}

inline KalmanState random_state(std::mt19937_64& rng)
{
    std::uniform_real_distribution<double> pos(0.0, 640.0), area(100.0, 5000.0), ratio(0.3, 3.0),
        vel(-10.0, 10.0), unit(-1.0, 1.0);
    KalmanState st;
    st.x << pos(rng), pos(rng), area(rng), ratio(rng), vel(rng), vel(rng), vel(rng);
    StateMatrix a;
    for (int i = 0; i < 7; ++i)
        for (int j = 0; j < 7; ++j) a(i, j) = unit(rng);
    st.P = a * a.transpose() / 7.0 + 0.01 * StateMatrix::Identity();
    st.P = 0.5 * (st.P + st.P.transpose()).eval();
    return st;
}

using HighPrecision = boost::multiprecision::cpp_dec_float_50;

inline double high_precision_cosine(const std::vector<double>& a, const std::vector<double>& b)
{
    HighPrecision dot = 0, na = 0, nb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const HighPrecision x = a[i], y = b[i];
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    return static_cast<double>(dot / (boost::multiprecision::sqrt(na) * boost::multiprecision::sqrt(nb)));
}

inline double high_precision_softmax(const std::vector<double>& z, std::size_t index)
{
    HighPrecision denom = 0;
    for (double v : z) denom += boost::multiprecision::exp(HighPrecision(v));
    return static_cast<double>(boost::multiprecision::exp(HighPrecision(z[index])) / denom);
}

/// Fresh empty directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag)
    {
        static std::uint64_t counter = 0;
        path_ = std::filesystem::temp_directory_path() /
                ("attentrack-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir()
    {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const noexcept { return path_; }
    std::string operator/(const std::string& name) const { return (path_ / name).string(); }

private:
    std::filesystem::path path_;
};

inline std::string read_file(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_file(const std::string& path, const std::string& contents)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << contents;
}

inline std::vector<std::string> lines_of(const std::string& text)
{
    std::vector<std::string> out;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line))
        if (!line.empty()) out.push_back(line);
    return out;
}

}  // namespace attentrack::test
