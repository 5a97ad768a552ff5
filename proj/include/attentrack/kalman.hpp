///////////////////////////////////////////////////////////////////////////////
// kalman.hpp: constant-velocity Kalman filter over [x, y, s, r, vx, vy, vs]
//
// Center and area carry a per-frame velocity; aspect ratio does not. The
// time step is one frame.
///////////////////////////////////////////////////////////////////////////////

#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include "attentrack/error.hpp"
#include "attentrack/geometry.hpp"

namespace attentrack {

using StateVector = Eigen::Matrix<double, 7, 1>;
using StateMatrix = Eigen::Matrix<double, 7, 7>;
using ObsMatrix = Eigen::Matrix<double, 4, 7>;
using ObsCovariance = Eigen::Matrix<double, 4, 4>;
using ObsColumn = Eigen::Matrix<double, 4, 1>;

struct KalmanState {
    StateVector x = StateVector::Zero();
    StateMatrix P = StateMatrix::Identity();

    ObsVector observation() const { return {x(0), x(1), x(2), x(3)}; }
};

struct KalmanConfig {
    StateMatrix Q;
    ObsCovariance R;
    StateMatrix P0;

    static KalmanConfig defaults()
    {
        KalmanConfig cfg;
        cfg.P0 = StateVector{10, 10, 10, 10, 1e4, 1e4, 1e4}.asDiagonal();
        cfg.Q = StateVector{1, 1, 1, 0.01, 0.01, 0.01, 1e-4}.asDiagonal();
        cfg.R = ObsColumn{1, 1, 10, 0.01}.asDiagonal();
        return cfg;
    }
};

namespace kalman_detail {

inline StateMatrix transition()
{
    StateMatrix F = StateMatrix::Identity();
    F(0, 4) = 1.0;
    F(1, 5) = 1.0;
    F(2, 6) = 1.0;
    return F;
}

inline ObsMatrix observation()
{
    ObsMatrix H = ObsMatrix::Zero();
    H(0, 0) = H(1, 1) = H(2, 2) = H(3, 3) = 1.0;
    return H;
}

template <typename M>
M symmetrized(const M& m)
{
    return 0.5 * (m + m.transpose());
}

}  // namespace kalman_detail

/// State transition matrix F.
inline const StateMatrix& transition_matrix()
{
    static const StateMatrix F = kalman_detail::transition();
    return F;
}

/// Observation matrix H; selects the first four state components.
inline const ObsMatrix& observation_matrix()
{
    static const ObsMatrix H = kalman_detail::observation();
    return H;
}

inline KalmanState init_state(const ObsVector& obs, const KalmanConfig& cfg)
{
    KalmanState st;
    st.x << obs.x, obs.y, obs.s, obs.r, 0.0, 0.0, 0.0;
    st.P = cfg.P0;
    return st;
}

inline KalmanState predict(const KalmanState& st, const KalmanConfig& cfg)
{
    const StateMatrix& F = transition_matrix();
    KalmanState out;
    out.x = F * st.x;
    out.P = kalman_detail::symmetrized(StateMatrix(F * st.P * F.transpose() + cfg.Q));
    return out;
}

/// Measurement correction. Uses a Cholesky solve of the innovation system
/// and the Joseph-form covariance update. Throws NumericalError when the
/// innovation covariance is not positive definite.
inline KalmanState update(const KalmanState& st, const ObsVector& obs, const KalmanConfig& cfg)
{
    if (!std::isfinite(obs.x) || !std::isfinite(obs.y) || !std::isfinite(obs.s) ||
        !std::isfinite(obs.r))
        throw InvalidArgument("observation must be finite");

    const ObsMatrix& H = observation_matrix();
    const ObsColumn z{obs.x, obs.y, obs.s, obs.r};
    const ObsColumn innovation = z - H * st.x;
    const ObsCovariance S = kalman_detail::symmetrized(ObsCovariance(H * st.P * H.transpose() + cfg.R));

    const Eigen::LLT<ObsCovariance> llt(S);
    if (llt.info() != Eigen::Success)
        throw NumericalError("innovation covariance is not positive definite");

    // K = P H^T S^-1, obtained as (S^-1 H P)^T since S and P are symmetric.
    const Eigen::Matrix<double, 7, 4> K = llt.solve(H * st.P).transpose();
    const StateMatrix IKH = StateMatrix::Identity() - K * H;

    KalmanState out;
    out.x = st.x + K * innovation;
    out.P = kalman_detail::symmetrized(
        StateMatrix(IKH * st.P * IKH.transpose() + K * cfg.R * K.transpose()));
    return out;
}

}  // namespace attentrack
