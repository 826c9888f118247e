#ifndef AERO_SPLINE_HPP
#define AERO_SPLINE_HPP

#include <Eigen/Dense>
#include <vector>

#include "aero/kinematics.hpp"

namespace aero
{

    // Piecewise polynomial of degree 2*s_o-1, coefficients in ascending powers
    // of the segment-local time, one (2*s_o)-row block per segment and axis.
    struct PolySpline
    {
        int s_o = 3;
        std::vector<double> T;
        Eigen::MatrixXd coef;

        int segments() const { return static_cast<int>(T.size()); }
        double totalTime() const;
        int locate(double t, double &u) const;
        Eigen::Vector3d deriv(int seg, double u, int order) const;
        Eigen::Vector3d derivAt(double t, int order) const;
        FlatState flatAt(double t) const;
    };

    // Basis of t-powers differentiated `order` times, length 2*s_o.
    Eigen::VectorXd polyBasis(double t, int order, int s_o);

    // Minimum-integrated-s_o-derivative spline through interior waypoints with
    // full boundary states at both ends.
    PolySpline solveSpline(const std::vector<Eigen::Vector3d> &waypoints,
                           const std::vector<double> &durations,
                           const FlatState &x0, const FlatState &xf, int s_o);

    // Pulls cost gradients w.r.t. raw coefficients back onto the interior
    // waypoints and durations through the spline linear system.
    struct SplineGrads
    {
        Eigen::MatrixXd dQ; // (M-1) x 3
        Eigen::VectorXd dT; // M
    };
    SplineGrads propagateSplineGrads(const PolySpline &spline,
                                     const Eigen::MatrixXd &dCoef,
                                     const Eigen::VectorXd &dTdirect);

} // namespace aero

#endif
