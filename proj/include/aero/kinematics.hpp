#ifndef AERO_KINEMATICS_HPP
#define AERO_KINEMATICS_HPP

#include <Eigen/Dense>
#include <cmath>

#include "aero/dual.hpp"
#include "aero/errors.hpp"

namespace aero
{

    constexpr double kFrameDt = 0.1;

    // First two rotation-matrix columns, possibly un-normalized.
    struct Rot6D
    {
        Eigen::Vector3d a1{1.0, 0.0, 0.0};
        Eigen::Vector3d a2{0.0, 1.0, 0.0};
    };

    // One discretized maneuver state: padding flag, position, 6-DoF rotation.
    // Flattened channel order: [s, p(3), a1(3), a2(3)].
    struct StateFrame
    {
        double s = 0.0;
        Eigen::Vector3d p = Eigen::Vector3d::Zero();
        Rot6D r;

        Eigen::Matrix<double, 10, 1> toVec10() const
        {
            Eigen::Matrix<double, 10, 1> v;
            v << s, p, r.a1, r.a2;
            return v;
        }

        static StateFrame fromVec10(const Eigen::Matrix<double, 10, 1> &v)
        {
            StateFrame f;
            f.s = v(0);
            f.p = v.segment<3>(1);
            f.r.a1 = v.segment<3>(4);
            f.r.a2 = v.segment<3>(7);
            return f;
        }
    };

    struct FlatState
    {
        Eigen::Vector3d p = Eigen::Vector3d::Zero();
        Eigen::Vector3d v = Eigen::Vector3d::Zero();
        Eigen::Vector3d a = Eigen::Vector3d::Zero();
        Eigen::Vector3d j = Eigen::Vector3d::Zero();
        double yaw = 0.0;
        double yaw_rate = 0.0;
    };

    struct QuadParams
    {
        double mass = 1.0;
        double g = 9.81;
        double v_max = 6.0;
        double f_min = 1.0;
        double f_max = 30.0;
        double omega_max_xy = 6.0;
        double omega_max_z = 3.0;

        double thrustEps() const { return 0.05 * mass * g; }
    };

    Eigen::Matrix3d rot6dToMatrix(const Rot6D &r);
    Rot6D matrixToRot6d(const Eigen::Matrix3d &R);
    Rot6D canonicalizeRot6d(const Rot6D &r);
    // Non-throwing variant for raw network outputs; falls back to axis
    // substitution and returns false only if that also fails.
    bool tryRot6dToMatrix(const Rot6D &r, Eigen::Matrix3d &out);

    Eigen::Vector3d flatThrust(const Eigen::Vector3d &acc, const QuadParams &qp);
    // Quaternion from body z-axis (unit) and yaw via the tilt decomposition.
    Eigen::Quaterniond tiltYawQuat(const Eigen::Vector3d &zb, double yaw);
    // Body rates from flat outputs with an explicit yaw profile.
    Eigen::Vector3d flatBodyrate(const FlatState &fs, const QuadParams &qp);

    double wrapAngle(double a);
    // Z-Y-X convention; returns (roll, pitch, yaw).
    Eigen::Vector3d eulerZyx(const Eigen::Matrix3d &R);
    bool nearGimbalLock(const Eigen::Matrix3d &R);

    struct FrameDelta
    {
        Eigen::Vector3d dp;
        Eigen::Vector3d dtheta;
        bool gimbal;
    };
    FrameDelta frameDelta(const StateFrame &prev, const StateFrame &next);

    // Attitude with the body x-axis along the thrust-orthogonal velocity
    // projection; well-defined through inversions, unlike a horizontal-heading
    // yaw. Used wherever no explicit yaw profile exists.
    Eigen::Matrix3d projectionFrame(const Eigen::Vector3d &v,
                                    const Eigen::Vector3d &a,
                                    double g);
    Eigen::Vector3d bodyRatesProjectedFull(const Eigen::Vector3d &v,
                                           const Eigen::Vector3d &a,
                                           const Eigen::Vector3d &j,
                                           double g);

    template <typename S>
    Vec3T<S> toVecT(const Eigen::Vector3d &v)
    {
        return Vec3T<S>(S(v.x()), S(v.y()), S(v.z()));
    }

    template <typename S>
    struct TiltRates
    {
        S wxySq; // squared norm of the body x/y rate pair
        S wz;    // signed z rate under the projection frame
    };

    // Scalar-generic body-rate evaluation for penalty kernels; veps smooths the
    // velocity-projection denominator so line-search iterates stay finite.
    template <typename S>
    TiltRates<S> bodyRatesProjected(const Vec3T<S> &v, const Vec3T<S> &a,
                                    const Vec3T<S> &j, double g,
                                    double veps = 1e-6)
    {
        using std::sqrt;
        using aero::sqrt;
        Vec3T<S> zu = a;
        zu.z = zu.z + S(g);
        const S n = sqrt(zu.squaredNorm() + S(1e-12));
        const S ninv = S(1.0) / n;
        const Vec3T<S> z = zu * ninv;
        const Vec3T<S> dz = (j - z * z.dot(j)) * ninv;
        TiltRates<S> out;
        out.wxySq = dz.squaredNorm();
        const Vec3T<S> u = v - z * z.dot(v);
        const S un = sqrt(u.squaredNorm() + S(veps));
        const Vec3T<S> xb = u * (S(1.0) / un);
        const Vec3T<S> yb = z.cross(xb);
        const Vec3T<S> du = a - z * z.dot(a) - dz * z.dot(v) - z * dz.dot(v);
        out.wz = yb.dot(du) * (S(1.0) / un);
        return out;
    }

} // namespace aero

#endif
