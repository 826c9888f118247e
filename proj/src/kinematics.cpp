#include "aero/kinematics.hpp"

namespace aero
{

    namespace
    {
        constexpr double kDegenEps = 1e-8;
        constexpr double kGimbalEps = 1e-3;
    }

    Eigen::Matrix3d rot6dToMatrix(const Rot6D &r)
    {
        const double n1 = r.a1.norm();
        if (n1 < kDegenEps)
        {
            throw DegenerateRotationError("rot6d: first column near zero");
        }
        const Eigen::Vector3d b1 = r.a1 / n1;
        const Eigen::Vector3d rej = r.a2 - b1.dot(r.a2) * b1;
        const double n2 = rej.norm();
        if (n2 < kDegenEps)
        {
            throw DegenerateRotationError("rot6d: columns parallel or second near zero");
        }
        const Eigen::Vector3d b2 = rej / n2;
        Eigen::Matrix3d R;
        R.col(0) = b1;
        R.col(1) = b2;
        R.col(2) = b1.cross(b2);
        return R;
    }

    Rot6D matrixToRot6d(const Eigen::Matrix3d &R)
    {
        if ((R.transpose() * R - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() > 1e-6 ||
            R.determinant() < 0.0)
        {
            throw ValidationError("matrixToRot6d: input is not a rotation matrix");
        }
        Rot6D r;
        r.a1 = R.col(0);
        r.a2 = R.col(1);
        return r;
    }

    Rot6D canonicalizeRot6d(const Rot6D &r)
    {
        const Eigen::Matrix3d R = rot6dToMatrix(r);
        Rot6D out;
        out.a1 = R.col(0);
        out.a2 = R.col(1);
        return out;
    }

    bool tryRot6dToMatrix(const Rot6D &r, Eigen::Matrix3d &out)
    {
        Rot6D fixed = r;
        if (fixed.a1.norm() < kDegenEps)
        {
            fixed.a1 = Eigen::Vector3d::UnitX();
        }
        const Eigen::Vector3d b1 = fixed.a1.normalized();
        Eigen::Vector3d rej = fixed.a2 - b1.dot(fixed.a2) * b1;
        if (rej.norm() < kDegenEps)
        {
            // pick the axis least aligned with b1
            int k = 0;
            b1.cwiseAbs().minCoeff(&k);
            rej = Eigen::Vector3d::Unit(k) - b1.dot(Eigen::Vector3d::Unit(k)) * b1;
            if (rej.norm() < kDegenEps)
            {
                out = Eigen::Matrix3d::Identity();
                return false;
            }
        }
        const Eigen::Vector3d b2 = rej.normalized();
        out.col(0) = b1;
        out.col(1) = b2;
        out.col(2) = b1.cross(b2);
        return true;
    }

    Eigen::Vector3d flatThrust(const Eigen::Vector3d &acc, const QuadParams &qp)
    {
        return qp.mass * (acc + qp.g * Eigen::Vector3d::UnitZ());
    }

    Eigen::Quaterniond tiltYawQuat(const Eigen::Vector3d &zb, double yaw)
    {
        const double z2 = zb.z();
        if (1.0 + z2 < 1e-9)
        {
            throw FlatnessSingularityError("tiltYawQuat: body z at inversion");
        }
        const double tilt_den = std::sqrt(2.0 * (1.0 + z2));
        const double tilt0 = 0.5 * tilt_den;
        const double tilt1 = -zb.y() / tilt_den;
        const double tilt2 = zb.x() / tilt_den;
        const double ch = std::cos(0.5 * yaw);
        const double sh = std::sin(0.5 * yaw);
        return Eigen::Quaterniond(tilt0 * ch,
                                  tilt1 * ch + tilt2 * sh,
                                  tilt2 * ch - tilt1 * sh,
                                  tilt0 * sh);
    }

    Eigen::Vector3d flatBodyrate(const FlatState &fs, const QuadParams &qp)
    {
        const Eigen::Vector3d f = flatThrust(fs.a, qp);
        const double fn = f.norm();
        if (fn < qp.thrustEps())
        {
            throw FlatnessSingularityError("flatBodyrate: thrust below singularity threshold");
        }
        const Eigen::Vector3d z = f / fn;
        // d/dt of f is mass * jerk, so dz = (I - z z^T) * jerk * mass / |f|
        const Eigen::Vector3d dz =
            (fs.j - z * z.dot(fs.j)) * (qp.mass / fn);
        const double z0 = z.x(), z1 = z.y(), z2 = z.z();
        const double dz0 = dz.x(), dz1 = dz.y(), dz2 = dz.z();
        const double omg_den = z2 + 1.0;
        if (omg_den < 1e-9)
        {
            throw FlatnessSingularityError("flatBodyrate: yaw composition undefined at inversion");
        }
        const double omg_term = dz2 / omg_den;
        const double cp = std::cos(fs.yaw);
        const double sp = std::sin(fs.yaw);
        Eigen::Vector3d omg;
        omg.x() = dz0 * sp - dz1 * cp - (z0 * sp - z1 * cp) * omg_term;
        omg.y() = dz0 * cp + dz1 * sp - (z0 * cp + z1 * sp) * omg_term;
        omg.z() = (z1 * dz0 - z0 * dz1) / omg_den + fs.yaw_rate;
        return omg;
    }

    double wrapAngle(double a)
    {
        a = std::fmod(a, 2.0 * M_PI);
        if (a > M_PI)
        {
            a -= 2.0 * M_PI;
        }
        else if (a <= -M_PI)
        {
            a += 2.0 * M_PI;
        }
        return a;
    }

    Eigen::Vector3d eulerZyx(const Eigen::Matrix3d &R)
    {
        const double pitch = std::asin(std::clamp(-R(2, 0), -1.0, 1.0));
        const double roll = std::atan2(R(2, 1), R(2, 2));
        const double yaw = std::atan2(R(1, 0), R(0, 0));
        return Eigen::Vector3d(roll, pitch, yaw);
    }

    bool nearGimbalLock(const Eigen::Matrix3d &R)
    {
        const double pitch = std::asin(std::clamp(-R(2, 0), -1.0, 1.0));
        return std::abs(std::abs(pitch) - 0.5 * M_PI) < kGimbalEps;
    }

    FrameDelta frameDelta(const StateFrame &prev, const StateFrame &next)
    {
        const Eigen::Matrix3d Rp = rot6dToMatrix(prev.r);
        const Eigen::Matrix3d Rn = rot6dToMatrix(next.r);
        const Eigen::Vector3d ep = eulerZyx(Rp);
        const Eigen::Vector3d en = eulerZyx(Rn);
        FrameDelta d;
        d.dp = next.p - prev.p;
        for (int i = 0; i < 3; ++i)
        {
            d.dtheta(i) = wrapAngle(en(i) - ep(i));
        }
        d.gimbal = nearGimbalLock(Rp) || nearGimbalLock(Rn);
        return d;
    }

    Eigen::Matrix3d projectionFrame(const Eigen::Vector3d &v,
                                    const Eigen::Vector3d &a,
                                    double g)
    {
        const Eigen::Vector3d zu = a + g * Eigen::Vector3d::UnitZ();
        const double n = zu.norm();
        if (n < 1e-9)
        {
            throw FlatnessSingularityError("projectionFrame: free-fall attitude undefined");
        }
        const Eigen::Vector3d z = zu / n;
        Eigen::Vector3d u = v - z * z.dot(v);
        if (u.norm() < 1e-6)
        {
            // velocity along thrust axis; fall back to the least-aligned world axis
            int k = 0;
            z.cwiseAbs().minCoeff(&k);
            u = Eigen::Vector3d::Unit(k) - z * z.dot(Eigen::Vector3d::Unit(k));
        }
        const Eigen::Vector3d xb = u.normalized();
        const Eigen::Vector3d yb = z.cross(xb);
        Eigen::Matrix3d R;
        R.col(0) = xb;
        R.col(1) = yb;
        R.col(2) = z;
        return R;
    }

    Eigen::Vector3d bodyRatesProjectedFull(const Eigen::Vector3d &v,
                                           const Eigen::Vector3d &a,
                                           const Eigen::Vector3d &j,
                                           double g)
    {
        const Eigen::Matrix3d R = projectionFrame(v, a, g);
        const Eigen::Vector3d z = R.col(2);
        const Eigen::Vector3d zu = a + g * Eigen::Vector3d::UnitZ();
        const double n = zu.norm();
        const Eigen::Vector3d dz = (j - z * z.dot(j)) / n;
        const Eigen::Vector3d u = v - z * z.dot(v);
        const double un = std::sqrt(u.squaredNorm() + 1e-6);
        const Eigen::Vector3d du = a - z * z.dot(a) - dz * z.dot(v) - z * dz.dot(v);
        Eigen::Vector3d omg;
        omg.x() = -R.col(1).dot(dz);
        omg.y() = R.col(0).dot(dz);
        omg.z() = R.col(1).dot(du) / un;
        return omg;
    }

} // namespace aero
