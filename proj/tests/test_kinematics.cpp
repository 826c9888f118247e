#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>

#include "aero/kinematics.hpp"
#include "aero/rng.hpp"

using namespace aero;

namespace
{

    // Independent Gram-Schmidt written directly from the textbook definition.
    Eigen::Matrix3d gramSchmidtOracle(const Eigen::Vector3d &a1, const Eigen::Vector3d &a2)
    {
        Eigen::Vector3d b1 = a1 / a1.norm();
        Eigen::Vector3d b2 = a2 - (b1.dot(a2)) * b1;
        b2 /= b2.norm();
        Eigen::Matrix3d R;
        R.col(0) = b1;
        R.col(1) = b2;
        R.col(2) = b1.cross(b2);
        return R;
    }

    Eigen::Matrix3d randomRotation(Rng &rng)
    {
        const Eigen::Vector3d axis =
            Eigen::Vector3d(rng.normal(), rng.normal(), rng.normal()).normalized();
        const double ang = rng.uniform(-M_PI, M_PI);
        return Eigen::AngleAxisd(ang, axis).toRotationMatrix();
    }

    Eigen::Matrix3d rotZ(double a)
    {
        return Eigen::AngleAxisd(a, Eigen::Vector3d::UnitZ()).toRotationMatrix();
    }

    // Attitude along a flat trajectory near time 0, built only from the tilt
    // quaternion definition; used to difference numerically.
    Eigen::Quaterniond attitudeAt(const FlatState &fs, const QuadParams &qp, double t)
    {
        const Eigen::Vector3d a = fs.a + fs.j * t;
        const Eigen::Vector3d f = qp.mass * (a + qp.g * Eigen::Vector3d::UnitZ());
        return tiltYawQuat(f.normalized(), fs.yaw + fs.yaw_rate * t);
    }

    Eigen::Vector3d bodyrateFdOracle(const FlatState &fs, const QuadParams &qp)
    {
        const double h = 1e-5;
        Eigen::Quaterniond qm = attitudeAt(fs, qp, -h);
        Eigen::Quaterniond qp_ = attitudeAt(fs, qp, h);
        Eigen::Quaterniond q0 = attitudeAt(fs, qp, 0.0);
        if (qm.dot(qp_) < 0.0)
        {
            qp_.coeffs() *= -1.0;
        }
        Eigen::Quaterniond dq;
        dq.coeffs() = (qp_.coeffs() - qm.coeffs()) / (2.0 * h);
        const Eigen::Quaterniond w = q0.conjugate() * dq;
        return 2.0 * Eigen::Vector3d(w.x(), w.y(), w.z());
    }

} // namespace

TEST_CASE("rot6d to matrix: identity and normalization")
{
    Rot6D r;
    r.a1 = Eigen::Vector3d(1, 0, 0);
    r.a2 = Eigen::Vector3d(0, 1, 0);
    CHECK((rot6dToMatrix(r) - Eigen::Matrix3d::Identity()).norm() < 1e-12);

    r.a1 = Eigen::Vector3d(2, 0, 0);
    r.a2 = Eigen::Vector3d(0, 3, 0);
    CHECK((rot6dToMatrix(r) - Eigen::Matrix3d::Identity()).norm() < 1e-12);
}

TEST_CASE("rot6d to matrix matches an independent Gram-Schmidt")
{
    Rot6D r;
    r.a1 = Eigen::Vector3d(1, 1, 0);
    r.a2 = Eigen::Vector3d(0, 1, 0);
    const Eigen::Matrix3d R = rot6dToMatrix(r);
    const Eigen::Matrix3d O = gramSchmidtOracle(r.a1, r.a2);
    CHECK((R - O).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("rot6d degenerate inputs throw")
{
    Rot6D r;
    r.a1 = Eigen::Vector3d(1, 0, 0);
    r.a2 = Eigen::Vector3d(2, 0, 0);
    CHECK_THROWS_AS(rot6dToMatrix(r), DegenerateRotationError);
    r.a1 = Eigen::Vector3d(1e-12, 0, 0);
    r.a2 = Eigen::Vector3d(0, 1, 0);
    CHECK_THROWS_AS(rot6dToMatrix(r), DegenerateRotationError);
}

TEST_CASE("rot6d output is orthonormal right-handed for random inputs")
{
    Rng rng(11);
    for (int i = 0; i < 50; ++i)
    {
        Rot6D r;
        r.a1 = Eigen::Vector3d(rng.normal(), rng.normal(), rng.normal());
        r.a2 = Eigen::Vector3d(rng.normal(), rng.normal(), rng.normal());
        if (r.a1.norm() < 1e-3 || r.a1.cross(r.a2).norm() < 1e-3)
        {
            continue;
        }
        const Eigen::Matrix3d R = rot6dToMatrix(r);
        CHECK((R.transpose() * R - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() < 1e-9);
        CHECK(R.determinant() == doctest::Approx(1.0).epsilon(1e-9));
    }
}

TEST_CASE("matrix to rot6d: analytic cases and roundtrip")
{
    Rot6D r = matrixToRot6d(Eigen::Matrix3d::Identity());
    CHECK((r.a1 - Eigen::Vector3d(1, 0, 0)).norm() < 1e-12);
    CHECK((r.a2 - Eigen::Vector3d(0, 1, 0)).norm() < 1e-12);

    r = matrixToRot6d(rotZ(0.5 * M_PI));
    CHECK((r.a1 - Eigen::Vector3d(0, 1, 0)).norm() < 1e-12);
    CHECK((r.a2 - Eigen::Vector3d(-1, 0, 0)).norm() < 1e-12);

    Rng rng(3);
    for (int i = 0; i < 20; ++i)
    {
        const Eigen::Matrix3d R = randomRotation(rng);
        CHECK((rot6dToMatrix(matrixToRot6d(R)) - R).cwiseAbs().maxCoeff() < 1e-9);
    }

    Eigen::Matrix3d bad = Eigen::Matrix3d::Identity();
    bad(0, 0) = 2.0;
    CHECK_THROWS_AS(matrixToRot6d(bad), ValidationError);
    Eigen::Matrix3d refl = Eigen::Matrix3d::Identity();
    refl(2, 2) = -1.0;
    CHECK_THROWS_AS(matrixToRot6d(refl), ValidationError);
}

TEST_CASE("canonicalize is a projection onto valid rotations")
{
    Rng rng(7);
    for (int i = 0; i < 10; ++i)
    {
        Rot6D raw;
        raw.a1 = Eigen::Vector3d(rng.normal(), rng.normal(), rng.normal()) * 2.0;
        raw.a2 = Eigen::Vector3d(rng.normal(), rng.normal(), rng.normal()) * 2.0;
        if (raw.a1.norm() < 1e-3 || raw.a1.cross(raw.a2).norm() < 1e-3)
        {
            continue;
        }
        const Rot6D c = canonicalizeRot6d(raw);
        const Rot6D cc = canonicalizeRot6d(c);
        CHECK((c.a1 - cc.a1).norm() < 1e-12);
        CHECK((c.a2 - cc.a2).norm() < 1e-12);
        CHECK(c.a1.norm() == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(std::abs(c.a1.dot(c.a2)) < 1e-12);
    }
}

TEST_CASE("flat thrust: hover, free fall, direct formula")
{
    QuadParams qp;
    CHECK((flatThrust(Eigen::Vector3d::Zero(), qp) - Eigen::Vector3d(0, 0, 9.81)).norm() < 1e-15);
    CHECK(flatThrust(Eigen::Vector3d(0, 0, -9.81), qp).norm() < 1e-12);

    QuadParams light;
    light.mass = 0.8;
    const Eigen::Vector3d f = flatThrust(Eigen::Vector3d(1, 0, 0), light);
    CHECK((f - Eigen::Vector3d(0.8, 0.0, 7.848)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("flat thrust is linear in acceleration")
{
    QuadParams qp;
    qp.mass = 1.3;
    Rng rng(5);
    const Eigen::Vector3d a1(rng.normal(), rng.normal(), rng.normal());
    const Eigen::Vector3d a2(rng.normal(), rng.normal(), rng.normal());
    const Eigen::Vector3d lhs = flatThrust(a1 + a2, qp);
    const Eigen::Vector3d rhs = flatThrust(a1, qp) + flatThrust(a2, qp) - flatThrust(Eigen::Vector3d::Zero(), qp);
    CHECK((lhs - rhs).norm() < 1e-12);
}

TEST_CASE("flat bodyrate: hover cases")
{
    QuadParams qp;
    FlatState fs;
    CHECK(flatBodyrate(fs, qp).norm() < 1e-15);
    fs.yaw_rate = 0.5;
    const Eigen::Vector3d w = flatBodyrate(fs, qp);
    CHECK((w - Eigen::Vector3d(0, 0, 0.5)).norm() < 1e-15);
}

TEST_CASE("flat bodyrate matches numerical attitude derivative")
{
    QuadParams qp;
    qp.mass = 0.9;
    Rng rng(17);
    for (int i = 0; i < 20; ++i)
    {
        FlatState fs;
        fs.a = Eigen::Vector3d(rng.uniform(-4, 4), rng.uniform(-4, 4), rng.uniform(-4, 4));
        fs.j = Eigen::Vector3d(rng.uniform(-10, 10), rng.uniform(-10, 10), rng.uniform(-10, 10));
        fs.yaw = rng.uniform(-M_PI, M_PI);
        fs.yaw_rate = rng.uniform(-2, 2);
        const Eigen::Vector3d f = flatThrust(fs.a, qp);
        if (f.norm() < 2.0 || f.normalized().z() < -0.5)
        {
            continue;
        }
        const Eigen::Vector3d w = flatBodyrate(fs, qp);
        const Eigen::Vector3d w_fd = bodyrateFdOracle(fs, qp);
        CHECK((w - w_fd).norm() <= 1e-4 * std::max(1.0, w_fd.norm()));
    }
}

TEST_CASE("flat bodyrate throws near free fall")
{
    QuadParams qp;
    FlatState fs;
    fs.a = Eigen::Vector3d(0, 0, -9.81);
    fs.j = Eigen::Vector3d(1, 0, 0);
    CHECK_THROWS_AS(flatBodyrate(fs, qp), FlatnessSingularityError);
}

TEST_CASE("frame delta: identity, translation, yaw wrap, gimbal flag")
{
    StateFrame a, b;
    FrameDelta d = frameDelta(a, b);
    CHECK(d.dp.norm() < 1e-15);
    CHECK(d.dtheta.norm() < 1e-15);
    CHECK_FALSE(d.gimbal);

    b.p = Eigen::Vector3d(0.1, 0, 0);
    d = frameDelta(a, b);
    CHECK((d.dp - Eigen::Vector3d(0.1, 0, 0)).norm() < 1e-15);
    CHECK(d.dtheta.norm() < 1e-15);

    StateFrame y0, y1;
    y0.r = matrixToRot6d(rotZ(350.0 * M_PI / 180.0));
    y1.r = matrixToRot6d(rotZ(10.0 * M_PI / 180.0));
    d = frameDelta(y0, y1);
    CHECK(d.dtheta.z() == doctest::Approx(0.349).epsilon(1e-3));

    StateFrame g0, g1;
    g1.r = matrixToRot6d(
        Eigen::AngleAxisd(0.5 * M_PI, Eigen::Vector3d::UnitY()).toRotationMatrix());
    d = frameDelta(g0, g1);
    CHECK(d.gimbal);
}

TEST_CASE("wrap angle maps into (-pi, pi]")
{
    CHECK(wrapAngle(M_PI) == doctest::Approx(M_PI));
    CHECK(wrapAngle(-M_PI) == doctest::Approx(M_PI));
    CHECK(wrapAngle(3.0 * M_PI / 2.0) == doctest::Approx(-M_PI / 2.0));
    CHECK(wrapAngle(0.3) == doctest::Approx(0.3));
}

TEST_CASE("euler zyx recovers constructed angles away from gimbal lock")
{
    Rng rng(19);
    for (int i = 0; i < 20; ++i)
    {
        const double roll = rng.uniform(-2.0, 2.0);
        const double pitch = rng.uniform(-1.2, 1.2);
        const double yaw = rng.uniform(-M_PI, M_PI);
        const Eigen::Matrix3d R =
            (Eigen::AngleAxisd(yaw, Eigen::Vector3d::UnitZ()) *
             Eigen::AngleAxisd(pitch, Eigen::Vector3d::UnitY()) *
             Eigen::AngleAxisd(roll, Eigen::Vector3d::UnitX()))
                .toRotationMatrix();
        const Eigen::Vector3d e = eulerZyx(R);
        CHECK(e.x() == doctest::Approx(roll).epsilon(1e-9));
        CHECK(e.y() == doctest::Approx(pitch).epsilon(1e-9));
        CHECK(e.z() == doctest::Approx(yaw).epsilon(1e-9));
    }
}

TEST_CASE("projection-frame body rates match finite differences of the frame")
{
    // states along a vertical circle, where the projection frame must stay smooth
    const double g = 9.81;
    const double r = 1.2;
    const double c = 1.15 * g;
    const double w = std::sqrt(c / r);
    auto state = [&](double t)
    {
        FlatState fs;
        const double ph = w * t;
        fs.v = Eigen::Vector3d(r * w * std::cos(ph), 0.0, r * w * std::sin(ph));
        fs.a = Eigen::Vector3d(-c * std::sin(ph), 0.0, c * std::cos(ph));
        fs.j = Eigen::Vector3d(-c * w * std::cos(ph), 0.0, -c * w * std::sin(ph));
        return fs;
    };
    const double h = 1e-6;
    for (double t = 0.05; t < 2.0 * M_PI / w; t += 0.23)
    {
        const FlatState fs = state(t);
        const Eigen::Matrix3d R0 = projectionFrame(state(t - h).v, state(t - h).a, g);
        const Eigen::Matrix3d R1 = projectionFrame(state(t + h).v, state(t + h).a, g);
        const Eigen::Matrix3d R = projectionFrame(fs.v, fs.a, g);
        const Eigen::Matrix3d What = R.transpose() * (R1 - R0) / (2.0 * h);
        const Eigen::Vector3d w_fd(What(2, 1), What(0, 2), What(1, 0));
        const Eigen::Vector3d w_an = bodyRatesProjectedFull(fs.v, fs.a, fs.j, g);
        CHECK((w_an - w_fd).norm() <= 2e-4 * std::max(1.0, w_fd.norm()));

        const auto tr = bodyRatesProjected<double>(toVecT<double>(fs.v), toVecT<double>(fs.a),
                                                   toVecT<double>(fs.j), g);
        CHECK(std::sqrt(tr.wxySq) ==
              doctest::Approx(std::hypot(w_an.x(), w_an.y())).epsilon(1e-6));
        CHECK(tr.wz == doctest::Approx(w_an.z()).epsilon(1e-6));
    }
}

TEST_CASE("dual body rates agree with finite differences in a seeded direction")
{
    const double g = 9.81;
    Rng rng(23);
    for (int i = 0; i < 10; ++i)
    {
        Eigen::Vector3d v(rng.uniform(-4, 4), rng.uniform(-4, 4), rng.uniform(-2, 2));
        Eigen::Vector3d a(rng.uniform(-8, 8), rng.uniform(-8, 8), rng.uniform(-5, 5));
        Eigen::Vector3d j(rng.uniform(-20, 20), rng.uniform(-20, 20), rng.uniform(-20, 20));
        if ((a + g * Eigen::Vector3d::UnitZ()).norm() < 2.0)
        {
            continue;
        }
        Eigen::Vector3d dir(rng.normal(), rng.normal(), rng.normal());
        dir.normalize();

        DVec3 vd = toVecT<Dual>(v), ad = toVecT<Dual>(a), jd = toVecT<Dual>(j);
        ad.x.d = dir.x();
        ad.y.d = dir.y();
        ad.z.d = dir.z();
        const auto td = bodyRatesProjected<Dual>(vd, ad, jd, g);

        const double h = 1e-6;
        const auto lo = bodyRatesProjected<double>(toVecT<double>(v), toVecT<double>(a - h * dir),
                                                   toVecT<double>(j), g);
        const auto hi = bodyRatesProjected<double>(toVecT<double>(v), toVecT<double>(a + h * dir),
                                                   toVecT<double>(j), g);
        const double fd_wxy = (hi.wxySq - lo.wxySq) / (2.0 * h);
        const double fd_wz = (hi.wz - lo.wz) / (2.0 * h);
        CHECK(td.wxySq.d == doctest::Approx(fd_wxy).epsilon(1e-4));
        CHECK(td.wz.d == doctest::Approx(fd_wz).epsilon(1e-4));
    }
}
