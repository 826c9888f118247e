#include "aero/postprocess.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "json.hpp"

#include "aero/lbfgs.hpp"

namespace aero
{

    namespace
    {

        using json = nlohmann::json;

        Eigen::Vector3d bodyZ(const StateFrame &f)
        {
            return rot6dToMatrix(f.r).col(2);
        }

        double angleBetween(const Eigen::Vector3d &a, const Eigen::Vector3d &b)
        {
            const double c = std::min(1.0, std::max(-1.0, a.dot(b)));
            return std::acos(c);
        }

        double cumulativeTime(const std::vector<double> &T, int upto)
        {
            double s = 0.0;
            for (int j = 0; j < upto; ++j)
            {
                s += T[static_cast<size_t>(j)];
            }
            return s;
        }

    } // namespace

    std::vector<double> Keyframes::initialDurations() const
    {
        std::vector<double> T;
        for (size_t i = 0; i + 1 < stamps.size(); ++i)
        {
            T.push_back(stamps[i + 1] - stamps[i]);
        }
        return T;
    }

    std::vector<StateFrame> flattenChain(const std::vector<Primitive> &prims)
    {
        std::vector<StateFrame> out;
        for (const Primitive &pr : prims)
        {
            for (int i = 0; i < pr.active_len; ++i)
            {
                out.push_back(pr.frames[static_cast<size_t>(i)]);
            }
        }
        return out;
    }

    Keyframes extractKeyframes(const std::vector<StateFrame> &frames, double alpha)
    {
        if (frames.size() < 2)
        {
            throw ValidationError("keyframe extraction needs at least two frames");
        }
        if (!(alpha > 0.0) || !(alpha < M_PI))
        {
            throw ValidationError("keyframe threshold must lie in (0, pi)");
        }
        Keyframes kf;
        auto emit = [&](int idx)
        {
            const StateFrame &f = frames[static_cast<size_t>(idx)];
            kf.waypoints.push_back(f.p);
            kf.z_ref.push_back(bodyZ(f));
            kf.stamps.push_back(idx * kFrameDt);
            kf.frame_idx.push_back(idx);
        };
        emit(0);
        Eigen::Vector3d seed = bodyZ(frames[0]);
        const int n = static_cast<int>(frames.size());
        for (int k = 1; k < n; ++k)
        {
            const Eigen::Vector3d z = bodyZ(frames[static_cast<size_t>(k)]);
            if (angleBetween(seed, z) > alpha)
            {
                emit(k);
                seed = z;
            }
        }
        if (kf.frame_idx.back() != n - 1)
        {
            emit(n - 1);
        }
        return kf;
    }

    namespace
    {

        double faceMinSdf(const SdfGrid &grid, int axis, double plane,
                          const Eigen::Vector3d &lo, const Eigen::Vector3d &hi)
        {
            const int a1 = (axis + 1) % 3;
            const int a2 = (axis + 2) % 3;
            const int n1 = std::max(
                2, static_cast<int>(std::ceil((hi(a1) - lo(a1)) / grid.voxel())) + 1);
            const int n2 = std::max(
                2, static_cast<int>(std::ceil((hi(a2) - lo(a2)) / grid.voxel())) + 1);
            double best = std::numeric_limits<double>::infinity();
            Eigen::Vector3d p;
            p(axis) = plane;
            for (int i = 0; i < n1; ++i)
            {
                p(a1) = lo(a1) + (hi(a1) - lo(a1)) * i / (n1 - 1);
                for (int j = 0; j < n2; ++j)
                {
                    p(a2) = lo(a2) + (hi(a2) - lo(a2)) * j / (n2 - 1);
                    best = std::min(best, grid.query(p).value);
                }
            }
            return best;
        }

        Polyhedron boxToPoly(const Eigen::Vector3d &lo, const Eigen::Vector3d &hi)
        {
            Polyhedron poly;
            poly.A.resize(6, 3);
            poly.b.resize(6);
            for (int a = 0; a < 3; ++a)
            {
                poly.A.row(2 * a) = Eigen::Vector3d::Unit(a).transpose();
                poly.b(2 * a) = hi(a);
                poly.A.row(2 * a + 1) = -Eigen::Vector3d::Unit(a).transpose();
                poly.b(2 * a + 1) = -lo(a);
            }
            return poly;
        }

    } // namespace

    Corridor buildCorridor(const std::vector<StateFrame> &frames,
                           const Keyframes &kf, const SdfGrid &grid,
                           const CorridorParams &cp)
    {
        if (kf.segments() < 1)
        {
            throw ValidationError("corridor needs at least one keyframe segment");
        }
        if (!(cp.step > 0.0) || !(cp.max_extent >= 0.0) || cp.r_quad < 0.0)
        {
            throw ConfigError("corridor parameters must be positive");
        }
        const Eigen::Vector3d glo = grid.origin();
        const Eigen::Vector3d ghi =
            grid.origin() + grid.voxel() * Eigen::Vector3d(grid.nx(), grid.ny(), grid.nz());

        Corridor corridor;
        for (int s = 0; s < kf.segments(); ++s)
        {
            const int i0 = kf.frame_idx[static_cast<size_t>(s)];
            const int i1 = kf.frame_idx[static_cast<size_t>(s + 1)];
            Eigen::Vector3d lo = frames[static_cast<size_t>(i0)].p;
            Eigen::Vector3d hi = lo;
            for (int i = i0; i <= i1; ++i)
            {
                lo = lo.cwiseMin(frames[static_cast<size_t>(i)].p);
                hi = hi.cwiseMax(frames[static_cast<size_t>(i)].p);
            }
            lo = (lo - Eigen::Vector3d::Constant(cp.r_quad)).cwiseMax(glo);
            hi = (hi + Eigen::Vector3d::Constant(cp.r_quad)).cwiseMin(ghi);
            const Eigen::Vector3d seed_lo = lo;
            const Eigen::Vector3d seed_hi = hi;

            bool moved = true;
            while (moved)
            {
                moved = false;
                for (int a = 0; a < 3; ++a)
                {
                    const double slack = 1e-9;
                    double cand = hi(a) + cp.step;
                    if (cand <= ghi(a) + slack && cand - seed_hi(a) <= cp.max_extent + slack &&
                        faceMinSdf(grid, a, cand, lo, hi) >= cp.margin)
                    {
                        hi(a) = std::min(cand, ghi(a));
                        moved = true;
                    }
                    cand = lo(a) - cp.step;
                    if (cand >= glo(a) - slack && seed_lo(a) - cand <= cp.max_extent + slack &&
                        faceMinSdf(grid, a, cand, lo, hi) >= cp.margin)
                    {
                        lo(a) = std::max(cand, glo(a));
                        moved = true;
                    }
                }
            }
            // faces accepted early saw a narrower cross-section; retreat any
            // that fail at the final spans, never past the seed box
            bool retreat = true;
            while (retreat)
            {
                retreat = false;
                for (int a = 0; a < 3; ++a)
                {
                    if (hi(a) - cp.step >= seed_hi(a) &&
                        faceMinSdf(grid, a, hi(a), lo, hi) < cp.margin)
                    {
                        hi(a) -= cp.step;
                        retreat = true;
                    }
                    if (lo(a) + cp.step <= seed_lo(a) &&
                        faceMinSdf(grid, a, lo(a), lo, hi) < cp.margin)
                    {
                        lo(a) += cp.step;
                        retreat = true;
                    }
                }
            }

            const Polyhedron poly = boxToPoly(lo, hi);
            for (int i = i0; i <= i1; ++i)
            {
                if (!poly.contains(frames[static_cast<size_t>(i)].p, 1e-9))
                {
                    throw CorridorError("segment frame escaped its corridor polyhedron", s);
                }
            }
            corridor.polys.push_back(poly);
        }
        return corridor;
    }

    void validateProblem(const OptProblem &prob)
    {
        const OptWeights &w = prob.weights;
        if (w.rho_T < 0 || w.w_att < 0 || w.w_v < 0 || w.w_f < 0 ||
            w.w_omega_xy < 0 || w.w_omega_z < 0 || w.w_safe < 0)
        {
            throw ConfigError("cost weights must be non-negative");
        }
        if (!(w.limit_shrink > 0.0) || w.limit_shrink > 1.0)
        {
            throw ConfigError("limit shrink must lie in (0, 1]");
        }
        if (prob.quad_samples < 8)
        {
            throw ConfigError("quadrature needs at least 8 samples per segment");
        }
        if (prob.s_o != 3 && prob.s_o != 4)
        {
            throw ConfigError("boundary order must be 3 or 4");
        }
        if (prob.stage_iters < 1)
        {
            throw ConfigError("stage iteration budget must be positive");
        }
        const size_t n = prob.kf.waypoints.size();
        if (n < 2 || prob.kf.z_ref.size() != n || prob.kf.stamps.size() != n)
        {
            throw ValidationError("keyframes need consistent waypoint/z_ref/stamp lists");
        }
        for (size_t i = 0; i + 1 < n; ++i)
        {
            if (!(prob.kf.stamps[i + 1] > prob.kf.stamps[i]))
            {
                throw ValidationError("keyframe stamps must increase strictly");
            }
        }
        for (const Eigen::Vector3d &z : prob.kf.z_ref)
        {
            if (std::abs(z.norm() - 1.0) > 1e-6)
            {
                throw ValidationError("z-axis references must be unit vectors");
            }
        }
        if (!prob.corridor.polys.empty() &&
            static_cast<int>(prob.corridor.polys.size()) != prob.kf.segments())
        {
            throw ValidationError("corridor must carry one polyhedron per segment");
        }
        if ((prob.x0.p - prob.kf.waypoints.front()).norm() > 1e-9 ||
            (prob.xf.p - prob.kf.waypoints.back()).norm() > 1e-9)
        {
            throw ValidationError("boundary positions must match the end keyframes");
        }
    }

    CostGrads evalCosts(const PolySpline &sp, const OptProblem &prob)
    {
        const int M = sp.segments();
        const int s_o = sp.s_o;
        const int bs = 2 * s_o;
        if (M != prob.kf.segments())
        {
            throw ValidationError("trajectory segment count must match the keyframes");
        }

        CostGrads out;
        Eigen::MatrixXd dC = Eigen::MatrixXd::Zero(bs * M, 3);
        Eigen::VectorXd dTdir = Eigen::VectorXd::Zero(M);
        CostTerms &terms = out.terms;
        const OptWeights &w = prob.weights;
        const QuadParams &qp = prob.quad;

        // integrated squared s_o-th derivative, closed form per segment
        for (int i = 0; i < M; ++i)
        {
            const double Ti = sp.T[static_cast<size_t>(i)];
            Eigen::MatrixXd G(s_o, s_o);
            for (int a = 0; a < s_o; ++a)
            {
                for (int b = 0; b < s_o; ++b)
                {
                    G(a, b) = std::pow(Ti, a + b + 1) / (a + b + 1);
                }
            }
            Eigen::MatrixXd gamma(s_o, 3);
            std::vector<double> ff(static_cast<size_t>(s_o));
            for (int e = 0; e < s_o; ++e)
            {
                double f = 1.0;
                for (int d = 0; d < s_o; ++d)
                {
                    f *= static_cast<double>(s_o + e - d);
                }
                ff[static_cast<size_t>(e)] = f;
                gamma.row(e) = sp.coef.row(bs * i + s_o + e) * f;
            }
            terms.smooth += (gamma.transpose() * G * gamma).trace();
            const Eigen::MatrixXd dGamma = 2.0 * G * gamma;
            for (int e = 0; e < s_o; ++e)
            {
                dC.row(bs * i + s_o + e) += dGamma.row(e) * ff[static_cast<size_t>(e)];
            }
            dTdir(i) += sp.deriv(i, Ti, s_o).squaredNorm();
        }

        terms.time = w.rho_T * cumulativeTime(sp.T, M);
        dTdir.array() += w.rho_T;

        // thrust alignment at keyframe times; endpoint accelerations are
        // boundary-pinned, so only interior junctions carry gradient
        for (int i = 0; i <= M; ++i)
        {
            const bool interior = (i > 0 && i < M);
            const Eigen::Vector3d a = interior
                                          ? sp.deriv(i, 0.0, 2)
                                          : (i == 0 ? sp.deriv(0, 0.0, 2)
                                                    : sp.deriv(M - 1, sp.T[static_cast<size_t>(M - 1)], 2));
            const Eigen::Vector3d f = flatThrust(a, qp);
            const double fn = f.norm();
            if (fn < qp.thrustEps())
            {
                throw FlatnessSingularityError("thrust vanished at a keyframe",
                                               cumulativeTime(sp.T, i));
            }
            const Eigen::Vector3d z = prob.kf.z_ref[static_cast<size_t>(i)];
            terms.att += w.w_att * (-f.dot(z) / fn);
            if (interior && w.w_att > 0.0)
            {
                const Eigen::Vector3d df = -z / fn + f.dot(z) * f / (fn * fn * fn);
                dC.row(bs * i + 2) += (w.w_att * qp.mass * 2.0) * df.transpose();
            }
        }

        // hinge-cubed penalties on a fixed per-segment quadrature grid;
        // violations are relative to the shrunk squared limits so every
        // constraint contributes at a comparable scale
        const int ns = prob.quad_samples;
        const double shrink = w.limit_shrink;
        const double vmax2 = std::pow(shrink * qp.v_max, 2);
        const double fmax2 = std::pow(shrink * qp.f_max, 2);
        const double fmin2 = std::pow(qp.f_min / shrink, 2);
        const double wxy2 = std::pow(shrink * qp.omega_max_xy, 2);
        const double wz2 = std::pow(shrink * qp.omega_max_z, 2);
        const bool use_rates = w.w_omega_xy > 0.0 || w.w_omega_z > 0.0;

        for (int i = 0; i < M; ++i)
        {
            const double Ti = sp.T[static_cast<size_t>(i)];
            const double wq = Ti / ns;
            const Polyhedron *poly =
                prob.corridor.polys.empty() ? nullptr
                                            : &prob.corridor.polys[static_cast<size_t>(i)];
            for (int k = 0; k < ns; ++k)
            {
                const double frac = (k + 0.5) / ns;
                const double u = frac * Ti;
                const Eigen::Vector3d p = sp.deriv(i, u, 0);
                const Eigen::Vector3d v = sp.deriv(i, u, 1);
                const Eigen::Vector3d a = sp.deriv(i, u, 2);
                const Eigen::Vector3d j = sp.deriv(i, u, 3);
                Eigen::Vector3d gp = Eigen::Vector3d::Zero();
                Eigen::Vector3d gv = Eigen::Vector3d::Zero();
                Eigen::Vector3d ga = Eigen::Vector3d::Zero();
                Eigen::Vector3d gj = Eigen::Vector3d::Zero();
                double dv = 0.0, df = 0.0, dxy = 0.0, dz = 0.0, dsafe = 0.0;

                const double hv = v.squaredNorm() / vmax2 - 1.0;
                if (w.w_v > 0.0 && hv > 0.0)
                {
                    dv += w.w_v * hv * hv * hv;
                    gv += (w.w_v * 3.0 * hv * hv * 2.0 / vmax2) * v;
                }

                const Eigen::Vector3d f = flatThrust(a, qp);
                const double fn2 = f.squaredNorm();
                if (w.w_f > 0.0)
                {
                    const double hf = fn2 / fmax2 - 1.0;
                    if (hf > 0.0)
                    {
                        df += w.w_f * hf * hf * hf;
                        ga += (w.w_f * 3.0 * hf * hf * 2.0 * qp.mass / fmax2) * f;
                    }
                    const double hl = 1.0 - fn2 / fmin2;
                    if (hl > 0.0)
                    {
                        df += w.w_f * hl * hl * hl;
                        ga -= (w.w_f * 3.0 * hl * hl * 2.0 * qp.mass / fmin2) * f;
                    }
                }

                if (use_rates)
                {
                    const TiltRates<double> tr = bodyRatesProjected<double>(
                        toVecT<double>(v), toVecT<double>(a), toVecT<double>(j), qp.g);
                    const double hxy = tr.wxySq / wxy2 - 1.0;
                    const double hz = tr.wz * tr.wz / wz2 - 1.0;
                    const bool need_xy = w.w_omega_xy > 0.0 && hxy > 0.0;
                    const bool need_z = w.w_omega_z > 0.0 && hz > 0.0;
                    if (need_xy || need_z)
                    {
                        double dwxy[9], dwz[9];
                        for (int c = 0; c < 9; ++c)
                        {
                            DVec3 vd = toVecT<Dual>(v);
                            DVec3 ad = toVecT<Dual>(a);
                            DVec3 jd = toVecT<Dual>(j);
                            Dual *slot[9] = {&vd.x, &vd.y, &vd.z, &ad.x, &ad.y,
                                             &ad.z, &jd.x, &jd.y, &jd.z};
                            slot[c]->d = 1.0;
                            const TiltRates<Dual> td =
                                bodyRatesProjected<Dual>(vd, ad, jd, qp.g);
                            dwxy[c] = td.wxySq.d;
                            dwz[c] = td.wz.d;
                        }
                        if (need_xy)
                        {
                            dxy += w.w_omega_xy * hxy * hxy * hxy;
                            const double c3 = w.w_omega_xy * 3.0 * hxy * hxy / wxy2;
                            for (int c = 0; c < 3; ++c)
                            {
                                gv(c) += c3 * dwxy[c];
                                ga(c) += c3 * dwxy[3 + c];
                                gj(c) += c3 * dwxy[6 + c];
                            }
                        }
                        if (need_z)
                        {
                            dz += w.w_omega_z * hz * hz * hz;
                            const double c3 =
                                w.w_omega_z * 3.0 * hz * hz * 2.0 * tr.wz / wz2;
                            for (int c = 0; c < 3; ++c)
                            {
                                gv(c) += c3 * dwz[c];
                                ga(c) += c3 * dwz[3 + c];
                                gj(c) += c3 * dwz[6 + c];
                            }
                        }
                    }
                }

                if (poly != nullptr && w.w_safe > 0.0)
                {
                    for (int r = 0; r < poly->A.rows(); ++r)
                    {
                        const double hc = poly->A.row(r).dot(p) - poly->b(r);
                        if (hc > 0.0)
                        {
                            dsafe += w.w_safe * hc * hc * hc;
                            gp += (w.w_safe * 3.0 * hc * hc) * poly->A.row(r).transpose();
                        }
                    }
                }

                const double density = dv + df + dxy + dz + dsafe;
                terms.pen_v += wq * dv;
                terms.pen_f += wq * df;
                terms.pen_wxy += wq * dxy;
                terms.pen_wz += wq * dz;
                terms.pen_safe += wq * dsafe;

                if (density > 0.0)
                {
                    Eigen::MatrixXd block = Eigen::MatrixXd::Zero(bs, 3);
                    block += polyBasis(u, 0, s_o) * gp.transpose();
                    block += polyBasis(u, 1, s_o) * gv.transpose();
                    block += polyBasis(u, 2, s_o) * ga.transpose();
                    block += polyBasis(u, 3, s_o) * gj.transpose();
                    dC.middleRows(bs * i, bs) += wq * block;
                    dTdir(i) += density / ns;
                    const Eigen::Vector3d snap = sp.deriv(i, u, 4);
                    dTdir(i) += wq * frac *
                                (gp.dot(v) + gv.dot(a) + ga.dot(j) + gj.dot(snap));
                }
            }
        }

        out.J = terms.total();
        const SplineGrads sg = propagateSplineGrads(sp, dC, dTdir);
        out.dQ = sg.dQ;
        out.dT = sg.dT;
        return out;
    }

    FeasReport auditTrajectory(const PolySpline &sp, const OptProblem &prob,
                               int samples_per_segment)
    {
        if (samples_per_segment < 1)
        {
            throw ConfigError("audit needs at least one sample per segment");
        }
        FeasReport rep;
        const QuadParams &qp = prob.quad;
        for (int i = 0; i < sp.segments(); ++i)
        {
            const double Ti = sp.T[static_cast<size_t>(i)];
            const Polyhedron *poly =
                prob.corridor.polys.empty() ? nullptr
                                            : &prob.corridor.polys[static_cast<size_t>(i)];
            for (int k = 0; k <= samples_per_segment; ++k)
            {
                const double u = Ti * k / samples_per_segment;
                const Eigen::Vector3d p = sp.deriv(i, u, 0);
                const Eigen::Vector3d v = sp.deriv(i, u, 1);
                const Eigen::Vector3d a = sp.deriv(i, u, 2);
                const Eigen::Vector3d j = sp.deriv(i, u, 3);
                rep.v_over = std::max(rep.v_over, v.norm() - qp.v_max);
                const double fn = flatThrust(a, qp).norm();
                rep.f_over = std::max(rep.f_over, fn - qp.f_max);
                rep.f_under = std::max(rep.f_under, qp.f_min - fn);
                const TiltRates<double> tr = bodyRatesProjected<double>(
                    toVecT<double>(v), toVecT<double>(a), toVecT<double>(j), qp.g);
                rep.wxy_over =
                    std::max(rep.wxy_over, std::sqrt(tr.wxySq) - qp.omega_max_xy);
                rep.wz_over = std::max(rep.wz_over, std::abs(tr.wz) - qp.omega_max_z);
                if (poly != nullptr)
                {
                    rep.corridor_over = std::max(
                        rep.corridor_over, (poly->A * p - poly->b).maxCoeff());
                }
                ++rep.samples;
            }
        }
        rep.v_over = std::max(rep.v_over, 0.0);
        rep.f_over = std::max(rep.f_over, 0.0);
        rep.f_under = std::max(rep.f_under, 0.0);
        rep.wxy_over = std::max(rep.wxy_over, 0.0);
        rep.wz_over = std::max(rep.wz_over, 0.0);
        rep.corridor_over = std::max(rep.corridor_over, 0.0);
        return rep;
    }

    double attitudeAlignment(const PolySpline &sp, const OptProblem &prob,
                             double *min_cos)
    {
        const int M = sp.segments();
        double sum = 0.0;
        double mn = 1.0;
        for (int i = 0; i <= M; ++i)
        {
            const Eigen::Vector3d a =
                (i < M) ? sp.deriv(i, 0.0, 2)
                        : sp.deriv(M - 1, sp.T[static_cast<size_t>(M - 1)], 2);
            const Eigen::Vector3d f = flatThrust(a, prob.quad);
            const double fn = f.norm();
            const double c = fn < prob.quad.thrustEps()
                                 ? -1.0
                                 : f.dot(prob.kf.z_ref[static_cast<size_t>(i)]) / fn;
            sum += c;
            mn = std::min(mn, c);
        }
        if (min_cos != nullptr)
        {
            *min_cos = mn;
        }
        return sum / (M + 1);
    }

    namespace
    {

        struct PackedVars
        {
            int M;
            Eigen::VectorXd x;
        };

        PackedVars packInitial(const OptProblem &prob)
        {
            const int M = prob.kf.segments();
            PackedVars pv;
            pv.M = M;
            pv.x.resize(3 * (M - 1) + M);
            for (int i = 0; i + 1 < M; ++i)
            {
                pv.x.segment<3>(3 * i) = prob.kf.waypoints[static_cast<size_t>(i + 1)];
            }
            const std::vector<double> T0 = prob.kf.initialDurations();
            for (int i = 0; i < M; ++i)
            {
                pv.x(3 * (M - 1) + i) = std::log(T0[static_cast<size_t>(i)]);
            }
            return pv;
        }

        PolySpline splineFromVars(const OptProblem &prob, const Eigen::VectorXd &x)
        {
            const int M = prob.kf.segments();
            std::vector<Eigen::Vector3d> q(static_cast<size_t>(std::max(M - 1, 0)));
            for (int i = 0; i + 1 < M; ++i)
            {
                q[static_cast<size_t>(i)] = x.segment<3>(3 * i);
            }
            std::vector<double> T(static_cast<size_t>(M));
            for (int i = 0; i < M; ++i)
            {
                T[static_cast<size_t>(i)] = std::exp(x(3 * (M - 1) + i));
            }
            return solveSpline(q, T, prob.x0, prob.xf, prob.s_o);
        }

        StageReport runStage(const OptProblem &prob, Eigen::VectorXd &x, int iters)
        {
            const int M = prob.kf.segments();
            const auto t0 = std::chrono::steady_clock::now();
            Objective obj = [&prob, M](const Eigen::VectorXd &xv,
                                       Eigen::VectorXd &grad) -> double
            {
                const PolySpline sp = splineFromVars(prob, xv);
                const CostGrads cg = evalCosts(sp, prob);
                grad.resize(xv.size());
                for (int i = 0; i + 1 < M; ++i)
                {
                    grad.segment<3>(3 * i) = cg.dQ.row(i).transpose();
                }
                for (int i = 0; i < M; ++i)
                {
                    grad(3 * (M - 1) + i) = cg.dT(i) * sp.T[static_cast<size_t>(i)];
                }
                return cg.J;
            };
            LbfgsOptions opts;
            opts.max_iters = iters;
            opts.gtol = 1e-5;
            opts.max_step = 0.5;
            const LbfgsResult res = lbfgsMinimize(obj, x, opts);
            x = res.x;
            StageReport rep;
            rep.iters = res.iters;
            rep.converged = res.converged;
            rep.j_initial = res.trace.front();
            rep.j_final = res.f;
            rep.trace = res.trace;
            rep.seconds =
                std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
                    .count();
            return rep;
        }

    } // namespace

    OptimizeOutcome hierarchicalOptimize(const OptProblem &prob, bool two_stage)
    {
        validateProblem(prob);
        OptimizeOutcome out;
        out.two_stage = two_stage;
        PackedVars pv = packInitial(prob);
        if (two_stage)
        {
            OptProblem relaxed = prob;
            relaxed.weights.w_omega_z = 0.0;
            out.stage1 = runStage(relaxed, pv.x, prob.stage_iters);
            out.stage2 = runStage(prob, pv.x, prob.stage_iters);
        }
        else
        {
            out.stage2 = runStage(prob, pv.x, 2 * prob.stage_iters);
        }
        out.spline = splineFromVars(prob, pv.x);
        const CostGrads cg = evalCosts(out.spline, prob);
        out.terms = cg.terms;
        out.feas = auditTrajectory(out.spline, prob);
        return out;
    }

    void boundaryFromFrames(const std::vector<StateFrame> &frames,
                            FlatState &x0, FlatState &xf)
    {
        if (frames.size() < 2)
        {
            throw ValidationError("boundary extraction needs at least two frames");
        }
        const size_t n = frames.size();
        x0 = FlatState{};
        xf = FlatState{};
        x0.p = frames[0].p;
        x0.v = (frames[1].p - frames[0].p) / kFrameDt;
        xf.p = frames[n - 1].p;
        xf.v = (frames[n - 1].p - frames[n - 2].p) / kFrameDt;
    }

    void writeTrajectoryCsv(const std::string &path, const PolySpline &sp,
                            const QuadParams &qp, double dt)
    {
        if (!(dt > 0.0))
        {
            throw ConfigError("sampling period must be positive");
        }
        std::FILE *f = std::fopen(path.c_str(), "w");
        if (f == nullptr)
        {
            throw IoError("cannot open trajectory csv for writing: " + path);
        }
        std::fprintf(f, "t,px,py,pz,vx,vy,vz,ax,ay,az,ftx,fty,ftz,wx,wy,wz,qw,qx,qy,qz\n");
        const double total = sp.totalTime();
        const int n = static_cast<int>(std::ceil(total / dt));
        for (int k = 0; k <= n; ++k)
        {
            const double t = std::min(k * dt, total);
            const FlatState fs = sp.flatAt(t);
            const Eigen::Vector3d ft = flatThrust(fs.a, qp);
            const Eigen::Vector3d w = bodyRatesProjectedFull(fs.v, fs.a, fs.j, qp.g);
            Eigen::Quaterniond quat(projectionFrame(fs.v, fs.a, qp.g));
            quat.normalize();
            if (quat.w() < 0.0)
            {
                quat.coeffs() *= -1.0;
            }
            std::fprintf(f,
                         "%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,"
                         "%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g\n",
                         t, fs.p.x(), fs.p.y(), fs.p.z(), fs.v.x(), fs.v.y(), fs.v.z(),
                         fs.a.x(), fs.a.y(), fs.a.z(), ft.x(), ft.y(), ft.z(),
                         w.x(), w.y(), w.z(), quat.w(), quat.x(), quat.y(), quat.z());
        }
        std::fclose(f);
    }

    namespace
    {

        json stageToJson(const StageReport &s)
        {
            return json{{"iters", s.iters},
                        {"converged", s.converged},
                        {"j_initial", s.j_initial},
                        {"j_final", s.j_final},
                        {"seconds", s.seconds}};
        }

    } // namespace

    void writeOptimizeReportJson(const std::string &path, const OptimizeOutcome &out)
    {
        json doc;
        doc["two_stage"] = out.two_stage;
        doc["stage1"] = stageToJson(out.stage1);
        doc["stage2"] = stageToJson(out.stage2);
        doc["costs"] = {{"smooth", out.terms.smooth}, {"time", out.terms.time},
                        {"att", out.terms.att},       {"pen_v", out.terms.pen_v},
                        {"pen_f", out.terms.pen_f},   {"pen_wxy", out.terms.pen_wxy},
                        {"pen_wz", out.terms.pen_wz}, {"pen_safe", out.terms.pen_safe},
                        {"total", out.terms.total()}};
        doc["feasibility"] = {{"v_over", out.feas.v_over},
                              {"f_over", out.feas.f_over},
                              {"f_under", out.feas.f_under},
                              {"wxy_over", out.feas.wxy_over},
                              {"wz_over", out.feas.wz_over},
                              {"corridor_over", out.feas.corridor_over},
                              {"max_violation", out.feas.maxViolation()},
                              {"samples", out.feas.samples}};
        std::ofstream f(path);
        if (!f)
        {
            throw IoError("cannot open report for writing: " + path);
        }
        f << doc.dump(2) << "\n";
    }

    void writeCorridorJson(const std::string &path, const Corridor &corridor)
    {
        json polys = json::array();
        for (const Polyhedron &p : corridor.polys)
        {
            json rows = json::array();
            for (int r = 0; r < p.A.rows(); ++r)
            {
                rows.push_back({p.A(r, 0), p.A(r, 1), p.A(r, 2), p.b(r)});
            }
            polys.push_back({{"halfspaces", rows}});
        }
        json doc;
        doc["polyhedra"] = polys;
        std::ofstream f(path);
        if (!f)
        {
            throw IoError("cannot open corridor dump for writing: " + path);
        }
        f << doc.dump(2) << "\n";
    }

} // namespace aero
