#include "aero/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>
#include <omp.h>

#include "aero/binio.hpp"

namespace aero
{

    const char *actionName(ActionLabel a)
    {
        switch (a)
        {
        case ActionLabel::PowerLoop:
            return "PowerLoop";
        case ActionLabel::BarrelRoll:
            return "BarrelRoll";
        case ActionLabel::SplitS:
            return "SplitS";
        case ActionLabel::ImmelmannTurn:
            return "ImmelmannTurn";
        case ActionLabel::WallRide:
            return "WallRide";
        case ActionLabel::None:
            return "None";
        }
        return "None";
    }

    ActionLabel actionFromName(const std::string &name)
    {
        for (int i = 0; i <= 5; ++i)
        {
            if (name == actionName(static_cast<ActionLabel>(i)))
            {
                return static_cast<ActionLabel>(i);
            }
        }
        throw ValidationError("unknown action label: " + name);
    }

    void ManeuverCurve::add(double dur, std::function<FlatSample(double)> f)
    {
        pieces_.push_back({dur, std::move(f)});
        total_ += dur;
    }

    FlatSample ManeuverCurve::at(double t) const
    {
        t = std::clamp(t, 0.0, total_);
        double acc = 0.0;
        for (size_t i = 0; i < pieces_.size(); ++i)
        {
            const bool last = (i + 1 == pieces_.size());
            if (t <= acc + pieces_[i].dur + 1e-12 || last)
            {
                return pieces_[i].f(std::clamp(t - acc, 0.0, pieces_[i].dur));
            }
            acc += pieces_[i].dur;
        }
        throw Error("empty curve");
    }

    StateFrame ManeuverCurve::frameAt(double t, double g) const
    {
        const FlatSample s = at(t);
        StateFrame f;
        f.s = 0.0;
        f.p = s.p;
        f.r = matrixToRot6d(projectionFrame(s.v, s.a, g));
        return f;
    }

    Eigen::Matrix<double, 3, 6> quinticCoeffs(const Eigen::Vector3d &p0,
                                              const Eigen::Vector3d &v0,
                                              const Eigen::Vector3d &a0,
                                              const Eigen::Vector3d &p1,
                                              const Eigen::Vector3d &v1,
                                              const Eigen::Vector3d &a1,
                                              double T)
    {
        Eigen::Matrix<double, 3, 6> c;
        c.col(0) = p0;
        c.col(1) = v0;
        c.col(2) = 0.5 * a0;
        Eigen::Matrix3d M;
        const double T2 = T * T, T3 = T2 * T, T4 = T3 * T, T5 = T4 * T;
        M << T3, T4, T5,
            3.0 * T2, 4.0 * T3, 5.0 * T4,
            6.0 * T, 12.0 * T2, 20.0 * T3;
        Eigen::Matrix3d rhs;
        rhs.row(0) = (p1 - (p0 + v0 * T + 0.5 * a0 * T2)).transpose();
        rhs.row(1) = (v1 - (v0 + a0 * T)).transpose();
        rhs.row(2) = (a1 - a0).transpose();
        const Eigen::Matrix3d X = M.partialPivLu().solve(rhs);
        c.col(3) = X.row(0).transpose();
        c.col(4) = X.row(1).transpose();
        c.col(5) = X.row(2).transpose();
        return c;
    }

    FlatSample evalQuintic(const Eigen::Matrix<double, 3, 6> &c, double t)
    {
        FlatSample s;
        const double t2 = t * t, t3 = t2 * t, t4 = t3 * t, t5 = t4 * t;
        s.p = c.col(0) + c.col(1) * t + c.col(2) * t2 + c.col(3) * t3 + c.col(4) * t4 + c.col(5) * t5;
        s.v = c.col(1) + 2.0 * c.col(2) * t + 3.0 * c.col(3) * t2 + 4.0 * c.col(4) * t3 + 5.0 * c.col(5) * t4;
        s.a = 2.0 * c.col(2) + 6.0 * c.col(3) * t + 12.0 * c.col(4) * t2 + 20.0 * c.col(5) * t3;
        s.j = 6.0 * c.col(3) + 24.0 * c.col(4) * t + 60.0 * c.col(5) * t2;
        return s;
    }

    namespace
    {

        struct CoreSpec
        {
            Eigen::Vector3d v_in, a_in, v_out, a_out, delta;
            double T = 0.0;
            std::vector<std::pair<double, std::function<FlatSample(double)>>> pieces;
        };

        double vecAngle(const Eigen::Vector3d &a, const Eigen::Vector3d &b)
        {
            return std::atan2(a.cross(b).norm(), a.dot(b));
        }

        std::function<FlatSample(double)> transformPiece(const Eigen::Matrix3d &R,
                                                         const Eigen::Vector3d &off,
                                                         std::function<FlatSample(double)> f)
        {
            return [R, off, f](double t)
            {
                FlatSample s = f(t);
                s.p = R * s.p + off;
                s.v = R * s.v;
                s.a = R * s.a;
                s.j = R * s.j;
                return s;
            };
        }

        CoreSpec makePowerLoop(Rng &rng, double g)
        {
            CoreSpec c;
            const double r = rng.uniform(1.0, 1.6);
            const double ca = rng.uniform(1.10, 1.25) * g;
            const double w = std::sqrt(ca / r);
            const double v = w * r;
            c.T = 2.0 * M_PI / w;
            c.v_in = Eigen::Vector3d(v, 0, 0);
            c.a_in = Eigen::Vector3d(0, 0, ca);
            c.v_out = c.v_in;
            c.a_out = c.a_in;
            c.delta = Eigen::Vector3d::Zero();
            c.pieces.push_back({c.T, [r, ca, w](double t)
                                {
                                    const double ph = w * t;
                                    FlatSample s;
                                    s.p = Eigen::Vector3d(r * std::sin(ph), 0, r * (1.0 - std::cos(ph)));
                                    s.v = Eigen::Vector3d(r * w * std::cos(ph), 0, r * w * std::sin(ph));
                                    s.a = Eigen::Vector3d(-ca * std::sin(ph), 0, ca * std::cos(ph));
                                    s.j = Eigen::Vector3d(-ca * w * std::cos(ph), 0, -ca * w * std::sin(ph));
                                    return s;
                                }});
            return c;
        }

        std::function<FlatSample(double)> helixPiece(double u, double rho, double w,
                                                     double ca, double side)
        {
            // advance along +x while the radial direction sweeps from -z
            return [u, rho, w, ca, side](double t)
            {
                const double th = w * t;
                FlatSample s;
                s.p = Eigen::Vector3d(u * t, side * rho * std::sin(th), rho * (1.0 - std::cos(th)));
                s.v = Eigen::Vector3d(u, side * rho * w * std::cos(th), rho * w * std::sin(th));
                s.a = Eigen::Vector3d(0, -side * ca * std::sin(th), ca * std::cos(th));
                s.j = Eigen::Vector3d(0, -side * ca * w * std::cos(th), -ca * w * std::sin(th));
                return s;
            };
        }

        CoreSpec makeBarrelRoll(Rng &rng, double g)
        {
            CoreSpec c;
            const double w = rng.uniform(3.5, 4.5);
            const double ca = rng.uniform(1.20, 1.35) * g;
            const double rho = ca / (w * w);
            const double L = rng.uniform(2.0, 4.0);
            const double side = rng.index(2) == 0 ? 1.0 : -1.0;
            const double u = L * w / (2.0 * M_PI);
            c.T = 2.0 * M_PI / w;
            c.v_in = Eigen::Vector3d(u, side * rho * w, 0);
            c.a_in = Eigen::Vector3d(0, 0, ca);
            c.v_out = c.v_in;
            c.a_out = c.a_in;
            c.delta = Eigen::Vector3d(L, 0, 0);
            c.pieces.push_back({c.T, helixPiece(u, rho, w, ca, side)});
            return c;
        }

        CoreSpec makeSplitS(Rng &rng, double g)
        {
            CoreSpec c;
            const double wr = rng.uniform(4.4, 5.0);
            const double ca = rng.uniform(1.15, 1.25) * g;
            const double rho = ca / (wr * wr);
            const double u = rng.uniform(2.8, 3.2);
            const double side = rng.index(2) == 0 ? 1.0 : -1.0;
            const double t_roll = M_PI / wr;

            const Eigen::Vector3d p_r1(u * t_roll, 0, 2.0 * rho);
            const Eigen::Vector3d v_j(u, -side * rho * wr, 0);
            const double vj = v_j.norm();
            const Eigen::Vector3d vhat = v_j / vj;
            const double rl = vj * vj / ca;
            const double wl = ca / vj;
            const double t_loop = M_PI / wl;

            c.T = t_roll + t_loop;
            c.v_in = Eigen::Vector3d(u, side * rho * wr, 0);
            c.a_in = Eigen::Vector3d(0, 0, ca);
            c.v_out = -v_j;
            c.a_out = Eigen::Vector3d(0, 0, ca);
            c.delta = p_r1 - Eigen::Vector3d(0, 0, 2.0 * rl);

            c.pieces.push_back({t_roll, helixPiece(u, rho, wr, ca, side)});
            c.pieces.push_back({t_loop, [p_r1, vhat, rl, wl, ca](double t)
                                {
                                    const double ph = wl * t;
                                    const Eigen::Vector3d ez = Eigen::Vector3d::UnitZ();
                                    FlatSample s;
                                    s.p = p_r1 + rl * (std::cos(ph) - 1.0) * ez + rl * std::sin(ph) * vhat;
                                    s.v = rl * wl * (-std::sin(ph) * ez + std::cos(ph) * vhat);
                                    s.a = ca * (-std::cos(ph) * ez - std::sin(ph) * vhat);
                                    s.j = ca * wl * (std::sin(ph) * ez - std::cos(ph) * vhat);
                                    return s;
                                }});
            return c;
        }

        CoreSpec makeImmelmann(Rng &rng, double g)
        {
            CoreSpec c;
            const double rl = rng.uniform(0.95, 1.3);
            const double ca = rng.uniform(1.15, 1.25) * g;
            const double wl = std::sqrt(ca / rl);
            const double vl = wl * rl;
            const double beta = rng.uniform(35.0, 42.0) * M_PI / 180.0;
            const double side = rng.index(2) == 0 ? 1.0 : -1.0;
            const double t_loop = M_PI / wl;

            const Eigen::Vector3d axis(-std::cos(beta), -side * std::sin(beta), 0);
            const Eigen::Vector3d t0(-std::sin(beta), side * std::cos(beta), 0);
            const double u = vl * std::cos(beta);
            const double wrho = vl * std::sin(beta);
            const double wr = ca / wrho;
            const double rho = wrho / wr;
            const double t_roll = M_PI / wr;
            const Eigen::Vector3d p_top(0, 0, 2.0 * rl);

            c.T = t_loop + t_roll;
            c.v_in = Eigen::Vector3d(vl, 0, 0);
            c.a_in = Eigen::Vector3d(0, 0, ca);
            c.v_out = u * axis - wrho * t0;
            c.a_out = Eigen::Vector3d(0, 0, ca);
            c.delta = p_top + u * t_roll * axis - Eigen::Vector3d(0, 0, 2.0 * rho);

            c.pieces.push_back({t_loop, [rl, wl, vl, ca](double t)
                                {
                                    const double ph = wl * t;
                                    FlatSample s;
                                    s.p = Eigen::Vector3d(rl * std::sin(ph), 0, rl * (1.0 - std::cos(ph)));
                                    s.v = Eigen::Vector3d(vl * std::cos(ph), 0, vl * std::sin(ph));
                                    s.a = Eigen::Vector3d(-ca * std::sin(ph), 0, ca * std::cos(ph));
                                    s.j = Eigen::Vector3d(-ca * wl * std::cos(ph), 0, -ca * wl * std::sin(ph));
                                    return s;
                                }});
            c.pieces.push_back({t_roll, [p_top, axis, t0, u, rho, wr, ca](double t)
                                {
                                    const double th = wr * t;
                                    const Eigen::Vector3d ez = Eigen::Vector3d::UnitZ();
                                    const Eigen::Vector3d rhat = std::cos(th) * ez + std::sin(th) * t0;
                                    const Eigen::Vector3d that = -std::sin(th) * ez + std::cos(th) * t0;
                                    FlatSample s;
                                    s.p = p_top + u * t * axis + rho * (rhat - ez);
                                    s.v = u * axis + rho * wr * that;
                                    s.a = -ca * rhat;
                                    s.j = -ca * wr * that;
                                    return s;
                                }});
            return c;
        }

        CoreSpec makeWallRide(Rng &rng, double g)
        {
            CoreSpec c;
            const double R = rng.uniform(0.8, 1.1);
            const double ca = rng.uniform(1.9, 2.1) * g;
            const double v = std::sqrt(ca * R);
            const double w = v / R;
            const double sweep = rng.uniform(0.5 * M_PI, M_PI);
            const double side = rng.index(2) == 0 ? 1.0 : -1.0;
            c.T = sweep / w;
            c.v_in = Eigen::Vector3d(v, 0, 0);
            c.a_in = Eigen::Vector3d(0, side * ca, 0);
            c.v_out = Eigen::Vector3d(v * std::cos(sweep), side * v * std::sin(sweep), 0);
            c.a_out = Eigen::Vector3d(-ca * std::sin(sweep), side * ca * std::cos(sweep), 0);
            c.delta = Eigen::Vector3d(R * std::sin(sweep), side * R * (1.0 - std::cos(sweep)), 0);
            c.pieces.push_back({c.T, [R, ca, v, w, side](double t)
                                {
                                    const double ph = w * t;
                                    FlatSample s;
                                    s.p = Eigen::Vector3d(R * std::sin(ph), side * R * (1.0 - std::cos(ph)), 0);
                                    s.v = Eigen::Vector3d(v * std::cos(ph), side * v * std::sin(ph), 0);
                                    s.a = Eigen::Vector3d(-ca * std::sin(ph), side * ca * std::cos(ph), 0);
                                    s.j = Eigen::Vector3d(-ca * w * std::cos(ph), -side * ca * w * std::sin(ph), 0);
                                    return s;
                                }});
            return c;
        }

        CoreSpec makeCore(ActionLabel action, Rng &rng, double g)
        {
            switch (action)
            {
            case ActionLabel::PowerLoop:
                return makePowerLoop(rng, g);
            case ActionLabel::BarrelRoll:
                return makeBarrelRoll(rng, g);
            case ActionLabel::SplitS:
                return makeSplitS(rng, g);
            case ActionLabel::ImmelmannTurn:
                return makeImmelmann(rng, g);
            case ActionLabel::WallRide:
                return makeWallRide(rng, g);
            case ActionLabel::None:
                break;
            }
            throw GenerationError("action label required for template generation");
        }

    } // namespace

    ManeuverCurve generateTemplate(ActionLabel action,
                                   const Eigen::Vector3d &target,
                                   const FlatState &entry,
                                   Rng &rng,
                                   const QuadParams &qp)
    {
        const double H = kHistoryLen * kFrameDt;
        const double dt = kFrameDt;
        const double speed_p = entry.v.norm();
        if (speed_p < 0.5 || speed_p > 8.0)
        {
            throw ValidationError("template entry speed outside [0.5, 8] m/s");
        }
        const Eigen::Vector3d p0 = entry.p;
        const Eigen::Vector3d anchor = p0 - H * entry.v;
        const Eigen::Vector3d target_abs = anchor + target;
        if ((target_abs - p0).norm() < 0.3)
        {
            throw GenerationError("target coincides with the entry position");
        }

        const CoreSpec core = makeCore(action, rng, qp.g);
        const double o_e_draw = rng.uniform(1.0, 3.0);
        const Eigen::Vector3d vp_hat = entry.v.normalized();

        struct Candidate
        {
            double score = 1e18;
            double psi = 0, o_e = 0, d_e = 0, d_x = 0, s_c = 0;
            Eigen::Vector3d dir_e, chat;
        } best;

        const double o_e_opts[2] = {o_e_draw, 1.2};
        for (int k = 0; k < 64; ++k)
        {
            const double psi = 2.0 * M_PI * k / 64.0;
            const Eigen::Vector3d hhat(std::cos(psi), std::sin(psi), 0);
            const Eigen::Matrix3d R = Eigen::AngleAxisd(psi, Eigen::Vector3d::UnitZ()).toRotationMatrix();
            Eigen::Vector3d dir_e = vp_hat + hhat;
            if (dir_e.norm() < 0.2)
            {
                dir_e = hhat;
            }
            dir_e.normalize();
            const Eigen::Vector3d v_in = R * core.v_in;
            const double turn_e = vecAngle(entry.v, v_in);
            for (double o_e : o_e_opts)
            {
                const Eigen::Vector3d p_e = p0 + o_e * dir_e;
                const Eigen::Vector3d p_x = p_e + R * core.delta;
                const Eigen::Vector3d v_x = R * core.v_out;
                const Eigen::Vector3d rem = target_abs - p_x;
                Eigen::Vector3d chat(rem.x(), rem.y(), 0);
                if (chat.norm() < 0.3)
                {
                    chat = hhat;
                }
                chat.normalize();
                const double s_c = std::clamp(rem.norm() / 2.0, 1.5, 3.3);
                const Eigen::Vector3d p_cs = target_abs - s_c * 0.5 * chat;
                const Eigen::Vector3d E = p_cs - p_x;
                const double dist = E.norm();
                if (dist < 0.5)
                {
                    continue;
                }
                const double turn1 = vecAngle(v_x, E);
                const double turn2 = vecAngle(E, chat);
                double d_e = std::clamp(2.0 * o_e / (speed_p + core.v_in.norm()), 0.35, 1.2) *
                             (1.0 + 0.6 * turn_e / M_PI);
                d_e = std::max(d_e, o_e / 4.2);
                double d_x = std::clamp(2.0 * dist / (v_x.norm() + s_c), 0.7, 3.2) *
                             (1.0 + 0.5 * turn1 / M_PI);
                d_x = std::max(d_x, dist / 4.2);
                const double T_raw = d_e + core.T + d_x;
                if (T_raw + 0.45 > 5.4)
                {
                    continue;
                }
                const double score = turn1 + 0.7 * turn2 + 0.25 * turn_e + 0.15 * std::abs(dist - 3.0);
                if (score < best.score)
                {
                    best = {score, psi, o_e, d_e, d_x, s_c, dir_e, chat};
                }
            }
        }
        if (best.score > 1e17)
        {
            throw GenerationError(std::string("no feasible geometry for ") + actionName(action) +
                                  " reaching the requested target");
        }

        const Eigen::Matrix3d R =
            Eigen::AngleAxisd(best.psi, Eigen::Vector3d::UnitZ()).toRotationMatrix();
        const Eigen::Vector3d p_e = p0 + best.o_e * best.dir_e;
        const Eigen::Vector3d p_x = p_e + R * core.delta;
        const Eigen::Vector3d v_x = R * core.v_out;
        const Eigen::Vector3d a_x = R * core.a_out;

        const double T_raw = best.d_e + core.T + best.d_x;
        const int K = 1 + static_cast<int>(std::ceil((T_raw + 0.45) / dt - 1e-9));
        const double coast_to_target = (K - 1) * dt - T_raw;
        const Eigen::Vector3d vc = best.s_c * best.chat;
        const Eigen::Vector3d p_cs = target_abs - coast_to_target * vc;

        ManeuverCurve curve;
        curve.setHeadDuration(H);
        const Eigen::Vector3d p_start = anchor;
        const Eigen::Vector3d v_p = entry.v;
        curve.add(H, [p_start, v_p](double t)
                  {
                      FlatSample s;
                      s.p = p_start + v_p * t;
                      s.v = v_p;
                      return s;
                  });
        const auto ce = quinticCoeffs(p0, v_p, Eigen::Vector3d::Zero(),
                                      p_e, R * core.v_in, R * core.a_in, best.d_e);
        curve.add(best.d_e, [ce](double t)
                  { return evalQuintic(ce, t); });
        for (const auto &pc : core.pieces)
        {
            curve.add(pc.first, transformPiece(R, p_e, pc.second));
        }
        const auto cx = quinticCoeffs(p_x, v_x, a_x, p_cs, vc, Eigen::Vector3d::Zero(), best.d_x);
        curve.add(best.d_x, [cx](double t)
                  { return evalQuintic(cx, t); });
        // one extra frame step of coast after the target so the span is K*dt
        curve.add(coast_to_target + dt, [p_cs, vc](double t)
                  {
                      FlatSample s;
                      s.p = p_cs + vc * t;
                      s.v = vc;
                      return s;
                  });
        curve.core_begin = H + best.d_e;
        curve.core_end = H + best.d_e + core.T;
        curve.heading = best.psi;
        return curve;
    }

    Primitive discretizePrimitive(const ManeuverCurve &curve,
                                  const Eigen::Vector3d &target,
                                  ActionLabel action,
                                  const QuadParams &qp)
    {
        const double H = curve.headDuration();
        const double dt = kFrameDt;
        const double span = curve.duration() - H;
        const int K = static_cast<int>(std::ceil(span / dt - 1e-9));
        if (K > kFramesPerPrimitive)
        {
            throw GenerationError("curve exceeds the primitive window; regenerate the template");
        }
        if (K < 2)
        {
            throw GenerationError("curve too short to discretize");
        }
        Primitive prim;
        prim.action = action;
        prim.active_len = K;
        prim.history.resize(kHistoryLen);
        for (int k = 0; k < kHistoryLen; ++k)
        {
            prim.history[k] = curve.frameAt(H - (kHistoryLen - k) * dt, qp.g);
        }
        prim.frames.resize(kFramesPerPrimitive);
        for (int i = 0; i < K; ++i)
        {
            prim.frames[i] = curve.frameAt(H + i * dt, qp.g);
        }
        for (int i = K; i < kFramesPerPrimitive; ++i)
        {
            prim.frames[i] = prim.frames[K - 1];
            prim.frames[i].s = 1.0;
        }
        const Eigen::Vector3d anchor = prim.history[0].p;
        for (auto &f : prim.history)
        {
            f.p -= anchor;
        }
        for (auto &f : prim.frames)
        {
            f.p -= anchor;
        }
        prim.target = target - anchor;
        return prim;
    }

    void validatePrimitive(const Primitive &prim, const QuadParams &qp)
    {
        if (static_cast<int>(prim.frames.size()) != kFramesPerPrimitive ||
            static_cast<int>(prim.history.size()) != kHistoryLen)
        {
            throw ValidationError("primitive has wrong frame counts");
        }
        if (prim.active_len < 2 || prim.active_len > kFramesPerPrimitive)
        {
            throw ValidationError("active_len out of range");
        }
        const double step = qp.v_max * kFrameDt + 1e-9;
        for (int i = 0; i < kFramesPerPrimitive; ++i)
        {
            const double s = prim.frames[i].s;
            const double want = i < prim.active_len ? 0.0 : 1.0;
            if (s != want)
            {
                throw ValidationError("state flag is not a monotone 0/1 padding sequence");
            }
        }
        for (const auto *seq : {&prim.history, &prim.frames})
        {
            for (const auto &f : *seq)
            {
                if (std::abs(f.r.a1.norm() - 1.0) > 1e-5 ||
                    std::abs(f.r.a2.norm() - 1.0) > 1e-5 ||
                    std::abs(f.r.a1.dot(f.r.a2)) > 1e-5)
                {
                    throw ValidationError("frame rotation is not canonical");
                }
            }
        }
        for (int i = 1; i < kHistoryLen; ++i)
        {
            if ((prim.history[i].p - prim.history[i - 1].p).norm() > step)
            {
                throw ValidationError("history frames spaced faster than v_max allows");
            }
        }
        if ((prim.frames[0].p - prim.history.back().p).norm() > step)
        {
            throw ValidationError("history tail and first frame are not consecutive");
        }
        for (int i = 1; i < prim.active_len; ++i)
        {
            if ((prim.frames[i].p - prim.frames[i - 1].p).norm() > step)
            {
                throw ValidationError("frames spaced faster than v_max allows");
            }
        }
        for (int i = prim.active_len; i < kFramesPerPrimitive; ++i)
        {
            if ((prim.frames[i].p - prim.frames[prim.active_len - 1].p).norm() > 1e-9)
            {
                throw ValidationError("padding frames must repeat the terminal state");
            }
        }
        if ((prim.frames[prim.active_len - 1].p - prim.target).norm() > 0.15)
        {
            throw ValidationError("terminal frame misses the target tolerance");
        }
    }

    Primitive rotatePrimitiveZ(const Primitive &prim, double angle)
    {
        const Eigen::Matrix3d R =
            Eigen::AngleAxisd(angle, Eigen::Vector3d::UnitZ()).toRotationMatrix();
        const Eigen::Vector3d pivot = prim.history[0].p;
        Primitive out = prim;
        auto rot = [&](StateFrame &f)
        {
            f.p = R * (f.p - pivot) + pivot;
            f.r.a1 = R * f.r.a1;
            f.r.a2 = R * f.r.a2;
        };
        for (auto &f : out.history)
        {
            rot(f);
        }
        for (auto &f : out.frames)
        {
            rot(f);
        }
        out.target = R * (prim.target - pivot) + pivot;
        return out;
    }

    std::vector<Eigen::Vector3d> targetGrid(const DatasetSpec &spec)
    {
        std::vector<Eigen::Vector3d> grid;
        const Eigen::Vector3d span = spec.bound_max - spec.bound_min;
        Eigen::Vector3i n;
        for (int k = 0; k < 3; ++k)
        {
            n(k) = static_cast<int>(std::llround(span(k) / spec.resolution)) + 1;
        }
        for (int ix = 0; ix < n.x(); ++ix)
        {
            for (int iy = 0; iy < n.y(); ++iy)
            {
                for (int iz = 0; iz < n.z(); ++iz)
                {
                    grid.emplace_back(spec.bound_min +
                                      spec.resolution * Eigen::Vector3d(ix, iy, iz));
                }
            }
        }
        return grid;
    }

    Dataset buildDataset(const DatasetSpec &spec, const QuadParams &qp)
    {
        const auto grid = targetGrid(spec);
        Dataset ds;
        const int per_action = static_cast<int>(grid.size());
        const int base = static_cast<int>(spec.actions.size()) * per_action;
        ds.prims.resize(base);
        std::vector<std::string> failures(base);

#pragma omp parallel for schedule(dynamic, 8)
        for (int idx = 0; idx < base; ++idx)
        {
            const ActionLabel action = spec.actions[idx / per_action];
            const Eigen::Vector3d target = grid[idx % per_action];
            Rng rng = Rng::stream(spec.seed, static_cast<uint64_t>(idx));
            bool done = false;
            std::string last_err = "no attempt";
            for (int attempt = 0; attempt < spec.retries && !done; ++attempt)
            {
                try
                {
                    FlatState entry;
                    const double speed = rng.uniform(1.0, 4.0);
                    const double heading = rng.uniform(0.0, 2.0 * M_PI);
                    entry.v = speed * Eigen::Vector3d(std::cos(heading), std::sin(heading), 0);
                    entry.p = kHistoryLen * kFrameDt * entry.v;
                    ManeuverCurve curve = generateTemplate(action, target, entry, rng, qp);
                    Primitive prim = discretizePrimitive(curve, target, action, qp);
                    validatePrimitive(prim, qp);
                    ds.prims[idx] = std::move(prim);
                    done = true;
                }
                catch (const Error &e)
                {
                    last_err = e.what();
                }
            }
            if (!done)
            {
                failures[idx] = last_err;
            }
        }
        for (int idx = 0; idx < base; ++idx)
        {
            if (!failures[idx].empty())
            {
                throw GenerationError("dataset build failed at primitive " + std::to_string(idx) +
                                      ": " + failures[idx]);
            }
        }
        augmentZRotations(ds, spec.augment_angles);
        return ds;
    }

    void augmentZRotations(Dataset &ds, const std::vector<double> &angles)
    {
        const size_t base = ds.prims.size();
        ds.prims.reserve(base * (1 + angles.size()));
        for (double ang : angles)
        {
            for (size_t i = 0; i < base; ++i)
            {
                ds.prims.push_back(rotatePrimitiveZ(ds.prims[i], ang));
            }
        }
    }

    namespace
    {
        void writeFrame(BinWriter &w, const StateFrame &f)
        {
            const auto v = f.toVec10();
            for (int k = 0; k < 10; ++k)
            {
                w.f32(static_cast<float>(v(k)));
            }
        }

        StateFrame readFrame(BinReader &r)
        {
            Eigen::Matrix<double, 10, 1> v;
            for (int k = 0; k < 10; ++k)
            {
                v(k) = static_cast<double>(r.f32());
            }
            return StateFrame::fromVec10(v);
        }
    }

    void saveDataset(const Dataset &ds, const std::string &path)
    {
        BinWriter w(path);
        w.bytes("AERO1", 5);
        w.u32(1);
        w.u32(static_cast<uint32_t>(ds.n_frames));
        w.u32(static_cast<uint32_t>(ds.n_history));
        w.f32(static_cast<float>(ds.dt));
        w.u64(ds.prims.size());
        for (const auto &p : ds.prims)
        {
            w.u32(static_cast<uint32_t>(p.action));
            for (int k = 0; k < 3; ++k)
            {
                w.f32(static_cast<float>(p.target(k)));
            }
            for (const auto &f : p.history)
            {
                writeFrame(w, f);
            }
            for (const auto &f : p.frames)
            {
                writeFrame(w, f);
            }
            w.u32(static_cast<uint32_t>(p.active_len));
        }
    }

    Dataset loadDataset(const std::string &path)
    {
        BinReader r(path);
        char magic[5];
        r.bytes(magic, 5);
        if (std::string(magic, 5) != "AERO1")
        {
            throw IoError("not a dataset file: " + path);
        }
        if (r.u32() != 1)
        {
            throw IoError("unsupported dataset version");
        }
        Dataset ds;
        ds.n_frames = static_cast<int>(r.u32());
        ds.n_history = static_cast<int>(r.u32());
        ds.dt = static_cast<double>(r.f32());
        const uint64_t count = r.u64();
        ds.prims.resize(count);
        for (auto &p : ds.prims)
        {
            p.action = static_cast<ActionLabel>(r.u32());
            for (int k = 0; k < 3; ++k)
            {
                p.target(k) = static_cast<double>(r.f32());
            }
            p.history.resize(ds.n_history);
            for (auto &f : p.history)
            {
                f = readFrame(r);
            }
            p.frames.resize(ds.n_frames);
            for (auto &f : p.frames)
            {
                f = readFrame(r);
            }
            p.active_len = static_cast<int>(r.u32());
        }
        return ds;
    }

    void exportDatasetJson(const Dataset &ds, const std::string &path)
    {
        nlohmann::json j;
        j["n_frames"] = ds.n_frames;
        j["n_history"] = ds.n_history;
        j["dt"] = ds.dt;
        nlohmann::json prims = nlohmann::json::array();
        for (const auto &p : ds.prims)
        {
            nlohmann::json rec;
            rec["action"] = actionName(p.action);
            rec["target"] = {p.target.x(), p.target.y(), p.target.z()};
            rec["active_len"] = p.active_len;
            auto dump = [](const std::vector<StateFrame> &fs)
            {
                nlohmann::json arr = nlohmann::json::array();
                for (const auto &f : fs)
                {
                    const auto v = f.toVec10();
                    nlohmann::json row = nlohmann::json::array();
                    for (int k = 0; k < 10; ++k)
                    {
                        row.push_back(v(k));
                    }
                    arr.push_back(row);
                }
                return arr;
            };
            rec["history"] = dump(p.history);
            rec["frames"] = dump(p.frames);
            prims.push_back(rec);
        }
        j["prims"] = prims;
        std::ofstream out(path);
        if (!out)
        {
            throw IoError("cannot write " + path);
        }
        out << j.dump(2) << "\n";
    }

    Eigen::Vector3d positionStd(const Dataset &ds)
    {
        Eigen::Vector3d sum = Eigen::Vector3d::Zero();
        Eigen::Vector3d sq = Eigen::Vector3d::Zero();
        long n = 0;
        for (const auto &p : ds.prims)
        {
            for (const auto *seq : {&p.history, &p.frames})
            {
                for (const auto &f : *seq)
                {
                    sum += f.p;
                    sq += f.p.cwiseProduct(f.p);
                    ++n;
                }
            }
        }
        if (n == 0)
        {
            return Eigen::Vector3d::Ones();
        }
        const Eigen::Vector3d mean = sum / n;
        Eigen::Vector3d var = sq / n - mean.cwiseProduct(mean);
        return var.cwiseMax(0.01).cwiseSqrt();
    }

    double zAxisSweep(const std::vector<StateFrame> &frames, int begin, int end)
    {
        double sweep = 0.0;
        for (int i = begin + 1; i < end; ++i)
        {
            const Eigen::Vector3d z0 = rot6dToMatrix(frames[i - 1].r).col(2);
            const Eigen::Vector3d z1 = rot6dToMatrix(frames[i].r).col(2);
            sweep += vecAngle(z0, z1);
        }
        return sweep;
    }

} // namespace aero
