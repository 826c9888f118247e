#include "aero/guidance.hpp"

#include <algorithm>
#include <cmath>

#include "aero/kinematics.hpp"

namespace aero
{

    void validateGuidance(const GuidanceConfig &cfg, int T)
    {
        if (!(cfg.d > 0.0))
        {
            throw ConfigError("activation distance must be positive");
        }
        if (cfg.lambda < 0.0)
        {
            throw ConfigError("guidance weight must be nonnegative");
        }
        if (cfg.guide_from < 1 || cfg.guide_to > T || cfg.guide_from > cfg.guide_to)
        {
            throw ConfigError("guidance window must lie inside [1, T]");
        }
        if (cfg.batch < 1)
        {
            throw ConfigError("batch size must be at least 1");
        }
    }

    CollisionEval collisionCost(const std::vector<Eigen::Vector3d> &positions,
                                const SdfGrid &grid, double d)
    {
        CollisionEval ev;
        ev.grad = Mat::Zero(static_cast<long>(positions.size()), 3);
        for (size_t i = 0; i < positions.size(); ++i)
        {
            const SdfSample q = grid.query(positions[i]);
            if (q.value <= d)
            {
                ev.cost += d - q.value;
                ev.grad.row(static_cast<long>(i)) = -q.grad.transpose();
            }
        }
        return ev;
    }

    Mat guidanceShift(const Mat &mu, int t, const SdfGrid &grid,
                      const GuidanceConfig &cfg, const NoiseSchedule &sched,
                      const Eigen::Vector3d &pos_std,
                      const Eigen::Vector3d &anchor)
    {
        Mat shift = Mat::Zero(mu.rows(), mu.cols());
        if (t < cfg.guide_from || t > cfg.guide_to || cfg.lambda == 0.0)
        {
            return shift;
        }
        const double var = sched.posteriorVar(t);
        if (var <= 0.0)
        {
            return shift;
        }
        for (long i = 0; i < mu.rows(); ++i)
        {
            if (mu(i, 0) >= 0.5)
            {
                continue;
            }
            const Eigen::Vector3d p =
                anchor + Eigen::Vector3d(mu(i, 1) * pos_std.x(),
                                         mu(i, 2) * pos_std.y(),
                                         mu(i, 3) * pos_std.z());
            const SdfSample q = grid.query(p);
            if (q.value > cfg.d)
            {
                continue;
            }
            for (int a = 0; a < 3; ++a)
            {
                shift(i, 1 + a) = var * cfg.lambda * q.grad(a) * pos_std(a);
            }
        }
        return shift;
    }

    GuidanceFn makeCollisionGuidance(const SdfGrid &grid, const GuidanceConfig &cfg,
                                     const NoiseSchedule &sched,
                                     const Eigen::Vector3d &pos_std,
                                     const Eigen::Vector3d &anchor)
    {
        return [&grid, cfg, &sched, pos_std, anchor](const Mat &mu, int t)
        {
            return guidanceShift(mu, t, grid, cfg, sched, pos_std, anchor);
        };
    }

    BatchResult batchSampleChecked(const Denoiser &den, const DenoiseCond &cond,
                                   const Eigen::Vector3d &anchor,
                                   const SdfGrid &grid, const GuidanceConfig &cfg,
                                   const NoiseSchedule &sched,
                                   const Eigen::Vector3d &pos_std, Rng &master)
    {
        validateGuidance(cfg, sched.T);
        const uint64_t base =
            (master.index(1ull << 32) << 32) | master.index(1ull << 32);
        const int B = cfg.batch;
        std::vector<DecodedSample> decs(B);
        std::vector<char> free_flags(B, 0);
        std::vector<std::string> failures(B);
        GuidanceFn guide;
        if (cfg.guide)
        {
            guide = makeCollisionGuidance(grid, cfg, sched, pos_std, anchor);
        }
#pragma omp parallel for schedule(dynamic, 1)
        for (int b = 0; b < B; ++b)
        {
            try
            {
                Rng r = Rng::stream(base, static_cast<uint64_t>(b));
                const ModelSample ms = samplePrimitive(den, cond, sched, r, guide);
                decs[b] = decodePrimitive(ms.tau0, cond, pos_std);
                bool ok = true;
                if (cfg.coarse_check)
                {
                    const Primitive &p = decs[b].prim;
                    for (int i = 0; i < p.active_len && ok; ++i)
                    {
                        ok = grid.query(anchor + p.frames[i].p).value >= 0.0;
                    }
                }
                free_flags[b] = ok ? 1 : 0;
            }
            catch (const std::exception &e)
            {
                failures[b] = e.what();
            }
        }
        for (int b = 0; b < B; ++b)
        {
            if (!failures[b].empty())
            {
                throw ValidationError("batch sample " + std::to_string(b) +
                                      " failed: " + failures[b]);
            }
        }

        std::vector<int> free_idx;
        for (int b = 0; b < B; ++b)
        {
            if (free_flags[b])
            {
                free_idx.push_back(b);
            }
        }
        BatchStats st;
        st.batch = B;
        st.collision_free = static_cast<int>(free_idx.size());
        st.free_fraction = static_cast<double>(free_idx.size()) / B;
        if (free_idx.empty())
        {
            throw BatchExhaustedError("no collision-free sample in batch", B, 0);
        }
        const int pick =
            free_idx[master.index(static_cast<uint64_t>(free_idx.size()))];
        st.picked = pick;
        st.s_warning = decs[pick].s_warning;

        Primitive prim = decs[pick].prim;
        for (StateFrame &f : prim.frames)
        {
            f.p += anchor;
        }
        for (StateFrame &f : prim.history)
        {
            f.p += anchor;
        }
        prim.target += anchor;
        return {std::move(prim), st};
    }

    std::vector<StateFrame> bootstrapHistory(const Eigen::Vector3d &start_pos,
                                             const Eigen::Vector3d &start_vel,
                                             int n_hist)
    {
        if (n_hist < 1)
        {
            throw ValidationError("history stub needs at least one frame");
        }
        Rot6D level;
        const double speed_xy = std::hypot(start_vel.x(), start_vel.y());
        if (speed_xy > 1e-9)
        {
            const double yaw = std::atan2(start_vel.y(), start_vel.x());
            level.a1 = Eigen::Vector3d(std::cos(yaw), std::sin(yaw), 0.0);
            level.a2 = Eigen::Vector3d(-std::sin(yaw), std::cos(yaw), 0.0);
        }
        std::vector<StateFrame> hist(static_cast<size_t>(n_hist));
        for (int k = 0; k < n_hist; ++k)
        {
            StateFrame f;
            f.s = 0.0;
            f.p = start_pos - (n_hist - k) * kFrameDt * start_vel;
            f.r = level;
            hist[static_cast<size_t>(k)] = f;
        }
        return hist;
    }

    ChainResult chainGenerate(const Denoiser &den, const ChainPlan &plan,
                              const SdfGrid &grid, const GuidanceConfig &cfg,
                              const NoiseSchedule &sched,
                              const Eigen::Vector3d &pos_std)
    {
        if (plan.targets.empty() || plan.targets.size() != plan.actions.size())
        {
            throw ValidationError(
                "chain plan needs matching, non-empty target and action lists");
        }
        for (int a : plan.actions)
        {
            if (a < 0 || a > 5)
            {
                throw ValidationError("chain plan action out of table");
            }
        }
        const int n_hist = den.historyLen();
        Rng master(plan.seed);
        std::vector<StateFrame> hist =
            bootstrapHistory(plan.start_pos, plan.start_vel, n_hist);

        ChainResult res;
        for (size_t k = 0; k < plan.targets.size(); ++k)
        {
            const Eigen::Vector3d anchor = hist.front().p;
            Mat hrows = framesToMat(hist);
            for (int a = 0; a < 3; ++a)
            {
                hrows.col(1 + a).array() -= anchor(a);
            }
            DenoiseCond cond;
            cond.history = normalizeRows(hrows, pos_std);
            if (!plan.use_history)
            {
                cond.history.setZero();
            }
            cond.target = (plan.targets[k] - anchor).cwiseQuotient(pos_std);
            cond.has_target = true;
            cond.action = plan.actions[k];

            BatchResult br;
            try
            {
                br = batchSampleChecked(den, cond, anchor, grid, cfg, sched,
                                        pos_std, master);
            }
            catch (const BatchExhaustedError &e)
            {
                throw BatchExhaustedError("chain primitive " + std::to_string(k) +
                                              ": " + e.what(),
                                          e.batchSize, e.collisionFree);
            }
            res.prims.push_back(br.prim);
            res.stats.push_back(br.stats);

            const Primitive &p = res.prims.back();
            hist.clear();
            for (int i = std::max(0, p.active_len - n_hist); i < p.active_len; ++i)
            {
                hist.push_back(p.frames[static_cast<size_t>(i)]);
            }
            while (static_cast<int>(hist.size()) < n_hist)
            {
                hist.insert(hist.begin(), hist.front());
            }
        }
        return res;
    }

    std::vector<JunctionDelta> chainJunctions(const std::vector<Primitive> &prims)
    {
        std::vector<JunctionDelta> out;
        for (size_t k = 1; k < prims.size(); ++k)
        {
            const Primitive &prev = prims[k - 1];
            const StateFrame &a =
                prev.frames[static_cast<size_t>(prev.active_len - 1)];
            const StateFrame &b = prims[k].frames.front();
            const FrameDelta fd = frameDelta(a, b);
            JunctionDelta jd;
            jd.dp = fd.dp.norm();
            jd.dtheta = fd.dtheta.cwiseAbs().maxCoeff();
            out.push_back(jd);
        }
        return out;
    }

    AuditResult auditChain(const std::vector<Primitive> &prims, const SdfGrid &grid,
                           int points_per_segment)
    {
        if (points_per_segment < 1)
        {
            throw ValidationError("audit needs at least one point per segment");
        }
        AuditResult res;
        res.min_sdf = grid.farClamp();
        auto segment = [&](const Eigen::Vector3d &a, const Eigen::Vector3d &b,
                           int prim_idx, int frame_idx)
        {
            for (int k = 0; k <= points_per_segment; ++k)
            {
                const double u = static_cast<double>(k) / points_per_segment;
                const double v = grid.query(a + u * (b - a)).value;
                if (v < res.min_sdf)
                {
                    res.min_sdf = v;
                    res.worst_prim = prim_idx;
                    res.worst_frame = frame_idx;
                }
            }
        };
        for (size_t pi = 0; pi < prims.size(); ++pi)
        {
            const Primitive &p = prims[pi];
            if (pi > 0)
            {
                const Primitive &prev = prims[pi - 1];
                segment(prev.frames[static_cast<size_t>(prev.active_len - 1)].p,
                        p.frames.front().p, static_cast<int>(pi), -1);
            }
            for (int i = 0; i + 1 < p.active_len; ++i)
            {
                segment(p.frames[static_cast<size_t>(i)].p,
                        p.frames[static_cast<size_t>(i + 1)].p,
                        static_cast<int>(pi), i);
            }
        }
        res.ok = res.min_sdf >= 0.0;
        return res;
    }

} // namespace aero
