#ifndef AERO_GUIDANCE_HPP
#define AERO_GUIDANCE_HPP

#include <vector>

#include "aero/diffusion.hpp"
#include "aero/environment.hpp"

namespace aero
{

    struct GuidanceConfig
    {
        double d = 0.6;      // hinge activation distance, meters
        double lambda = 30.0; // cost weight
        int guide_from = 2;  // first guided reverse step
        int guide_to = 30;   // last guided reverse step
        int batch = 64;
        bool guide = true;
        bool coarse_check = true;
    };
    void validateGuidance(const GuidanceConfig &cfg, int T);

    struct CollisionEval
    {
        double cost = 0.0;
        Mat grad; // n x 3, d(cost)/d(position)
    };
    CollisionEval collisionCost(const std::vector<Eigen::Vector3d> &positions,
                                const SdfGrid &grid, double d);

    // Shift tensor for one reverse step, in model space. Positions inside mu
    // are anchor-relative and std-scaled; padding frames contribute nothing.
    Mat guidanceShift(const Mat &mu, int t, const SdfGrid &grid,
                      const GuidanceConfig &cfg, const NoiseSchedule &sched,
                      const Eigen::Vector3d &pos_std,
                      const Eigen::Vector3d &anchor);

    GuidanceFn makeCollisionGuidance(const SdfGrid &grid, const GuidanceConfig &cfg,
                                     const NoiseSchedule &sched,
                                     const Eigen::Vector3d &pos_std,
                                     const Eigen::Vector3d &anchor);

    struct BatchStats
    {
        int batch = 0;
        int collision_free = 0;
        double free_fraction = 0.0;
        int picked = -1;
        bool s_warning = false; // on the returned sample
    };

    // Draws cfg.batch guided samples, coarse-checks active frames against the
    // grid, and returns one collision-free sample chosen uniformly at random.
    // The returned primitive is in world coordinates (anchor added back).
    struct BatchResult
    {
        Primitive prim;
        BatchStats stats;
    };
    BatchResult batchSampleChecked(const Denoiser &den, const DenoiseCond &cond,
                                   const Eigen::Vector3d &anchor,
                                   const SdfGrid &grid, const GuidanceConfig &cfg,
                                   const NoiseSchedule &sched,
                                   const Eigen::Vector3d &pos_std, Rng &master);

    struct ChainPlan
    {
        std::vector<Eigen::Vector3d> targets;
        std::vector<int> actions; // table rows; 5 omits the action condition
        uint64_t seed = 0;
        Eigen::Vector3d start_pos = Eigen::Vector3d::Zero();
        Eigen::Vector3d start_vel = Eigen::Vector3d(2.0, 0.0, 0.0);
        bool use_history = true; // must match how the model was trained
    };

    // Level constant-velocity run-up ending one frame before the first sample.
    std::vector<StateFrame> bootstrapHistory(const Eigen::Vector3d &start_pos,
                                             const Eigen::Vector3d &start_vel,
                                             int n_hist);

    struct ChainResult
    {
        std::vector<Primitive> prims; // world coordinates
        std::vector<BatchStats> stats;
    };
    ChainResult chainGenerate(const Denoiser &den, const ChainPlan &plan,
                              const SdfGrid &grid, const GuidanceConfig &cfg,
                              const NoiseSchedule &sched,
                              const Eigen::Vector3d &pos_std);

    struct JunctionDelta
    {
        double dp = 0.0;     // position jump, meters
        double dtheta = 0.0; // largest Euler-angle jump, radians
    };
    std::vector<JunctionDelta> chainJunctions(const std::vector<Primitive> &prims);

    struct AuditResult
    {
        bool ok = true;
        double min_sdf = 0.0;
        int worst_prim = -1;
        int worst_frame = -1;
    };
    // Dense collision audit: every active frame plus interpolated points on
    // each inter-frame segment, junctions included.
    AuditResult auditChain(const std::vector<Primitive> &prims, const SdfGrid &grid,
                           int points_per_segment = 10);

} // namespace aero

#endif
