#ifndef AERO_POSTPROCESS_HPP
#define AERO_POSTPROCESS_HPP

#include <string>
#include <vector>

#include "aero/environment.hpp"
#include "aero/guidance.hpp"
#include "aero/spline.hpp"

namespace aero
{

    // Sparse attitude-change waypoints sampled from a chained frame sequence.
    struct Keyframes
    {
        std::vector<Eigen::Vector3d> waypoints;
        std::vector<Eigen::Vector3d> z_ref;
        std::vector<double> stamps;
        std::vector<int> frame_idx;

        int segments() const { return static_cast<int>(waypoints.size()) - 1; }
        std::vector<double> initialDurations() const;
    };

    std::vector<StateFrame> flattenChain(const std::vector<Primitive> &prims);
    Keyframes extractKeyframes(const std::vector<StateFrame> &frames, double alpha);

    // Axis-aligned free-space box as 6 outward halfspaces A x <= b.
    struct Polyhedron
    {
        Eigen::Matrix<double, Eigen::Dynamic, 3> A;
        Eigen::VectorXd b;

        bool contains(const Eigen::Vector3d &p, double tol = 1e-9) const
        {
            return ((A * p - b).array() <= tol).all();
        }
    };

    struct Corridor
    {
        std::vector<Polyhedron> polys;
    };

    struct CorridorParams
    {
        double r_quad = 0.3;
        double margin = 0.1;
        double step = 0.1;
        double max_extent = 2.0;
    };

    Corridor buildCorridor(const std::vector<StateFrame> &frames,
                           const Keyframes &kf, const SdfGrid &grid,
                           const CorridorParams &cp);

    struct OptWeights
    {
        double rho_T = 20.0;
        double w_att = 10.0;
        double w_v = 1e3;
        double w_f = 1e3;
        double w_omega_xy = 1e3;
        double w_omega_z = 1e3;
        double w_safe = 1e3;
        double limit_shrink = 0.98;
    };

    struct OptProblem
    {
        Keyframes kf;
        Corridor corridor;
        QuadParams quad;
        FlatState x0, xf;
        OptWeights weights;
        int s_o = 3;
        int quad_samples = 16;
        int stage_iters = 200;
    };

    void validateProblem(const OptProblem &prob);

    struct CostTerms
    {
        double smooth = 0.0;
        double time = 0.0;
        double att = 0.0;
        double pen_v = 0.0;
        double pen_f = 0.0;
        double pen_wxy = 0.0;
        double pen_wz = 0.0;
        double pen_safe = 0.0;

        double total() const
        {
            return smooth + time + att + pen_v + pen_f + pen_wxy + pen_wz + pen_safe;
        }
    };

    struct CostGrads
    {
        double J = 0.0;
        CostTerms terms;
        Eigen::MatrixXd dQ; // interior waypoints, (M-1) x 3
        Eigen::VectorXd dT; // durations, M
    };

    // Full objective with analytic gradients pulled back through the spline.
    CostGrads evalCosts(const PolySpline &spline, const OptProblem &prob);

    // Max constraint violations against the unshrunk limits, densely sampled.
    struct FeasReport
    {
        double v_over = 0.0;
        double f_over = 0.0;
        double f_under = 0.0;
        double wxy_over = 0.0;
        double wz_over = 0.0;
        double corridor_over = 0.0;
        int samples = 0;

        double maxViolation() const
        {
            double m = v_over;
            m = std::max(m, f_over);
            m = std::max(m, f_under);
            m = std::max(m, wxy_over);
            m = std::max(m, wz_over);
            m = std::max(m, corridor_over);
            return m;
        }
    };

    FeasReport auditTrajectory(const PolySpline &spline, const OptProblem &prob,
                               int samples_per_segment = 100);

    // Mean alignment between net thrust and the z-axis references.
    double attitudeAlignment(const PolySpline &spline, const OptProblem &prob,
                             double *min_cos = nullptr);

    struct StageReport
    {
        int iters = 0;
        bool converged = false;
        double j_initial = 0.0;
        double j_final = 0.0;
        double seconds = 0.0;
        std::vector<double> trace;
    };

    struct OptimizeOutcome
    {
        PolySpline spline;
        StageReport stage1, stage2;
        CostTerms terms;
        FeasReport feas;
        bool two_stage = true;
    };

    // Stage 1 drops the z-rate penalty, stage 2 restores it warm-started.
    // Single-stage mode runs the full problem once with a doubled budget.
    OptimizeOutcome hierarchicalOptimize(const OptProblem &prob, bool two_stage = true);

    // Boundary flat states read off the frame sequence endpoints.
    void boundaryFromFrames(const std::vector<StateFrame> &frames,
                            FlatState &x0, FlatState &xf);

    void writeTrajectoryCsv(const std::string &path, const PolySpline &spline,
                            const QuadParams &qp, double dt);
    void writeOptimizeReportJson(const std::string &path,
                                 const OptimizeOutcome &out);
    void writeCorridorJson(const std::string &path, const Corridor &corridor);

} // namespace aero

#endif
