#ifndef AERO_DIFFUSION_HPP
#define AERO_DIFFUSION_HPP

#include <array>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "aero/dataset.hpp"
#include "aero/model.hpp"
#include "aero/schedule.hpp"

namespace aero
{

    Mat framesToMat(const std::vector<StateFrame> &frames);
    std::vector<StateFrame> matToFrames(const Mat &rows);

    // Per-axis position scaling; rotation and gate channels stay untouched.
    Mat normalizeRows(const Mat &rows, const Eigen::Vector3d &pos_std);
    Mat denormalizeRows(const Mat &rows, const Eigen::Vector3d &pos_std);

    Mat forwardDiffuse(const Mat &tau0, int t, const Mat &noise,
                       const NoiseSchedule &sched);

    struct LossParts
    {
        double recon = 0.0;
        double vel = 0.0;
        double total = 0.0;
    };
    LossParts computeLoss(const Mat &pred, const Mat &data, double w_vel);
    // d(total)/d(pred) for the same convention as computeLoss.
    Mat lossGrad(const Mat &pred, const Mat &data, double w_vel);

    // Mean shift applied inside a reverse step; receives the posterior mean.
    using GuidanceFn = std::function<Mat(const Mat &mu, int t)>;

    Mat reverseStep(const Denoiser &den, const Mat &tau_t, int t,
                    const DenoiseCond &cond, const NoiseSchedule &sched, Rng &rng,
                    const GuidanceFn &guide = {});

    struct ModelSample
    {
        Mat tau0; // model-space N_a x 10
    };
    ModelSample samplePrimitive(const Denoiser &den, const DenoiseCond &cond,
                                const NoiseSchedule &sched, Rng &rng,
                                const GuidanceFn &guide = {});

    struct DecodedSample
    {
        Primitive prim;
        bool s_warning = false; // gate never crossed 0.5 or crossed before frame 2
    };
    // Thresholds the gate channel, truncates at the first 0->1 crossing,
    // re-orthonormalizes rotations, and undoes position scaling.
    DecodedSample decodePrimitive(const Mat &tau0, const DenoiseCond &cond,
                                  const Eigen::Vector3d &pos_std);

    struct TrainConfig
    {
        ModelConfig model;
        int steps = 2000;
        int batch = 16;
        double lr = 1e-3;
        double w_vel = 1.0;
        double cond_drop = 0.1;
        uint64_t seed = 0;
        int log_every = 1;
        bool use_history = true; // false zeroes the history tokens (ablation)
    };

    struct TrainResult
    {
        std::vector<std::array<double, 4>> curve; // step, recon, vel, total
        Eigen::Vector3d pos_std = Eigen::Vector3d::Ones();
        double initial_total = 0.0;
        double final_recon = 0.0;
        long param_count = 0;
    };

    TrainResult train(DenoiserModel &model, const Dataset &ds,
                      const NoiseSchedule &sched, const TrainConfig &tc);

    void saveLossCurve(const std::string &path,
                       const std::vector<std::array<double, 4>> &curve);

    void saveCheckpoint(const std::string &path, const DenoiserModel &model,
                        const Eigen::Vector3d &pos_std, bool use_history = true);
    struct LoadedModel
    {
        std::unique_ptr<DenoiserModel> model;
        Eigen::Vector3d pos_std = Eigen::Vector3d::Ones();
        bool use_history = true;
    };
    LoadedModel loadCheckpoint(const std::string &path);

} // namespace aero

#endif
