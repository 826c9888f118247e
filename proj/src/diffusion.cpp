#include "aero/diffusion.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>

#include "aero/binio.hpp"
#include "aero/errors.hpp"
#include "aero/kinematics.hpp"

namespace aero
{

    Mat framesToMat(const std::vector<StateFrame> &frames)
    {
        Mat rows(static_cast<long>(frames.size()), 10);
        for (size_t i = 0; i < frames.size(); ++i)
        {
            rows.row(static_cast<long>(i)) = frames[i].toVec10().transpose();
        }
        return rows;
    }

    std::vector<StateFrame> matToFrames(const Mat &rows)
    {
        if (rows.cols() != 10)
        {
            throw ValidationError("frame matrix must have 10 channels");
        }
        std::vector<StateFrame> frames(static_cast<size_t>(rows.rows()));
        for (long i = 0; i < rows.rows(); ++i)
        {
            frames[static_cast<size_t>(i)] =
                StateFrame::fromVec10(rows.row(i).transpose());
        }
        return frames;
    }

    Mat normalizeRows(const Mat &rows, const Eigen::Vector3d &pos_std)
    {
        Mat out = rows;
        for (int a = 0; a < 3; ++a)
        {
            out.col(1 + a) /= pos_std(a);
        }
        return out;
    }

    Mat denormalizeRows(const Mat &rows, const Eigen::Vector3d &pos_std)
    {
        Mat out = rows;
        for (int a = 0; a < 3; ++a)
        {
            out.col(1 + a) *= pos_std(a);
        }
        return out;
    }

    Mat forwardDiffuse(const Mat &tau0, int t, const Mat &noise,
                       const NoiseSchedule &sched)
    {
        if (t < 0 || t > sched.T)
        {
            throw ValidationError("diffusion step out of range");
        }
        if (noise.rows() != tau0.rows() || noise.cols() != tau0.cols())
        {
            throw ValidationError("noise shape must match the primitive tensor");
        }
        const double ab = sched.alphaBar(t);
        return std::sqrt(ab) * tau0 + std::sqrt(1.0 - ab) * noise;
    }

    LossParts computeLoss(const Mat &pred, const Mat &data, double w_vel)
    {
        if (pred.rows() != data.rows() || pred.cols() != data.cols())
        {
            throw ValidationError("loss operands must have matching shapes");
        }
        LossParts lp;
        lp.recon = (pred - data).squaredNorm();
        const long n = pred.rows();
        if (n > 1)
        {
            const Mat dp = pred.bottomRows(n - 1) - pred.topRows(n - 1);
            const Mat dd = data.bottomRows(n - 1) - data.topRows(n - 1);
            lp.vel = (dp - dd).squaredNorm() / static_cast<double>(n - 1);
        }
        lp.total = lp.recon + w_vel * lp.vel;
        return lp;
    }

    Mat lossGrad(const Mat &pred, const Mat &data, double w_vel)
    {
        Mat g = 2.0 * (pred - data);
        const long n = pred.rows();
        if (n > 1)
        {
            const Mat diff = (pred.bottomRows(n - 1) - pred.topRows(n - 1)) -
                             (data.bottomRows(n - 1) - data.topRows(n - 1));
            const double s = 2.0 * w_vel / static_cast<double>(n - 1);
            g.bottomRows(n - 1) += s * diff;
            g.topRows(n - 1) -= s * diff;
        }
        return g;
    }

    Mat reverseStep(const Denoiser &den, const Mat &tau_t, int t,
                    const DenoiseCond &cond, const NoiseSchedule &sched, Rng &rng,
                    const GuidanceFn &guide)
    {
        if (t < 1 || t > sched.T)
        {
            throw ValidationError("reverse step index out of range");
        }
        const Mat tau0 = den.predict(tau_t, t, cond);
        const double ab_t = sched.alphaBar(t);
        const double ab_p = sched.alphaBar(t - 1);
        const double a_t = sched.alphaAt(t);
        const double c0 = std::sqrt(ab_p) * (1.0 - a_t) / (1.0 - ab_t);
        const double ct = std::sqrt(a_t) * (1.0 - ab_p) / (1.0 - ab_t);
        Mat mu = c0 * tau0 + ct * tau_t;
        if (guide)
        {
            mu += guide(mu, t);
        }
        if (t == 1)
        {
            return mu;
        }
        const double sigma = std::sqrt(sched.posteriorVar(t));
        for (long i = 0; i < mu.rows(); ++i)
        {
            for (long j = 0; j < mu.cols(); ++j)
            {
                mu(i, j) += sigma * rng.normal();
            }
        }
        return mu;
    }

    ModelSample samplePrimitive(const Denoiser &den, const DenoiseCond &cond,
                                const NoiseSchedule &sched, Rng &rng,
                                const GuidanceFn &guide)
    {
        if (den.timeSteps() != sched.T)
        {
            throw ValidationError("schedule length does not match the denoiser");
        }
        Mat tau(den.frameCount(), 10);
        for (long i = 0; i < tau.rows(); ++i)
        {
            for (long j = 0; j < tau.cols(); ++j)
            {
                tau(i, j) = rng.normal();
            }
        }
        for (int t = sched.T; t >= 1; --t)
        {
            tau = reverseStep(den, tau, t, cond, sched, rng, guide);
        }
        return {tau};
    }

    DecodedSample decodePrimitive(const Mat &tau0, const DenoiseCond &cond,
                                  const Eigen::Vector3d &pos_std)
    {
        if (tau0.cols() != 10 || tau0.rows() < 2)
        {
            throw ValidationError("sample tensor must be N_a x 10 with N_a >= 2");
        }
        const long n = tau0.rows();
        DecodedSample out;
        long active = n;
        bool crossed = false;
        for (long i = 0; i < n; ++i)
        {
            if (tau0(i, 0) >= 0.5)
            {
                active = i;
                crossed = true;
                break;
            }
        }
        if (!crossed)
        {
            out.s_warning = true;
        }
        if (active < 2)
        {
            active = 2;
            out.s_warning = true;
        }

        const Mat world = denormalizeRows(tau0, pos_std);
        out.prim.frames = matToFrames(world);
        for (long i = 0; i < n; ++i)
        {
            StateFrame &f = out.prim.frames[static_cast<size_t>(i)];
            f.s = (i < active) ? 0.0 : 1.0;
            Eigen::Matrix3d R;
            if (!tryRot6dToMatrix(f.r, R))
            {
                R = Eigen::Matrix3d::Identity();
            }
            f.r = matrixToRot6d(R);
        }
        out.prim.history = matToFrames(denormalizeRows(cond.history, pos_std));
        for (StateFrame &f : out.prim.history)
        {
            f.s = 0.0;
        }
        out.prim.target = cond.target.cwiseProduct(pos_std);
        out.prim.action = static_cast<ActionLabel>(cond.action);
        out.prim.active_len = static_cast<int>(active);
        return out;
    }

    TrainResult train(DenoiserModel &model, const Dataset &ds,
                      const NoiseSchedule &sched, const TrainConfig &tc)
    {
        if (ds.prims.empty())
        {
            throw ValidationError("training dataset is empty");
        }
        if (tc.steps < 1 || tc.batch < 1 || tc.lr <= 0.0 || tc.w_vel < 0.0 ||
            tc.cond_drop < 0.0 || tc.cond_drop > 1.0 || tc.log_every < 1)
        {
            throw ConfigError("training parameters must be positive");
        }
        const ModelConfig &mc = model.config();
        if (mc.n_frames != ds.n_frames || mc.n_hist != ds.n_history ||
            mc.T != sched.T)
        {
            throw ConfigError("model dims do not match the dataset or schedule");
        }

        TrainResult res;
        res.pos_std = positionStd(ds);
        res.param_count = model.paramCount();

        const size_t n_data = ds.prims.size();
        std::vector<Mat> taus(n_data), hists(n_data);
        std::vector<Eigen::Vector3d> targets(n_data);
        std::vector<int> actions(n_data);
        for (size_t i = 0; i < n_data; ++i)
        {
            const Primitive &pr = ds.prims[i];
            taus[i] = normalizeRows(framesToMat(pr.frames), res.pos_std);
            hists[i] = normalizeRows(framesToMat(pr.history), res.pos_std);
            targets[i] = pr.target.cwiseQuotient(res.pos_std);
            actions[i] = static_cast<int>(pr.action);
        }

        Rng rng(tc.seed);
        auto &params = model.params().items();
        std::vector<Mat> adam_m(params.size()), adam_v(params.size());
        for (size_t pi = 0; pi < params.size(); ++pi)
        {
            adam_m[pi] = Mat::Zero(params[pi].second->w.rows(),
                                   params[pi].second->w.cols());
            adam_v[pi] = adam_m[pi];
        }
        const double b1 = 0.9, b2 = 0.999, eps = 1e-8;

        for (int step = 1; step <= tc.steps; ++step)
        {
            model.params().zeroGrads();
            LossParts acc;
            for (int b = 0; b < tc.batch; ++b)
            {
                const size_t idx = rng.index(n_data);
                const int t = 1 + static_cast<int>(rng.index(mc.T));
                DenoiseCond cond;
                cond.history = hists[idx];
                if (!tc.use_history)
                {
                    cond.history.setZero();
                }
                cond.target = targets[idx];
                cond.has_target = true;
                cond.action = actions[idx];
                if (rng.uniform() < tc.cond_drop)
                {
                    cond.has_target = false;
                }
                if (rng.uniform() < tc.cond_drop)
                {
                    cond.action = static_cast<int>(ActionLabel::None);
                }
                Mat noise(mc.n_frames, 10);
                for (long i = 0; i < noise.rows(); ++i)
                {
                    for (long j = 0; j < noise.cols(); ++j)
                    {
                        noise(i, j) = rng.normal();
                    }
                }
                const Mat tau_t = forwardDiffuse(taus[idx], t, noise, sched);
                DenoiserModel::Tape tape;
                const Mat pred = model.forward(tau_t, t, cond, &tape);
                const LossParts lp = computeLoss(pred, taus[idx], tc.w_vel);
                acc.recon += lp.recon;
                acc.vel += lp.vel;
                acc.total += lp.total;
                const Mat dOut = lossGrad(pred, taus[idx], tc.w_vel) / tc.batch;
                model.backward(tape, dOut);
            }
            acc.recon /= tc.batch;
            acc.vel /= tc.batch;
            acc.total /= tc.batch;
            if (step == 1)
            {
                res.initial_total = acc.total;
            }
            if (!std::isfinite(acc.total) ||
                acc.total > 1e3 * res.initial_total)
            {
                throw TrainDivergedError(
                    "training diverged at step " + std::to_string(step) +
                    ": total " + std::to_string(acc.total) + " vs initial " +
                    std::to_string(res.initial_total));
            }

            const double bc1 = 1.0 - std::pow(b1, step);
            const double bc2 = 1.0 - std::pow(b2, step);
            for (size_t pi = 0; pi < params.size(); ++pi)
            {
                Param *p = params[pi].second;
                adam_m[pi] = b1 * adam_m[pi] + (1.0 - b1) * p->g;
                adam_v[pi] =
                    (b2 * adam_v[pi].array() + (1.0 - b2) * p->g.array().square())
                        .matrix();
                p->w.array() -= tc.lr * (adam_m[pi].array() / bc1) /
                                ((adam_v[pi].array() / bc2).sqrt() + eps);
            }

            if (step == 1 || step == tc.steps || step % tc.log_every == 0)
            {
                res.curve.push_back({static_cast<double>(step), acc.recon,
                                     acc.vel, acc.total});
            }
            res.final_recon = acc.recon;
        }
        model.quantizeWeights();
        return res;
    }

    namespace
    {
        constexpr char kCkptMagic[6] = "CKPT1";
    }

    void saveCheckpoint(const std::string &path, const DenoiserModel &model,
                        const Eigen::Vector3d &pos_std, bool use_history)
    {
        BinWriter w(path);
        w.bytes(kCkptMagic, 5);
        w.u32(1);
        const ModelConfig &mc = model.config();
        w.i32(mc.d);
        w.i32(mc.L);
        w.i32(mc.H);
        w.i32(mc.n_hist);
        w.i32(mc.n_frames);
        w.i32(mc.T);
        for (int a = 0; a < 3; ++a)
        {
            w.f64(pos_std(a));
        }
        w.u8(use_history ? 1 : 0);
        const auto &items = model.params().items();
        w.u64(items.size());
        for (const auto &[name, p] : items)
        {
            w.str(name);
            w.u32(static_cast<uint32_t>(p->w.rows()));
            w.u32(static_cast<uint32_t>(p->w.cols()));
            for (long i = 0; i < p->w.rows(); ++i)
            {
                for (long j = 0; j < p->w.cols(); ++j)
                {
                    w.f32(static_cast<float>(p->w(i, j)));
                }
            }
        }
    }

    LoadedModel loadCheckpoint(const std::string &path)
    {
        BinReader r(path);
        char magic[5];
        r.bytes(magic, 5);
        if (std::string(magic, 5) != std::string(kCkptMagic, 5))
        {
            throw IoError("not a checkpoint file: " + path);
        }
        if (r.u32() != 1)
        {
            throw IoError("unsupported checkpoint version");
        }
        ModelConfig mc;
        mc.d = r.i32();
        mc.L = r.i32();
        mc.H = r.i32();
        mc.n_hist = r.i32();
        mc.n_frames = r.i32();
        mc.T = r.i32();
        LoadedModel lm;
        for (int a = 0; a < 3; ++a)
        {
            lm.pos_std(a) = r.f64();
        }
        lm.use_history = r.u8() != 0;
        lm.model = std::make_unique<DenoiserModel>(mc, 0);
        auto &items = lm.model->params().items();
        const uint64_t count = r.u64();
        if (count != items.size())
        {
            throw IoError("checkpoint parameter count mismatch");
        }
        std::set<std::string> seen;
        for (uint64_t bi = 0; bi < count; ++bi)
        {
            const std::string name = r.str();
            const uint32_t rows = r.u32();
            const uint32_t cols = r.u32();
            Param *p = nullptr;
            for (auto &[n, q] : items)
            {
                if (n == name)
                {
                    p = q;
                    break;
                }
            }
            if (!p || !seen.insert(name).second)
            {
                throw IoError("unexpected checkpoint blob: " + name);
            }
            if (p->w.rows() != static_cast<long>(rows) ||
                p->w.cols() != static_cast<long>(cols))
            {
                throw IoError("checkpoint blob shape mismatch: " + name);
            }
            for (uint32_t i = 0; i < rows; ++i)
            {
                for (uint32_t j = 0; j < cols; ++j)
                {
                    p->w(i, j) = static_cast<double>(r.f32());
                }
            }
        }
        return lm;
    }

    void saveLossCurve(const std::string &path,
                       const std::vector<std::array<double, 4>> &curve)
    {
        std::ofstream out(path);
        if (!out)
        {
            throw IoError("cannot open loss curve file: " + path);
        }
        out << "step,recon,vel,total\n";
        char buf[160];
        for (const auto &row : curve)
        {
            std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g,%.17g\n",
                          static_cast<int>(row[0]), row[1], row[2], row[3]);
            out << buf;
        }
        if (!out)
        {
            throw IoError("loss curve write failed");
        }
    }

} // namespace aero
