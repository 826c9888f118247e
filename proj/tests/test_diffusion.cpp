#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>

#include "aero/dataset.hpp"
#include "aero/diffusion.hpp"
#include "aero/model.hpp"
#include "aero/schedule.hpp"

using namespace aero;

namespace
{

    Primitive makePrim(ActionLabel action, const Eigen::Vector3d &target, uint64_t seed)
    {
        Rng rng(seed);
        for (int attempt = 0;; ++attempt)
        {
            try
            {
                FlatState entry;
                const double speed = rng.uniform(1.0, 4.0);
                const double heading = rng.uniform(0.0, 2.0 * M_PI);
                entry.v = speed * Eigen::Vector3d(std::cos(heading), std::sin(heading), 0.0);
                entry.p = 0.5 * entry.v;
                ManeuverCurve curve = generateTemplate(action, target, entry, rng);
                return discretizePrimitive(curve, target, action);
            }
            catch (const GenerationError &)
            {
                if (attempt >= 15)
                {
                    throw;
                }
            }
        }
    }

    Dataset makeTinyDataset(int n)
    {
        Dataset ds;
        ds.n_frames = kFramesPerPrimitive;
        ds.n_history = kHistoryLen;
        ds.dt = kFrameDt;
        const ActionLabel acts[4] = {ActionLabel::PowerLoop, ActionLabel::BarrelRoll,
                                     ActionLabel::SplitS, ActionLabel::WallRide};
        for (int i = 0; i < n; ++i)
        {
            const Eigen::Vector3d tgt(4.0 + i % 3, -3.0 + 2.0 * (i % 4),
                                      (i % 2) ? 0.5 : -0.5);
            ds.prims.push_back(makePrim(acts[i % 4], tgt, 100 + i));
        }
        return ds;
    }

    Mat randomMat(long rows, long cols, Rng &rng, double scale = 1.0)
    {
        Mat m(rows, cols);
        for (long i = 0; i < rows; ++i)
        {
            for (long j = 0; j < cols; ++j)
            {
                m(i, j) = scale * rng.normal();
            }
        }
        return m;
    }

    DenoiseCond randomCond(const ModelConfig &mc, Rng &rng)
    {
        DenoiseCond cond;
        cond.history = randomMat(mc.n_hist, 10, rng, 0.5);
        cond.target = Eigen::Vector3d(rng.normal(), rng.normal(), rng.normal());
        cond.has_target = true;
        cond.action = 2;
        return cond;
    }

    // denoiser that ignores its inputs and returns a fixed prediction
    struct FixedDenoiser : Denoiser
    {
        Mat out;
        int T;
        FixedDenoiser(const Mat &m, int steps) : out(m), T(steps) {}
        Mat predict(const Mat &, int, const DenoiseCond &) const override { return out; }
        int timeSteps() const override { return T; }
        int frameCount() const override { return static_cast<int>(out.rows()); }
        int historyLen() const override { return 5; }
    };

    std::string tmpPath(const std::string &name)
    {
        return (std::filesystem::temp_directory_path() / name).string();
    }

} // namespace

TEST_CASE("exponential schedule satisfies its endpoint and monotonicity contract")
{
    const auto s = NoiseSchedule::makeExponential(30);
    CHECK(s.T == 30);
    CHECK(s.alpha.size() == 30);
    CHECK(s.alpha_bar.size() == 30);
    CHECK(s.alphaBar(0) == 1.0);
    for (int t = 1; t <= 30; ++t)
    {
        CHECK(s.alphaAt(t) > 0.0);
        CHECK(s.alphaAt(t) < 1.0);
        if (t > 1)
        {
            CHECK(s.alphaBar(t) < s.alphaBar(t - 1));
        }
    }
    CHECK(s.alphaBar(1) >= 0.999 * s.alphaAt(1));
    CHECK(s.alphaBar(30) <= 0.005);

    const auto s2 = NoiseSchedule::makeExponential(2);
    CHECK(s2.alphaBar(2) < s2.alphaBar(1));
}

TEST_CASE("cumulative retention equals the running product of per-step retention")
{
    const auto s = NoiseSchedule::makeExponential(30);
    double prod = 1.0;
    for (int t = 1; t <= 30; ++t)
    {
        prod *= s.alphaAt(t);
        CHECK(std::abs(prod - s.alphaBar(t)) <= 1e-12);
    }
    CHECK(s.posteriorVar(1) == 0.0);
    for (int t = 2; t <= 30; ++t)
    {
        CHECK(s.posteriorVar(t) > 0.0);
        CHECK(s.posteriorVar(t) < 1.0);
    }
}

TEST_CASE("schedule construction rejects invalid parameters")
{
    CHECK_THROWS_AS(NoiseSchedule::makeExponential(1), ConfigError);
    CHECK_THROWS_AS(NoiseSchedule::makeExponential(30, 0.0), ConfigError);
    CHECK_THROWS_AS(NoiseSchedule::makeExponential(30, -2.0), ConfigError);
    CHECK_THROWS_AS(NoiseSchedule::makeExponential(30, 8.0, 0.0), ConfigError);
    // too little decay leaves the terminal retention above the cap
    CHECK_THROWS_AS(NoiseSchedule::makeExponential(30, 1.0), ConfigError);
}

TEST_CASE("forward diffusion endpoints match the closed form")
{
    const auto s = NoiseSchedule::makeExponential(30);
    Rng rng(4);
    const Mat tau0 = randomMat(60, 10, rng);
    const Mat noise = randomMat(60, 10, rng);

    CHECK(forwardDiffuse(tau0, 0, noise, s) == tau0);

    const Mat zero = Mat::Zero(60, 10);
    const Mat at_T = forwardDiffuse(zero, 30, noise, s);
    const Mat expect = std::sqrt(1.0 - s.alphaBar(30)) * noise;
    CHECK((at_T - expect).cwiseAbs().maxCoeff() == 0.0);

    const Mat mid = forwardDiffuse(tau0, 7, noise, s);
    const Mat mid_expect =
        std::sqrt(s.alphaBar(7)) * tau0 + std::sqrt(1.0 - s.alphaBar(7)) * noise;
    CHECK((mid - mid_expect).cwiseAbs().maxCoeff() == 0.0);

    CHECK_THROWS_AS(forwardDiffuse(tau0, -1, noise, s), ValidationError);
    CHECK_THROWS_AS(forwardDiffuse(tau0, 31, noise, s), ValidationError);
    CHECK_THROWS_AS(forwardDiffuse(tau0, 5, Mat::Zero(59, 10), s), ValidationError);
}

TEST_CASE("forward diffusion at the last step matches standard normal moments")
{
    const auto s = NoiseSchedule::makeExponential(30);
    Mat tau0(60, 10);
    for (long i = 0; i < 60; ++i)
    {
        for (long j = 0; j < 10; ++j)
        {
            tau0(i, j) = 0.1 * std::sin(0.37 * (i + 3 * j));
        }
    }
    const int n = 10000;
    Mat mean = Mat::Zero(60, 10);
    Mat m2 = Mat::Zero(60, 10);
    Rng rng(9);
    for (int k = 0; k < n; ++k)
    {
        const Mat draw = forwardDiffuse(tau0, 30, randomMat(60, 10, rng), s);
        mean += draw;
        m2 += draw.cwiseProduct(draw);
    }
    mean /= n;
    m2 /= n;
    const Mat var = m2 - mean.cwiseProduct(mean);
    CHECK(mean.cwiseAbs().maxCoeff() < 0.05);
    CHECK((var.array() - 1.0).abs().maxCoeff() < 0.05);
}

TEST_CASE("denoiser output is finite, shaped, and deterministic")
{
    ModelConfig mc;
    DenoiserModel model(mc, 11);
    CHECK(model.paramCount() > 0);
    Rng rng(2);
    const Mat tau_t = randomMat(mc.n_frames, 10, rng);
    const DenoiseCond cond = randomCond(mc, rng);

    const Mat out = model.predict(tau_t, 7, cond);
    CHECK(out.rows() == mc.n_frames);
    CHECK(out.cols() == 10);
    CHECK(out.allFinite());
    CHECK(model.predict(tau_t, 7, cond) == out);
    CHECK(model.predict(tau_t, 8, cond) != out);

    DenoiseCond no_tgt = cond;
    no_tgt.has_target = false;
    CHECK(model.predict(tau_t, 7, no_tgt) != out);

    CHECK_THROWS_AS(model.predict(randomMat(10, 10, rng), 7, cond), ValidationError);
    CHECK_THROWS_AS(model.predict(tau_t, 0, cond), ValidationError);
    CHECK_THROWS_AS(model.predict(tau_t, 31, cond), ValidationError);
    DenoiseCond bad = cond;
    bad.action = 6;
    CHECK_THROWS_AS(model.predict(tau_t, 7, bad), ValidationError);
    bad = cond;
    bad.history = randomMat(3, 10, rng);
    CHECK_THROWS_AS(model.predict(tau_t, 7, bad), ValidationError);

    ModelConfig odd = mc;
    odd.d = 30; // not divisible by 4 heads
    CHECK_THROWS_AS(DenoiserModel(odd, 1), ConfigError);
}

TEST_CASE("network gradients match central finite differences for every weight")
{
    ModelConfig mc;
    mc.d = 16;
    mc.L = 1;
    mc.H = 2;
    mc.n_hist = 3;
    mc.n_frames = 6;
    mc.T = 5;
    const double w_vel = 0.7;
    const double h = 1e-5;

    for (int variant = 0; variant < 2; ++variant)
    {
        DenoiserModel model(mc, 21 + variant);
        Rng rng(31 + variant);
        const Mat tau_t = randomMat(mc.n_frames, 10, rng);
        const Mat data = randomMat(mc.n_frames, 10, rng);
        DenoiseCond cond;
        cond.history = randomMat(mc.n_hist, 10, rng, 0.5);
        cond.target = Eigen::Vector3d(0.4, -0.2, 0.7);
        if (variant == 0)
        {
            cond.has_target = true;
            cond.action = 2;
        }
        else
        {
            cond.has_target = false;
            cond.action = 5;
        }
        const int t = 3;

        model.params().zeroGrads();
        DenoiserModel::Tape tape;
        const Mat pred = model.forward(tau_t, t, cond, &tape);
        model.backward(tape, lossGrad(pred, data, w_vel));

        long checked = 0;
        double worst = 0.0;
        for (auto &[name, p] : model.params().items())
        {
            for (long i = 0; i < p->w.rows(); ++i)
            {
                for (long j = 0; j < p->w.cols(); ++j)
                {
                    const double keep = p->w(i, j);
                    p->w(i, j) = keep + h;
                    const double up =
                        computeLoss(model.predict(tau_t, t, cond), data, w_vel).total;
                    p->w(i, j) = keep - h;
                    const double dn =
                        computeLoss(model.predict(tau_t, t, cond), data, w_vel).total;
                    p->w(i, j) = keep;
                    const double fd = (up - dn) / (2.0 * h);
                    const double an = p->g(i, j);
                    const double rel =
                        std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-3});
                    worst = std::max(worst, rel);
                    ++checked;
                }
            }
        }
        CHECK(checked == model.paramCount());
        CHECK(worst <= 1e-4);
    }
}

TEST_CASE("reconstruction and velocity losses follow the documented conventions")
{
    Rng rng(6);
    const Mat data = randomMat(60, 10, rng);

    const LossParts zero = computeLoss(data, data, 1.0);
    CHECK(zero.recon == 0.0);
    CHECK(zero.vel == 0.0);
    CHECK(zero.total == 0.0);

    const Mat offset_row = randomMat(1, 10, rng);
    Mat shifted = data;
    shifted.rowwise() += offset_row.row(0);
    const LossParts off = computeLoss(shifted, data, 1.0);
    CHECK(off.recon == doctest::Approx(60.0 * offset_row.squaredNorm()).epsilon(1e-12));
    CHECK(off.vel <= 1e-18);

    const Mat pred = randomMat(60, 10, rng);
    double recon_ref = 0.0, vel_ref = 0.0;
    for (int i = 0; i < 60; ++i)
    {
        for (int c = 0; c < 10; ++c)
        {
            const double d = pred(i, c) - data(i, c);
            recon_ref += d * d;
            if (i > 0)
            {
                const double dv = (pred(i, c) - pred(i - 1, c)) -
                                  (data(i, c) - data(i - 1, c));
                vel_ref += dv * dv;
            }
        }
    }
    vel_ref /= 59.0;
    const LossParts lp = computeLoss(pred, data, 0.37);
    CHECK(lp.recon == doctest::Approx(recon_ref).epsilon(1e-12));
    CHECK(lp.vel == doctest::Approx(vel_ref).epsilon(1e-12));
    CHECK(lp.total == doctest::Approx(recon_ref + 0.37 * vel_ref).epsilon(1e-12));

    Mat pred_s = pred;
    Mat data_s = data;
    pred_s.rowwise() += offset_row.row(0);
    data_s.rowwise() += offset_row.row(0);
    CHECK(computeLoss(pred_s, data_s, 1.0).vel ==
          doctest::Approx(lp.vel).epsilon(1e-9));

    CHECK_THROWS_AS(computeLoss(pred, randomMat(59, 10, rng), 1.0), ValidationError);

    // the loss is quadratic, so central differences are exact up to roundoff
    const Mat g = lossGrad(pred, data, 0.37);
    Rng pick(8);
    for (int k = 0; k < 40; ++k)
    {
        const long i = static_cast<long>(pick.index(60));
        const long j = static_cast<long>(pick.index(10));
        Mat up = pred, dn = pred;
        up(i, j) += 1e-4;
        dn(i, j) -= 1e-4;
        const double fd = (computeLoss(up, data, 0.37).total -
                           computeLoss(dn, data, 0.37).total) /
                          2e-4;
        CHECK(g(i, j) == doctest::Approx(fd).epsilon(1e-7));
    }
}

TEST_CASE("training overfits a tiny dataset and logs a reproducible curve")
{
    const Dataset ds = makeTinyDataset(8);
    const auto sched = NoiseSchedule::makeExponential(30);

    ModelConfig mc;
    mc.d = 32;
    mc.L = 1;
    mc.H = 2;
    TrainConfig tc;
    tc.model = mc;
    tc.steps = 2000;
    tc.batch = 4;
    tc.lr = 1e-3;
    tc.seed = 3;

    DenoiserModel model(mc, 1);
    const TrainResult res = train(model, ds, sched, tc);
    REQUIRE(res.curve.size() == 2000);
    CHECK(res.param_count == model.paramCount());
    CHECK(res.pos_std.minCoeff() > 0.0);

    const double initial_recon = res.curve.front()[1];
    double tail = 0.0;
    for (size_t i = res.curve.size() - 50; i < res.curve.size(); ++i)
    {
        tail += res.curve[i][1];
    }
    tail /= 50.0;
    CHECK(tail <= 0.1 * initial_recon);

    const std::string csv = tmpPath("aero_curve.csv");
    saveLossCurve(csv, res.curve);
    std::ifstream in(csv);
    std::string header;
    std::getline(in, header);
    CHECK(header == "step,recon,vel,total");
    int rows = 0;
    for (std::string line; std::getline(in, line);)
    {
        rows += !line.empty();
    }
    CHECK(rows == 2000);
    std::filesystem::remove(csv);
}

TEST_CASE("seed-fixed training runs produce identical loss curves")
{
    const Dataset ds = makeTinyDataset(4);
    const auto sched = NoiseSchedule::makeExponential(30);
    ModelConfig mc;
    mc.d = 16;
    mc.L = 1;
    mc.H = 2;
    TrainConfig tc;
    tc.model = mc;
    tc.steps = 40;
    tc.batch = 2;
    tc.lr = 1e-3;
    tc.seed = 12;

    DenoiserModel m1(mc, 7), m2(mc, 7);
    const TrainResult r1 = train(m1, ds, sched, tc);
    const TrainResult r2 = train(m2, ds, sched, tc);
    REQUIRE(r1.curve.size() == r2.curve.size());
    for (size_t i = 0; i < r1.curve.size(); ++i)
    {
        CHECK(r1.curve[i] == r2.curve[i]);
    }

    TrainConfig other = tc;
    other.seed = 13;
    DenoiserModel m3(mc, 7);
    const TrainResult r3 = train(m3, ds, sched, other);
    CHECK(r3.curve.back() != r1.curve.back());
}

TEST_CASE("training aborts when the loss explodes")
{
    const Dataset ds = makeTinyDataset(2);
    const auto sched = NoiseSchedule::makeExponential(30);
    ModelConfig mc;
    mc.d = 16;
    mc.L = 1;
    mc.H = 2;
    TrainConfig tc;
    tc.model = mc;
    tc.steps = 50;
    tc.batch = 2;
    tc.lr = 1e3;
    tc.seed = 1;
    DenoiserModel model(mc, 1);
    CHECK_THROWS_AS(train(model, ds, sched, tc), TrainDivergedError);

    TrainConfig bad = tc;
    bad.lr = -1.0;
    DenoiserModel m2(mc, 1);
    CHECK_THROWS_AS(train(m2, ds, sched, bad), ConfigError);
    Dataset empty;
    empty.n_frames = 60;
    empty.n_history = 5;
    CHECK_THROWS_AS(train(m2, empty, sched, tc), ValidationError);
}

TEST_CASE("checkpoints roundtrip weights and normalization bit-exactly")
{
    const Dataset ds = makeTinyDataset(4);
    const auto sched = NoiseSchedule::makeExponential(30);
    ModelConfig mc;
    mc.d = 16;
    mc.L = 1;
    mc.H = 2;
    TrainConfig tc;
    tc.model = mc;
    tc.steps = 100;
    tc.batch = 2;
    tc.lr = 1e-3;
    tc.seed = 5;
    DenoiserModel model(mc, 9);
    const TrainResult res = train(model, ds, sched, tc);

    const std::string path = tmpPath("aero_ckpt.bin");
    saveCheckpoint(path, model, res.pos_std);
    const LoadedModel lm = loadCheckpoint(path);
    CHECK(lm.pos_std == res.pos_std);
    CHECK(lm.model->config().d == mc.d);
    CHECK(lm.model->config().L == mc.L);
    CHECK(lm.model->paramCount() == model.paramCount());

    Rng rng(3);
    for (int k = 0; k < 3; ++k)
    {
        const Mat tau_t = randomMat(mc.n_frames, 10, rng);
        DenoiseCond cond;
        cond.history = randomMat(mc.n_hist, 10, rng, 0.5);
        cond.target = Eigen::Vector3d(0.2, 0.1, -0.3);
        cond.action = k % 5;
        const int t = 1 + k * 9;
        CHECK(model.predict(tau_t, t, cond) == lm.model->predict(tau_t, t, cond));
    }
    std::filesystem::remove(path);

    const std::string junk = tmpPath("aero_junk.bin");
    {
        std::ofstream out(junk, std::ios::binary);
        out << "NOTACKPT-----";
    }
    CHECK_THROWS_AS(loadCheckpoint(junk), IoError);
    std::filesystem::remove(junk);
    CHECK_THROWS_AS(loadCheckpoint(tmpPath("aero_missing_ckpt.bin")), IoError);
}

TEST_CASE("reverse step matches the posterior mean at the final step and supports mean shifts")
{
    const auto sched = NoiseSchedule::makeExponential(30);
    Rng data_rng(14);
    const Mat M = randomMat(12, 10, data_rng);
    const FixedDenoiser den(M, 30);
    DenoiseCond cond;
    cond.history = Mat::Zero(5, 10);

    Rng r1(5);
    const Mat tau1 = randomMat(12, 10, data_rng);
    const Mat last = reverseStep(den, tau1, 1, cond, sched, r1);
    CHECK(last == M);

    const Mat G = randomMat(12, 10, data_rng, 0.1);
    Rng r2(5);
    const Mat shifted = reverseStep(
        den, tau1, 1, cond, sched, r2,
        [&](const Mat &, int) { return G; });
    CHECK((shifted - (M + G)).cwiseAbs().maxCoeff() == 0.0);

    // zero shift must reproduce the plain ancestral step draw for draw
    Rng r3(77), r4(77);
    const Mat plain = reverseStep(den, tau1, 9, cond, sched, r3);
    const Mat zeroed = reverseStep(den, tau1, 9, cond, sched, r4,
                                   [](const Mat &mu, int)
                                   { return Mat::Zero(mu.rows(), mu.cols()); });
    CHECK(plain == zeroed);

    // a shift moves the mean only; the injected noise stays identical
    Rng r5(31), r6(31);
    const Mat base = reverseStep(den, tau1, 9, cond, sched, r5);
    const Mat moved = reverseStep(den, tau1, 9, cond, sched, r6,
                                  [&](const Mat &, int) { return G; });
    CHECK((moved - base - G).cwiseAbs().maxCoeff() <= 1e-15);

    CHECK_THROWS_AS(reverseStep(den, tau1, 0, cond, sched, r1), ValidationError);
    CHECK_THROWS_AS(reverseStep(den, tau1, 31, cond, sched, r1), ValidationError);
}

TEST_CASE("a one-step schedule with an oracle denoiser inverts forward diffusion")
{
    NoiseSchedule one;
    one.T = 1;
    one.alpha = {0.004};
    one.alpha_bar = {0.004};

    Rng rng(20);
    const Mat tau0 = randomMat(6, 10, rng);
    const FixedDenoiser oracle(tau0, 1);
    DenoiseCond cond;
    cond.history = Mat::Zero(5, 10);

    const Mat tau1 = forwardDiffuse(tau0, 1, randomMat(6, 10, rng), one);
    Rng step_rng(1);
    const Mat rec = reverseStep(oracle, tau1, 1, cond, one, step_rng);
    CHECK(rec == tau0);
}

TEST_CASE("sampling reproduces bit-exactly under a fixed seed")
{
    ModelConfig mc;
    mc.d = 16;
    mc.L = 1;
    mc.H = 2;
    DenoiserModel model(mc, 5);
    const auto sched = NoiseSchedule::makeExponential(30);
    Rng cr(2);
    const DenoiseCond cond = randomCond(mc, cr);

    Rng ra(42), rb(42), rc(43);
    const ModelSample a = samplePrimitive(model, cond, sched, ra);
    const ModelSample b = samplePrimitive(model, cond, sched, rb);
    const ModelSample c = samplePrimitive(model, cond, sched, rc);
    CHECK(a.tau0 == b.tau0);
    CHECK(a.tau0 != c.tau0);
    CHECK(a.tau0.rows() == mc.n_frames);
    CHECK(a.tau0.allFinite());

    const FixedDenoiser mism(Mat::Zero(60, 10), 7);
    CHECK_THROWS_AS(samplePrimitive(mism, cond, sched, ra), ValidationError);
}

TEST_CASE("decoding thresholds the gate channel and canonicalizes rotations")
{
    const Eigen::Vector3d pos_std(2.0, 3.0, 0.5);
    Rng rng(17);
    Mat tau0 = randomMat(60, 10, rng);
    // gate: active for 20 frames, then above threshold
    for (int i = 0; i < 60; ++i)
    {
        tau0(i, 0) = (i < 20) ? 0.1 : 0.9;
    }
    DenoiseCond cond;
    cond.history = randomMat(5, 10, rng, 0.5);
    cond.target = Eigen::Vector3d(1.0, -0.5, 0.25);
    cond.action = 0;

    const DecodedSample dec = decodePrimitive(tau0, cond, pos_std);
    CHECK_FALSE(dec.s_warning);
    CHECK(dec.prim.active_len == 20);
    CHECK(dec.prim.frames.size() == 60);
    CHECK(dec.prim.history.size() == 5);
    CHECK(dec.prim.action == ActionLabel::PowerLoop);
    CHECK(dec.prim.target == cond.target.cwiseProduct(pos_std));
    for (int i = 0; i < 60; ++i)
    {
        const StateFrame &f = dec.prim.frames[i];
        CHECK(f.s == ((i < 20) ? 0.0 : 1.0));
        const Eigen::Matrix3d R = rot6dToMatrix(f.r);
        CHECK((R.transpose() * R - Eigen::Matrix3d::Identity()).norm() <= 1e-9);
        CHECK(f.p.x() == tau0(i, 1) * 2.0);
        CHECK(f.p.y() == tau0(i, 2) * 3.0);
        CHECK(f.p.z() == tau0(i, 3) * 0.5);
    }
    for (int i = 0; i < 5; ++i)
    {
        CHECK(dec.prim.history[i].s == 0.0);
        CHECK(dec.prim.history[i].p.x() == cond.history(i, 1) * 2.0);
    }

    // non-monotone gate: everything after the first crossing is padding
    Mat wobble = tau0;
    for (int i = 0; i < 60; ++i)
    {
        wobble(i, 0) = 0.0;
    }
    wobble(10, 0) = 0.7;
    wobble(11, 0) = 0.2;
    const DecodedSample dw = decodePrimitive(wobble, cond, pos_std);
    CHECK_FALSE(dw.s_warning);
    CHECK(dw.prim.active_len == 10);
    CHECK(dw.prim.frames[11].s == 1.0);

    // gate never crossing keeps every frame active and warns
    Mat never = tau0;
    never.col(0).setZero();
    const DecodedSample dn = decodePrimitive(never, cond, pos_std);
    CHECK(dn.s_warning);
    CHECK(dn.prim.active_len == 60);

    // gate crossing immediately clamps to the minimum usable length and warns
    Mat early = tau0;
    early.col(0).setConstant(1.0);
    const DecodedSample de = decodePrimitive(early, cond, pos_std);
    CHECK(de.s_warning);
    CHECK(de.prim.active_len == 2);
}
