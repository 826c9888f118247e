#include "aero/model.hpp"

#include <cmath>

#include "aero/errors.hpp"

namespace aero
{

    Mat gelu(const Mat &x)
    {
        return x.unaryExpr([](double v)
                           { return 0.5 * v * (1.0 + std::erf(v / M_SQRT2)); });
    }

    Mat geluGrad(const Mat &x)
    {
        return x.unaryExpr([](double v)
                           {
                               return 0.5 * (1.0 + std::erf(v / M_SQRT2)) +
                                      v * std::exp(-0.5 * v * v) / std::sqrt(2.0 * M_PI);
                           });
    }

    void LinearLayer::init(int in, int out, Rng &rng)
    {
        W.init(in, out);
        b.init(1, out);
        const double s = 1.0 / std::sqrt(static_cast<double>(in));
        for (int i = 0; i < in; ++i)
        {
            for (int j = 0; j < out; ++j)
            {
                W.w(i, j) = s * rng.normal();
            }
        }
    }

    void LinearLayer::reg(ParamRegistry &r, const std::string &prefix)
    {
        r.add(prefix + ".W", &W);
        r.add(prefix + ".b", &b);
    }

    Mat LinearLayer::fwd(const Mat &X) const
    {
        Mat Y = X * W.w;
        Y.rowwise() += b.w.row(0);
        return Y;
    }

    Mat LinearLayer::bwd(const Mat &X, const Mat &dY)
    {
        W.g += X.transpose() * dY;
        b.g.row(0) += dY.colwise().sum();
        return dY * W.w.transpose();
    }

    namespace
    {
        constexpr double kLnEps = 1e-5;
    }

    void LayerNormLayer::init(int d)
    {
        gamma.init(1, d);
        gamma.w.setOnes();
        beta.init(1, d);
    }

    void LayerNormLayer::reg(ParamRegistry &r, const std::string &prefix)
    {
        r.add(prefix + ".g", &gamma);
        r.add(prefix + ".b", &beta);
    }

    Mat LayerNormLayer::fwd(const Mat &X, Cache *c) const
    {
        const Eigen::VectorXd mu = X.rowwise().mean();
        Mat xc = X.colwise() - mu;
        const Eigen::VectorXd var = xc.array().square().rowwise().mean().matrix();
        const Eigen::VectorXd istd = (var.array() + kLnEps).rsqrt().matrix();
        Mat xhat = (xc.array().colwise() * istd.array()).matrix();
        Mat y = (xhat.array().rowwise() * gamma.w.row(0).array()).matrix();
        y.rowwise() += beta.w.row(0);
        if (c)
        {
            c->xhat = std::move(xhat);
            c->istd = istd;
        }
        return y;
    }

    Mat LayerNormLayer::bwd(const Cache &c, const Mat &dY)
    {
        const Mat gdy = (dY.array().rowwise() * gamma.w.row(0).array()).matrix();
        const Eigen::VectorXd m1 = gdy.rowwise().mean();
        const Eigen::VectorXd m2 = (gdy.array() * c.xhat.array()).rowwise().mean().matrix();
        Mat dX = ((gdy.colwise() - m1).array() - c.xhat.array().colwise() * m2.array()).matrix();
        dX = (dX.array().colwise() * c.istd.array()).matrix();
        gamma.g.row(0) += (dY.array() * c.xhat.array()).colwise().sum().matrix();
        beta.g.row(0) += dY.colwise().sum();
        return dX;
    }

    void AttentionLayer::init(int d, int n_heads, Rng &rng)
    {
        heads = n_heads;
        dh = d / n_heads;
        q.init(d, d, rng);
        k.init(d, d, rng);
        v.init(d, d, rng);
        o.init(d, d, rng);
    }

    void AttentionLayer::reg(ParamRegistry &r, const std::string &prefix)
    {
        q.reg(r, prefix + ".q");
        k.reg(r, prefix + ".k");
        v.reg(r, prefix + ".v");
        o.reg(r, prefix + ".o");
    }

    Mat AttentionLayer::fwd(const Mat &Xq, const Mat &Xkv, Cache *c) const
    {
        const Mat Q = q.fwd(Xq);
        const Mat K = k.fwd(Xkv);
        const Mat V = v.fwd(Xkv);
        const long nq = Xq.rows();
        Mat O(nq, Q.cols());
        std::vector<Mat> As(heads);
        const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
        for (int h = 0; h < heads; ++h)
        {
            const auto Qh = Q.middleCols(h * dh, dh);
            const auto Kh = K.middleCols(h * dh, dh);
            const auto Vh = V.middleCols(h * dh, dh);
            Mat S = Qh * Kh.transpose() * scale;
            Mat A(S.rows(), S.cols());
            for (long i = 0; i < S.rows(); ++i)
            {
                const Eigen::RowVectorXd e =
                    (S.row(i).array() - S.row(i).maxCoeff()).exp().matrix();
                A.row(i) = e / e.sum();
            }
            O.middleCols(h * dh, dh) = A * Vh;
            As[h] = std::move(A);
        }
        Mat Y = o.fwd(O);
        if (c)
        {
            c->Xq = Xq;
            c->Xkv = Xkv;
            c->Q = Q;
            c->K = K;
            c->V = V;
            c->O = std::move(O);
            c->A = std::move(As);
        }
        return Y;
    }

    void AttentionLayer::bwd(const Cache &c, const Mat &dY, Mat &dXq, Mat &dXkv)
    {
        const Mat dO = o.bwd(c.O, dY);
        Mat dQ = Mat::Zero(c.Q.rows(), c.Q.cols());
        Mat dK = Mat::Zero(c.K.rows(), c.K.cols());
        Mat dV = Mat::Zero(c.V.rows(), c.V.cols());
        const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
        for (int h = 0; h < heads; ++h)
        {
            const Mat &A = c.A[h];
            const auto Qh = c.Q.middleCols(h * dh, dh);
            const auto Kh = c.K.middleCols(h * dh, dh);
            const auto Vh = c.V.middleCols(h * dh, dh);
            const Mat dOh = dO.middleCols(h * dh, dh);
            const Mat dA = dOh * Vh.transpose();
            dV.middleCols(h * dh, dh) += A.transpose() * dOh;
            const Eigen::VectorXd r = (dA.array() * A.array()).rowwise().sum().matrix();
            const Mat dS = (A.array() * (dA.colwise() - r).array() * scale).matrix();
            dQ.middleCols(h * dh, dh) += dS * Kh;
            dK.middleCols(h * dh, dh) += dS.transpose() * Qh;
        }
        dXq += q.bwd(c.Xq, dQ);
        dXkv += k.bwd(c.Xkv, dK);
        dXkv += v.bwd(c.Xkv, dV);
    }

    void MlpLayer::init(int in, int hidden, int out, Rng &rng)
    {
        a.init(in, hidden, rng);
        b.init(hidden, out, rng);
    }

    void MlpLayer::reg(ParamRegistry &r, const std::string &prefix)
    {
        a.reg(r, prefix + ".a");
        b.reg(r, prefix + ".b");
    }

    Mat MlpLayer::fwd(const Mat &X, Cache *c) const
    {
        Mat H = a.fwd(X);
        Mat Y = b.fwd(gelu(H));
        if (c)
        {
            c->X = X;
            c->H = std::move(H);
        }
        return Y;
    }

    Mat MlpLayer::bwd(const Cache &c, const Mat &dY)
    {
        const Mat dG = b.bwd(gelu(c.H), dY);
        const Mat dH = (dG.array() * geluGrad(c.H).array()).matrix();
        return a.bwd(c.X, dH);
    }

    Mat DenoiserModel::Block::fwd(const Mat &X, const Mat &cond, Cache *c) const
    {
        const Mat n1 = ln1.fwd(X, c ? &c->c1 : nullptr);
        const Mat X1 = X + self_at.fwd(n1, n1, c ? &c->self_c : nullptr);
        const Mat n2 = ln2.fwd(X1, c ? &c->c2 : nullptr);
        const Mat X2 = X1 + cross_at.fwd(n2, cond, c ? &c->cross_c : nullptr);
        const Mat n3 = ln3.fwd(X2, c ? &c->c3 : nullptr);
        return X2 + ff.fwd(n3, c ? &c->ff_c : nullptr);
    }

    Mat DenoiserModel::Block::bwd(const Cache &c, const Mat &dY, Mat &dCond)
    {
        Mat dX2 = dY + ln3.bwd(c.c3, ff.bwd(c.ff_c, dY));
        Mat dN2 = Mat::Zero(dY.rows(), dY.cols());
        cross_at.bwd(c.cross_c, dX2, dN2, dCond);
        Mat dX1 = dX2 + ln2.bwd(c.c2, dN2);
        Mat dN1 = Mat::Zero(dY.rows(), dY.cols());
        self_at.bwd(c.self_c, dX1, dN1, dN1);
        return dX1 + ln1.bwd(c.c1, dN1);
    }

    DenoiserModel::DenoiserModel(const ModelConfig &cfg, uint64_t seed) : cfg_(cfg)
    {
        if (cfg.d < 4 || cfg.d % cfg.H != 0)
        {
            throw ConfigError("latent width must be a positive multiple of the head count");
        }
        if (cfg.L < 1 || cfg.n_hist < 1 || cfg.n_frames < 2 || cfg.T < 2)
        {
            throw ConfigError("model dims must be positive");
        }
        Rng rng(seed);
        const int d = cfg.d;
        const int n = cfg.n_hist + cfg.n_frames;

        tok_.init(10, d, rng);
        seg_.init(2, d);
        act_table_.init(6, d);
        null_target_.init(1, d);
        auto table = [&rng](Param &p)
        {
            for (int i = 0; i < p.w.rows(); ++i)
            {
                for (int j = 0; j < p.w.cols(); ++j)
                {
                    p.w(i, j) = 0.02 * rng.normal();
                }
            }
        };
        table(seg_);
        table(act_table_);
        table(null_target_);
        phi_t_.init(1, d, d, rng);
        phi_p_.init(3, d, d, rng);
        blocks_.resize(cfg.L);
        for (auto &blk : blocks_)
        {
            blk.ln1.init(d);
            blk.ln2.init(d);
            blk.ln3.init(d);
            blk.self_at.init(d, cfg.H, rng);
            blk.cross_at.init(d, cfg.H, rng);
            blk.ff.init(d, 4 * d, d, rng);
        }
        ln_f_.init(d);
        head_.init(d, 10, rng);

        pe_.setZero(n, d);
        for (int pos = 0; pos < n; ++pos)
        {
            for (int i = 0; i < d; i += 2)
            {
                const double arg = pos / std::pow(10000.0, static_cast<double>(i) / d);
                pe_(pos, i) = std::sin(arg);
                if (i + 1 < d)
                {
                    pe_(pos, i + 1) = std::cos(arg);
                }
            }
        }

        tok_.reg(reg_, "tok");
        reg_.add("seg", &seg_);
        reg_.add("act", &act_table_);
        reg_.add("null_t", &null_target_);
        phi_t_.reg(reg_, "phi_t");
        phi_p_.reg(reg_, "phi_p");
        for (int l = 0; l < cfg.L; ++l)
        {
            const std::string p = "blk" + std::to_string(l);
            blocks_[l].ln1.reg(reg_, p + ".ln1");
            blocks_[l].self_at.reg(reg_, p + ".self");
            blocks_[l].ln2.reg(reg_, p + ".ln2");
            blocks_[l].cross_at.reg(reg_, p + ".cross");
            blocks_[l].ln3.reg(reg_, p + ".ln3");
            blocks_[l].ff.reg(reg_, p + ".ff");
        }
        ln_f_.reg(reg_, "ln_f");
        head_.reg(reg_, "head");
    }

    Mat DenoiserModel::forward(const Mat &tau_t, int t, const DenoiseCond &cond,
                               Tape *tape) const
    {
        if (tau_t.rows() != cfg_.n_frames || tau_t.cols() != 10)
        {
            throw ValidationError("noisy primitive tensor must be n_frames x 10");
        }
        if (cond.history.rows() != cfg_.n_hist || cond.history.cols() != 10)
        {
            throw ValidationError("history tensor must be n_hist x 10");
        }
        if (cond.action < 0 || cond.action > 5)
        {
            throw ValidationError("action index out of table");
        }
        if (t < 1 || t > cfg_.T)
        {
            throw ValidationError("diffusion step out of range");
        }

        const int n = cfg_.n_hist + cfg_.n_frames;
        Mat E(n, 10);
        E.topRows(cfg_.n_hist) = cond.history;
        E.bottomRows(cfg_.n_frames) = tau_t;

        Mat X = tok_.fwd(E) + pe_;
        X.topRows(cfg_.n_hist).rowwise() += seg_.w.row(0);
        X.bottomRows(cfg_.n_frames).rowwise() += seg_.w.row(1);

        Mat tin(1, 1);
        tin(0, 0) = static_cast<double>(t) / cfg_.T;
        Mat pin(1, 3);
        pin << cond.target.x(), cond.target.y(), cond.target.z();

        Mat C(3, cfg_.d);
        C.row(0) = phi_t_.fwd(tin, tape ? &tape->t_c : nullptr);
        if (cond.has_target)
        {
            C.row(1) = phi_p_.fwd(pin, tape ? &tape->p_c : nullptr);
        }
        else
        {
            C.row(1) = null_target_.w.row(0);
        }
        C.row(2) = act_table_.w.row(cond.action);

        if (tape)
        {
            tape->E = E;
            tape->cond = C;
            tape->blocks.resize(cfg_.L);
            tape->action = cond.action;
            tape->has_target = cond.has_target;
        }
        for (int l = 0; l < cfg_.L; ++l)
        {
            X = blocks_[l].fwd(X, C, tape ? &tape->blocks[l] : nullptr);
        }
        const Mat F = ln_f_.fwd(X, tape ? &tape->fc : nullptr);
        if (tape)
        {
            tape->F = F;
        }
        return head_.fwd(F.bottomRows(cfg_.n_frames));
    }

    void DenoiserModel::backward(Tape &tape, const Mat &dOut)
    {
        const int n = cfg_.n_hist + cfg_.n_frames;
        Mat dF = Mat::Zero(n, cfg_.d);
        const Mat Fb = tape.F.bottomRows(cfg_.n_frames);
        dF.bottomRows(cfg_.n_frames) = head_.bwd(Fb, dOut);
        Mat dX = ln_f_.bwd(tape.fc, dF);
        Mat dC = Mat::Zero(3, cfg_.d);
        for (int l = cfg_.L - 1; l >= 0; --l)
        {
            dX = blocks_[l].bwd(tape.blocks[l], dX, dC);
        }
        tok_.bwd(tape.E, dX);
        seg_.g.row(0) += dX.topRows(cfg_.n_hist).colwise().sum();
        seg_.g.row(1) += dX.bottomRows(cfg_.n_frames).colwise().sum();
        phi_t_.bwd(tape.t_c, dC.row(0));
        if (tape.has_target)
        {
            phi_p_.bwd(tape.p_c, dC.row(1));
        }
        else
        {
            null_target_.g.row(0) += dC.row(1);
        }
        act_table_.g.row(tape.action) += dC.row(2);
    }

    Mat DenoiserModel::predict(const Mat &tau_t, int t, const DenoiseCond &cond) const
    {
        return forward(tau_t, t, cond, nullptr);
    }

    void DenoiserModel::quantizeWeights()
    {
        for (auto &[name, p] : reg_.items())
        {
            p->w = p->w.unaryExpr([](double v)
                                  { return static_cast<double>(static_cast<float>(v)); });
        }
    }

} // namespace aero
