#ifndef AERO_MODEL_HPP
#define AERO_MODEL_HPP

#include <Eigen/Dense>
#include <memory>
#include <string>
#include <vector>

#include "aero/rng.hpp"

namespace aero
{

    using Mat = Eigen::MatrixXd;

    // model-space conditioning: positions divided by the dataset std
    struct DenoiseCond
    {
        Mat history;                                     // N_h x 10
        Eigen::Vector3d target = Eigen::Vector3d::Zero(); // normalized
        bool has_target = true;
        int action = 5; // action-table row; 5 is the learned null token
    };

    class Denoiser
    {
    public:
        virtual ~Denoiser() = default;
        virtual Mat predict(const Mat &tau_t, int t, const DenoiseCond &cond) const = 0;
        virtual int timeSteps() const = 0;
        virtual int frameCount() const = 0;
        virtual int historyLen() const = 0;
    };

    struct Param
    {
        Mat w, g;
        void init(int rows, int cols)
        {
            w.setZero(rows, cols);
            g.setZero(rows, cols);
        }
    };

    class ParamRegistry
    {
    public:
        void add(const std::string &name, Param *p) { items_.push_back({name, p}); }
        const std::vector<std::pair<std::string, Param *>> &items() const { return items_; }
        void zeroGrads()
        {
            for (auto &[name, p] : items_)
            {
                p->g.setZero();
            }
        }
        long paramCount() const
        {
            long n = 0;
            for (const auto &[name, p] : items_)
            {
                n += p->w.size();
            }
            return n;
        }

    private:
        std::vector<std::pair<std::string, Param *>> items_;
    };

    Mat gelu(const Mat &x);
    Mat geluGrad(const Mat &x);

    struct LinearLayer
    {
        Param W, b; // W: in x out, b: 1 x out
        void init(int in, int out, Rng &rng);
        void reg(ParamRegistry &r, const std::string &prefix);
        Mat fwd(const Mat &X) const;
        Mat bwd(const Mat &X, const Mat &dY);
    };

    struct LayerNormLayer
    {
        Param gamma, beta; // 1 x d
        struct Cache
        {
            Mat xhat;
            Eigen::VectorXd istd;
        };
        void init(int d);
        void reg(ParamRegistry &r, const std::string &prefix);
        Mat fwd(const Mat &X, Cache *c) const;
        Mat bwd(const Cache &c, const Mat &dY);
    };

    struct AttentionLayer
    {
        LinearLayer q, k, v, o;
        int heads = 4, dh = 16;
        struct Cache
        {
            Mat Xq, Xkv, Q, K, V, O;
            std::vector<Mat> A;
        };
        void init(int d, int n_heads, Rng &rng);
        void reg(ParamRegistry &r, const std::string &prefix);
        Mat fwd(const Mat &Xq, const Mat &Xkv, Cache *c) const;
        void bwd(const Cache &c, const Mat &dY, Mat &dXq, Mat &dXkv);
    };

    struct MlpLayer
    {
        LinearLayer a, b;
        struct Cache
        {
            Mat X, H;
        };
        void init(int in, int hidden, int out, Rng &rng);
        void reg(ParamRegistry &r, const std::string &prefix);
        Mat fwd(const Mat &X, Cache *c) const;
        Mat bwd(const Cache &c, const Mat &dY);
    };

    struct ModelConfig
    {
        int d = 64;
        int L = 2;
        int H = 4;
        int n_hist = 5;
        int n_frames = 60;
        int T = 30;
    };

    class DenoiserModel : public Denoiser
    {
    public:
        DenoiserModel(const ModelConfig &cfg, uint64_t seed);

        Mat predict(const Mat &tau_t, int t, const DenoiseCond &cond) const override;
        int timeSteps() const override { return cfg_.T; }
        int frameCount() const override { return cfg_.n_frames; }
        int historyLen() const override { return cfg_.n_hist; }

        struct Tape;
        Mat forward(const Mat &tau_t, int t, const DenoiseCond &cond, Tape *tape) const;
        void backward(Tape &tape, const Mat &dOut);

        ParamRegistry &params() { return reg_; }
        const ParamRegistry &params() const { return reg_; }
        const ModelConfig &config() const { return cfg_; }
        long paramCount() const { return reg_.paramCount(); }
        // rounds every weight through f32 so checkpoints roundtrip bit-exactly
        void quantizeWeights();

        struct Block
        {
            LayerNormLayer ln1, ln2, ln3;
            AttentionLayer self_at, cross_at;
            MlpLayer ff;
            struct Cache
            {
                LayerNormLayer::Cache c1, c2, c3;
                AttentionLayer::Cache self_c, cross_c;
                MlpLayer::Cache ff_c;
            };
            Mat fwd(const Mat &X, const Mat &cond, Cache *c) const;
            Mat bwd(const Cache &c, const Mat &dY, Mat &dCond);
        };

        struct Tape
        {
            Mat E;  // token inputs (n x 10)
            Mat cond; // condition tokens (3 x d)
            std::vector<Block::Cache> blocks;
            LayerNormLayer::Cache fc;
            Mat F;      // after final norm
            MlpLayer::Cache t_c, p_c;
            int action = 5;
            bool has_target = true;
        };

    private:
        ModelConfig cfg_;
        LinearLayer tok_;
        Mat pe_; // fixed sinusoidal positions
        Param seg_, act_table_, null_target_;
        MlpLayer phi_t_, phi_p_;
        std::vector<Block> blocks_;
        LayerNormLayer ln_f_;
        LinearLayer head_;
        ParamRegistry reg_;
    };

} // namespace aero

#endif
