#include "aero/spline.hpp"

#include <cmath>

#include "aero/banded.hpp"
#include "aero/errors.hpp"

namespace aero
{

    namespace
    {

        double fallingFactorial(int k, int order)
        {
            double f = 1.0;
            for (int i = 0; i < order; ++i)
            {
                f *= static_cast<double>(k - i);
            }
            return f;
        }

        Eigen::Vector3d boundaryDeriv(const FlatState &x, int order)
        {
            switch (order)
            {
            case 0:
                return x.p;
            case 1:
                return x.v;
            case 2:
                return x.a;
            default:
                return x.j;
            }
        }

        void buildSystem(const std::vector<double> &T, int s_o, BandedSystem &A)
        {
            const int M = static_cast<int>(T.size());
            const int bs = 2 * s_o;
            const int n = bs * M;
            A.create(n, bs, bs);
            for (int r = 0; r < s_o; ++r)
            {
                A(r, r) = fallingFactorial(r, r);
            }
            for (int i = 0; i + 1 < M; ++i)
            {
                const int r0 = bs * i + s_o;
                const int c0 = bs * i;
                for (int k = 0; k + 1 < s_o; ++k)
                {
                    const int m = s_o + k;
                    const Eigen::VectorXd beta = polyBasis(T[static_cast<size_t>(i)], m, s_o);
                    for (int c = m; c < bs; ++c)
                    {
                        A(r0 + k, c0 + c) = beta(c);
                    }
                    A(r0 + k, c0 + bs + m) = -fallingFactorial(m, m);
                }
                const int r1 = r0 + s_o - 1;
                const Eigen::VectorXd b0 = polyBasis(T[static_cast<size_t>(i)], 0, s_o);
                for (int c = 0; c < bs; ++c)
                {
                    A(r1, c0 + c) = b0(c);
                }
                for (int c = 0; c < s_o; ++c)
                {
                    const Eigen::VectorXd beta = polyBasis(T[static_cast<size_t>(i)], c, s_o);
                    for (int cc = c; cc < bs; ++cc)
                    {
                        A(r1 + 1 + c, c0 + cc) = beta(cc);
                    }
                    A(r1 + 1 + c, c0 + bs + c) = -fallingFactorial(c, c);
                }
            }
            const int rt = n - s_o;
            const int ct = bs * (M - 1);
            for (int r = 0; r < s_o; ++r)
            {
                const Eigen::VectorXd beta = polyBasis(T[static_cast<size_t>(M - 1)], r, s_o);
                for (int c = r; c < bs; ++c)
                {
                    A(rt + r, ct + c) = beta(c);
                }
            }
        }

    } // namespace

    Eigen::VectorXd polyBasis(double t, int order, int s_o)
    {
        const int bs = 2 * s_o;
        Eigen::VectorXd beta = Eigen::VectorXd::Zero(bs);
        double tp = 1.0;
        for (int k = order; k < bs; ++k)
        {
            beta(k) = fallingFactorial(k, order) * tp;
            tp *= t;
        }
        return beta;
    }

    double PolySpline::totalTime() const
    {
        double s = 0.0;
        for (double t : T)
        {
            s += t;
        }
        return s;
    }

    int PolySpline::locate(double t, double &u) const
    {
        const int M = segments();
        double acc = 0.0;
        for (int i = 0; i < M; ++i)
        {
            if (t <= acc + T[static_cast<size_t>(i)] || i == M - 1)
            {
                u = std::min(std::max(t - acc, 0.0), T[static_cast<size_t>(i)]);
                return i;
            }
            acc += T[static_cast<size_t>(i)];
        }
        u = 0.0;
        return 0;
    }

    Eigen::Vector3d PolySpline::deriv(int seg, double u, int order) const
    {
        const int bs = 2 * s_o;
        const Eigen::VectorXd beta = polyBasis(u, order, s_o);
        return coef.middleRows(bs * seg, bs).transpose() * beta;
    }

    Eigen::Vector3d PolySpline::derivAt(double t, int order) const
    {
        double u = 0.0;
        const int seg = locate(t, u);
        return deriv(seg, u, order);
    }

    FlatState PolySpline::flatAt(double t) const
    {
        double u = 0.0;
        const int seg = locate(t, u);
        FlatState fs;
        fs.p = deriv(seg, u, 0);
        fs.v = deriv(seg, u, 1);
        fs.a = deriv(seg, u, 2);
        fs.j = deriv(seg, u, 3);
        return fs;
    }

    PolySpline solveSpline(const std::vector<Eigen::Vector3d> &waypoints,
                           const std::vector<double> &durations,
                           const FlatState &x0, const FlatState &xf, int s_o)
    {
        const int M = static_cast<int>(durations.size());
        if (s_o != 3 && s_o != 4)
        {
            throw ConfigError("boundary order must be 3 or 4");
        }
        if (M < 1)
        {
            throw ValidationError("spline needs at least one segment");
        }
        if (static_cast<int>(waypoints.size()) != M - 1)
        {
            throw ValidationError("interior waypoint count must equal segments - 1");
        }
        for (double t : durations)
        {
            if (!(t > 0.0) || !std::isfinite(t))
            {
                throw ValidationError("segment durations must be positive");
            }
        }

        const int bs = 2 * s_o;
        const int n = bs * M;
        BandedSystem A;
        buildSystem(durations, s_o, A);
        Eigen::MatrixXd b = Eigen::MatrixXd::Zero(n, 3);
        for (int r = 0; r < s_o; ++r)
        {
            b.row(r) = boundaryDeriv(x0, r).transpose();
            b.row(n - s_o + r) = boundaryDeriv(xf, r).transpose();
        }
        for (int i = 0; i + 1 < M; ++i)
        {
            b.row(bs * i + 2 * s_o - 1) = waypoints[static_cast<size_t>(i)].transpose();
        }
        A.factorizeLU();
        A.solve(b);

        PolySpline sp;
        sp.s_o = s_o;
        sp.T = durations;
        sp.coef = b;
        return sp;
    }

    SplineGrads propagateSplineGrads(const PolySpline &spline,
                                     const Eigen::MatrixXd &dCoef,
                                     const Eigen::VectorXd &dTdirect)
    {
        const int M = spline.segments();
        const int s_o = spline.s_o;
        const int bs = 2 * s_o;
        const int n = bs * M;
        if (dCoef.rows() != n || dCoef.cols() != 3 || dTdirect.size() != M)
        {
            throw ValidationError("gradient shapes do not match the spline");
        }

        BandedSystem A;
        buildSystem(spline.T, s_o, A);
        A.factorizeLU();
        Eigen::MatrixXd lambda = dCoef;
        A.solveAdj(lambda);

        SplineGrads g;
        g.dQ = Eigen::MatrixXd::Zero(std::max(M - 1, 0), 3);
        g.dT = dTdirect;
        for (int i = 0; i + 1 < M; ++i)
        {
            g.dQ.row(i) = lambda.row(bs * i + 2 * s_o - 1);
        }
        for (int i = 0; i < M; ++i)
        {
            const double Ti = spline.T[static_cast<size_t>(i)];
            double acc = 0.0;
            if (i + 1 < M)
            {
                const int r0 = bs * i + s_o;
                for (int k = 0; k + 1 < s_o; ++k)
                {
                    acc += lambda.row(r0 + k).dot(spline.deriv(i, Ti, s_o + k + 1));
                }
                const int r1 = r0 + s_o - 1;
                acc += lambda.row(r1).dot(spline.deriv(i, Ti, 1));
                for (int c = 0; c < s_o; ++c)
                {
                    acc += lambda.row(r1 + 1 + c).dot(spline.deriv(i, Ti, c + 1));
                }
            }
            else
            {
                const int rt = n - s_o;
                for (int r = 0; r < s_o; ++r)
                {
                    acc += lambda.row(rt + r).dot(spline.deriv(i, Ti, r + 1));
                }
            }
            g.dT(i) -= acc;
        }
        return g;
    }

} // namespace aero
