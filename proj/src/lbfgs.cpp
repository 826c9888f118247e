#include "aero/lbfgs.hpp"

#include <cmath>
#include <deque>

#include "aero/errors.hpp"

namespace aero
{

    namespace
    {

        double safeEval(const Objective &fn, const Eigen::VectorXd &x,
                        Eigen::VectorXd &grad)
        {
            try
            {
                const double f = fn(x, grad);
                if (!std::isfinite(f) || !grad.allFinite())
                {
                    return std::numeric_limits<double>::infinity();
                }
                return f;
            }
            catch (const Error &)
            {
                return std::numeric_limits<double>::infinity();
            }
        }

    } // namespace

    LbfgsResult lbfgsMinimize(const Objective &fn, const Eigen::VectorXd &x0,
                              const LbfgsOptions &opts)
    {
        if (opts.max_iters < 1 || opts.memory < 1)
        {
            throw ConfigError("optimizer iteration and memory counts must be positive");
        }
        const int n = static_cast<int>(x0.size());
        Eigen::VectorXd x = x0;
        Eigen::VectorXd g(n), gn(n), xn(n), d(n);
        double f = safeEval(fn, x, g);
        if (!std::isfinite(f))
        {
            throw ValidationError("objective is not finite at the initial point");
        }

        struct Pair
        {
            Eigen::VectorXd s, y;
            double rho;
        };
        std::deque<Pair> mem;

        LbfgsResult res;
        res.trace.push_back(f);
        int small_steps = 0;
        int it = 0;
        for (; it < opts.max_iters; ++it)
        {
            if (g.lpNorm<Eigen::Infinity>() <= opts.gtol)
            {
                res.converged = true;
                break;
            }

            d = -g;
            std::vector<double> alpha(mem.size());
            for (int i = static_cast<int>(mem.size()) - 1; i >= 0; --i)
            {
                alpha[static_cast<size_t>(i)] =
                    mem[static_cast<size_t>(i)].rho * mem[static_cast<size_t>(i)].s.dot(d);
                d -= alpha[static_cast<size_t>(i)] * mem[static_cast<size_t>(i)].y;
            }
            if (!mem.empty())
            {
                const Pair &last = mem.back();
                d *= last.s.dot(last.y) / last.y.squaredNorm();
            }
            else
            {
                d /= std::max(1.0, d.norm());
            }
            for (size_t i = 0; i < mem.size(); ++i)
            {
                const double beta = mem[i].rho * mem[i].y.dot(d);
                d += (alpha[i] - beta) * mem[i].s;
            }

            double gd = g.dot(d);
            if (gd >= 0.0)
            {
                d = -g / std::max(1.0, g.norm());
                gd = g.dot(d);
                mem.clear();
            }

            double step = std::min(1.0, opts.max_step / std::max(d.norm(), 1e-300));
            double fn_val = std::numeric_limits<double>::infinity();
            bool ok = false;
            for (int ls = 0; ls < opts.max_linesearch; ++ls)
            {
                xn = x + step * d;
                fn_val = safeEval(fn, xn, gn);
                if (fn_val <= f + opts.armijo * step * gd)
                {
                    ok = true;
                    break;
                }
                step *= 0.5;
            }
            if (!ok)
            {
                break;
            }

            const Eigen::VectorXd s = xn - x;
            const Eigen::VectorXd yv = gn - g;
            const double sy = s.dot(yv);
            if (sy > 1e-12 * s.norm() * yv.norm())
            {
                mem.push_back({s, yv, 1.0 / sy});
                if (static_cast<int>(mem.size()) > opts.memory)
                {
                    mem.pop_front();
                }
            }

            const double df = f - fn_val;
            x = xn;
            f = fn_val;
            g = gn;
            res.trace.push_back(f);
            small_steps = df <= opts.ftol * std::max(1.0, std::abs(f)) ? small_steps + 1 : 0;
            if (small_steps >= opts.ftol_window)
            {
                res.converged = true;
                ++it;
                break;
            }
        }

        res.x = x;
        res.f = f;
        res.iters = it;
        return res;
    }

} // namespace aero
