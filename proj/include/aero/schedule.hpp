#ifndef AERO_SCHEDULE_HPP
#define AERO_SCHEDULE_HPP

#include <cmath>
#include <vector>

#include "aero/errors.hpp"

namespace aero
{

    // Exponential retention schedule: abar(t) = exp(-lambda*(t/T)^kappa).
    // alpha[t-1] and alphaBar(t) follow the 1-based diffusion step t in [1, T];
    // alphaBar(0) = 1.
    struct NoiseSchedule
    {
        int T = 0;
        std::vector<double> alpha;
        std::vector<double> alpha_bar;

        double alphaBar(int t) const
        {
            if (t < 0 || t > T)
            {
                throw ValidationError("diffusion step out of range");
            }
            return t == 0 ? 1.0 : alpha_bar[t - 1];
        }
        double alphaAt(int t) const
        {
            if (t < 1 || t > T)
            {
                throw ValidationError("diffusion step out of range");
            }
            return alpha[t - 1];
        }
        // posterior variance of tau_{t-1} given tau_t and tau_0
        double posteriorVar(int t) const
        {
            return (1.0 - alphaBar(t - 1)) * (1.0 - alphaAt(t)) / (1.0 - alphaBar(t));
        }

        static NoiseSchedule makeExponential(int T, double lambda = 8.0, double kappa = 1.0)
        {
            if (T < 2)
            {
                throw ConfigError("schedule needs at least 2 steps");
            }
            if (lambda <= 0.0 || kappa <= 0.0)
            {
                throw ConfigError("schedule parameters must be positive");
            }
            NoiseSchedule s;
            s.T = T;
            s.alpha_bar.resize(T);
            s.alpha.resize(T);
            double prev = 1.0;
            for (int t = 1; t <= T; ++t)
            {
                const double ab = std::exp(-lambda * std::pow(double(t) / T, kappa));
                s.alpha_bar[t - 1] = ab;
                s.alpha[t - 1] = ab / prev;
                prev = ab;
            }
            for (int t = 1; t <= T; ++t)
            {
                const double a = s.alpha[t - 1];
                if (!(a > 0.0 && a < 1.0))
                {
                    throw ConfigError("schedule parameters give retention outside (0,1)");
                }
                if (t > 1 && !(s.alpha_bar[t - 1] < s.alpha_bar[t - 2]))
                {
                    throw ConfigError("cumulative retention must decrease");
                }
            }
            if (!(s.alpha_bar[0] >= 0.999 * s.alpha[0]))
            {
                throw ConfigError("schedule start retains too little signal");
            }
            if (!(s.alpha_bar[T - 1] <= 0.005))
            {
                throw ConfigError("schedule end retains too much signal");
            }
            return s;
        }
    };

} // namespace aero

#endif
