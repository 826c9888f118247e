#ifndef AERO_RNG_HPP
#define AERO_RNG_HPP

#include <cmath>
#include <cstdint>
#include <random>

namespace aero
{

    // Deterministic RNG built on mt19937_64 with explicit bit-to-double conversion,
    // so every platform produces identical streams for identical seeds.
    class Rng
    {
    public:
        explicit Rng(uint64_t seed = 0) : eng_(seed), cacheValid_(false), cache_(0.0) {}

        // Uniform double in [0, 1) using the top 53 bits.
        double uniform()
        {
            return static_cast<double>(eng_() >> 11) * 0x1.0p-53;
        }

        double uniform(double lo, double hi)
        {
            return lo + (hi - lo) * uniform();
        }

        // Uniform integer in [0, n).
        uint64_t index(uint64_t n)
        {
            // Rejection keeps the distribution exact for any n.
            const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
            uint64_t v = eng_();
            while (v >= limit)
            {
                v = eng_();
            }
            return v % n;
        }

        // Standard normal via Box-Muller; caches the second deviate.
        double normal()
        {
            if (cacheValid_)
            {
                cacheValid_ = false;
                return cache_;
            }
            double u1 = uniform();
            while (u1 <= 0.0)
            {
                u1 = uniform();
            }
            const double u2 = uniform();
            const double mag = std::sqrt(-2.0 * std::log(u1));
            const double ang = 2.0 * M_PI * u2;
            cache_ = mag * std::sin(ang);
            cacheValid_ = true;
            return mag * std::cos(ang);
        }

        double normal(double mean, double stddev)
        {
            return mean + stddev * normal();
        }

        // Independent child stream for element `index`; mixing is splitmix64-style
        // so streams differ even for adjacent indices.
        static Rng stream(uint64_t seed, uint64_t index)
        {
            uint64_t z = seed + 0x9E3779B97F4A7C15ull * (index + 1);
            z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
            z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
            z = z ^ (z >> 31);
            return Rng(z);
        }

    private:
        std::mt19937_64 eng_;
        bool cacheValid_;
        double cache_;
    };

} // namespace aero

#endif
