#ifndef AERO_DUAL_HPP
#define AERO_DUAL_HPP

#include <cmath>

namespace aero
{

    // Forward-mode dual number: value + one directional derivative.
    // Penalty kernels are templated on the scalar so the same code yields
    // values (double) and input-gradients (Dual with seeded directions).
    struct Dual
    {
        double v;
        double d;

        Dual() : v(0.0), d(0.0) {}
        Dual(double value) : v(value), d(0.0) {}
        Dual(double value, double deriv) : v(value), d(deriv) {}
    };

    inline Dual operator+(const Dual &a, const Dual &b) { return Dual(a.v + b.v, a.d + b.d); }
    inline Dual operator-(const Dual &a, const Dual &b) { return Dual(a.v - b.v, a.d - b.d); }
    inline Dual operator-(const Dual &a) { return Dual(-a.v, -a.d); }
    inline Dual operator*(const Dual &a, const Dual &b) { return Dual(a.v * b.v, a.d * b.v + a.v * b.d); }
    inline Dual operator/(const Dual &a, const Dual &b)
    {
        const double inv = 1.0 / b.v;
        return Dual(a.v * inv, (a.d - a.v * b.d * inv) * inv);
    }

    inline Dual &operator+=(Dual &a, const Dual &b)
    {
        a = a + b;
        return a;
    }
    inline Dual &operator-=(Dual &a, const Dual &b)
    {
        a = a - b;
        return a;
    }
    inline Dual &operator*=(Dual &a, const Dual &b)
    {
        a = a * b;
        return a;
    }

    inline bool operator<(const Dual &a, const Dual &b) { return a.v < b.v; }
    inline bool operator>(const Dual &a, const Dual &b) { return a.v > b.v; }
    inline bool operator<=(const Dual &a, const Dual &b) { return a.v <= b.v; }
    inline bool operator>=(const Dual &a, const Dual &b) { return a.v >= b.v; }

    inline Dual sqrt(const Dual &a)
    {
        const double r = std::sqrt(a.v);
        return Dual(r, 0.5 * a.d / r);
    }

    inline Dual abs(const Dual &a)
    {
        return a.v >= 0.0 ? a : -a;
    }

    inline double value(const Dual &a) { return a.v; }
    inline double value(double a) { return a; }

    // Minimal fixed-size 3-vector over any scalar.
    template <typename S>
    struct Vec3T
    {
        S x, y, z;

        Vec3T() : x(S(0.0)), y(S(0.0)), z(S(0.0)) {}
        Vec3T(S a, S b, S c) : x(a), y(b), z(c) {}

        Vec3T operator+(const Vec3T &o) const { return Vec3T(x + o.x, y + o.y, z + o.z); }
        Vec3T operator-(const Vec3T &o) const { return Vec3T(x - o.x, y - o.y, z - o.z); }
        Vec3T operator*(const S &s) const { return Vec3T(x * s, y * s, z * s); }

        S dot(const Vec3T &o) const { return x * o.x + y * o.y + z * o.z; }
        S squaredNorm() const { return dot(*this); }
        S norm() const
        {
            using std::sqrt;
            using aero::sqrt;
            return sqrt(squaredNorm());
        }

        Vec3T cross(const Vec3T &o) const
        {
            return Vec3T(y * o.z - z * o.y,
                         z * o.x - x * o.z,
                         x * o.y - y * o.x);
        }
    };

    using DVec3 = Vec3T<Dual>;

} // namespace aero

#endif
