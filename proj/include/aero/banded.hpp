#ifndef AERO_BANDED_HPP
#define AERO_BANDED_HPP

#include <Eigen/Dense>
#include <cmath>

#include "aero/errors.hpp"

namespace aero
{

    // Banded Gaussian elimination without pivoting; the spline systems built
    // from positive durations keep the pivots away from zero.
    class BandedSystem
    {
    public:
        void create(int n, int lower, int upper)
        {
            n_ = n;
            lo_ = lower;
            up_ = upper;
            a_ = Eigen::MatrixXd::Zero(lo_ + up_ + 1, n_);
        }

        double &operator()(int r, int c) { return a_(up_ + r - c, c); }
        double operator()(int r, int c) const { return a_(up_ + r - c, c); }

        void factorizeLU()
        {
            for (int k = 0; k < n_ - 1; ++k)
            {
                const double piv = (*this)(k, k);
                if (std::abs(piv) < 1e-12)
                {
                    throw ValidationError("singular banded system");
                }
                const int imax = std::min(k + lo_, n_ - 1);
                const int jmax = std::min(k + up_, n_ - 1);
                for (int i = k + 1; i <= imax; ++i)
                {
                    const double l = (*this)(i, k) / piv;
                    (*this)(i, k) = l;
                    for (int j = k + 1; j <= jmax; ++j)
                    {
                        (*this)(i, j) -= l * (*this)(k, j);
                    }
                }
            }
            if (std::abs((*this)(n_ - 1, n_ - 1)) < 1e-12)
            {
                throw ValidationError("singular banded system");
            }
        }

        // A X = B, in place; B has n rows.
        void solve(Eigen::MatrixXd &B) const
        {
            for (int k = 0; k < n_; ++k)
            {
                const int imax = std::min(k + lo_, n_ - 1);
                for (int i = k + 1; i <= imax; ++i)
                {
                    B.row(i) -= (*this)(i, k) * B.row(k);
                }
            }
            for (int k = n_ - 1; k >= 0; --k)
            {
                B.row(k) /= (*this)(k, k);
                const int imin = std::max(k - up_, 0);
                for (int i = imin; i < k; ++i)
                {
                    B.row(i) -= (*this)(i, k) * B.row(k);
                }
            }
        }

        // A^T X = B, in place, reusing the same LU factors.
        void solveAdj(Eigen::MatrixXd &B) const
        {
            for (int k = 0; k < n_; ++k)
            {
                B.row(k) /= (*this)(k, k);
                const int imax = std::min(k + up_, n_ - 1);
                for (int i = k + 1; i <= imax; ++i)
                {
                    B.row(i) -= (*this)(k, i) * B.row(k);
                }
            }
            for (int k = n_ - 1; k >= 0; --k)
            {
                const int imin = std::max(k - lo_, 0);
                for (int i = imin; i < k; ++i)
                {
                    B.row(i) -= (*this)(k, i) * B.row(k);
                }
            }
        }

    private:
        int n_ = 0;
        int lo_ = 0;
        int up_ = 0;
        Eigen::MatrixXd a_;
    };

} // namespace aero

#endif
