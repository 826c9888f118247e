#ifndef AERO_LBFGS_HPP
#define AERO_LBFGS_HPP

#include <Eigen/Dense>
#include <functional>
#include <vector>

namespace aero
{

    // Objective returning f(x) and filling grad; may signal an infeasible
    // iterate by returning +inf (gradient then ignored).
    using Objective =
        std::function<double(const Eigen::VectorXd &x, Eigen::VectorXd &grad)>;

    struct LbfgsOptions
    {
        int max_iters = 300;
        int memory = 8;
        double gtol = 1e-6;
        double ftol = 1e-10;
        int ftol_window = 3;
        int max_linesearch = 40;
        double armijo = 1e-4;
        double max_step = 1e30;
    };

    struct LbfgsResult
    {
        Eigen::VectorXd x;
        double f = 0.0;
        int iters = 0;
        bool converged = false;
        std::vector<double> trace;
    };

    LbfgsResult lbfgsMinimize(const Objective &fn, const Eigen::VectorXd &x0,
                              const LbfgsOptions &opts = {});

} // namespace aero

#endif
