#ifndef AERO_PLOT_HPP
#define AERO_PLOT_HPP

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "aero/environment.hpp"

namespace aero
{

    // Linear-interpolation quantile: h = (n-1)q, value lerped between the
    // bracketing order statistics.
    double quantileLinear(std::vector<double> values, double q);

    struct BoxStats
    {
        double lo = 0.0; // 0.00 quantile
        double q1 = 0.0; // 0.25
        double med = 0.0; // 0.50
        double q3 = 0.0; // 0.75
        double hi = 0.0; // 1.00
    };

    BoxStats boxStats(const std::vector<double> &values);

    struct ProfileSeries
    {
        std::vector<double> t;
        std::vector<double> wx, wy, wz; // body rates
        std::vector<double> f;          // net thrust magnitude
    };

    ProfileSeries readTrajectoryCsv(const std::string &path);

    // Two stacked panels: body rates on top, thrust magnitude below.
    void svgProfile(const std::string &path, const ProfileSeries &s);

    // Top-down view: obstacle footprints, flown paths, target markers.
    void svgTopDown(const std::string &path, const ObstacleScene &scene,
                    const std::vector<std::vector<Eigen::Vector3d>> &paths,
                    const std::vector<Eigen::Vector3d> &targets);

    // One box per group; whiskers span the full sample range.
    void svgBoxPlot(const std::string &path,
                    const std::vector<std::string> &labels,
                    const std::vector<std::vector<double>> &groups,
                    const std::string &y_label);

} // namespace aero

#endif
