#include "aero/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "aero/errors.hpp"

namespace aero
{

    double quantileLinear(std::vector<double> values, double q)
    {
        if (values.empty())
        {
            throw ValidationError("quantile of an empty sample");
        }
        if (q < 0.0 || q > 1.0)
        {
            throw ConfigError("quantile fraction must lie in [0, 1]");
        }
        std::sort(values.begin(), values.end());
        const size_t n = values.size();
        const double h = (static_cast<double>(n) - 1.0) * q;
        const size_t i = static_cast<size_t>(std::floor(h));
        if (i + 1 >= n)
        {
            return values[n - 1];
        }
        const double frac = h - static_cast<double>(i);
        return values[i] + frac * (values[i + 1] - values[i]);
    }

    BoxStats boxStats(const std::vector<double> &values)
    {
        BoxStats b;
        b.lo = quantileLinear(values, 0.0);
        b.q1 = quantileLinear(values, 0.25);
        b.med = quantileLinear(values, 0.5);
        b.q3 = quantileLinear(values, 0.75);
        b.hi = quantileLinear(values, 1.0);
        return b;
    }

    namespace
    {

        std::string num(double v)
        {
            char buf[32];
            std::snprintf(buf, sizeof(buf), "%.3f", v);
            return buf;
        }

        std::string numg(double v)
        {
            char buf[32];
            std::snprintf(buf, sizeof(buf), "%.4g", v);
            return buf;
        }

        // Affine map from a data interval onto a pixel interval.
        struct Axis
        {
            double d0 = 0.0, d1 = 1.0;
            double p0 = 0.0, p1 = 1.0;

            double operator()(double v) const
            {
                const double span = d1 - d0;
                const double u = span == 0.0 ? 0.5 : (v - d0) / span;
                return p0 + u * (p1 - p0);
            }
        };

        void dataRange(const std::vector<const std::vector<double> *> &cols,
                       double &lo, double &hi)
        {
            lo = 1e300;
            hi = -1e300;
            for (const auto *c : cols)
            {
                for (double v : *c)
                {
                    lo = std::min(lo, v);
                    hi = std::max(hi, v);
                }
            }
            if (lo > hi)
            {
                lo = 0.0;
                hi = 1.0;
            }
            if (hi - lo < 1e-12)
            {
                lo -= 0.5;
                hi += 0.5;
            }
        }

        void polyline(std::ostream &os, const Axis &xm, const Axis &ym,
                      const std::vector<double> &x, const std::vector<double> &y,
                      const char *color)
        {
            os << "<polyline fill=\"none\" stroke=\"" << color
               << "\" stroke-width=\"1.2\" points=\"";
            for (size_t i = 0; i < x.size(); ++i)
            {
                if (i)
                {
                    os << ' ';
                }
                os << num(xm(x[i])) << ',' << num(ym(y[i]));
            }
            os << "\"/>\n";
        }

        void frameRect(std::ostream &os, double x0, double y0, double x1,
                       double y1)
        {
            os << "<rect x=\"" << num(x0) << "\" y=\"" << num(y0) << "\" width=\""
               << num(x1 - x0) << "\" height=\"" << num(y1 - y0)
               << "\" fill=\"none\" stroke=\"#444\" stroke-width=\"1\"/>\n";
        }

        void text(std::ostream &os, double x, double y, const std::string &s,
                  const char *anchor = "start", int size = 11)
        {
            os << "<text x=\"" << num(x) << "\" y=\"" << num(y)
               << "\" font-family=\"sans-serif\" font-size=\"" << size
               << "\" text-anchor=\"" << anchor << "\">" << s << "</text>\n";
        }

        void axisLabels(std::ostream &os, const Axis &xm, const Axis &ym)
        {
            text(os, xm.p0, ym.p0 + 14.0, numg(xm.d0), "middle");
            text(os, xm.p1, ym.p0 + 14.0, numg(xm.d1), "middle");
            text(os, xm.p0 - 4.0, ym.p0, numg(ym.d0), "end");
            text(os, xm.p0 - 4.0, ym.p1 + 8.0, numg(ym.d1), "end");
        }

        std::ofstream openSvg(const std::string &path, int w, int h)
        {
            std::ofstream os(path, std::ios::binary);
            if (!os)
            {
                throw IoError("cannot open for writing: " + path);
            }
            os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w
               << "\" height=\"" << h << "\" viewBox=\"0 0 " << w << ' ' << h
               << "\">\n<rect width=\"" << w << "\" height=\"" << h
               << "\" fill=\"white\"/>\n";
            return os;
        }

    } // namespace

    ProfileSeries readTrajectoryCsv(const std::string &path)
    {
        std::ifstream in(path);
        if (!in)
        {
            throw IoError("cannot open trajectory csv: " + path);
        }
        std::string line;
        if (!std::getline(in, line))
        {
            throw IoError("empty trajectory csv: " + path);
        }
        ProfileSeries s;
        while (std::getline(in, line))
        {
            if (line.empty())
            {
                continue;
            }
            std::stringstream ss(line);
            std::vector<double> row;
            std::string cell;
            while (std::getline(ss, cell, ','))
            {
                row.push_back(std::stod(cell));
            }
            if (row.size() < 16)
            {
                throw IoError("trajectory csv row has too few columns");
            }
            s.t.push_back(row[0]);
            s.f.push_back(std::sqrt(row[10] * row[10] + row[11] * row[11] +
                                    row[12] * row[12]));
            s.wx.push_back(row[13]);
            s.wy.push_back(row[14]);
            s.wz.push_back(row[15]);
        }
        if (s.t.empty())
        {
            throw IoError("trajectory csv has no data rows");
        }
        return s;
    }

    void svgProfile(const std::string &path, const ProfileSeries &s)
    {
        if (s.t.empty() || s.t.size() != s.wx.size() ||
            s.t.size() != s.wy.size() || s.t.size() != s.wz.size() ||
            s.t.size() != s.f.size())
        {
            throw ValidationError("profile series columns must match");
        }
        const int W = 720, H = 480;
        std::ofstream os = openSvg(path, W, H);

        double wlo, whi, flo, fhi;
        dataRange({&s.wx, &s.wy, &s.wz}, wlo, whi);
        dataRange({&s.f}, flo, fhi);
        const Axis xm{s.t.front(), s.t.back(), 60.0, W - 20.0};
        const Axis ymw{wlo, whi, 220.0, 30.0};
        const Axis ymf{flo, fhi, 450.0, 260.0};

        frameRect(os, xm.p0, 30.0, xm.p1, 220.0);
        polyline(os, xm, ymw, s.t, s.wx, "#d62728");
        polyline(os, xm, ymw, s.t, s.wy, "#2ca02c");
        polyline(os, xm, ymw, s.t, s.wz, "#1f77b4");
        axisLabels(os, xm, ymw);
        text(os, xm.p0, 22.0, "body rates [rad/s]  wx=red wy=green wz=blue");

        frameRect(os, xm.p0, 260.0, xm.p1, 450.0);
        polyline(os, xm, ymf, s.t, s.f, "#111111");
        axisLabels(os, xm, ymf);
        text(os, xm.p0, 252.0, "net thrust magnitude [m/s^2]");
        text(os, (xm.p0 + xm.p1) / 2.0, H - 6.0, "time [s]", "middle");

        os << "</svg>\n";
    }

    void svgTopDown(const std::string &path, const ObstacleScene &scene,
                    const std::vector<std::vector<Eigen::Vector3d>> &paths,
                    const std::vector<Eigen::Vector3d> &targets)
    {
        const int W = 720, H = 560;
        std::ofstream os = openSvg(path, W, H);
        const double x0 = scene.bound_min.x(), x1 = scene.bound_max.x();
        const double y0 = scene.bound_min.y(), y1 = scene.bound_max.y();
        const Axis xm{x0, x1, 50.0, W - 20.0};
        const Axis ym{y0, y1, H - 40.0, 20.0};

        for (const Obstacle &ob : scene.obstacles)
        {
            if (ob.kind == ObstacleKind::Box)
            {
                const double bx0 = xm(ob.center.x() - ob.half.x());
                const double bx1 = xm(ob.center.x() + ob.half.x());
                const double by0 = ym(ob.center.y() + ob.half.y());
                const double by1 = ym(ob.center.y() - ob.half.y());
                os << "<rect x=\"" << num(bx0) << "\" y=\"" << num(by0)
                   << "\" width=\"" << num(bx1 - bx0) << "\" height=\""
                   << num(by1 - by0) << "\" fill=\"#bbbbbb\"/>\n";
            }
            else if (ob.kind == ObstacleKind::Cylinder)
            {
                os << "<circle cx=\"" << num(xm(ob.center.x())) << "\" cy=\""
                   << num(ym(ob.center.y())) << "\" r=\""
                   << num(ob.half.x() * (xm.p1 - xm.p0) / (x1 - x0))
                   << "\" fill=\"#bbbbbb\"/>\n";
            }
            else
            {
                // boundary line n.x = offset clipped to the scene rectangle
                const double nx = ob.normal.x(), ny = ob.normal.y();
                if (std::abs(nx) + std::abs(ny) < 1e-9)
                {
                    continue;
                }
                std::vector<Eigen::Vector2d> pts;
                auto hit = [&](double px, double py)
                {
                    pts.emplace_back(px, py);
                };
                if (std::abs(ny) > 1e-9)
                {
                    for (double gx : {x0, x1})
                    {
                        const double gy = (ob.offset - nx * gx) / ny;
                        if (gy >= y0 - 1e-9 && gy <= y1 + 1e-9)
                        {
                            hit(gx, gy);
                        }
                    }
                }
                if (std::abs(nx) > 1e-9)
                {
                    for (double gy : {y0, y1})
                    {
                        const double gx = (ob.offset - ny * gy) / nx;
                        if (gx > x0 + 1e-9 && gx < x1 - 1e-9)
                        {
                            hit(gx, gy);
                        }
                    }
                }
                if (pts.size() >= 2)
                {
                    os << "<line x1=\"" << num(xm(pts[0].x())) << "\" y1=\""
                       << num(ym(pts[0].y())) << "\" x2=\"" << num(xm(pts[1].x()))
                       << "\" y2=\"" << num(ym(pts[1].y()))
                       << "\" stroke=\"#888888\" stroke-width=\"3\"/>\n";
                }
            }
        }

        static const char *colors[] = {"#1f77b4", "#d62728", "#2ca02c",
                                       "#9467bd", "#ff7f0e", "#8c564b"};
        for (size_t k = 0; k < paths.size(); ++k)
        {
            std::vector<double> px, py;
            for (const Eigen::Vector3d &p : paths[k])
            {
                px.push_back(p.x());
                py.push_back(p.y());
            }
            polyline(os, xm, ym, px, py, colors[k % 6]);
        }
        for (const Eigen::Vector3d &t : targets)
        {
            os << "<circle cx=\"" << num(xm(t.x())) << "\" cy=\""
               << num(ym(t.y()))
               << "\" r=\"4\" fill=\"none\" stroke=\"#d62728\" "
                  "stroke-width=\"1.5\"/>\n";
        }
        frameRect(os, xm.p0, ym.p1, xm.p1, ym.p0);
        axisLabels(os, xm, ym);
        text(os, (xm.p0 + xm.p1) / 2.0, H - 6.0, "x [m]", "middle");
        text(os, 14.0, (ym.p0 + ym.p1) / 2.0, "y [m]");
        os << "</svg>\n";
    }

    void svgBoxPlot(const std::string &path,
                    const std::vector<std::string> &labels,
                    const std::vector<std::vector<double>> &groups,
                    const std::string &y_label)
    {
        if (labels.size() != groups.size() || groups.empty())
        {
            throw ValidationError("box plot needs one label per group");
        }
        std::vector<BoxStats> stats;
        double lo = 1e300, hi = -1e300;
        for (const auto &g : groups)
        {
            stats.push_back(boxStats(g));
            lo = std::min(lo, stats.back().lo);
            hi = std::max(hi, stats.back().hi);
        }
        if (hi - lo < 1e-12)
        {
            lo -= 0.5;
            hi += 0.5;
        }
        const int W = 160 * static_cast<int>(groups.size()) + 80, H = 420;
        std::ofstream os = openSvg(path, W, H);
        const Axis ym{lo, hi, H - 60.0, 30.0};
        const double slot = 160.0;

        for (size_t k = 0; k < groups.size(); ++k)
        {
            const BoxStats &b = stats[k];
            const double cx = 60.0 + slot * (static_cast<double>(k) + 0.5);
            const double bw = 50.0;
            os << "<line x1=\"" << num(cx) << "\" y1=\"" << num(ym(b.lo))
               << "\" x2=\"" << num(cx) << "\" y2=\"" << num(ym(b.hi))
               << "\" stroke=\"#444\" stroke-width=\"1\"/>\n";
            for (double v : {b.lo, b.hi})
            {
                os << "<line x1=\"" << num(cx - bw / 2.0) << "\" y1=\""
                   << num(ym(v)) << "\" x2=\"" << num(cx + bw / 2.0)
                   << "\" y2=\"" << num(ym(v))
                   << "\" stroke=\"#444\" stroke-width=\"1\"/>\n";
            }
            os << "<rect x=\"" << num(cx - bw) << "\" y=\"" << num(ym(b.q3))
               << "\" width=\"" << num(2.0 * bw) << "\" height=\""
               << num(ym(b.q1) - ym(b.q3))
               << "\" fill=\"#cfe2f3\" stroke=\"#1f77b4\"/>\n";
            os << "<line x1=\"" << num(cx - bw) << "\" y1=\"" << num(ym(b.med))
               << "\" x2=\"" << num(cx + bw) << "\" y2=\"" << num(ym(b.med))
               << "\" stroke=\"#d62728\" stroke-width=\"1.5\"/>\n";
            text(os, cx, H - 26.0, labels[k], "middle");
        }
        text(os, 60.0 - 4.0, ym(lo), numg(lo), "end");
        text(os, 60.0 - 4.0, ym(hi) + 8.0, numg(hi), "end");
        text(os, 10.0, 20.0, y_label);
        os << "</svg>\n";
    }

} // namespace aero
