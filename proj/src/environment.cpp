#include "aero/environment.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include <json.hpp>
#include <omp.h>

#include "aero/binio.hpp"
#include "aero/errors.hpp"

namespace aero
{

    namespace
    {
        double boxCombine(double da, double db)
        {
            const double ax = std::max(da, 0.0), bx = std::max(db, 0.0);
            return std::hypot(ax, bx) + std::min(std::max(da, db), 0.0);
        }
    }

    double Obstacle::sdf(const Eigen::Vector3d &p) const
    {
        switch (kind)
        {
        case ObstacleKind::Box:
        {
            const Eigen::Vector3d q = (p - center).cwiseAbs() - half;
            const Eigen::Vector3d qp = q.cwiseMax(0.0);
            return qp.norm() + std::min(q.maxCoeff(), 0.0);
        }
        case ObstacleKind::Cylinder:
        {
            const double dr = std::hypot(p.x() - center.x(), p.y() - center.y()) - half.x();
            const double dz = std::abs(p.z() - center.z()) - half.z();
            return boxCombine(dr, dz);
        }
        case ObstacleKind::HalfSpace:
            return normal.dot(p) - offset;
        }
        return 0.0;
    }

    Obstacle makeBox(const Eigen::Vector3d &center, const Eigen::Vector3d &half)
    {
        if ((half.array() <= 0.0).any())
        {
            throw ValidationError("box half extents must be positive");
        }
        Obstacle o;
        o.kind = ObstacleKind::Box;
        o.center = center;
        o.half = half;
        return o;
    }

    Obstacle makeCylinder(double cx, double cy, double z0, double z1, double radius)
    {
        if (radius <= 0.0 || z1 <= z0)
        {
            throw ValidationError("cylinder needs positive radius and z1 > z0");
        }
        Obstacle o;
        o.kind = ObstacleKind::Cylinder;
        o.center = Eigen::Vector3d(cx, cy, 0.5 * (z0 + z1));
        o.half = Eigen::Vector3d(radius, 0.0, 0.5 * (z1 - z0));
        return o;
    }

    Obstacle makeHalfSpace(const Eigen::Vector3d &normal, double offset)
    {
        const double n = normal.norm();
        if (n < 1e-9)
        {
            throw ValidationError("half-space normal must be nonzero");
        }
        Obstacle o;
        o.kind = ObstacleKind::HalfSpace;
        o.normal = normal / n;
        o.offset = offset / n;
        return o;
    }

    double ObstacleScene::sdf(const Eigen::Vector3d &p) const
    {
        double d = std::numeric_limits<double>::infinity();
        for (const auto &o : obstacles)
        {
            d = std::min(d, o.sdf(p));
        }
        return d;
    }

    bool ObstacleScene::contains(const Eigen::Vector3d &p) const
    {
        for (const auto &o : obstacles)
        {
            if (o.contains(p))
            {
                return true;
            }
        }
        return false;
    }

    SdfGrid SdfGrid::build(const ObstacleScene &scene, double voxel, double far_clamp,
                           bool parallel)
    {
        if (voxel < 0.05 || voxel > 0.5)
        {
            throw ValidationError("voxel size must lie in [0.05, 0.5] m");
        }
        const Eigen::Vector3d span = scene.bound_max - scene.bound_min;
        if ((span.array() <= 0.0).any())
        {
            throw ValidationError("scene bounds are empty");
        }
        const double vol = span.prod();
        if (vol / (voxel * voxel * voxel) > 5e7)
        {
            const double suggested = std::cbrt(vol / 5e7);
            throw ValidationError("sdf grid over memory budget; use voxel >= " +
                                  std::to_string(suggested) + " m");
        }

        SdfGrid g;
        g.origin_ = scene.bound_min;
        g.voxel_ = voxel;
        g.far_ = far_clamp;
        g.nx_ = std::max(2, static_cast<int>(std::ceil(span.x() / voxel)));
        g.ny_ = std::max(2, static_cast<int>(std::ceil(span.y() / voxel)));
        g.nz_ = std::max(2, static_cast<int>(std::ceil(span.z() / voxel)));
        g.values_.resize(static_cast<size_t>(g.nx_) * g.ny_ * g.nz_);

        const long total = static_cast<long>(g.values_.size());
#pragma omp parallel for schedule(static) if (parallel)
        for (long idx = 0; idx < total; ++idx)
        {
            const int i = static_cast<int>(idx % g.nx_);
            const int j = static_cast<int>((idx / g.nx_) % g.ny_);
            const int k = static_cast<int>(idx / (static_cast<long>(g.nx_) * g.ny_));
            const double d = scene.sdf(g.nodePos(i, j, k));
            g.values_[idx] = static_cast<float>(std::clamp(d, -far_clamp, far_clamp));
        }
        return g;
    }

    SdfGrid SdfGrid::buildReference(const ObstacleScene &scene, double voxel,
                                    double far_clamp)
    {
        return build(scene, voxel, far_clamp, false);
    }

    SdfSample SdfGrid::query(const Eigen::Vector3d &p) const
    {
        SdfSample s;
        Eigen::Vector3d u = (p - origin_) / voxel_ - Eigen::Vector3d::Constant(0.5);
        const int n[3] = {nx_, ny_, nz_};
        int c[3];
        double f[3];
        for (int a = 0; a < 3; ++a)
        {
            double ua = u(a);
            if (ua < 0.0)
            {
                ua = 0.0;
                s.clamped = true;
            }
            if (ua > n[a] - 1.0)
            {
                ua = n[a] - 1.0;
                s.clamped = true;
            }
            c[a] = std::min(static_cast<int>(ua), n[a] - 2);
            f[a] = ua - c[a];
        }
        double v000 = at(c[0], c[1], c[2]), v100 = at(c[0] + 1, c[1], c[2]);
        double v010 = at(c[0], c[1] + 1, c[2]), v110 = at(c[0] + 1, c[1] + 1, c[2]);
        double v001 = at(c[0], c[1], c[2] + 1), v101 = at(c[0] + 1, c[1], c[2] + 1);
        double v011 = at(c[0], c[1] + 1, c[2] + 1), v111 = at(c[0] + 1, c[1] + 1, c[2] + 1);

        const double cx00 = v000 + (v100 - v000) * f[0];
        const double cx10 = v010 + (v110 - v010) * f[0];
        const double cx01 = v001 + (v101 - v001) * f[0];
        const double cx11 = v011 + (v111 - v011) * f[0];
        const double cy0 = cx00 + (cx10 - cx00) * f[1];
        const double cy1 = cx01 + (cx11 - cx01) * f[1];
        s.value = cy0 + (cy1 - cy0) * f[2];

        const double gx0 = (v100 - v000) * (1 - f[1]) + (v110 - v010) * f[1];
        const double gx1 = (v101 - v001) * (1 - f[1]) + (v111 - v011) * f[1];
        s.grad.x() = (gx0 * (1 - f[2]) + gx1 * f[2]) / voxel_;
        s.grad.y() = ((cx10 - cx00) * (1 - f[2]) + (cx11 - cx01) * f[2]) / voxel_;
        s.grad.z() = (cy1 - cy0) / voxel_;
        return s;
    }

    void SdfGrid::save(const std::string &path, uint64_t scene_hash) const
    {
        BinWriter w(path);
        w.bytes("SDFC1", 5);
        w.u64(scene_hash);
        for (int a = 0; a < 3; ++a)
        {
            w.f64(origin_(a));
        }
        w.f64(voxel_);
        w.f64(far_);
        w.u32(static_cast<uint32_t>(nx_));
        w.u32(static_cast<uint32_t>(ny_));
        w.u32(static_cast<uint32_t>(nz_));
        w.f32vec(values_);
    }

    SdfGrid SdfGrid::load(const std::string &path, uint64_t expect_hash)
    {
        BinReader r(path);
        char magic[5];
        r.bytes(magic, 5);
        if (std::string(magic, 5) != "SDFC1")
        {
            throw IoError("not an sdf cache file: " + path);
        }
        if (r.u64() != expect_hash)
        {
            throw IoError("sdf cache hash mismatch: " + path);
        }
        SdfGrid g;
        for (int a = 0; a < 3; ++a)
        {
            g.origin_(a) = r.f64();
        }
        g.voxel_ = r.f64();
        g.far_ = r.f64();
        g.nx_ = static_cast<int>(r.u32());
        g.ny_ = static_cast<int>(r.u32());
        g.nz_ = static_cast<int>(r.u32());
        g.values_ = r.f32vec();
        if (g.values_.size() != static_cast<size_t>(g.nx_) * g.ny_ * g.nz_)
        {
            throw IoError("sdf cache is truncated: " + path);
        }
        return g;
    }

    ScenarioKind scenarioKindFromName(const std::string &name)
    {
        if (name == "forest")
        {
            return ScenarioKind::Forest;
        }
        if (name == "workshop")
        {
            return ScenarioKind::Workshop;
        }
        if (name == "factory")
        {
            return ScenarioKind::Factory;
        }
        throw ValidationError("unknown scenario kind: " + name);
    }

    const char *scenarioKindName(ScenarioKind kind)
    {
        switch (kind)
        {
        case ScenarioKind::Forest:
            return "forest";
        case ScenarioKind::Workshop:
            return "workshop";
        case ScenarioKind::Factory:
            return "factory";
        }
        return "forest";
    }

    namespace
    {

        // forward waypoint walk with clearance and spacing guarantees
        std::vector<Eigen::Vector3d> emitTargets(const ObstacleScene &scene, Rng &rng,
                                                 const ScenarioParams &params,
                                                 double z_lo, double z_hi)
        {
            std::vector<Eigen::Vector3d> targets;
            const Eigen::Vector3d lo = scene.bound_min, hi = scene.bound_max;
            Eigen::Vector3d cur;
            bool seeded = false;
            for (int attempt = 0; attempt < params.retries && !seeded; ++attempt)
            {
                cur = Eigen::Vector3d(lo.x() + 1.5 + rng.uniform(0.0, 1.5),
                                      rng.uniform(lo.y() + 2.0, hi.y() - 2.0),
                                      rng.uniform(z_lo, z_hi));
                seeded = scene.sdf(cur) >= params.d_margin;
            }
            if (!seeded)
            {
                throw GenerationError("no collision-free seed waypoint in scene " + scene.name);
            }
            targets.push_back(cur);
            while (static_cast<int>(targets.size()) < params.n_targets)
            {
                bool placed = false;
                for (int attempt = 0; attempt < params.retries && !placed; ++attempt)
                {
                    const double dist = rng.uniform(params.spacing_min, params.spacing_max);
                    const double yaw = rng.uniform(-0.9, 0.9);
                    const Eigen::Vector3d dir(std::cos(yaw), std::sin(yaw), 0);
                    Eigen::Vector3d cand = cur + dist * dir;
                    cand.z() = std::clamp(cand.z() + rng.uniform(-0.8, 0.8), z_lo, z_hi);
                    if (cand.x() > hi.x() - 1.5 || cand.y() < lo.y() + 1.5 ||
                        cand.y() > hi.y() - 1.5)
                    {
                        continue;
                    }
                    if (scene.sdf(cand) < params.d_margin)
                    {
                        continue;
                    }
                    cur = cand;
                    targets.push_back(cur);
                    placed = true;
                }
                if (!placed)
                {
                    throw GenerationError("could not place " + std::to_string(params.n_targets) +
                                          " collision-free waypoints in scene " + scene.name);
                }
            }
            return targets;
        }

        Scenario makeForest(uint64_t seed, const ScenarioParams &params)
        {
            Scenario sc;
            sc.scene.name = "forest";
            sc.scene.bound_min = Eigen::Vector3d(-5, -12, -4);
            sc.scene.bound_max = Eigen::Vector3d(30, 12, 6);
            Rng rng(seed);
            // Poisson-style rejection sampling of trunk centers
            const int want = static_cast<int>(std::llround(52 * params.density));
            const double min_sep = 2.4;
            std::vector<Eigen::Vector2d> centers;
            int attempts = 0;
            while (static_cast<int>(centers.size()) < want && attempts < want * 80)
            {
                ++attempts;
                const Eigen::Vector2d c(rng.uniform(-2.0, 29.0), rng.uniform(-11.0, 11.0));
                bool ok = true;
                for (const auto &e : centers)
                {
                    if ((c - e).norm() < min_sep)
                    {
                        ok = false;
                        break;
                    }
                }
                if (!ok)
                {
                    continue;
                }
                centers.push_back(c);
                const double r = rng.uniform(0.25, 0.55);
                sc.scene.obstacles.push_back(makeCylinder(c.x(), c.y(), -4.0, 6.0, r));
            }
            sc.targets = emitTargets(sc.scene, rng, params, -0.5, 1.5);
            return sc;
        }

        void addPartition(ObstacleScene &scene, Rng &rng, double x, double y_lo,
                          double y_hi, double z_lo, double z_hi)
        {
            // one or two door gaps of width >= 1.2 m
            const int n_gaps = 1 + static_cast<int>(rng.index(2));
            std::vector<std::pair<double, double>> gaps;
            for (int gi = 0; gi < n_gaps; ++gi)
            {
                const double w = rng.uniform(1.3, 2.0);
                const double c = rng.uniform(y_lo + 1.2 + 0.5 * w, y_hi - 1.2 - 0.5 * w);
                gaps.push_back({c - 0.5 * w, c + 0.5 * w});
            }
            std::sort(gaps.begin(), gaps.end());
            // merge overlaps so wall segments stay disjoint
            std::vector<std::pair<double, double>> merged;
            for (const auto &g : gaps)
            {
                if (!merged.empty() && g.first <= merged.back().second)
                {
                    merged.back().second = std::max(merged.back().second, g.second);
                }
                else
                {
                    merged.push_back(g);
                }
            }
            const double zc = 0.5 * (z_lo + z_hi), zh = 0.5 * (z_hi - z_lo);
            double y = y_lo;
            for (const auto &g : merged)
            {
                if (g.first - y > 0.05)
                {
                    scene.obstacles.push_back(
                        makeBox(Eigen::Vector3d(x, 0.5 * (y + g.first), zc),
                                Eigen::Vector3d(0.15, 0.5 * (g.first - y), zh)));
                }
                y = g.second;
            }
            if (y_hi - y > 0.05)
            {
                scene.obstacles.push_back(
                    makeBox(Eigen::Vector3d(x, 0.5 * (y + y_hi), zc),
                            Eigen::Vector3d(0.15, 0.5 * (y_hi - y), zh)));
            }
        }

        Scenario makeWorkshop(uint64_t seed, const ScenarioParams &params)
        {
            Scenario sc;
            sc.scene.name = "workshop";
            sc.scene.bound_min = Eigen::Vector3d(-2, -6, -3);
            sc.scene.bound_max = Eigen::Vector3d(26, 6, 5);
            Rng rng(seed);
            const double z_lo = -3, z_hi = 5, zc = 1.0, zh = 4.0;
            // perimeter walls, no floor or ceiling so vertical maneuvers fit
            sc.scene.obstacles.push_back(
                makeBox(Eigen::Vector3d(-1.9, 0, zc), Eigen::Vector3d(0.15, 6, zh)));
            sc.scene.obstacles.push_back(
                makeBox(Eigen::Vector3d(25.9, 0, zc), Eigen::Vector3d(0.15, 6, zh)));
            sc.scene.obstacles.push_back(
                makeBox(Eigen::Vector3d(12, -5.9, zc), Eigen::Vector3d(14, 0.15, zh)));
            sc.scene.obstacles.push_back(
                makeBox(Eigen::Vector3d(12, 5.9, zc), Eigen::Vector3d(14, 0.15, zh)));
            // interior partitions with door gaps
            const int n_parts = std::max(2, static_cast<int>(std::llround(3 * params.density)));
            for (int pi = 0; pi < n_parts; ++pi)
            {
                const double x = 2.0 + (pi + 1) * 22.0 / (n_parts + 1) + rng.uniform(-1.0, 1.0);
                addPartition(sc.scene, rng, x, -6.0, 6.0, z_lo, z_hi);
            }
            ScenarioParams p2 = params;
            p2.spacing_min = std::min(params.spacing_min, 4.0);
            sc.targets = emitTargets(sc.scene, rng, p2, -0.5, 1.5);
            return sc;
        }

        Scenario makeFactory(uint64_t seed, const ScenarioParams &params)
        {
            Scenario sc;
            sc.scene.name = "factory";
            sc.scene.bound_min = Eigen::Vector3d(-5, -10, -4);
            sc.scene.bound_max = Eigen::Vector3d(25, 10, 6);
            Rng rng(seed);
            sc.scene.obstacles.push_back(makeHalfSpace(Eigen::Vector3d(0, 0, 1), -4.0));
            const int n_tanks = static_cast<int>(std::llround(8 * params.density));
            const int n_crates = static_cast<int>(std::llround(10 * params.density));
            for (int i = 0; i < n_tanks; ++i)
            {
                const double r = rng.uniform(0.4, 0.9);
                const double x = rng.uniform(-2.0, 24.0);
                const double y = rng.uniform(-9.0, 9.0);
                sc.scene.obstacles.push_back(makeCylinder(x, y, -4.0, rng.uniform(2.0, 6.0), r));
            }
            for (int i = 0; i < n_crates; ++i)
            {
                const Eigen::Vector3d half(rng.uniform(0.5, 1.5), rng.uniform(0.5, 1.5),
                                           rng.uniform(0.5, 2.0));
                const Eigen::Vector3d center(rng.uniform(-2.0, 24.0), rng.uniform(-9.0, 9.0),
                                             -4.0 + half.z());
                sc.scene.obstacles.push_back(makeBox(center, half));
            }
            sc.targets = emitTargets(sc.scene, rng, params, -0.5, 1.5);
            return sc;
        }

    } // namespace

    Scenario makeScenario(ScenarioKind kind, uint64_t seed, const ScenarioParams &params)
    {
        switch (kind)
        {
        case ScenarioKind::Forest:
            return makeForest(seed, params);
        case ScenarioKind::Workshop:
            return makeWorkshop(seed, params);
        case ScenarioKind::Factory:
            return makeFactory(seed, params);
        }
        throw ValidationError("unknown scenario kind");
    }

    namespace
    {
        nlohmann::json vecJson(const Eigen::Vector3d &v)
        {
            return nlohmann::json::array({v.x(), v.y(), v.z()});
        }

        Eigen::Vector3d vecFromJson(const nlohmann::json &j)
        {
            if (!j.is_array() || j.size() != 3)
            {
                throw ConfigError("expected a 3-vector");
            }
            return Eigen::Vector3d(j[0].get<double>(), j[1].get<double>(), j[2].get<double>());
        }
    }

    std::string scenarioToJson(const Scenario &sc)
    {
        nlohmann::json j;
        j["name"] = sc.scene.name;
        j["bounds"]["min"] = vecJson(sc.scene.bound_min);
        j["bounds"]["max"] = vecJson(sc.scene.bound_max);
        nlohmann::json obs = nlohmann::json::array();
        for (const auto &o : sc.scene.obstacles)
        {
            nlohmann::json rec;
            switch (o.kind)
            {
            case ObstacleKind::Box:
                rec["type"] = "box";
                rec["center"] = vecJson(o.center);
                rec["half"] = vecJson(o.half);
                break;
            case ObstacleKind::Cylinder:
                rec["type"] = "cylinder";
                rec["center"] = nlohmann::json::array({o.center.x(), o.center.y()});
                rec["z"] = nlohmann::json::array(
                    {o.center.z() - o.half.z(), o.center.z() + o.half.z()});
                rec["radius"] = o.half.x();
                break;
            case ObstacleKind::HalfSpace:
                rec["type"] = "halfspace";
                rec["normal"] = vecJson(o.normal);
                rec["offset"] = o.offset;
                break;
            }
            obs.push_back(rec);
        }
        j["obstacles"] = obs;
        nlohmann::json tg = nlohmann::json::array();
        for (const auto &t : sc.targets)
        {
            tg.push_back(vecJson(t));
        }
        j["targets"] = tg;
        return j.dump(2);
    }

    Scenario scenarioFromJson(const std::string &text)
    {
        nlohmann::json j;
        try
        {
            j = nlohmann::json::parse(text);
        }
        catch (const nlohmann::json::exception &e)
        {
            throw ConfigError(std::string("scene json parse error: ") + e.what());
        }
        Scenario sc;
        try
        {
            sc.scene.name = j.at("name").get<std::string>();
            sc.scene.bound_min = vecFromJson(j.at("bounds").at("min"));
            sc.scene.bound_max = vecFromJson(j.at("bounds").at("max"));
            for (const auto &rec : j.at("obstacles"))
            {
                const std::string type = rec.at("type").get<std::string>();
                if (type == "box")
                {
                    sc.scene.obstacles.push_back(
                        makeBox(vecFromJson(rec.at("center")), vecFromJson(rec.at("half"))));
                }
                else if (type == "cylinder")
                {
                    const auto &c = rec.at("center");
                    const auto &z = rec.at("z");
                    sc.scene.obstacles.push_back(
                        makeCylinder(c.at(0).get<double>(), c.at(1).get<double>(),
                                     z.at(0).get<double>(), z.at(1).get<double>(),
                                     rec.at("radius").get<double>()));
                }
                else if (type == "halfspace")
                {
                    sc.scene.obstacles.push_back(
                        makeHalfSpace(vecFromJson(rec.at("normal")),
                                      rec.at("offset").get<double>()));
                }
                else
                {
                    throw ConfigError("unknown obstacle type: " + type);
                }
            }
            if (j.contains("targets"))
            {
                for (const auto &t : j.at("targets"))
                {
                    sc.targets.push_back(vecFromJson(t));
                }
            }
        }
        catch (const nlohmann::json::exception &e)
        {
            throw ConfigError(std::string("scene json missing field: ") + e.what());
        }
        return sc;
    }

    void saveScenario(const Scenario &sc, const std::string &path)
    {
        std::ofstream out(path);
        if (!out)
        {
            throw IoError("cannot write " + path);
        }
        out << scenarioToJson(sc) << "\n";
    }

    Scenario loadScenario(const std::string &path)
    {
        std::ifstream in(path);
        if (!in)
        {
            throw IoError("cannot read " + path);
        }
        std::string text((std::istreambuf_iterator<char>(in)),
                         std::istreambuf_iterator<char>());
        return scenarioFromJson(text);
    }

    uint64_t scenarioHash(const Scenario &sc, double voxel)
    {
        Fnv1a h;
        h.add(scenarioToJson(sc));
        h.addF64(voxel);
        return h.value();
    }

    SdfGrid loadOrBuildSdf(const Scenario &sc, double voxel,
                           const std::string &cache_path, double far_clamp)
    {
        const uint64_t hash = scenarioHash(sc, voxel);
        if (!cache_path.empty() && std::filesystem::exists(cache_path))
        {
            try
            {
                return SdfGrid::load(cache_path, hash);
            }
            catch (const IoError &)
            {
                // stale cache, rebuild below
            }
        }
        SdfGrid g = SdfGrid::build(sc.scene, voxel, far_clamp);
        if (!cache_path.empty())
        {
            g.save(cache_path, hash);
        }
        return g;
    }

} // namespace aero
