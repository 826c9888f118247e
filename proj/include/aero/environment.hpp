#ifndef AERO_ENVIRONMENT_HPP
#define AERO_ENVIRONMENT_HPP

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "aero/rng.hpp"

namespace aero
{

    enum class ObstacleKind
    {
        Box,
        Cylinder,
        HalfSpace
    };

    // Box: center + half extents. Cylinder: vertical, center.xy axis, half.x
    // radius, half.z half height. HalfSpace: occupied where normal.x - offset <= 0.
    struct Obstacle
    {
        ObstacleKind kind = ObstacleKind::Box;
        Eigen::Vector3d center = Eigen::Vector3d::Zero();
        Eigen::Vector3d half = Eigen::Vector3d::Ones();
        Eigen::Vector3d normal = Eigen::Vector3d::UnitZ();
        double offset = 0.0;

        double sdf(const Eigen::Vector3d &p) const;
        bool contains(const Eigen::Vector3d &p) const { return sdf(p) <= 0.0; }
    };

    Obstacle makeBox(const Eigen::Vector3d &center, const Eigen::Vector3d &half);
    Obstacle makeCylinder(double cx, double cy, double z0, double z1, double radius);
    Obstacle makeHalfSpace(const Eigen::Vector3d &normal, double offset);

    struct ObstacleScene
    {
        std::string name = "empty";
        Eigen::Vector3d bound_min = Eigen::Vector3d(-10, -10, -5);
        Eigen::Vector3d bound_max = Eigen::Vector3d(10, 10, 5);
        std::vector<Obstacle> obstacles;

        double sdf(const Eigen::Vector3d &p) const;
        bool contains(const Eigen::Vector3d &p) const;
    };

    struct SdfSample
    {
        double value = 0.0;
        Eigen::Vector3d grad = Eigen::Vector3d::Zero();
        bool clamped = false;
    };

    // Signed distances sampled at voxel centers, trilinear in between.
    class SdfGrid
    {
    public:
        static SdfGrid build(const ObstacleScene &scene, double voxel,
                             double far_clamp = 5.0, bool parallel = true);
        static SdfGrid buildReference(const ObstacleScene &scene, double voxel,
                                      double far_clamp = 5.0);

        SdfSample query(const Eigen::Vector3d &p) const;

        double at(int i, int j, int k) const
        {
            return static_cast<double>(values_[index(i, j, k)]);
        }
        Eigen::Vector3d nodePos(int i, int j, int k) const
        {
            return origin_ + voxel_ * Eigen::Vector3d(i + 0.5, j + 0.5, k + 0.5);
        }
        int nx() const { return nx_; }
        int ny() const { return ny_; }
        int nz() const { return nz_; }
        double voxel() const { return voxel_; }
        double farClamp() const { return far_; }
        const Eigen::Vector3d &origin() const { return origin_; }
        const std::vector<float> &values() const { return values_; }

        void save(const std::string &path, uint64_t scene_hash) const;
        static SdfGrid load(const std::string &path, uint64_t expect_hash);

    private:
        size_t index(int i, int j, int k) const
        {
            return (static_cast<size_t>(k) * ny_ + j) * nx_ + i;
        }
        Eigen::Vector3d origin_ = Eigen::Vector3d::Zero();
        double voxel_ = 0.25;
        double far_ = 5.0;
        int nx_ = 0, ny_ = 0, nz_ = 0;
        std::vector<float> values_;
    };

    struct ScenarioParams
    {
        double density = 1.0;    // obstacle density multiplier
        int n_targets = 6;       // emitted waypoints
        double d_margin = 0.6;   // clearance required at targets
        double spacing_min = 4.0;
        double spacing_max = 7.0;
        int retries = 400;
    };

    struct Scenario
    {
        ObstacleScene scene;
        std::vector<Eigen::Vector3d> targets;
    };

    enum class ScenarioKind
    {
        Forest,
        Workshop,
        Factory
    };

    ScenarioKind scenarioKindFromName(const std::string &name);
    const char *scenarioKindName(ScenarioKind kind);

    Scenario makeScenario(ScenarioKind kind, uint64_t seed,
                          const ScenarioParams &params = ScenarioParams());

    std::string scenarioToJson(const Scenario &sc);
    Scenario scenarioFromJson(const std::string &text);
    void saveScenario(const Scenario &sc, const std::string &path);
    Scenario loadScenario(const std::string &path);

    // content hash over the canonical scene JSON plus the voxel size
    uint64_t scenarioHash(const Scenario &sc, double voxel);

    // loads the cached grid when the hash matches, otherwise builds and caches
    SdfGrid loadOrBuildSdf(const Scenario &sc, double voxel,
                           const std::string &cache_path, double far_clamp = 5.0);

} // namespace aero

#endif
