#ifndef AERO_DATASET_HPP
#define AERO_DATASET_HPP

#include <Eigen/Dense>
#include <functional>
#include <string>
#include <vector>

#include "aero/kinematics.hpp"
#include "aero/rng.hpp"

namespace aero
{

    constexpr int kFramesPerPrimitive = 60; // N_a
    constexpr int kHistoryLen = 5;          // N_h

    enum class ActionLabel
    {
        PowerLoop = 0,
        BarrelRoll = 1,
        SplitS = 2,
        ImmelmannTurn = 3,
        WallRide = 4,
        None = 5
    };

    const char *actionName(ActionLabel a);
    ActionLabel actionFromName(const std::string &name);

    struct Primitive
    {
        std::vector<StateFrame> frames;  // N_a entries
        std::vector<StateFrame> history; // N_h entries preceding frames[0]
        Eigen::Vector3d target = Eigen::Vector3d::Zero();
        ActionLabel action = ActionLabel::None;
        int active_len = kFramesPerPrimitive;
    };

    struct FlatSample
    {
        Eigen::Vector3d p = Eigen::Vector3d::Zero();
        Eigen::Vector3d v = Eigen::Vector3d::Zero();
        Eigen::Vector3d a = Eigen::Vector3d::Zero();
        Eigen::Vector3d j = Eigen::Vector3d::Zero();
    };

    // Piecewise analytic curve; the first headDuration seconds are the prior
    // segment that becomes the history window.
    class ManeuverCurve
    {
    public:
        void add(double dur, std::function<FlatSample(double)> f);
        double duration() const { return total_; }
        double headDuration() const { return head_; }
        void setHeadDuration(double h) { head_ = h; }

        FlatSample at(double t) const;
        StateFrame frameAt(double t, double g) const;

        // core maneuver window (template section between the transitions)
        double core_begin = 0.0;
        double core_end = 0.0;
        double heading = 0.0;

    private:
        struct Piece
        {
            double dur;
            std::function<FlatSample(double)> f;
        };
        std::vector<Piece> pieces_;
        double total_ = 0.0;
        double head_ = 0.5;
    };

    // Quintic with endpoint position/velocity/acceleration constraints.
    Eigen::Matrix<double, 3, 6> quinticCoeffs(const Eigen::Vector3d &p0,
                                              const Eigen::Vector3d &v0,
                                              const Eigen::Vector3d &a0,
                                              const Eigen::Vector3d &p1,
                                              const Eigen::Vector3d &v1,
                                              const Eigen::Vector3d &a1,
                                              double T);
    FlatSample evalQuintic(const Eigen::Matrix<double, 3, 6> &c, double t);

    // target is relative to the anchor (history[0] position, i.e. the state
    // headDuration seconds before entry.p along -entry.v).
    ManeuverCurve generateTemplate(ActionLabel action,
                                   const Eigen::Vector3d &target,
                                   const FlatState &entry,
                                   Rng &rng,
                                   const QuadParams &qp = QuadParams());

    // Samples frames at 0.1 s, anchors history[0] at the origin, pads with the
    // terminal state. The curve head becomes the history window.
    Primitive discretizePrimitive(const ManeuverCurve &curve,
                                  const Eigen::Vector3d &target,
                                  ActionLabel action,
                                  const QuadParams &qp = QuadParams());

    void validatePrimitive(const Primitive &prim, const QuadParams &qp = QuadParams());

    Primitive rotatePrimitiveZ(const Primitive &prim, double angle);

    struct DatasetSpec
    {
        Eigen::Vector3d bound_min{0.0, -6.0, -1.0};
        Eigen::Vector3d bound_max{8.0, 6.0, 1.0};
        double resolution = 1.0;
        std::vector<ActionLabel> actions{ActionLabel::PowerLoop, ActionLabel::BarrelRoll,
                                         ActionLabel::SplitS, ActionLabel::ImmelmannTurn,
                                         ActionLabel::WallRide};
        std::vector<double> augment_angles{0.5 * M_PI, M_PI, 1.5 * M_PI};
        uint64_t seed = 0;
        int retries = 16;
    };

    struct Dataset
    {
        int n_frames = kFramesPerPrimitive;
        int n_history = kHistoryLen;
        double dt = kFrameDt;
        std::vector<Primitive> prims;
    };

    std::vector<Eigen::Vector3d> targetGrid(const DatasetSpec &spec);
    Dataset buildDataset(const DatasetSpec &spec, const QuadParams &qp = QuadParams());
    void augmentZRotations(Dataset &ds, const std::vector<double> &angles);

    void saveDataset(const Dataset &ds, const std::string &path);
    Dataset loadDataset(const std::string &path);
    void exportDatasetJson(const Dataset &ds, const std::string &path);

    // per-axis position standard deviation over frames + history, for channel
    // normalization
    Eigen::Vector3d positionStd(const Dataset &ds);

    // total angle swept by the body z-axis over frames [begin, end)
    double zAxisSweep(const std::vector<StateFrame> &frames, int begin, int end);

} // namespace aero

#endif
