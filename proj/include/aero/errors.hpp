#ifndef AERO_ERRORS_HPP
#define AERO_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace aero
{

    struct Error : public std::runtime_error
    {
        explicit Error(const std::string &msg) : std::runtime_error(msg) {}
    };

    // Rotation inputs that cannot be orthonormalized (parallel or near-zero columns).
    struct DegenerateRotationError : public Error
    {
        using Error::Error;
    };

    // Inputs that violate a documented precondition (non-rotation matrix, bad shapes, ...).
    struct ValidationError : public Error
    {
        using Error::Error;
    };

    // Thrust norm below the singularity threshold; body rates are undefined there.
    struct FlatnessSingularityError : public Error
    {
        explicit FlatnessSingularityError(const std::string &msg, double t = -1.0)
            : Error(msg), time(t) {}
        double time;
    };

    // Maneuver template cannot reach the requested geometry.
    struct GenerationError : public Error
    {
        using Error::Error;
    };

    struct ConfigError : public Error
    {
        using Error::Error;
    };

    // Loss exploded past the abort threshold during training.
    struct TrainDivergedError : public Error
    {
        using Error::Error;
    };

    struct IoError : public Error
    {
        using Error::Error;
    };

    // A whole sampling batch collided; carries the observed batch statistics.
    struct BatchExhaustedError : public Error
    {
        BatchExhaustedError(const std::string &msg, int batch, int freeCount)
            : Error(msg), batchSize(batch), collisionFree(freeCount) {}
        int batchSize;
        int collisionFree;
    };

    // Corridor construction left a segment frame outside its polyhedron.
    struct CorridorError : public Error
    {
        CorridorError(const std::string &msg, int seg) : Error(msg), segment(seg) {}
        int segment;
    };

} // namespace aero

#endif
