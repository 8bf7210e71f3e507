#pragma once

#include <stdexcept>
#include <string>

namespace catefusion {

struct DimensionMismatch : std::invalid_argument {
    explicit DimensionMismatch(const std::string& what) : std::invalid_argument(what) {}
};

struct EmptyFold : std::runtime_error {
    explicit EmptyFold(const std::string& what) : std::runtime_error(what) {}
};

struct RankDeficient : std::runtime_error {
    explicit RankDeficient(const std::string& what) : std::runtime_error(what) {}
};

struct BlockUnavailable : std::runtime_error {
    explicit BlockUnavailable(const std::string& what) : std::runtime_error(what) {}
};

struct OverlapViolation : std::runtime_error {
    explicit OverlapViolation(const std::string& what) : std::runtime_error(what) {}
};

struct ArmTooSmall : std::runtime_error {
    explicit ArmTooSmall(const std::string& what) : std::runtime_error(what) {}
};

struct OsArmMissing : std::runtime_error {
    explicit OsArmMissing(const std::string& what) : std::runtime_error(what) {}
};

struct ImputationUnavailable : std::runtime_error {
    explicit ImputationUnavailable(const std::string& what) : std::runtime_error(what) {}
};

struct SingularCovariance : std::runtime_error {
    explicit SingularCovariance(const std::string& what) : std::runtime_error(what) {}
};

struct InfeasiblePartition : std::invalid_argument {
    explicit InfeasiblePartition(const std::string& what) : std::invalid_argument(what) {}
};

struct CalibrationFailure : std::runtime_error {
    explicit CalibrationFailure(const std::string& what) : std::runtime_error(what) {}
};

struct ConfigParse : std::runtime_error {
    explicit ConfigParse(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace catefusion
