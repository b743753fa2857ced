#pragma once

#include <Eigen/Core>
#include <Eigen/Cholesky>
#include <cmath>
#include <stdexcept>
#include <string>

namespace pclnet {

// Dense 64-bit real matrices, row-major so serialized blobs match memory order.
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vec = Eigen::VectorXd;

struct ShapeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct StateError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline void require(bool cond, const std::string& msg) {
    if (!cond) throw ShapeError(msg);
}

inline bool all_finite(const Mat& m) {
    return m.allFinite();
}

inline void check_finite(const Mat& m, const std::string& where) {
    if (!m.allFinite()) throw NumericError("non-finite values in " + where);
}

} // namespace pclnet
