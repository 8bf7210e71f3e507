#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

namespace catefusion {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Column-wise concatenation [a | b]; either side may have zero columns.
inline Matrix hcat(const Matrix& a, const Matrix& b) {
    if (a.cols() == 0) return b;
    if (b.cols() == 0) return a;
    Matrix out(a.rows(), a.cols() + b.cols());
    out.leftCols(a.cols()) = a;
    out.rightCols(b.cols()) = b;
    return out;
}

/// FNV-1a over the raw bit patterns, used for data digests and
/// byte-identity checks in tests. Not a cryptographic hash.
inline std::uint64_t hash_bytes(const void* data, std::size_t len, std::uint64_t h = 1469598103934665603ull) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 1099511628211ull;
    }
    return h;
}

inline std::uint64_t hash_matrix(const Matrix& m, std::uint64_t h = 1469598103934665603ull) {
    h = hash_bytes(m.data(), sizeof(double) * static_cast<std::size_t>(m.size()), h);
    std::int64_t dims[2] = {m.rows(), m.cols()};
    return hash_bytes(dims, sizeof(dims), h);
}

inline std::uint64_t hash_vector(const Vector& v, std::uint64_t h = 1469598103934665603ull) {
    return hash_bytes(v.data(), sizeof(double) * static_cast<std::size_t>(v.size()), h);
}

std::string format_double(double x);  // shortest round-trip decimal form

}  // namespace catefusion
