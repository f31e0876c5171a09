// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>

#include "lrc/matrix.hpp"
#include "lrc/rng.hpp"

namespace lrc::test {

inline double rel_err(const Matrix& a, const Matrix& ref) {
    const double denom = frobenius(ref);
    return denom > 0.0 ? frobenius(a - ref) / denom : frobenius(a);
}

inline double rel_err(double a, double ref) {
    const double denom = std::fabs(ref);
    return denom > 0.0 ? std::fabs(a - ref) / denom : std::fabs(a);
}

inline double max_abs_diff(const Matrix& a, const Matrix& b) { return max_abs(a - b); }

/// worst deviation of m^T m from the identity
inline double orthonormality_defect(const Matrix& m) {
    const Matrix gram = crossprod(m);
    return max_abs(gram - Matrix::identity(gram.rows()));
}

} // namespace lrc::test
