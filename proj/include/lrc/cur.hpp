// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <vector>

#include "lrc/matrix.hpp"

namespace lrc {

/// indices of the k largest scores, ascending on output; ties keep the
/// lowest index
std::vector<std::size_t> top_k_indices(const std::vector<double>& scores, std::size_t k);

/// pair scores indexed by pair p cover elements (2p, 2p+1); returns the
/// element indices of the k_pairs best pairs, ascending
std::vector<std::size_t> top_pair_indices(const std::vector<double>& pair_scores,
                                          std::size_t k_pairs);

/// || L U R - L R ||_F^2 for the column/row selection U, optionally with
/// per-index scaling u_values (same length as selected)
double selection_objective(const Matrix& l, const Matrix& r,
                           const std::vector<std::size_t>& selected,
                           const std::vector<double>* u_values = nullptr);

} // namespace lrc
