// SPDX-License-Identifier: Apache-2.0
#include "lrc/cur.hpp"

#include <algorithm>
#include <numeric>
#include <string>

#include "lrc/errors.hpp"

namespace lrc {

std::vector<std::size_t> top_k_indices(const std::vector<double>& scores, std::size_t k) {
    if (k > scores.size())
        throw ArgumentError("top_k_indices: k " + std::to_string(k) + " > " +
                            std::to_string(scores.size()));
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    // stable sort on descending score keeps ties at the lowest index
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    order.resize(k);
    std::sort(order.begin(), order.end());
    return order;
}

std::vector<std::size_t> top_pair_indices(const std::vector<double>& pair_scores,
                                          std::size_t k_pairs) {
    const auto pairs = top_k_indices(pair_scores, k_pairs);
    std::vector<std::size_t> elements;
    elements.reserve(2 * k_pairs);
    for (std::size_t p : pairs) {
        elements.push_back(2 * p);
        elements.push_back(2 * p + 1);
    }
    return elements;
}

double selection_objective(const Matrix& l, const Matrix& r,
                           const std::vector<std::size_t>& selected,
                           const std::vector<double>* u_values) {
    if (l.cols() != r.rows()) throw ArgumentError("selection_objective: inner dim mismatch");
    if (u_values != nullptr && u_values->size() != selected.size())
        throw ArgumentError("selection_objective: scaling length mismatch");
    std::vector<double> weight(l.cols(), 0.0);
    for (std::size_t i = 0; i < selected.size(); ++i) {
        if (selected[i] >= l.cols())
            throw ArgumentError("selection_objective: index out of range");
        weight[selected[i]] = u_values != nullptr ? (*u_values)[i] : 1.0;
    }
    double total = 0.0;
    // residual row by row: sum_i (weight_i - 1) L_{:,i} R_{i,:}
    for (std::size_t a = 0; a < l.rows(); ++a) {
        std::vector<double> res(r.cols(), 0.0);
        for (std::size_t i = 0; i < l.cols(); ++i) {
            const double c = (weight[i] - 1.0) * l(a, i);
            if (c == 0.0) continue;
            for (std::size_t b = 0; b < r.cols(); ++b) res[b] += c * r(i, b);
        }
        for (double v : res) total += v * v;
    }
    return total;
}

} // namespace lrc
