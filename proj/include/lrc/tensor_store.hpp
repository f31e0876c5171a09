// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "lrc/matrix.hpp"

namespace lrc {

enum class Dtype {
    f32,
    f64,
};

const char* dtype_name(Dtype d);
Dtype dtype_from_name(const std::string& name);
std::size_t dtype_size(Dtype d);

/// accumulates named tensors and writes a manifest plus a contiguous
/// little-endian row-major blob next to it (same stem, .bin extension)
class TensorStoreWriter {
public:
    void add(const std::string& name, const Matrix& value, Dtype dtype = Dtype::f64);
    void add_scalar(const std::string& name, double value);
    void write(const std::string& manifest_path) const;

private:
    struct Pending {
        std::string name;
        Dtype dtype;
        std::size_t rows;
        std::size_t cols;
        std::vector<double> data;
    };
    std::vector<Pending> entries_;
    std::set<std::string> names_;
};

/// read-only view of a written store; f32 entries widen to double on load
class TensorStore {
public:
    static TensorStore load(const std::string& manifest_path);

    bool contains(const std::string& name) const;
    const Matrix& matrix(const std::string& name) const;
    double scalar(const std::string& name) const;
    Dtype dtype(const std::string& name) const;
    const std::vector<std::string>& names() const { return order_; }

private:
    std::vector<std::string> order_;
    std::map<std::string, Matrix> tensors_;
    std::map<std::string, Dtype> dtypes_;
};

} // namespace lrc
