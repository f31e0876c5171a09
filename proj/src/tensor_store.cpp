// SPDX-License-Identifier: Apache-2.0
#include "lrc/tensor_store.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "lrc/errors.hpp"

static_assert(std::endian::native == std::endian::little,
              "blob layout is little-endian; big-endian hosts need byte swaps");

namespace lrc {

namespace {

constexpr const char* kFormat = "lrc-tensor-store";
constexpr int kVersion = 1;

std::string blob_path_for(const std::string& manifest_path, const std::string& blob_name) {
    const std::size_t slash = manifest_path.find_last_of('/');
    const std::string dir = slash == std::string::npos ? "" : manifest_path.substr(0, slash + 1);
    return dir + blob_name;
}

std::string blob_name_for(const std::string& manifest_path) {
    const std::size_t slash = manifest_path.find_last_of('/');
    std::string base = slash == std::string::npos ? manifest_path : manifest_path.substr(slash + 1);
    const std::size_t dot = base.find_last_of('.');
    if (dot != std::string::npos && dot > 0) base = base.substr(0, dot);
    return base + ".bin";
}

} // namespace

const char* dtype_name(Dtype d) { return d == Dtype::f32 ? "f32" : "f64"; }

Dtype dtype_from_name(const std::string& name) {
    if (name == "f32") return Dtype::f32;
    if (name == "f64") return Dtype::f64;
    throw IoError("unknown dtype '" + name + "'");
}

std::size_t dtype_size(Dtype d) { return d == Dtype::f32 ? 4 : 8; }

void TensorStoreWriter::add(const std::string& name, const Matrix& value, Dtype dtype) {
    if (name.empty()) throw IoError("tensor store entry with empty name");
    if (!names_.insert(name).second) throw IoError("duplicate tensor store entry '" + name + "'");
    entries_.push_back({name, dtype, value.rows(), value.cols(),
                        std::vector<double>(value.data(), value.data() + value.size())});
}

void TensorStoreWriter::add_scalar(const std::string& name, double value) {
    Matrix m(1, 1);
    m(0, 0) = value;
    add(name, m, Dtype::f64);
}

void TensorStoreWriter::write(const std::string& manifest_path) const {
    const std::string blob_name = blob_name_for(manifest_path);
    const std::string blob_path = blob_path_for(manifest_path, blob_name);

    std::ofstream blob(blob_path, std::ios::binary | std::ios::trunc);
    if (!blob) throw IoError("cannot open '" + blob_path + "' for writing");

    nlohmann::json manifest;
    manifest["format"] = kFormat;
    manifest["version"] = kVersion;
    manifest["blob"] = blob_name;
    nlohmann::json entries = nlohmann::json::array();

    std::uint64_t offset = 0;
    for (const auto& e : entries_) {
        const std::size_t esize = dtype_size(e.dtype);
        const std::uint64_t length = static_cast<std::uint64_t>(e.data.size()) * esize;
        if (e.dtype == Dtype::f64) {
            blob.write(reinterpret_cast<const char*>(e.data.data()),
                       static_cast<std::streamsize>(length));
        } else {
            std::vector<float> narrow(e.data.begin(), e.data.end());
            blob.write(reinterpret_cast<const char*>(narrow.data()),
                       static_cast<std::streamsize>(length));
        }
        entries.push_back({{"name", e.name},
                           {"dtype", dtype_name(e.dtype)},
                           {"shape", {e.rows, e.cols}},
                           {"byte_offset", offset},
                           {"byte_length", length}});
        offset += length;
    }
    blob.close();
    if (!blob) throw IoError("write to '" + blob_path + "' failed");

    manifest["entries"] = std::move(entries);
    std::ofstream out(manifest_path, std::ios::trunc);
    if (!out) throw IoError("cannot open '" + manifest_path + "' for writing");
    out << manifest.dump(2) << '\n';
    out.close();
    if (!out) throw IoError("write to '" + manifest_path + "' failed");
}

TensorStore TensorStore::load(const std::string& manifest_path) {
    std::ifstream in(manifest_path);
    if (!in) throw IoError("cannot open '" + manifest_path + "'");
    nlohmann::json manifest;
    try {
        in >> manifest;
    } catch (const nlohmann::json::exception& e) {
        throw IoError("malformed manifest '" + manifest_path + "': " + e.what());
    }

    if (!manifest.is_object() || manifest.value("format", "") != kFormat)
        throw IoError("'" + manifest_path + "' is not a tensor store manifest");
    if (manifest.value("version", -1) != kVersion)
        throw IoError("unsupported tensor store version in '" + manifest_path + "'");
    if (!manifest.contains("blob") || !manifest["blob"].is_string() ||
        !manifest.contains("entries") || !manifest["entries"].is_array())
        throw IoError("manifest '" + manifest_path + "' is missing blob or entries");

    const std::string blob_path =
        blob_path_for(manifest_path, manifest["blob"].get<std::string>());
    std::ifstream blob(blob_path, std::ios::binary | std::ios::ate);
    if (!blob) throw IoError("cannot open blob '" + blob_path + "'");
    const std::uint64_t blob_size = static_cast<std::uint64_t>(blob.tellg());

    struct Span {
        std::uint64_t offset;
        std::uint64_t length;
        std::string name;
    };
    std::vector<Span> spans;

    TensorStore store;
    for (const auto& je : manifest["entries"]) {
        if (!je.is_object() || !je.contains("name") || !je.contains("dtype") ||
            !je.contains("shape") || !je.contains("byte_offset") || !je.contains("byte_length"))
            throw IoError("manifest '" + manifest_path + "' has an incomplete entry");
        const std::string name = je["name"].get<std::string>();
        if (store.tensors_.count(name))
            throw IoError("duplicate entry '" + name + "' in '" + manifest_path + "'");
        const Dtype dtype = dtype_from_name(je["dtype"].get<std::string>());
        const auto& shape = je["shape"];
        if (!shape.is_array() || shape.size() != 2)
            throw IoError("entry '" + name + "' has a non 2-d shape");
        const std::size_t rows = shape[0].get<std::size_t>();
        const std::size_t cols = shape[1].get<std::size_t>();
        const std::uint64_t offset = je["byte_offset"].get<std::uint64_t>();
        const std::uint64_t length = je["byte_length"].get<std::uint64_t>();
        const std::uint64_t expect =
            static_cast<std::uint64_t>(rows) * cols * dtype_size(dtype);
        if (length != expect)
            throw IoError("entry '" + name + "' length disagrees with its shape");
        if (offset > blob_size || blob_size - offset < length)
            throw IoError("entry '" + name + "' reaches past the end of '" + blob_path + "'");
        spans.push_back({offset, length, name});

        Matrix m(rows, cols);
        blob.seekg(static_cast<std::streamoff>(offset));
        if (dtype == Dtype::f64) {
            blob.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(length));
        } else {
            std::vector<float> narrow(rows * cols);
            blob.read(reinterpret_cast<char*>(narrow.data()),
                      static_cast<std::streamsize>(length));
            std::copy(narrow.begin(), narrow.end(), m.data());
        }
        if (!blob) throw IoError("read of entry '" + name + "' from '" + blob_path + "' failed");
        store.order_.push_back(name);
        store.tensors_.emplace(name, std::move(m));
        store.dtypes_.emplace(name, dtype);
    }

    std::sort(spans.begin(), spans.end(),
              [](const Span& a, const Span& b) { return a.offset < b.offset; });
    for (std::size_t i = 1; i < spans.size(); ++i)
        if (spans[i - 1].offset + spans[i - 1].length > spans[i].offset)
            throw IoError("entries '" + spans[i - 1].name + "' and '" + spans[i].name +
                          "' overlap in '" + blob_path + "'");
    return store;
}

bool TensorStore::contains(const std::string& name) const { return tensors_.count(name) > 0; }

const Matrix& TensorStore::matrix(const std::string& name) const {
    const auto it = tensors_.find(name);
    if (it == tensors_.end()) throw IoError("tensor store has no entry '" + name + "'");
    return it->second;
}

double TensorStore::scalar(const std::string& name) const {
    const Matrix& m = matrix(name);
    if (m.rows() != 1 || m.cols() != 1)
        throw IoError("entry '" + name + "' is not a scalar");
    return m(0, 0);
}

Dtype TensorStore::dtype(const std::string& name) const {
    const auto it = dtypes_.find(name);
    if (it == dtypes_.end()) throw IoError("tensor store has no entry '" + name + "'");
    return it->second;
}

} // namespace lrc
