#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <istream>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "mgt/common.hpp"

namespace mgt {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

// Row-major float32 matrix; backs the feature matrix X, the positional table
// and exported embeddings. The three share one on-disk layout and differ only
// in the magic bytes.
struct DenseMatrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<float> data;

    DenseMatrix() = default;
    DenseMatrix(std::size_t r, std::size_t c, float fill = 0.0f) : rows(r), cols(c), data(r * c, fill) {}

    std::span<float> row(std::size_t i) { return {data.data() + i * cols, cols}; }
    std::span<const float> row(std::size_t i) const { return {data.data() + i * cols, cols}; }
    float& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    float operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

    bool all_finite() const;
};

using FeatureMatrix = DenseMatrix;
using PositionalTable = DenseMatrix;

enum class MatrixKind { Features, Positional, Embedding };

std::array<char, 4> magic_for(MatrixKind kind) noexcept;

// Layout: magic[4], version u32 = 1, rows u64, cols u32, rows*cols f32.
void save_matrix(const DenseMatrix& m, MatrixKind kind, const std::filesystem::path& path);

// Throws InputError on magic/version mismatch, truncation, non-finite values,
// or a row count different from `expected_rows`.
DenseMatrix load_matrix(const std::filesystem::path& path, MatrixKind kind,
                        std::optional<std::size_t> expected_rows = std::nullopt);

inline FeatureMatrix load_features(const std::filesystem::path& path,
                                   std::optional<std::size_t> expected_rows = std::nullopt) {
    return load_matrix(path, MatrixKind::Features, expected_rows);
}

// Little-endian POD helpers shared by the binary formats.
namespace bin {

template <typename T>
void put(std::ostream& out, T value) {
    out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
    T value{};
    in.read(reinterpret_cast<char*>(&value), sizeof(T));
    if (!in) throw InputError("unexpected end of file");
    return value;
}

void expect_magic(std::istream& in, const std::array<char, 4>& magic, const std::string& what);

}  // namespace bin

// Writes via a temporary file and rename so readers never see partial output.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

}  // namespace mgt
