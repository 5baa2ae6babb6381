#include "mgt/io.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

namespace mgt {

bool DenseMatrix::all_finite() const {
    for (float v : data) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

std::array<char, 4> magic_for(MatrixKind kind) noexcept {
    switch (kind) {
        case MatrixKind::Features:
            return {'M', 'G', 'T', 'F'};
        case MatrixKind::Positional:
            return {'M', 'G', 'T', 'P'};
        case MatrixKind::Embedding:
            return {'M', 'G', 'T', 'E'};
    }
    return {'?', '?', '?', '?'};
}

namespace bin {

void expect_magic(std::istream& in, const std::array<char, 4>& magic, const std::string& what) {
    std::array<char, 4> got{};
    in.read(got.data(), 4);
    if (!in || got != magic) {
        throw InputError(what + ": bad magic, expected '" + std::string(magic.data(), 4) + "'");
    }
}

}  // namespace bin

void save_matrix(const DenseMatrix& m, MatrixKind kind, const std::filesystem::path& path) {
    std::ostringstream out(std::ios::binary);
    const auto magic = magic_for(kind);
    out.write(magic.data(), 4);
    bin::put<std::uint32_t>(out, 1);
    bin::put<std::uint64_t>(out, m.rows);
    bin::put<std::uint32_t>(out, static_cast<std::uint32_t>(m.cols));
    out.write(reinterpret_cast<const char*>(m.data.data()), static_cast<std::streamsize>(m.data.size() * sizeof(float)));
    write_file_atomic(path, out.str());
}

DenseMatrix load_matrix(const std::filesystem::path& path, MatrixKind kind, std::optional<std::size_t> expected_rows) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open " + path.string());
    bin::expect_magic(in, magic_for(kind), path.string());
    const auto version = bin::get<std::uint32_t>(in);
    if (version != 1) throw InputError(path.string() + ": unsupported version " + std::to_string(version));
    const auto rows = bin::get<std::uint64_t>(in);
    const auto cols = bin::get<std::uint32_t>(in);
    if (expected_rows && rows != *expected_rows) {
        throw InputError(path.string() + ": has " + std::to_string(rows) + " rows, graph has " +
                         std::to_string(*expected_rows) + " nodes");
    }
    DenseMatrix m(rows, cols);
    in.read(reinterpret_cast<char*>(m.data.data()), static_cast<std::streamsize>(m.data.size() * sizeof(float)));
    if (!in) throw InputError(path.string() + ": truncated payload");
    for (std::size_t i = 0; i < m.data.size(); ++i) {
        if (!std::isfinite(m.data[i])) {
            throw InputError(path.string() + ": non-finite value at row " + std::to_string(i / cols) + ", col " +
                             std::to_string(i % cols));
        }
    }
    return m;
}

void write_file_atomic(const std::filesystem::path& path, std::string_view contents) {
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw InputError("cannot write " + tmp.string());
        out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
        if (!out) throw std::runtime_error("write failed for " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

}  // namespace mgt
