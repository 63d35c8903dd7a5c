#pragma once

#include <filesystem>

#include "dflow/types.hpp"

namespace dflow::harness {

/// Reads a plain-text matrix: one row per line, entries separated by spaces,
/// tabs or commas. Blank lines and lines starting with '#' are skipped.
[[nodiscard]] Mat read_matrix(const std::filesystem::path& path);

/// Writes one row per line with 17 significant digits, so that
/// read_matrix(write_matrix(m)) == m exactly.
void write_matrix(const std::filesystem::path& path, const Mat& m);

/// Reads a file holding a single row or a single column as a vector.
[[nodiscard]] Vec read_vector(const std::filesystem::path& path);

} // namespace dflow::harness
