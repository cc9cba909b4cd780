#pragma once

#include <filesystem>

#include "kslab/geometry.hpp"

namespace kslab {

struct FieldSnapshot {
  ScalarField field;
  double time = 0.0;
};

/// Text format: a header line `dim nx [ny] Lx [Ly] time` followed by the
/// cell values in row-major order. A `.bin` extension selects the binary
/// variant: the same tokens, each as a little-endian IEEE double.
void write_field(const std::filesystem::path& path, const ScalarField& f, double time);
FieldSnapshot read_field(const std::filesystem::path& path);

}  // namespace kslab
