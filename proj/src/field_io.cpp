#include "kslab/field_io.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "kslab/error.hpp"

namespace kslab {

namespace {

bool is_binary(const std::filesystem::path& path) { return path.extension() == ".bin"; }

std::vector<double> header_tokens(const ScalarField& f, double time) {
  const StructuredGrid& g = f.grid();
  std::vector<double> h{static_cast<double>(g.dim()), static_cast<double>(g.cells(0))};
  if (g.dim() == 2) h.push_back(g.cells(1));
  h.push_back(g.extent(0));
  if (g.dim() == 2) h.push_back(g.extent(1));
  h.push_back(time);
  return h;
}

void put_le(std::ostream& os, double v) {
  std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
  unsigned char bytes[8];
  for (int k = 0; k < 8; ++k) bytes[k] = static_cast<unsigned char>(bits >> (8 * k));
  os.write(reinterpret_cast<const char*>(bytes), 8);
}

double get_le(std::istream& is) {
  unsigned char bytes[8];
  if (!is.read(reinterpret_cast<char*>(bytes), 8))
    throw PreconditionError("truncated binary field file");
  std::uint64_t bits = 0;
  for (int k = 0; k < 8; ++k) bits |= static_cast<std::uint64_t>(bytes[k]) << (8 * k);
  return std::bit_cast<double>(bits);
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

int as_count(double v) {
  if (!(v >= 1.0) || v != std::floor(v) || v > 1e9)
    throw PreconditionError("field header holds an invalid cell count");
  return static_cast<int>(v);
}

}  // namespace

void write_field(const std::filesystem::path& path, const ScalarField& f, double time) {
  std::ofstream os(path, is_binary(path) ? std::ios::binary : std::ios::out);
  if (!os) throw PreconditionError("cannot open '" + path.string() + "' for writing");
  const auto header = header_tokens(f, time);
  if (is_binary(path)) {
    for (double v : header) put_le(os, v);
    for (double v : f.values()) put_le(os, v);
  } else {
    const StructuredGrid& g = f.grid();
    os << g.dim() << ' ' << g.cells(0);
    if (g.dim() == 2) os << ' ' << g.cells(1);
    os << ' ' << format_double(g.extent(0));
    if (g.dim() == 2) os << ' ' << format_double(g.extent(1));
    os << ' ' << format_double(time) << '\n';
    const int nx = g.cells(0);
    for (std::size_t k = 0; k < f.size(); ++k)
      os << format_double(f[k]) << ((k + 1) % nx == 0 ? '\n' : ' ');
  }
  if (!os) throw PreconditionError("failed writing '" + path.string() + "'");
}

FieldSnapshot read_field(const std::filesystem::path& path) {
  std::ifstream is(path, is_binary(path) ? std::ios::binary : std::ios::in);
  if (!is) throw PreconditionError("cannot open '" + path.string() + "'");
  auto next = [&]() -> double {
    if (is_binary(path)) return get_le(is);
    std::string tok;
    if (!(is >> tok)) throw PreconditionError("truncated field file '" + path.string() + "'");
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(tok, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != tok.size()) throw PreconditionError("malformed number '" + tok + "'");
    return v;
  };
  const double dim = next();
  if (dim != 1.0 && dim != 2.0) throw PreconditionError("field header holds an invalid dimension");
  const int nx = as_count(next());
  const int ny = dim == 2.0 ? as_count(next()) : 1;
  const double lx = next();
  const double ly = dim == 2.0 ? next() : 1.0;
  const double time = next();
  StructuredGrid grid = dim == 2.0 ? StructuredGrid(lx, ly, nx, ny) : StructuredGrid(lx, nx);
  std::vector<double> values(grid.size());
  for (double& v : values) v = next();
  return {ScalarField(grid, std::move(values)), time};
}

}  // namespace kslab
