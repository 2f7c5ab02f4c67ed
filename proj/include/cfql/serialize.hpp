#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "cfql/array.hpp"

namespace cfql {

/**
Versioned binary tensor container.

Layout (all little-endian):
  magic  "CFQL" (4 bytes)
  u32    format version (currently 1)
  u32    tensor count
  per tensor:
    u32  rank
    u64  extents[rank]
    f64  payload[product(extents)]
*/
struct TensorContainer {
    static constexpr std::uint32_t kVersion = 1;
    std::vector<DenseArray> tensors;

    void write(std::ostream& out) const;
    static TensorContainer read(std::istream& in);

    void save(const std::string& path) const;
    static TensorContainer load(const std::string& path);
};

}  // namespace cfql
