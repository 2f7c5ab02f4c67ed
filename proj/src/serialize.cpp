#include "cfql/serialize.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace cfql {

namespace {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big,
              "mixed-endian platforms unsupported");

template <typename T>
void write_le(std::ostream& out, T value) {
    unsigned char buf[sizeof(T)];
    std::memcpy(buf, &value, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) {
        for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(buf[i], buf[sizeof(T) - 1 - i]);
    }
    out.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

template <typename T>
T read_le(std::istream& in) {
    unsigned char buf[sizeof(T)];
    in.read(reinterpret_cast<char*>(buf), sizeof(T));
    if (!in) throw std::runtime_error("tensor container: truncated file");
    if constexpr (std::endian::native == std::endian::big) {
        for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(buf[i], buf[sizeof(T) - 1 - i]);
    }
    T value;
    std::memcpy(&value, buf, sizeof(T));
    return value;
}

}  // namespace

void TensorContainer::write(std::ostream& out) const {
    out.write("CFQL", 4);
    write_le<std::uint32_t>(out, kVersion);
    write_le<std::uint32_t>(out, static_cast<std::uint32_t>(tensors.size()));
    for (const DenseArray& t : tensors) {
        write_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
        for (std::size_t e : t.shape) write_le<std::uint64_t>(out, static_cast<std::uint64_t>(e));
        for (double v : t.data) write_le<double>(out, v);
    }
    if (!out) throw std::runtime_error("tensor container: write failed");
}

TensorContainer TensorContainer::read(std::istream& in) {
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, "CFQL", 4) != 0)
        throw std::runtime_error("tensor container: bad magic bytes");
    const auto version = read_le<std::uint32_t>(in);
    if (version != kVersion)
        throw std::runtime_error("tensor container: unsupported version " + std::to_string(version));
    const auto count = read_le<std::uint32_t>(in);
    TensorContainer c;
    c.tensors.reserve(count);
    for (std::uint32_t k = 0; k < count; ++k) {
        const auto rank = read_le<std::uint32_t>(in);
        std::vector<std::size_t> shape(rank);
        for (auto& e : shape) e = static_cast<std::size_t>(read_le<std::uint64_t>(in));
        const std::size_t n = DenseArray::element_count(shape);
        std::vector<double> data(n);
        for (auto& v : data) v = read_le<double>(in);
        c.tensors.emplace_back(std::move(shape), std::move(data));
    }
    return c;
}

void TensorContainer::save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("tensor container: cannot open " + path + " for writing");
    write(out);
}

TensorContainer TensorContainer::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("tensor container: cannot open " + path);
    return read(in);
}

}  // namespace cfql
