#include "scatterflow/container.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace sf::io {

namespace {

constexpr char kMagic[4] = {'S', 'C', 'P', 'R'};
constexpr std::uint32_t kVersion = 1;

void write_bytes(std::ostream& os, const void* p, std::size_t n) {
    os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

template <typename T>
void write_le(std::ostream& os, T v) {
    // assumes little-endian host
    write_bytes(os, &v, sizeof(T));
}

void read_bytes(std::istream& is, void* p, std::size_t n) {
    is.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (!is) throw std::runtime_error("container: truncated file");
}

template <typename T>
T read_le(std::istream& is) {
    T v{};
    read_bytes(is, &v, sizeof(T));
    return v;
}

}  // namespace

std::size_t Entry::count() const {
    std::size_t n = 1;
    for (auto d : dims) n *= d;
    return n;
}

Entry& Container::add(const std::string& name) {
    for (auto& e : entries_)
        if (e.name == name) throw std::runtime_error("container: duplicate entry '" + name + "'");
    entries_.emplace_back();
    entries_.back().name = name;
    return entries_.back();
}

void Container::put_f64(const std::string& name, std::vector<std::uint32_t> dims,
                        std::vector<double> data) {
    Entry& e = add(name);
    e.dtype = Dtype::F64;
    e.dims = std::move(dims);
    e.f64 = std::move(data);
    if (e.f64.size() != e.count())
        throw std::runtime_error("container: size mismatch for '" + name + "'");
}

void Container::put_c128(const std::string& name, std::vector<std::uint32_t> dims,
                         const std::vector<std::complex<double>>& data) {
    Entry& e = add(name);
    e.dtype = Dtype::C128;
    e.dims = std::move(dims);
    e.f64.resize(2 * data.size());
    std::memcpy(e.f64.data(), data.data(), sizeof(double) * e.f64.size());
    if (data.size() != e.count())
        throw std::runtime_error("container: size mismatch for '" + name + "'");
}

void Container::put_u8(const std::string& name, std::vector<std::uint32_t> dims,
                       std::vector<std::uint8_t> data) {
    Entry& e = add(name);
    e.dtype = Dtype::U8;
    e.dims = std::move(dims);
    e.u8 = std::move(data);
    if (e.u8.size() != e.count())
        throw std::runtime_error("container: size mismatch for '" + name + "'");
}

void Container::put_scalar(const std::string& name, double v) {
    put_f64(name, {1}, {v});
}

void Container::put_string(const std::string& name, const std::string& s) {
    put_u8(name, {static_cast<std::uint32_t>(s.size())},
           std::vector<std::uint8_t>(s.begin(), s.end()));
}

bool Container::has(const std::string& name) const {
    for (auto& e : entries_)
        if (e.name == name) return true;
    return false;
}

const Entry& Container::get(const std::string& name) const {
    for (auto& e : entries_)
        if (e.name == name) return e;
    throw std::runtime_error("container: missing entry '" + name + "'");
}

double Container::get_scalar(const std::string& name) const {
    const Entry& e = get(name);
    if (e.dtype != Dtype::F64 || e.f64.size() != 1)
        throw std::runtime_error("container: '" + name + "' is not a scalar");
    return e.f64[0];
}

std::string Container::get_string(const std::string& name) const {
    const Entry& e = get(name);
    if (e.dtype != Dtype::U8)
        throw std::runtime_error("container: '" + name + "' is not a string");
    return std::string(e.u8.begin(), e.u8.end());
}

std::vector<std::complex<double>> Container::get_c128(const std::string& name) const {
    const Entry& e = get(name);
    if (e.dtype != Dtype::C128)
        throw std::runtime_error("container: '" + name + "' is not complex");
    std::vector<std::complex<double>> out(e.count());
    std::memcpy(out.data(), e.f64.data(), sizeof(double) * e.f64.size());
    return out;
}

void Container::save(const std::string& path) const {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("container: cannot open '" + path + "' for writing");
    write_bytes(os, kMagic, 4);
    write_le<std::uint32_t>(os, kVersion);
    write_le<std::uint32_t>(os, static_cast<std::uint32_t>(entries_.size()));
    for (const auto& e : entries_) {
        write_le<std::uint16_t>(os, static_cast<std::uint16_t>(e.name.size()));
        write_bytes(os, e.name.data(), e.name.size());
        write_le<std::uint8_t>(os, static_cast<std::uint8_t>(e.dtype));
        write_le<std::uint8_t>(os, static_cast<std::uint8_t>(e.dims.size()));
        for (auto d : e.dims) write_le<std::uint32_t>(os, d);
        if (e.dtype == Dtype::U8)
            write_bytes(os, e.u8.data(), e.u8.size());
        else
            write_bytes(os, e.f64.data(), sizeof(double) * e.f64.size());
    }
    if (!os) throw std::runtime_error("container: write failed for '" + path + "'");
}

Container Container::load(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("container: cannot open '" + path + "'");
    char magic[4];
    read_bytes(is, magic, 4);
    if (std::memcmp(magic, kMagic, 4) != 0)
        throw std::runtime_error("container: bad magic in '" + path + "'");
    auto version = read_le<std::uint32_t>(is);
    if (version != kVersion)
        throw std::runtime_error("container: unsupported version " + std::to_string(version));
    auto count = read_le<std::uint32_t>(is);
    Container c;
    for (std::uint32_t i = 0; i < count; ++i) {
        auto name_len = read_le<std::uint16_t>(is);
        std::string name(name_len, '\0');
        read_bytes(is, name.data(), name_len);
        Entry& e = c.add(name);
        auto dt = read_le<std::uint8_t>(is);
        if (dt > 2) throw std::runtime_error("container: bad dtype for '" + name + "'");
        e.dtype = static_cast<Dtype>(dt);
        auto ndim = read_le<std::uint8_t>(is);
        e.dims.resize(ndim);
        for (auto& d : e.dims) d = read_le<std::uint32_t>(is);
        std::size_t n = e.count();
        if (e.dtype == Dtype::U8) {
            e.u8.resize(n);
            read_bytes(is, e.u8.data(), n);
        } else {
            std::size_t scalars = (e.dtype == Dtype::C128) ? 2 * n : n;
            e.f64.resize(scalars);
            read_bytes(is, e.f64.data(), sizeof(double) * scalars);
        }
    }
    return c;
}

}  // namespace sf::io
