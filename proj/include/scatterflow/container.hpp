#pragma once

#include <complex>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace sf::io {

// Binary array container ("SCPR"): named little-endian arrays of f64,
// complex128 (interleaved f64) or u8. Entry order is preserved so identical
// content writes byte-identical files.
enum class Dtype : std::uint8_t { F64 = 0, C128 = 1, U8 = 2 };

struct Entry {
    std::string name;
    Dtype dtype = Dtype::F64;
    std::vector<std::uint32_t> dims;
    std::vector<double> f64;                 // F64 and C128 (interleaved)
    std::vector<std::uint8_t> u8;            // U8

    std::size_t count() const;               // number of elements (not scalars)
};

class Container {
public:
    void put_f64(const std::string& name, std::vector<std::uint32_t> dims,
                 std::vector<double> data);
    void put_c128(const std::string& name, std::vector<std::uint32_t> dims,
                  const std::vector<std::complex<double>>& data);
    void put_u8(const std::string& name, std::vector<std::uint32_t> dims,
                std::vector<std::uint8_t> data);
    void put_scalar(const std::string& name, double v);
    void put_string(const std::string& name, const std::string& s);

    bool has(const std::string& name) const;
    const Entry& get(const std::string& name) const;
    double get_scalar(const std::string& name) const;
    std::string get_string(const std::string& name) const;
    std::vector<std::complex<double>> get_c128(const std::string& name) const;

    const std::vector<Entry>& entries() const { return entries_; }

    void save(const std::string& path) const;
    static Container load(const std::string& path);

private:
    Entry& add(const std::string& name);
    std::vector<Entry> entries_;
};

}  // namespace sf::io
