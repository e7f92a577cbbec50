#include "scatterflow/pgm.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

namespace sf::io {

void export_pgm(const std::vector<double>& grid, int n, const std::string& path,
                double vmin, double vmax) {
    if (vmin >= vmax) throw std::runtime_error("export_pgm: vmin >= vmax");
    if (static_cast<int>(grid.size()) != n * n)
        throw std::runtime_error("export_pgm: grid size mismatch");
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("export_pgm: cannot open '" + path + "'");
    os << "P5\n" << n << " " << n << "\n65535\n";
    for (double v : grid) {
        double t = (v - vmin) / (vmax - vmin);
        t = std::clamp(t, 0.0, 1.0);
        auto q = static_cast<unsigned>(std::lround(t * 65535.0));
        unsigned char hi = static_cast<unsigned char>(q >> 8);
        unsigned char lo = static_cast<unsigned char>(q & 0xff);
        os.put(static_cast<char>(hi));
        os.put(static_cast<char>(lo));
    }
    if (!os) throw std::runtime_error("export_pgm: write failed");
}

namespace {
int read_pgm_int(std::istream& is) {
    // skips whitespace and '#' comments
    int c = is.get();
    while (c == '#' || std::isspace(c)) {
        if (c == '#')
            while (c != '\n' && c != EOF) c = is.get();
        c = is.get();
    }
    int v = 0;
    bool any = false;
    while (std::isdigit(c)) {
        v = v * 10 + (c - '0');
        any = true;
        c = is.get();
    }
    if (!any) throw std::runtime_error("pgm: malformed header");
    return v;
}
}  // namespace

std::vector<double> read_pgm(const std::string& path, int* width, int* height) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("pgm: cannot open '" + path + "'");
    char p, five;
    is.get(p);
    is.get(five);
    if (p != 'P' || five != '5') throw std::runtime_error("pgm: not a binary P5 file");
    int w = read_pgm_int(is);
    int h = read_pgm_int(is);
    int maxval = read_pgm_int(is);
    if (maxval <= 0 || maxval > 65535) throw std::runtime_error("pgm: bad maxval");
    std::vector<double> out(static_cast<std::size_t>(w) * h);
    if (maxval < 256) {
        std::vector<unsigned char> buf(out.size());
        is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
        if (!is) throw std::runtime_error("pgm: truncated data");
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = buf[i] / static_cast<double>(maxval);
    } else {
        std::vector<unsigned char> buf(out.size() * 2);
        is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
        if (!is) throw std::runtime_error("pgm: truncated data");
        for (std::size_t i = 0; i < out.size(); ++i) {
            unsigned v = (static_cast<unsigned>(buf[2 * i]) << 8) | buf[2 * i + 1];
            out[i] = v / static_cast<double>(maxval);
        }
    }
    if (width) *width = w;
    if (height) *height = h;
    return out;
}

}  // namespace sf::io
