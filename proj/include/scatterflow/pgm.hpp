#pragma once

#include <string>
#include <vector>

namespace sf::io {

// 16-bit binary PGM (P5). Values map linearly from [vmin, vmax] to
// [0, 65535] and clamp outside.
void export_pgm(const std::vector<double>& grid, int n, const std::string& path,
                double vmin, double vmax);

// Reads a binary P5 PGM (8- or 16-bit) and returns values scaled to [0,1].
std::vector<double> read_pgm(const std::string& path, int* width, int* height);

}  // namespace sf::io
