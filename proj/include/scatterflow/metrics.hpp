#pragma once

#include <Eigen/Dense>
#include <utility>

namespace sf::metrics {

using Array = Eigen::ArrayXd;

// 10 log10(peak^2 / MSE) with peak = max(ref); identical inputs -> +inf.
double psnr(const Array& x, const Array& ref, int n);

// Mean structural similarity, 7x7 Gaussian window (sigma 1.5), standard
// stabilization constants relative to peak = max(ref).
double ssim(const Array& x, const Array& ref, int n);

// Isotropic total variation with forward differences,
// sum_p sqrt(dx^2 + dy^2 + eps) - sqrt(eps), so a constant image scores 0.
// Analytic gradient in .second.
std::pair<double, Array> tv_norm(const Array& x, int n);

}  // namespace sf::metrics
