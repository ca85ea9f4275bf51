#pragma once

#include <cmath>
#include <cstdint>

// Shared scalar kernels for the forward q-sample and the DDIM clean-latent
// prediction. The float instantiation backs the production tensor path; the
// double instantiation backs precision-sensitive oracles (at large t the
// 1/sqrt(abar) amplification makes float storage rounding visible).
namespace augpaint::detail {

template <typename T>
void q_sample_kernel(const T* z0, const T* eps, T* out, std::int64_t n, double signal,
                     double noise) {
    for (std::int64_t i = 0; i < n; ++i) {
        out[i] = static_cast<T>(signal * z0[i] + noise * eps[i]);
    }
}

template <typename T>
void ddim_pred_x0_kernel(const T* z, const T* eps_hat, T* out, std::int64_t n,
                         double abar_t) {
    const double sq_a = std::sqrt(abar_t);
    const double sq_1a = std::sqrt(1.0 - abar_t);
    for (std::int64_t i = 0; i < n; ++i) {
        out[i] = static_cast<T>((static_cast<double>(z[i]) - sq_1a * eps_hat[i]) / sq_a);
    }
}

}  // namespace augpaint::detail
