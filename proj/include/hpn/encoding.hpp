#pragma once

// Sinusoidal encoding of a 3D offset. Per axis, frequency-major pairs
//   [sin(2^0 pi d), cos(2^0 pi d), ..., sin(2^(B-1) pi d), cos(2^(B-1) pi d)]
// and the x, y, z blocks are concatenated, so the length is 6 * B.

#include <cmath>
#include <numbers>

#include <Eigen/Core>

#include "hpn/error.hpp"
#include "hpn/mesh.hpp"

namespace hpn {

inline int positional_encoding_dim(int bands) { return 6 * bands; }

/// Writes the encoding into out[0 .. 6*bands).
template <typename Out>
inline void positional_encoding_into(const Vec3& delta, int bands, Out&& out) {
    int k = 0;
    for (int axis = 0; axis < 3; ++axis) {
        double freq = std::numbers::pi;
        for (int b = 0; b < bands; ++b, freq *= 2.0) {
            const double a = freq * delta[axis];
            out[k++] = std::sin(a);
            out[k++] = std::cos(a);
        }
    }
}

inline Eigen::VectorXd positional_encoding(const Vec3& delta, int bands) {
    if (bands < 1) throw ValidationError("positional encoding needs at least one band");
    Eigen::VectorXd out(positional_encoding_dim(bands));
    positional_encoding_into(delta, bands, out);
    return out;
}

}  // namespace hpn
