#pragma once

#include <string>

#include "gbdt/linalg.hpp"

namespace gbdt {

/// Signature matrix of the GBDT identity. The continuous variant is the
/// skew form [[0, I], [−I, 0]] (j* = j⁻¹ = −j); the discrete variant is the
/// symmetric involution [[0, I], [I, 0]].
struct SignatureJ {
    enum class Variant { continuous, discrete };

    Variant variant = Variant::continuous;
    Eigen::Index h = 1;

    static SignatureJ continuous(Eigen::Index h) { return {Variant::continuous, h}; }
    static SignatureJ discrete(Eigen::Index h) { return {Variant::discrete, h}; }

    Eigen::Index m() const noexcept { return 2 * h; }

    CMatrix matrix() const {
        CMatrix j = CMatrix::Zero(2 * h, 2 * h);
        j.topRightCorner(h, h).setIdentity();
        if (variant == Variant::continuous) {
            j.bottomLeftCorner(h, h) = -CMatrix::Identity(h, h);
        } else {
            j.bottomLeftCorner(h, h).setIdentity();
        }
        return j;
    }

    std::string name() const { return variant == Variant::continuous ? "continuous" : "discrete"; }
};

/// Projector onto the second h-block, diag(0, I_h).
inline CMatrix lower_projector(Eigen::Index h) {
    CMatrix p = CMatrix::Zero(2 * h, 2 * h);
    p.bottomRightCorner(h, h).setIdentity();
    return p;
}

}  // namespace gbdt
