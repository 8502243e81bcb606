#pragma once

#include <Eigen/Dense>
#include <complex>
#include <vector>

#include "curvlab/geometry.hpp"

namespace curvlab {

// Trigonometric interpolation of real data sampled at cell-centered nodes
// x_j = lo + (j + 1/2) * period / n of a periodic axis (1-D or 2-D tensor
// product). Interpolates the samples exactly and gives smooth derivatives of
// any order; modes with negligible coefficients can be dropped to keep
// evaluation cheap.
class TrigInterpolant {
public:
    TrigInterpolant() = default;

    // 1-D: values(j) sampled at node j.
    TrigInterpolant(const Eigen::VectorXd& values, const CoordAxis& axis,
                    double truncation = 0.0);

    // 2-D: values(i, j) sampled at node (i, j) of (axis0, axis1).
    TrigInterpolant(const Eigen::MatrixXd& values, const CoordAxis& axis0,
                    const CoordAxis& axis1, double truncation = 0.0);

    int base_dim() const { return base_dim_; }

    // Mixed partial derivative of order `orders[k]` along axis k
    // (orders={0,...} for the value). Point components beyond base_dim_ are
    // ignored.
    double eval(const Eigen::VectorXd& point, const std::vector<int>& orders) const;

    double value(const Eigen::VectorXd& p) const { return eval(p, zeros_); }

    std::size_t active_modes() const { return modes_.size(); }

private:
    struct Mode {
        int k0 = 0;      // storage index along axis 0
        int k1 = 0;      // storage index along axis 1 (unused in 1-D)
        std::complex<double> coeff;
    };

    // basis value for storage index k on an axis of n samples, including the
    // Nyquist convention; `order` is the derivative order.
    static std::complex<double> basis(int k, int n, double t, int order);

    int base_dim_ = 0;
    std::array<int, 2> size_{0, 0};
    std::array<double, 2> lo_{0.0, 0.0};
    std::array<double, 2> period_{1.0, 1.0};
    std::vector<Mode> modes_;
    std::vector<int> zeros_;
};

}  // namespace curvlab
