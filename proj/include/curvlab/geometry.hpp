#pragma once

#include <Eigen/Dense>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "curvlab/util.hpp"

namespace curvlab {

// One coordinate direction of a chart. Periodic axes wrap with period
// hi - lo; non-periodic axes are valid only on [lo, hi] (e.g. polar angles
// with trimmed caps).
struct CoordAxis {
    double lo = 0.0;
    double hi = 1.0;
    bool periodic = true;

    double length() const { return hi - lo; }
};

enum class Basis { Coordinate, Orthonormal };

// (0,4) curvature tensor stored over antisymmetrized index pairs: the matrix
// entry (pair(p,q), pair(r,s)) holds Rm(e_p,e_q,e_r,e_s) for p<q, r<s, and
// the full tensor is recovered through the pair signs. Antisymmetry in each
// pair and symmetry under pair swap therefore hold exactly by storage; the
// first Bianchi identity is a property of the data, not of the layout.
class CurvatureTensor {
public:
    CurvatureTensor() = default;
    CurvatureTensor(int dim, Basis basis)
        : dim_(dim), basis_(basis),
          pair_mat_(Eigen::MatrixXd::Zero(pair_count(dim), pair_count(dim))) {}

    static int pair_count(int n) { return n * (n - 1) / 2; }

    int dim() const { return dim_; }
    Basis basis() const { return basis_; }

    double at(int p, int q, int r, int s) const {
        if (p == q || r == s) return 0.0;
        const double sign = pair_sign(p, q) * pair_sign(r, s);
        return sign * pair_mat_(pair_index(p, q), pair_index(r, s));
    }

    void set(int p, int q, int r, int s, double value) {
        if (p == q || r == s) {
            if (value != 0.0) throw BadShape("curvature entry with repeated pair index must vanish");
            return;
        }
        const double sign = pair_sign(p, q) * pair_sign(r, s);
        const int a = pair_index(p, q);
        const int b = pair_index(r, s);
        pair_mat_(a, b) = sign * value;
        pair_mat_(b, a) = sign * value;
    }

    // Sectional curvature of the plane (e_p, e_q) when the basis is
    // orthonormal: K(e_p,e_q) = Rm(e_p,e_q,e_p,e_q).
    double sectional(int p, int q) const { return at(p, q, p, q); }

    // Ric(a,b) = sum_{c,d} ginv(c,d) Rm(a,c,b,d); pass the identity for an
    // orthonormal basis.
    Eigen::MatrixXd ricci(const Eigen::MatrixXd& metric_inverse) const;
    Eigen::MatrixXd ricci_orthonormal() const {
        return ricci(Eigen::MatrixXd::Identity(dim_, dim_));
    }

    double scalar(const Eigen::MatrixXd& metric_inverse) const;
    double scalar_orthonormal() const {
        return scalar(Eigen::MatrixXd::Identity(dim_, dim_));
    }

    // Rm(u,v,u,v) for vectors expressed in this tensor's basis.
    double quad(const Eigen::VectorXd& u, const Eigen::VectorXd& v) const;

    // Components in a new basis whose columns are expressed in the current
    // basis. O(n^5) staged contraction.
    CurvatureTensor transformed(const Eigen::MatrixXd& basis_columns, Basis new_tag) const;

    // max over index quadruples of |Rm(p,q,r,s)+Rm(q,r,p,s)+Rm(r,p,q,s)|
    double bianchi_residual() const;

    const Eigen::MatrixXd& pair_matrix() const { return pair_mat_; }
    Eigen::MatrixXd& pair_matrix() { return pair_mat_; }

    CurvatureTensor& operator+=(const CurvatureTensor& other);
    CurvatureTensor& operator*=(double c) { pair_mat_ *= c; return *this; }

private:
    int pair_index(int p, int q) const {
        if (p > q) std::swap(p, q);
        return p * (2 * dim_ - p - 1) / 2 + (q - p - 1);
    }
    static double pair_sign(int p, int q) { return p < q ? 1.0 : -1.0; }

    int dim_ = 0;
    Basis basis_ = Basis::Coordinate;
    Eigen::MatrixXd pair_mat_;
};

// A coordinate chart with a smooth metric field. Analytic derivative and
// curvature oracles are optional; consumers fall back to finite differences
// when they are absent.
struct MetricChart {
    int dim = 0;
    std::vector<CoordAxis> axes;
    std::string label;

    std::function<Eigen::MatrixXd(const Eigen::VectorXd&)> metric;
    // derivs(x)[k](i,j) = d g_ij / d x_k
    std::function<std::vector<Eigen::MatrixXd>(const Eigen::VectorXd&)> metric_derivs;
    // second_derivs(x)[k][l](i,j) = d^2 g_ij / (d x_k d x_l), l <= k filled symmetrically
    std::function<std::vector<std::vector<Eigen::MatrixXd>>(const Eigen::VectorXd&)>
        metric_second_derivs;
    // closed-form Riemann tensor in the coordinate basis
    std::function<CurvatureTensor(const Eigen::VectorXd&)> curvature_oracle;

    bool has_derivs() const { return static_cast<bool>(metric_derivs); }
    bool has_second_derivs() const { return static_cast<bool>(metric_second_derivs); }
    bool has_curvature_oracle() const { return static_cast<bool>(curvature_oracle); }

    Eigen::MatrixXd metric_at(const Eigen::VectorXd& x) const { return metric(x); }

    // Cholesky factor of g(x); throws SingularMetric when g is not SPD.
    Eigen::LLT<Eigen::MatrixXd> metric_llt(const Eigen::VectorXd& x) const;

    // Midpoint of the valid coordinate box; handy default evaluation point.
    Eigen::VectorXd center_point() const;
};

// m g-orthonormal tangent vectors at a point, optionally completed to a full
// orthonormal basis whose first m columns are bitwise the frame itself.
struct OrthonormalFrame {
    Eigen::VectorXd point;
    Eigen::MatrixXd vectors;  // dim x m, columns in the coordinate basis
    std::optional<Eigen::MatrixXd> completion;  // dim x dim when present
    const MetricChart* chart = nullptr;

    int dim() const { return static_cast<int>(vectors.rows()); }
    int count() const { return static_cast<int>(vectors.cols()); }
    bool is_completed() const { return completion.has_value(); }

    const Eigen::MatrixXd& completed() const {
        if (!completion) throw DegenerateInput("frame has no stored completion");
        return *completion;
    }

    // Gram matrix of the frame (or completion) under the chart metric.
    Eigen::MatrixXd gram(bool use_completion = false) const;
};

// Metric Gram-Schmidt. Throws DegenerateInput when the numerical rank of the
// input drops below its count (pivot under 1e-10).
OrthonormalFrame gram_schmidt(const Eigen::MatrixXd& raw_vectors, const MetricChart& chart,
                              const Eigen::VectorXd& point);

// Extends a frame to a full orthonormal basis. Deterministic: canonical basis
// candidates first, seeded random retries only if those collapse.
OrthonormalFrame complete_frame(const OrthonormalFrame& frame, uint64_t seed = 0x5eedULL);

// Haar-distributed m-frame under the chart metric; deterministic per seed.
OrthonormalFrame haar_random_frame(uint64_t seed, const MetricChart& chart,
                                   const Eigen::VectorXd& point, int m);

// Columns form a g-orthonormal basis at x (inverse transpose Cholesky factor).
Eigen::MatrixXd orthonormal_coordinate_basis(const MetricChart& chart, const Eigen::VectorXd& x);

}  // namespace curvlab
