#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "curvlab/geometry.hpp"

namespace curvlab {

// How the engine obtains metric derivatives.
//   Auto:             curvature oracle if the chart has one, otherwise Computed.
//   Computed:         Levi-Civita formulas, analytic metric derivatives where
//                     available, finite differences for missing pieces.
//   FiniteDifference: pure central differences of the raw metric field.
enum class DerivsMode { Auto, Computed, FiniteDifference };

enum class CurvatureSource { AnalyticOracle, FiniteDifference };

// gamma[k](i,j) = Gamma^k_ij
std::vector<Eigen::MatrixXd> christoffel(const MetricChart& chart, const Eigen::VectorXd& x,
                                         DerivsMode mode = DerivsMode::Auto);

// derivs(x)[k](i,j) = d g_ij / d x_k (analytic or FD depending on mode)
std::vector<Eigen::MatrixXd> metric_first_derivs(const MetricChart& chart,
                                                 const Eigen::VectorXd& x,
                                                 DerivsMode mode = DerivsMode::Auto);

// dgamma[a][k](i,j) = d Gamma^k_ij / d x_a
std::vector<std::vector<Eigen::MatrixXd>> christoffel_derivs(const MetricChart& chart,
                                                             const Eigen::VectorXd& x,
                                                             DerivsMode mode = DerivsMode::Auto);

// Riemann tensor in the coordinate basis, canonicalized into the symmetry
// class. Auto mode returns the chart's closed-form oracle when present.
CurvatureTensor riemann_coordinate(const MetricChart& chart, const Eigen::VectorXd& x,
                                   DerivsMode mode = DerivsMode::Auto);

// Same tensor expressed against g-orthonormal basis columns.
CurvatureTensor riemann_orthonormal(const MetricChart& chart, const Eigen::VectorXd& x,
                                    const Eigen::MatrixXd& basis_columns,
                                    DerivsMode mode = DerivsMode::Auto);

struct CurvatureReport {
    Eigen::VectorXd point;
    CurvatureTensor tensor;   // coordinate basis
    Eigen::MatrixXd ricci;    // coordinate basis
    double scalar = 0.0;
    CurvatureSource source = CurvatureSource::FiniteDifference;
};

CurvatureReport curvature_report(const MetricChart& chart, const Eigen::VectorXd& x,
                                 DerivsMode mode = DerivsMode::Auto);

// C_m of the first m columns of a completed orthonormal basis:
//   sum_{p<=m} sum_{q>p} Rm(e_p,e_q,e_p,e_q).
// Columns are components in the tensor's basis. Throws BadOrder unless
// 1 <= m <= n-1.
double intermediate_curvature(const CurvatureTensor& rm, const Eigen::MatrixXd& completed_basis,
                              int m);

// s_{m,n} = sum_{p,q > m} Rm(e_p,e_q,e_p,e_q) over the complement indices.
double intermediate_scalar_curvature(const CurvatureTensor& rm,
                                     const Eigen::MatrixXd& completed_basis, int m);

// Convenience overloads for coordinate-basis tensors with a completed frame.
double intermediate_curvature(const CurvatureTensor& rm, const OrthonormalFrame& frame, int m);
double intermediate_scalar_curvature(const CurvatureTensor& rm, const OrthonormalFrame& frame,
                                     int m);

}  // namespace curvlab
