#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "curvlab/curvature.hpp"
#include "curvlab/geometry.hpp"

namespace curvlab {

struct MinimizeOptions {
    int restarts = 32;
    int max_iters = 500;
    uint64_t seed = 0;
    double step = 1.0;          // initial line-search step
    double grad_tol = 1e-7;     // projected-gradient convergence threshold
};

struct MinimizationResult {
    int m = 0;
    double min_value = 0.0;
    Eigen::MatrixXd argmin_frame;  // n x m, orthonormal columns in the tensor basis
    int restarts_used = 0;
    bool converged = false;
    double gradient_norm_at_end = 0.0;
};

// C_m evaluated without completing the frame:
//   C_m(F) = sum_p Ric(f_p, f_p) - sum_{p<q} Rm(f_p,f_q,f_p,f_q).
// Exactly equals the completed-basis double sum for orthonormal columns.
double cm_value(const CurvatureTensor& orthonormal_tensor, const Eigen::MatrixXd& frame_columns);

// Projected gradient descent on the Stiefel manifold (QR retraction, Armijo
// backtracking) with Haar-random multistart. Deterministic for a fixed seed.
// The tensor must be in an orthonormal basis.
MinimizationResult minimize_cm(const CurvatureTensor& orthonormal_tensor, int m,
                               const MinimizeOptions& opts = {});

struct SamplerSpec {
    enum class Kind { Grid, Random };
    Kind kind = Kind::Random;
    int count = 50;
    uint64_t seed = 0;
};

enum class Verdict { Positive, Nonnegative, Indefinite };

std::string to_string(Verdict v);

struct PointResult {
    Eigen::VectorXd point;
    MinimizationResult minimization;
};

struct PositivityCertificate {
    std::string chart_id;
    int m = 0;
    double tol_pos = 1e-6;
    std::vector<PointResult> points;
    Verdict verdict = Verdict::Nonnegative;
    std::optional<int> witness_index;  // set for Indefinite
    double global_min = 0.0;

    const PointResult& worst() const { return points.at(worst_index); }
    int worst_index = 0;
};

struct CertifyOptions {
    MinimizeOptions minimize;
    double tol_pos = 1e-6;
    unsigned threads = 0;  // 0 = default pool
};

// Minimizes C_m over sampled chart points and aggregates the verdict:
// positive if every minimum exceeds tol_pos, indefinite with a witness if any
// minimum is below -tol_pos, nonnegative otherwise.
PositivityCertificate certify(const MetricChart& chart, int m, const SamplerSpec& sampler,
                              const CertifyOptions& opts = {});

// Sample points of the chart's valid box (midpoint grid or seeded uniform).
std::vector<Eigen::VectorXd> sample_points(const MetricChart& chart, const SamplerSpec& sampler);

// Generic element of the algebraic curvature tensor class: a Gaussian
// 4-array antisymmetrized in both pairs, symmetrized under pair swap, with
// the cyclic (Bianchi-violating) part projected out.
CurvatureTensor random_algebraic_tensor(int n, Rng& rng);

}  // namespace curvlab
