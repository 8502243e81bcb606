#include "curvlab/geometry.hpp"

#include <cmath>

namespace curvlab {

Eigen::MatrixXd CurvatureTensor::ricci(const Eigen::MatrixXd& metric_inverse) const {
    Eigen::MatrixXd ric = Eigen::MatrixXd::Zero(dim_, dim_);
    for (int a = 0; a < dim_; ++a) {
        for (int b = a; b < dim_; ++b) {
            double sum = 0.0;
            for (int c = 0; c < dim_; ++c) {
                for (int d = 0; d < dim_; ++d) {
                    const double w = metric_inverse(c, d);
                    if (w == 0.0) continue;
                    sum += w * at(a, c, b, d);
                }
            }
            ric(a, b) = sum;
            ric(b, a) = sum;
        }
    }
    return ric;
}

double CurvatureTensor::scalar(const Eigen::MatrixXd& metric_inverse) const {
    const Eigen::MatrixXd ric = ricci(metric_inverse);
    return (metric_inverse * ric).trace();
}

double CurvatureTensor::quad(const Eigen::VectorXd& u, const Eigen::VectorXd& v) const {
    double sum = 0.0;
    for (int a = 0; a < dim_; ++a) {
        for (int b = 0; b < dim_; ++b) {
            if (a == b) continue;
            const double uv = u(a) * v(b);
            if (uv == 0.0) continue;
            for (int c = 0; c < dim_; ++c) {
                for (int d = 0; d < dim_; ++d) {
                    if (c == d) continue;
                    sum += uv * u(c) * v(d) * at(a, b, c, d);
                }
            }
        }
    }
    return sum;
}

CurvatureTensor CurvatureTensor::transformed(const Eigen::MatrixXd& basis_columns,
                                             Basis new_tag) const {
    const int n = dim_;
    std::vector<double> full(static_cast<std::size_t>(n) * n * n * n);
    auto idx = [n](int a, int b, int c, int d) {
        return ((static_cast<std::size_t>(a) * n + b) * n + c) * n + d;
    };
    for (int a = 0; a < n; ++a)
        for (int b = 0; b < n; ++b)
            for (int c = 0; c < n; ++c)
                for (int d = 0; d < n; ++d) full[idx(a, b, c, d)] = at(a, b, c, d);

    // contract one index at a time
    std::vector<double> tmp(full.size());
    for (int pass = 0; pass < 4; ++pass) {
        std::fill(tmp.begin(), tmp.end(), 0.0);
        for (int a = 0; a < n; ++a)
            for (int b = 0; b < n; ++b)
                for (int c = 0; c < n; ++c)
                    for (int d = 0; d < n; ++d) {
                        const double v = full[idx(a, b, c, d)];
                        if (v == 0.0) continue;
                        // rotate the last index against the basis and cycle
                        for (int j = 0; j < n; ++j)
                            tmp[idx(j, a, b, c)] += v * basis_columns(d, j);
                    }
        full.swap(tmp);
    }

    CurvatureTensor out(n, new_tag);
    for (int p = 0; p < n; ++p)
        for (int q = p + 1; q < n; ++q)
            for (int r = 0; r < n; ++r)
                for (int s = r + 1; s < n; ++s)
                    out.set(p, q, r, s, full[idx(p, q, r, s)]);
    return out;
}

double CurvatureTensor::bianchi_residual() const {
    double worst = 0.0;
    for (int p = 0; p < dim_; ++p)
        for (int q = 0; q < dim_; ++q)
            for (int r = 0; r < dim_; ++r)
                for (int s = 0; s < dim_; ++s) {
                    const double cyc = at(p, q, r, s) + at(q, r, p, s) + at(r, p, q, s);
                    worst = std::max(worst, std::abs(cyc));
                }
    return worst;
}

CurvatureTensor& CurvatureTensor::operator+=(const CurvatureTensor& other) {
    if (other.dim_ != dim_) throw BadShape("curvature tensor dimension mismatch");
    pair_mat_ += other.pair_mat_;
    return *this;
}

Eigen::LLT<Eigen::MatrixXd> MetricChart::metric_llt(const Eigen::VectorXd& x) const {
    Eigen::MatrixXd g = metric(x);
    Eigen::LLT<Eigen::MatrixXd> llt(g);
    if (llt.info() != Eigen::Success) {
        throw SingularMetric("metric is not positive definite at the queried point");
    }
    return llt;
}

Eigen::VectorXd MetricChart::center_point() const {
    Eigen::VectorXd x(dim);
    for (int i = 0; i < dim; ++i) x(i) = 0.5 * (axes[i].lo + axes[i].hi);
    return x;
}

Eigen::MatrixXd OrthonormalFrame::gram(bool use_completion) const {
    const Eigen::MatrixXd& cols = use_completion ? completed() : vectors;
    const Eigen::MatrixXd g = chart->metric_at(point);
    return cols.transpose() * g * cols;
}

namespace {

// Modified Gram-Schmidt under the inner product g. Returns the orthonormal
// columns; throws on rank collapse below `pivot_tol`.
Eigen::MatrixXd metric_mgs(const Eigen::MatrixXd& raw, const Eigen::MatrixXd& g,
                           double pivot_tol) {
    const int n = static_cast<int>(raw.rows());
    const int m = static_cast<int>(raw.cols());
    Eigen::MatrixXd out(n, m);
    for (int j = 0; j < m; ++j) {
        Eigen::VectorXd v = raw.col(j);
        for (int i = 0; i < j; ++i) {
            const double proj = out.col(i).dot(g * v);
            v -= proj * out.col(i);
        }
        const double norm = std::sqrt(v.dot(g * v));
        if (!(norm > pivot_tol)) {
            throw DegenerateInput("gram_schmidt: numerical rank below vector count");
        }
        out.col(j) = v / norm;
    }
    return out;
}

}  // namespace

OrthonormalFrame gram_schmidt(const Eigen::MatrixXd& raw_vectors, const MetricChart& chart,
                              const Eigen::VectorXd& point) {
    if (raw_vectors.rows() != chart.dim) throw BadShape("gram_schmidt: vector dimension mismatch");
    if (raw_vectors.cols() < 1 || raw_vectors.cols() > chart.dim) {
        throw BadShape("gram_schmidt: vector count must be in [1, dim]");
    }
    chart.metric_llt(point);  // SPD check
    const Eigen::MatrixXd g = chart.metric_at(point);
    OrthonormalFrame frame;
    frame.point = point;
    frame.vectors = metric_mgs(raw_vectors, g, 1e-10);
    frame.chart = &chart;
    return frame;
}

OrthonormalFrame complete_frame(const OrthonormalFrame& frame, uint64_t seed) {
    const int n = frame.dim();
    const int m = frame.count();
    if (m >= n) throw BadOrder("complete_frame: frame already spans the tangent space");
    const Eigen::MatrixXd g = frame.chart->metric_at(frame.point);

    Eigen::MatrixXd full(n, n);
    full.leftCols(m) = frame.vectors;
    int have = m;

    auto try_candidate = [&](const Eigen::VectorXd& cand) -> bool {
        Eigen::VectorXd v = cand;
        for (int i = 0; i < have; ++i) {
            const double proj = full.col(i).dot(g * v);
            v -= proj * full.col(i);
        }
        const double norm = std::sqrt(v.dot(g * v));
        if (!(norm > 1e-6)) return false;
        full.col(have++) = v / norm;
        return true;
    };

    for (int j = 0; j < n && have < n; ++j) {
        try_candidate(Eigen::VectorXd::Unit(n, j));
    }
    Rng rng(seed);
    for (int round = 0; round < 64 && have < n; ++round) {
        Eigen::VectorXd cand(n);
        for (int i = 0; i < n; ++i) cand(i) = rng.gaussian();
        try_candidate(cand);
    }
    if (have < n) throw DegenerateInput("complete_frame: completion candidates collapsed");

    OrthonormalFrame out = frame;
    out.completion = full;
    return out;
}

OrthonormalFrame haar_random_frame(uint64_t seed, const MetricChart& chart,
                                   const Eigen::VectorXd& point, int m) {
    if (m < 1 || m > chart.dim) throw BadOrder("haar_random_frame: m outside [1, dim]");
    const Eigen::MatrixXd basis = orthonormal_coordinate_basis(chart, point);
    Rng rng(seed);
    Eigen::MatrixXd z(chart.dim, m);
    for (int j = 0; j < m; ++j)
        for (int i = 0; i < chart.dim; ++i) z(i, j) = rng.gaussian();
    // Gaussian in a g-orthonormal basis followed by Gram-Schmidt is Haar.
    return gram_schmidt(basis * z, chart, point);
}

Eigen::MatrixXd orthonormal_coordinate_basis(const MetricChart& chart, const Eigen::VectorXd& x) {
    const auto llt = chart.metric_llt(x);
    const Eigen::MatrixXd l = llt.matrixL();
    return l.transpose()
        .triangularView<Eigen::Upper>()
        .solve(Eigen::MatrixXd::Identity(chart.dim, chart.dim));
}

}  // namespace curvlab
