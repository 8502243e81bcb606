#include "curvlab/curvature.hpp"

#include <cmath>

namespace curvlab {

namespace {

std::vector<Eigen::MatrixXd> fd_metric_derivs(const MetricChart& chart, const Eigen::VectorXd& x) {
    const int n = chart.dim;
    std::vector<Eigen::MatrixXd> dg(n);
    for (int k = 0; k < n; ++k) {
        const double h = fd_step_first(x(k));
        Eigen::VectorXd xp = x, xm = x;
        xp(k) += h;
        xm(k) -= h;
        dg[k] = (chart.metric(xp) - chart.metric(xm)) / (2.0 * h);
    }
    return dg;
}

std::vector<Eigen::MatrixXd> christoffel_from(const Eigen::MatrixXd& g_inv,
                                              const std::vector<Eigen::MatrixXd>& dg) {
    const int n = static_cast<int>(g_inv.rows());
    std::vector<Eigen::MatrixXd> gamma(n, Eigen::MatrixXd::Zero(n, n));
    for (int k = 0; k < n; ++k) {
        for (int i = 0; i < n; ++i) {
            for (int j = i; j < n; ++j) {
                double sum = 0.0;
                for (int l = 0; l < n; ++l) {
                    sum += g_inv(k, l) * (dg[i](j, l) + dg[j](i, l) - dg[l](i, j));
                }
                gamma[k](i, j) = 0.5 * sum;
                gamma[k](j, i) = gamma[k](i, j);
            }
        }
    }
    return gamma;
}

}  // namespace

std::vector<Eigen::MatrixXd> metric_first_derivs(const MetricChart& chart,
                                                 const Eigen::VectorXd& x, DerivsMode mode) {
    if (mode != DerivsMode::FiniteDifference && chart.has_derivs()) {
        return chart.metric_derivs(x);
    }
    return fd_metric_derivs(chart, x);
}

std::vector<Eigen::MatrixXd> christoffel(const MetricChart& chart, const Eigen::VectorXd& x,
                                         DerivsMode mode) {
    const auto llt = chart.metric_llt(x);
    const Eigen::MatrixXd g_inv = llt.solve(Eigen::MatrixXd::Identity(chart.dim, chart.dim));
    return christoffel_from(g_inv, metric_first_derivs(chart, x, mode));
}

std::vector<std::vector<Eigen::MatrixXd>> christoffel_derivs(const MetricChart& chart,
                                                             const Eigen::VectorXd& x,
                                                             DerivsMode mode) {
    const int n = chart.dim;
    const bool analytic_second =
        mode != DerivsMode::FiniteDifference && chart.has_second_derivs() && chart.has_derivs();

    if (analytic_second) {
        const auto llt = chart.metric_llt(x);
        const Eigen::MatrixXd g_inv = llt.solve(Eigen::MatrixXd::Identity(n, n));
        const auto dg = chart.metric_derivs(x);
        const auto d2g = chart.metric_second_derivs(x);

        std::vector<std::vector<Eigen::MatrixXd>> dgamma(
            n, std::vector<Eigen::MatrixXd>(n, Eigen::MatrixXd::Zero(n, n)));
        for (int a = 0; a < n; ++a) {
            const Eigen::MatrixXd dginv = -g_inv * dg[a] * g_inv;
            for (int k = 0; k < n; ++k) {
                for (int i = 0; i < n; ++i) {
                    for (int j = i; j < n; ++j) {
                        double sum = 0.0;
                        for (int l = 0; l < n; ++l) {
                            const double s = dg[i](j, l) + dg[j](i, l) - dg[l](i, j);
                            const double ds =
                                d2g[a][i](j, l) + d2g[a][j](i, l) - d2g[a][l](i, j);
                            sum += dginv(k, l) * s + g_inv(k, l) * ds;
                        }
                        dgamma[a][k](i, j) = 0.5 * sum;
                        dgamma[a][k](j, i) = dgamma[a][k](i, j);
                    }
                }
            }
        }
        return dgamma;
    }

    // FD of the Christoffel field; step depends on whether the inner
    // Christoffels are analytic (clean) or themselves FD (noisier).
    const bool analytic_first = mode != DerivsMode::FiniteDifference && chart.has_derivs();
    std::vector<std::vector<Eigen::MatrixXd>> dgamma(n);
    for (int a = 0; a < n; ++a) {
        const double h = analytic_first ? fd_step_first(x(a)) : fd_step_second(x(a));
        Eigen::VectorXd xp = x, xm = x;
        xp(a) += h;
        xm(a) -= h;
        const auto gp = christoffel(chart, xp, mode);
        const auto gm = christoffel(chart, xm, mode);
        dgamma[a].resize(n);
        for (int k = 0; k < n; ++k) dgamma[a][k] = (gp[k] - gm[k]) / (2.0 * h);
    }
    return dgamma;
}

CurvatureTensor riemann_coordinate(const MetricChart& chart, const Eigen::VectorXd& x,
                                   DerivsMode mode) {
    if (mode == DerivsMode::Auto && chart.has_curvature_oracle()) {
        return chart.curvature_oracle(x);
    }

    const int n = chart.dim;
    const Eigen::MatrixXd g = chart.metric_at(x);
    const auto gamma = christoffel(chart, x, mode);
    const auto dgamma = christoffel_derivs(chart, x, mode);

    // R(e_a,e_b)e_c = R^d_abc e_d with
    //   R^d_abc = d_a Gamma^d_bc - d_b Gamma^d_ac
    //           + Gamma^d_ae Gamma^e_bc - Gamma^d_be Gamma^e_ac
    // lowered with the sign fixed by the round-sphere fixture:
    //   Rm(a,b,c,w) = -g_wd R^d_abc.
    std::vector<double> full(static_cast<std::size_t>(n) * n * n * n, 0.0);
    auto idx = [n](int a, int b, int c, int d) {
        return ((static_cast<std::size_t>(a) * n + b) * n + c) * n + d;
    };
    for (int a = 0; a < n; ++a) {
        for (int b = 0; b < n; ++b) {
            for (int c = 0; c < n; ++c) {
                for (int d = 0; d < n; ++d) {
                    double r = dgamma[a][d](b, c) - dgamma[b][d](a, c);
                    for (int e = 0; e < n; ++e) {
                        r += gamma[d](a, e) * gamma[e](b, c) - gamma[d](b, e) * gamma[e](a, c);
                    }
                    full[idx(a, b, c, d)] = r;
                }
            }
        }
    }

    CurvatureTensor rm(n, Basis::Coordinate);
    for (int p = 0; p < n; ++p) {
        for (int q = p + 1; q < n; ++q) {
            for (int r = 0; r < n; ++r) {
                for (int s = r + 1; s < n; ++s) {
                    auto lowered = [&](int a, int b, int c, int w) {
                        double sum = 0.0;
                        for (int d = 0; d < n; ++d) sum += g(w, d) * full[idx(a, b, c, d)];
                        return -sum;
                    };
                    // average the numerically equivalent slots into canonical storage
                    const double v = 0.25 * (lowered(p, q, r, s) - lowered(q, p, r, s) -
                                             lowered(p, q, s, r) + lowered(q, p, s, r));
                    const double w = 0.25 * (lowered(r, s, p, q) - lowered(s, r, p, q) -
                                             lowered(r, s, q, p) + lowered(s, r, q, p));
                    rm.set(p, q, r, s, 0.5 * (v + w));
                }
            }
        }
    }
    return rm;
}

CurvatureTensor riemann_orthonormal(const MetricChart& chart, const Eigen::VectorXd& x,
                                    const Eigen::MatrixXd& basis_columns, DerivsMode mode) {
    return riemann_coordinate(chart, x, mode).transformed(basis_columns, Basis::Orthonormal);
}

CurvatureReport curvature_report(const MetricChart& chart, const Eigen::VectorXd& x,
                                 DerivsMode mode) {
    CurvatureReport rep;
    rep.point = x;
    rep.tensor = riemann_coordinate(chart, x, mode);
    rep.source = (mode == DerivsMode::Auto && chart.has_curvature_oracle())
                     ? CurvatureSource::AnalyticOracle
                     : CurvatureSource::FiniteDifference;
    const auto llt = chart.metric_llt(x);
    const Eigen::MatrixXd g_inv = llt.solve(Eigen::MatrixXd::Identity(chart.dim, chart.dim));
    rep.ricci = rep.tensor.ricci(g_inv);
    rep.scalar = (g_inv * rep.ricci).trace();
    return rep;
}

namespace {

void check_order(int m, int n) {
    if (m < 1 || m > n - 1) throw BadOrder("order m must satisfy 1 <= m <= dim-1");
}

}  // namespace

double intermediate_curvature(const CurvatureTensor& rm, const Eigen::MatrixXd& completed_basis,
                              int m) {
    const int n = rm.dim();
    check_order(m, n);
    if (completed_basis.cols() != n || completed_basis.rows() != n) {
        throw BadShape("intermediate_curvature requires a completed basis");
    }
    NeumaierSum sum;
    for (int p = 0; p < m; ++p) {
        for (int q = p + 1; q < n; ++q) {
            sum.add(rm.quad(completed_basis.col(p), completed_basis.col(q)));
        }
    }
    return sum.value();
}

double intermediate_scalar_curvature(const CurvatureTensor& rm,
                                     const Eigen::MatrixXd& completed_basis, int m) {
    const int n = rm.dim();
    check_order(m, n);
    if (completed_basis.cols() != n || completed_basis.rows() != n) {
        throw BadShape("intermediate_scalar_curvature requires a completed basis");
    }
    NeumaierSum sum;
    for (int p = m; p < n; ++p) {
        for (int q = m; q < n; ++q) {
            if (p == q) continue;
            sum.add(rm.quad(completed_basis.col(p), completed_basis.col(q)));
        }
    }
    return sum.value();
}

double intermediate_curvature(const CurvatureTensor& rm, const OrthonormalFrame& frame, int m) {
    return intermediate_curvature(rm, frame.completed(), m);
}

double intermediate_scalar_curvature(const CurvatureTensor& rm, const OrthonormalFrame& frame,
                                     int m) {
    return intermediate_scalar_curvature(rm, frame.completed(), m);
}

}  // namespace curvlab
