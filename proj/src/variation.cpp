#include "curvlab/variation.hpp"

#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "curvlab/curvature.hpp"

namespace curvlab {

namespace {

// 4th-order central difference weights for offsets -2,-1,+1,+2 (divide by h)
constexpr double kD4[4] = {1.0 / 12.0, -8.0 / 12.0, 8.0 / 12.0, -1.0 / 12.0};
constexpr int kD4Off[4] = {-2, -1, 1, 2};

double stencil_d1(const Eigen::VectorXd& f, const SurfaceGrid& grid, int cell, int axis) {
    double sum = 0.0;
    for (int s = 0; s < 4; ++s) sum += kD4[s] * f(grid.neighbor(cell, axis, kD4Off[s]));
    return sum / grid.spacing(axis);
}

double stencil_d2(const Eigen::VectorXd& f, const SurfaceGrid& grid, int cell, int axis) {
    const double h = grid.spacing(axis);
    const double sum = -f(grid.neighbor(cell, axis, 2)) + 16.0 * f(grid.neighbor(cell, axis, 1)) -
                       30.0 * f(cell) + 16.0 * f(grid.neighbor(cell, axis, -1)) -
                       f(grid.neighbor(cell, axis, -2));
    return sum / (12.0 * h * h);
}

double stencil_mixed(const Eigen::VectorXd& f, const SurfaceGrid& grid, int cell, int ax_a,
                     int ax_b) {
    double sum = 0.0;
    for (int s = 0; s < 4; ++s) {
        const int mid = grid.neighbor(cell, ax_a, kD4Off[s]);
        double inner = 0.0;
        for (int t = 0; t < 4; ++t) inner += kD4[t] * f(grid.neighbor(mid, ax_b, kD4Off[t]));
        sum += kD4[s] * inner;
    }
    return sum / (grid.spacing(ax_a) * grid.spacing(ax_b));
}

// Enumerates the Dirichlet form sum_x C(x)^{ij} (grad u)_i (grad v)_j h^b as
// COO entries through `sink(row, col, weight)`:
//  - diagonal coefficients via Richardson-combined stride-1/stride-2 fluxes,
//  - mixed coefficients via 4th-order central gradients.
// Edges across non-periodic walls are dropped (natural Neumann).
void dirichlet_entries(const DiscreteHypersurface& hs, const Eigen::VectorXd& coeff,
                       const std::function<void(int, int, double)>& sink) {
    const SurfaceGrid& grid = hs.grid;
    const int cells = grid.cell_count();
    const int b = grid.base_dim;
    const double vol = grid.cell_volume();

    // C(x) = coeff(x) * g_inv(x) * cell volume
    auto cmat = [&](int cell) { return (coeff(cell) * vol) * hs.cells[cell].g_inv; };

    for (int cell = 0; cell < cells; ++cell) {
        const std::vector<int> idx = grid.unflatten(cell);
        const Eigen::MatrixXd c_here = cmat(cell);
        for (int i = 0; i < b; ++i) {
            const double h = grid.spacing(i);
            const bool periodic = grid.axes[i].periodic;
            // stride-1 edge (cell, cell + e_i)
            if (periodic || idx[i] + 1 < grid.res) {
                const int right = grid.neighbor(cell, i, 1);
                const double w = (4.0 / 3.0) * 0.5 * (c_here(i, i) + cmat(right)(i, i)) / (h * h);
                sink(cell, cell, w);
                sink(right, right, w);
                sink(cell, right, -w);
                sink(right, cell, -w);
            }
            // stride-2 correction edge (cell, cell + 2 e_i)
            if (periodic || idx[i] + 2 < grid.res) {
                const int mid = grid.neighbor(cell, i, 1);
                const int far = grid.neighbor(cell, i, 2);
                const double w = -(1.0 / 3.0) * cmat(mid)(i, i) / (4.0 * h * h);
                sink(cell, cell, w);
                sink(far, far, w);
                sink(cell, far, -w);
                sink(far, cell, -w);
            }
            // mixed terms
            for (int j = i + 1; j < b; ++j) {
                const double cij = c_here(i, j);
                if (cij == 0.0) continue;
                const double hj = grid.spacing(j);
                for (int s = 0; s < 4; ++s) {
                    const int row = grid.neighbor(cell, i, kD4Off[s]);
                    for (int t = 0; t < 4; ++t) {
                        const int col = grid.neighbor(cell, j, kD4Off[t]);
                        const double w = cij * kD4[s] * kD4[t] / (h * hj);
                        sink(row, col, w);
                        sink(col, row, w);
                    }
                }
            }
        }
    }
}

Eigen::SparseMatrix<double> assemble_dirichlet(const DiscreteHypersurface& hs,
                                               const Eigen::VectorXd& coeff) {
    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(static_cast<std::size_t>(hs.cell_count()) * 48);
    dirichlet_entries(hs, coeff, [&](int r, int c, double w) { trips.emplace_back(r, c, w); });
    Eigen::SparseMatrix<double> a(hs.cell_count(), hs.cell_count());
    a.setFromTriplets(trips.begin(), trips.end());
    return a;
}

double dirichlet_energy(const DiscreteHypersurface& hs, const Eigen::VectorXd& coeff,
                        const Eigen::VectorXd& u, const Eigen::VectorXd& v) {
    NeumaierSum e;
    dirichlet_entries(hs, coeff, [&](int r, int c, double w) { e.add(w * u(r) * v(c)); });
    return e.value();
}

void require_critical(const DiscreteHypersurface& hs, const WeightField& rho,
                      const char* where) {
    const double defect = critical_residual(hs, rho).cwiseAbs().maxCoeff();
    if (defect >= 1e-5) {
        throw NotCritical(std::string(where) + ": criticality defect " + std::to_string(defect) +
                          " exceeds 1e-5");
    }
}

// light-weight weighted area of a height vector (no curvature data)
double area_of_height(const MetricChart& chart, const SurfaceGrid& grid,
                      const Eigen::VectorXd& height, const WeightField& rho) {
    const int cells = grid.cell_count();
    const int b = grid.base_dim;
    const int d = chart.dim;
    NeumaierSum total;
    Eigen::VectorXd point(d);
    for (int cell = 0; cell < cells; ++cell) {
        const Eigen::VectorXd base = grid.node(cell);
        point.head(b) = base;
        point(d - 1) = height(cell);
        const Eigen::MatrixXd g = chart.metric(point);
        Eigen::MatrixXd g_ind(b, b);
        Eigen::VectorXd du(b);
        for (int i = 0; i < b; ++i) du(i) = stencil_d1(height, grid, cell, i);
        for (int i = 0; i < b; ++i) {
            for (int j = i; j < b; ++j) {
                double v = g(i, j) + du(i) * g(i, d - 1) + du(j) * g(d - 1, i) +
                           du(i) * du(j) * g(d - 1, d - 1);
                g_ind(i, j) = v;
                g_ind(j, i) = v;
            }
        }
        const double det = g_ind.determinant();
        if (!(det > 0.0)) throw SingularMetric("degenerate induced metric in area evaluation");
        const double w = rho.rho(point);
        if (!(w > 0.0)) throw NonpositiveWeight("weight must be positive");
        total.add(w * std::sqrt(det) * grid.cell_volume());
    }
    return total.value();
}

}  // namespace

// ---------------------------------------------------------------------------
// WeightField
// ---------------------------------------------------------------------------

WeightField WeightField::constant(double rho) {
    if (!(rho > 0.0)) throw NonpositiveWeight("constant weight must be positive");
    WeightField w;
    const double log_value = std::log(rho);
    w.log_fn_ = [log_value](const Eigen::VectorXd&) { return log_value; };
    w.grad_fn_ = [](const Eigen::VectorXd& x) { return Eigen::VectorXd::Zero(x.size()).eval(); };
    w.hess_fn_ = [](const Eigen::VectorXd& x) {
        return Eigen::MatrixXd::Zero(x.size(), x.size()).eval();
    };
    w.constant_ = true;
    return w;
}

WeightField WeightField::from_log(std::function<double(const Eigen::VectorXd&)> log_rho,
                                  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> grad,
                                  std::function<Eigen::MatrixXd(const Eigen::VectorXd&)> hess) {
    WeightField w;
    w.log_fn_ = std::move(log_rho);
    w.grad_fn_ = std::move(grad);
    w.hess_fn_ = std::move(hess);
    return w;
}

WeightField WeightField::from_positive(std::function<double(const Eigen::VectorXd&)> rho) {
    WeightField w;
    w.log_fn_ = [rho](const Eigen::VectorXd& x) {
        const double v = rho(x);
        if (!(v > 0.0)) throw NonpositiveWeight("weight must be positive");
        return std::log(v);
    };
    return w;
}

double WeightField::log_rho(const Eigen::VectorXd& x) const { return log_fn_(x); }

Eigen::VectorXd WeightField::grad_log(const Eigen::VectorXd& x) const {
    if (grad_fn_) return grad_fn_(x);
    const int n = static_cast<int>(x.size());
    Eigen::VectorXd g(n);
    for (int k = 0; k < n; ++k) {
        const double h = fd_step_first(x(k));
        Eigen::VectorXd xp = x, xm = x;
        xp(k) += h;
        xm(k) -= h;
        g(k) = (log_fn_(xp) - log_fn_(xm)) / (2.0 * h);
    }
    return g;
}

Eigen::MatrixXd WeightField::hess_log(const Eigen::VectorXd& x) const {
    if (hess_fn_) return hess_fn_(x);
    const int n = static_cast<int>(x.size());
    Eigen::MatrixXd hmat(n, n);
    for (int k = 0; k < n; ++k) {
        const double h = fd_step_second(x(k));
        Eigen::VectorXd xp = x, xm = x;
        xp(k) += h;
        xm(k) -= h;
        const Eigen::VectorXd gp = grad_log(xp);
        const Eigen::VectorXd gm = grad_log(xm);
        hmat.row(k) = ((gp - gm) / (2.0 * h)).transpose();
    }
    return 0.5 * (hmat + hmat.transpose());
}

// ---------------------------------------------------------------------------
// DiscreteHypersurface
// ---------------------------------------------------------------------------

void DiscreteHypersurface::recompute() {
    const int b = grid.base_dim;
    const int d = ambient->dim;
    const int n_cells = grid.cell_count();
    cells.assign(n_cells, Cell{});

    for (int cell = 0; cell < n_cells; ++cell) {
        Cell& c = cells[cell];
        const Eigen::VectorXd base = grid.node(cell);
        c.point = Eigen::VectorXd(d);
        c.point.head(b) = base;
        c.point(d - 1) = height(cell);

        c.du = Eigen::VectorXd(b);
        for (int i = 0; i < b; ++i) c.du(i) = stencil_d1(height, grid, cell, i);
        c.d2u = Eigen::MatrixXd(b, b);
        for (int i = 0; i < b; ++i) {
            c.d2u(i, i) = stencil_d2(height, grid, cell, i);
            for (int j = i + 1; j < b; ++j) {
                c.d2u(i, j) = stencil_mixed(height, grid, cell, i, j);
                c.d2u(j, i) = c.d2u(i, j);
            }
        }

        const Eigen::MatrixXd g = ambient->metric(c.point);
        c.tangents = Eigen::MatrixXd::Zero(d, b);
        for (int i = 0; i < b; ++i) {
            c.tangents(i, i) = 1.0;
            c.tangents(d - 1, i) = c.du(i);
        }
        c.g_ind = c.tangents.transpose() * g * c.tangents;
        Eigen::LLT<Eigen::MatrixXd> llt_ind(c.g_ind);
        if (llt_ind.info() != Eigen::Success) {
            throw SingularMetric("degenerate induced metric on the graph");
        }
        c.g_inv = llt_ind.solve(Eigen::MatrixXd::Identity(b, b));
        double det = 1.0;
        const Eigen::MatrixXd l_ind = llt_ind.matrixL();
        for (int i = 0; i < b; ++i) det *= l_ind(i, i);
        c.sqrt_det = det;

        // upward conormal (-du, 1); normal nu = g^{-1} n / |n|_{g^{-1}}
        Eigen::VectorXd conormal = Eigen::VectorXd::Zero(d);
        for (int i = 0; i < b; ++i) conormal(i) = -c.du(i);
        conormal(d - 1) = 1.0;
        Eigen::LLT<Eigen::MatrixXd> llt_g(g);
        if (llt_g.info() != Eigen::Success) throw SingularMetric("ambient metric not SPD");
        const Eigen::VectorXd raw = llt_g.solve(conormal);
        const double norm = std::sqrt(conormal.dot(raw));
        c.normal = raw / norm;
        c.normal_scale = norm;

        // h(t_i, t_j) = -<nu, D_{t_i} t_j>
        const auto gamma = christoffel(*ambient, c.point);
        const Eigen::VectorXd g_nu = conormal / norm;  // G * nu
        c.second_ff = Eigen::MatrixXd(b, b);
        for (int i = 0; i < b; ++i) {
            for (int j = i; j < b; ++j) {
                double accel = c.d2u(i, j) * g_nu(d - 1);
                for (int cc = 0; cc < d; ++cc) {
                    double gij = 0.0;
                    for (int a = 0; a < d; ++a) {
                        for (int bb = 0; bb < d; ++bb) {
                            gij += gamma[cc](a, bb) * c.tangents(a, i) * c.tangents(bb, j);
                        }
                    }
                    accel += gij * g_nu(cc);
                }
                c.second_ff(i, j) = -accel;
                c.second_ff(j, i) = c.second_ff(i, j);
            }
        }
        const Eigen::MatrixXd shape = c.g_inv * c.second_ff;
        c.mean_curvature = shape.trace();
        c.h_norm2 = (shape * shape).trace();
    }
}

DiscreteHypersurface make_graph(const MetricChart& ambient, int res,
                                const Eigen::VectorXd& height) {
    if (ambient.dim < 2) throw BadSpec("graph hypersurfaces need ambient dimension >= 2");
    DiscreteHypersurface hs;
    hs.ambient = &ambient;
    hs.grid.base_dim = ambient.dim - 1;
    hs.grid.res = res;
    hs.grid.axes.assign(ambient.axes.begin(), ambient.axes.end() - 1);
    if (height.size() != hs.grid.cell_count()) {
        throw BadShape("height vector size does not match the grid");
    }
    hs.height = height;
    hs.recompute();
    return hs;
}

DiscreteHypersurface make_graph(const MetricChart& ambient, int res,
                                const std::function<double(const Eigen::VectorXd&)>& height_fn) {
    DiscreteHypersurface hs;
    hs.ambient = &ambient;
    hs.grid.base_dim = ambient.dim - 1;
    hs.grid.res = res;
    hs.grid.axes.assign(ambient.axes.begin(), ambient.axes.end() - 1);
    Eigen::VectorXd h(hs.grid.cell_count());
    for (int cell = 0; cell < hs.grid.cell_count(); ++cell) h(cell) = height_fn(hs.grid.node(cell));
    hs.height = h;
    hs.recompute();
    return hs;
}

DiscreteHypersurface normal_speed_path(const DiscreteHypersurface& hs, const Eigen::VectorXd& f,
                                       double s) {
    Eigen::VectorXd h = hs.height;
    for (int cell = 0; cell < hs.cell_count(); ++cell) {
        h(cell) += s * f(cell) * hs.cells[cell].normal_scale;
    }
    DiscreteHypersurface out = hs;
    out.height = h;
    out.recompute();
    return out;
}

// ---------------------------------------------------------------------------
// Functionals
// ---------------------------------------------------------------------------

double weighted_area(const DiscreteHypersurface& hs, const WeightField& rho) {
    NeumaierSum total;
    const double vol = hs.grid.cell_volume();
    for (const auto& c : hs.cells) {
        const double w = rho.rho(c.point);
        if (!(w > 0.0)) throw NonpositiveWeight("weight must be positive");
        total.add(w * c.sqrt_det * vol);
    }
    return total.value();
}

Eigen::VectorXd critical_residual(const DiscreteHypersurface& hs, const WeightField& rho) {
    Eigen::VectorXd r(hs.cell_count());
    for (int cell = 0; cell < hs.cell_count(); ++cell) {
        const auto& c = hs.cells[cell];
        double drift = 0.0;
        if (!rho.is_constant()) drift = rho.grad_log(c.point).dot(c.normal);
        r(cell) = c.mean_curvature + drift;
    }
    return r;
}

double first_variation(const DiscreteHypersurface& hs, const WeightField& rho,
                       const Eigen::VectorXd& f) {
    const Eigen::VectorXd r = critical_residual(hs, rho);
    NeumaierSum total;
    const double vol = hs.grid.cell_volume();
    for (int cell = 0; cell < hs.cell_count(); ++cell) {
        const auto& c = hs.cells[cell];
        const double w = rho.rho(c.point);
        if (!(w > 0.0)) throw NonpositiveWeight("weight must be positive");
        total.add(w * f(cell) * r(cell) * c.sqrt_det * vol);
    }
    return total.value();
}

Eigen::VectorXd ambient_ricci_normal(const DiscreteHypersurface& hs) {
    Eigen::VectorXd out(hs.cell_count());
    for (int cell = 0; cell < hs.cell_count(); ++cell) {
        const auto& c = hs.cells[cell];
        const CurvatureTensor rm = riemann_coordinate(*hs.ambient, c.point);
        const Eigen::MatrixXd g_inv =
            hs.ambient->metric_llt(c.point).solve(Eigen::MatrixXd::Identity(hs.ambient->dim,
                                                                            hs.ambient->dim));
        out(cell) = c.normal.dot(rm.ricci(g_inv) * c.normal);
    }
    return out;
}

Eigen::VectorXd weight_hessian_normal(const DiscreteHypersurface& hs, const WeightField& rho) {
    Eigen::VectorXd out = Eigen::VectorXd::Zero(hs.cell_count());
    if (rho.is_constant()) return out;
    const int d = hs.ambient->dim;
    for (int cell = 0; cell < hs.cell_count(); ++cell) {
        const auto& c = hs.cells[cell];
        const Eigen::MatrixXd hess = rho.hess_log(c.point);
        const Eigen::VectorXd grad = rho.grad_log(c.point);
        const auto gamma = christoffel(*hs.ambient, c.point);
        double corr = 0.0;
        for (int a = 0; a < d; ++a) {
            for (int bb = 0; bb < d; ++bb) {
                double gam = 0.0;
                for (int cc = 0; cc < d; ++cc) gam += gamma[cc](a, bb) * grad(cc);
                corr += c.normal(a) * c.normal(bb) * (hess(a, bb) - gam);
            }
        }
        out(cell) = corr;
    }
    return out;
}

double ambient_log_laplacian(const MetricChart& chart, const WeightField& rho,
                             const Eigen::VectorXd& point) {
    if (rho.is_constant()) return 0.0;
    const int d = chart.dim;
    const Eigen::MatrixXd g_inv =
        chart.metric_llt(point).solve(Eigen::MatrixXd::Identity(d, d));
    const Eigen::MatrixXd hess = rho.hess_log(point);
    const Eigen::VectorXd grad = rho.grad_log(point);
    const auto gamma = christoffel(chart, point);
    double lap = (g_inv * hess).trace();
    for (int a = 0; a < d; ++a) {
        for (int bb = 0; bb < d; ++bb) {
            double gam = 0.0;
            for (int cc = 0; cc < d; ++cc) gam += gamma[cc](a, bb) * grad(cc);
            lap -= g_inv(a, bb) * gam;
        }
    }
    return lap;
}

Eigen::VectorXd potential_field(const DiscreteHypersurface& hs, const WeightField& rho) {
    const Eigen::VectorXd ric = ambient_ricci_normal(hs);
    const Eigen::VectorXd hess = weight_hessian_normal(hs, rho);
    Eigen::VectorXd w(hs.cell_count());
    for (int cell = 0; cell < hs.cell_count(); ++cell) {
        w(cell) = hs.cells[cell].h_norm2 + ric(cell) - hess(cell);
    }
    return w;
}

double second_variation(const DiscreteHypersurface& hs, const WeightField& rho,
                        const Eigen::VectorXd& f) {
    require_critical(hs, rho, "second_variation");
    Eigen::VectorXd coeff(hs.cell_count());
    Eigen::VectorXd mass(hs.cell_count());
    const double vol = hs.grid.cell_volume();
    for (int cell = 0; cell < hs.cell_count(); ++cell) {
        const auto& c = hs.cells[cell];
        const double w = rho.rho(c.point);
        if (!(w > 0.0)) throw NonpositiveWeight("weight must be positive");
        coeff(cell) = w * c.sqrt_det;
        mass(cell) = w * c.sqrt_det * vol;
    }
    const double energy = dirichlet_energy(hs, coeff, f, f);
    const Eigen::VectorXd pot = potential_field(hs, rho);
    NeumaierSum pot_term;
    for (int cell = 0; cell < hs.cell_count(); ++cell) {
        pot_term.add(pot(cell) * f(cell) * f(cell) * mass(cell));
    }
    return energy - pot_term.value();
}

// ---------------------------------------------------------------------------
// Stability operator and eigensolve
// ---------------------------------------------------------------------------

Eigen::SparseMatrix<double> StabilityOperator::bilinear() const {
    Eigen::SparseMatrix<double> s = stiffness;
    for (int i = 0; i < size(); ++i) s.coeffRef(i, i) -= mass(i) * potential(i);
    return s;
}

Eigen::VectorXd StabilityOperator::apply(const Eigen::VectorXd& f) const {
    Eigen::VectorXd out = stiffness * f;
    for (int i = 0; i < size(); ++i) out(i) = out(i) / mass(i) - potential(i) * f(i);
    return out;
}

double StabilityOperator::quad_form(const Eigen::VectorXd& f) const {
    double pot = 0.0;
    for (int i = 0; i < size(); ++i) pot += mass(i) * potential(i) * f(i) * f(i);
    return f.dot(stiffness * f) - pot;
}

bool StabilityOperator::near_m_matrix(double* worst_ratio) const {
    double worst = 0.0;
    for (int col = 0; col < stiffness.outerSize(); ++col) {
        double pos = 0.0, neg = 0.0;
        for (Eigen::SparseMatrix<double>::InnerIterator it(stiffness, col); it; ++it) {
            if (it.row() == it.col()) continue;
            if (it.value() > 0.0) pos += it.value();
            else neg -= it.value();
        }
        if (neg > 0.0) worst = std::max(worst, pos / neg);
        else if (pos > 0.0) worst = std::max(worst, 1.0);
    }
    if (worst_ratio != nullptr) *worst_ratio = worst;
    return worst < 0.2;
}

StabilityOperator assemble_stability_operator(const DiscreteHypersurface& hs,
                                              const WeightField& rho) {
    require_critical(hs, rho, "assemble_stability_operator");
    StabilityOperator op;
    const int cells = hs.cell_count();
    Eigen::VectorXd coeff(cells);
    op.mass = Eigen::VectorXd(cells);
    const double vol = hs.grid.cell_volume();
    for (int cell = 0; cell < cells; ++cell) {
        const auto& c = hs.cells[cell];
        const double w = rho.rho(c.point);
        if (!(w > 0.0)) throw NonpositiveWeight("weight must be positive");
        coeff(cell) = w * c.sqrt_det;
        op.mass(cell) = w * c.sqrt_det * vol;
    }
    op.stiffness = assemble_dirichlet(hs, coeff);
    op.potential = potential_field(hs, rho);
    op.descriptor = "weighted-stability[base_dim=" + std::to_string(hs.grid.base_dim) +
                    ",res=" + std::to_string(hs.grid.res) + ",cells=" + std::to_string(cells) + "]";
    return op;
}

StabilityReport first_eigenpair(const StabilityOperator& op) {
    const int n = op.size();
    const Eigen::SparseMatrix<double> s = op.bilinear();

    // generalized Gershgorin lower bound for S v = lambda M v
    double lower = std::numeric_limits<double>::infinity();
    for (int col = 0; col < s.outerSize(); ++col) {
        double diag = 0.0, off = 0.0;
        for (Eigen::SparseMatrix<double>::InnerIterator it(s, col); it; ++it) {
            if (it.row() == it.col()) diag = it.value();
            else off += std::abs(it.value());
        }
        lower = std::min(lower, (diag - off) / op.mass(col));
    }
    const double shift = lower - 1.0;

    Eigen::SparseMatrix<double> shifted = s;
    for (int i = 0; i < n; ++i) shifted.coeffRef(i, i) -= shift * op.mass(i);
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver(shifted);
    if (solver.info() != Eigen::Success) {
        throw IterationLimit("first_eigenpair: shifted system factorization failed");
    }

    Eigen::VectorXd v = Eigen::VectorXd::Ones(n);
    v /= std::sqrt(v.dot(op.mass.asDiagonal() * v));
    double lambda = 0.0;
    double best_res = std::numeric_limits<double>::infinity();
    StabilityReport rep;
    const int max_iters = 500;
    for (int iter = 1; iter <= max_iters; ++iter) {
        Eigen::VectorXd w = solver.solve(op.mass.asDiagonal() * v);
        w /= std::sqrt(w.dot(op.mass.asDiagonal() * w));
        v = w;
        lambda = v.dot(s * v) / v.dot(op.mass.asDiagonal() * v);

        Eigen::VectorXd vhat = v / v.cwiseAbs().maxCoeff();
        Eigen::VectorXd resid = s * vhat - lambda * (op.mass.asDiagonal() * vhat);
        resid = resid.cwiseQuotient(op.mass);
        const double rel = resid.cwiseAbs().maxCoeff() / (1.0 + std::abs(lambda));
        best_res = std::min(best_res, rel);
        if (rel < 1e-8) {
            rep.iterations = iter;
            rep.residual = rel;
            break;
        }
        if (iter == max_iters) {
            throw IterationLimit("first_eigenpair: residual stalled at " +
                                 std::to_string(best_res));
        }
    }

    int arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    rep.eigenfunction = v / v(arg);
    rep.lambda1 = lambda;
    rep.operator_descriptor = op.descriptor;
    return rep;
}

// ---------------------------------------------------------------------------
// Surface calculus helpers
// ---------------------------------------------------------------------------

Eigen::VectorXd laplace_beltrami(const DiscreteHypersurface& hs, const Eigen::VectorXd& f) {
    Eigen::VectorXd coeff(hs.cell_count());
    for (int cell = 0; cell < hs.cell_count(); ++cell) coeff(cell) = hs.cells[cell].sqrt_det;
    const Eigen::SparseMatrix<double> a = assemble_dirichlet(hs, coeff);
    Eigen::VectorXd out = a * f;
    const double vol = hs.grid.cell_volume();
    for (int cell = 0; cell < hs.cell_count(); ++cell) {
        out(cell) = -out(cell) / (hs.cells[cell].sqrt_det * vol);
    }
    return out;
}

Eigen::MatrixXd surface_gradient(const DiscreteHypersurface& hs, const Eigen::VectorXd& f) {
    const int b = hs.grid.base_dim;
    Eigen::MatrixXd grad(hs.cell_count(), b);
    for (int cell = 0; cell < hs.cell_count(); ++cell) {
        for (int i = 0; i < b; ++i) grad(cell, i) = stencil_d1(f, hs.grid, cell, i);
    }
    return grad;
}

Eigen::VectorXd gradient_inner(const DiscreteHypersurface& hs, const Eigen::MatrixXd& ga,
                               const Eigen::MatrixXd& gb) {
    Eigen::VectorXd out(hs.cell_count());
    for (int cell = 0; cell < hs.cell_count(); ++cell) {
        out(cell) = ga.row(cell) * hs.cells[cell].g_inv * gb.row(cell).transpose();
    }
    return out;
}

// ---------------------------------------------------------------------------
// Weighted-area minimization
// ---------------------------------------------------------------------------

MinimizeAreaResult minimize_weighted_area(const DiscreteHypersurface& hs0, const WeightField& rho,
                                          const MinimizeAreaOptions& opts) {
    MinimizeAreaResult result;
    DiscreteHypersurface hs = hs0;

    // smoothing preconditioner (I + c * flat stiffness)
    const int cells = hs.grid.cell_count();
    std::vector<Eigen::Triplet<double>> trips;
    for (int cell = 0; cell < cells; ++cell) {
        const std::vector<int> idx = hs.grid.unflatten(cell);
        for (int i = 0; i < hs.grid.base_dim; ++i) {
            if (!hs.grid.axes[i].periodic && idx[i] + 1 >= hs.grid.res) continue;
            const int right = hs.grid.neighbor(cell, i, 1);
            const double w = opts.precond / (hs.grid.spacing(i) * hs.grid.spacing(i));
            trips.emplace_back(cell, cell, w);
            trips.emplace_back(right, right, w);
            trips.emplace_back(cell, right, -w);
            trips.emplace_back(right, cell, -w);
        }
    }
    for (int cell = 0; cell < cells; ++cell) trips.emplace_back(cell, cell, 1.0);
    Eigen::SparseMatrix<double> precond(cells, cells);
    precond.setFromTriplets(trips.begin(), trips.end());
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> smoother(precond);

    const double vol = hs.grid.cell_volume();
    double area = weighted_area(hs, rho);
    double step = 1.0;
    int iter = 0;
    for (; iter < opts.max_iters; ++iter) {
        const Eigen::VectorXd resid = critical_residual(hs, rho);
        result.residual = resid.cwiseAbs().maxCoeff();
        if (result.residual < opts.tol) {
            result.converged = true;
            break;
        }

        Eigen::VectorXd grad_density(cells);
        for (int cell = 0; cell < cells; ++cell) {
            const auto& c = hs.cells[cell];
            grad_density(cell) = rho.rho(c.point) * resid(cell) * c.sqrt_det / c.normal_scale;
        }
        const Eigen::VectorXd dir = -smoother.solve(grad_density);
        const double slope = vol * grad_density.dot(dir);

        bool accepted = false;
        double alpha = step;
        for (int bt = 0; bt < 40; ++bt) {
            const Eigen::VectorXd cand_height = hs.height + alpha * dir;
            double cand_area;
            try {
                cand_area = area_of_height(*hs.ambient, hs.grid, cand_height, rho);
            } catch (const SingularMetric&) {
                alpha *= 0.5;
                continue;
            }
            if (cand_area <= area + 1e-4 * alpha * slope) {
                hs.height = cand_height;
                hs.recompute();
                area = cand_area;
                step = std::min(alpha * 1.3, 8.0);
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if (!accepted) break;  // descent direction exhausted at machine precision
    }
    result.iterations = iter;
    const Eigen::VectorXd final_resid = critical_residual(hs, rho);
    result.residual = final_resid.cwiseAbs().maxCoeff();
    result.converged = result.residual < opts.tol;
    result.surface = hs;

    if (result.converged && opts.spot_check_count > 0) {
        double worst = std::numeric_limits<double>::infinity();
        for (int probe = 0; probe < opts.spot_check_count; ++probe) {
            Rng rng(derive_seed(opts.seed, static_cast<uint64_t>(probe)));
            Eigen::VectorXd f(cells);
            for (int cell = 0; cell < cells; ++cell) f(cell) = rng.gaussian();
            const double q = second_variation(result.surface, rho, f);
            double norm2 = 0.0;
            for (int cell = 0; cell < cells; ++cell) {
                const auto& c = result.surface.cells[cell];
                norm2 += rho.rho(c.point) * c.sqrt_det * vol * f(cell) * f(cell);
            }
            worst = std::min(worst, q / norm2);
        }
        result.worst_spot_ratio = worst;
        result.stable_spot_check = worst >= -1e-6;
    }
    return result;
}

// ---------------------------------------------------------------------------
// GraphView / induced chart
// ---------------------------------------------------------------------------

GraphView::GraphView(const MetricChart& ambient, const SurfaceGrid& grid,
                     const Eigen::VectorXd& height, double truncation)
    : ambient_(&ambient), grid_(grid) {
    for (const auto& axis : grid.axes) {
        if (!axis.periodic) {
            throw BadSpec("GraphView requires a fully periodic base grid");
        }
    }
    if (grid.base_dim == 1) {
        interp_ = TrigInterpolant(height, grid.axes[0], truncation);
    } else if (grid.base_dim == 2) {
        Eigen::MatrixXd values(grid.res, grid.res);
        for (int i = 0; i < grid.res; ++i)
            for (int j = 0; j < grid.res; ++j) values(i, j) = height(i * grid.res + j);
        interp_ = TrigInterpolant(values, grid.axes[0], grid.axes[1], truncation);
    } else {
        throw BadSpec("GraphView supports base dimension 1 or 2");
    }
}

double GraphView::height(const Eigen::VectorXd& p) const { return interp_.value(p); }

Eigen::VectorXd GraphView::height_grad(const Eigen::VectorXd& p) const {
    const int b = grid_.base_dim;
    Eigen::VectorXd g(b);
    for (int i = 0; i < b; ++i) {
        std::vector<int> orders(b, 0);
        orders[i] = 1;
        g(i) = interp_.eval(p, orders);
    }
    return g;
}

Eigen::MatrixXd GraphView::height_hess(const Eigen::VectorXd& p) const {
    const int b = grid_.base_dim;
    Eigen::MatrixXd h(b, b);
    for (int i = 0; i < b; ++i) {
        for (int j = i; j < b; ++j) {
            std::vector<int> orders(b, 0);
            orders[i] += 1;
            orders[j] += 1;
            h(i, j) = interp_.eval(p, orders);
            h(j, i) = h(i, j);
        }
    }
    return h;
}

Eigen::VectorXd GraphView::embed(const Eigen::VectorXd& p) const {
    const int d = ambient_->dim;
    Eigen::VectorXd x(d);
    x.head(d - 1) = p.head(d - 1);
    x(d - 1) = interp_.value(p);
    return x;
}

Eigen::MatrixXd GraphView::tangents(const Eigen::VectorXd& p) const {
    const int d = ambient_->dim;
    const int b = grid_.base_dim;
    const Eigen::VectorXd du = height_grad(p);
    Eigen::MatrixXd t = Eigen::MatrixXd::Zero(d, b);
    for (int i = 0; i < b; ++i) {
        t(i, i) = 1.0;
        t(d - 1, i) = du(i);
    }
    return t;
}

Eigen::VectorXd GraphView::unit_normal(const Eigen::VectorXd& p) const {
    const int d = ambient_->dim;
    const Eigen::VectorXd du = height_grad(p);
    Eigen::VectorXd conormal = Eigen::VectorXd::Zero(d);
    for (int i = 0; i < d - 1; ++i) conormal(i) = -du(i);
    conormal(d - 1) = 1.0;
    const Eigen::MatrixXd g = ambient_->metric(embed(p));
    const Eigen::VectorXd raw = g.llt().solve(conormal);
    return raw / std::sqrt(conormal.dot(raw));
}

Eigen::MatrixXd GraphView::induced_metric(const Eigen::VectorXd& p) const {
    const Eigen::MatrixXd t = tangents(p);
    return t.transpose() * ambient_->metric(embed(p)) * t;
}

std::vector<Eigen::MatrixXd> GraphView::induced_metric_derivs(const Eigen::VectorXd& p) const {
    const int d = ambient_->dim;
    const int b = grid_.base_dim;
    const Eigen::VectorXd x = embed(p);
    const Eigen::VectorXd du = height_grad(p);
    const Eigen::MatrixXd d2u = height_hess(p);
    const Eigen::MatrixXd g = ambient_->metric(x);
    const auto dg = ambient_->metric_derivs(x);
    const Eigen::MatrixXd t = tangents(p);

    std::vector<Eigen::MatrixXd> out(b, Eigen::MatrixXd(b, b));
    for (int k = 0; k < b; ++k) {
        // ambient metric derivative along the embedded direction t_k
        Eigen::MatrixXd dg_emb = dg[k] + dg[d - 1] * du(k);
        // tangent derivatives: d_k t_i = d2u(k,i) e_d
        Eigen::MatrixXd term = t.transpose() * dg_emb * t;
        for (int i = 0; i < b; ++i) {
            for (int j = 0; j < b; ++j) {
                double extra = 0.0;
                for (int a = 0; a < d; ++a) {
                    extra += d2u(k, i) * g(d - 1, a) * t(a, j) +
                             d2u(k, j) * g(a, d - 1) * t(a, i);
                }
                term(i, j) += extra;
            }
        }
        out[k] = 0.5 * (term + term.transpose());
    }
    return out;
}

Eigen::MatrixXd GraphView::second_fundamental_form(const Eigen::VectorXd& p) const {
    const int d = ambient_->dim;
    const int b = grid_.base_dim;
    const Eigen::VectorXd x = embed(p);
    const Eigen::VectorXd du = height_grad(p);
    const Eigen::MatrixXd d2u = height_hess(p);
    const Eigen::MatrixXd t = tangents(p);
    const Eigen::MatrixXd g = ambient_->metric(x);
    const auto gamma = christoffel(*ambient_, x);

    Eigen::VectorXd conormal = Eigen::VectorXd::Zero(d);
    for (int i = 0; i < b; ++i) conormal(i) = -du(i);
    conormal(d - 1) = 1.0;
    const Eigen::VectorXd raw = g.llt().solve(conormal);
    const Eigen::VectorXd g_nu = conormal / std::sqrt(conormal.dot(raw));

    Eigen::MatrixXd h(b, b);
    for (int i = 0; i < b; ++i) {
        for (int j = i; j < b; ++j) {
            double accel = d2u(i, j) * g_nu(d - 1);
            for (int cc = 0; cc < d; ++cc) {
                double gij = 0.0;
                for (int a = 0; a < d; ++a)
                    for (int bb = 0; bb < d; ++bb)
                        gij += gamma[cc](a, bb) * t(a, i) * t(bb, j);
                accel += gij * g_nu(cc);
            }
            h(i, j) = -accel;
            h(j, i) = h(i, j);
        }
    }
    return h;
}

std::shared_ptr<MetricChart> induced_chart(std::shared_ptr<GraphView> view, std::string label) {
    auto chart = std::make_shared<MetricChart>();
    chart->dim = view->base_dim();
    chart->label = std::move(label);
    chart->axes = view->grid().axes;  // the graph direction disappears
    chart->metric = [view](const Eigen::VectorXd& x) -> Eigen::MatrixXd {
        return view->induced_metric(x);
    };
    chart->metric_derivs = [view](const Eigen::VectorXd& x) {
        return view->induced_metric_derivs(x);
    };
    return chart;
}

WeightField weight_from_grid_log(const SurfaceGrid& grid, const Eigen::VectorXd& log_values,
                                 double truncation) {
    std::shared_ptr<TrigInterpolant> interp;
    if (grid.base_dim == 1) {
        interp = std::make_shared<TrigInterpolant>(log_values, grid.axes[0], truncation);
    } else if (grid.base_dim == 2) {
        Eigen::MatrixXd values(grid.res, grid.res);
        for (int i = 0; i < grid.res; ++i)
            for (int j = 0; j < grid.res; ++j) values(i, j) = log_values(i * grid.res + j);
        interp = std::make_shared<TrigInterpolant>(values, grid.axes[0], grid.axes[1], truncation);
    } else {
        throw BadSpec("weight_from_grid_log supports base dimension 1 or 2");
    }
    const int b = grid.base_dim;
    return WeightField::from_log(
        [interp](const Eigen::VectorXd& x) { return interp->value(x); },
        [interp, b](const Eigen::VectorXd& x) {
            Eigen::VectorXd g(b);
            for (int i = 0; i < b; ++i) {
                std::vector<int> orders(b, 0);
                orders[i] = 1;
                g(i) = interp->eval(x, orders);
            }
            return g;
        },
        [interp, b](const Eigen::VectorXd& x) {
            Eigen::MatrixXd h(b, b);
            for (int i = 0; i < b; ++i) {
                for (int j = i; j < b; ++j) {
                    std::vector<int> orders(b, 0);
                    orders[i] += 1;
                    orders[j] += 1;
                    h(i, j) = interp->eval(x, orders);
                    h(j, i) = h(i, j);
                }
            }
            return h;
        });
}

// ---------------------------------------------------------------------------
// Grid dumps
// ---------------------------------------------------------------------------

namespace {
constexpr char kGridMagic[8] = {'C', 'V', 'L', 'G', 'R', 'D', '1', '\n'};
}

void write_surface(const DiscreteHypersurface& hs, const std::string& path) {
    static_assert(std::endian::native == std::endian::little,
                  "grid dumps are little-endian");
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("cannot open " + tmp + " for writing");
        out.write(kGridMagic, sizeof(kGridMagic));
        const uint32_t dims[3] = {static_cast<uint32_t>(hs.ambient->dim),
                                  static_cast<uint32_t>(hs.grid.base_dim),
                                  static_cast<uint32_t>(hs.grid.res)};
        out.write(reinterpret_cast<const char*>(dims), sizeof(dims));
        for (const auto& axis : hs.grid.axes) {
            const double bounds[2] = {axis.lo, axis.hi};
            const uint8_t periodic = axis.periodic ? 1 : 0;
            out.write(reinterpret_cast<const char*>(bounds), sizeof(bounds));
            out.write(reinterpret_cast<const char*>(&periodic), 1);
        }
        out.write(reinterpret_cast<const char*>(hs.height.data()),
                  static_cast<std::streamsize>(hs.height.size() * sizeof(double)));
        if (!out) throw Error("short write to " + tmp);
    }
    std::filesystem::rename(tmp, path);
}

DiscreteHypersurface read_surface(const MetricChart& ambient, const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path);
    char magic[8];
    in.read(magic, sizeof(magic));
    if (std::memcmp(magic, kGridMagic, sizeof(magic)) != 0) {
        throw BadSpec("not a grid dump: " + path);
    }
    uint32_t dims[3];
    in.read(reinterpret_cast<char*>(dims), sizeof(dims));
    if (static_cast<int>(dims[0]) != ambient.dim || static_cast<int>(dims[1]) != ambient.dim - 1) {
        throw BadShape("grid dump dimensions do not match the ambient chart");
    }
    DiscreteHypersurface hs;
    hs.ambient = &ambient;
    hs.grid.base_dim = static_cast<int>(dims[1]);
    hs.grid.res = static_cast<int>(dims[2]);
    hs.grid.axes.resize(hs.grid.base_dim);
    for (auto& axis : hs.grid.axes) {
        double bounds[2];
        uint8_t periodic = 0;
        in.read(reinterpret_cast<char*>(bounds), sizeof(bounds));
        in.read(reinterpret_cast<char*>(&periodic), 1);
        axis = CoordAxis{bounds[0], bounds[1], periodic != 0};
    }
    hs.height = Eigen::VectorXd(hs.grid.cell_count());
    in.read(reinterpret_cast<char*>(hs.height.data()),
            static_cast<std::streamsize>(hs.height.size() * sizeof(double)));
    if (!in) throw Error("short read from " + path);
    hs.recompute();
    return hs;
}

}  // namespace curvlab
