#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <memory>
#include <string>
#include <vector>

#include "curvlab/geometry.hpp"
#include "curvlab/interpolant.hpp"

namespace curvlab {

// ---------------------------------------------------------------------------
// Periodic graph hypersurfaces over a uniform base grid.
//
// The graph lives in an ambient chart of dimension d: the first d-1
// coordinates form the base, the last is the height, x_d = u(x'). Nodes sit
// at cell centers. Periodic base axes wrap; non-periodic ones (trimmed polar
// angles) use mirror ghosts, i.e. natural Neumann walls.
// ---------------------------------------------------------------------------

struct SurfaceGrid {
    int base_dim = 0;
    int res = 0;
    std::vector<CoordAxis> axes;  // base axes only

    int cell_count() const {
        int c = 1;
        for (int i = 0; i < base_dim; ++i) c *= res;
        return c;
    }
    double spacing(int axis) const { return axes[axis].length() / res; }
    double cell_volume() const {
        double v = 1.0;
        for (int i = 0; i < base_dim; ++i) v *= spacing(i);
        return v;
    }

    // mirror for non-periodic axes, wrap for periodic ones
    int resolve(int idx, int axis) const {
        if (axes[axis].periodic) {
            idx %= res;
            return idx < 0 ? idx + res : idx;
        }
        while (idx < 0 || idx >= res) {
            if (idx < 0) idx = -1 - idx;
            if (idx >= res) idx = 2 * res - 1 - idx;
        }
        return idx;
    }

    int flatten(const std::vector<int>& idx) const {
        int flat = 0;
        for (int i = 0; i < base_dim; ++i) flat = flat * res + resolve(idx[i], i);
        return flat;
    }
    std::vector<int> unflatten(int flat) const {
        std::vector<int> idx(base_dim);
        for (int i = base_dim - 1; i >= 0; --i) {
            idx[i] = flat % res;
            flat /= res;
        }
        return idx;
    }
    int neighbor(int flat, int axis, int offset) const {
        std::vector<int> idx = unflatten(flat);
        idx[axis] += offset;
        return flatten(idx);
    }
    Eigen::VectorXd node(int flat) const {
        const std::vector<int> idx = unflatten(flat);
        Eigen::VectorXd x(base_dim);
        for (int i = 0; i < base_dim; ++i) x(i) = axes[i].lo + (idx[i] + 0.5) * spacing(i);
        return x;
    }
};

// Positive weight on an ambient chart, stored through its logarithm with
// analytic or finite-difference derivative access.
class WeightField {
public:
    static WeightField constant(double rho = 1.0);
    static WeightField from_log(std::function<double(const Eigen::VectorXd&)> log_rho,
                                std::function<Eigen::VectorXd(const Eigen::VectorXd&)> grad = {},
                                std::function<Eigen::MatrixXd(const Eigen::VectorXd&)> hess = {});
    // wraps a raw positive field; throws NonpositiveWeight on evaluation of
    // nonpositive values, derivatives fall back to central differences
    static WeightField from_positive(std::function<double(const Eigen::VectorXd&)> rho);

    double rho(const Eigen::VectorXd& x) const { return std::exp(log_rho(x)); }
    double log_rho(const Eigen::VectorXd& x) const;
    Eigen::VectorXd grad_log(const Eigen::VectorXd& x) const;    // coordinate partials
    Eigen::MatrixXd hess_log(const Eigen::VectorXd& x) const;    // plain second partials
    bool is_constant() const { return constant_; }

private:
    std::function<double(const Eigen::VectorXd&)> log_fn_;
    std::function<Eigen::VectorXd(const Eigen::VectorXd&)> grad_fn_;
    std::function<Eigen::MatrixXd(const Eigen::VectorXd&)> hess_fn_;
    bool constant_ = false;
};

struct DiscreteHypersurface {
    const MetricChart* ambient = nullptr;
    SurfaceGrid grid;
    Eigen::VectorXd height;

    // per-cell derived data, filled by recompute()
    struct Cell {
        Eigen::VectorXd point;      // ambient coordinates of the embedded node
        Eigen::VectorXd du;         // height gradient (4th-order stencil)
        Eigen::MatrixXd d2u;        // height Hessian
        Eigen::MatrixXd tangents;   // d x b
        Eigen::VectorXd normal;     // g-unit upward normal
        Eigen::MatrixXd g_ind;      // induced metric
        Eigen::MatrixXd g_inv;
        Eigen::MatrixXd second_ff;  // h(t_i, t_j), convention h(X,Y) = <D_X nu, Y>
        double mean_curvature = 0.0;
        double h_norm2 = 0.0;
        double sqrt_det = 0.0;
        double normal_scale = 0.0;  // du increment realizing unit normal speed
    };
    std::vector<Cell> cells;

    int cell_count() const { return grid.cell_count(); }
    void recompute();
};

// Builds a graph hypersurface over the first d-1 ambient coordinates.
DiscreteHypersurface make_graph(const MetricChart& ambient, int res,
                                const Eigen::VectorXd& height);
DiscreteHypersurface make_graph(const MetricChart& ambient, int res,
                                const std::function<double(const Eigen::VectorXd&)>& height_fn);

// height update u + s * f / <nu, e_d>_g, realizing normal speed f at first order
DiscreteHypersurface normal_speed_path(const DiscreteHypersurface& hs, const Eigen::VectorXd& f,
                                       double s);

// ---------------------------------------------------------------------------
// Functionals and variational formulas
// ---------------------------------------------------------------------------

double weighted_area(const DiscreteHypersurface& hs, const WeightField& rho);

// integral of rho f (H + <grad log rho, nu>) dmu
double first_variation(const DiscreteHypersurface& hs, const WeightField& rho,
                       const Eigen::VectorXd& f);

// per-cell H + <grad log rho, nu>; sup-norm is the criticality defect
Eigen::VectorXd critical_residual(const DiscreteHypersurface& hs, const WeightField& rho);

// stability-operator potential |h|^2 + Ric(nu,nu) - Hess(log rho)(nu,nu)
Eigen::VectorXd potential_field(const DiscreteHypersurface& hs, const WeightField& rho);

// ambient Ricci contracted twice with the unit normal, one value per cell
Eigen::VectorXd ambient_ricci_normal(const DiscreteHypersurface& hs);

// covariant ambient Hessian of log rho contracted twice with the unit normal
Eigen::VectorXd weight_hessian_normal(const DiscreteHypersurface& hs, const WeightField& rho);

// covariant Laplacian of log rho on the ambient chart at a point
double ambient_log_laplacian(const MetricChart& chart, const WeightField& rho,
                             const Eigen::VectorXd& point);

// quadratic form of the second variation at a critical hypersurface; throws
// NotCritical when the criticality defect exceeds 1e-5
double second_variation(const DiscreteHypersurface& hs, const WeightField& rho,
                        const Eigen::VectorXd& f);

// Self-adjoint discretization of
//   L v = -Lap_S v - <grad_S log rho, grad_S v> - (|h|^2 + Ric(nu,nu)) v
//         + Hess(log rho)(nu,nu) v
// in the rho dmu inner product. `stiffness` is the Dirichlet form matrix,
// so <L u, v>_rho = u^T (stiffness - diag(mass * potential)) v exactly.
struct StabilityOperator {
    Eigen::SparseMatrix<double> stiffness;
    Eigen::VectorXd mass;       // rho sqrt(det g) * cell volume
    Eigen::VectorXd potential;  // |h|^2 + Ric(nu,nu) - Hess(log rho)(nu,nu)
    std::string descriptor;

    int size() const { return static_cast<int>(mass.size()); }
    Eigen::SparseMatrix<double> bilinear() const;            // stiffness - diag(mass*potential)
    Eigen::VectorXd apply(const Eigen::VectorXd& f) const;   // L f
    double quad_form(const Eigen::VectorXd& f) const;        // <L f, f>_rho
    // true when the compact stride-1 part has no positive off-diagonal and
    // wide-stencil corrections stay dominated
    bool near_m_matrix(double* worst_ratio = nullptr) const;
};

StabilityOperator assemble_stability_operator(const DiscreteHypersurface& hs,
                                              const WeightField& rho);

struct StabilityReport {
    double lambda1 = 0.0;
    Eigen::VectorXd eigenfunction;  // normalized to max 1
    double residual = 0.0;          // sup-norm, relative
    std::string operator_descriptor;
    int iterations = 0;
};

// Smallest eigenpair by shifted inverse iteration (shift below the spectrum
// via a generalized Gershgorin bound). Throws IterationLimit with the best
// residual if 1e-8 is not reached.
StabilityReport first_eigenpair(const StabilityOperator& op);

// Plain surface differential toolkit (4th-order stencils), shared by the
// slicing identities.
Eigen::VectorXd laplace_beltrami(const DiscreteHypersurface& hs, const Eigen::VectorXd& f);
// per-cell gradient components, cells x b
Eigen::MatrixXd surface_gradient(const DiscreteHypersurface& hs, const Eigen::VectorXd& f);
// g_ind-inner product of two per-cell gradients
Eigen::VectorXd gradient_inner(const DiscreteHypersurface& hs, const Eigen::MatrixXd& ga,
                               const Eigen::MatrixXd& gb);

struct MinimizeAreaOptions {
    int max_iters = 2000;
    double tol = 1e-6;            // criticality sup-norm target
    double precond = 0.25;        // strength of the (I - c*Lap)^{-1} smoother
    int spot_check_count = 50;    // random stability probes on the result
    uint64_t seed = 101;
};

struct MinimizeAreaResult {
    DiscreteHypersurface surface;
    bool converged = false;
    int iterations = 0;
    double residual = 0.0;
    bool stable_spot_check = false;
    double worst_spot_ratio = 0.0;  // min of Q(f)/<f,f>_rho over the probes
};

// Preconditioned gradient descent on the height function; stops at the
// criticality target or the iteration cap (best iterate returned, flagged).
MinimizeAreaResult minimize_weighted_area(const DiscreteHypersurface& hs0,
                                          const WeightField& rho,
                                          const MinimizeAreaOptions& opts = {});

// ---------------------------------------------------------------------------
// Smooth view of a periodic graph through trigonometric interpolation, and
// the induced chart that makes a converged slice usable as the next ambient
// space.
// ---------------------------------------------------------------------------

class GraphView {
public:
    GraphView(const MetricChart& ambient, const SurfaceGrid& grid, const Eigen::VectorXd& height,
              double truncation = 1e-13);

    const MetricChart& ambient() const { return *ambient_; }
    const SurfaceGrid& grid() const { return grid_; }
    int base_dim() const { return grid_.base_dim; }

    double height(const Eigen::VectorXd& base_point) const;
    Eigen::VectorXd height_grad(const Eigen::VectorXd& base_point) const;
    Eigen::MatrixXd height_hess(const Eigen::VectorXd& base_point) const;

    Eigen::VectorXd embed(const Eigen::VectorXd& base_point) const;
    Eigen::MatrixXd tangents(const Eigen::VectorXd& base_point) const;   // d x b
    Eigen::VectorXd unit_normal(const Eigen::VectorXd& base_point) const;
    Eigen::MatrixXd induced_metric(const Eigen::VectorXd& base_point) const;
    // analytic first derivatives of the induced metric
    std::vector<Eigen::MatrixXd> induced_metric_derivs(const Eigen::VectorXd& base_point) const;
    Eigen::MatrixXd second_fundamental_form(const Eigen::VectorXd& base_point) const;

private:
    const MetricChart* ambient_;
    SurfaceGrid grid_;
    TrigInterpolant interp_;
};

// Chart whose metric is the induced metric of the graph; the returned chart
// keeps the view alive through shared ownership.
std::shared_ptr<MetricChart> induced_chart(std::shared_ptr<GraphView> view, std::string label);

// Weight field on the base coordinates of a graph, interpolated from
// log-values sampled at the grid nodes.
WeightField weight_from_grid_log(const SurfaceGrid& grid, const Eigen::VectorXd& log_values,
                                 double truncation = 1e-13);

// ---------------------------------------------------------------------------
// Grid dumps: header (dims, resolution, axes) + row-major little-endian f64
// height payload.
// ---------------------------------------------------------------------------

void write_surface(const DiscreteHypersurface& hs, const std::string& path);
DiscreteHypersurface read_surface(const MetricChart& ambient, const std::string& path);

}  // namespace curvlab
