#include "curvlab/grassmann.hpp"

#include <cmath>
#include <mutex>
#include <sstream>

namespace curvlab {

namespace {

// Dense view of an orthonormal-basis tensor for fast contractions.
struct FlatTensor {
    int n;
    std::vector<double> v;  // n^4 row-major
    Eigen::MatrixXd ricci;

    explicit FlatTensor(const CurvatureTensor& rm) : n(rm.dim()) {
        v.resize(static_cast<std::size_t>(n) * n * n * n);
        for (int a = 0; a < n; ++a)
            for (int b = 0; b < n; ++b)
                for (int c = 0; c < n; ++c)
                    for (int d = 0; d < n; ++d) v[idx(a, b, c, d)] = rm.at(a, b, c, d);
        ricci = rm.ricci_orthonormal();
    }

    std::size_t idx(int a, int b, int c, int d) const {
        return ((static_cast<std::size_t>(a) * n + b) * n + c) * n + d;
    }

    // M(w)_{ac} = sum_{bd} Rm(a,b,c,d) w_b w_d ; symmetric via pair-swap symmetry.
    Eigen::MatrixXd plane_form(const Eigen::VectorXd& w) const {
        Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n, n);
        for (int a = 0; a < n; ++a) {
            for (int c = 0; c < n; ++c) {
                double sum = 0.0;
                const double* base = &v[idx(a, 0, c, 0)];
                for (int b = 0; b < n; ++b) {
                    const double wb = w(b);
                    if (wb == 0.0) {
                        continue;
                    }
                    const double* row = base + static_cast<std::size_t>(b) * n * n;
                    double inner = 0.0;
                    for (int d = 0; d < n; ++d) inner += row[d] * w(d);
                    sum += wb * inner;
                }
                m(a, c) = sum;
            }
        }
        return m;
    }
};

struct ObjectiveEval {
    double value;
    Eigen::MatrixXd euclid_grad;  // n x m
};

double objective_only(const FlatTensor& t, const Eigen::MatrixXd& f) {
    const int m = static_cast<int>(f.cols());
    double val = 0.0;
    for (int p = 0; p < m; ++p) val += f.col(p).dot(t.ricci * f.col(p));
    for (int p = 0; p < m; ++p) {
        const Eigen::MatrixXd mp = t.plane_form(f.col(p));
        for (int q = p + 1; q < m; ++q) val -= f.col(q).dot(mp * f.col(q));
    }
    return val;
}

ObjectiveEval objective_and_grad(const FlatTensor& t, const Eigen::MatrixXd& f) {
    const int n = t.n;
    const int m = static_cast<int>(f.cols());
    std::vector<Eigen::MatrixXd> forms(m);
    for (int p = 0; p < m; ++p) forms[p] = t.plane_form(f.col(p));

    ObjectiveEval out;
    out.value = 0.0;
    out.euclid_grad = Eigen::MatrixXd::Zero(n, m);
    for (int p = 0; p < m; ++p) {
        out.value += f.col(p).dot(t.ricci * f.col(p));
        Eigen::VectorXd g = 2.0 * (t.ricci * f.col(p));
        for (int q = 0; q < m; ++q) {
            if (q == p) continue;
            if (q > p) out.value -= f.col(q).dot(forms[p] * f.col(q));
            g -= 2.0 * (forms[q] * f.col(p));
        }
        out.euclid_grad.col(p) = g;
    }
    return out;
}

Eigen::MatrixXd qr_retract(const Eigen::MatrixXd& f) {
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(f);
    Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(f.rows(), f.cols());
    const Eigen::MatrixXd r = qr.matrixQR().topRows(f.cols()).triangularView<Eigen::Upper>();
    for (int j = 0; j < f.cols(); ++j) {
        if (r(j, j) < 0.0) q.col(j) = -q.col(j);
    }
    return q;
}

Eigen::MatrixXd stiefel_project(const Eigen::MatrixXd& f, const Eigen::MatrixXd& grad) {
    const Eigen::MatrixXd ftg = f.transpose() * grad;
    return grad - f * (0.5 * (ftg + ftg.transpose()));
}

MinimizationResult descend(const FlatTensor& t, int m, Eigen::MatrixXd f,
                           const MinimizeOptions& opts) {
    constexpr double armijo_c = 1e-4;
    MinimizationResult res;
    res.m = m;
    double step = opts.step;
    ObjectiveEval cur = objective_and_grad(t, f);
    double grad_norm = stiefel_project(f, cur.euclid_grad).norm();

    for (int iter = 0; iter < opts.max_iters; ++iter) {
        const Eigen::MatrixXd dir = -stiefel_project(f, cur.euclid_grad);
        grad_norm = dir.norm();
        if (grad_norm < opts.grad_tol) break;

        const double slope = -grad_norm * grad_norm;
        double alpha = step;
        bool accepted = false;
        for (int bt = 0; bt < 60; ++bt) {
            const Eigen::MatrixXd cand = qr_retract(f + alpha * dir);
            const double cand_val = objective_only(t, cand);
            if (cand_val <= cur.value + armijo_c * alpha * slope) {
                f = cand;
                cur = objective_and_grad(t, f);
                step = std::min(alpha * 1.5, 8.0);
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if (!accepted) break;  // line search exhausted near machine precision
    }

    grad_norm = stiefel_project(f, cur.euclid_grad).norm();
    res.min_value = cur.value;
    res.argmin_frame = f;
    res.gradient_norm_at_end = grad_norm;
    res.converged = grad_norm < opts.grad_tol;
    return res;
}

}  // namespace

double cm_value(const CurvatureTensor& orthonormal_tensor, const Eigen::MatrixXd& frame_columns) {
    if (orthonormal_tensor.basis() != Basis::Orthonormal) {
        throw BadSpec("cm_value requires an orthonormal-basis tensor");
    }
    FlatTensor t(orthonormal_tensor);
    return objective_only(t, frame_columns);
}

MinimizationResult minimize_cm(const CurvatureTensor& orthonormal_tensor, int m,
                               const MinimizeOptions& opts) {
    const int n = orthonormal_tensor.dim();
    if (m < 1 || m > n - 1) throw BadOrder("minimize_cm: order m must satisfy 1 <= m <= n-1");
    if (orthonormal_tensor.basis() != Basis::Orthonormal) {
        throw BadSpec("minimize_cm requires an orthonormal-basis tensor");
    }

    FlatTensor t(orthonormal_tensor);
    MinimizationResult best;
    bool first = true;
    for (int r = 0; r < opts.restarts; ++r) {
        Rng rng(derive_seed(opts.seed, static_cast<uint64_t>(r)));
        Eigen::MatrixXd z(n, m);
        for (int j = 0; j < m; ++j)
            for (int i = 0; i < n; ++i) z(i, j) = rng.gaussian();
        MinimizationResult res = descend(t, m, qr_retract(z), opts);
        res.restarts_used = r + 1;
        if (first || res.min_value < best.min_value) {
            res.restarts_used = opts.restarts;
            best = res;
            first = false;
        }
    }
    best.restarts_used = opts.restarts;
    return best;
}

std::string to_string(Verdict v) {
    switch (v) {
        case Verdict::Positive: return "positive";
        case Verdict::Nonnegative: return "nonnegative";
        case Verdict::Indefinite: return "indefinite";
    }
    return "unknown";
}

std::vector<Eigen::VectorXd> sample_points(const MetricChart& chart, const SamplerSpec& sampler) {
    std::vector<Eigen::VectorXd> pts;
    const int n = chart.dim;
    if (sampler.kind == SamplerSpec::Kind::Grid) {
        const int per_axis =
            std::max(1, static_cast<int>(std::ceil(std::pow(sampler.count, 1.0 / n))));
        std::vector<int> index(n, 0);
        while (static_cast<int>(pts.size()) < sampler.count) {
            Eigen::VectorXd x(n);
            for (int i = 0; i < n; ++i) {
                x(i) = chart.axes[i].lo + (index[i] + 0.5) * chart.axes[i].length() / per_axis;
            }
            pts.push_back(x);
            int axis = 0;
            while (axis < n && ++index[axis] == per_axis) {
                index[axis] = 0;
                ++axis;
            }
            if (axis == n) break;
        }
    } else {
        for (int i = 0; i < sampler.count; ++i) {
            Rng rng(derive_seed(sampler.seed, static_cast<uint64_t>(i)));
            Eigen::VectorXd x(n);
            for (int a = 0; a < n; ++a) {
                x(a) = rng.uniform(chart.axes[a].lo, chart.axes[a].hi);
            }
            pts.push_back(x);
        }
    }
    return pts;
}

PositivityCertificate certify(const MetricChart& chart, int m, const SamplerSpec& sampler,
                              const CertifyOptions& opts) {
    PositivityCertificate cert;
    cert.chart_id = chart.label.empty() ? "chart" : chart.label;
    cert.m = m;
    cert.tol_pos = opts.tol_pos;

    const auto pts = sample_points(chart, sampler);
    cert.points.resize(pts.size());

    std::string failure;
    std::mutex failure_mutex;
    parallel_for(
        pts.size(),
        [&](std::size_t i) {
            try {
                const Eigen::MatrixXd basis = orthonormal_coordinate_basis(chart, pts[i]);
                const CurvatureTensor rm = riemann_orthonormal(chart, pts[i], basis);
                MinimizeOptions mopts = opts.minimize;
                mopts.seed = derive_seed(opts.minimize.seed, static_cast<uint64_t>(i));
                cert.points[i].point = pts[i];
                cert.points[i].minimization = minimize_cm(rm, m, mopts);
            } catch (const SingularMetric& err) {
                std::lock_guard<std::mutex> lock(failure_mutex);
                std::ostringstream os;
                os << err.what() << " at point [" << pts[i].transpose() << "]";
                if (failure.empty()) failure = os.str();
            }
        },
        opts.threads);
    if (!failure.empty()) throw SingularMetric(failure);

    cert.worst_index = 0;
    for (std::size_t i = 0; i < cert.points.size(); ++i) {
        if (cert.points[i].minimization.min_value <
            cert.points[cert.worst_index].minimization.min_value) {
            cert.worst_index = static_cast<int>(i);
        }
    }
    cert.global_min = cert.points[cert.worst_index].minimization.min_value;
    if (cert.global_min > cert.tol_pos) {
        cert.verdict = Verdict::Positive;
    } else if (cert.global_min < -cert.tol_pos) {
        cert.verdict = Verdict::Indefinite;
        cert.witness_index = cert.worst_index;
    } else {
        cert.verdict = Verdict::Nonnegative;
    }
    return cert;
}

CurvatureTensor random_algebraic_tensor(int n, Rng& rng) {
    std::vector<double> raw(static_cast<std::size_t>(n) * n * n * n);
    for (double& x : raw) x = rng.gaussian();
    auto idx = [n](int a, int b, int c, int d) {
        return ((static_cast<std::size_t>(a) * n + b) * n + c) * n + d;
    };
    auto pair_part = [&](int a, int b, int c, int d) {
        return 0.25 * (raw[idx(a, b, c, d)] - raw[idx(b, a, c, d)] - raw[idx(a, b, d, c)] +
                       raw[idx(b, a, d, c)]);
    };
    auto sym_part = [&](int a, int b, int c, int d) {
        return 0.5 * (pair_part(a, b, c, d) + pair_part(c, d, a, b));
    };

    CurvatureTensor rm(n, Basis::Orthonormal);
    for (int p = 0; p < n; ++p) {
        for (int q = p + 1; q < n; ++q) {
            for (int r = 0; r < n; ++r) {
                for (int s = r + 1; s < n; ++s) {
                    const double cyc = (sym_part(p, q, r, s) + sym_part(q, r, p, s) +
                                        sym_part(r, p, q, s)) / 3.0;
                    rm.set(p, q, r, s, sym_part(p, q, r, s) - cyc);
                }
            }
        }
    }
    return rm;
}

}  // namespace curvlab
