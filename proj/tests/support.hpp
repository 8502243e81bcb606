#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>

#include "curvlab/geometry.hpp"
#include "curvlab/util.hpp"

namespace curvlab::test {

// Chart with a constant metric on the unit torus; handy for frame tests.
inline MetricChart constant_metric_chart(const Eigen::MatrixXd& g) {
    MetricChart chart;
    chart.dim = static_cast<int>(g.rows());
    chart.axes.assign(chart.dim, CoordAxis{0.0, 1.0, true});
    chart.label = "constant";
    chart.metric = [g](const Eigen::VectorXd&) { return g; };
    const int n = chart.dim;
    chart.metric_derivs = [n](const Eigen::VectorXd&) {
        return std::vector<Eigen::MatrixXd>(n, Eigen::MatrixXd::Zero(n, n));
    };
    chart.metric_second_derivs = [n](const Eigen::VectorXd&) {
        return std::vector<std::vector<Eigen::MatrixXd>>(
            n, std::vector<Eigen::MatrixXd>(n, Eigen::MatrixXd::Zero(n, n)));
    };
    return chart;
}

inline Eigen::MatrixXd random_spd(int n, Rng& rng, double ridge = 0.5) {
    Eigen::MatrixXd a(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) a(i, j) = rng.gaussian();
    return a.transpose() * a + ridge * n * Eigen::MatrixXd::Identity(n, n);
}

inline Eigen::MatrixXd random_orthogonal(int n, Rng& rng) {
    Eigen::MatrixXd a(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) a(i, j) = rng.gaussian();
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
    Eigen::MatrixXd q = qr.householderQ();
    const Eigen::MatrixXd r = qr.matrixQR().triangularView<Eigen::Upper>();
    for (int j = 0; j < n; ++j)
        if (r(j, j) < 0.0) q.col(j) = -q.col(j);
    return q;
}

// Composite Gauss-Legendre quadrature (20 nodes per panel); the independent
// high-order oracle for 1-D integrals in tests.
inline double gauss_legendre(const std::function<double(double)>& f, double a, double b,
                             int panels = 64) {
    static const double xs[10] = {0.0765265211334973, 0.2277858511416451, 0.3737060887154196,
                                  0.5108670019508271, 0.6360536807265150, 0.7463319064601508,
                                  0.8391169718222188, 0.9122344282513259, 0.9639719272779138,
                                  0.9931285991850949};
    static const double ws[10] = {0.1527533871307258, 0.1491729864726037, 0.1420961093183821,
                                  0.1316886384491766, 0.1181945319615184, 0.1019301198172404,
                                  0.0832767415767048, 0.0626720483341091, 0.0406014298003869,
                                  0.0176140071391521};
    NeumaierSum total;
    const double h = (b - a) / panels;
    for (int p = 0; p < panels; ++p) {
        const double mid = a + (p + 0.5) * h;
        for (int i = 0; i < 10; ++i) {
            total.add(0.5 * h * ws[i] * f(mid + 0.5 * h * xs[i]));
            total.add(0.5 * h * ws[i] * f(mid - 0.5 * h * xs[i]));
        }
    }
    return total.value();
}

// Flat R^3 in spherical coordinates (theta, phi, r): graphs r = u(theta,phi)
// describe star-shaped surfaces such as round spheres around the origin.
inline MetricChart flat_spherical_chart() {
    MetricChart chart;
    chart.dim = 3;
    chart.axes = {{0.1, M_PI - 0.1, false}, {0.0, 2.0 * M_PI, true}, {0.5, 2.0, false}};
    chart.label = "flat-spherical";
    chart.metric = [](const Eigen::VectorXd& x) -> Eigen::MatrixXd {
        Eigen::MatrixXd g = Eigen::MatrixXd::Zero(3, 3);
        const double r = x(2), st = std::sin(x(0));
        g(0, 0) = r * r;
        g(1, 1) = r * r * st * st;
        g(2, 2) = 1.0;
        return g;
    };
    chart.metric_derivs = [](const Eigen::VectorXd& x) {
        std::vector<Eigen::MatrixXd> dg(3, Eigen::MatrixXd::Zero(3, 3));
        const double r = x(2), st = std::sin(x(0)), ct = std::cos(x(0));
        dg[0](1, 1) = 2.0 * r * r * st * ct;
        dg[2](0, 0) = 2.0 * r;
        dg[2](1, 1) = 2.0 * r * st * st;
        return dg;
    };
    return chart;
}

// Random low-frequency graph/weight/test-function scenario on the unit T^3;
// frequencies stay at one so that fourth-order stencil truncation sits well
// inside the variational tolerances.
struct VariationScenario {
    std::function<double(const Eigen::VectorXd&)> height;
    std::function<double(const Eigen::VectorXd&)> log_weight;   // on T^3
    std::function<double(const Eigen::VectorXd&)> test_fn;      // on the base
};

inline VariationScenario make_variation_scenario(uint64_t seed) {
    Rng rng(seed);
    const double a1 = rng.uniform(-0.05, 0.05);
    const double a2 = rng.uniform(-0.05, 0.05);
    const double a3 = rng.uniform(-0.03, 0.03);
    const double p1 = rng.uniform(0.0, 2.0 * M_PI);
    const double p2 = rng.uniform(0.0, 2.0 * M_PI);
    const double w1 = rng.uniform(-0.3, 0.3);
    const double w2 = rng.uniform(-0.3, 0.3);
    const double w3 = rng.uniform(-0.2, 0.2);
    const double f1 = rng.uniform(-1.0, 1.0);
    const double f2 = rng.uniform(-1.0, 1.0);
    const double f0 = rng.uniform(-0.5, 0.5);

    VariationScenario s;
    s.height = [=](const Eigen::VectorXd& x) {
        return a1 * std::sin(2 * M_PI * x(0) + p1) + a2 * std::cos(2 * M_PI * x(1) + p2) +
               a3 * std::sin(2 * M_PI * x(0)) * std::cos(2 * M_PI * x(1));
    };
    s.log_weight = [=](const Eigen::VectorXd& x) {
        return w1 * std::cos(2 * M_PI * x(2)) + w2 * std::sin(2 * M_PI * x(0) + p1) +
               w3 * std::cos(2 * M_PI * (x(1) + x(2)));
    };
    s.test_fn = [=](const Eigen::VectorXd& x) {
        return f0 + f1 * std::sin(2 * M_PI * x(0) + p2) + f2 * std::cos(2 * M_PI * x(1));
    };
    return s;
}

// Weight manufactured so that the graph z = u0(x) (independent of y) is an
// exactly critical point of the weighted area in flat T^3:
//   log rho = beta(x) (z - u0(x)),  beta = -H/sqrt(1+u0'^2) = u0''/(1+u0'^2)^2.
struct ManufacturedCritical {
    std::function<double(const Eigen::VectorXd&)> height;      // base point -> u0(x)
    std::function<double(const Eigen::VectorXd&)> log_weight;  // ambient point
};

inline ManufacturedCritical make_manufactured_critical(double amplitude, double phase) {
    auto u0 = [=](double x) { return amplitude * std::sin(2 * M_PI * x + phase); };
    auto du0 = [=](double x) { return amplitude * 2 * M_PI * std::cos(2 * M_PI * x + phase); };
    auto d2u0 = [=](double x) {
        return -amplitude * 4 * M_PI * M_PI * std::sin(2 * M_PI * x + phase);
    };
    auto beta = [=](double x) {
        const double dp = du0(x);
        return d2u0(x) / ((1.0 + dp * dp) * (1.0 + dp * dp));
    };
    ManufacturedCritical m;
    m.height = [=](const Eigen::VectorXd& b) { return u0(b(0)); };
    m.log_weight = [=](const Eigen::VectorXd& x) { return beta(x(0)) * (x(2) - u0(x(0))); };
    return m;
}

// Least-squares slope of log2(err) against log2(h): empirical convergence order.
inline double convergence_order(const std::vector<double>& resolutions,
                                const std::vector<double>& errors) {
    const int n = static_cast<int>(resolutions.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (int i = 0; i < n; ++i) {
        const double x = std::log2(resolutions[i]);
        const double y = std::log2(std::max(errors[i], 1e-300));
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    // err ~ C * h^p = C * R^{-p}
    return -(n * sxy - sx * sy) / (n * sxx - sx * sx);
}

}  // namespace curvlab::test
