#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>

#include "curvlab/curvature.hpp"
#include "curvlab/grassmann.hpp"
#include "curvlab/models.hpp"
#include "support.hpp"

using namespace curvlab;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

VectorXd random_point(const MetricChart& chart, uint64_t seed) {
    Rng rng(seed);
    VectorXd x(chart.dim);
    for (int a = 0; a < chart.dim; ++a) x(a) = rng.uniform(chart.axes[a].lo, chart.axes[a].hi);
    return x;
}

}  // namespace

TEST_CASE("flat torus chart is identity with a zero curvature oracle") {
    const MetricChart chart = build_chart(flat_torus(3));
    for (uint64_t s = 0; s < 5; ++s) {
        const VectorXd x = random_point(chart, s);
        CHECK((chart.metric_at(x) - MatrixXd::Identity(3, 3)).cwiseAbs().maxCoeff() == 0.0);
        CHECK(chart.curvature_oracle(x).pair_matrix().cwiseAbs().maxCoeff() == 0.0);
    }
}

TEST_CASE("sphere scalar curvature matches k(k-1)/r^2") {
    for (double r : {0.5, 1.0, 2.0}) {
        const MetricChart chart = build_chart(sphere(2, r));
        const auto rep = curvature_report(chart, random_point(chart, 7));
        CHECK(rep.scalar == doctest::Approx(2.0 / (r * r)).epsilon(1e-9));
    }
    const MetricChart chart = build_chart(sphere(4, 1.5));
    const auto rep = curvature_report(chart, random_point(chart, 8));
    CHECK(rep.scalar == doctest::Approx(12.0 / 2.25).epsilon(1e-9));
}

TEST_CASE("product of sphere and torus has scal 2 and zero mixed sectionals") {
    const MetricChart chart = build_chart(product(sphere(2, 1.0), flat_torus(2)));
    const VectorXd x = random_point(chart, 3);
    const auto rep = curvature_report(chart, x);
    CHECK(rep.scalar == doctest::Approx(2.0).epsilon(1e-9));
    const MatrixXd basis = orthonormal_coordinate_basis(chart, x);
    const auto rm = rep.tensor.transformed(basis, Basis::Orthonormal);
    for (int p = 0; p < 2; ++p)
        for (int q = 2; q < 4; ++q) CHECK(std::abs(rm.sectional(p, q)) < 1e-12);
}

TEST_CASE("product curvature oracle block structure") {
    const ModelSpec spec = product(sphere(2, 1.0), flat_torus(2));
    const MetricChart chart = build_chart(spec);
    const VectorXd x = chart.center_point();
    const MatrixXd basis = orthonormal_coordinate_basis(chart, x);
    const auto rm = product_curvature(spec, x).transformed(basis, Basis::Orthonormal);
    CHECK(rm.sectional(0, 1) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(std::abs(rm.sectional(0, 2)) < 1e-12);

    const ModelSpec two_spheres = product(sphere(3, 2.0), sphere(2, 1.0));
    const MetricChart chart2 = build_chart(two_spheres);
    const VectorXd y = chart2.center_point();
    const MatrixXd basis2 = orthonormal_coordinate_basis(chart2, y);
    const auto rm2 = product_curvature(two_spheres, y).transformed(basis2, Basis::Orthonormal);
    CHECK(rm2.sectional(0, 1) == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(rm2.sectional(3, 4) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(std::abs(rm2.sectional(2, 3)) < 1e-12);
}

TEST_CASE("model charts satisfy the chart invariants") {
    const std::vector<ModelSpec> models = {
        sphere(3, 1.0), flat_torus(4), product(sphere(2, 1.0), flat_torus(2)),
        conformal(flat_torus(3), {{0.05, {0, 0, 1}, 0.0, false}, {0.02, {1, 1, 0}, 0.4, true}})};
    for (const auto& spec : models) {
        const MetricChart chart = build_chart(spec);
        INFO("model ", chart.label);
        for (uint64_t s = 0; s < 6; ++s) {
            const VectorXd x = random_point(chart, derive_seed(s, 101));
            CHECK_NOTHROW(chart.metric_llt(x));  // SPD

            // analytic first derivatives against central differences
            const auto dg = chart.metric_derivs(x);
            for (int k = 0; k < chart.dim; ++k) {
                const double h = fd_step_first(x(k));
                VectorXd xp = x, xm = x;
                xp(k) += h;
                xm(k) -= h;
                const MatrixXd fd = (chart.metric(xp) - chart.metric(xm)) / (2.0 * h);
                CHECK((dg[k] - fd).cwiseAbs().maxCoeff() < 1e-7);
            }

            if (chart.has_curvature_oracle()) {
                CHECK(chart.curvature_oracle(x).bianchi_residual() < 1e-12);
            }
        }
    }
}

TEST_CASE("torus metric is exactly periodic, conformal factors included") {
    const MetricChart chart =
        build_chart(conformal(flat_torus(3, {1.0, 2.0, 1.0}),
                              {{0.05, {1, 0, 2}, 0.3, false}, {0.01, {0, 1, 1}, 0.0, true}}));
    for (uint64_t s = 0; s < 5; ++s) {
        const VectorXd x = random_point(chart, derive_seed(s, 55));
        for (int i = 0; i < 3; ++i) {
            VectorXd shifted = x;
            shifted(i) += chart.axes[i].length();
            CHECK((chart.metric_at(shifted) - chart.metric_at(x)).cwiseAbs().maxCoeff() == 0.0);
        }
    }
}

TEST_CASE("constant conformal factor keeps the torus flat") {
    const MetricChart chart = build_chart(conformal(flat_torus(2), {{0.3, {0, 0}, 0.0, false}}));
    const auto rm = riemann_coordinate(chart, chart.center_point(), DerivsMode::Computed);
    CHECK(rm.pair_matrix().cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("S^{n-m} x T^m has nonnegative C_m and positive C_{m+1} over Haar frames") {
    const int n = 4, m = 2;
    const MetricChart chart = build_chart(product(sphere(n - m, 1.0), flat_torus(m)));
    const VectorXd x = chart.center_point();
    const MatrixXd basis = orthonormal_coordinate_basis(chart, x);
    const auto rm = riemann_orthonormal(chart, x, basis);

    double min_cm = 1e300, min_cm1 = 1e300;
    const int samples = 100000;
    Rng rng(4242);
    for (int i = 0; i < samples; ++i) {
        MatrixXd z(n, n);
        for (int c = 0; c < n; ++c)
            for (int r = 0; r < n; ++r) z(r, c) = rng.gaussian();
        Eigen::HouseholderQR<MatrixXd> qr(z);
        const MatrixXd q = qr.householderQ();
        min_cm = std::min(min_cm, intermediate_curvature(rm, q, m));
        min_cm1 = std::min(min_cm1, intermediate_curvature(rm, q, m + 1));
    }
    CHECK(min_cm1 >= 0.0);
    CHECK(min_cm >= -1e-9);
    // the torus plane realizes C_m = 0 to optimizer accuracy
    MatrixXd torus_first = MatrixXd::Zero(n, n);
    torus_first.col(0) = basis.col(2);
    torus_first.col(1) = basis.col(3);
    torus_first.col(2) = basis.col(0);
    torus_first.col(3) = basis.col(1);
    CHECK(std::abs(intermediate_curvature(rm, torus_first, m)) < 1e-6);
}

TEST_CASE("model parser round-trips") {
    const std::vector<std::string> inputs = {
        "torus(4)",
        "sphere(2,1.5)",
        "product(sphere(2,1),torus(2,[1.0,2.0]))",
        "conformal(torus(3),0.05*cos(0,0,1),0.02*sin(1,1,0;0.5))",
        "product(product(sphere(2,1),sphere(3,2)),torus(1))",
    };
    for (const auto& text : inputs) {
        const ModelSpec spec = parse_model(text);
        const ModelSpec again = parse_model(spec.to_string());
        CHECK(again.to_string() == spec.to_string());
        CHECK_NOTHROW(build_chart(spec));
    }
    CHECK(parse_model(" product( sphere(2, 1.0 ), torus(2) ) ").to_string() ==
          "product(sphere(2,1),torus(2))");
}

TEST_CASE("bad specs are rejected") {
    CHECK_THROWS_AS(build_chart(sphere(2, -1.0)), BadSpec);
    CHECK_THROWS_AS(build_chart(sphere(2, 0.0)), BadSpec);
    CHECK_THROWS_AS(build_chart(flat_torus(2, {1.0, -2.0})), BadSpec);
    CHECK_THROWS_AS(build_chart(flat_torus(0)), BadSpec);
    CHECK_THROWS_AS(parse_model("klein(2)"), BadSpec);
    CHECK_THROWS_AS(parse_model("sphere(2,1)x"), BadSpec);
    CHECK_THROWS_AS(product_curvature(sphere(2, 1.0), VectorXd::Zero(2)), BadSpec);
}
