#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <cstdio>

#include "curvlab/models.hpp"
#include "curvlab/variation.hpp"
#include "support.hpp"

using namespace curvlab;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

const MetricChart& torus3() {
    static MetricChart chart = build_chart(flat_torus(3));
    return chart;
}

Eigen::VectorXd grid_fn(const SurfaceGrid& grid,
                        const std::function<double(const Eigen::VectorXd&)>& fn) {
    Eigen::VectorXd v(grid.cell_count());
    for (int cell = 0; cell < grid.cell_count(); ++cell) v(cell) = fn(grid.node(cell));
    return v;
}

double rho_norm2(const DiscreteHypersurface& hs, const WeightField& rho, const VectorXd& f) {
    double sum = 0.0;
    const double vol = hs.grid.cell_volume();
    for (int cell = 0; cell < hs.cell_count(); ++cell) {
        sum += rho.rho(hs.cells[cell].point) * hs.cells[cell].sqrt_det * vol * f(cell) * f(cell);
    }
    return sum;
}

}  // namespace

TEST_CASE("weighted area of flat and constant-weight graphs") {
    const auto hs = make_graph(torus3(), 16, [](const VectorXd&) { return 0.25; });
    CHECK(weighted_area(hs, WeightField::constant(1.0)) == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(weighted_area(hs, WeightField::constant(2.0)) == doctest::Approx(2.0).epsilon(1e-14));
}

TEST_CASE("weighted area of a wavy graph matches a 1-D quadrature oracle") {
    const auto hs = make_graph(torus3(), 256,
                               [](const VectorXd& b) { return 0.1 * std::sin(2 * M_PI * b(0)); });
    const double oracle = test::gauss_legendre(
        [](double x) {
            const double ux = 0.1 * 2 * M_PI * std::cos(2 * M_PI * x);
            return std::sqrt(1.0 + ux * ux);
        },
        0.0, 1.0);
    CHECK(weighted_area(hs, WeightField::constant()) == doctest::Approx(oracle).epsilon(1e-8));
}

TEST_CASE("weighted area is exactly invariant under integer grid shifts") {
    // shift the height pattern by lattice offsets; with a height-only weight
    // the configuration is equivalent, so the compensated total is identical
    const auto scenario = test::make_variation_scenario(99);
    const auto hs = make_graph(torus3(), 32, scenario.height);
    const WeightField rho =
        WeightField::from_log([](const VectorXd& x) { return 0.2 * std::cos(2 * M_PI * x(2)); });
    const double base = weighted_area(hs, rho);

    DiscreteHypersurface shifted = hs;
    for (int cell = 0; cell < hs.cell_count(); ++cell) {
        auto idx = hs.grid.unflatten(cell);
        idx[0] += 7;
        idx[1] += 19;
        shifted.height(hs.grid.flatten(idx)) = hs.height(cell);
    }
    shifted.recompute();
    CHECK(weighted_area(shifted, rho) == base);
}

TEST_CASE("weight fields reject nonpositive values") {
    const auto hs = make_graph(torus3(), 8, [](const VectorXd&) { return 0.0; });
    const WeightField bad =
        WeightField::from_positive([](const VectorXd& x) { return 0.5 - x(0); });
    CHECK_THROWS_AS(weighted_area(hs, bad), NonpositiveWeight);
    CHECK_THROWS_AS(WeightField::constant(-2.0), NonpositiveWeight);
}

TEST_CASE("derived cell data is internally consistent") {
    const auto scenario = test::make_variation_scenario(5);
    const auto hs = make_graph(torus3(), 24, scenario.height);
    const MatrixXd g = MatrixXd::Identity(3, 3);
    for (const auto& c : hs.cells) {
        CHECK(std::abs(c.normal.dot(g * c.normal) - 1.0) < 1e-10);
        CHECK(c.normal(2) > 0.0);  // upward
        CHECK(std::abs((c.g_inv * c.second_ff).trace() - c.mean_curvature) < 1e-10);
        for (int i = 0; i < 2; ++i) CHECK(std::abs(c.normal.dot(g * c.tangents.col(i))) < 1e-12);
    }
}

TEST_CASE("constant graphs in the S^3 chart are totally geodesic") {
    const MetricChart chart = build_chart(sphere(3, 1.0));
    const auto hs = make_graph(chart, 16, [](const VectorXd&) { return 1.0; });
    for (const auto& c : hs.cells) {
        CHECK(c.second_ff.cwiseAbs().maxCoeff() < 1e-12);
        CHECK(std::abs(c.mean_curvature) < 1e-12);
    }
}

TEST_CASE("first variation vanishes on minimal flat graphs") {
    const auto hs = make_graph(torus3(), 16, [](const VectorXd&) { return 0.3; });
    const auto f = grid_fn(hs.grid, [](const VectorXd& b) { return std::sin(2 * M_PI * b(0)); });
    CHECK(std::abs(first_variation(hs, WeightField::constant(), f)) < 1e-13);
}

TEST_CASE("first variation of a round sphere equals H times area") {
    const MetricChart chart = test::flat_spherical_chart();
    const double r0 = 1.2;
    const auto hs = make_graph(chart, 64, [&](const VectorXd&) { return r0; });
    const VectorXd ones = VectorXd::Ones(hs.cell_count());
    const double fv = first_variation(hs, WeightField::constant(), ones);
    // closed form for the trimmed polar patch
    const double delta = 0.1;
    const double area = 2.0 * M_PI * r0 * r0 * 2.0 * std::cos(delta);
    CHECK(fv == doctest::Approx((2.0 / r0) * area).epsilon(2e-4));
    CHECK(fv == doctest::Approx((2.0 / r0) * weighted_area(hs, WeightField::constant()))
                    .epsilon(1e-12));
}

TEST_CASE("vertical exponential weight contributes unit drift") {
    const auto hs = make_graph(torus3(), 24, [](const VectorXd&) { return 0.0; });
    const WeightField rho = WeightField::from_log(
        [](const VectorXd& x) { return x(2); },
        [](const VectorXd& x) {
            VectorXd g = VectorXd::Zero(x.size());
            g(2) = 1.0;
            return g;
        },
        [](const VectorXd& x) { return MatrixXd::Zero(x.size(), x.size()).eval(); });
    const auto f = grid_fn(hs.grid, [](const VectorXd& b) { return 1.0 + b(0) * 0.0; });
    // rho = exp(z) = 1 on the z=0 slice; integrand reduces to f
    CHECK(first_variation(hs, rho, f) == doctest::Approx(1.0).epsilon(1e-12));

    const auto residual = critical_residual(hs, rho);
    CHECK((residual - VectorXd::Ones(hs.cell_count())).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("horizontal weights leave level sets critical") {
    const auto hs = make_graph(torus3(), 16, [](const VectorXd&) { return 0.4; });
    const WeightField rho = WeightField::from_log(
        [](const VectorXd& x) { return 0.3 * std::cos(2 * M_PI * x(0)) + 0.1 * x(1); });
    CHECK(critical_residual(hs, rho).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("first variation agrees with the finite-difference path derivative") {
    std::vector<double> resolutions, errors;
    for (int res : {16, 32, 64}) {
        const auto scenario = test::make_variation_scenario(1234);
        const auto hs = make_graph(torus3(), res, scenario.height);
        const WeightField rho = WeightField::from_log(scenario.log_weight);
        const auto f = grid_fn(hs.grid, scenario.test_fn);
        const double formula = first_variation(hs, rho, f);
        const double s = 1e-4;
        const double fd = (weighted_area(normal_speed_path(hs, f, s), rho) -
                           weighted_area(normal_speed_path(hs, f, -s), rho)) /
                          (2.0 * s);
        resolutions.push_back(res);
        errors.push_back(std::abs(fd - formula) / std::max(1e-12, std::abs(fd)));
    }
    CHECK(errors.back() < 1e-5);
    CHECK(test::convergence_order(resolutions, errors) >= 1.8);
}

TEST_CASE("second variation positive on mean-zero flat perturbations") {
    const auto hs = make_graph(torus3(), 32, [](const VectorXd&) { return 0.0; });
    const auto f = grid_fn(hs.grid, [](const VectorXd& b) { return std::sin(2 * M_PI * b(0)); });
    const double q = second_variation(hs, WeightField::constant(), f);
    // integral of |grad f|^2 = (2 pi)^2 / 2
    CHECK(q > 0.0);
    CHECK(q == doctest::Approx(2.0 * M_PI * M_PI).epsilon(1e-4));
}

TEST_CASE("second variation of the trimmed equator in S^3") {
    const MetricChart chart = build_chart(sphere(3, 1.0));
    const auto hs = make_graph(chart, 48, [](const VectorXd&) { return 2.0; });
    const VectorXd ones = VectorXd::Ones(hs.cell_count());
    const double q = second_variation(hs, WeightField::constant(), ones);
    const double delta = 0.1;
    const double patch_area = (M_PI - 2.0 * delta) * 2.0 * std::cos(delta);
    CHECK(q == doctest::Approx(-2.0 * patch_area).epsilon(1e-3));
}

TEST_CASE("second variation requires a critical hypersurface") {
    const auto hs =
        make_graph(torus3(), 16, [](const VectorXd& b) { return 0.2 * std::sin(2 * M_PI * b(0)); });
    const VectorXd f = VectorXd::Ones(hs.cell_count());
    CHECK_THROWS_AS(second_variation(hs, WeightField::constant(), f), NotCritical);
    CHECK_THROWS_AS(assemble_stability_operator(hs, WeightField::constant()), NotCritical);
}

TEST_CASE("second variation matches the second s-derivative on a manufactured critical graph") {
    const auto made = test::make_manufactured_critical(0.03, 0.7);
    const auto hs = make_graph(torus3(), 64, made.height);
    const WeightField rho = WeightField::from_log(made.log_weight);
    REQUIRE(critical_residual(hs, rho).cwiseAbs().maxCoeff() < 5e-6);

    const auto scenario = test::make_variation_scenario(777);
    const auto f = grid_fn(hs.grid, scenario.test_fn);
    const double formula = second_variation(hs, rho, f);
    const double s = 1e-3;
    const double a0 = weighted_area(hs, rho);
    const double fd = (weighted_area(normal_speed_path(hs, f, s), rho) - 2.0 * a0 +
                       weighted_area(normal_speed_path(hs, f, -s), rho)) /
                      (s * s);
    CHECK(formula == doctest::Approx(fd).epsilon(1e-4));
}

TEST_CASE("stability operator on the flat sub-torus is minus the Laplacian") {
    const auto hs = make_graph(torus3(), 32, [](const VectorXd&) { return 0.0; });
    const auto op = assemble_stability_operator(hs, WeightField::constant());
    const auto rep = first_eigenpair(op);
    CHECK(std::abs(rep.lambda1) < 1e-10);
    CHECK((rep.eigenfunction - VectorXd::Ones(hs.cell_count())).cwiseAbs().maxCoeff() < 1e-10);
    CHECK(rep.residual < 1e-8);
    double ratio = 0.0;
    CHECK(op.near_m_matrix(&ratio));
    CHECK(ratio < 0.2);
}

TEST_CASE("equator in S^3 has bottom eigenvalue -2 with constant eigenfunction") {
    const MetricChart chart = build_chart(sphere(3, 1.0));
    const auto hs = make_graph(chart, 48, [](const VectorXd&) { return 1.5; });
    const auto op = assemble_stability_operator(hs, WeightField::constant());
    const auto rep = first_eigenpair(op);
    CHECK(rep.lambda1 == doctest::Approx(-2.0).epsilon(1e-2));
    CHECK(rep.eigenfunction.minCoeff() > 0.0);
    const double spread = rep.eigenfunction.maxCoeff() - rep.eigenfunction.minCoeff();
    CHECK(spread < 1e-6);
}

TEST_CASE("stability operator is self-adjoint in the rho dmu inner product") {
    const auto made = test::make_manufactured_critical(0.01, 0.1);
    const auto hs = make_graph(torus3(), 32, made.height);
    const WeightField rho = WeightField::from_log(made.log_weight);
    const auto op = assemble_stability_operator(hs, rho);
    Rng rng(33);
    for (int trial = 0; trial < 10; ++trial) {
        VectorXd f(hs.cell_count()), g(hs.cell_count());
        for (int i = 0; i < hs.cell_count(); ++i) {
            f(i) = rng.gaussian();
            g(i) = rng.gaussian();
        }
        const VectorXd lf = op.apply(f);
        const VectorXd lg = op.apply(g);
        double lfg = 0.0, flg = 0.0;
        for (int i = 0; i < hs.cell_count(); ++i) {
            lfg += lf(i) * g(i) * op.mass(i);
            flg += f(i) * lg(i) * op.mass(i);
        }
        CHECK(std::abs(lfg - flg) < 1e-12 * std::max(1.0, std::abs(lfg)));
    }
}

TEST_CASE("quadratic form of the operator equals the second variation") {
    const auto made = test::make_manufactured_critical(0.015, 1.3);
    const auto hs = make_graph(torus3(), 32, made.height);
    const WeightField rho = WeightField::from_log(made.log_weight);
    const auto op = assemble_stability_operator(hs, rho);
    Rng rng(44);
    for (int trial = 0; trial < 100; ++trial) {
        VectorXd f(hs.cell_count());
        for (int i = 0; i < hs.cell_count(); ++i) f(i) = rng.gaussian();
        const double qf = op.quad_form(f);
        const double sv = second_variation(hs, rho, f);
        CHECK(std::abs(qf - sv) <= 1e-8 * std::max(1.0, std::abs(sv)));
    }
}

TEST_CASE("first eigenpair matches a dense eigensolver under random potentials") {
    const auto hs = make_graph(torus3(), 32, [](const VectorXd&) { return 0.0; });
    auto op = assemble_stability_operator(hs, WeightField::constant());
    Rng rng(55);
    for (int i = 0; i < hs.cell_count(); ++i) op.potential(i) += rng.uniform(0.0, 3.0);
    const auto rep = first_eigenpair(op);

    const MatrixXd dense = MatrixXd(op.bilinear());
    const MatrixXd mass = op.mass.asDiagonal();
    Eigen::GeneralizedSelfAdjointEigenSolver<MatrixXd> es(dense, mass);
    CHECK(rep.lambda1 == doctest::Approx(es.eigenvalues()(0)).epsilon(1e-8));
    CHECK(rep.eigenfunction.minCoeff() > 0.0);
}

TEST_CASE("constant-weight code path reduces to the unweighted formulas") {
    const auto hs = make_graph(torus3(), 20, [](const VectorXd&) { return 0.1; });
    const WeightField one = WeightField::constant();
    const auto f = grid_fn(hs.grid, [](const VectorXd& b) {
        return 0.3 + std::sin(2 * M_PI * b(0)) * std::cos(2 * M_PI * b(1));
    });
    // first variation against a direct integral of f H dmu
    NeumaierSum direct;
    const double vol = hs.grid.cell_volume();
    for (int cell = 0; cell < hs.cell_count(); ++cell) {
        direct.add(f(cell) * hs.cells[cell].mean_curvature * hs.cells[cell].sqrt_det * vol);
    }
    CHECK(std::abs(first_variation(hs, one, f) - direct.value()) < 1e-12);

    // second variation against the unweighted operator assembled separately
    const auto op = assemble_stability_operator(hs, one);
    CHECK(std::abs(second_variation(hs, one, f) - op.quad_form(f)) < 1e-12);
}

TEST_CASE("minimize_weighted_area flattens a wavy graph") {
    const auto hs0 =
        make_graph(torus3(), 32, [](const VectorXd& b) { return 0.2 * std::sin(2 * M_PI * b(0)); });
    const auto result = minimize_weighted_area(hs0, WeightField::constant());
    CHECK(result.converged);
    CHECK(result.residual < 1e-6);
    CHECK(weighted_area(result.surface, WeightField::constant()) ==
          doctest::Approx(1.0).epsilon(1e-8));
    const double spread = result.surface.height.maxCoeff() - result.surface.height.minCoeff();
    CHECK(spread < 1e-5);
    CHECK(result.stable_spot_check);
}

TEST_CASE("minimizer settles at the weight minimum for vertical weights") {
    const WeightField rho =
        WeightField::from_log([](const VectorXd& x) { return 0.3 * std::cos(2 * M_PI * x(2)); });
    const auto hs0 =
        make_graph(torus3(), 32, [](const VectorXd& b) { return 0.23 + 0.05 * std::sin(2 * M_PI * b(1)); });
    const auto result = minimize_weighted_area(hs0, rho);
    CHECK(result.converged);
    CHECK(result.residual < 1e-6);
    // the critical stable level is z = 1/2 where cos'(2 pi z) = 0 and the
    // weight is smallest
    CHECK((result.surface.height.array() - 0.5).abs().maxCoeff() < 1e-5);
    CHECK(result.stable_spot_check);
}

TEST_CASE("minimizer of a conformally perturbed torus is stable") {
    const MetricChart chart = build_chart(
        conformal(flat_torus(3), {{0.05, {0, 0, 1}, 0.0, false}, {0.025, {1, 1, 0}, 0.2, false}}));
    const auto hs0 = make_graph(chart, 32, [](const VectorXd&) { return 0.4 ; });
    const auto result = minimize_weighted_area(hs0, WeightField::constant());
    CHECK(result.converged);
    CHECK(result.residual < 1e-6);
    CHECK(result.stable_spot_check);
    const auto op = assemble_stability_operator(result.surface, WeightField::constant());
    const auto rep = first_eigenpair(op);
    CHECK(rep.lambda1 >= -1e-6);
    CHECK(rep.eigenfunction.minCoeff() > 0.0);
}

TEST_CASE("surface dumps round-trip bit-exactly") {
    const auto scenario = test::make_variation_scenario(31);
    const auto hs = make_graph(torus3(), 24, scenario.height);
    const std::string path = "surface_dump_test.bin";
    write_surface(hs, path);
    const auto back = read_surface(torus3(), path);
    CHECK(back.height == hs.height);
    CHECK(back.grid.res == hs.grid.res);
    std::remove(path.c_str());
}

TEST_CASE("graph view agrees with the discrete derived data at nodes") {
    const auto scenario = test::make_variation_scenario(61);
    const auto hs = make_graph(torus3(), 32, scenario.height);
    const auto view = GraphView(torus3(), hs.grid, hs.height);

    for (int cell = 0; cell < hs.cell_count(); cell += 37) {
        const VectorXd base = hs.grid.node(cell);
        CHECK(view.height(base) == doctest::Approx(hs.height(cell)).epsilon(1e-12));
        const MatrixXd g_ind = view.induced_metric(base);
        CHECK((g_ind - hs.cells[cell].g_ind).cwiseAbs().maxCoeff() < 1e-5);
        const MatrixXd h2 = view.second_fundamental_form(base);
        CHECK((h2 - hs.cells[cell].second_ff).cwiseAbs().maxCoeff() < 1e-4);
    }
}

TEST_CASE("induced chart derivatives match finite differences") {
    const auto scenario = test::make_variation_scenario(62);
    const auto hs = make_graph(torus3(), 32, scenario.height);
    auto view = std::make_shared<GraphView>(torus3(), hs.grid, hs.height);
    const auto chart = induced_chart(view, "induced-test");

    Rng rng(63);
    for (int trial = 0; trial < 5; ++trial) {
        VectorXd x(2);
        x << rng.uniform(0.0, 1.0), rng.uniform(0.0, 1.0);
        const auto dg = chart->metric_derivs(x);
        for (int k = 0; k < 2; ++k) {
            const double h = 1e-6;
            VectorXd xp = x, xm = x;
            xp(k) += h;
            xm(k) -= h;
            const MatrixXd fd = (chart->metric(xp) - chart->metric(xm)) / (2.0 * h);
            CHECK((dg[k] - fd).cwiseAbs().maxCoeff() < 1e-7);
        }
    }
}
