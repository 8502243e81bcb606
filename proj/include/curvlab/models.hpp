#pragma once

#include <memory>
#include <string>
#include <vector>

#include "curvlab/geometry.hpp"

namespace curvlab {

// One term of a conformal factor: amp * cos(2*pi * sum_j k_j (x_j - lo_j)/L_j + phase)
// (sin when is_sin). Trigonometric polynomials keep every derivative exact.
struct ConformalTerm {
    double amplitude = 0.0;
    std::vector<int> freq;
    double phase = 0.0;
    bool is_sin = false;
};

struct ModelSpec {
    enum class Kind { Sphere, FlatTorus, Product, Conformal };

    Kind kind = Kind::FlatTorus;
    int dim = 0;                    // sphere k / torus m
    double radius = 1.0;            // sphere
    std::vector<double> periods;    // torus
    std::shared_ptr<ModelSpec> left, right;  // product factors
    std::shared_ptr<ModelSpec> base;         // conformal base
    std::vector<ConformalTerm> terms;        // conformal factor

    int total_dim() const;
    std::string to_string() const;
};

ModelSpec sphere(int k, double radius = 1.0);
ModelSpec flat_torus(int m, std::vector<double> periods = {});
ModelSpec product(ModelSpec lhs, ModelSpec rhs);
ModelSpec conformal(ModelSpec base, std::vector<ConformalTerm> terms);

// Chart with analytic first/second metric derivatives; sphere, torus and
// product models also carry closed-form curvature oracles. Throws BadSpec on
// nonpositive radius/periods or malformed specs.
MetricChart build_chart(const ModelSpec& spec);

// Block curvature of a product model at a point: vanishes unless all four
// indices lie in one factor.
CurvatureTensor product_curvature(const ModelSpec& product_spec, const Eigen::VectorXd& point);

// Parses expressions like
//   product(sphere(2,1.0), torus(2,[1.0,1.0]))
//   conformal(torus(3), 0.05*cos(0,0,1), 0.02*sin(1,1,0;0.5))
ModelSpec parse_model(const std::string& text);

}  // namespace curvlab
