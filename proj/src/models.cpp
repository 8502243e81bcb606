#include "curvlab/models.hpp"

#include <cctype>
#include <cmath>
#include <sstream>

namespace curvlab {

namespace {

constexpr double kPolarTrim = 0.1;

CurvatureTensor constant_curvature_tensor(const Eigen::MatrixXd& g, double k_sec) {
    const int n = static_cast<int>(g.rows());
    CurvatureTensor rm(n, Basis::Coordinate);
    for (int p = 0; p < n; ++p)
        for (int q = p + 1; q < n; ++q)
            for (int r = 0; r < n; ++r)
                for (int s = r + 1; s < n; ++s)
                    rm.set(p, q, r, s, k_sec * (g(p, r) * g(q, s) - g(p, s) * g(q, r)));
    return rm;
}

struct ConformalFunction {
    std::vector<ConformalTerm> terms;
    std::vector<CoordAxis> axes;

    double angle(const ConformalTerm& t, const Eigen::VectorXd& x) const {
        double a = t.phase;
        for (std::size_t j = 0; j < t.freq.size(); ++j) {
            // reduce each coordinate mod its period first so the metric is
            // bitwise periodic
            double frac =
                std::fmod((x(static_cast<int>(j)) - axes[j].lo) / axes[j].length(), 1.0);
            if (frac < 0.0) frac += 1.0;
            a += 2.0 * M_PI * t.freq[j] * frac;
        }
        return a;
    }

    double value(const Eigen::VectorXd& x) const {
        double u = 0.0;
        for (const auto& t : terms) {
            const double a = angle(t, x);
            u += t.amplitude * (t.is_sin ? std::sin(a) : std::cos(a));
        }
        return u;
    }

    Eigen::VectorXd grad(const Eigen::VectorXd& x) const {
        Eigen::VectorXd g = Eigen::VectorXd::Zero(x.size());
        for (const auto& t : terms) {
            const double a = angle(t, x);
            const double d = t.amplitude * (t.is_sin ? std::cos(a) : -std::sin(a));
            for (std::size_t j = 0; j < t.freq.size(); ++j) {
                g(static_cast<int>(j)) += d * 2.0 * M_PI * t.freq[j] / axes[j].length();
            }
        }
        return g;
    }

    Eigen::MatrixXd hess(const Eigen::VectorXd& x) const {
        Eigen::MatrixXd h = Eigen::MatrixXd::Zero(x.size(), x.size());
        for (const auto& t : terms) {
            const double a = angle(t, x);
            const double dd = -t.amplitude * (t.is_sin ? std::sin(a) : std::cos(a));
            for (std::size_t j = 0; j < t.freq.size(); ++j) {
                const double wj = 2.0 * M_PI * t.freq[j] / axes[j].length();
                for (std::size_t l = 0; l < t.freq.size(); ++l) {
                    const double wl = 2.0 * M_PI * t.freq[l] / axes[l].length();
                    h(static_cast<int>(j), static_cast<int>(l)) += dd * wj * wl;
                }
            }
        }
        return h;
    }
};

MetricChart build_sphere(const ModelSpec& spec) {
    if (spec.dim < 1) throw BadSpec("sphere dimension must be >= 1");
    if (!(spec.radius > 0.0)) throw BadSpec("sphere radius must be positive");
    const int k = spec.dim;
    const double r = spec.radius;

    MetricChart chart;
    chart.dim = k;
    chart.label = spec.to_string();
    chart.axes.resize(k);
    for (int i = 0; i + 1 < k; ++i) chart.axes[i] = {kPolarTrim, M_PI - kPolarTrim, false};
    chart.axes[k - 1] = {0.0, 2.0 * M_PI, true};

    // iterated polar metric: g_ii = r^2 prod_{j<i} sin^2(theta_j)
    auto diag = [k, r](const Eigen::VectorXd& x) {
        Eigen::VectorXd d(k);
        double prod = r * r;
        for (int i = 0; i < k; ++i) {
            d(i) = prod;
            const double s = std::sin(x(i));
            prod *= s * s;
        }
        return d;
    };

    chart.metric = [diag, k](const Eigen::VectorXd& x) {
        return Eigen::MatrixXd(diag(x).asDiagonal());
    };
    chart.metric_derivs = [diag, k](const Eigen::VectorXd& x) {
        const Eigen::VectorXd d = diag(x);
        std::vector<Eigen::MatrixXd> dg(k, Eigen::MatrixXd::Zero(k, k));
        for (int l = 0; l < k; ++l) {
            const double cot = std::cos(x(l)) / std::sin(x(l));
            for (int i = l + 1; i < k; ++i) dg[l](i, i) = 2.0 * cot * d(i);
        }
        return dg;
    };
    chart.metric_second_derivs = [diag, k](const Eigen::VectorXd& x) {
        const Eigen::VectorXd d = diag(x);
        std::vector<std::vector<Eigen::MatrixXd>> d2(
            k, std::vector<Eigen::MatrixXd>(k, Eigen::MatrixXd::Zero(k, k)));
        for (int l = 0; l < k; ++l) {
            const double sl = std::sin(x(l));
            const double cotl = std::cos(x(l)) / sl;
            const double cscl2 = 1.0 / (sl * sl);
            for (int m = 0; m < k; ++m) {
                const double cotm = std::cos(x(m)) / std::sin(x(m));
                for (int i = std::max(l, m) + 1; i < k; ++i) {
                    d2[l][m](i, i) =
                        (l == m) ? (4.0 * cotl * cotl - 2.0 * cscl2) * d(i)
                                 : 4.0 * cotl * cotm * d(i);
                }
            }
        }
        return d2;
    };
    const double k_sec = 1.0 / (r * r);
    auto metric = chart.metric;
    chart.curvature_oracle = [metric, k_sec](const Eigen::VectorXd& x) {
        return constant_curvature_tensor(metric(x), k_sec);
    };
    return chart;
}

MetricChart build_torus(const ModelSpec& spec) {
    if (spec.dim < 1) throw BadSpec("torus dimension must be >= 1");
    std::vector<double> periods = spec.periods;
    if (periods.empty()) periods.assign(spec.dim, 1.0);
    if (static_cast<int>(periods.size()) != spec.dim) {
        throw BadSpec("torus period count must match dimension");
    }
    for (double p : periods) {
        if (!(p > 0.0)) throw BadSpec("torus periods must be positive");
    }

    MetricChart chart;
    chart.dim = spec.dim;
    chart.label = spec.to_string();
    chart.axes.resize(spec.dim);
    for (int i = 0; i < spec.dim; ++i) chart.axes[i] = {0.0, periods[i], true};
    const int n = spec.dim;
    chart.metric = [n](const Eigen::VectorXd&) -> Eigen::MatrixXd {
        return Eigen::MatrixXd::Identity(n, n);
    };
    chart.metric_derivs = [n](const Eigen::VectorXd&) {
        return std::vector<Eigen::MatrixXd>(n, Eigen::MatrixXd::Zero(n, n));
    };
    chart.metric_second_derivs = [n](const Eigen::VectorXd&) {
        return std::vector<std::vector<Eigen::MatrixXd>>(
            n, std::vector<Eigen::MatrixXd>(n, Eigen::MatrixXd::Zero(n, n)));
    };
    chart.curvature_oracle = [n](const Eigen::VectorXd&) {
        return CurvatureTensor(n, Basis::Coordinate);
    };
    return chart;
}

MetricChart build_product(const ModelSpec& spec) {
    if (!spec.left || !spec.right) throw BadSpec("product requires two factors");
    const MetricChart lhs = build_chart(*spec.left);
    const MetricChart rhs = build_chart(*spec.right);
    const int nl = lhs.dim;
    const int nr = rhs.dim;
    const int n = nl + nr;

    MetricChart chart;
    chart.dim = n;
    chart.label = spec.to_string();
    chart.axes = lhs.axes;
    chart.axes.insert(chart.axes.end(), rhs.axes.begin(), rhs.axes.end());

    auto split = [nl, nr](const Eigen::VectorXd& x) {
        return std::pair<Eigen::VectorXd, Eigen::VectorXd>(x.head(nl), x.tail(nr));
    };

    chart.metric = [lhs, rhs, split, n, nl, nr](const Eigen::VectorXd& x) {
        const auto [xl, xr] = split(x);
        Eigen::MatrixXd g = Eigen::MatrixXd::Zero(n, n);
        g.topLeftCorner(nl, nl) = lhs.metric(xl);
        g.bottomRightCorner(nr, nr) = rhs.metric(xr);
        return g;
    };

    if (lhs.has_derivs() && rhs.has_derivs()) {
        chart.metric_derivs = [lhs, rhs, split, n, nl, nr](const Eigen::VectorXd& x) {
            const auto [xl, xr] = split(x);
            const auto dl = lhs.metric_derivs(xl);
            const auto dr = rhs.metric_derivs(xr);
            std::vector<Eigen::MatrixXd> dg(n, Eigen::MatrixXd::Zero(n, n));
            for (int k = 0; k < nl; ++k) dg[k].topLeftCorner(nl, nl) = dl[k];
            for (int k = 0; k < nr; ++k) dg[nl + k].bottomRightCorner(nr, nr) = dr[k];
            return dg;
        };
    }
    if (lhs.has_second_derivs() && rhs.has_second_derivs()) {
        chart.metric_second_derivs = [lhs, rhs, split, n, nl, nr](const Eigen::VectorXd& x) {
            const auto [xl, xr] = split(x);
            const auto dl = lhs.metric_second_derivs(xl);
            const auto dr = rhs.metric_second_derivs(xr);
            std::vector<std::vector<Eigen::MatrixXd>> d2(
                n, std::vector<Eigen::MatrixXd>(n, Eigen::MatrixXd::Zero(n, n)));
            for (int k = 0; k < nl; ++k)
                for (int l = 0; l < nl; ++l) d2[k][l].topLeftCorner(nl, nl) = dl[k][l];
            for (int k = 0; k < nr; ++k)
                for (int l = 0; l < nr; ++l)
                    d2[nl + k][nl + l].bottomRightCorner(nr, nr) = dr[k][l];
            return d2;
        };
    }
    if (lhs.has_curvature_oracle() && rhs.has_curvature_oracle()) {
        chart.curvature_oracle = [lhs, rhs, split, n, nl, nr](const Eigen::VectorXd& x) {
            const auto [xl, xr] = split(x);
            const CurvatureTensor rl = lhs.curvature_oracle(xl);
            const CurvatureTensor rr = rhs.curvature_oracle(xr);
            CurvatureTensor rm(n, Basis::Coordinate);
            for (int p = 0; p < nl; ++p)
                for (int q = p + 1; q < nl; ++q)
                    for (int r = 0; r < nl; ++r)
                        for (int s = r + 1; s < nl; ++s) rm.set(p, q, r, s, rl.at(p, q, r, s));
            for (int p = 0; p < nr; ++p)
                for (int q = p + 1; q < nr; ++q)
                    for (int r = 0; r < nr; ++r)
                        for (int s = r + 1; s < nr; ++s)
                            rm.set(nl + p, nl + q, nl + r, nl + s, rr.at(p, q, r, s));
            return rm;
        };
    }
    return chart;
}

MetricChart build_conformal(const ModelSpec& spec) {
    if (!spec.base) throw BadSpec("conformal requires a base model");
    const MetricChart base = build_chart(*spec.base);
    const int n = base.dim;
    for (const auto& t : spec.terms) {
        if (static_cast<int>(t.freq.size()) != n) {
            throw BadSpec("conformal term frequency length must match dimension");
        }
    }

    ConformalFunction u{spec.terms, base.axes};

    MetricChart chart;
    chart.dim = n;
    chart.label = spec.to_string();
    chart.axes = base.axes;
    chart.metric = [base, u](const Eigen::VectorXd& x) -> Eigen::MatrixXd {
        return std::exp(2.0 * u.value(x)) * base.metric(x);
    };
    if (base.has_derivs()) {
        chart.metric_derivs = [base, u, n](const Eigen::VectorXd& x) {
            const double f = std::exp(2.0 * u.value(x));
            const Eigen::VectorXd du = u.grad(x);
            const Eigen::MatrixXd g = base.metric(x);
            auto dg = base.metric_derivs(x);
            for (int k = 0; k < n; ++k) dg[k] = f * (2.0 * du(k) * g + dg[k]);
            return dg;
        };
    }
    if (base.has_derivs() && base.has_second_derivs()) {
        chart.metric_second_derivs = [base, u, n](const Eigen::VectorXd& x) {
            const double f = std::exp(2.0 * u.value(x));
            const Eigen::VectorXd du = u.grad(x);
            const Eigen::MatrixXd hu = u.hess(x);
            const Eigen::MatrixXd g = base.metric(x);
            const auto dg = base.metric_derivs(x);
            auto d2g = base.metric_second_derivs(x);
            for (int k = 0; k < n; ++k) {
                for (int l = 0; l < n; ++l) {
                    d2g[k][l] = f * ((4.0 * du(k) * du(l) + 2.0 * hu(k, l)) * g +
                                     2.0 * du(k) * dg[l] + 2.0 * du(l) * dg[k] + d2g[k][l]);
                }
            }
            return d2g;
        };
    }
    return chart;
}

}  // namespace

int ModelSpec::total_dim() const {
    switch (kind) {
        case Kind::Sphere:
        case Kind::FlatTorus:
            return dim;
        case Kind::Product:
            return left->total_dim() + right->total_dim();
        case Kind::Conformal:
            return base->total_dim();
    }
    return 0;
}

std::string ModelSpec::to_string() const {
    std::ostringstream os;
    switch (kind) {
        case Kind::Sphere:
            os << "sphere(" << dim << "," << radius << ")";
            break;
        case Kind::FlatTorus: {
            os << "torus(" << dim;
            bool unit = true;
            for (double p : periods) unit = unit && p == 1.0;
            if (!periods.empty() && !unit) {
                os << ",[";
                for (std::size_t i = 0; i < periods.size(); ++i) {
                    if (i) os << ",";
                    os << periods[i];
                }
                os << "]";
            }
            os << ")";
            break;
        }
        case Kind::Product:
            os << "product(" << left->to_string() << "," << right->to_string() << ")";
            break;
        case Kind::Conformal: {
            os << "conformal(" << base->to_string();
            for (const auto& t : terms) {
                os << "," << t.amplitude << "*" << (t.is_sin ? "sin" : "cos") << "(";
                for (std::size_t i = 0; i < t.freq.size(); ++i) {
                    if (i) os << ",";
                    os << t.freq[i];
                }
                if (t.phase != 0.0) os << ";" << t.phase;
                os << ")";
            }
            os << ")";
            break;
        }
    }
    return os.str();
}

ModelSpec sphere(int k, double radius) {
    ModelSpec s;
    s.kind = ModelSpec::Kind::Sphere;
    s.dim = k;
    s.radius = radius;
    return s;
}

ModelSpec flat_torus(int m, std::vector<double> periods) {
    ModelSpec s;
    s.kind = ModelSpec::Kind::FlatTorus;
    s.dim = m;
    s.periods = std::move(periods);
    return s;
}

ModelSpec product(ModelSpec lhs, ModelSpec rhs) {
    ModelSpec s;
    s.kind = ModelSpec::Kind::Product;
    s.left = std::make_shared<ModelSpec>(std::move(lhs));
    s.right = std::make_shared<ModelSpec>(std::move(rhs));
    return s;
}

ModelSpec conformal(ModelSpec base, std::vector<ConformalTerm> terms) {
    ModelSpec s;
    s.kind = ModelSpec::Kind::Conformal;
    s.base = std::make_shared<ModelSpec>(std::move(base));
    s.terms = std::move(terms);
    return s;
}

MetricChart build_chart(const ModelSpec& spec) {
    switch (spec.kind) {
        case ModelSpec::Kind::Sphere:
            return build_sphere(spec);
        case ModelSpec::Kind::FlatTorus:
            return build_torus(spec);
        case ModelSpec::Kind::Product:
            return build_product(spec);
        case ModelSpec::Kind::Conformal:
            return build_conformal(spec);
    }
    throw BadSpec("unknown model kind");
}

CurvatureTensor product_curvature(const ModelSpec& product_spec, const Eigen::VectorXd& point) {
    if (product_spec.kind != ModelSpec::Kind::Product) {
        throw BadSpec("product_curvature requires a product model");
    }
    const MetricChart chart = build_chart(product_spec);
    if (!chart.has_curvature_oracle()) {
        throw BadSpec("product_curvature requires factors with curvature oracles");
    }
    return chart.curvature_oracle(point);
}

// ---------------------------------------------------------------------------
// Model expression parser
// ---------------------------------------------------------------------------

namespace {

struct Parser {
    const std::string& text;
    std::size_t pos = 0;

    explicit Parser(const std::string& t) : text(t) {}

    void skip_ws() {
        while (pos < text.size() && std::isspace(static_cast<unsigned char>(text[pos]))) ++pos;
    }

    bool try_consume(char c) {
        skip_ws();
        if (pos < text.size() && text[pos] == c) {
            ++pos;
            return true;
        }
        return false;
    }

    void expect(char c) {
        if (!try_consume(c)) {
            throw BadSpec("model parse error: expected '" + std::string(1, c) + "' at position " +
                          std::to_string(pos) + " in '" + text + "'");
        }
    }

    std::string ident() {
        skip_ws();
        std::size_t start = pos;
        while (pos < text.size() &&
               (std::isalnum(static_cast<unsigned char>(text[pos])) || text[pos] == '_'))
            ++pos;
        if (start == pos) throw BadSpec("model parse error: expected identifier in '" + text + "'");
        return text.substr(start, pos - start);
    }

    double number() {
        skip_ws();
        std::size_t consumed = 0;
        double v = 0.0;
        try {
            v = std::stod(text.substr(pos), &consumed);
        } catch (const std::exception&) {
            throw BadSpec("model parse error: expected number at position " + std::to_string(pos));
        }
        pos += consumed;
        return v;
    }

    int integer() {
        const double v = number();
        const int i = static_cast<int>(std::lround(v));
        if (std::abs(v - i) > 1e-12) throw BadSpec("model parse error: expected integer");
        return i;
    }

    ModelSpec parse_spec() {
        const std::string name = ident();
        expect('(');
        if (name == "sphere") {
            const int k = integer();
            expect(',');
            const double r = number();
            expect(')');
            return sphere(k, r);
        }
        if (name == "torus") {
            const int m = integer();
            std::vector<double> periods;
            if (try_consume(',')) {
                expect('[');
                periods.push_back(number());
                while (try_consume(',')) periods.push_back(number());
                expect(']');
            }
            expect(')');
            return flat_torus(m, std::move(periods));
        }
        if (name == "product") {
            ModelSpec lhs = parse_spec();
            expect(',');
            ModelSpec rhs = parse_spec();
            expect(')');
            return product(std::move(lhs), std::move(rhs));
        }
        if (name == "conformal") {
            ModelSpec base = parse_spec();
            std::vector<ConformalTerm> terms;
            while (try_consume(',')) terms.push_back(parse_term());
            expect(')');
            return conformal(std::move(base), std::move(terms));
        }
        throw BadSpec("model parse error: unknown model '" + name + "'");
    }

    ConformalTerm parse_term() {
        ConformalTerm t;
        t.amplitude = number();
        expect('*');
        const std::string fn = ident();
        if (fn == "sin") {
            t.is_sin = true;
        } else if (fn != "cos") {
            throw BadSpec("model parse error: conformal term must use sin or cos");
        }
        expect('(');
        t.freq.push_back(integer());
        while (try_consume(',')) t.freq.push_back(integer());
        if (try_consume(';')) t.phase = number();
        expect(')');
        return t;
    }
};

}  // namespace

ModelSpec parse_model(const std::string& text) {
    Parser p(text);
    ModelSpec spec = p.parse_spec();
    p.skip_ws();
    if (p.pos != text.size()) {
        throw BadSpec("model parse error: trailing characters in '" + text + "'");
    }
    return spec;
}

}  // namespace curvlab
