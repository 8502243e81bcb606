#include "curvlab/interpolant.hpp"

#include <cmath>

namespace curvlab {

namespace {

using cplx = std::complex<double>;

// plain DFT, rows of `data` transformed in place: out_k = sum_j in_j w^{jk}
void dft_rows(Eigen::MatrixXcd& data) {
    const int n = static_cast<int>(data.cols());
    Eigen::MatrixXcd twiddle(n, n);
    for (int j = 0; j < n; ++j) {
        for (int k = 0; k < n; ++k) {
            twiddle(j, k) = std::polar(1.0, -2.0 * M_PI * j * k / n);
        }
    }
    data = data * twiddle;
}

}  // namespace

TrigInterpolant::TrigInterpolant(const Eigen::VectorXd& values, const CoordAxis& axis,
                                 double truncation) {
    if (!axis.periodic) throw BadSpec("trig interpolation requires a periodic axis");
    base_dim_ = 1;
    const int n = static_cast<int>(values.size());
    size_ = {n, 1};
    lo_ = {axis.lo, 0.0};
    period_ = {axis.length(), 1.0};
    zeros_ = {0};

    Eigen::MatrixXcd c(1, n);
    for (int j = 0; j < n; ++j) c(0, j) = values(j);
    dft_rows(c);
    c /= static_cast<double>(n);

    const double floor = truncation * values.cwiseAbs().maxCoeff();
    for (int k = 0; k < n; ++k) {
        if (std::abs(c(0, k)) <= floor && truncation > 0.0) continue;
        modes_.push_back({k, 0, c(0, k)});
    }
}

TrigInterpolant::TrigInterpolant(const Eigen::MatrixXd& values, const CoordAxis& axis0,
                                 const CoordAxis& axis1, double truncation) {
    if (!axis0.periodic || !axis1.periodic) {
        throw BadSpec("trig interpolation requires periodic axes");
    }
    base_dim_ = 2;
    const int n0 = static_cast<int>(values.rows());
    const int n1 = static_cast<int>(values.cols());
    size_ = {n0, n1};
    lo_ = {axis0.lo, axis1.lo};
    period_ = {axis0.length(), axis1.length()};
    zeros_ = {0, 0};

    Eigen::MatrixXcd c = values.cast<cplx>();
    dft_rows(c);  // transform along axis 1
    Eigen::MatrixXcd ct = c.transpose();
    dft_rows(ct);  // transform along axis 0
    c = ct.transpose() / static_cast<double>(n0 * n1);

    const double floor = truncation * values.cwiseAbs().maxCoeff();
    for (int k0 = 0; k0 < n0; ++k0) {
        for (int k1 = 0; k1 < n1; ++k1) {
            if (std::abs(c(k0, k1)) <= floor && truncation > 0.0) continue;
            modes_.push_back({k0, k1, c(k0, k1)});
        }
    }
}

std::complex<double> TrigInterpolant::basis(int k, int n, double t, int order) {
    // signed frequency; even-n Nyquist mode extends as sin(pi*n*t), which is
    // real and matches (-1)^j at the cell-centered nodes.
    if (n % 2 == 0 && k == n / 2) {
        const double w = M_PI * n;
        const double phase = w * t + 0.5 * M_PI * order;
        double scale = 1.0;
        for (int i = 0; i < order; ++i) scale *= w;
        return {scale * std::sin(phase), 0.0};
    }
    const int ks = (2 * k <= n) ? k : k - n;
    const double w = 2.0 * M_PI * ks;
    const cplx iw(0.0, w);
    cplx factor(1.0, 0.0);
    for (int i = 0; i < order; ++i) factor *= iw;
    // phase offset aligns the basis with cell-centered sample nodes
    return factor * std::polar(1.0, w * t - M_PI * ks / n);
}

double TrigInterpolant::eval(const Eigen::VectorXd& point, const std::vector<int>& orders) const {
    const double t0 = (point(0) - lo_[0]) / period_[0];
    const int ord0 = orders.empty() ? 0 : orders[0];

    if (base_dim_ == 1) {
        cplx sum(0.0, 0.0);
        for (const Mode& m : modes_) {
            sum += m.coeff * basis(m.k0, size_[0], t0, ord0);
        }
        double scale = 1.0;
        for (int i = 0; i < ord0; ++i) scale /= period_[0];
        return sum.real() * scale;
    }

    const double t1 = (point(1) - lo_[1]) / period_[1];
    const int ord1 = orders.size() > 1 ? orders[1] : 0;

    // cache per-axis basis values
    thread_local std::vector<cplx> b0, b1;
    b0.assign(size_[0], cplx(0, 0));
    b1.assign(size_[1], cplx(0, 0));
    std::vector<bool> need0(size_[0], false), need1(size_[1], false);
    for (const Mode& m : modes_) {
        need0[m.k0] = true;
        need1[m.k1] = true;
    }
    for (int k = 0; k < size_[0]; ++k)
        if (need0[k]) b0[k] = basis(k, size_[0], t0, ord0);
    for (int k = 0; k < size_[1]; ++k)
        if (need1[k]) b1[k] = basis(k, size_[1], t1, ord1);

    cplx sum(0.0, 0.0);
    for (const Mode& m : modes_) sum += m.coeff * b0[m.k0] * b1[m.k1];

    double scale = 1.0;
    for (int i = 0; i < ord0; ++i) scale /= period_[0];
    for (int i = 0; i < ord1; ++i) scale /= period_[1];
    return sum.real() * scale;
}

}  // namespace curvlab
