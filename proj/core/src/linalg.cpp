#include "mip/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mip/errors.hpp"

namespace mip {

EigenDecomposition eigen_symmetric(const std::vector<std::vector<double>>& input) {
    const size_t n = input.size();
    for (const auto& row : input)
        if (row.size() != n) throw ValidationError("eigen_symmetric: matrix is not square");

    std::vector<std::vector<double>> a = input;
    std::vector<std::vector<double>> v(n, std::vector<double>(n, 0.0));
    for (size_t i = 0; i < n; ++i) v[i][i] = 1.0;

    // Cyclic sweeps over all (p, q) pairs; each rotation zeroes a[p][q].
    const int max_sweeps = 100;
    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
        double off = 0.0;
        for (size_t p = 0; p < n; ++p)
            for (size_t q = p + 1; q < n; ++q) off += a[p][q] * a[p][q];
        if (off < 1e-30) break;

        for (size_t p = 0; p + 1 < n; ++p) {
            for (size_t q = p + 1; q < n; ++q) {
                const double apq = a[p][q];
                if (apq == 0.0) continue;
                const double app = a[p][p];
                const double aqq = a[q][q];
                const double theta = (aqq - app) / (2.0 * apq);
                // Smaller-magnitude root of t^2 + 2 theta t - 1 = 0.
                const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;

                for (size_t k = 0; k < n; ++k) {
                    const double akp = a[k][p];
                    const double akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for (size_t k = 0; k < n; ++k) {
                    const double apk = a[p][k];
                    const double aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for (size_t k = 0; k < n; ++k) {
                    const double vkp = v[k][p];
                    const double vkq = v[k][q];
                    v[k][p] = c * vkp - s * vkq;
                    v[k][q] = s * vkp + c * vkq;
                }
            }
        }
    }

    EigenDecomposition out;
    out.values.resize(n);
    for (size_t i = 0; i < n; ++i) out.values[i] = a[i][i];

    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](size_t x, size_t y) { return out.values[x] > out.values[y]; });

    std::vector<double> sorted_values(n);
    out.vectors.assign(n, std::vector<double>(n, 0.0));
    for (size_t k = 0; k < n; ++k) {
        sorted_values[k] = out.values[order[k]];
        for (size_t i = 0; i < n; ++i) out.vectors[k][i] = v[i][order[k]];
    }
    out.values = std::move(sorted_values);
    return out;
}

static std::vector<std::vector<double>> reassemble(const EigenDecomposition& eig,
                                                   const std::vector<double>& fn_values) {
    const size_t n = eig.values.size();
    std::vector<std::vector<double>> out(n, std::vector<double>(n, 0.0));
    for (size_t k = 0; k < n; ++k) {
        const double f = fn_values[k];
        if (f == 0.0) continue;
        const auto& vec = eig.vectors[k];
        for (size_t i = 0; i < n; ++i)
            for (size_t j = 0; j < n; ++j) out[i][j] += f * vec[i] * vec[j];
    }
    return out;
}

std::vector<std::vector<double>> sym_inv_sqrt(const std::vector<std::vector<double>>& a) {
    const EigenDecomposition eig = eigen_symmetric(a);
    std::vector<double> f(eig.values.size());
    for (size_t k = 0; k < eig.values.size(); ++k) {
        if (eig.values[k] <= 0.0)
            throw ValidationError("sym_inv_sqrt: matrix is not positive definite");
        f[k] = 1.0 / std::sqrt(eig.values[k]);
    }
    return reassemble(eig, f);
}

std::vector<std::vector<double>> sym_sqrt(const std::vector<std::vector<double>>& a) {
    const EigenDecomposition eig = eigen_symmetric(a);
    std::vector<double> f(eig.values.size());
    for (size_t k = 0; k < eig.values.size(); ++k)
        f[k] = eig.values[k] > 0.0 ? std::sqrt(eig.values[k]) : 0.0;
    return reassemble(eig, f);
}

std::vector<double> mat_vec_d(const std::vector<std::vector<double>>& a,
                              const std::vector<double>& x) {
    std::vector<double> y(a.size(), 0.0);
    for (size_t i = 0; i < a.size(); ++i) {
        double acc = 0.0;
        for (size_t j = 0; j < x.size(); ++j) acc += a[i][j] * x[j];
        y[i] = acc;
    }
    return y;
}

}  // namespace mip
