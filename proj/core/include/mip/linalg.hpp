#pragma once

#include <vector>

#include "mip/tensor.hpp"

namespace mip {

// Eigendecomposition of a symmetric matrix: A = V diag(values) V^T.
// Columns of `vectors` are the eigenvectors, sorted by descending eigenvalue.
struct EigenDecomposition {
    std::vector<double> values;
    std::vector<std::vector<double>> vectors;  // vectors[k] is the k-th eigenvector
};

// Cyclic Jacobi rotation method on a dense symmetric matrix (double storage).
// Deterministic and dependency-free; fine for the small covariance matrices
// this project works with (d <= a few hundred).
EigenDecomposition eigen_symmetric(const std::vector<std::vector<double>>& a);

// A^(-1/2) for symmetric positive-definite A, via the eigendecomposition.
// Throws ValidationError if any eigenvalue is not strictly positive.
std::vector<std::vector<double>> sym_inv_sqrt(const std::vector<std::vector<double>>& a);

// A^(1/2) for symmetric positive-semidefinite A (negative eigenvalues from
// roundoff are clamped to zero).
std::vector<std::vector<double>> sym_sqrt(const std::vector<std::vector<double>>& a);

// y = A x for a dense double matrix.
std::vector<double> mat_vec_d(const std::vector<std::vector<double>>& a,
                              const std::vector<double>& x);

}  // namespace mip
