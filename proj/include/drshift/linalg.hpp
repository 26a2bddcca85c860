#pragma once

#include <string>

#include "drshift/types.hpp"

namespace drshift {

/// Singularity threshold for symmetric systems: machine epsilon * d * max diagonal.
double singularity_threshold(const Matrix& a);

/// Solve A x = b for symmetric positive semi-definite A with a pivoted LDL^T
/// factorization. Throws NumericalError(message) when a pivot falls below
/// singularity_threshold(A).
Vector solve_symmetric(const Matrix& a, const Vector& b, const std::string& message);
Matrix solve_symmetric(const Matrix& a, const Matrix& b, const std::string& message);

/// Throws NumericalError(message) unless A is symmetric positive definite.
void require_positive_definite(const Matrix& a, const std::string& message);

/// Largest eigenvalue magnitude of a symmetric matrix.
double operator_norm_symmetric(const Matrix& a);

} // namespace drshift
