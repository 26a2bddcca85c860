#include "drshift/linalg.hpp"

#include <limits>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include "drshift/errors.hpp"

namespace drshift {

double singularity_threshold(const Matrix& a)
{
    const double max_diag = a.rows() > 0 ? a.diagonal().cwiseAbs().maxCoeff() : 0.0;
    return std::numeric_limits<double>::epsilon() * static_cast<double>(a.rows()) * max_diag;
}

namespace {

Eigen::LDLT<Matrix> factor(const Matrix& a, const std::string& message)
{
    Eigen::LDLT<Matrix> ldlt(a);
    const double tol = singularity_threshold(a);
    if (ldlt.info() != Eigen::Success || a.rows() == 0 ||
        ldlt.vectorD().cwiseAbs().minCoeff() <= tol || !(tol > 0.0)) {
        throw NumericalError(message);
    }
    return ldlt;
}

} // namespace

Vector solve_symmetric(const Matrix& a, const Vector& b, const std::string& message)
{
    return factor(a, message).solve(b);
}

Matrix solve_symmetric(const Matrix& a, const Matrix& b, const std::string& message)
{
    return factor(a, message).solve(b);
}

void require_positive_definite(const Matrix& a, const std::string& message)
{
    if (a.rows() == 0) {
        throw NumericalError(message);
    }
    Eigen::SelfAdjointEigenSolver<Matrix> es(a, Eigen::EigenvaluesOnly);
    if (!(es.eigenvalues().minCoeff() > singularity_threshold(a))) {
        throw NumericalError(message);
    }
}

double operator_norm_symmetric(const Matrix& a)
{
    Eigen::SelfAdjointEigenSolver<Matrix> es(a, Eigen::EigenvaluesOnly);
    return es.eigenvalues().cwiseAbs().maxCoeff();
}

} // namespace drshift
