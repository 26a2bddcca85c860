#include "drshift/kernels.hpp"

#include <cassert>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace drshift::kernels {

namespace {

std::size_t block_count(std::size_t n)
{
    return (n + kBlock - 1) / kBlock;
}

void accumulate_rows(const Points& x, std::span<const double> w, std::size_t lo, std::size_t hi,
                     Vector& acc)
{
    const auto d = x.cols();
    for (std::size_t i = lo; i < hi; ++i) {
        const double* row = x.data() + i * d;
        for (Eigen::Index k = 0; k < d; ++k) {
            acc[k] += w[i] * row[k];
        }
    }
}

void accumulate_gram(const Points& x, std::span<const double> w, std::size_t lo, std::size_t hi,
                     Matrix& acc)
{
    const auto d = x.cols();
    for (std::size_t i = lo; i < hi; ++i) {
        const double* row = x.data() + i * d;
        for (Eigen::Index a = 0; a < d; ++a) {
            const double wa = w[i] * row[a];
            for (Eigen::Index b = 0; b <= a; ++b) {
                acc(a, b) += wa * row[b];
            }
        }
    }
}

void mirror_lower(Matrix& m)
{
    for (Eigen::Index a = 0; a < m.rows(); ++a) {
        for (Eigen::Index b = 0; b < a; ++b) {
            m(b, a) = m(a, b);
        }
    }
}

} // namespace

namespace serial {

double sum(std::span<const double> v)
{
    double s = 0.0;
    for (double x : v) {
        s += x;
    }
    return s;
}

double dot(std::span<const double> a, std::span<const double> b)
{
    assert(a.size() == b.size());
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        s += a[i] * b[i];
    }
    return s;
}

Vector weighted_row_sum(const Points& x, std::span<const double> w)
{
    assert(static_cast<std::size_t>(x.rows()) == w.size());
    Vector acc = Vector::Zero(x.cols());
    accumulate_rows(x, w, 0, w.size(), acc);
    return acc;
}

Matrix weighted_gram(const Points& x, std::span<const double> w)
{
    assert(static_cast<std::size_t>(x.rows()) == w.size());
    Matrix acc = Matrix::Zero(x.cols(), x.cols());
    accumulate_gram(x, w, 0, w.size(), acc);
    mirror_lower(acc);
    return acc;
}

} // namespace serial

namespace omp {

double sum(std::span<const double> v)
{
    const std::size_t nb = block_count(v.size());
    std::vector<double> partial(nb, 0.0);
    const auto nb_i = static_cast<long long>(nb);
#pragma omp parallel for schedule(static)
    for (long long b = 0; b < nb_i; ++b) {
        const std::size_t lo = static_cast<std::size_t>(b) * kBlock;
        const std::size_t hi = std::min(v.size(), lo + kBlock);
        double s = 0.0;
        for (std::size_t i = lo; i < hi; ++i) {
            s += v[i];
        }
        partial[b] = s;
    }
    double total = 0.0;
    for (double p : partial) {
        total += p;
    }
    return total;
}

double dot(std::span<const double> a, std::span<const double> b)
{
    assert(a.size() == b.size());
    const std::size_t nb = block_count(a.size());
    std::vector<double> partial(nb, 0.0);
    const auto nb_i = static_cast<long long>(nb);
#pragma omp parallel for schedule(static)
    for (long long k = 0; k < nb_i; ++k) {
        const std::size_t lo = static_cast<std::size_t>(k) * kBlock;
        const std::size_t hi = std::min(a.size(), lo + kBlock);
        double s = 0.0;
        for (std::size_t i = lo; i < hi; ++i) {
            s += a[i] * b[i];
        }
        partial[k] = s;
    }
    double total = 0.0;
    for (double p : partial) {
        total += p;
    }
    return total;
}

Vector weighted_row_sum(const Points& x, std::span<const double> w)
{
    assert(static_cast<std::size_t>(x.rows()) == w.size());
    const std::size_t nb = block_count(w.size());
    std::vector<Vector> partial(nb, Vector::Zero(x.cols()));
    const auto nb_i = static_cast<long long>(nb);
#pragma omp parallel for schedule(static)
    for (long long b = 0; b < nb_i; ++b) {
        const std::size_t lo = static_cast<std::size_t>(b) * kBlock;
        accumulate_rows(x, w, lo, std::min(w.size(), lo + kBlock), partial[b]);
    }
    Vector total = Vector::Zero(x.cols());
    for (const auto& p : partial) {
        total += p;
    }
    return total;
}

Matrix weighted_gram(const Points& x, std::span<const double> w)
{
    assert(static_cast<std::size_t>(x.rows()) == w.size());
    const std::size_t nb = block_count(w.size());
    std::vector<Matrix> partial(nb, Matrix::Zero(x.cols(), x.cols()));
    const auto nb_i = static_cast<long long>(nb);
#pragma omp parallel for schedule(static)
    for (long long b = 0; b < nb_i; ++b) {
        const std::size_t lo = static_cast<std::size_t>(b) * kBlock;
        accumulate_gram(x, w, lo, std::min(w.size(), lo + kBlock), partial[b]);
    }
    Matrix total = Matrix::Zero(x.cols(), x.cols());
    for (const auto& p : partial) {
        total += p;
    }
    mirror_lower(total);
    return total;
}

} // namespace omp

int max_threads()
{
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

void set_threads(int n)
{
#ifdef _OPENMP
    if (n > 0) {
        omp_set_num_threads(n);
    }
#else
    (void)n;
#endif
}

} // namespace drshift::kernels
