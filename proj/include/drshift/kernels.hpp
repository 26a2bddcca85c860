#pragma once

#include <cstddef>
#include <span>

#include "drshift/types.hpp"

/// Data-parallel reduction kernels.
///
/// Two implementations of every kernel live side by side:
///   - `serial::` is the plain left-to-right reference loop, kept for testing
///     and benchmarking;
///   - `omp::` splits the index range into fixed blocks of `kBlock` rows,
///     reduces the blocks concurrently and combines the partials in block
///     order. The block layout does not depend on the thread count, so the
///     result is bitwise identical for any number of threads.
/// The library always calls the `omp::` versions.
namespace drshift::kernels {

inline constexpr std::size_t kBlock = 256;

namespace serial {
double sum(std::span<const double> v);
double dot(std::span<const double> a, std::span<const double> b);
/// sum_i w_i * x_i over the rows of `x`.
Vector weighted_row_sum(const Points& x, std::span<const double> w);
/// sum_i w_i * x_i x_i^T over the rows of `x`.
Matrix weighted_gram(const Points& x, std::span<const double> w);
} // namespace serial

namespace omp {
double sum(std::span<const double> v);
double dot(std::span<const double> a, std::span<const double> b);
Vector weighted_row_sum(const Points& x, std::span<const double> w);
Matrix weighted_gram(const Points& x, std::span<const double> w);
} // namespace omp

inline double mean(std::span<const double> v)
{
    return v.empty() ? 0.0 : omp::sum(v) / static_cast<double>(v.size());
}

inline std::span<const double> view(const Vector& v)
{
    return {v.data(), static_cast<std::size_t>(v.size())};
}

/// Threads available to parallel regions (1 when built without OpenMP).
int max_threads();
void set_threads(int n);

} // namespace drshift::kernels
