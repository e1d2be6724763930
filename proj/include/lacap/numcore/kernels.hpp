#pragma once

// Dense inner loops. Every kernel has a serial reference in `serial::` and an
// OpenMP version in the enclosing namespace. Both keep the same per-element
// accumulation order, so their outputs are bit-identical for any thread count.

#include <cstddef>
#include <span>

namespace lacap::num::kernels {

// Work (in multiply-adds) below which the OpenMP versions stay on one thread.
inline constexpr std::size_t kParallelThreshold = 1u << 15;

namespace serial {

/// out[r x c] = a[r x k] * b[k x c]
void matmul(std::span<const double> a, std::span<const double> b, std::span<double> out,
            std::size_t r, std::size_t k, std::size_t c);
/// out[r x k] += g[r x c] * b[k x c]^T
void matmul_acc_bt(std::span<const double> g, std::span<const double> b, std::span<double> out,
                   std::size_t r, std::size_t k, std::size_t c);
/// out[k x c] += a[r x k]^T * g[r x c]
void matmul_acc_at(std::span<const double> a, std::span<const double> g, std::span<double> out,
                   std::size_t r, std::size_t k, std::size_t c);
/// out[i] = log softmax(x)[i] over entries with mask[i] != 0; masked entries get -inf.
void log_softmax(std::span<const double> x, std::span<const unsigned char> mask,
                 std::span<double> out);

}  // namespace serial

void matmul(std::span<const double> a, std::span<const double> b, std::span<double> out,
            std::size_t r, std::size_t k, std::size_t c);
void matmul_acc_bt(std::span<const double> g, std::span<const double> b, std::span<double> out,
                   std::size_t r, std::size_t k, std::size_t c);
void matmul_acc_at(std::span<const double> a, std::span<const double> g, std::span<double> out,
                   std::size_t r, std::size_t k, std::size_t c);
void log_softmax(std::span<const double> x, std::span<const unsigned char> mask,
                 std::span<double> out);

double dot(std::span<const double> a, std::span<const double> b);
double sigmoid(double x);

}  // namespace lacap::num::kernels
