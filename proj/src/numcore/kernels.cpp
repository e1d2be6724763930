#include "lacap/numcore/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace lacap::num::kernels {

namespace {

// Sum from zero in index order, matching the general kernel with c == 1.
double row_dot(const double* a, const double* b, std::size_t k) {
  double acc = 0.0;
  for (std::size_t p = 0; p < k; ++p) acc += a[p] * b[p];
  return acc;
}

void outer_row(double* out, double g, const double* b, std::size_t k) {
  for (std::size_t p = 0; p < k; ++p) out[p] += g * b[p];
}

// out[lo..hi) += a[:, lo..hi)^T g, rows visited in order; zero entries of a skipped.
void transposed_matvec_acc(const double* a, const double* g, double* out, std::size_t r, std::size_t k,
                           std::size_t lo, std::size_t hi) {
  for (std::size_t i = 0; i < r; ++i) {
    const double gi = g[i];
    const double* row = a + i * k;
    for (std::size_t p = lo; p < hi; ++p)
      if (row[p] != 0.0) out[p] += row[p] * gi;
  }
}

}  // namespace

namespace serial {

void matmul(std::span<const double> a, std::span<const double> b, std::span<double> out,
            std::size_t r, std::size_t k, std::size_t c) {
  if (c == 1) {
    for (std::size_t i = 0; i < r; ++i) out[i] = row_dot(a.data() + i * k, b.data(), k);
    return;
  }
  for (std::size_t i = 0; i < r; ++i) {
    double* o = out.data() + i * c;
    for (std::size_t j = 0; j < c; ++j) o[j] = 0.0;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = a[i * k + p];
      const double* brow = b.data() + p * c;
      for (std::size_t j = 0; j < c; ++j) o[j] += aip * brow[j];
    }
  }
}

void matmul_acc_bt(std::span<const double> g, std::span<const double> b, std::span<double> out,
                   std::size_t r, std::size_t k, std::size_t c) {
  if (c == 1) {
    for (std::size_t i = 0; i < r; ++i) outer_row(out.data() + i * k, g[i], b.data(), k);
    return;
  }
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      double acc = 0.0;
      for (std::size_t j = 0; j < c; ++j) acc += g[i * c + j] * b[p * c + j];
      out[i * k + p] += acc;
    }
  }
}

void matmul_acc_at(std::span<const double> a, std::span<const double> g, std::span<double> out,
                   std::size_t r, std::size_t k, std::size_t c) {
  if (c == 1) {
    transposed_matvec_acc(a.data(), g.data(), out.data(), r, k, 0, k);
    return;
  }
  for (std::size_t p = 0; p < k; ++p) {
    double* o = out.data() + p * c;
    for (std::size_t i = 0; i < r; ++i) {
      const double aip = a[i * k + p];
      if (aip == 0.0) continue;
      const double* grow = g.data() + i * c;
      for (std::size_t j = 0; j < c; ++j) o[j] += aip * grow[j];
    }
  }
}

void log_softmax(std::span<const double> x, std::span<const unsigned char> mask,
                 std::span<double> out) {
  const auto allowed = [&](std::size_t i) { return mask.empty() || mask[i] != 0; };
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < x.size(); ++i)
    if (allowed(i) && x[i] > mx) mx = x[i];
  double z = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i)
    if (allowed(i)) z += std::exp(x[i] - mx);
  const double lz = mx + std::log(z);
  for (std::size_t i = 0; i < x.size(); ++i)
    out[i] = allowed(i) ? x[i] - lz : -std::numeric_limits<double>::infinity();
}

}  // namespace serial

void matmul(std::span<const double> a, std::span<const double> b, std::span<double> out,
            std::size_t r, std::size_t k, std::size_t c) {
  const long rows = static_cast<long>(r);
  if (c == 1) {
#pragma omp parallel for schedule(static) if (r * k >= kParallelThreshold)
    for (long i = 0; i < rows; ++i) out[i] = row_dot(a.data() + i * k, b.data(), k);
    return;
  }
#pragma omp parallel for schedule(static) if (r * k * c >= kParallelThreshold)
  for (long i = 0; i < rows; ++i) {
    double* o = out.data() + i * c;
    for (std::size_t j = 0; j < c; ++j) o[j] = 0.0;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = a[i * k + p];
      const double* brow = b.data() + p * c;
      for (std::size_t j = 0; j < c; ++j) o[j] += aip * brow[j];
    }
  }
}

void matmul_acc_bt(std::span<const double> g, std::span<const double> b, std::span<double> out,
                   std::size_t r, std::size_t k, std::size_t c) {
  const long rows = static_cast<long>(r);
  if (c == 1) {
#pragma omp parallel for schedule(static) if (r * k >= kParallelThreshold)
    for (long i = 0; i < rows; ++i) outer_row(out.data() + i * k, g[i], b.data(), k);
    return;
  }
#pragma omp parallel for schedule(static) if (r * k * c >= kParallelThreshold)
  for (long i = 0; i < rows; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      double acc = 0.0;
      for (std::size_t j = 0; j < c; ++j) acc += g[i * c + j] * b[p * c + j];
      out[i * k + p] += acc;
    }
  }
}

void matmul_acc_at(std::span<const double> a, std::span<const double> g, std::span<double> out,
                   std::size_t r, std::size_t k, std::size_t c) {
  const long inner = static_cast<long>(k);
  if (c == 1) {
    // Column blocks keep each out[p] summed over i in order.
    constexpr long kBlock = 64;
    const long blocks = (inner + kBlock - 1) / kBlock;
#pragma omp parallel for schedule(static) if (r * k >= kParallelThreshold)
    for (long blk = 0; blk < blocks; ++blk) {
      const auto lo = static_cast<std::size_t>(blk * kBlock);
      transposed_matvec_acc(a.data(), g.data(), out.data(), r, k, lo, std::min(k, lo + kBlock));
    }
    return;
  }
#pragma omp parallel for schedule(static) if (r * k * c >= kParallelThreshold)
  for (long p = 0; p < inner; ++p) {
    double* o = out.data() + p * c;
    for (std::size_t i = 0; i < r; ++i) {
      const double aip = a[i * k + p];
      if (aip == 0.0) continue;
      const double* grow = g.data() + i * c;
      for (std::size_t j = 0; j < c; ++j) o[j] += aip * grow[j];
    }
  }
}

void log_softmax(std::span<const double> x, std::span<const unsigned char> mask,
                 std::span<double> out) {
  // Vocabulary-sized vectors: never worth a parallel region.
  serial::log_softmax(x, mask, out);
}

double dot(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace lacap::num::kernels
