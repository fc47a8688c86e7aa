#pragma once

#include <cstddef>
#include <span>

// Dense matrix kernels. Every kernel exists twice: a serial reference and an
// OpenMP row-parallel version. Both accumulate each output element over the
// inner dimension in ascending order, so results are bit-identical; the
// tests rely on that.
namespace five::kernels {

// Operands are row-major. Output is overwritten.
namespace serial {
// C[MxN] = A[MxK] * B[KxN]
void matmul(std::span<const double> a, std::span<const double> b, std::span<double> c,
            std::size_t m, std::size_t k, std::size_t n);
// C[MxN] = A[MxK] * B[NxK]^T
void matmul_nt(std::span<const double> a, std::span<const double> b, std::span<double> c,
               std::size_t m, std::size_t k, std::size_t n);
// C[MxN] = A[KxM]^T * B[KxN]
void matmul_tn(std::span<const double> a, std::span<const double> b, std::span<double> c,
               std::size_t m, std::size_t k, std::size_t n);
}  // namespace serial

namespace parallel {
void matmul(std::span<const double> a, std::span<const double> b, std::span<double> c,
            std::size_t m, std::size_t k, std::size_t n);
void matmul_nt(std::span<const double> a, std::span<const double> b, std::span<double> c,
               std::size_t m, std::size_t k, std::size_t n);
void matmul_tn(std::span<const double> a, std::span<const double> b, std::span<double> c,
               std::size_t m, std::size_t k, std::size_t n);
}  // namespace parallel

// Products with fewer multiply-adds than this stay serial.
inline constexpr std::size_t kParallelWorkThreshold = std::size_t{1} << 20;

// Dispatching entry points. Use the parallel kernel only for large products
// and never from inside an enclosing parallel region.
void matmul(std::span<const double> a, std::span<const double> b, std::span<double> c,
            std::size_t m, std::size_t k, std::size_t n);
void matmul_nt(std::span<const double> a, std::span<const double> b, std::span<double> c,
               std::size_t m, std::size_t k, std::size_t n);
void matmul_tn(std::span<const double> a, std::span<const double> b, std::span<double> c,
               std::size_t m, std::size_t k, std::size_t n);

// Number of OpenMP threads available (1 when built without OpenMP).
int max_threads();

}  // namespace five::kernels
