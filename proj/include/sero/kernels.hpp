#pragma once

#include <cstddef>

// Dense kernels backing the controller and retrieval math. Every kernel has a
// serial reference and an OpenMP variant; the parallel decomposition is chosen
// so both produce bitwise-identical results (each output element is reduced
// sequentially by exactly one thread), which keeps whole runs reproducible
// regardless of thread count. The dispatching entry points pick the variant
// from the process-wide switch below.
namespace sero::kernels {

void set_parallel(bool enabled);
bool parallel_enabled();
int thread_count();

namespace serial {
// y = W x, W row-major (rows x cols)
void matvec(const double *w, const double *x, double *y, int rows, int cols);
// dx += W^T dy
void matvec_transpose_accum(const double *w, const double *dy, double *dx,
                            int rows, int cols);
// dW += dy x^T
void outer_accum(const double *dy, const double *x, double *dw, int rows,
                 int cols);
// elementwise y = max(x, 0)
void relu(const double *x, double *y, int n);
} // namespace serial

namespace omp {
void matvec(const double *w, const double *x, double *y, int rows, int cols);
void matvec_transpose_accum(const double *w, const double *dy, double *dx,
                            int rows, int cols);
void outer_accum(const double *dy, const double *x, double *dw, int rows,
                 int cols);
void relu(const double *x, double *y, int n);
} // namespace omp

void matvec(const double *w, const double *x, double *y, int rows, int cols);
void matvec_transpose_accum(const double *w, const double *dy, double *dx,
                            int rows, int cols);
void outer_accum(const double *dy, const double *x, double *dw, int rows,
                 int cols);
void relu(const double *x, double *y, int n);

// Sequential dot product; the reduction order is part of the contract.
double dot(const double *a, const double *b, int n);

} // namespace sero::kernels
