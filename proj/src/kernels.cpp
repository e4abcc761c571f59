#include "sero/kernels.hpp"

#include <algorithm>
#include <atomic>

#ifdef SERO_HAVE_OPENMP
#include <omp.h>
#endif

namespace sero::kernels {

namespace {
std::atomic<bool> g_parallel{true};
}

void set_parallel(bool enabled) { g_parallel.store(enabled); }
bool parallel_enabled() { return g_parallel.load(); }

int thread_count() {
#ifdef SERO_HAVE_OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

namespace serial {

void matvec(const double *w, const double *x, double *y, int rows, int cols) {
  for (int i = 0; i < rows; ++i) {
    const double *row = w + static_cast<std::size_t>(i) * cols;
    double acc = 0.0;
    for (int j = 0; j < cols; ++j) acc += row[j] * x[j];
    y[i] = acc;
  }
}

void matvec_transpose_accum(const double *w, const double *dy, double *dx,
                            int rows, int cols) {
  // Column-major traversal: each dx[j] is owned by one iteration.
  for (int j = 0; j < cols; ++j) {
    double acc = 0.0;
    for (int i = 0; i < rows; ++i) {
      acc += w[static_cast<std::size_t>(i) * cols + j] * dy[i];
    }
    dx[j] += acc;
  }
}

void outer_accum(const double *dy, const double *x, double *dw, int rows,
                 int cols) {
  for (int i = 0; i < rows; ++i) {
    double *row = dw + static_cast<std::size_t>(i) * cols;
    const double d = dy[i];
    for (int j = 0; j < cols; ++j) row[j] += d * x[j];
  }
}

void relu(const double *x, double *y, int n) {
  for (int i = 0; i < n; ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
}

} // namespace serial

namespace omp {

void matvec(const double *w, const double *x, double *y, int rows, int cols) {
#pragma omp parallel for schedule(static)
  for (int i = 0; i < rows; ++i) {
    const double *row = w + static_cast<std::size_t>(i) * cols;
    double acc = 0.0;
    for (int j = 0; j < cols; ++j) acc += row[j] * x[j];
    y[i] = acc;
  }
}

void matvec_transpose_accum(const double *w, const double *dy, double *dx,
                            int rows, int cols) {
#pragma omp parallel for schedule(static)
  for (int j = 0; j < cols; ++j) {
    double acc = 0.0;
    for (int i = 0; i < rows; ++i) {
      acc += w[static_cast<std::size_t>(i) * cols + j] * dy[i];
    }
    dx[j] += acc;
  }
}

void outer_accum(const double *dy, const double *x, double *dw, int rows,
                 int cols) {
#pragma omp parallel for schedule(static)
  for (int i = 0; i < rows; ++i) {
    double *row = dw + static_cast<std::size_t>(i) * cols;
    const double d = dy[i];
    for (int j = 0; j < cols; ++j) row[j] += d * x[j];
  }
}

void relu(const double *x, double *y, int n) {
#pragma omp parallel for schedule(static)
  for (int i = 0; i < n; ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
}

} // namespace omp

namespace {
// Fork/join overhead swamps tiny problems; below this work size the serial
// path runs instead. Results are bitwise-identical either way.
constexpr long kParallelCutoff = 16 * 1024;
}

void matvec(const double *w, const double *x, double *y, int rows, int cols) {
  if (parallel_enabled() && static_cast<long>(rows) * cols >= kParallelCutoff) {
    omp::matvec(w, x, y, rows, cols);
  } else {
    serial::matvec(w, x, y, rows, cols);
  }
}

void matvec_transpose_accum(const double *w, const double *dy, double *dx,
                            int rows, int cols) {
  if (parallel_enabled() && static_cast<long>(rows) * cols >= kParallelCutoff) {
    omp::matvec_transpose_accum(w, dy, dx, rows, cols);
  } else {
    serial::matvec_transpose_accum(w, dy, dx, rows, cols);
  }
}

void outer_accum(const double *dy, const double *x, double *dw, int rows,
                 int cols) {
  if (parallel_enabled() && static_cast<long>(rows) * cols >= kParallelCutoff) {
    omp::outer_accum(dy, x, dw, rows, cols);
  } else {
    serial::outer_accum(dy, x, dw, rows, cols);
  }
}

void relu(const double *x, double *y, int n) {
  if (parallel_enabled() && n >= kParallelCutoff) omp::relu(x, y, n);
  else serial::relu(x, y, n);
}

double dot(const double *a, const double *b, int n) {
  double acc = 0.0;
  for (int i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

} // namespace sero::kernels
