#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "sero/kernels.hpp"
#include "sero/rng.hpp"

#include <cstring>
#include <vector>

using namespace sero;

namespace {

std::vector<double> random_vec(std::size_t n, Rng &rng) {
  std::vector<double> v(n);
  for (double &x : v) x = 2.0 * rng.uniform() - 1.0;
  return v;
}

} // namespace

TEST_CASE("omp kernels are bitwise identical to the serial reference") {
  Rng rng(123);
  for (auto [rows, cols] : {std::pair{7, 13}, {256, 1029}, {64, 512}, {1, 1}}) {
    auto w = random_vec(static_cast<std::size_t>(rows) * cols, rng);
    auto x = random_vec(static_cast<std::size_t>(cols), rng);
    auto dy = random_vec(static_cast<std::size_t>(rows), rng);

    std::vector<double> y_s(static_cast<std::size_t>(rows));
    std::vector<double> y_p(static_cast<std::size_t>(rows));
    kernels::serial::matvec(w.data(), x.data(), y_s.data(), rows, cols);
    kernels::omp::matvec(w.data(), x.data(), y_p.data(), rows, cols);
    CHECK(std::memcmp(y_s.data(), y_p.data(), y_s.size() * sizeof(double)) == 0);

    std::vector<double> dx_s(static_cast<std::size_t>(cols), 0.5);
    std::vector<double> dx_p(static_cast<std::size_t>(cols), 0.5);
    kernels::serial::matvec_transpose_accum(w.data(), dy.data(), dx_s.data(),
                                            rows, cols);
    kernels::omp::matvec_transpose_accum(w.data(), dy.data(), dx_p.data(), rows,
                                         cols);
    CHECK(std::memcmp(dx_s.data(), dx_p.data(), dx_s.size() * sizeof(double)) == 0);

    std::vector<double> dw_s(w.size(), 0.25);
    std::vector<double> dw_p(w.size(), 0.25);
    kernels::serial::outer_accum(dy.data(), x.data(), dw_s.data(), rows, cols);
    kernels::omp::outer_accum(dy.data(), x.data(), dw_p.data(), rows, cols);
    CHECK(std::memcmp(dw_s.data(), dw_p.data(), dw_s.size() * sizeof(double)) == 0);
  }
}

TEST_CASE("matvec matches a straightforward loop") {
  Rng rng(7);
  const int rows = 5;
  const int cols = 9;
  auto w = random_vec(static_cast<std::size_t>(rows) * cols, rng);
  auto x = random_vec(static_cast<std::size_t>(cols), rng);
  std::vector<double> y(static_cast<std::size_t>(rows));
  kernels::matvec(w.data(), x.data(), y.data(), rows, cols);
  for (int i = 0; i < rows; ++i) {
    double acc = 0.0;
    for (int j = 0; j < cols; ++j) acc += w[static_cast<std::size_t>(i) * cols + j] * x[static_cast<std::size_t>(j)];
    CHECK(y[static_cast<std::size_t>(i)] == doctest::Approx(acc).epsilon(1e-15));
  }
}

TEST_CASE("relu clamps negatives only") {
  const double x[5] = {-2.0, -0.0, 0.0, 0.5, 3.0};
  double y[5];
  kernels::relu(x, y, 5);
  CHECK(y[0] == 0.0);
  CHECK(y[1] == 0.0);
  CHECK(y[2] == 0.0);
  CHECK(y[3] == 0.5);
  CHECK(y[4] == 3.0);
}

TEST_CASE("parallel switch changes dispatch, not results") {
  Rng rng(99);
  auto w = random_vec(32 * 48, rng);
  auto x = random_vec(48, rng);
  std::vector<double> y1(32);
  std::vector<double> y2(32);
  kernels::set_parallel(true);
  kernels::matvec(w.data(), x.data(), y1.data(), 32, 48);
  kernels::set_parallel(false);
  kernels::matvec(w.data(), x.data(), y2.data(), 32, 48);
  kernels::set_parallel(true);
  CHECK(std::memcmp(y1.data(), y2.data(), y1.size() * sizeof(double)) == 0);
}
