#include <cmath>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "hdnet/autodiff.hpp"
#include "hdnet/error.hpp"
#include "hdnet/grad_check.hpp"
#include "hdnet/params.hpp"
#include "hdnet/random.hpp"
#include "test_support.hpp"

using namespace hdnet;
using ad::Matrix;
using ad::Tape;
using ad::Value;
using test::random_matrix;

namespace {

// Scalar probe of an op: sum(op(inputs) * fixed weights), so every output
// element carries a distinct weight.
using Op = std::function<Value(Tape&, const std::vector<Value>&)>;

double check_op(const std::vector<Matrix>& inputs, const Op& op, std::uint64_t seed = 3) {
  ParamStore store;
  for (std::size_t i = 0; i < inputs.size(); ++i) store.add("in" + std::to_string(i), inputs[i]);
  Matrix weights;
  {
    Tape probe(false);
    std::vector<Value> vals;
    for (std::size_t i = 0; i < inputs.size(); ++i) vals.push_back(probe.param(store, i));
    const Value out = op(probe, vals);
    Rng rng(seed);
    weights = random_matrix(out.rows(), out.cols(), rng);
  }
  const Objective objective = [&](Tape& tape) {
    std::vector<Value> vals;
    for (std::size_t i = 0; i < inputs.size(); ++i) vals.push_back(tape.param(store, i));
    return ad::sum_all(ad::mul(op(tape, vals), tape.constant(weights)));
  };
  GradCheckOptions options;
  options.coordinates = 1000;
  const GradCheckReport report = grad_check(objective, store, options);
  CHECK(report.checked > 0);
  return report.max_relative_error;
}

}  // namespace

TEST_CASE("backward: product and sum rules") {
  Tape tape;
  const Value x = tape.variable(Matrix::scalar(3.0));
  const Value y = tape.variable(Matrix::scalar(4.0));
  tape.backward(ad::mul(x, y));
  CHECK(x.grad()[0] == 4.0);
  CHECK(y.grad()[0] == 3.0);

  Tape tape2;
  const Value v = tape2.variable(Matrix(2, 3, 0.7));
  tape2.backward(ad::sum_all(v));
  for (double g : v.grad().values()) CHECK(g == 1.0);
}

TEST_CASE("backward: leaf gradients accumulate across calls") {
  Tape tape;
  const Value x = tape.variable(Matrix::scalar(2.0));
  const Value y = ad::mul(x, x);
  tape.backward(y);
  tape.backward(y);
  CHECK(x.grad()[0] == doctest::Approx(8.0));
}

TEST_CASE("backward: root must be scalar") {
  Tape tape;
  const Value x = tape.variable(Matrix(2, 2, 1.0));
  CHECK_THROWS_AS(tape.backward(x), ShapeError);
}

TEST_CASE("primitives: identity cases") {
  CHECK(ad::gelu(0.0) == 0.0);
  Tape tape;
  const Value row = tape.constant(Matrix(1, 5, 2.5));
  const Matrix s = ad::softmax_rows(row).value();
  for (double p : s.values()) CHECK(p == doctest::Approx(0.2).epsilon(1e-15));

  Rng rng(5);
  const Value x = tape.constant(random_matrix(4, 7, rng, -3, 3));
  const Matrix ln = ad::layer_norm(x, tape.constant(Matrix(1, 7, 1.0)), tape.constant(Matrix(1, 7, 0.0))).value();
  for (std::size_t r = 0; r < 4; ++r) {
    double mean = 0.0, var = 0.0;
    for (double v : ln.row(r)) mean += v;
    mean /= 7.0;
    for (double v : ln.row(r)) var += (v - mean) * (v - mean);
    var /= 7.0;
    CHECK(std::abs(mean) < 1e-9);
    // Variance is 1 up to the eps inside the square root.
    double raw_var = 0.0, raw_mean = 0.0;
    for (double v : x.value().row(r)) raw_mean += v;
    raw_mean /= 7.0;
    for (double v : x.value().row(r)) raw_var += (v - raw_mean) * (v - raw_mean);
    raw_var /= 7.0;
    CHECK(std::abs(var - raw_var / (raw_var + 1e-5)) < 1e-9);
    CHECK(std::abs(var - 1.0) < 1e-4);
  }
}

TEST_CASE("primitives: gradient of sum(softmax) vanishes") {
  Tape tape;
  Rng rng(8);
  const Value x = tape.variable(random_matrix(3, 6, rng, -4, 4));
  tape.backward(ad::sum_all(ad::softmax_rows(x)));
  for (double g : x.grad().values()) CHECK(std::abs(g) < 1e-9);
}

TEST_CASE("primitives: log_softmax rows have logsumexp zero") {
  Tape tape;
  Rng rng(9);
  const Matrix lp = ad::log_softmax_rows(tape.constant(random_matrix(5, 4, rng, -20, 20))).value();
  for (std::size_t r = 0; r < 5; ++r) {
    double s = 0.0;
    for (double v : lp.row(r)) s += std::exp(v);
    CHECK(std::abs(std::log(s)) < 1e-9);
  }
}

TEST_CASE("primitives: matmul against naive triple loop") {
  Rng rng(1);
  // Large enough to cross the inner-dimension panel size.
  const Matrix a = random_matrix(13, 211, rng);
  const Matrix b = random_matrix(211, 9, rng);
  const Matrix c = ad::matmul(a, b);
  for (std::size_t i = 0; i < 13; ++i) {
    for (std::size_t j = 0; j < 9; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < 211; ++p) s += a(i, p) * b(p, j);
      CHECK(c(i, j) == s);
    }
  }
}

TEST_CASE("primitives: rows are computed independently of their batch") {
  Rng rng(2);
  const Matrix a = random_matrix(6, 40, rng);
  const Matrix b = random_matrix(40, 5, rng);
  const Matrix full = ad::matmul(a, b);
  for (std::size_t r = 0; r < 6; ++r) {
    Matrix one(1, 40);
    for (std::size_t c = 0; c < 40; ++c) one(0, c) = a(r, c);
    const Matrix single = ad::matmul(one, b);
    for (std::size_t c = 0; c < 5; ++c) CHECK(single(0, c) == full(r, c));
  }
}

TEST_CASE("primitives: segment max routes gradient to lowest tied index") {
  Tape tape;
  const Value x = tape.variable(Matrix::from_rows({{1.0, 5.0}, {3.0, 5.0}, {3.0, 2.0}}));
  tape.backward(ad::sum_all(ad::segment_max(x, 3)));
  const Matrix& g = x.grad();
  CHECK(g(0, 0) == 0.0);
  CHECK(g(1, 0) == 1.0);
  CHECK(g(2, 0) == 0.0);
  CHECK(g(0, 1) == 1.0);
  CHECK(g(1, 1) == 0.0);
}

TEST_CASE("primitives: shape mismatch names the operation") {
  Tape tape;
  const Value a = tape.constant(Matrix(2, 3));
  const Value b = tape.constant(Matrix(2, 3));
  try {
    ad::matmul(a, b);
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    const std::string what = e.what();
    CHECK(what.find("matmul") != std::string::npos);
    CHECK(what.find("2x3") != std::string::npos);
  }
  CHECK_THROWS_AS(ad::add(a, tape.constant(Matrix(3, 2))), ShapeError);
  CHECK_THROWS_AS(ad::add_row(a, tape.constant(Matrix(1, 2))), ShapeError);
  CHECK_THROWS_AS(ad::row_scale(a, tape.constant(Matrix(3, 1))), ShapeError);
}

TEST_CASE("primitives pass isolated gradient checks") {
  Rng rng(11);
  const Matrix a = random_matrix(3, 4, rng);
  const Matrix b = random_matrix(3, 4, rng);
  const Matrix w = random_matrix(4, 5, rng);
  const Matrix bias = random_matrix(1, 5, rng);
  const Matrix pos = random_matrix(3, 4, rng, 0.5, 2.0);
  const double tol = 1e-6;

  CHECK(check_op({a, w}, [](Tape&, const auto& v) { return ad::matmul(v[0], v[1]); }) < tol);
  CHECK(check_op({a, b}, [](Tape&, const auto& v) { return ad::matmul_nt(v[0], v[1]); }) < tol);
  CHECK(check_op({a}, [](Tape&, const auto& v) { return ad::transpose(v[0]); }) < tol);
  CHECK(check_op({a, b}, [](Tape&, const auto& v) { return ad::add(v[0], v[1]); }) < tol);
  CHECK(check_op({a, b}, [](Tape&, const auto& v) { return ad::sub(v[0], v[1]); }) < tol);
  CHECK(check_op({a, b}, [](Tape&, const auto& v) { return ad::mul(v[0], v[1]); }) < tol);
  CHECK(check_op({a}, [](Tape&, const auto& v) { return ad::scale(v[0], -2.5); }) < tol);
  CHECK(check_op({a}, [](Tape&, const auto& v) { return ad::add_scalar(v[0], 0.3); }) < tol);
  CHECK(check_op({a, random_matrix(1, 4, rng)},
                 [](Tape&, const auto& v) { return ad::add_row(v[0], v[1]); }) < tol);
  CHECK(check_op({a, w, bias}, [](Tape&, const auto& v) { return ad::affine(v[0], v[1], v[2]); }) < tol);
  CHECK(check_op({random_matrix(3, 4, rng, -3, 3)}, [](Tape&, const auto& v) { return ad::gelu(v[0]); }) < tol);
  CHECK(check_op({a}, [](Tape&, const auto& v) { return ad::exp(v[0]); }) < tol);
  CHECK(check_op({pos}, [](Tape&, const auto& v) { return ad::log(v[0]); }) < tol);
  CHECK(check_op({a, random_matrix(1, 4, rng), random_matrix(1, 4, rng)},
                 [](Tape&, const auto& v) { return ad::layer_norm(v[0], v[1], v[2]); }) < tol);
  CHECK(check_op({a}, [](Tape&, const auto& v) { return ad::softmax_rows(v[0]); }) < tol);
  CHECK(check_op({a}, [](Tape&, const auto& v) { return ad::log_softmax_rows(v[0]); }) < tol);
  CHECK(check_op({a}, [](Tape&, const auto& v) { return ad::mean(v[0], ad::Axis::rows); }) < tol);
  CHECK(check_op({a}, [](Tape&, const auto& v) { return ad::mean(v[0], ad::Axis::cols); }) < tol);
  CHECK(check_op({a}, [](Tape&, const auto& v) { return ad::mean_all(v[0]); }) < tol);
  CHECK(check_op({random_matrix(6, 4, rng)}, [](Tape&, const auto& v) { return ad::segment_max(v[0], 3); }) < tol);
  CHECK(check_op({a}, [](Tape&, const auto& v) { return ad::max_rows(v[0]); }) < tol);
  CHECK(check_op({a, b}, [](Tape&, const auto& v) { return ad::concat_cols({v[0], v[1]}); }) < tol);
  CHECK(check_op({a}, [](Tape&, const auto& v) { return ad::slice_cols(v[0], 1, 2); }) < tol);
  CHECK(check_op({a}, [](Tape&, const auto& v) {
          const std::vector<std::size_t> rows{2, 0, 2, 1};
          return ad::gather_rows(v[0], rows);
        }) < tol);
  CHECK(check_op({a, random_matrix(3, 1, rng)},
                 [](Tape&, const auto& v) { return ad::row_scale(v[0], v[1]); }) < tol);
  CHECK(check_op({a}, [](Tape&, const auto& v) { return ad::select(v[0], 2, 1); }) < tol);
}

TEST_CASE("adaptive edge response equals explicit per-edge kernels") {
  Rng rng(21);
  const std::size_t points = 5, m = 3, n = 2, q = 3;
  const std::vector<std::size_t> source{0, 0, 1, 2, 3, 4, 4};
  const std::vector<std::size_t> target{1, 2, 0, 4, 1, 3, 0};
  const std::size_t edges = source.size();
  const Matrix h = random_matrix(edges, m, rng);
  const Matrix p = random_matrix(points, m * n, rng);
  const Matrix d = random_matrix(edges, q, rng);
  const Matrix w = random_matrix(q, m * n, rng);

  Tape tape;
  const Matrix out = ad::adaptive_edge_response(tape.constant(h), tape.constant(p), tape.constant(d),
                                                tape.constant(w), source, target)
                         .value();
  for (std::size_t e = 0; e < edges; ++e) {
    for (std::size_t o = 0; o < n; ++o) {
      double expect = 0.0;
      for (std::size_t k = 0; k < m; ++k) {
        double u = p(target[e], k * n + o) - p(source[e], k * n + o);
        for (std::size_t c = 0; c < q; ++c) u += d(e, c) * w(c, k * n + o);
        expect += h(e, k) * u;
      }
      CHECK(out(e, o) == doctest::Approx(expect).epsilon(1e-13));
    }
  }

  const double err = check_op({h, p, d, w}, [&](Tape&, const auto& v) {
    return ad::adaptive_edge_response(v[0], v[1], v[2], v[3], source, target);
  });
  CHECK(err < 1e-6);
}

TEST_CASE("straight-through passes the gradient to the soft input") {
  Tape tape;
  const Value soft = tape.variable(Matrix::from_rows({{0.3}, {0.8}}));
  const Value st = ad::straight_through(soft, Matrix::from_rows({{0.0}, {1.0}}));
  CHECK(st.value()(0, 0) == 0.0);
  CHECK(st.value()(1, 0) == 1.0);
  tape.backward(ad::sum_all(ad::scale(st, 2.0)));
  CHECK(soft.grad()(0, 0) == 2.0);
  CHECK(soft.grad()(1, 0) == 2.0);
}

TEST_CASE("backward is linear in the root") {
  Rng rng(31);
  const Matrix xv = random_matrix(3, 3, rng);
  auto grad_of = [&](double a, double b) {
    Tape tape;
    const Value x = tape.variable(xv);
    const Value f = ad::sum_all(ad::gelu(ad::matmul(x, x)));
    const Value g = ad::sum_all(ad::softmax_rows(x));
    tape.backward(ad::add(ad::scale(f, a), ad::scale(g, b)));
    return x.grad();
  };
  const Matrix gf = grad_of(1.0, 0.0);
  const Matrix gg = grad_of(0.0, 1.0);
  const Matrix both = grad_of(2.0, -3.0);
  for (std::size_t i = 0; i < xv.size(); ++i) CHECK(std::abs(both[i] - (2.0 * gf[i] - 3.0 * gg[i])) < 1e-9);
}

TEST_CASE("grad_check: linear function is exact and dead parameters read zero") {
  ParamStore store;
  Rng rng(4);
  store.add("w", random_matrix(3, 2, rng));
  store.add("dead", random_matrix(2, 2, rng));
  const Matrix x = random_matrix(1, 3, rng);
  const Objective f = [&](Tape& tape) {
    return ad::sum_all(ad::matmul(tape.constant(x), tape.param(store, 0)));
  };
  const GradCheckReport r = grad_check(f, store);
  CHECK(r.checked == 10);
  CHECK(r.max_relative_error < 1e-9);
  for (double g : store["dead"].grad.values()) CHECK(g == 0.0);
}

TEST_CASE("grad_check: detects a wrong gradient") {
  ParamStore store;
  store.add("w", Matrix(1, 1, 0.7));
  // exp with its derivative deliberately broken through a straight-through
  // identity: forward exp(w), backward 1.
  const Objective f = [&](Tape& tape) {
    const Value w = tape.param(store, 0);
    Matrix hard(1, 1, std::exp(w.value()[0]));
    return ad::straight_through(w, hard);
  };
  GradCheckOptions options;
  options.skip_kinks = false;
  CHECK(grad_check(f, store, options).max_relative_error > 0.1);
}

TEST_CASE("params: text round trip is bitwise exact") {
  ParamStore store;
  Rng rng(6);
  store.add("layer.weight", random_matrix(4, 3, rng, -1e3, 1e3));
  store.add("layer.bias", Matrix::from_rows({{0.1, -0.0, 5e-324, 1.7976931348623157e308}}));
  store.add("frozen", Matrix(1, 1, 3.0), false);
  std::stringstream buf;
  store.save(buf);
  const ParamStore back = ParamStore::load(buf);
  CHECK(back == store);
  CHECK_FALSE(back["frozen"].trainable);
  CHECK(back.coordinate_count() == 16);
}

TEST_CASE("params: malformed input is rejected") {
  std::stringstream bad("not a params file\n");
  CHECK_THROWS_AS(ParamStore::load(bad), DataError);
  std::stringstream truncated("hdnet-params v1\ncount 1\nparam w 2 2 1\n1 2 3\n");
  CHECK_THROWS_AS(ParamStore::load(truncated), DataError);
  ParamStore store;
  store.add("w", Matrix(1, 1));
  CHECK_THROWS_AS(store.add("w", Matrix(1, 1)), DataError);
}
