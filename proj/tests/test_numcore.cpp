#include <cmath>
#include <sstream>

#include "anomkit/network.hpp"
#include "anomkit/ops.hpp"
#include "anomkit/pca.hpp"
#include "anomkit/tensor_io.hpp"
#include "doctest.h"
#include "gradcheck.hpp"

using namespace anomkit;

namespace {

template <typename T = float>
BasicTensor<T> random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  BasicTensor<T> t(std::move(shape));
  for (auto& v : t.values()) v = static_cast<T>(rng.uniform(lo, hi));
  return t;
}

// Direct triple loop, independent of the library's loop order and accumulator.
Tensor naive_conv(const Tensor& in, const Tensor& K, const Tensor& bias) {
  const std::size_t k = K.dim(0), C = K.dim(2), O = K.dim(3);
  const std::size_t OH = in.dim(0) - k + 1, OW = in.dim(1) - k + 1;
  Tensor out({OH, OW, O});
  for (std::size_t i = 0; i < OH; ++i)
    for (std::size_t j = 0; j < OW; ++j)
      for (std::size_t o = 0; o < O; ++o) {
        double s = bias[o];
        for (std::size_t a = 0; a < k; ++a)
          for (std::size_t b = 0; b < k; ++b)
            for (std::size_t c = 0; c < C; ++c)
              s += double(in.at(i + a, j + b, c)) * K[((a * k + b) * C + c) * O + o];
        out.at(i, j, o) = static_cast<float>(s);
      }
  return out;
}

}  // namespace

TEST_SUITE("conv2d_valid") {
  TEST_CASE("1x1 identity kernel reproduces the input") {
    Rng rng(1);
    Tensor x = random_tensor({4, 5, 1}, rng);
    Tensor k({1, 1, 1, 1}, 1.0f);
    Tensor b({1}, 0.0f);
    CHECK(conv2d_valid(x, k, b) == x);
  }

  TEST_CASE("3x3 ones on 3x3 ones sums to 9") {
    Tensor x({3, 3, 1}, 1.0f);
    Tensor k({3, 3, 1, 1}, 1.0f);
    Tensor b({1}, 0.0f);
    Tensor y = conv2d_valid(x, k, b);
    REQUIRE(y.shape() == Shape{1, 1, 1});
    CHECK(y[0] == doctest::Approx(9.0));
  }

  TEST_CASE("matches the naive oracle on random data") {
    Rng rng(7);
    Tensor x = random_tensor({5, 5, 2}, rng);
    Tensor k = random_tensor({3, 3, 2, 4}, rng);
    Tensor b = random_tensor({4}, rng);
    Tensor y = conv2d_valid(x, k, b);
    Tensor ref = naive_conv(x, k, b);
    REQUIRE(y.shape() == ref.shape());
    for (std::size_t n = 0; n < y.size(); ++n) CHECK(std::abs(y[n] - ref[n]) <= 1e-6);
  }

  TEST_CASE("shape mismatch raises DimensionError") {
    Tensor x({5, 5, 2});
    Tensor k({3, 3, 3, 1});
    Tensor b({1});
    CHECK_THROWS_AS(conv2d_valid(x, k, b), DimensionError);
    CHECK_THROWS_AS(conv2d_valid(Tensor({2, 2, 3}), k, b), DimensionError);
  }
}

TEST_SUITE("maxpool/unpool") {
  TEST_CASE("constant input pools to window origins") {
    Tensor x({4, 4, 1}, 0.5f);
    auto r = maxpool(x, 2);
    CHECK(r.output == Tensor({2, 2, 1}, 0.5f));
    CHECK(r.switches == Switches{0, 2, 8, 10});
  }

  TEST_CASE("single window") {
    Tensor x({2, 2, 1}, std::vector<float>{1, 2, 3, 4});
    auto r = maxpool(x, 2);
    CHECK(r.output[0] == 4.0f);
    CHECK(r.switches[0] == 3u);
  }

  TEST_CASE("matches a window-scan oracle on 9x9, p=3") {
    Rng rng(3);
    Tensor x = random_tensor({9, 9, 2}, rng);
    auto r = maxpool(x, 3);
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < 3; ++j)
        for (std::size_t c = 0; c < 2; ++c) {
          float m = -1e9f;
          for (std::size_t a = 0; a < 3; ++a)
            for (std::size_t b = 0; b < 3; ++b) m = std::max(m, x.at(3 * i + a, 3 * j + b, c));
          CHECK(r.output.at(i, j, c) == m);
          CHECK(x[r.switches[(i * 3 + j) * 2 + c]] == m);
        }
  }

  TEST_CASE("trailing rows and columns are dropped") {
    Tensor x({7, 8, 1}, 1.0f);
    CHECK(maxpool(x, 3).output.shape() == Shape{2, 2, 1});
  }

  TEST_CASE("pool size below 1 is a parameter error") {
    CHECK_THROWS_AS(maxpool(Tensor({2, 2, 1}), 0), ParameterError);
  }

  TEST_CASE("unpool places maxima at switch positions only") {
    Rng rng(5);
    Tensor x = random_tensor({6, 6, 3}, rng);
    auto r = maxpool(x, 2);
    Tensor u = unpool(r.output, r.switches, x.shape());
    std::size_t nonzero = 0;
    for (std::size_t n = 0; n < u.size(); ++n) {
      if (u[n] != 0.0f) {
        ++nonzero;
        CHECK(u[n] == x[n]);
      }
    }
    CHECK(nonzero == r.output.size());
    CHECK(unpool(Tensor(r.output.shape()), r.switches, x.shape()) == Tensor(x.shape()));
  }

  TEST_CASE("maxpool of unpool of maxpool is maxpool") {
    Rng rng(11);
    for (int trial = 0; trial < 10; ++trial) {
      Tensor x = random_tensor({9, 9, 2}, rng, 0.1, 1.0);
      auto r = maxpool(x, 3);
      auto again = maxpool(unpool(r.output, r.switches, x.shape()), 3);
      CHECK(again.output == r.output);
    }
  }

  TEST_CASE("geometry mismatch raises DimensionError") {
    Tensor x({4, 4, 1}, 1.0f);
    auto r = maxpool(x, 2);
    CHECK_THROWS_AS(unpool(Tensor({3, 1, 1}), r.switches, x.shape()), DimensionError);
    CHECK_THROWS_AS(unpool(r.output, r.switches, Shape{1, 1, 1}), DimensionError);
  }
}

TEST_SUITE("deconv2d") {
  TEST_CASE("adjoint of conv2d_valid") {
    Rng rng(13);
    for (int trial = 0; trial < 20; ++trial) {
      const std::size_t k = 1 + rng.below(4), C = 1 + rng.below(3), O = 1 + rng.below(3);
      const std::size_t H = k + rng.below(5), W = k + rng.below(5);
      auto x = random_tensor<double>({H, W, C}, rng);
      auto K = random_tensor<double>({k, k, C, O}, rng);
      auto y = random_tensor<double>({H - k + 1, W - k + 1, O}, rng);
      BasicTensor<double> zero({O});
      const double lhs = dot(conv2d_valid(x, K, zero), y);
      const double rhs = dot(x, deconv2d(y, K));
      CHECK(std::abs(lhs - rhs) <= 1e-5 * std::max(1.0, std::abs(lhs)));
    }
  }

  TEST_CASE("float adjoint within 1e-5 relative") {
    Rng rng(17);
    Tensor x = random_tensor({12, 12, 4}, rng);
    Tensor K = random_tensor({5, 5, 4, 6}, rng);
    Tensor y = random_tensor({8, 8, 6}, rng);
    const double lhs = dot(conv2d_valid(x, K, Tensor({6})), y);
    const double rhs = dot(x, deconv2d(y, K));
    CHECK(std::abs(lhs - rhs) <= 1e-5 * std::abs(lhs));
  }

  TEST_CASE("identity and zero kernels") {
    Rng rng(19);
    Tensor y = random_tensor({3, 4, 1}, rng);
    CHECK(deconv2d(y, Tensor({1, 1, 1, 1}, 1.0f)) == y);
    CHECK(deconv2d(y, Tensor({3, 3, 2, 1})) == Tensor({5, 6, 2}));
  }

  TEST_CASE("channel mismatch raises DimensionError") {
    CHECK_THROWS_AS(deconv2d(Tensor({3, 3, 2}), Tensor({3, 3, 1, 3})), DimensionError);
  }
}

TEST_SUITE("elementwise") {
  TEST_CASE("elu closed forms") {
    CHECK(elu_value(1.0) == 1.0);
    CHECK(elu_value(0.0) == 0.0);
    CHECK(elu_value(-1.0) == doctest::Approx(std::exp(-1.0) - 1.0).epsilon(1e-12));
    CHECK(elu_value(-1.0) == doctest::Approx(-0.63212).epsilon(1e-5));
    CHECK(elu_derivative(2.0) == 1.0);
    CHECK(elu_derivative(-1.0, 2.0) == doctest::Approx(2.0 * std::exp(-1.0)));
  }

  TEST_CASE("elu is continuous at 0 and monotone") {
    CHECK(std::abs(elu_value(-1e-9) - elu_value(1e-9)) < 1e-8);
    double prev = elu_value(-10.0);
    for (double v = -10.0; v <= 10.0; v += 0.01) {
      const double cur = elu_value(v);
      CHECK(cur >= prev);
      prev = cur;
    }
  }

  TEST_CASE("dropout identities") {
    Rng rng(23);
    Tensor x = random_tensor({10, 10, 1}, rng);
    CHECK(dropout(x, 0.0, rng, true).output == x);
    CHECK(dropout(x, 0.7, rng, false).output == x);
    CHECK_THROWS_AS(dropout(x, 1.0, rng, true), ParameterError);
    CHECK_THROWS_AS(dropout(x, -0.1, rng, true), ParameterError);
  }

  TEST_CASE("dropout keeps the mean (inverted scaling)") {
    Rng rng(29);
    Tensor ones({100000}, 1.0f);
    auto r = dropout(ones, 0.5, rng, true);
    double mean = 0.0;
    for (float v : r.output.values()) mean += v;
    mean /= 100000.0;
    CHECK(mean == doctest::Approx(1.0).epsilon(0.02));
  }

  TEST_CASE("dropout masks are reproducible") {
    Tensor x({1000}, 1.0f);
    Rng a(99), b(99);
    CHECK(dropout(x, 0.3, a, true).mask == dropout(x, 0.3, b, true).mask);
  }

  TEST_CASE("mse values and gradient") {
    Tensor x({2}, 0.0f), y({2}, 1.0f);
    CHECK(mse(x, x) == 0.0);
    CHECK(mse(x, y) == 1.0);
    Rng rng(31);
    Tensor a = random_tensor({17}, rng), b = random_tensor({17}, rng);
    double ref = 0.0;
    for (std::size_t i = 0; i < 17; ++i) ref += (double(a[i]) - b[i]) * (double(a[i]) - b[i]);
    CHECK(std::abs(mse(a, b) - ref / 17.0) <= 1e-7);
    Tensor g = mse_grad(a, b);
    for (std::size_t i = 0; i < 17; ++i) {
      CHECK(g[i] == doctest::Approx(2.0 * (double(b[i]) - a[i]) / 17.0));
    }
    CHECK_THROWS_AS(mse(Tensor({2}), Tensor({3})), DimensionError);
  }
}

TEST_SUITE("sgd") {
  TEST_CASE("plain step") {
    ParamSet<float> p{Tensor({1}, 1.0f)}, g{Tensor({1}, 2.0f)}, v;
    sgd_step(p, g, v, 0.1, 0.0);
    CHECK(p[0][0] == doctest::Approx(0.8));
  }

  TEST_CASE("zero gradient leaves params unchanged") {
    ParamSet<float> p{Tensor({3}, 0.25f)}, g{Tensor({3})}, v;
    sgd_step(p, g, v, 0.1, 0.9);
    CHECK(p[0] == Tensor({3}, 0.25f));
  }

  TEST_CASE("momentum recurrence") {
    ParamSet<double> p{BasicTensor<double>({1}, 1.0)}, g{BasicTensor<double>({1}, 2.0)}, v;
    sgd_step(p, g, v, 0.1, 0.9);
    sgd_step(p, g, v, 0.1, 0.9);
    // v1 = -0.2, p1 = 0.8; v2 = 0.9 * -0.2 - 0.2 = -0.38, p2 = 0.42
    CHECK(p[0][0] == doctest::Approx(0.42).epsilon(1e-12));
    CHECK(v[0][0] == doctest::Approx(-0.38).epsilon(1e-12));
  }

  TEST_CASE("non-finite gradient is a training error") {
    ParamSet<float> p{Tensor({2})}, g{Tensor({2}, std::vector<float>{0.0f, NAN})}, v;
    CHECK_THROWS_AS(sgd_step(p, g, v, 0.1, 0.9), TrainingError);
  }

  TEST_CASE("range checks") {
    ParamSet<float> p{Tensor({1})}, g{Tensor({1})}, v;
    CHECK_THROWS_AS(sgd_step(p, g, v, 0.0, 0.9), ParameterError);
    CHECK_THROWS_AS(sgd_step(p, g, v, 0.1, 1.0), ParameterError);
  }
}

TEST_SUITE("backward") {
  TEST_CASE("dense layer matches finite differences") {
    auto r = gradcheck::check({6}, {LayerSpec::Dense(4)}, 41);
    CHECK(r.worst <= 1e-4);
  }

  TEST_CASE("conv + pool + elu stack matches finite differences") {
    auto r = gradcheck::check(
        {8, 8, 2}, {LayerSpec::Conv(3, 3), LayerSpec::Elu(), LayerSpec::MaxPool(2)}, 43);
    CHECK(r.worst <= 1e-4);
  }

  TEST_CASE("dropout layer with a fixed mask matches finite differences") {
    auto r = gradcheck::check({5, 5, 1},
                              {LayerSpec::Conv(2, 2), LayerSpec::Dropout(0.4),
                               LayerSpec::Dense(3)},
                              47, true);
    CHECK(r.worst <= 1e-4);
  }

  TEST_CASE("full encoder-decoder matches finite differences") {
    auto r = gradcheck::check({8, 8, 1}, gradcheck::tiny_autoencoder(), 53);
    CHECK(r.worst <= 1e-4);
  }

  TEST_CASE("stale tape is rejected") {
    Rng rng(1);
    Network<float> net({4}, {LayerSpec::Dense(2)}, rng);
    Tape<float> tape;
    net.forward(Tensor({4}, 1.0f), tape, false, nullptr);
    auto grads = zeros_like(net.params());
    net.backward(tape, Tensor({2}, 1.0f), grads);
    CHECK_THROWS_AS(net.backward(tape, Tensor({2}, 1.0f), grads), UsageError);
    net.forward(Tensor({4}, 1.0f), tape, false, nullptr);
    net.mark_updated();
    CHECK_THROWS_AS(net.backward(tape, Tensor({2}, 1.0f), grads), UsageError);
    Tape<float> empty;
    CHECK_THROWS_AS(net.backward(empty, Tensor({2}, 1.0f), grads), UsageError);
  }

  TEST_CASE("weight init is deterministic and within the Glorot bound") {
    Rng a(5), b(5);
    Network<float> n1({6, 6, 1}, {LayerSpec::Conv(4, 3), LayerSpec::Dense(7)}, a);
    Network<float> n2({6, 6, 1}, {LayerSpec::Conv(4, 3), LayerSpec::Dense(7)}, b);
    CHECK(n1.params() == n2.params());
    const double bound = std::sqrt(6.0 / (9.0 * 1 + 9.0 * 4));
    for (float v : n1.params()[0].values()) CHECK(std::abs(v) <= bound);
  }
}

TEST_SUITE("pca") {
  TEST_CASE("collinear data along y = x") {
    Matrix data(5, 2);
    for (int i = 0; i < 5; ++i) data.row(i) << i, i;
    auto m = pca_fit(data, PcaMode::variance_frac, 0.95);
    REQUIRE(m.dim() == 1);
    CHECK(m.components(0, 0) == doctest::Approx(1.0 / std::sqrt(2.0)));
    CHECK(m.components(0, 1) == doctest::Approx(1.0 / std::sqrt(2.0)));
    CHECK(m.retained_fraction == doctest::Approx(1.0));
  }

  TEST_CASE("full projection of isotropic data preserves distances") {
    Rng rng(61);
    Matrix data(200, 4);
    for (Eigen::Index i = 0; i < data.rows(); ++i)
      for (Eigen::Index j = 0; j < 4; ++j) data(i, j) = rng.normal();
    auto m = pca_fit(data, PcaMode::fixed_k, 4);
    Matrix p = pca_project_rows(m, data);
    for (int t = 0; t < 50; ++t) {
      const auto i = static_cast<Eigen::Index>(rng.below(200));
      const auto j = static_cast<Eigen::Index>(rng.below(200));
      CHECK(std::abs((data.row(i) - data.row(j)).norm() - (p.row(i) - p.row(j)).norm()) <= 1e-5);
    }
    const Eigen::MatrixXd gram = m.components * m.components.transpose();
    CHECK((gram - Eigen::MatrixXd::Identity(4, 4)).cwiseAbs().maxCoeff() <= 1e-5);
  }

  TEST_CASE("variance_frac = 1 keeps every nonzero-eigenvalue component") {
    Rng rng(67);
    Matrix data(50, 5);
    for (Eigen::Index i = 0; i < 50; ++i) {
      const double a = rng.normal(), b = rng.normal(), c = rng.normal();
      data.row(i) << a, b, c, a + b, 0.0;  // rank 3
    }
    auto m = pca_fit(data, PcaMode::variance_frac, 1.0);
    CHECK(m.dim() == 3);
  }

  TEST_CASE("zero-variance data keeps one component") {
    Matrix data = Matrix::Constant(10, 3, 2.0);
    CHECK(pca_fit(data, PcaMode::variance_frac, 0.95).dim() == 1);
  }

  TEST_CASE("sign convention: first nonzero coordinate positive") {
    Rng rng(71);
    Matrix data(40, 3);
    for (Eigen::Index i = 0; i < 40; ++i)
      data.row(i) << rng.normal() * 3, rng.normal(), rng.normal() * 0.2;
    auto m = pca_fit(data, PcaMode::fixed_k, 3);
    for (Eigen::Index k = 0; k < 3; ++k) {
      for (Eigen::Index j = 0; j < 3; ++j) {
        if (std::abs(m.components(k, j)) > 1e-12) {
          CHECK(m.components(k, j) > 0);
          break;
        }
      }
    }
  }

  TEST_CASE("preconditions") {
    CHECK_THROWS_AS(pca_fit(Matrix::Zero(1, 3), PcaMode::fixed_k, 1), ParameterError);
    CHECK_THROWS_AS(pca_fit(Matrix::Zero(5, 3), PcaMode::fixed_k, 4), ParameterError);
    CHECK_THROWS_AS(pca_fit(Matrix::Zero(5, 3), PcaMode::variance_frac, 0.0), ParameterError);
  }
}

TEST_SUITE("tensor io") {
  TEST_CASE("NCT1 header layout") {
    Tensor t({2, 1}, std::vector<float>{1.0f, -2.0f});
    std::stringstream ss;
    write_tensor(ss, t);
    const std::string bytes = ss.str();
    REQUIRE(bytes.size() == 4 + 1 + 2 * 4 + 2 * 4);
    CHECK(bytes.substr(0, 4) == "NCT1");
    CHECK(bytes[4] == 2);
    CHECK(bytes[5] == 2);
    CHECK(bytes[9] == 1);
    // 1.0f little-endian = 00 00 80 3f
    CHECK(static_cast<unsigned char>(bytes[16]) == 0x3f);
    CHECK(read_tensor(ss) == t);
  }

  TEST_CASE("bad magic is rejected") {
    std::stringstream ss("XXXX");
    CHECK_THROWS_AS(read_tensor(ss), FormatError);
  }
}
