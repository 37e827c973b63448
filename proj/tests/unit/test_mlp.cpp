#include "aeroflight/errors.hpp"
#include "aeroflight/mlp.hpp"
#include "support.hpp"

#include <cmath>
#include <doctest.h>

using namespace aeroflight;
using namespace testing_support;

namespace {

MlpArch arch(int in, std::vector<int> hidden, int out, double dropout = 0.0) {
  MlpArch a;
  a.input_dim = in;
  a.output_dim = out;
  a.hidden = std::move(hidden);
  a.dropout = dropout;
  return a;
}

MatX random_matrix(Rng& rng, int r, int c) {
  MatX m(r, c);
  for (int i = 0; i < m.size(); ++i) m.data()[i] = uniform(rng, -1, 1);
  return m;
}

double& param(Mlp& net, int layer, bool bias, int idx) {
  return bias ? net.layers[layer].b(idx) : net.layers[layer].w.data()[idx];
}

}  // namespace

TEST_CASE("initialization") {
  const auto a = mlp_init(arch(2, {3}, 1), 5);
  REQUIRE(a.layers.size() == 2u);
  CHECK(a.layers[0].w.rows() == 3);
  CHECK(a.layers[0].w.cols() == 2);
  CHECK(a.layers[1].w.rows() == 1);
  CHECK(a.layers[1].w.cols() == 3);

  const auto n1 = mlp_init(MlpArch{}, 9);
  const auto n2 = mlp_init(MlpArch{}, 9);
  for (std::size_t l = 0; l < n1.layers.size(); ++l) {
    CHECK(n1.layers[l].w == n2.layers[l].w);
    CHECK(n1.layers[l].b.norm() == 0.0);
    const double bound = std::sqrt(6.0 / n1.layers[l].w.cols());
    CHECK(n1.layers[l].w.cwiseAbs().maxCoeff() <= bound);
  }
  CHECK_FALSE(mlp_init(MlpArch{}, 10).layers[0].w == n1.layers[0].w);
  CHECK(n1.layers.size() == 10u);

  const auto full = MlpArch::full_scale(22, 39);
  CHECK(full.hidden == std::vector<int>(9, 1048));
  CHECK_THROWS_AS(mlp_init(arch(2, {0}, 1), 1), ValidationError);
  CHECK_THROWS_AS(mlp_init(arch(2, {3}, 1, 1.0), 1), ValidationError);
}

TEST_CASE("forward pass hand arithmetic") {
  auto zero = mlp_init(arch(4, {8, 8}, 3), 1);
  for (auto& l : zero.layers) {
    l.w.setZero();
    l.b.setZero();
  }
  CHECK(forward_eval(zero, VecX(Eigen::Vector4d(1, -2, 3, 4))).norm() == 0.0);

  auto lin = mlp_init(arch(1, {}, 1), 1);
  lin.layers[0].w(0, 0) = 2.0;
  lin.layers[0].b(0) = 1.0;
  CHECK(forward_eval(lin, VecX(VecX::Constant(1, 3.0)))(0) == 7.0);

  auto relu = mlp_init(arch(1, {1}, 1), 1);
  relu.layers[0].w(0, 0) = 2.0;
  relu.layers[0].b(0) = 1.0;
  relu.layers[1].w(0, 0) = 1.0;
  relu.layers[1].b(0) = 0.0;
  CHECK(forward_eval(relu, VecX(VecX::Constant(1, 3.0)))(0) == 7.0);
  CHECK(forward_eval(relu, VecX(VecX::Constant(1, -3.0)))(0) == 0.0);

  CHECK_THROWS_AS(forward_eval(relu, VecX(VecX::Zero(2))), DimensionError);
}

TEST_CASE("eval mode is pure; train mode without dropout matches it") {
  Rng rng(2);
  auto net = mlp_init(arch(5, {16, 16}, 3, 0.0), 3);
  const MatX x = random_matrix(rng, 5, 7);
  const MatX a = forward_eval(net, x);
  CHECK(forward_eval(net, x) == a);
  CHECK(forward(net, x, Mode::eval) == a);
  CHECK((forward(net, x, Mode::train) - a).norm() == 0.0);
}

TEST_CASE("inverted dropout is unbiased") {
  Rng rng(3);
  auto net = mlp_init(arch(3, {6}, 2, 0.3), 4);
  const MatX x = random_matrix(rng, 3, 1);
  const VecX eval = forward_eval(net, x).col(0);
  const int n = 100000;
  VecX sum = VecX::Zero(2), sq = VecX::Zero(2);
  for (int i = 0; i < n; ++i) {
    const VecX y = forward(net, x, Mode::train).col(0);
    sum += y;
    sq += y.cwiseProduct(y);
  }
  const VecX mean = sum / n;
  const VecX sd = (sq / n - mean.cwiseProduct(mean)).cwiseMax(0.0).cwiseSqrt();
  for (int k = 0; k < 2; ++k) {
    CHECK(std::abs(mean(k) - eval(k)) <= 3.0 * sd(k) / std::sqrt(double(n)) + 1e-12);
  }
}

TEST_CASE("MSE loss") {
  MatX p = MatX::Zero(2, 1), t = MatX::Zero(2, 1);
  CHECK(loss_mse(p, t) == 0.0);
  p << 3, 4;
  CHECK(loss_mse(p, t) == 25.0);
  MatX a(2, 2), b = MatX::Zero(2, 2);
  a << 1, 1, 0, std::sqrt(2.0);
  CHECK(loss_mse(a, b) == doctest::Approx(2.0));
  CHECK_THROWS_AS(loss_mse(MatX::Zero(2, 2), MatX::Zero(3, 2)), DimensionError);
}

TEST_CASE("backward hand derivative") {
  auto net = mlp_init(arch(1, {}, 1), 1);
  net.layers[0].w(0, 0) = 1.0;
  net.layers[0].b(0) = 0.0;
  ForwardCache cache;
  forward(net, MatX::Constant(1, 1, 2.0), Mode::train, &cache);
  const auto g = backward(net, cache, MatX::Zero(1, 1));
  CHECK(g.w[0](0, 0) == doctest::Approx(8.0));

  ForwardCache c2;
  const MatX y = forward(net, MatX::Constant(1, 1, 2.0), Mode::train, &c2);
  const auto g0 = backward(net, c2, y);
  CHECK(g0.w[0].norm() == 0.0);
  CHECK(g0.b[0].norm() == 0.0);
  CHECK_THROWS_AS(backward(net, c2, MatX::Zero(2, 1)), DimensionError);
}

TEST_CASE("backward matches central differences") {
  Rng rng(4);
  auto net = mlp_init(arch(22, {64, 64}, 39, 0.0), 5);
  for (auto& l : net.layers) {
    for (int i = 0; i < l.b.size(); ++i) l.b(i) = uniform(rng, -0.1, 0.1);
  }
  const MatX x = random_matrix(rng, 22, 6);
  const MatX t = random_matrix(rng, 39, 6);
  ForwardCache cache;
  forward(net, x, Mode::train, &cache);
  const auto g = backward(net, cache, t);

  const double h = 1e-6;
  double worst = 0.0;
  for (int k = 0; k < 200; ++k) {
    const int layer = static_cast<int>(uniform_index(rng, net.layers.size()));
    const bool bias = uniform01(rng) < 0.3;
    const int size = static_cast<int>(bias ? net.layers[layer].b.size() : net.layers[layer].w.size());
    const int idx = static_cast<int>(uniform_index(rng, size));
    double& p = param(net, layer, bias, idx);
    const double saved = p;
    p = saved + h;
    const double lp = loss_mse(forward_eval(net, x), t);
    p = saved - h;
    const double lm = loss_mse(forward_eval(net, x), t);
    p = saved;
    const double fd = (lp - lm) / (2 * h);
    const double an = bias ? g.b[layer](idx) : g.w[layer].data()[idx];
    worst = std::max(worst, std::abs(fd - an) / std::max(1e-3, std::max(std::abs(fd), std::abs(an))));
  }
  CHECK(worst < 1e-5);
}

TEST_CASE("backward uses the recorded dropout masks") {
  Rng rng(5);
  auto net = mlp_init(arch(4, {10}, 2, 0.5), 6);
  const MatX x = random_matrix(rng, 4, 3);
  const MatX t = random_matrix(rng, 2, 3);
  ForwardCache cache;
  forward(net, x, Mode::train, &cache);
  const auto g = backward(net, cache, t);
  // Freeze the masks by folding them into a copy of the network.
  auto frozen = net;
  frozen.arch.dropout = 0.0;
  const double h = 1e-6;
  for (int idx = 0; idx < frozen.layers[0].w.size(); idx += 7) {
    auto loss = [&](double delta) {
      auto n2 = frozen;
      n2.layers[0].w.data()[idx] += delta;
      MatX z = n2.layers[0].w * x;
      z.colwise() += n2.layers[0].b;
      MatX a = z.cwiseMax(0.0).cwiseProduct(cache.mask[0]);
      MatX y = n2.layers[1].w * a;
      y.colwise() += n2.layers[1].b;
      return loss_mse(y, t);
    };
    const double fd = (loss(h) - loss(-h)) / (2 * h);
    CHECK(std::abs(fd - g.w[0].data()[idx]) < 1e-6 * std::max(1.0, std::abs(fd)));
  }
}

TEST_CASE("Adam updates") {
  TrainConfig cfg;
  double theta = 0.5, g = 0.0, m = 0.0, v = 0.0;
  adam_update(&theta, &g, &m, &v, 1, 1, 1e-3, cfg);
  CHECK(theta == 0.5);

  theta = 0.0;
  g = 1.0;
  m = v = 0.0;
  adam_update(&theta, &g, &m, &v, 1, 1, 1e-3, cfg);
  CHECK(theta == doctest::Approx(-1e-3 / (1.0 + 1e-8)).epsilon(1e-14));
  const double before = theta;
  adam_update(&theta, &g, &m, &v, 1, 2, 1e-3, cfg);
  CHECK(before - theta == doctest::Approx(1e-3).epsilon(1e-6));
  CHECK_THROWS_AS(adam_update(&theta, &g, &m, &v, 1, 0, 1e-3, cfg), ValidationError);
}

TEST_CASE("output normalization") {
  Rng rng(8);
  MatX x = random_matrix(rng, 50, 3), y = random_matrix(rng, 50, 2);
  y.col(0) *= 10.0;
  y.col(1).array() += 4.0;
  const auto per = Normalization::fit(x, y);
  CHECK(per.out_std(0) > 5.0 * per.out_std(1));
  const auto shared = Normalization::fit(x, y, true);
  CHECK((shared.out_mean - per.out_mean).norm() == 0.0);
  CHECK(shared.out_std(0) == shared.out_std(1));
  const double rms = std::sqrt((per.out_std.array().square().sum()) / 2.0);
  CHECK(shared.out_std(0) == doctest::Approx(rms).epsilon(1e-12));
  CHECK((shared.in_std - per.in_std).norm() == 0.0);
}

TEST_CASE("training") {
  Rng rng(6);
  const int n = 10;
  MatX x = random_matrix(rng, n, 3);
  const Eigen::Matrix<double, 3, 2> a = random_matrix(rng, 3, 2);
  MatX y = x * a;

  SUBCASE("lr = 0 leaves parameters unchanged") {
    auto net = mlp_init(arch(3, {8}, 2, 0.1), 1);
    const auto before = net.layers;
    TrainConfig cfg;
    cfg.epochs = 1;
    cfg.lr = 0.0;
    cfg.normalize = false;
    const auto h = train(net, x, y, x, y, cfg);
    CHECK(h.train_loss.size() == 1u);
    for (std::size_t l = 0; l < before.size(); ++l) {
      CHECK(net.layers[l].w == before[l].w);
      CHECK(net.layers[l].b == before[l].b);
    }
  }
  SUBCASE("converges on a linear target") {
    auto net = mlp_init(arch(3, {64, 64}, 2, 0.0), 2);
    TrainConfig cfg;
    cfg.epochs = 500;
    cfg.batch_size = 10;
    const auto h = train(net, x, y, x, y, cfg);
    CHECK(h.train_loss.back() < 0.01 * h.train_loss.front());
  }
  SUBCASE("deterministic for a fixed seed") {
    TrainConfig cfg;
    cfg.epochs = 30;
    cfg.batch_size = 4;
    auto n1 = mlp_init(arch(3, {16, 16}, 2, 0.1), 3);
    auto n2 = mlp_init(arch(3, {16, 16}, 2, 0.1), 3);
    const auto h1 = train(n1, x, y, x, y, cfg);
    const auto h2 = train(n2, x, y, x, y, cfg);
    CHECK(h1.train_loss == h2.train_loss);
    CHECK(h1.val_loss == h2.val_loss);
    CHECK(serialize_mlp(n1) == serialize_mlp(n2));
  }
  SUBCASE("errors") {
    auto net = mlp_init(arch(3, {4}, 2), 1);
    TrainConfig cfg;
    cfg.epochs = 0;
    CHECK_THROWS_AS(train(net, x, y, x, y, cfg), ValidationError);
    cfg.epochs = 1;
    CHECK_THROWS_AS(train(net, MatX(x.leftCols(2)), y, x, y, cfg), DimensionError);
    cfg.lr = 1e300;
    cfg.epochs = 20;
    y(0, 0) = 1e200;
    CHECK_THROWS_AS(train(net, x, y, x, y, cfg), NonFiniteError);
  }
}

TEST_CASE("link forces from the network") {
  const auto& m = humanoid();
  Rng rng(7);
  auto net = mlp_init(MlpArch{}, 8);
  const AeroFactors f;
  auto st = random_state(m, rng, 0.0);
  const Vec3 v_w(3, -1, 2);
  st.base_linear_velocity = v_w;
  for (const auto& fi : predict_link_forces_mlp(net, m, st, v_w, f)) CHECK(fi.norm() == 0.0);

  st.base_linear_velocity.setZero();
  const auto f1 = predict_link_forces_mlp(net, m, st, v_w, f);
  const auto f2 = predict_link_forces_mlp(net, m, st, 2.0 * v_w, f);
  REQUIRE(f1.size() == 13u);
  for (std::size_t i = 0; i < f1.size(); ++i) CHECK(rel_err_vec(f2[i], Vec3(4.0 * f1[i])) < 1e-12);

  // Conversion: x = (R^T d, s), F_i = k_a |v|^2 R y_i with v_a = -v_w.
  const Mat3 r = st.base_orientation.toRotationMatrix();
  const Vec3 va = -v_w;
  VecX x(22);
  x.head<3>() = r.transpose() * va.normalized();
  x.tail(19) = st.s;
  const VecX y = predict(net, MatX(x.transpose())).row(0).transpose();
  for (int i = 0; i < 13; ++i) {
    const Vec3 expected = f.k_a() * va.squaredNorm() * r * y.segment<3>(3 * i);
    CHECK(rel_err_vec(f1[i], expected) < 1e-12);
  }
}

TEST_CASE("serialization round trip") {
  Rng rng(8);
  auto net = mlp_init(arch(22, {32, 32}, 39, 0.1), 9);
  net.norm = Normalization::fit(random_matrix(rng, 30, 22), random_matrix(rng, 30, 39));
  const auto back = deserialize_mlp(serialize_mlp(net));
  CHECK(back.arch.hidden == net.arch.hidden);
  CHECK(back.arch.dropout == net.arch.dropout);
  const MatX x = random_matrix(rng, 5, 22);
  CHECK(predict(back, x) == predict(net, x));
  std::string bytes = serialize_mlp(net);
  CHECK_THROWS(deserialize_mlp(bytes.substr(0, bytes.size() / 2)));
  bytes[0] = 'X';
  CHECK_THROWS(deserialize_mlp(bytes));
}
