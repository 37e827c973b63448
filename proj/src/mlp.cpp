#include "aeroflight/mlp.hpp"

#include "aeroflight/dataset.hpp"
#include "aeroflight/errors.hpp"
#include "aeroflight/text.hpp"

#include <cmath>
#include <cstring>
#include <numeric>

namespace aeroflight {

namespace {

constexpr double kPi = 3.14159265358979323846;

std::uint64_t dropout_seed(std::uint64_t seed) {
  const char tag[] = "dropout";
  return fnv1a(tag, sizeof(tag) - 1, fnv1a(&seed, sizeof(seed)));
}

void check_finite_matrix(const MatX& m, const char* what) {
  if (!m.allFinite()) throw ValidationError(std::string(what) + " contains non-finite values");
}

// Little-endian writer/reader independent of host byte order.
class ByteWriter {
 public:
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void f64(double d) {
    std::uint64_t v;
    std::memcpy(&v, &d, sizeof(v));
    for (int i = 0; i < 8; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void raw(const char* p, std::size_t n) { out_.append(p, n); }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class ByteReader {
 public:
  explicit ByteReader(const std::string& s) : s_(s) {}
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t(static_cast<unsigned char>(s_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }
  double f64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t(static_cast<unsigned char>(s_[pos_ + i])) << (8 * i);
    pos_ += 8;
    double d;
    std::memcpy(&d, &v, sizeof(d));
    return d;
  }
  std::string raw(std::size_t n) {
    need(n);
    auto out = s_.substr(pos_, n);
    pos_ += n;
    return out;
  }
  bool done() const { return pos_ == s_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > s_.size()) throw ParseError("truncated network file");
  }
  const std::string& s_;
  std::size_t pos_ = 0;
};

}  // namespace

MlpArch MlpArch::full_scale(int input_dim, int output_dim) {
  MlpArch a;
  a.input_dim = input_dim;
  a.output_dim = output_dim;
  a.hidden.assign(9, 1048);
  return a;
}

void MlpArch::validate() const {
  if (input_dim <= 0 || output_dim <= 0) throw ValidationError("network dimensions must be > 0");
  for (int h : hidden) {
    if (h <= 0) throw ValidationError("hidden layer widths must be > 0");
  }
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ValidationError("dropout must be in [0, 1)");
}

Normalization Normalization::identity(int in, int out) {
  return {VecX::Zero(in), VecX::Ones(in), VecX::Zero(out), VecX::Ones(out)};
}

Normalization Normalization::fit(const MatX& x, const MatX& y, bool shared_output_scale) {
  Normalization n;
  auto stats = [](const MatX& m, VecX& mean, VecX& sd) {
    mean = m.colwise().mean().transpose();
    sd.resize(m.cols());
    for (int j = 0; j < m.cols(); ++j) {
      const double var = (m.col(j).array() - mean(j)).square().mean();
      sd(j) = var > 1e-24 ? std::sqrt(var) : 1.0;
    }
  };
  stats(x, n.in_mean, n.in_std);
  stats(y, n.out_mean, n.out_std);
  if (shared_output_scale) {
    const double rms = std::sqrt((y.rowwise() - n.out_mean.transpose()).squaredNorm() /
                                 std::max<double>(1.0, static_cast<double>(y.size())));
    n.out_std.setConstant(rms > 1e-12 ? rms : 1.0);
  }
  return n;
}

Mlp mlp_init(const MlpArch& arch, std::uint64_t seed) {
  arch.validate();
  Mlp mlp;
  mlp.arch = arch;
  mlp.norm = Normalization::identity(arch.input_dim, arch.output_dim);
  mlp.dropout_rng.seed(dropout_seed(seed));
  Rng rng(seed);
  int fan_in = arch.input_dim;
  std::vector<int> widths = arch.hidden;
  widths.push_back(arch.output_dim);
  for (int n_out : widths) {
    MlpLayer layer;
    const double bound = std::sqrt(6.0 / fan_in);
    layer.w.resize(n_out, fan_in);
    for (int i = 0; i < n_out; ++i) {
      for (int j = 0; j < fan_in; ++j) layer.w(i, j) = uniform(rng, -bound, bound);
    }
    layer.b = VecX::Zero(n_out);
    mlp.layers.push_back(std::move(layer));
    fan_in = n_out;
  }
  return mlp;
}

MatX forward(Mlp& mlp, const MatX& x, Mode mode, ForwardCache* cache) {
  if (x.rows() != mlp.arch.input_dim) {
    throw DimensionError("network input has " + std::to_string(x.rows()) + " rows, expected " +
                         std::to_string(mlp.arch.input_dim));
  }
  const int nl = static_cast<int>(mlp.layers.size());
  const double p = mlp.arch.dropout;
  const bool drop = mode == Mode::train && p > 0.0;
  if (cache) {
    cache->input.assign(nl, MatX());
    cache->pre.assign(nl, MatX());
    cache->mask.assign(nl - 1, MatX());
  }
  MatX a = x;
  for (int l = 0; l < nl; ++l) {
    const auto& layer = mlp.layers[l];
    MatX z = layer.w * a;
    z.colwise() += layer.b;
    if (cache) {
      cache->input[l] = std::move(a);
      cache->pre[l] = z;
    }
    if (l == nl - 1) {
      a = std::move(z);
      break;
    }
    a = z.cwiseMax(0.0);
    if (drop) {
      // Inverted dropout: survivors are scaled so the expectation is unchanged.
      const double keep_scale = 1.0 / (1.0 - p);
      MatX mask(a.rows(), a.cols());
      for (Eigen::Index j = 0; j < mask.cols(); ++j) {
        for (Eigen::Index i = 0; i < mask.rows(); ++i) {
          mask(i, j) = uniform01(mlp.dropout_rng) < p ? 0.0 : keep_scale;
        }
      }
      a = a.cwiseProduct(mask);
      if (cache) cache->mask[l] = std::move(mask);
    } else if (cache) {
      cache->mask[l] = MatX::Ones(a.rows(), a.cols());
    }
  }
  if (cache) cache->output = a;
  return a;
}

MatX forward_eval(const Mlp& mlp, const MatX& x) {
  if (x.rows() != mlp.arch.input_dim) {
    throw DimensionError("network input has " + std::to_string(x.rows()) + " rows, expected " +
                         std::to_string(mlp.arch.input_dim));
  }
  MatX a = x;
  const std::size_t nl = mlp.layers.size();
  for (std::size_t l = 0; l < nl; ++l) {
    MatX z = mlp.layers[l].w * a;
    z.colwise() += mlp.layers[l].b;
    a = l + 1 == nl ? std::move(z) : MatX(z.cwiseMax(0.0));
  }
  return a;
}

VecX forward_eval(const Mlp& mlp, const VecX& x) { return forward_eval(mlp, MatX(x)).col(0); }

double loss_mse(const MatX& pred, const MatX& target) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols()) {
    throw DimensionError("loss: prediction and target shapes differ");
  }
  if (pred.cols() == 0) throw DimensionError("loss: empty batch");
  return (pred - target).squaredNorm() / static_cast<double>(pred.cols());
}

Gradients backward(const Mlp& mlp, const ForwardCache& cache, const MatX& target) {
  const int nl = static_cast<int>(mlp.layers.size());
  if (static_cast<int>(cache.pre.size()) != nl || static_cast<int>(cache.mask.size()) != nl - 1) {
    throw DimensionError("backward: cache does not match the network");
  }
  if (target.rows() != cache.output.rows() || target.cols() != cache.output.cols()) {
    throw DimensionError("backward: target shape mismatch");
  }
  Gradients g;
  g.w.resize(nl);
  g.b.resize(nl);
  MatX delta = 2.0 * (cache.output - target) / static_cast<double>(target.cols());
  for (int l = nl - 1; l >= 0; --l) {
    g.w[l] = delta * cache.input[l].transpose();
    g.b[l] = delta.rowwise().sum();
    if (l == 0) break;
    MatX up = mlp.layers[l].w.transpose() * delta;
    const auto& mask = cache.mask[l - 1];
    if (mask.rows() != up.rows() || mask.cols() != up.cols()) {
      throw DimensionError("backward: dropout mask does not match the forward pass");
    }
    const auto& z = cache.pre[l - 1];
    delta = up.cwiseProduct(mask).cwiseProduct((z.array() > 0.0).cast<double>().matrix());
  }
  return g;
}

AdamState AdamState::zeros(const Mlp& mlp) {
  AdamState s;
  for (const auto& l : mlp.layers) {
    s.mw.push_back(MatX::Zero(l.w.rows(), l.w.cols()));
    s.vw.push_back(MatX::Zero(l.w.rows(), l.w.cols()));
    s.mb.push_back(VecX::Zero(l.b.size()));
    s.vb.push_back(VecX::Zero(l.b.size()));
  }
  return s;
}

void adam_update(double* theta, const double* g, double* m, double* v, std::size_t n, long t,
                 double lr, const TrainConfig& cfg) {
  if (t < 1) throw ValidationError("adam: step counter must be >= 1");
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
  // Vectorized in cache-sized chunks.
  using Arr = Eigen::Map<Eigen::ArrayXd>;
  constexpr std::size_t kChunk = 512;
  for (std::size_t start = 0; start < n; start += kChunk) {
    const auto len = static_cast<Eigen::Index>(std::min(kChunk, n - start));
    Arr th(theta + start, len), mm(m + start, len), vv(v + start, len);
    const Eigen::Map<const Eigen::ArrayXd> gg(g + start, len);
    mm = cfg.beta1 * mm + (1.0 - cfg.beta1) * gg;
    vv = cfg.beta2 * vv + (1.0 - cfg.beta2) * gg * gg;
    th -= lr * (mm / c1) / ((vv / c2).sqrt() + cfg.eps);
  }
}

void adam_step(Mlp& mlp, const Gradients& g, AdamState& s, double lr, const TrainConfig& cfg) {
  ++s.t;
  for (std::size_t l = 0; l < mlp.layers.size(); ++l) {
    auto& layer = mlp.layers[l];
    adam_update(layer.w.data(), g.w[l].data(), s.mw[l].data(), s.vw[l].data(), layer.w.size(), s.t,
                lr, cfg);
    adam_update(layer.b.data(), g.b[l].data(), s.mb[l].data(), s.vb[l].data(), layer.b.size(), s.t,
                lr, cfg);
  }
}

TrainHistory train(Mlp& mlp, const MatX& x_train, const MatX& y_train, const MatX& x_val,
                   const MatX& y_val, const TrainConfig& cfg) {
  if (cfg.epochs < 1) throw ValidationError("epochs must be >= 1");
  if (!(cfg.lr >= 0.0)) throw ValidationError("learning rate must be >= 0");
  if (cfg.batch_size < 1) throw ValidationError("batch size must be >= 1");
  if (x_train.rows() == 0 || x_train.rows() != y_train.rows() || x_val.rows() != y_val.rows()) {
    throw DimensionError("training data is empty or inputs and outputs have different counts");
  }
  if (x_train.cols() != mlp.arch.input_dim || x_val.cols() != mlp.arch.input_dim ||
      y_train.cols() != mlp.arch.output_dim || y_val.cols() != mlp.arch.output_dim) {
    throw DimensionError("dataset dimensions do not match the network architecture");
  }
  check_finite_matrix(x_train, "training inputs");
  check_finite_matrix(y_train, "training targets");

  mlp.norm = cfg.normalize ? Normalization::fit(x_train, y_train, cfg.shared_output_scale)
                           : Normalization::identity(mlp.arch.input_dim, mlp.arch.output_dim);
  auto norm_in = [&](const MatX& rows) {
    return MatX(((rows.rowwise() - mlp.norm.in_mean.transpose()).array().rowwise() /
                 mlp.norm.in_std.transpose().array())
                    .transpose());
  };
  auto norm_out = [&](const MatX& rows) {
    return MatX(((rows.rowwise() - mlp.norm.out_mean.transpose()).array().rowwise() /
                 mlp.norm.out_std.transpose().array())
                    .transpose());
  };
  const MatX xt = norm_in(x_train), yt = norm_out(y_train);
  const MatX xv = norm_in(x_val), yv = norm_out(y_val);

  const Eigen::Index n = xt.cols();
  const int bs = static_cast<int>(std::min<Eigen::Index>(cfg.batch_size, n));
  std::vector<Eigen::Index> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng shuffle_rng(cfg.seed);
  AdamState state = AdamState::zeros(mlp);
  TrainHistory hist;
  ForwardCache cache;
  MatX xb, yb;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    double lr = cfg.lr;
    if (cfg.lr_final > 0.0 && cfg.epochs > 1) {
      const double t = static_cast<double>(epoch) / (cfg.epochs - 1);
      lr = cfg.lr_final + 0.5 * (cfg.lr - cfg.lr_final) * (1.0 + std::cos(kPi * t));
    }
    shuffle_in_place(order, shuffle_rng);
    double loss_sum = 0.0;
    int batches = 0;
    for (Eigen::Index start = 0; start < n; start += bs) {
      const Eigen::Index len = std::min<Eigen::Index>(bs, n - start);
      xb.resize(xt.rows(), len);
      yb.resize(yt.rows(), len);
      for (Eigen::Index k = 0; k < len; ++k) {
        xb.col(k) = xt.col(order[start + k]);
        yb.col(k) = yt.col(order[start + k]);
      }
      forward(mlp, xb, Mode::train, &cache);
      const double loss = loss_mse(cache.output, yb);
      if (!std::isfinite(loss)) throw NonFiniteError("non-finite training loss", epoch);
      loss_sum += loss;
      ++batches;
      adam_step(mlp, backward(mlp, cache, yb), state, lr, cfg);
    }
    hist.train_loss.push_back(loss_sum / batches);
    const double vl = xv.cols() > 0 ? loss_mse(forward_eval(mlp, xv), yv) : 0.0;
    if (!std::isfinite(vl)) throw NonFiniteError("non-finite validation loss", epoch);
    hist.val_loss.push_back(vl);
  }
  return hist;
}

TrainHistory train(Mlp& mlp, const AeroDataset& train_ds, const AeroDataset& val_ds,
                   const TrainConfig& cfg) {
  return train(mlp, dataset_inputs(train_ds), dataset_outputs(train_ds), dataset_inputs(val_ds),
               dataset_outputs(val_ds), cfg);
}

MatX predict(const Mlp& mlp, const MatX& x_rows) {
  if (x_rows.cols() != mlp.arch.input_dim) {
    throw DimensionError("prediction input has " + std::to_string(x_rows.cols()) +
                         " columns, expected " + std::to_string(mlp.arch.input_dim));
  }
  const MatX xn = ((x_rows.rowwise() - mlp.norm.in_mean.transpose()).array().rowwise() /
                   mlp.norm.in_std.transpose().array())
                      .transpose();
  MatX y = forward_eval(mlp, xn).transpose();
  y = (y.array().rowwise() * mlp.norm.out_std.transpose().array()).matrix();
  y.rowwise() += mlp.norm.out_mean.transpose();
  return y;
}

std::vector<Vec3> predict_link_forces_mlp(const Mlp& mlp, const RobotModel& model,
                                          const JointState& state, const Vec3& v_com,
                                          const Vec3& v_w, const AeroFactors& factors) {
  const int na = model.n_aero_links();
  if (mlp.arch.input_dim != 3 + model.n_joints() || mlp.arch.output_dim != 3 * na) {
    throw DimensionError("network dimensions do not match the robot model");
  }
  std::vector<Vec3> forces(na, Vec3::Zero());
  const Vec3 v_a = v_com - v_w;
  const double speed = v_a.norm();
  if (speed < 1e-12) return forces;
  const Mat3 r = state.base_orientation.toRotationMatrix();
  MatX x(1, mlp.arch.input_dim);
  x.row(0).head<3>() = (r.transpose() * v_a / speed).transpose();
  x.row(0).tail(model.n_joints()) = state.s.transpose();
  const MatX y = predict(mlp, x);
  const double scale = factors.k_a() * speed * speed;
  for (int a = 0; a < na; ++a) {
    forces[a] = scale * (r * y.row(0).segment<3>(3 * a).transpose());
  }
  return forces;
}

std::vector<Vec3> predict_link_forces_mlp(const Mlp& mlp, const RobotModel& model,
                                          const JointState& state, const Vec3& v_w,
                                          const AeroFactors& factors) {
  validate_state(model, state);
  const auto c = centroidal_momentum(model, state);
  return predict_link_forces_mlp(mlp, model, state, c.com_velocity, v_w, factors);
}

std::string serialize_mlp(const Mlp& mlp) {
  ByteWriter w;
  w.raw("MLP1", 4);
  w.u32(static_cast<std::uint32_t>(mlp.arch.input_dim));
  w.u32(static_cast<std::uint32_t>(mlp.arch.output_dim));
  w.u32(static_cast<std::uint32_t>(mlp.layers.size()));
  for (const auto& l : mlp.layers) w.u32(static_cast<std::uint32_t>(l.w.rows()));
  w.f64(mlp.arch.dropout);
  const Normalization norm = mlp.norm.empty()
                                 ? Normalization::identity(mlp.arch.input_dim, mlp.arch.output_dim)
                                 : mlp.norm;
  for (const VecX* v : {&norm.in_mean, &norm.in_std, &norm.out_mean, &norm.out_std}) {
    for (int i = 0; i < v->size(); ++i) w.f64((*v)(i));
  }
  for (const auto& l : mlp.layers) {
    for (int i = 0; i < l.w.rows(); ++i) {
      for (int j = 0; j < l.w.cols(); ++j) w.f64(l.w(i, j));
    }
    for (int i = 0; i < l.b.size(); ++i) w.f64(l.b(i));
  }
  return w.take();
}

Mlp deserialize_mlp(const std::string& bytes) {
  ByteReader r(bytes);
  if (bytes.size() < 4 || r.raw(4) != "MLP1") throw ParseError("not a network file (bad magic)");
  Mlp mlp;
  mlp.arch.input_dim = static_cast<int>(r.u32());
  mlp.arch.output_dim = static_cast<int>(r.u32());
  const std::uint32_t nl = r.u32();
  if (nl < 1 || nl > 10000) throw ParseError("network file: bad layer count");
  std::vector<int> widths(nl);
  for (auto& wd : widths) wd = static_cast<int>(r.u32());
  if (widths.back() != mlp.arch.output_dim) throw ParseError("network file: output width mismatch");
  mlp.arch.hidden.assign(widths.begin(), widths.end() - 1);
  mlp.arch.dropout = r.f64();
  mlp.arch.validate();
  auto read_vec = [&](int n) {
    VecX v(n);
    for (int i = 0; i < n; ++i) v(i) = r.f64();
    return v;
  };
  mlp.norm.in_mean = read_vec(mlp.arch.input_dim);
  mlp.norm.in_std = read_vec(mlp.arch.input_dim);
  mlp.norm.out_mean = read_vec(mlp.arch.output_dim);
  mlp.norm.out_std = read_vec(mlp.arch.output_dim);
  int fan_in = mlp.arch.input_dim;
  for (int n_out : widths) {
    MlpLayer l;
    l.w.resize(n_out, fan_in);
    for (int i = 0; i < n_out; ++i) {
      for (int j = 0; j < fan_in; ++j) l.w(i, j) = r.f64();
    }
    l.b = read_vec(n_out);
    mlp.layers.push_back(std::move(l));
    fan_in = n_out;
  }
  if (!r.done()) throw ParseError("network file: trailing bytes");
  mlp.dropout_rng.seed(dropout_seed(0));
  return mlp;
}

void save_mlp(const std::string& path, const Mlp& mlp) { text::write_file(path, serialize_mlp(mlp)); }

Mlp load_mlp(const std::string& path) { return deserialize_mlp(text::read_file(path)); }

}  // namespace aeroflight
