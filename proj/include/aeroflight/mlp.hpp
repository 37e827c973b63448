#pragma once

// Fully connected ReLU network for the link-force map
//   (unit relative wind direction in the base frame, joint positions) ->
//   base-frame force-area triples of every aero link.
//
// Batches are stored column-wise: one sample per column.

#include "aeroflight/axisym.hpp"
#include "aeroflight/model.hpp"
#include "aeroflight/rng.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace aeroflight {

struct AeroDataset;

struct MlpArch {
  int input_dim = 22;
  int output_dim = 39;
  std::vector<int> hidden = std::vector<int>(9, 64);
  double dropout = 0.10;

  /// Nine hidden layers of 1048 units (full-scale network).
  static MlpArch full_scale(int input_dim, int output_dim);
  void validate() const;
};

struct MlpLayer {
  MatX w;  // n_out x n_in
  VecX b;
};

/// Per-feature affine maps applied outside the network: x_n = (x - mean) / std
/// on inputs and y = y_n * std + mean on outputs. Identity when empty.
struct Normalization {
  VecX in_mean, in_std, out_mean, out_std;

  bool empty() const { return in_mean.size() == 0; }
  static Normalization identity(int in, int out);
  /// Per-feature mean and std. With shared_output_scale every output uses the
  /// RMS deviation over all output channels, so the normalized MSE stays
  /// proportional to the raw squared error.
  static Normalization fit(const MatX& x_rows, const MatX& y_rows, bool shared_output_scale = false);
};

struct Mlp {
  MlpArch arch;
  std::vector<MlpLayer> layers;
  Normalization norm;
  Rng dropout_rng;
};

Mlp mlp_init(const MlpArch& arch, std::uint64_t seed);

enum class Mode { eval, train };

/// Activations of a forward pass, kept for backpropagation.
struct ForwardCache {
  std::vector<MatX> input;  // input of each layer (after dropout for hidden outputs)
  std::vector<MatX> pre;    // pre-activation of each layer
  std::vector<MatX> mask;   // dropout masks of hidden layers (already scaled by 1/(1-p))
  MatX output;
};

/// Network output for a batch of (normalized) inputs. Train mode draws
/// dropout masks from mlp.dropout_rng.
MatX forward(Mlp& mlp, const MatX& x, Mode mode, ForwardCache* cache = nullptr);
/// Eval-mode forward; pure.
MatX forward_eval(const Mlp& mlp, const MatX& x);
VecX forward_eval(const Mlp& mlp, const VecX& x);

/// (1/N) sum_i |pred_i - target_i|^2 over the N columns.
double loss_mse(const MatX& pred, const MatX& target);

struct Gradients {
  std::vector<MatX> w;
  std::vector<VecX> b;
};

/// Exact gradient of loss_mse(cache.output, target) for the recorded pass.
Gradients backward(const Mlp& mlp, const ForwardCache& cache, const MatX& target);

struct TrainConfig {
  int epochs = 2000;
  int batch_size = 128;
  double lr = 1e-3;
  double lr_final = -1.0;  // cosine decay to this rate when > 0
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t seed = 1;
  bool normalize = true;  // fit input/output standardization on the training split
  bool shared_output_scale = false;  // one output scale for all channels (see Normalization::fit)
};

struct AdamState {
  std::vector<MatX> mw, vw;
  std::vector<VecX> mb, vb;
  long t = 0;

  static AdamState zeros(const Mlp& mlp);
};

/// One bias-corrected Adam update of a parameter block at step t >= 1.
void adam_update(double* theta, const double* g, double* m, double* v, std::size_t n, long t,
                 double lr, const TrainConfig& cfg);

/// Increments state.t and applies Adam to every parameter.
void adam_step(Mlp& mlp, const Gradients& g, AdamState& state, double lr, const TrainConfig& cfg);

struct TrainHistory {
  std::vector<double> train_loss;  // mean mini-batch loss (train mode), normalized units
  std::vector<double> val_loss;    // eval-mode loss on the validation split, normalized units
};

/// Trains on sample-per-row matrices. Throws DimensionError or NonFiniteError
/// (index = epoch) on failure.
TrainHistory train(Mlp& mlp, const MatX& x_train, const MatX& y_train, const MatX& x_val,
                   const MatX& y_val, const TrainConfig& cfg);
TrainHistory train(Mlp& mlp, const AeroDataset& train_ds, const AeroDataset& val_ds,
                   const TrainConfig& cfg);

/// Denormalized predictions for sample-per-row inputs.
MatX predict(const Mlp& mlp, const MatX& x_rows);

/// World-frame force of every aero link. Uses the robot relative air velocity
/// v_a = v_G - v_w: x = (R_B^T v_a / |v_a|, s), F_i = k_a |v_a|^2 R_B y_i.
std::vector<Vec3> predict_link_forces_mlp(const Mlp& mlp, const RobotModel& model,
                                          const JointState& state, const Vec3& v_w,
                                          const AeroFactors& factors);
std::vector<Vec3> predict_link_forces_mlp(const Mlp& mlp, const RobotModel& model,
                                          const JointState& state, const Vec3& v_com,
                                          const Vec3& v_w, const AeroFactors& factors);

/// Binary format: magic "MLP1", little-endian u32 dims and layer widths,
/// f64 dropout, normalization vectors, then per layer W (row-major) and b.
std::string serialize_mlp(const Mlp& mlp);
Mlp deserialize_mlp(const std::string& bytes);
void save_mlp(const std::string& path, const Mlp& mlp);
Mlp load_mlp(const std::string& path);

}  // namespace aeroflight
