#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace aeroflight::cli {

enum ExitCode : int {
  kOk = 0,
  kIoError = 2,
  kValidationError = 3,
  kNonFinite = 4,
  kScenarioFailed = 5,
};

struct GenerateOptions {
  std::string model, config, out;
  std::optional<std::uint64_t> seed;
  bool augment = false;
};

struct FitOptionsCli {
  std::string model, dataset, out;
  std::optional<double> lambda;
  double split = 0.8;
  std::uint64_t split_seed = 7;
  bool augment = false;
};

struct TrainOptions {
  std::string model, dataset, out, history;
  int epochs = 2000;
  int batch = 128;
  double lr = 1e-3;
  double lr_final = -1.0;
  double dropout = 0.1;
  bool shared_output_scale = false;
  int layers = 9;
  int width = 64;
  std::uint64_t seed = 1;
  double split = 0.8;
  std::uint64_t split_seed = 7;
  bool augment = false;
};

struct EvalOptions {
  std::string model, dataset, coeffs, mlp;
  double split = 0.8;
  std::uint64_t split_seed = 7;
  bool all = false;
};

struct SimulateOptions {
  std::vector<std::string> scenarios;
  std::string out_log, out_dir;
  std::string plant_aero, controller_aero;
  std::optional<double> duration;
  int jobs = 1;
};

struct ReportOptions {
  std::vector<std::string> logs;
  std::string out;
  double bin = 1.0;
};

int generate_dataset(const GenerateOptions& o);
int fit_axisym(const FitOptionsCli& o);
int train_mlp(const TrainOptions& o);
int eval_models(const EvalOptions& o);
int simulate(const SimulateOptions& o);
int report(const ReportOptions& o);

}  // namespace aeroflight::cli
