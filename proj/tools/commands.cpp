#include "commands.hpp"

#include "aeroflight/axisym.hpp"
#include "aeroflight/dataset.hpp"
#include "aeroflight/errors.hpp"
#include "aeroflight/mlp.hpp"
#include "aeroflight/rng.hpp"
#include "aeroflight/sim.hpp"
#include "aeroflight/text.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <limits>
#include <sstream>
#include <thread>

namespace aeroflight::cli {

namespace {

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string content_hash(const std::string& bytes) { return hex64(fnv1a(bytes.data(), bytes.size())); }

std::string fmt(double v) { return text::format_double(v); }

std::pair<AeroDataset, AeroDataset> load_split(const std::string& path, double ratio,
                                               std::uint64_t seed) {
  const auto ds = read_dataset(path);
  return split(ds, ratio, seed);
}

void check_dims(const RobotModel& model, const AeroDataset& ds) {
  if (ds.n_joints != model.n_joints() || ds.n_links != model.n_aero_links()) {
    throw DimensionError("dataset dimensions (" + std::to_string(ds.n_joints) + " joints, " +
                         std::to_string(ds.n_links) + " links) do not match the model");
  }
}

}  // namespace

int generate_dataset(const GenerateOptions& o) {
  const auto model = load_model_file(o.model);
  auto cfg = load_oracle_config(o.config);
  if (o.seed) cfg.seed = *o.seed;
  cfg.validate();
  auto ds = oracle_generate(model, cfg);
  if (o.augment) ds = mirror_augment(ds, model);
  const auto bytes = format_dataset(ds);
  text::write_file(o.out, bytes);
  std::cout << "samples=" << ds.size() << " config_hash=" << hex64(ds.config_hash)
            << " file_hash=" << content_hash(bytes) << " out=" << o.out << '\n';
  return kOk;
}

int fit_axisym(const FitOptionsCli& o) {
  const auto model = load_model_file(o.model);
  auto [train_ds, val_ds] = load_split(o.dataset, o.split, o.split_seed);
  check_dims(model, train_ds);
  if (o.augment) train_ds = mirror_augment(train_ds, model);
  FitOptions opt;
  opt.lambda = o.lambda;
  const auto coeffs = fit_coefficients(model, train_ds, opt);
  save_coeffs_file(o.out, coeffs);
  const double train_err =
      relative_error(predict_dataset_axisym(model, coeffs, train_ds), dataset_outputs(train_ds));
  const double val_err = val_ds.size() ? relative_error(predict_dataset_axisym(model, coeffs, val_ds),
                                                        dataset_outputs(val_ds))
                                       : std::numeric_limits<double>::quiet_NaN();
  std::cout << "links=" << coeffs.links.size() << " train_error=" << fmt(train_err)
            << " val_error=" << fmt(val_err) << " out=" << o.out << '\n';
  return kOk;
}

int train_mlp(const TrainOptions& o) {
  auto [train_ds, val_ds] = load_split(o.dataset, o.split, o.split_seed);
  if (o.augment) {
    if (o.model.empty()) throw ValidationError("--augment needs --model");
    const auto model = load_model_file(o.model);
    check_dims(model, train_ds);
    train_ds = mirror_augment(train_ds, model);
  }
  MlpArch arch;
  arch.input_dim = train_ds.input_dim();
  arch.output_dim = train_ds.output_dim();
  arch.hidden.assign(static_cast<std::size_t>(o.layers), o.width);
  arch.dropout = o.dropout;
  arch.validate();
  TrainConfig tc;
  tc.epochs = o.epochs;
  tc.batch_size = o.batch;
  tc.lr = o.lr;
  tc.lr_final = o.lr_final;
  tc.shared_output_scale = o.shared_output_scale;
  tc.seed = o.seed;
  if (tc.epochs < 1 || tc.batch_size < 1 || !(tc.lr >= 0.0)) {
    throw ValidationError("epochs and batch must be >= 1 and lr >= 0");
  }
  auto net = mlp_init(arch, o.seed);
  const auto hist = train(net, train_ds, val_ds, tc);
  save_mlp(o.out, net);
  if (!o.history.empty()) {
    std::ostringstream h;
    h << "epoch,train_loss,val_loss\n";
    for (std::size_t e = 0; e < hist.train_loss.size(); ++e) {
      h << e << ',' << fmt(hist.train_loss[e]) << ','
        << fmt(e < hist.val_loss.size() ? hist.val_loss[e] : std::numeric_limits<double>::quiet_NaN())
        << '\n';
    }
    text::write_file(o.history, h.str());
  }
  const double train_err = relative_error(predict(net, dataset_inputs(train_ds)), dataset_outputs(train_ds));
  const double val_err = val_ds.size() ? relative_error(predict(net, dataset_inputs(val_ds)),
                                                        dataset_outputs(val_ds))
                                       : std::numeric_limits<double>::quiet_NaN();
  std::cout << "epochs=" << o.epochs << " train_error=" << fmt(train_err)
            << " val_error=" << fmt(val_err) << " out=" << o.out << '\n';
  return kOk;
}

int eval_models(const EvalOptions& o) {
  if (o.coeffs.empty() && o.mlp.empty()) throw ValidationError("give --coeffs and/or --mlp");
  const AeroDataset ds = o.all ? read_dataset(o.dataset) : load_split(o.dataset, o.split, o.split_seed).second;
  const MatX y = dataset_outputs(ds);
  std::cout << "samples=" << ds.size();
  if (!o.coeffs.empty()) {
    if (o.model.empty()) throw ValidationError("--coeffs needs --model");
    const auto model = load_model_file(o.model);
    check_dims(model, ds);
    const auto coeffs = load_coeffs_file(o.coeffs);
    std::cout << " axisym_error=" << fmt(relative_error(predict_dataset_axisym(model, coeffs, ds), y));
  }
  if (!o.mlp.empty()) {
    const auto net = load_mlp(o.mlp);
    if (net.arch.input_dim != ds.input_dim() || net.arch.output_dim != ds.output_dim()) {
      throw DimensionError("network dimensions do not match the dataset");
    }
    std::cout << " mlp_error=" << fmt(relative_error(predict(net, dataset_inputs(ds)), y));
  }
  std::cout << '\n';
  return kOk;
}

int simulate(const SimulateOptions& o) {
  if (o.scenarios.empty()) throw ValidationError("give at least one --scenario");
  if (!o.out_log.empty() && o.scenarios.size() > 1) {
    throw ValidationError("--out-log takes a single scenario; use --out-dir");
  }
  if (o.jobs < 1) throw ValidationError("--jobs must be >= 1");
  std::vector<Scenario> scs;
  for (const auto& p : o.scenarios) {
    auto sc = load_scenario_file(p);
    if (!o.plant_aero.empty()) sc.plant_aero = parse_aero_kind(o.plant_aero);
    if (!o.controller_aero.empty()) sc.controller_aero = parse_aero_kind(o.controller_aero);
    if (o.duration) sc.duration = *o.duration;
    sc.validate();
    scs.push_back(std::move(sc));
  }

  std::vector<SimLog> logs(scs.size());
  std::vector<std::exception_ptr> errors(scs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < scs.size(); i = next++) {
      try {
        logs[i] = run_scenario(scs[i]);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const int n_threads = std::min<int>(o.jobs, static_cast<int>(scs.size()));
  std::vector<std::thread> pool;
  for (int t = 1; t < n_threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  int code = kOk;
  if (!o.out_dir.empty()) std::filesystem::create_directories(o.out_dir);
  for (std::size_t i = 0; i < scs.size(); ++i) {
    const auto& log = logs[i];
    std::string path = o.out_log;
    if (path.empty() && !o.out_dir.empty()) path = o.out_dir + "/" + scs[i].name + ".csv";
    if (!path.empty()) write_log(path, log);
    std::cout << "scenario=" << log.scenario << " verdict=" << log.verdict()
              << " max_com_error=" << fmt(log.max_com_error)
              << " max_tilt_deg=" << fmt(log.max_tilt_deg);
    if (!log.reason.empty()) std::cout << " reason=" << log.reason;
    if (!path.empty()) std::cout << " log=" << path;
    std::cout << '\n';
    if (log.status != SimStatus::completed) code = kScenarioFailed;
  }
  return code;
}

namespace {

struct LoadedLog {
  std::string label;
  LogTable table;
};

std::string log_label(const LogTable& t, const std::string& path) {
  const auto& h = t.header_comment;
  const auto pos = h.find("scenario=");
  if (pos != std::string::npos) {
    const auto end = h.find(' ', pos);
    return h.substr(pos + 9, end == std::string::npos ? std::string::npos : end - pos - 9);
  }
  return std::filesystem::path(path).stem().string();
}

}  // namespace

int report(const ReportOptions& o) {
  if (o.logs.empty()) throw ValidationError("give at least one --logs file");
  if (!(o.bin > 0.0)) throw ValidationError("--bin must be > 0");
  std::vector<LoadedLog> logs;
  for (const auto& p : o.logs) {
    auto t = read_log(p);
    if (!logs.empty() && t.columns != logs.front().table.columns) {
      throw ValidationError("log '" + p + "' has a different schema");
    }
    logs.push_back({log_label(t, p), std::move(t)});
  }
  // Repeated scenario names (e.g. one scenario under different overrides) fall
  // back to the file names.
  for (std::size_t i = 0; i < logs.size(); ++i) {
    for (std::size_t j = 0; j < logs.size(); ++j) {
      if (i != j && logs[i].label == logs[j].label) {
        for (std::size_t k = 0; k < logs.size(); ++k) {
          logs[k].label = std::filesystem::path(o.logs[k]).stem().string();
        }
        i = j = logs.size();
        break;
      }
    }
  }
  const auto& cols = logs.front().table.columns;
  const int c_t = logs.front().table.column("t");
  const int c_err = logs.front().table.column("com_err");
  if (c_t < 0 || c_err < 0) throw ValidationError("log lacks the t/com_err columns");
  std::vector<int> c_ds, c_thrust;
  for (std::size_t i = 0; i < cols.size(); ++i) {
    if (cols[i].rfind("ds_", 0) == 0) c_ds.push_back(static_cast<int>(i));
    if (cols[i].rfind("T_", 0) == 0) c_thrust.push_back(static_cast<int>(i));
  }

  double t_end = 0.0;
  for (const auto& l : logs) {
    if (!l.table.rows.empty()) t_end = std::max(t_end, l.table.rows.back()[c_t]);
  }
  const long n_bins = static_cast<long>(std::floor(t_end / o.bin)) + 1;

  std::ostringstream out;
  out << "t";
  for (const auto& l : logs) {
    out << ',' << l.label << ":com_err_max";
    for (int c : c_ds) out << ',' << l.label << ':' << cols[c] << "_mean";
    for (int c : c_thrust) out << ',' << l.label << ':' << cols[c] << "_min," << l.label << ':' << cols[c] << "_max";
  }
  out << '\n';
  const double nan = std::numeric_limits<double>::quiet_NaN();
  const std::size_t per_log = 1 + c_ds.size() + 2 * c_thrust.size();
  std::vector<std::vector<double>> agg(logs.size());
  std::vector<std::vector<int>> count(logs.size());
  for (std::size_t li = 0; li < logs.size(); ++li) {
    agg[li].assign(static_cast<std::size_t>(n_bins) * per_log, nan);
    count[li].assign(static_cast<std::size_t>(n_bins), 0);
    for (const auto& row : logs[li].table.rows) {
      const auto b = static_cast<std::size_t>(std::clamp<long>(static_cast<long>(std::floor(row[c_t] / o.bin)), 0, n_bins - 1));
      double* a = &agg[li][b * per_log];
      const int n = count[li][b]++;
      a[0] = n == 0 ? row[c_err] : std::max(a[0], row[c_err]);
      for (std::size_t k = 0; k < c_ds.size(); ++k) {
        a[1 + k] = n == 0 ? row[c_ds[k]] : a[1 + k] + (row[c_ds[k]] - a[1 + k]) / (n + 1);
      }
      for (std::size_t k = 0; k < c_thrust.size(); ++k) {
        double* mm = a + 1 + c_ds.size() + 2 * k;
        const double v = row[c_thrust[k]];
        mm[0] = n == 0 ? v : std::min(mm[0], v);
        mm[1] = n == 0 ? v : std::max(mm[1], v);
      }
    }
  }
  for (long b = 0; b < n_bins; ++b) {
    out << fmt(static_cast<double>(b) * o.bin);
    for (std::size_t li = 0; li < logs.size(); ++li) {
      for (std::size_t k = 0; k < per_log; ++k) out << ',' << fmt(agg[li][b * per_log + k]);
    }
    out << '\n';
  }
  text::write_file(o.out, out.str());
  for (const auto& l : logs) {
    double mx = 0.0;
    for (const auto& row : l.table.rows) mx = std::max(mx, row[c_err]);
    std::cout << "log=" << l.label << " rows=" << l.table.rows.size() << " max_com_error=" << fmt(mx) << '\n';
  }
  std::cout << "bins=" << n_bins << " out=" << o.out << '\n';
  return kOk;
}

}  // namespace aeroflight::cli
