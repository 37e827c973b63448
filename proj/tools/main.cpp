#include "commands.hpp"

#include "aeroflight/errors.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>

using namespace aeroflight;

int main(int argc, char** argv) {
  CLI::App app{"aeroflight: aerodynamic models and flight control for a jet-powered humanoid"};
  app.require_subcommand(1);

  cli::GenerateOptions gen;
  auto* c_gen = app.add_subcommand("generate-dataset", "Generate an oracle link-force dataset");
  c_gen->add_option("--model", gen.model, "Robot model file")->required();
  c_gen->add_option("--config", gen.config, "Oracle config file")->required();
  c_gen->add_option("--seed", gen.seed, "Override the oracle seed");
  c_gen->add_option("--out", gen.out, "Output dataset CSV")->required();
  c_gen->add_flag("--augment", gen.augment, "Append mirrored samples");

  cli::FitOptionsCli fit;
  auto* c_fit = app.add_subcommand("fit-axisym", "Fit axisymmetric link coefficients");
  c_fit->add_option("--model", fit.model, "Robot model file")->required();
  c_fit->add_option("--dataset", fit.dataset, "Dataset CSV")->required();
  c_fit->add_option("--out", fit.out, "Output coefficient file")->required();
  c_fit->add_option("--lambda", fit.lambda, "Fixed Lasso penalty (default: cross-validated)");
  c_fit->add_option("--split", fit.split, "Training fraction")->capture_default_str();
  c_fit->add_option("--split-seed", fit.split_seed, "Split shuffle seed")->capture_default_str();
  c_fit->add_flag("--augment", fit.augment, "Mirror-augment the training split");

  cli::TrainOptions tr;
  auto* c_tr = app.add_subcommand("train-mlp", "Train the link-force network");
  c_tr->add_option("--dataset", tr.dataset, "Dataset CSV")->required();
  c_tr->add_option("--out", tr.out, "Output weights file")->required();
  c_tr->add_option("--history", tr.history, "Loss history CSV");
  c_tr->add_option("--model", tr.model, "Robot model file (needed by --augment)");
  c_tr->add_option("--epochs", tr.epochs)->capture_default_str();
  c_tr->add_option("--batch", tr.batch)->capture_default_str();
  c_tr->add_option("--lr", tr.lr)->capture_default_str();
  c_tr->add_option("--lr-final", tr.lr_final, "Cosine-decay target rate (<= 0: constant)")
      ->capture_default_str();
  c_tr->add_option("--dropout", tr.dropout)->capture_default_str();
  c_tr->add_option("--layers", tr.layers, "Hidden layers")->capture_default_str();
  c_tr->add_option("--width", tr.width, "Units per hidden layer")->capture_default_str();
  c_tr->add_option("--seed", tr.seed)->capture_default_str();
  c_tr->add_option("--split", tr.split)->capture_default_str();
  c_tr->add_option("--split-seed", tr.split_seed)->capture_default_str();
  c_tr->add_flag("--augment", tr.augment, "Mirror-augment the training split");
  c_tr->add_flag("--shared-output-scale", tr.shared_output_scale,
                 "One output scale for all channels instead of per-channel std");

  cli::EvalOptions ev;
  auto* c_ev = app.add_subcommand("eval-models", "Relative error of fitted models on a dataset");
  c_ev->add_option("--dataset", ev.dataset, "Dataset CSV")->required();
  c_ev->add_option("--model", ev.model, "Robot model file");
  c_ev->add_option("--coeffs", ev.coeffs, "Axisymmetric coefficient file");
  c_ev->add_option("--mlp", ev.mlp, "Network weights file");
  c_ev->add_option("--split", ev.split)->capture_default_str();
  c_ev->add_option("--split-seed", ev.split_seed)->capture_default_str();
  c_ev->add_flag("--all", ev.all, "Evaluate on every sample instead of the validation split");

  cli::SimulateOptions sim;
  auto* c_sim = app.add_subcommand("simulate", "Run flight scenarios");
  c_sim->add_option("--scenario", sim.scenarios, "Scenario file (repeatable)")->required();
  c_sim->add_option("--out-log", sim.out_log, "Log CSV (single scenario)");
  c_sim->add_option("--out-dir", sim.out_dir, "Directory for <name>.csv logs");
  c_sim->add_option("--plant-aero", sim.plant_aero, "Override plant model: none|axisym|mlp");
  c_sim->add_option("--controller-aero", sim.controller_aero, "Override controller feedback");
  c_sim->add_option("--duration", sim.duration, "Override duration, s");
  c_sim->add_option("--jobs", sim.jobs, "Scenarios run concurrently")->capture_default_str();

  cli::ReportOptions rep;
  auto* c_rep = app.add_subcommand("report", "Per-time-bin comparison of simulation logs");
  c_rep->add_option("--logs", rep.logs, "Log CSV files")->required();
  c_rep->add_option("--out", rep.out, "Output CSV")->required();
  c_rep->add_option("--bin", rep.bin, "Bin width, s")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (c_gen->parsed()) return cli::generate_dataset(gen);
    if (c_fit->parsed()) return cli::fit_axisym(fit);
    if (c_tr->parsed()) return cli::train_mlp(tr);
    if (c_ev->parsed()) return cli::eval_models(ev);
    if (c_sim->parsed()) return cli::simulate(sim);
    if (c_rep->parsed()) return cli::report(rep);
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return cli::kIoError;
  } catch (const NonFiniteError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return cli::kNonFinite;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return cli::kIoError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return cli::kValidationError;
  }
  return cli::kValidationError;
}
