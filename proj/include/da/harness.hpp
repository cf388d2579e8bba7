#pragma once

#include "da/core.hpp"
#include "da/drivers.hpp"

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace da {

struct ModelConfig {
  std::string type = "lorenz96";  // "lorenz96" or "linear"
  Index n = 40;
  double forcing = 8.0;
  double dt = 0.05;
  int steps_per_window = 1;
  /// Linear model only: A = contraction * (I + 0.1 * G) / |I + 0.1 * G|_2
  /// with G a seeded standard normal matrix.
  double contraction = 0.95;
};

struct ExperimentConfig {
  ModelConfig model;
  int num_steps = 10;  // N
  int nens = 20;
  std::uint64_t seed = 1;
  double obs_fraction = 0.5;
  int operator_count = 4;
  double background_std = 0.05;
  double observation_std = 0.01;
  int spinup_steps = 500;
  std::vector<std::string> methods = {"pod", "ism", "tr"};
  PodOptions pod;
  IsmOptions ism;
  TrOptions tr;
  std::string output_dir;

  void validate() const;
};

ExperimentConfig load_config(const std::string& path);
void save_config(const ExperimentConfig& config, const std::string& path);

/// FNV-1a hash of the canonical serialized form; stable across runs and
/// platforms, and sensitive to every semantically meaningful field.
std::uint64_t config_hash(const ExperimentConfig& config);

/// sqrt((1/N) sum_{k=0}^{N} |truth_k - analysis_k|^2). The 1/N normalization
/// of an (N+1)-term sum is deliberate; for single-state trajectories (N = 0)
/// the divisor falls back to 1.
double rmse(const std::vector<StateVector>& truth,
            const std::vector<StateVector>& analysis);

/// Per-time errors |truth_k - analysis_k|; the overall RMSE is the
/// 1/N-normalized root of their squared sum.
std::vector<double> rmse_per_time(const std::vector<StateVector>& truth,
                                  const std::vector<StateVector>& analysis);

/// `count` deterministic index masks, each observing floor(fraction * n)
/// components. The masks are consecutive chunks of a seeded shuffle of 0..n-1,
/// so a full cycle covers the state as evenly as the sizes allow. Mask
/// (k mod count) observes time k.
std::vector<ObservationOperator> make_observation_cycle(Index n, double fraction,
                                                        int count,
                                                        std::uint64_t seed);

struct MethodRecord {
  std::string name;
  bool ok = false;
  std::string error;
  AnalysisResult result;
  double rmse = 0.0;
  std::vector<double> rmse_per_time;
  std::vector<double> rmse_per_iteration;
};

struct RunRecord {
  std::uint64_t config_hash = 0;
  std::vector<StateVector> truth;       // true trajectory over the window
  StateVector background;               // sampled background x_b
  double background_rmse = 0.0;
  std::vector<double> background_rmse_per_time;
  std::vector<MethodRecord> methods;

  const MethodRecord* find(const std::string& name) const;
};

/// Runs the synthetic-truth protocol: spin up the model for the true initial
/// state, synthesize noisy observations along the true trajectory, sample a
/// background, run each selected method and compute all RMSE series. Driver
/// failures are recorded per method without aborting the others. When
/// config.output_dir is set, appends the record to run_records.jsonl and
/// rewrites per_time_rmse.csv there.
RunRecord run_twin_experiment(const ExperimentConfig& config);

std::string serialize_run_record(const RunRecord& record);
RunRecord deserialize_run_record(const std::string& text);

/// CSV with header k,rmse_background,rmse_pod,rmse_ism,rmse_tr; methods that
/// were not run are written as nan.
void write_per_time_csv(const RunRecord& record, std::ostream& out);

/// Fast built-in invariant suite (determinism, rule tables, linear
/// exactness, gradient checks). Prints one line per check; returns false if
/// any check fails.
bool run_validation_suite(std::ostream& out);

}  // namespace da
