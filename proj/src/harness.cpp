#include "da/harness.hpp"

#include "da/rng.hpp"

#include <nlohmann/json.hpp>

#include <Eigen/SVD>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <ostream>
#include <sstream>

namespace da {

namespace {

using nlohmann::json;

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

// Substream labels for the twin-experiment protocol.
constexpr std::uint64_t kStreamSpinup = 1001;
constexpr std::uint64_t kStreamObsNoise = 1002;
constexpr std::uint64_t kStreamBackground = 1003;
constexpr std::uint64_t kStreamMasks = 1004;
constexpr std::uint64_t kStreamDrivers = 2000;

double json_double(const json& j) {
  return j.is_null() ? kNan : j.get<double>();
}

json double_json(double v) {
  return std::isnan(v) ? json(nullptr) : json(v);
}

std::vector<double> to_std(const Vector& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

Vector from_std(const std::vector<double>& v) {
  return Eigen::Map<const Vector>(v.data(), static_cast<Index>(v.size()));
}

json state_json(const StateVector& x) { return json(to_std(x)); }

StateVector state_from_json(const json& j) {
  return from_std(j.get<std::vector<double>>());
}

json trajectory_json(const std::vector<StateVector>& states) {
  json out = json::array();
  for (const StateVector& x : states) out.push_back(state_json(x));
  return out;
}

std::vector<StateVector> trajectory_from_json(const json& j) {
  std::vector<StateVector> out;
  out.reserve(j.size());
  for (const json& item : j) out.push_back(state_from_json(item));
  return out;
}

}  // namespace

void ExperimentConfig::validate() const {
  if (model.type != "lorenz96" && model.type != "linear") {
    throw ConfigurationError("unknown model type: " + model.type);
  }
  if (model.n < 1 || (model.type == "lorenz96" && model.n < 4)) {
    throw ConfigurationError("model dimension too small");
  }
  if (!(model.dt > 0.0) || model.steps_per_window < 1) {
    throw ConfigurationError("invalid model time stepping");
  }
  if (num_steps < 0) throw ConfigurationError("num_steps must be >= 0");
  if (nens < 1) throw ConfigurationError("nens must be >= 1");
  if (!(obs_fraction > 0.0 && obs_fraction <= 1.0)) {
    throw ConfigurationError("observation fraction must lie in (0, 1]");
  }
  if (static_cast<Index>(obs_fraction * double(model.n)) < 1) {
    throw ConfigurationError("observation fraction selects no components");
  }
  if (operator_count < 1) {
    throw ConfigurationError("operator count must be >= 1");
  }
  if (!(background_std > 0.0) || !(observation_std > 0.0)) {
    throw ConfigurationError("noise scales must be > 0");
  }
  if (spinup_steps < 0) throw ConfigurationError("spinup_steps must be >= 0");
  for (const std::string& m : methods) {
    if (m != "pod" && m != "ism" && m != "tr") {
      throw ConfigurationError("unknown method: " + m);
    }
  }
}

namespace {

std::string scaling_name(PodScaling s) {
  return s == PodScaling::sigma_inv_sqrt ? "sigma_inv_sqrt" : "normalized";
}

PodScaling scaling_from_name(const std::string& name) {
  if (name == "sigma_inv_sqrt") return PodScaling::sigma_inv_sqrt;
  if (name == "normalized") return PodScaling::normalized;
  throw ConfigurationError("unknown POD scaling: " + name);
}

std::string inner_name(InnerSolver s) {
  return s == InnerSolver::closed_form ? "closed_form" : "coordinate_search";
}

InnerSolver inner_from_name(const std::string& name) {
  if (name == "closed_form") return InnerSolver::closed_form;
  if (name == "coordinate_search") return InnerSolver::coordinate_search;
  throw ConfigurationError("unknown inner solver: " + name);
}

json config_json(const ExperimentConfig& c) {
  return json{
      {"model",
       {{"type", c.model.type},
        {"n", c.model.n},
        {"forcing", c.model.forcing},
        {"dt", c.model.dt},
        {"steps_per_window", c.model.steps_per_window},
        {"contraction", c.model.contraction}}},
      {"window", {{"num_steps", c.num_steps}}},
      {"ensemble", {{"nens", c.nens}, {"seed", c.seed}}},
      {"observations",
       {{"fraction", c.obs_fraction},
        {"operator_count", c.operator_count},
        {"std", c.observation_std}}},
      {"background", {{"std", c.background_std}}},
      {"spinup_steps", c.spinup_steps},
      {"methods", c.methods},
      {"pod",
       {{"energy_fraction", c.pod.energy_fraction},
        {"scaling", scaling_name(c.pod.scaling)}}},
      {"ism",
       {{"iterations", c.ism.iterations},
        {"inner", inner_name(c.ism.inner)},
        {"energy_fraction", c.ism.pod.energy_fraction},
        {"scaling", scaling_name(c.ism.pod.scaling)},
        {"csm",
         {{"step0", c.ism.csm.step0},
          {"budget_per_dim", c.ism.csm.budget_per_dim},
          {"tol", c.ism.csm.tol}}}}},
      {"tr",
       {{"params",
         {{"delta_max", c.tr.params.delta_max},
          {"delta0", c.tr.params.delta0},
          {"eta", c.tr.params.eta},
          {"theta1", c.tr.params.theta1},
          {"theta2", c.tr.params.theta2},
          {"gamma_inc", c.tr.params.gamma_inc},
          {"gamma_dec", c.tr.params.gamma_dec}}},
        {"stop",
         {{"max_iterations", c.tr.stop.max_iterations},
          {"min_delta", c.tr.stop.min_delta},
          {"min_trace_b", c.tr.stop.min_trace_b}}},
        {"use_pod_basis", c.tr.use_pod_basis},
        {"energy_fraction", c.tr.pod.energy_fraction},
        {"scaling", scaling_name(c.tr.pod.scaling)}}}};
}

template <typename T>
void maybe_get(const json& j, const char* key, T& target) {
  if (j.contains(key)) {
    target = j.at(key).get<T>();
  }
}

ExperimentConfig config_from_json(const json& j) {
  ExperimentConfig c;
  if (j.contains("model")) {
    const json& m = j.at("model");
    maybe_get(m, "type", c.model.type);
    maybe_get(m, "n", c.model.n);
    maybe_get(m, "forcing", c.model.forcing);
    maybe_get(m, "dt", c.model.dt);
    maybe_get(m, "steps_per_window", c.model.steps_per_window);
    maybe_get(m, "contraction", c.model.contraction);
  }
  if (j.contains("window")) maybe_get(j.at("window"), "num_steps", c.num_steps);
  if (j.contains("ensemble")) {
    maybe_get(j.at("ensemble"), "nens", c.nens);
    maybe_get(j.at("ensemble"), "seed", c.seed);
  }
  if (j.contains("observations")) {
    const json& o = j.at("observations");
    maybe_get(o, "fraction", c.obs_fraction);
    maybe_get(o, "operator_count", c.operator_count);
    maybe_get(o, "std", c.observation_std);
  }
  if (j.contains("background")) {
    maybe_get(j.at("background"), "std", c.background_std);
  }
  maybe_get(j, "spinup_steps", c.spinup_steps);
  maybe_get(j, "methods", c.methods);
  if (j.contains("pod")) {
    const json& pj = j.at("pod");
    maybe_get(pj, "energy_fraction", c.pod.energy_fraction);
    if (pj.contains("scaling")) {
      c.pod.scaling = scaling_from_name(pj.at("scaling").get<std::string>());
    }
  }
  if (j.contains("ism")) {
    const json& ij = j.at("ism");
    maybe_get(ij, "iterations", c.ism.iterations);
    if (ij.contains("inner")) {
      c.ism.inner = inner_from_name(ij.at("inner").get<std::string>());
    }
    maybe_get(ij, "energy_fraction", c.ism.pod.energy_fraction);
    if (ij.contains("scaling")) {
      c.ism.pod.scaling = scaling_from_name(ij.at("scaling").get<std::string>());
    }
    if (ij.contains("csm")) {
      const json& cj = ij.at("csm");
      maybe_get(cj, "step0", c.ism.csm.step0);
      maybe_get(cj, "budget_per_dim", c.ism.csm.budget_per_dim);
      maybe_get(cj, "tol", c.ism.csm.tol);
    }
  }
  if (j.contains("tr")) {
    const json& tj = j.at("tr");
    if (tj.contains("params")) {
      const json& pj = tj.at("params");
      maybe_get(pj, "delta_max", c.tr.params.delta_max);
      maybe_get(pj, "delta0", c.tr.params.delta0);
      maybe_get(pj, "eta", c.tr.params.eta);
      maybe_get(pj, "theta1", c.tr.params.theta1);
      maybe_get(pj, "theta2", c.tr.params.theta2);
      maybe_get(pj, "gamma_inc", c.tr.params.gamma_inc);
      maybe_get(pj, "gamma_dec", c.tr.params.gamma_dec);
    }
    if (tj.contains("stop")) {
      const json& sj = tj.at("stop");
      maybe_get(sj, "max_iterations", c.tr.stop.max_iterations);
      maybe_get(sj, "min_delta", c.tr.stop.min_delta);
      maybe_get(sj, "min_trace_b", c.tr.stop.min_trace_b);
    }
    maybe_get(tj, "use_pod_basis", c.tr.use_pod_basis);
    maybe_get(tj, "energy_fraction", c.tr.pod.energy_fraction);
    if (tj.contains("scaling")) {
      c.tr.pod.scaling = scaling_from_name(tj.at("scaling").get<std::string>());
    }
  }
  maybe_get(j, "output_dir", c.output_dir);
  return c;
}

}  // namespace

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw ConfigurationError("cannot open config file: " + path);
  }
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigurationError("cannot parse config file " + path + ": " + e.what());
  }
  ExperimentConfig c = config_from_json(j);
  c.validate();
  return c;
}

void save_config(const ExperimentConfig& config, const std::string& path) {
  json j = config_json(config);
  j["output_dir"] = config.output_dir;
  std::ofstream out(path);
  if (!out) {
    throw ConfigurationError("cannot write config file: " + path);
  }
  out << j.dump(2) << "\n";
}

std::uint64_t config_hash(const ExperimentConfig& config) {
  // output_dir is presentation only and excluded on purpose.
  const std::string canonical = config_json(config).dump();
  std::uint64_t hash = 0xcbf29ce484222325ULL;  // FNV-1a
  for (const unsigned char c : canonical) {
    hash ^= c;
    hash *= 0x100000001b3ULL;
  }
  return hash;
}

double rmse(const std::vector<StateVector>& truth,
            const std::vector<StateVector>& analysis) {
  if (truth.size() != analysis.size() || truth.empty()) {
    throw DimensionError("trajectories must have equal nonzero length");
  }
  const std::size_t n_steps = truth.size() - 1;  // N
  double sum = 0.0;
  for (std::size_t k = 0; k < truth.size(); ++k) {
    if (truth[k].size() != analysis[k].size()) {
      throw DimensionError("trajectory states must have equal size");
    }
    sum += (truth[k] - analysis[k]).squaredNorm();
  }
  const double divisor = n_steps == 0 ? 1.0 : double(n_steps);
  return std::sqrt(sum / divisor);
}

std::vector<double> rmse_per_time(const std::vector<StateVector>& truth,
                                  const std::vector<StateVector>& analysis) {
  if (truth.size() != analysis.size()) {
    throw DimensionError("trajectories must have equal length");
  }
  std::vector<double> out;
  out.reserve(truth.size());
  for (std::size_t k = 0; k < truth.size(); ++k) {
    out.push_back((truth[k] - analysis[k]).norm());
  }
  return out;
}

std::vector<ObservationOperator> make_observation_cycle(Index n, double fraction,
                                                        int count,
                                                        std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    throw ConfigurationError("observation fraction must lie in (0, 1]");
  }
  const Index m = static_cast<Index>(fraction * double(n));
  if (m < 1) {
    throw ConfigurationError("observation fraction selects no components");
  }
  if (count < 1) {
    throw ConfigurationError("operator count must be >= 1");
  }

  std::vector<Index> order(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
  const CounterRng rng(seed, kStreamMasks);
  std::uint64_t counter = 0;
  for (Index i = n - 1; i > 0; --i) {
    const auto j = static_cast<Index>(rng.uniform(counter++) * double(i + 1));
    std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
  }

  std::vector<ObservationOperator> masks;
  masks.reserve(static_cast<std::size_t>(count));
  for (int mask = 0; mask < count; ++mask) {
    std::vector<Index> indices(static_cast<std::size_t>(m));
    const Index offset = (static_cast<Index>(mask) * m) % n;
    for (Index i = 0; i < m; ++i) {
      indices[static_cast<std::size_t>(i)] =
          order[static_cast<std::size_t>((offset + i) % n)];
    }
    std::sort(indices.begin(), indices.end());
    masks.emplace_back(std::move(indices), n);
  }
  return masks;
}

namespace {

std::shared_ptr<const Model> make_model(const ModelConfig& mc) {
  if (mc.type == "lorenz96") {
    return std::make_shared<Lorenz96Model>(mc.n, mc.forcing, mc.dt,
                                           mc.steps_per_window);
  }
  // Fixed pseudo-random contraction: A = c * (I + 0.1 G) / |I + 0.1 G|_2.
  const CounterRng rng(derive_seed(0xA11CE5ED, static_cast<std::uint64_t>(mc.n)), 0);
  Matrix g(mc.n, mc.n);
  std::uint64_t counter = 0;
  for (Index i = 0; i < mc.n; ++i) {
    for (Index j = 0; j < mc.n; ++j) {
      g(i, j) = rng.normal(counter++);
    }
  }
  Matrix a = Matrix::Identity(mc.n, mc.n) + 0.1 * g;
  const double spectral = a.jacobiSvd().singularValues()[0];
  a *= mc.contraction / spectral;
  return std::make_shared<LinearModel>(std::move(a));
}

json iteration_json(const IterationDiag& d) {
  return json{{"cost_full", double_json(d.cost_full)},
              {"cost_surrogate_start", double_json(d.cost_surrogate_start)},
              {"cost_surrogate", double_json(d.cost_surrogate)},
              {"rho", double_json(d.rho)},
              {"delta", double_json(d.delta)},
              {"lambda_b", double_json(d.lambda_b)},
              {"accepted", d.accepted},
              {"state", state_json(d.state)}};
}

IterationDiag iteration_from_json(const json& j) {
  IterationDiag d;
  d.cost_full = json_double(j.at("cost_full"));
  d.cost_surrogate_start = json_double(j.at("cost_surrogate_start"));
  d.cost_surrogate = json_double(j.at("cost_surrogate"));
  d.rho = json_double(j.at("rho"));
  d.delta = json_double(j.at("delta"));
  d.lambda_b = json_double(j.at("lambda_b"));
  d.accepted = j.at("accepted").get<bool>();
  d.state = state_from_json(j.at("state"));
  return d;
}

json result_json(const AnalysisResult& r) {
  json iterations = json::array();
  for (const IterationDiag& d : r.iterations) iterations.push_back(iteration_json(d));
  return json{{"analysis", state_json(r.analysis)},
              {"trajectory", trajectory_json(r.trajectory)},
              {"iterations", iterations},
              {"wall_seconds", r.wall_seconds}};
}

AnalysisResult result_from_json(const json& j) {
  AnalysisResult r;
  r.analysis = state_from_json(j.at("analysis"));
  r.trajectory = trajectory_from_json(j.at("trajectory"));
  for (const json& item : j.at("iterations")) {
    r.iterations.push_back(iteration_from_json(item));
  }
  r.wall_seconds = j.at("wall_seconds").get<double>();
  return r;
}

json method_json(const MethodRecord& m) {
  return json{{"name", m.name},
              {"ok", m.ok},
              {"error", m.error},
              {"result", result_json(m.result)},
              {"rmse", double_json(m.rmse)},
              {"rmse_per_time", m.rmse_per_time},
              {"rmse_per_iteration", m.rmse_per_iteration}};
}

MethodRecord method_from_json(const json& j) {
  MethodRecord m;
  m.name = j.at("name").get<std::string>();
  m.ok = j.at("ok").get<bool>();
  m.error = j.at("error").get<std::string>();
  m.result = result_from_json(j.at("result"));
  m.rmse = json_double(j.at("rmse"));
  m.rmse_per_time = j.at("rmse_per_time").get<std::vector<double>>();
  m.rmse_per_iteration = j.at("rmse_per_iteration").get<std::vector<double>>();
  return m;
}

json record_json(const RunRecord& r) {
  json methods = json::array();
  for (const MethodRecord& m : r.methods) methods.push_back(method_json(m));
  return json{{"config_hash", r.config_hash},
              {"truth", trajectory_json(r.truth)},
              {"background", state_json(r.background)},
              {"background_rmse", r.background_rmse},
              {"background_rmse_per_time", r.background_rmse_per_time},
              {"methods", methods}};
}

RunRecord record_from_json(const json& j) {
  RunRecord r;
  r.config_hash = j.at("config_hash").get<std::uint64_t>();
  r.truth = trajectory_from_json(j.at("truth"));
  r.background = state_from_json(j.at("background"));
  r.background_rmse = j.at("background_rmse").get<double>();
  r.background_rmse_per_time =
      j.at("background_rmse_per_time").get<std::vector<double>>();
  for (const json& item : j.at("methods")) {
    r.methods.push_back(method_from_json(item));
  }
  return r;
}

}  // namespace

const MethodRecord* RunRecord::find(const std::string& name) const {
  for (const MethodRecord& m : methods) {
    if (m.name == name) return &m;
  }
  return nullptr;
}

std::string serialize_run_record(const RunRecord& record) {
  return record_json(record).dump();
}

RunRecord deserialize_run_record(const std::string& text) {
  return record_from_json(json::parse(text));
}

void write_per_time_csv(const RunRecord& record, std::ostream& out) {
  out << "k,rmse_background,rmse_pod,rmse_ism,rmse_tr\n";
  out << std::setprecision(17);
  const MethodRecord* pod = record.find("pod");
  const MethodRecord* ism = record.find("ism");
  const MethodRecord* tr = record.find("tr");
  const auto value_at = [](const MethodRecord* m, std::size_t k) {
    if (m == nullptr || !m->ok || k >= m->rmse_per_time.size()) return kNan;
    return m->rmse_per_time[k];
  };
  for (std::size_t k = 0; k < record.background_rmse_per_time.size(); ++k) {
    out << k << ',' << record.background_rmse_per_time[k] << ','
        << value_at(pod, k) << ',' << value_at(ism, k) << ',' << value_at(tr, k)
        << '\n';
  }
}

RunRecord run_twin_experiment(const ExperimentConfig& config) {
  config.validate();
  const std::shared_ptr<const Model> model = make_model(config.model);
  const Index n = model->dim();

  // Truth: spin the model up from a perturbed equilibrium.
  StateVector spin_state(n);
  {
    StateVector base = StateVector::Zero(n);
    if (const auto* l96 = dynamic_cast<const Lorenz96Model*>(model.get())) {
      base = l96->equilibrium();
    }
    const CounterRng rng(derive_seed(config.seed, kStreamSpinup), 0);
    for (Index i = 0; i < n; ++i) {
      spin_state[i] = base[i] + 0.1 * rng.normal(static_cast<std::uint64_t>(i));
    }
  }
  for (int s = 0; s < config.spinup_steps; ++s) {
    spin_state = model->step(spin_state);
  }
  const std::vector<StateVector> truth =
      run_model_trajectory(*model, spin_state, config.num_steps);

  // Observations: cycled masks, synthetic noise drawn per time index.
  const std::vector<ObservationOperator> masks = make_observation_cycle(
      n, config.obs_fraction, config.operator_count, config.seed);
  std::vector<Observation> observations;
  observations.reserve(static_cast<std::size_t>(config.num_steps) + 1);
  const double r_var = config.observation_std * config.observation_std;
  for (int k = 0; k <= config.num_steps; ++k) {
    const ObservationOperator& op =
        masks[static_cast<std::size_t>(k % config.operator_count)];
    Vector y = op.apply(truth[static_cast<std::size_t>(k)]);
    const CounterRng rng(derive_seed(config.seed, kStreamObsNoise,
                                     static_cast<std::uint64_t>(k)),
                         0);
    for (Index i = 0; i < y.size(); ++i) {
      y[i] += config.observation_std * rng.normal(static_cast<std::uint64_t>(i));
    }
    observations.emplace_back(k, std::move(y), op,
                              DiagonalCovariance::scaled_identity(op.obs_dim(), r_var));
  }

  // Background sampled about the true initial state.
  StateVector background(n);
  {
    const CounterRng rng(derive_seed(config.seed, kStreamBackground), 0);
    for (Index i = 0; i < n; ++i) {
      background[i] = truth[0][i] + config.background_std *
                                        rng.normal(static_cast<std::uint64_t>(i));
    }
  }

  AssimilationProblem problem;
  problem.model = model;
  problem.background = background;
  problem.b0 = DiagonalCovariance::scaled_identity(
      n, config.background_std * config.background_std);
  problem.observations = observations;
  problem.num_steps = config.num_steps;
  problem.nens = config.nens;
  problem.seed = derive_seed(config.seed, kStreamDrivers);

  RunRecord record;
  record.config_hash = config_hash(config);
  record.truth = truth;
  record.background = background;
  const std::vector<StateVector> background_trajectory =
      run_model_trajectory(*model, background, config.num_steps);
  record.background_rmse = rmse(truth, background_trajectory);
  record.background_rmse_per_time = rmse_per_time(truth, background_trajectory);

  for (const std::string& name : config.methods) {
    MethodRecord mr;
    mr.name = name;
    try {
      if (name == "pod") {
        mr.result = run_pod_4denkf(problem, config.pod);
      } else if (name == "ism") {
        mr.result = run_ism(problem, config.ism);
      } else {
        mr.result = run_tr_4denkf(problem, config.tr);
      }
      mr.ok = true;
      mr.rmse = rmse(truth, mr.result.trajectory);
      mr.rmse_per_time = rmse_per_time(truth, mr.result.trajectory);
      for (const IterationDiag& diag : mr.result.iterations) {
        mr.rmse_per_iteration.push_back(
            rmse(truth, run_model_trajectory(*model, diag.state, config.num_steps)));
      }
    } catch (const std::exception& e) {
      mr.ok = false;
      mr.error = e.what();
    }
    record.methods.push_back(std::move(mr));
  }

  if (!config.output_dir.empty()) {
    const std::filesystem::path dir(config.output_dir);
    std::filesystem::create_directories(dir);
    {
      std::ofstream out(dir / "run_records.jsonl", std::ios::app);
      if (!out) {
        throw ConfigurationError("cannot write to " + config.output_dir);
      }
      out << serialize_run_record(record) << "\n";
    }
    {
      std::ofstream out(dir / "per_time_rmse.csv");
      write_per_time_csv(record, out);
    }
  }
  return record;
}

namespace {

bool report(std::ostream& out, const std::string& name, bool ok) {
  out << (ok ? "[ok]   " : "[FAIL] ") << name << "\n";
  return ok;
}

}  // namespace

bool run_validation_suite(std::ostream& out) {
  bool all = true;
  const TRParams params;  // paper defaults

  all &= report(out, "radius rule table",
                update_radius(10.0, 0.1, params) == 5.0 &&
                    update_radius(10.0, 0.8, params) == 14.0 &&
                    update_radius(10.0, 1.5, params) == 10.0 &&
                    update_radius(90.0, 0.9, params) == 100.0);

  all &= report(out, "solution rule table", [&] {
    StateVector current(1), trial(1);
    current << 1.0;
    trial << 2.0;
    return update_solution(current, trial, 0.05, 0.1) == current &&
           update_solution(current, trial, 0.5, 0.1) == trial &&
           update_solution(current, trial, 0.1, 0.1) == current;
  }());

  all &= report(out, "covariance scale limits",
                covariance_scale(0.0, 100.0) == 1.0 &&
                    covariance_scale(100.0, 100.0) == 0.5 &&
                    std::abs(covariance_scale(25.0, 100.0) - 0.8) < 1e-15);

  all &= report(out, "reduced gradient matches finite differences", [&] {
    const CounterRng rng(7, 0);
    std::uint64_t c = 0;
    const Index n = 6;
    const int nens = 3;
    Matrix members(n, nens + 1);
    for (Index i = 0; i < members.size(); ++i) {
      members.data()[i] = rng.normal(c++);
    }
    Ensemble e{members, 0};
    LinearModel model(Matrix::Identity(n, n) * 0.9);
    const SnapshotMatrix snaps = propagate_ensemble(model, e, 2);
    const AnomalyBasis basis = build_anomaly_basis(snaps);
    StateVector xb(n);
    for (Index i = 0; i < n; ++i) xb[i] = rng.normal(c++);
    std::vector<Observation> obs;
    Vector y(2);
    y << rng.normal(c++), rng.normal(c++);
    obs.emplace_back(1, y, ObservationOperator({0, 3}, n),
                     DiagonalCovariance::scaled_identity(2, 0.5));
    const ReducedProblem rp = build_ensemble_problem(
        basis, xb, DiagonalCovariance::scaled_identity(n, 0.2), obs);
    Vector w(nens);
    w << 0.3, -0.2, 0.1;
    const Vector grad = ensemble_grad(rp, w);
    for (Index i = 0; i < w.size(); ++i) {
      const double h = 1e-5 * (1.0 + std::abs(w[i]));
      Vector wp = w, wm = w;
      wp[i] += h;
      wm[i] -= h;
      const double fd = (ensemble_cost(rp, wp) - ensemble_cost(rp, wm)) / (2 * h);
      if (std::abs(fd - grad[i]) > 1e-6 * (1.0 + std::abs(grad[i]))) return false;
    }
    const Vector wstar = solve_weights(rp);
    const Vector g0 = ensemble_grad(rp, Vector::Zero(nens));
    return ensemble_grad(rp, wstar).lpNorm<Eigen::Infinity>() <=
           1e-8 * (1.0 + g0.lpNorm<Eigen::Infinity>());
  }());

  all &= report(out, "subproblem boundary case", [&] {
    Vector grad(1), w(1);
    grad << -1.0;
    w << 0.0;
    Matrix hess(1, 1), p(1, 1);
    hess << 1.0;
    p << 1.0;
    const SubproblemSolution sol =
        solve_subproblem(grad, hess, w, SubspaceMetric(p), 0.5);
    return std::abs(sol.step[0] - 0.5) < 1e-8 && std::abs(sol.lambda - 0.5) < 1e-6;
  }());

  all &= report(out, "twin experiment determinism", [&] {
    ExperimentConfig cfg;
    cfg.model.n = 8;
    cfg.num_steps = 3;
    cfg.nens = 5;
    cfg.spinup_steps = 50;
    cfg.methods = {"pod"};
    cfg.seed = 11;
    RunRecord a = run_twin_experiment(cfg);
    RunRecord b = run_twin_experiment(cfg);
    for (MethodRecord& m : a.methods) m.result.wall_seconds = 0.0;
    for (MethodRecord& m : b.methods) m.result.wall_seconds = 0.0;
    return serialize_run_record(a) == serialize_run_record(b);
  }());

  all &= report(out, "linear model exactness (rho = 1)", [&] {
    ExperimentConfig cfg;
    cfg.model.type = "linear";
    cfg.model.n = 6;
    cfg.num_steps = 3;
    cfg.nens = 8;
    cfg.spinup_steps = 20;
    cfg.background_std = 0.5;
    cfg.methods = {"tr"};
    cfg.tr.stop.max_iterations = 3;
    cfg.seed = 3;
    const RunRecord record = run_twin_experiment(cfg);
    const MethodRecord* tr = record.find("tr");
    if (tr == nullptr || !tr->ok) return false;
    for (const IterationDiag& diag : tr->result.iterations) {
      if (std::abs(diag.rho - 1.0) > 1e-8) return false;
    }
    return true;
  }());

  all &= report(out, "POD equals one closed-form ISM iteration", [&] {
    ExperimentConfig cfg;
    cfg.model.n = 8;
    cfg.num_steps = 3;
    cfg.nens = 5;
    cfg.spinup_steps = 50;
    cfg.ism.iterations = 1;
    cfg.ism.inner = InnerSolver::closed_form;
    cfg.methods = {"pod", "ism"};
    cfg.seed = 5;
    const RunRecord record = run_twin_experiment(cfg);
    const MethodRecord* pod = record.find("pod");
    const MethodRecord* ism = record.find("ism");
    if (pod == nullptr || ism == nullptr || !pod->ok || !ism->ok) return false;
    return pod->result.analysis == ism->result.analysis &&
           pod->rmse == ism->rmse;
  }());

  return all;
}

}  // namespace da
