#include "ddsim/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>
#include <thread>

#include "ddsim/errors.hpp"
#include "ddsim/version.hpp"
#include "json.hpp"

namespace ddsim {

namespace fs = std::filesystem;

namespace {

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

std::uint64_t fnv1a(const std::string& data) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : data) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

std::string csv_header() { return "t,L,sigma_z,concurrence,trace_distance,norm_drift"; }

std::string kind_name(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::DeriveSequences: return "DeriveSequences";
    case ExperimentKind::EchoCurve: return "EchoCurve";
    case ExperimentKind::ConcurrenceCurve: return "ConcurrenceCurve";
    case ExperimentKind::RelaxationCurve: return "RelaxationCurve";
    case ExperimentKind::InsertionComparison: return "InsertionComparison";
    case ExperimentKind::EffectiveDynamics: return "EffectiveDynamics";
    case ExperimentKind::NopSweep: return "NopSweep";
    case ExperimentKind::OracleCrossCheck: return "OracleCrossCheck";
    case ExperimentKind::SlopeCheck: return "SlopeCheck";
  }
  throw ValidationError("bad experiment kind");
}

ExperimentKind kind_from_name(const std::string& name) {
  static const std::map<std::string, ExperimentKind> names = {
      {"DeriveSequences", ExperimentKind::DeriveSequences},
      {"EchoCurve", ExperimentKind::EchoCurve},
      {"ConcurrenceCurve", ExperimentKind::ConcurrenceCurve},
      {"RelaxationCurve", ExperimentKind::RelaxationCurve},
      {"InsertionComparison", ExperimentKind::InsertionComparison},
      {"EffectiveDynamics", ExperimentKind::EffectiveDynamics},
      {"NopSweep", ExperimentKind::NopSweep},
      {"OracleCrossCheck", ExperimentKind::OracleCrossCheck},
      {"SlopeCheck", ExperimentKind::SlopeCheck},
  };
  auto it = names.find(name);
  if (it == names.end()) throw ValidationError("unknown experiment kind '" + name + "'");
  return it->second;
}

std::vector<double> GridSpec::values() const {
  return logspace ? log_grid(lo, hi, n) : linear_grid(lo, hi, n);
}

void ExperimentSpec::validate() const {
  model.validate();
  if (n_cycles < 1) throw ValidationError("n_cycles must be >= 1");
  if (samples < 2) throw ValidationError("samples must be >= 2");
  if (dt < 0.001 || dt > 0.05) throw ValidationError("dt must lie in [0.001, 0.05]");
  if (mode == PulseMode::FiniteWidth && !(b_tesla > 0))
    throw ValidationError("finite-width mode needs B_tesla > 0");
  if (curve != "within_cycle" && curve != "period_sweep")
    throw ValidationError("curve must be within_cycle or period_sweep");
  if (initial != "plus_x" && initial != "up" && initial != "bell" && initial != "product")
    throw ValidationError("initial must be plus_x, up, bell or product");
  if (bath_state != "ground" && bath_state != "excited")
    throw ValidationError("bath_state must be ground or excited");
  if (observable != "echo" && observable != "concurrence" && observable != "sigma_z")
    throw ValidationError("observable must be echo, concurrence or sigma_z");
  if (kind == ExperimentKind::ConcurrenceCurve && model.n_qubits() != 2)
    throw ValidationError("concurrence experiments need two qubit sites");
  if (kind == ExperimentKind::OracleCrossCheck &&
      (model.coupling != Coupling::IsingZ || model.delta != 0))
    throw ValidationError("oracle cross-check requires Ising coupling at delta = 0");
  if (kind == ExperimentKind::InsertionComparison && theta_list.empty())
    throw ValidationError("insertion comparison needs a theta_list");
  if (kind == ExperimentKind::NopSweep && (b_list.empty() || sequences.empty()))
    throw ValidationError("N_op sweep needs b_list and sequences");
  if (kind == ExperimentKind::SlopeCheck && sequences.empty())
    throw ValidationError("slope check needs sequences");
}

namespace {

std::string mode_name(PulseMode m) {
  return m == PulseMode::FiniteWidth ? "finite" : "ideal";
}

std::string insertion_name(ComputingInsertion c) {
  switch (c) {
    case ComputingInsertion::None: return "none";
    case ComputingInsertion::ConstantField: return "constant_field";
    case ComputingInsertion::MidCycle: return "mid_cycle";
    case ComputingInsertion::AfterCycle: return "after_cycle";
  }
  throw ValidationError("bad insertion");
}

ComputingInsertion insertion_from_name(const std::string& s) {
  if (s == "none") return ComputingInsertion::None;
  if (s == "constant_field") return ComputingInsertion::ConstantField;
  if (s == "mid_cycle") return ComputingInsertion::MidCycle;
  if (s == "after_cycle") return ComputingInsertion::AfterCycle;
  throw ValidationError("unknown insertion '" + s + "'");
}

std::vector<std::string> split_list(const std::string& v) {
  std::string s = v;
  std::replace(s.begin(), s.end(), ',', ' ');
  std::istringstream is(s);
  std::vector<std::string> out;
  std::string tok;
  while (is >> tok) out.push_back(tok);
  return out;
}

GridSpec parse_grid(const std::string& v) {
  // lo:hi:n[:log|:linear]
  std::vector<std::string> parts;
  std::string s = v;
  std::replace(s.begin(), s.end(), ':', ' ');
  std::istringstream is(s);
  std::string tok;
  while (is >> tok) parts.push_back(tok);
  if (parts.size() < 3 || parts.size() > 4)
    throw ValidationError("grid must be lo:hi:n[:log]");
  GridSpec g;
  g.lo = std::stod(parts[0]);
  g.hi = std::stod(parts[1]);
  g.n = std::stoi(parts[2]);
  g.logspace = parts.size() == 4 && parts[3] == "log";
  if (parts.size() == 4 && parts[3] != "log" && parts[3] != "linear")
    throw ValidationError("grid scale must be log or linear");
  return g;
}

std::string grid_string(const GridSpec& g) {
  return format_double(g.lo) + ":" + format_double(g.hi) + ":" + std::to_string(g.n) +
         (g.logspace ? ":log" : ":linear");
}

}  // namespace

ExperimentSpec parse_experiment(const std::string& text, const std::string& name) {
  ExperimentSpec spec;
  spec.model.qubit_sites.clear();
  bool have_sites = false;
  auto fail = [&](int ln, const std::string& msg) {
    throw ValidationError(name + ":" + std::to_string(ln) + ": " + msg);
  };
  std::istringstream is(text);
  std::string line;
  int ln = 0;
  while (std::getline(is, line)) {
    ++ln;
    auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::string body = line;
    std::replace(body.begin(), body.end(), '=', ' ');
    std::istringstream ls(body);
    std::string key, value;
    ls >> key;
    std::getline(ls, value);
    value.erase(0, value.find_first_not_of(" \t"));
    value.erase(value.find_last_not_of(" \t\r") + 1);
    if (value.empty()) fail(ln, "missing value for '" + key + "'");
    try {
      if (key == "kind") spec.kind = kind_from_name(value);
      else if (key == "L") spec.model.chain_length = std::stoi(value);
      else if (key == "J") spec.model.J = std::stod(value);
      else if (key == "delta") spec.model.delta = std::stod(value);
      else if (key == "epsilon") spec.model.epsilon = std::stod(value);
      else if (key == "coupling") {
        if (value == "ising" || value == "ising_z") spec.model.coupling = Coupling::IsingZ;
        else if (value == "heisenberg") spec.model.coupling = Coupling::Heisenberg;
        else fail(ln, "coupling must be 'ising' or 'heisenberg'");
      } else if (key == "qubit_sites") {
        if (value == "center") {
          spec.model.qubit_sites = {spec.model.chain_length / 2};
        } else if (value == "adjacent_pair") {
          spec.model.qubit_sites = {spec.model.chain_length / 2 - 1,
                                    spec.model.chain_length / 2};
        } else if (value == "separated_pair") {
          spec.model.qubit_sites = {spec.model.chain_length / 4,
                                    3 * spec.model.chain_length / 4};
        } else {
          spec.model.qubit_sites.clear();
          for (auto& tok : split_list(value))
            spec.model.qubit_sites.push_back(std::stoi(tok));
        }
        have_sites = true;
      } else if (key == "boundary") {
        if (value != "open") fail(ln, "only open boundary conditions are supported");
      } else if (key == "sequence") spec.sequence = value;
      else if (key == "sequences") spec.sequences = split_list(value);
      else if (key == "mode") {
        if (value == "ideal") spec.mode = PulseMode::Ideal;
        else if (value == "finite") spec.mode = PulseMode::FiniteWidth;
        else fail(ln, "mode must be ideal or finite");
      } else if (key == "B_tesla") spec.b_tesla = std::stod(value);
      else if (key == "period") spec.period = value;
      else if (key == "n_cycles") spec.n_cycles = std::stoi(value);
      else if (key == "insertion") spec.insertion = insertion_from_name(value);
      else if (key == "theta") spec.theta = std::stod(value);
      else if (key == "engine") {
        if (value == "auto") spec.engine = EngineKind::Auto;
        else if (value == "dense") spec.engine = EngineKind::Dense;
        else if (value == "trotter") spec.engine = EngineKind::Trotter;
        else fail(ln, "engine must be auto, dense or trotter");
      } else if (key == "dt") spec.dt = std::stod(value);
      else if (key == "initial") spec.initial = value;
      else if (key == "bath_state") spec.bath_state = value;
      else if (key == "observable") spec.observable = value;
      else if (key == "samples") spec.samples = std::stoi(value);
      else if (key == "curve") spec.curve = value;
      else if (key == "T_grid") spec.t_grid = parse_grid(value);
      else if (key == "B_list") {
        spec.b_list.clear();
        for (auto& tok : split_list(value)) spec.b_list.push_back(std::stod(tok));
      } else if (key == "theta_list") {
        spec.theta_list.clear();
        for (auto& tok : split_list(value)) spec.theta_list.push_back(std::stod(tok));
      } else if (key == "L_list") {
        spec.l_list.clear();
        for (auto& tok : split_list(value)) spec.l_list.push_back(std::stoi(tok));
      } else if (key == "order") spec.order = std::stoi(value);
      else if (key == "pattern") spec.pattern = value;
      else if (key == "seed") spec.seed = std::stoull(value);
      else if (key == "n_starts") spec.n_starts = std::stoi(value);
      else if (key == "label") spec.label = value;
      else fail(ln, "unknown key '" + key + "'");
    } catch (const ValidationError&) {
      throw;
    } catch (const std::exception&) {
      fail(ln, "cannot parse value '" + value + "' for '" + key + "'");
    }
  }
  if (!have_sites) spec.model.qubit_sites = {spec.model.chain_length / 2};
  spec.validate();
  return spec;
}

std::string serialize_experiment(const ExperimentSpec& spec) {
  std::ostringstream os;
  os << "kind = " << kind_name(spec.kind) << "\n";
  os << "L = " << spec.model.chain_length << "\n";
  os << "J = " << format_double(spec.model.J) << "\n";
  os << "delta = " << format_double(spec.model.delta) << "\n";
  os << "coupling = "
     << (spec.model.coupling == Coupling::IsingZ ? "ising" : "heisenberg") << "\n";
  os << "epsilon = " << format_double(spec.model.epsilon) << "\n";
  os << "qubit_sites = ";
  for (std::size_t i = 0; i < spec.model.qubit_sites.size(); ++i)
    os << (i ? "," : "") << spec.model.qubit_sites[i];
  os << "\n";
  os << "boundary = open\n";
  os << "sequence = " << spec.sequence << "\n";
  if (!spec.sequences.empty()) {
    os << "sequences = ";
    for (std::size_t i = 0; i < spec.sequences.size(); ++i)
      os << (i ? "," : "") << spec.sequences[i];
    os << "\n";
  }
  os << "mode = " << mode_name(spec.mode) << "\n";
  if (spec.b_tesla > 0) os << "B_tesla = " << format_double(spec.b_tesla) << "\n";
  os << "period = " << spec.period << "\n";
  os << "n_cycles = " << spec.n_cycles << "\n";
  os << "insertion = " << insertion_name(spec.insertion) << "\n";
  if (spec.theta != 0) os << "theta = " << format_double(spec.theta) << "\n";
  os << "engine = "
     << (spec.engine == EngineKind::Auto ? "auto"
         : spec.engine == EngineKind::Dense ? "dense" : "trotter") << "\n";
  os << "dt = " << format_double(spec.dt) << "\n";
  os << "initial = " << spec.initial << "\n";
  os << "bath_state = " << spec.bath_state << "\n";
  os << "observable = " << spec.observable << "\n";
  os << "samples = " << spec.samples << "\n";
  os << "curve = " << spec.curve << "\n";
  if (spec.t_grid) os << "T_grid = " << grid_string(*spec.t_grid) << "\n";
  if (!spec.b_list.empty()) {
    os << "B_list = ";
    for (std::size_t i = 0; i < spec.b_list.size(); ++i)
      os << (i ? "," : "") << format_double(spec.b_list[i]);
    os << "\n";
  }
  if (!spec.theta_list.empty()) {
    os << "theta_list = ";
    for (std::size_t i = 0; i < spec.theta_list.size(); ++i)
      os << (i ? "," : "") << format_double(spec.theta_list[i]);
    os << "\n";
  }
  if (!spec.l_list.empty()) {
    os << "L_list = ";
    for (std::size_t i = 0; i < spec.l_list.size(); ++i)
      os << (i ? "," : "") << spec.l_list[i];
    os << "\n";
  }
  os << "order = " << spec.order << "\n";
  os << "pattern = " << spec.pattern << "\n";
  os << "seed = " << spec.seed << "\n";
  os << "n_starts = " << spec.n_starts << "\n";
  os << "label = " << spec.label << "\n";
  return os.str();
}

ExperimentSpec load_experiment(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ValidationError("cannot open config file: " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_experiment(ss.str(), path);
}

std::pair<DDSequence, int> resolve_sequence(const std::string& token) {
  if (token == "free") return {DDSequence::make({}, {1.0}), 0};
  auto colon = token.find(':');
  std::string head = token.substr(0, colon);
  std::string rest = colon == std::string::npos ? "" : token.substr(colon + 1);
  if (head == "catalog") return {catalog_sequence(rest), catalog_order(rest)};
  if (head == "udd") {
    auto parts = split_list(rest);
    std::replace(rest.begin(), rest.end(), ':', ',');
    parts = split_list(rest);
    if (parts.empty()) throw ValidationError("udd needs a pulse count: udd:N[:axis]");
    int n = std::stoi(parts[0]);
    PulseAxis axis = parts.size() > 1 ? axis_from_char(parts[1][0]) : PulseAxis::X;
    return {udd_sequence(n, 1.0, axis), -1};
  }
  if (head == "qdd") {
    if (rest.empty()) throw ValidationError("qdd needs an order: qdd:N");
    return {qdd_sequence(std::stoi(rest), 1.0), -1};
  }
  if (head == "file") {
    auto [seq, order] = read_sequence_file(rest);
    return {seq, order};
  }
  throw ValidationError("unknown sequence token '" + token + "'");
}

namespace {

struct Prepared {
  DDSequence seq;
  int order = -1;
  double tau_p = 0;   // J tau_p
  double period = 0;  // J T
};

Prepared prepare_sequence(const ExperimentSpec& spec, const std::string& token,
                          std::optional<double> period_override = {}) {
  Prepared p;
  std::tie(p.seq, p.order) = resolve_sequence(token);
  if (spec.mode == PulseMode::FiniteWidth)
    p.tau_p = pulse_width_from_field(spec.model.J, spec.b_tesla);
  if (period_override) {
    p.period = *period_override;
  } else if (spec.period == "tc") {
    if (!(p.tau_p > 0))
      throw ValidationError("period 'tc' needs finite-width mode with B_tesla");
    p.period = p.seq.t_c(p.tau_p);
  } else {
    p.period = std::stod(spec.period);
  }
  p.seq = p.seq.with_period(p.period).with_pulse_width(p.tau_p);
  return p;
}

Eigen::VectorXcd initial_qubit_part(const ExperimentSpec& spec) {
  if (spec.initial == "plus_x") return qubit_plus_x();
  if (spec.initial == "up") return qubit_up();
  if (spec.initial == "bell") return bell_phi_plus();
  return two_qubit_up_up();
}

QuantumState initial_state(const ExperimentSpec& spec) {
  int n_states = spec.bath_state == "excited" ? 2 : 1;
  auto eigs = ground_state(spec.model, n_states);
  const Eigen::VectorXcd& bath = eigs[n_states - 1].state;
  Eigen::VectorXcd qubit = initial_qubit_part(spec);
  if ((spec.model.n_qubits() == 1) != (qubit.size() == 2))
    throw ValidationError("initial state '" + spec.initial +
                          "' does not match the qubit count");
  return {compose_initial(joint_space(spec.model), qubit, bath), 0.0};
}

struct Row {
  double t = kNan, echo = kNan, sigma_z = kNan, conc = kNan, dist = kNan,
         drift = kNan;
};

void write_rows(const std::string& path, const std::vector<Row>& rows) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ValidationError("cannot write " + path);
  os << csv_header() << "\n";
  for (const auto& r : rows)
    os << format_double(r.t) << "," << format_double(r.echo) << ","
       << format_double(r.sigma_z) << "," << format_double(r.conc) << ","
       << format_double(r.dist) << "," << format_double(r.drift) << "\n";
}

Row observe(const ExperimentSpec& spec, const QuantumState& st,
            const HilbertSpace& space) {
  Row row;
  row.t = st.time;
  row.drift = st.norm_drift();
  if (spec.model.n_qubits() == 1) {
    ReducedDensity rho = reduced_density(st, space, {0});
    row.echo = loschmidt_echo(rho);
    row.sigma_z = magnetization(rho);
  } else {
    ReducedDensity rho = reduced_density(st, space, {0, 1});
    row.conc = concurrence(rho);
  }
  return row;
}

// worker pool over an index range with deterministic slot assignment
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& fn) {
  unsigned hw = std::thread::hardware_concurrency();
  unsigned n_threads = std::min<std::size_t>(hw ? hw : 1, count);
  if (n_threads <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto work = [&] {
    for (;;) {
      std::size_t i = next.fetch_add(1);
      if (i >= count) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  for (unsigned t = 1; t < n_threads; ++t) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

struct PipelineResult {
  std::vector<std::string> outputs;
  std::map<std::string, double> tolerances;
};

PipelineResult run_derive(const ExperimentSpec& spec, const std::string& out_dir) {
  PipelineResult res;
  SolverOptions opts;
  opts.seed = spec.seed;
  opts.n_starts = spec.n_starts;

  std::vector<std::pair<std::vector<PulseAxis>, DDSequence>> found;
  if (spec.pattern == "census") {
    for (auto& entry : solution_census(spec.order, opts))
      found.emplace_back(entry.pattern, entry.sequence);
  } else {
    auto pattern = parse_axes(spec.pattern);
    for (auto& seq : solve_intervals(spec.order, pattern, opts))
      found.emplace_back(pattern, seq);
  }

  std::string csv = out_dir + "/" + spec.label + "_solutions.csv";
  std::ofstream os(csv, std::ios::binary);
  if (!os) throw ValidationError("cannot write " + csv);
  os << "order,axes,parity,verified_order,alphas\n";
  int idx = 0;
  for (auto& [pattern, seq] : found) {
    os << spec.order << "," << axes_string(pattern) << ","
       << axis_char(seq.parity_axis) << "," << verify_order(seq) << ",";
    for (std::size_t i = 0; i < seq.intervals.size(); ++i)
      os << (i ? ";" : "") << format_double(seq.intervals[i]);
    os << "\n";
    std::string seq_path =
        out_dir + "/" + spec.label + "_sol" + std::to_string(idx++) + ".seq";
    write_sequence_file(seq_path, seq, spec.order);
    res.outputs.push_back(seq_path);
  }
  os.close();
  res.outputs.insert(res.outputs.begin(), csv);
  res.tolerances["n_solutions"] = static_cast<double>(found.size());
  return res;
}

PipelineResult run_curve(const ExperimentSpec& spec, const std::string& out_dir) {
  PipelineResult res;
  HilbertSpace space = joint_space(spec.model);
  EngineOptions engine{spec.engine, spec.dt};
  QuantumState psi0 = initial_state(spec);

  std::vector<Row> rows;
  if (spec.curve == "within_cycle") {
    Prepared p = prepare_sequence(spec, spec.sequence);
    Schedule sched{p.seq, spec.mode, spec.insertion, spec.theta, spec.n_cycles};
    auto times = linear_grid(0.0, p.period * spec.n_cycles, spec.samples);
    auto states = evolve_sequence(psi0, sched, spec.model, times, engine);
    for (const auto& st : states) rows.push_back(observe(spec, st, space));
  } else {
    if (!spec.t_grid) throw ValidationError("period_sweep needs T_grid");
    auto periods = spec.t_grid->values();
    rows.resize(periods.size());
    parallel_for(periods.size(), [&](std::size_t i) {
      Prepared p = prepare_sequence(spec, spec.sequence, periods[i]);
      Schedule sched{p.seq, spec.mode, spec.insertion, spec.theta, 1};
      auto rhos = run_periodic(psi0, sched, spec.model, engine);
      Row row;
      row.t = periods[i];
      row.drift = 0;
      if (spec.model.n_qubits() == 1) {
        row.echo = loschmidt_echo(rhos.back());
        row.sigma_z = magnetization(rhos.back());
      } else {
        row.conc = concurrence(rhos.back());
      }
      rows[i] = row;
    });
  }
  std::string csv = out_dir + "/" + spec.label + "_curve.csv";
  write_rows(csv, rows);
  res.outputs.push_back(csv);
  return res;
}

PipelineResult run_insertion(const ExperimentSpec& spec, const std::string& out_dir) {
  PipelineResult res;
  HilbertSpace space = joint_space(spec.model);
  if (spec.model.n_qubits() != 1)
    throw ValidationError("insertion comparison runs on a single qubit");
  EngineOptions engine{spec.engine, spec.dt};
  QuantumState psi0 = initial_state(spec);
  Prepared p = prepare_sequence(spec, spec.sequence);

  const ComputingInsertion schemes[3] = {ComputingInsertion::ConstantField,
                                         ComputingInsertion::MidCycle,
                                         ComputingInsertion::AfterCycle};
  struct Item {
    double theta;
    ComputingInsertion scheme;
    double dist;
  };
  std::vector<Item> items;
  for (double th : spec.theta_list)
    for (auto scheme : schemes) items.push_back({th, scheme, 0});

  ReducedDensity rho_q0 = reduced_density(psi0, space, {0});
  parallel_for(items.size(), [&](std::size_t i) {
    auto& item = items[i];
    Schedule sched{p.seq, spec.mode, item.scheme, item.theta, 1};
    auto rhos = run_periodic(psi0, sched, spec.model, engine);
    // target: the computing rotation applied cleanly to the initial qubit
    Eigen::Matrix2cd r = (std::cos(0.5 * item.theta) * Eigen::Matrix2cd::Identity() -
                          cxd(0, 1) * std::sin(0.5 * item.theta) * pauli(PulseAxis::X));
    ReducedDensity target = r * rho_q0 * r.adjoint();
    item.dist = trace_distance(rhos.back(), target);
  });

  std::string csv = out_dir + "/" + spec.label + "_insertion.csv";
  std::ofstream os(csv, std::ios::binary);
  if (!os) throw ValidationError("cannot write " + csv);
  os << "theta,scheme,trace_distance\n";
  for (auto& item : items)
    os << format_double(item.theta) << "," << insertion_name(item.scheme) << ","
       << format_double(item.dist) << "\n";
  res.outputs.push_back(csv);
  return res;
}

PipelineResult run_effective(const ExperimentSpec& spec, const std::string& out_dir) {
  PipelineResult res;
  EngineOptions engine{spec.engine, spec.dt};
  QuantumState psi0 = initial_state(spec);
  Prepared p = prepare_sequence(spec, spec.sequence);
  Schedule sched{p.seq, spec.mode, spec.insertion, spec.theta, spec.n_cycles};
  auto rhos = run_periodic(psi0, sched, spec.model, engine);
  std::vector<Row> rows(rhos.size());
  for (std::size_t n = 0; n < rhos.size(); ++n) {
    Row& row = rows[n];
    row.t = p.period * static_cast<double>(n);
    row.drift = 0;
    if (spec.model.n_qubits() == 1) {
      row.echo = loschmidt_echo(rhos[n]);
      row.sigma_z = magnetization(rhos[n]);
    } else {
      row.conc = concurrence(rhos[n]);
    }
  }
  std::string csv = out_dir + "/" + spec.label + "_strobe.csv";
  write_rows(csv, rows);
  res.outputs.push_back(csv);
  return res;
}

std::vector<double> strobe_observable(const ExperimentSpec& spec,
                                      const std::vector<ReducedDensity>& rhos) {
  std::vector<double> obs;
  obs.reserve(rhos.size());
  for (const auto& rho : rhos) {
    if (spec.observable == "concurrence") obs.push_back(concurrence(rho));
    else if (spec.observable == "sigma_z") obs.push_back(magnetization(rho));
    else obs.push_back(loschmidt_echo(rho));
  }
  return obs;
}

PipelineResult run_nop_sweep(const ExperimentSpec& spec, const std::string& out_dir) {
  PipelineResult res;
  EngineOptions engine{spec.engine, spec.dt};
  QuantumState psi0 = initial_state(spec);

  struct Cell {
    NopResult nop;
    double area = 0;
  };
  const std::size_t nb = spec.b_list.size(), ns = spec.sequences.size();
  std::vector<Cell> table(nb * ns);
  parallel_for(nb * ns, [&](std::size_t idx) {
    std::size_t bi = idx / ns, si = idx % ns;
    ExperimentSpec local = spec;
    local.b_tesla = spec.b_list[bi];
    local.mode = PulseMode::FiniteWidth;
    Prepared p = prepare_sequence(local, spec.sequences[si]);
    Schedule sched{p.seq, PulseMode::FiniteWidth, ComputingInsertion::None, 0,
                   spec.n_cycles};
    auto rhos = run_periodic(psi0, sched, spec.model, engine);
    auto obs = strobe_observable(spec, rhos);
    Cell cell;
    cell.nop = n_op(obs);
    for (double v : obs) cell.area += v;
    table[idx] = cell;
  });

  std::string csv = out_dir + "/" + spec.label + "_nop.csv";
  std::ofstream os(csv, std::ios::binary);
  if (!os) throw ValidationError("cannot write " + csv);
  os << "B_tesla,sequence,reached,n_op,n_op_interp,area\n";
  for (std::size_t bi = 0; bi < nb; ++bi)
    for (std::size_t si = 0; si < ns; ++si) {
      const Cell& c = table[bi * ns + si];
      os << format_double(spec.b_list[bi]) << "," << spec.sequences[si] << ","
         << (c.nop.reached ? 1 : 0) << "," << c.nop.n_cycles << ","
         << format_double(c.nop.n_interp) << "," << format_double(c.area) << "\n";
    }
  res.outputs.push_back(csv);
  return res;
}

PipelineResult run_crosscheck(const ExperimentSpec& spec, const std::string& out_dir) {
  PipelineResult res;
  std::vector<int> lengths = spec.l_list;
  if (lengths.empty()) lengths = {spec.model.chain_length};
  GridSpec grid = spec.t_grid.value_or(GridSpec{0.0, 2.0, 41, false});
  auto times = grid.values();

  std::string csv = out_dir + "/" + spec.label + "_crosscheck.csv";
  std::ofstream os(csv, std::ios::binary);
  if (!os) throw ValidationError("cannot write " + csv);
  os << "L,t,L_det,L_manybody,abs_diff\n";
  double worst = 0;
  std::vector<std::string> oracle_csvs;
  for (int length : lengths) {
    ExperimentSpec local = spec;
    local.model.chain_length = length;
    local.model.qubit_sites = {length / 2};
    local.model.validate();
    const int site = local.model.qubit_sites[0];

    auto h = free_fermion::single_particle_matrices(length, local.model.J,
                                                    local.model.epsilon, site);
    Eigen::MatrixXd r = free_fermion::correlation_matrix(h);

    HilbertSpace space = joint_space(local.model);
    QuantumState psi0 = initial_state(local);
    TermList terms = bath_terms(local.model, 1);
    TermList inter = interaction_terms(local.model);
    terms.insert(terms.end(), inter.begin(), inter.end());

    QuantumState st = psi0;
    double t_cur = 0;
    std::vector<Row> oracle_rows;
    for (double t : times) {
      if (t > t_cur) {
        int steps = std::max(1, static_cast<int>(std::llround((t - t_cur) / spec.dt)));
        st = trotter_evolve(st, space, terms, (t - t_cur) / steps, steps);
        t_cur = t;
      }
      double l_mb = loschmidt_echo(reduced_density(st, space, {0}));
      double l_det = free_fermion::loschmidt_det(r, h, t);
      double diff = std::abs(l_mb - l_det);
      worst = std::max(worst, diff);
      os << length << "," << format_double(t) << "," << format_double(l_det) << ","
         << format_double(l_mb) << "," << format_double(diff) << "\n";
      Row row;
      row.t = t;
      row.echo = l_det;
      row.drift = 0;
      oracle_rows.push_back(row);
    }
    // determinant curve in the shared trajectory schema for plotting tools
    std::string oracle_csv = out_dir + "/" + spec.label + "_oracle_L" +
                             std::to_string(length) + ".csv";
    write_rows(oracle_csv, oracle_rows);
    oracle_csvs.push_back(oracle_csv);
  }
  res.outputs.push_back(csv);
  res.outputs.insert(res.outputs.end(), oracle_csvs.begin(), oracle_csvs.end());
  res.tolerances["max_abs_diff"] = worst;
  return res;
}

PipelineResult run_slope(const ExperimentSpec& spec, const std::string& out_dir) {
  PipelineResult res;
  GridSpec grid = spec.t_grid.value_or(GridSpec{1e-3, 1e-1, 10, true});
  auto t_grid = grid.values();

  std::string csv = out_dir + "/" + spec.label + "_slope.csv";
  std::string detail = out_dir + "/" + spec.label + "_slope_points.csv";
  std::ofstream os(csv, std::ios::binary), od(detail, std::ios::binary);
  if (!os || !od) throw ValidationError("cannot write slope outputs");
  os << "sequence,slope\n";
  od << "sequence,T,delta\n";
  for (const auto& token : spec.sequences) {
    auto [seq, order] = resolve_sequence(token);
    auto slope = suppression_slope(seq, spec.model, t_grid);
    os << token << "," << format_double(slope.slope) << "\n";
    for (std::size_t i = 0; i < slope.t_grid.size(); ++i)
      od << token << "," << format_double(slope.t_grid[i]) << ","
         << format_double(slope.delta[i]) << "\n";
    res.tolerances["slope_" + token] = slope.slope;
  }
  res.outputs.push_back(csv);
  res.outputs.push_back(detail);
  return res;
}

}  // namespace

RunManifest run(const ExperimentSpec& spec, const std::string& out_dir) {
  spec.validate();
  fs::create_directories(out_dir);
  auto start = std::chrono::steady_clock::now();

  PipelineResult pr;
  switch (spec.kind) {
    case ExperimentKind::DeriveSequences: pr = run_derive(spec, out_dir); break;
    case ExperimentKind::EchoCurve:
    case ExperimentKind::RelaxationCurve:
    case ExperimentKind::ConcurrenceCurve: pr = run_curve(spec, out_dir); break;
    case ExperimentKind::InsertionComparison: pr = run_insertion(spec, out_dir); break;
    case ExperimentKind::EffectiveDynamics: pr = run_effective(spec, out_dir); break;
    case ExperimentKind::NopSweep: pr = run_nop_sweep(spec, out_dir); break;
    case ExperimentKind::OracleCrossCheck: pr = run_crosscheck(spec, out_dir); break;
    case ExperimentKind::SlopeCheck: pr = run_slope(spec, out_dir); break;
  }

  RunManifest manifest;
  manifest.spec_hash = hex64(fnv1a(serialize_experiment(spec)));
  manifest.version = kVersion;
  manifest.outputs = pr.outputs;
  manifest.tolerances = pr.tolerances;
  manifest.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  nlohmann::json j;
  j["spec_hash"] = manifest.spec_hash;
  j["version"] = manifest.version;
  j["wall_seconds"] = manifest.wall_seconds;
  j["outputs"] = manifest.outputs;
  j["tolerances"] = manifest.tolerances;
  manifest.manifest_path = out_dir + "/" + spec.label + "_manifest.json";
  std::string tmp = manifest.manifest_path + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary);
    if (!os) throw ValidationError("cannot write " + tmp);
    os << j.dump(2) << "\n";
  }
  fs::rename(tmp, manifest.manifest_path);
  return manifest;
}

ComparisonReport compare_sequences(const ExperimentSpec& spec,
                                   const std::string& out_dir) {
  if (spec.kind != ExperimentKind::NopSweep)
    throw ValidationError("sequence comparison operates on an N_op sweep spec");
  if (spec.sequences.size() < 2)
    throw ValidationError("sequence comparison needs at least two sequences");
  spec.validate();
  fs::create_directories(out_dir);

  EngineOptions engine{spec.engine, spec.dt};
  QuantumState psi0 = initial_state(spec);
  const std::size_t nb = spec.b_list.size(), ns = spec.sequences.size();
  std::vector<SequenceRank> cells(nb * ns);
  parallel_for(nb * ns, [&](std::size_t idx) {
    std::size_t bi = idx / ns, si = idx % ns;
    ExperimentSpec local = spec;
    local.b_tesla = spec.b_list[bi];
    local.mode = PulseMode::FiniteWidth;
    Prepared p = prepare_sequence(local, spec.sequences[si]);
    Schedule sched{p.seq, PulseMode::FiniteWidth, ComputingInsertion::None, 0,
                   spec.n_cycles};
    auto rhos = run_periodic(psi0, sched, spec.model, engine);
    auto obs = strobe_observable(spec, rhos);
    SequenceRank rank;
    rank.sequence = spec.sequences[si];
    rank.b_tesla = spec.b_list[bi];
    rank.nop = n_op(obs);
    for (double v : obs) rank.area += v;
    cells[idx] = rank;
  });

  // rank per field: larger interpolated N_op wins, area breaks ties
  ComparisonReport report;
  auto better = [](const SequenceRank& a, const SequenceRank& b) {
    double na = a.nop.reached ? a.nop.n_interp : std::numeric_limits<double>::infinity();
    double nb_ = b.nop.reached ? b.nop.n_interp : std::numeric_limits<double>::infinity();
    if (na != nb_) return na > nb_;
    return a.area > b.area;
  };
  std::string prev_best;
  for (std::size_t bi = 0; bi < nb; ++bi) {
    std::vector<SequenceRank> at_b(cells.begin() + bi * ns,
                                   cells.begin() + (bi + 1) * ns);
    std::stable_sort(at_b.begin(), at_b.end(), better);
    if (bi > 0 && at_b.front().sequence != prev_best)
      report.crossover_fields.push_back(spec.b_list[bi]);
    prev_best = at_b.front().sequence;
    for (auto& r : at_b) report.ranking.push_back(r);
  }

  report.csv_path = out_dir + "/" + spec.label + "_ranking.csv";
  std::ofstream os(report.csv_path, std::ios::binary);
  if (!os) throw ValidationError("cannot write " + report.csv_path);
  os << "B_tesla,rank,sequence,reached,n_op,n_op_interp,area\n";
  for (std::size_t i = 0; i < report.ranking.size(); ++i) {
    const auto& r = report.ranking[i];
    os << format_double(r.b_tesla) << "," << (i % ns) + 1 << "," << r.sequence << ","
       << (r.nop.reached ? 1 : 0) << "," << r.nop.n_cycles << ","
       << format_double(r.nop.n_interp) << "," << format_double(r.area) << "\n";
  }
  return report;
}

InitialStateReport initial_state_check(const ExperimentSpec& spec,
                                       const std::string& out_dir) {
  InitialStateReport report;
  fs::create_directories(out_dir);
  HilbertSpace space = joint_space(spec.model);
  EngineOptions engine{spec.engine, spec.dt};
  Prepared p = prepare_sequence(spec, spec.sequence);
  Schedule sched{p.seq, spec.mode, ComputingInsertion::None, 0, spec.n_cycles};
  auto times = linear_grid(0.0, p.period * spec.n_cycles, spec.samples);

  std::array<std::vector<double>, 2> curves;
  for (int which = 0; which < 2; ++which) {
    ExperimentSpec local = spec;
    local.bath_state = which == 0 ? "ground" : "excited";
    QuantumState psi0 = initial_state(local);
    auto states = evolve_sequence(psi0, sched, spec.model, times, engine);
    std::vector<Row> rows;
    for (const auto& st : states) {
      rows.push_back(observe(spec, st, space));
      curves[which].push_back(rows.back().echo);
    }
    std::string csv = out_dir + "/" + spec.label +
                      (which == 0 ? "_ground.csv" : "_excited.csv");
    write_rows(csv, rows);
    (which == 0 ? report.ground_csv : report.excited_csv) = csv;
  }
  for (std::size_t i = 0; i < curves[0].size(); ++i) {
    report.max_abs_dl = std::max(report.max_abs_dl,
                                 std::abs(curves[0][i] - curves[1][i]));
    report.max_decay = std::max(report.max_decay, 1.0 - curves[0][i]);
  }
  return report;
}

}  // namespace ddsim
