#include "smcpar/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <tuple>

#include "smcpar/comm.hpp"
#include "smcpar/kernels.hpp"
#include "smcpar/resample.hpp"
#include "smcpar/samplers.hpp"

namespace smcpar::bench {

namespace {

using Clock = std::chrono::steady_clock;

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t pos = s.find(sep, start);
    out.push_back(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

template <class T>
T parse_integer(std::string_view s) {
  const std::string tmp(s);
  char* end = nullptr;
  const unsigned long long v = std::strtoull(tmp.c_str(), &end, 10);
  if (tmp.empty() || end != tmp.c_str() + tmp.size()) throw std::invalid_argument("csv: bad integer '" + tmp + "'");
  return static_cast<T>(v);
}

double parse_double(std::string_view s) {
  const std::string tmp(s);
  char* end = nullptr;
  const double v = std::strtod(tmp.c_str(), &end);
  if (tmp.empty() || end != tmp.c_str() + tmp.size()) throw std::invalid_argument("csv: bad number '" + tmp + "'");
  return v;
}

/// Body time on rank 0, between barriers.
template <class F>
double timed(Communicator& comm, F&& body) {
  comm.barrier();
  const auto t0 = Clock::now();
  body();
  comm.barrier();
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

void check_options(const Options& o) {
  if (!is_power_of_two(o.N)) throw std::invalid_argument("N must be a power of two");
  if (o.P.empty()) throw std::invalid_argument("at least one P is required");
  for (int P : o.P) {
    if (P < 1 || !is_power_of_two(static_cast<std::uint64_t>(P))) throw std::invalid_argument("P must be a power of two");
    if (static_cast<std::size_t>(P) > o.N) throw std::invalid_argument("P must not exceed N");
  }
  if (o.reps == 0) throw std::invalid_argument("reps must be positive");
  if (o.M == 0) throw std::invalid_argument("M must be positive");
}

std::vector<std::string> algos_or(const Options& o, std::vector<std::string> fallback) {
  return o.algos.empty() ? fallback : o.algos;
}

RedistributeAlgo redistribute_algo(std::string_view name) {
  for (std::string_view prefix : {"PF-", "SMCS-"}) {
    if (name.substr(0, prefix.size()) == prefix) name.remove_prefix(prefix.size());
  }
  const auto a = parse_redistribute_algo(name);
  if (!a) throw std::invalid_argument("unknown redistribute algorithm '" + std::string(name) + "'");
  return *a;
}

// Global (ncopies, rows) instance, independent of P.
struct Instance {
  std::vector<Count> keys;
  std::vector<double> rows;
};

Instance make_instance(std::size_t N, std::size_t M, std::uint64_t seed) {
  Rng rng = make_rng(seed, 0, 0x696e);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> logw(N);
  for (double& v : logw) v = normal(rng);
  Instance inst;
  inst.rows.resize(N * M);
  for (double& v : inst.rows) v = normal(rng);
  spawn_group(1, [&](Communicator& comm) {
    const WeightShard w = normalise_log(comm, logw);
    inst.keys = mvr_ncopies(comm, w, N, rng);
  });
  return inst;
}

KeyedShard slice(const Instance& inst, std::size_t M, int P, int rank) {
  const std::size_t n = inst.keys.size() / static_cast<std::size_t>(P);
  const std::size_t lo = n * static_cast<std::size_t>(rank);
  KeyedShard s;
  s.keys.assign(inst.keys.begin() + static_cast<std::ptrdiff_t>(lo), inst.keys.begin() + static_cast<std::ptrdiff_t>(lo + n));
  s.particles = ParticleShard(M, TrackedVector<double>(inst.rows.begin() + static_cast<std::ptrdiff_t>(lo * M),
                                                       inst.rows.begin() + static_cast<std::ptrdiff_t>((lo + n) * M)));
  return s;
}

RunRecord base_record(const Options& o, std::string experiment, std::string algo, int P, std::size_t rep) {
  RunRecord r;
  r.experiment = std::move(experiment);
  r.algo = std::move(algo);
  r.N = o.N;
  r.M = o.M;
  r.P = P;
  r.seed = o.seed + rep;
  r.rep = rep;
  return r;
}

double tracking_rmse(const std::vector<std::vector<double>>& est, const std::vector<std::vector<double>>& truth) {
  double acc = 0.0;
  std::size_t count = 0;
  for (std::size_t t = 0; t < est.size(); ++t) {
    for (std::size_t k = 0; k < est[t].size(); ++k) {
      const double d = est[t][k] - truth[t][k];
      acc += d * d;
      ++count;
    }
  }
  return count == 0 ? 0.0 : std::sqrt(acc / static_cast<double>(count));
}

struct Timed {
  double seconds;
  PFResult pf;
  EstimateSeries smcs;
};

ResampleConfig resample_config(const Options& o, RedistributeAlgo algo, bool worst_case) {
  ResampleConfig cfg;
  cfg.N = o.N;
  cfg.algo = algo;
  cfg.threshold = worst_case ? static_cast<double>(o.N) : 0.0;
  cfg.centralised_capacity = o.centralised_capacity;
  return cfg;
}

std::vector<RunRecord> run_pf_sweep(const Options& o, const std::string& experiment, const PFModel& model,
                                    const models::Trajectory& traj, std::size_t rep, bool worst_case, std::size_t D,
                                    const std::vector<std::string>& algos) {
  std::vector<RunRecord> out;
  for (const auto& name : algos) {
    const ResampleConfig cfg = resample_config(o, redistribute_algo(name), worst_case);
    for (int P : o.P) {
      if (cfg.algo == RedistributeAlgo::SR && P != 1) continue;
      RunRecord rec = base_record(o, experiment, "PF-" + std::string(to_string(cfg.algo)), P, rep);
      rec.M = model.state_dim();
      rec.T = traj.measurements.size();
      rec.D = D;
      auto res = spawn_group(P, [&](Communicator& comm) {
        Timed t{};
        t.seconds = timed(comm, [&] { t.pf = run_sir_pf(comm, model, traj.measurements, cfg, rec.seed); });
        return t;
      });
      const Timed& r0 = res.front();
      rec.wall_time_s = r0.seconds;
      rec.resamples = r0.pf.resamples;
      rec.estimate = r0.pf.estimates.empty() ? std::vector<double>{} : r0.pf.estimates.back();
      rec.rmse = tracking_rmse(r0.pf.estimates, traj.states);
      rec.importance_seconds = r0.pf.importance_seconds;
      rec.resample_seconds = r0.pf.resample_seconds;
      out.push_back(std::move(rec));
    }
  }
  return out;
}

RunRecord run_smcs_once(const Options& o, const std::string& experiment, RedistributeAlgo algo, int P, std::size_t T,
                        std::size_t rep, bool worst_case) {
  const models::StudentTSampler model(o.student);
  const ResampleConfig cfg = resample_config(o, algo, worst_case);
  RunRecord rec = base_record(o, experiment, "SMCS-" + std::string(to_string(algo)), P, rep);
  rec.M = 1;
  rec.T = T;
  auto res = spawn_group(P, [&](Communicator& comm) {
    Timed t{};
    t.seconds = timed(comm, [&] { t.smcs = run_smc_sampler(comm, model, cfg, T, rec.seed); });
    return t;
  });
  const Timed& r0 = res.front();
  rec.wall_time_s = r0.seconds;
  rec.resamples = r0.smcs.resamples;
  rec.estimate = r0.smcs.recycled;
  if (!rec.estimate.empty()) rec.rmse = std::abs(rec.estimate[0] - o.student.mu);
  rec.importance_seconds = r0.smcs.importance_seconds;
  rec.resample_seconds = r0.smcs.resample_seconds;
  return rec;
}

}  // namespace

bool RunRecord::same_row(const RunRecord& o) const { return format_record(*this) == format_record(o); }

std::string format_record(const RunRecord& r) {
  std::string est;
  for (std::size_t k = 0; k < r.estimate.size(); ++k) {
    if (k) est += ';';
    est += fmt_double(r.estimate[k]);
  }
  std::ostringstream os;
  os << r.experiment << ',' << r.algo << ',' << r.N << ',' << r.M << ',' << r.P << ',' << r.T << ',' << r.D << ','
     << r.seed << ',' << r.rep << ',' << fmt_double(r.wall_time_s) << ',' << r.resamples << ',' << est << ','
     << (r.rmse ? fmt_double(*r.rmse) : std::string());
  return os.str();
}

RunRecord parse_record(std::string_view line) {
  const auto f = split(line, ',');
  if (f.size() != 13) throw std::invalid_argument("csv: expected 13 fields");
  RunRecord r;
  r.experiment = std::string(f[0]);
  r.algo = std::string(f[1]);
  r.N = parse_integer<std::uint64_t>(f[2]);
  r.M = parse_integer<std::size_t>(f[3]);
  r.P = parse_integer<int>(f[4]);
  r.T = parse_integer<std::size_t>(f[5]);
  r.D = parse_integer<std::size_t>(f[6]);
  r.seed = parse_integer<std::uint64_t>(f[7]);
  r.rep = parse_integer<std::size_t>(f[8]);
  r.wall_time_s = parse_double(f[9]);
  r.resamples = parse_integer<std::size_t>(f[10]);
  if (!f[11].empty()) {
    for (auto v : split(f[11], ';')) r.estimate.push_back(parse_double(v));
  }
  if (!f[12].empty()) r.rmse = parse_double(f[12]);
  return r;
}

void write_csv(std::ostream& os, const std::vector<RunRecord>& records) {
  os << kCsvHeader << '\n';
  for (const auto& r : records) os << format_record(r) << '\n';
}

void emit_csv(const std::vector<RunRecord>& records, const std::string& path) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open '" + path + "' for writing");
  write_csv(f, records);
  f.flush();
  if (!f) throw std::runtime_error("failed writing '" + path + "'");
}

std::vector<RunRecord> parse_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line != kCsvHeader) throw std::invalid_argument("csv: missing or wrong header");
  std::vector<RunRecord> out;
  while (std::getline(is, line)) {
    if (!line.empty()) out.push_back(parse_record(line));
  }
  return out;
}

double median(std::vector<double> values) {
  if (values.empty()) throw std::invalid_argument("median of an empty set");
  const std::size_t mid = values.size() / 2;
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid), values.end());
  const double hi = values[mid];
  if (values.size() % 2 == 1) return hi;
  const double lo = *std::max_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid));
  return (lo + hi) / 2.0;
}

std::vector<SummaryRow> summarise(const std::vector<RunRecord>& records) {
  using Key = std::tuple<std::string, std::string, std::uint64_t, std::size_t, std::size_t, int>;
  std::vector<Key> order;
  std::map<Key, std::vector<const RunRecord*>> groups;
  for (const auto& r : records) {
    Key k{r.experiment, r.algo, r.N, r.T, r.D, r.P};
    auto [it, inserted] = groups.try_emplace(k);
    if (inserted) order.push_back(k);
    it->second.push_back(&r);
  }

  std::vector<SummaryRow> rows;
  std::map<Key, double> medians;
  for (const auto& k : order) {
    const auto& g = groups[k];
    SummaryRow row;
    std::tie(row.experiment, row.algo, row.N, row.T, row.D, row.P) = k;
    row.runs = g.size();
    std::vector<double> times;
    std::vector<double> shares;
    double sq = 0.0;
    std::size_t with_rmse = 0;
    for (const auto* r : g) {
      times.push_back(r->wall_time_s);
      const double busy = r->importance_seconds + r->resample_seconds;
      if (busy > 0.0) shares.push_back(r->importance_seconds / busy);
      if (r->rmse) {
        sq += *r->rmse * *r->rmse;
        ++with_rmse;
      }
    }
    row.median_wall_time_s = median(times);
    if (!shares.empty()) row.is_share = median(shares);
    if (with_rmse) row.rmse = std::sqrt(sq / static_cast<double>(with_rmse));
    medians[k] = row.median_wall_time_s;
    rows.push_back(std::move(row));
  }
  for (auto& row : rows) {
    const auto base = medians.find(Key{row.experiment, row.algo, row.N, row.T, row.D, 1});
    if (base == medians.end()) continue;
    row.speedup = row.P == 1 ? 1.0 : base->second / row.median_wall_time_s;
  }
  return rows;
}

void write_summary_csv(std::ostream& os, const std::vector<SummaryRow>& rows) {
  os << "experiment,algo,N,P,T,D,runs,median_wall_time_s,speedup,rmse,is_share\n";
  auto opt = [](const std::optional<double>& v) { return v ? fmt_double(*v) : std::string(); };
  for (const auto& r : rows) {
    os << r.experiment << ',' << r.algo << ',' << r.N << ',' << r.P << ',' << r.T << ',' << r.D << ',' << r.runs << ','
       << fmt_double(r.median_wall_time_s) << ',' << opt(r.speedup) << ',' << opt(r.rmse) << ',' << opt(r.is_share)
       << '\n';
  }
}

std::vector<RunRecord> bench_sort(const Options& o) {
  check_options(o);
  const auto algos = algos_or(o, {"NS", "BS", "BS+MS"});
  for (const auto& a : algos) {
    if (a != "NS" && a != "BS" && a != "BS+MS") throw std::invalid_argument("unknown sort algorithm '" + a + "'");
  }
  std::vector<RunRecord> out;
  for (std::size_t rep = 0; rep < o.reps; ++rep) {
    const Instance inst = make_instance(o.N, o.M, o.seed + rep);
    for (const auto& a : algos) {
      for (int P : o.P) {
        RunRecord rec = base_record(o, "sort", a, P, rep);
        auto times = spawn_group(P, [&](Communicator& comm) {
          KeyedShard shard = slice(inst, o.M, P, comm.rank());
          return timed(comm, [&] {
            if (a == "NS") {
              shard = parallel_nearly_sort(comm, std::move(shard));
            } else {
              shard = bitonic_sort(comm, std::move(shard), Direction::ascending,
                                   a == "BS" ? LocalSort::bitonic : LocalSort::merge);
            }
          });
        });
        rec.wall_time_s = times.front();
        out.push_back(std::move(rec));
      }
    }
  }
  return out;
}

std::vector<RunRecord> bench_redistribute(const Options& o) {
  check_options(o);
  std::vector<RedistributeAlgo> algos;
  for (const auto& a : algos_or(o, {"NR", "BR", "CR"})) algos.push_back(redistribute_algo(a));
  std::vector<RunRecord> out;
  for (std::size_t rep = 0; rep < o.reps; ++rep) {
    const Instance inst = make_instance(o.N, o.M, o.seed + rep);
    for (auto algo : algos) {
      ResampleConfig cfg = resample_config(o, algo, false);
      for (int P : o.P) {
        if (algo == RedistributeAlgo::SR && P != 1) continue;
        RunRecord rec = base_record(o, "redistribute", std::string(to_string(algo)), P, rep);
        try {
          auto times = spawn_group(P, [&](Communicator& comm) {
            KeyedShard shard = slice(inst, o.M, P, comm.rank());
            ParticleShard result;
            return timed(comm, [&] { result = redistribute(comm, cfg, std::move(shard)); });
          });
          rec.wall_time_s = times.front();
        } catch (const GroupError& e) {
          // Centralised runs beyond rank 0's capacity are missing points.
          if (algo == RedistributeAlgo::CR && std::string(e.what()).find("centralised") != std::string::npos) continue;
          throw;
        }
        out.push_back(std::move(rec));
      }
    }
  }
  return out;
}

models::BearingState bearing_initial_state() { return {0.0, 1.0, 0.0, 1.0}; }

models::BearingParams bearing_setup(std::size_t D) {
  models::BearingParams p;
  const auto x0 = bearing_initial_state();
  p.sensors = models::sensors_on_circle(D, x0[0], x0[2]);
  return p;
}

std::vector<RunRecord> bench_pf(const Options& o, std::string_view model) {
  check_options(o);
  const auto algos = algos_or(o, {"NR", "BR", "CR"});
  std::vector<RunRecord> out;
  for (std::size_t rep = 0; rep < o.reps; ++rep) {
    const std::uint64_t seed = o.seed + rep;
    std::vector<RunRecord> recs;
    if (model == "econ") {
      const models::EconParams p;
      recs = run_pf_sweep(o, "pf-econ", models::EconModel(p), models::econ_simulate(p, o.T, seed), rep, o.worst_case,
                          1, algos);
    } else if (model == "bearing") {
      const std::size_t D = o.D.empty() ? 1 : o.D.front();
      const auto p = bearing_setup(D);
      const auto x0 = bearing_initial_state();
      recs = run_pf_sweep(o, "pf-bearing", models::BearingModel(p, x0), models::bearing_simulate(p, x0, o.T, seed), rep,
                          o.worst_case, D, algos);
    } else {
      throw std::invalid_argument("unknown filter model '" + std::string(model) + "'");
    }
    out.insert(out.end(), recs.begin(), recs.end());
  }
  return out;
}

std::vector<RunRecord> bench_smcs(const Options& o) {
  check_options(o);
  o.student.validate();
  std::vector<RunRecord> out;
  for (std::size_t rep = 0; rep < o.reps; ++rep) {
    for (const auto& a : algos_or(o, {"NR", "BR", "CR"})) {
      const auto algo = redistribute_algo(a);
      for (int P : o.P) {
        if (algo == RedistributeAlgo::SR && P != 1) continue;
        out.push_back(run_smcs_once(o, "smcs", algo, P, o.T, rep, o.worst_case));
      }
    }
  }
  return out;
}

std::vector<RunRecord> bench_multisensor(const Options& o) {
  check_options(o);
  if (o.D.empty()) throw std::invalid_argument("at least one D is required");
  const auto algos = algos_or(o, {"NR"});
  std::vector<RunRecord> out;
  for (std::size_t D : o.D) {
    if (D == 0) throw std::invalid_argument("D must be >= 1");
    const auto p = bearing_setup(D);
    const auto x0 = bearing_initial_state();
    const models::BearingModel model(p, x0);
    for (std::size_t rep = 0; rep < o.reps; ++rep) {
      const auto traj = models::bearing_simulate(p, x0, o.T, o.seed + rep);
      auto recs = run_pf_sweep(o, "multisensor", model, traj, rep, true, D, algos);
      out.insert(out.end(), recs.begin(), recs.end());
    }
  }
  return out;
}

MHComparison compare_mh(const Options& o) {
  check_options(o);
  o.student.validate();
  const models::StudentTSampler smcs_model(o.student);
  const std::size_t T_mh = o.N * o.T;

  MHTarget target;
  target.dim = 1;
  target.log_density = [&smcs_model](std::span<const double> x) { return smcs_model.log_target(x); };
  target.initial = {smcs_model.initial_mean()};
  MHConfig mh_cfg;
  mh_cfg.iterations = T_mh;
  mh_cfg.burn_in = o.tau;
  mh_cfg.epsilon = o.student.epsilon;

  MHComparison out;
  std::vector<double> mh_times;
  double mh_sq = 0.0;
  for (std::size_t rep = 0; rep < o.reps; ++rep) {
    RunRecord rec = base_record(o, "vs-mh-budget", "MH", 1, rep);
    rec.M = 1;
    rec.T = T_mh;
    MHResult res;
    const auto t0 = Clock::now();
    res = run_mh(target, mh_cfg, rec.seed);
    rec.wall_time_s = std::chrono::duration<double>(Clock::now() - t0).count();
    rec.estimate = res.mean;
    rec.rmse = std::abs(res.mean[0] - o.student.mu);
    mh_sq += *rec.rmse * *rec.rmse;
    mh_times.push_back(rec.wall_time_s);
    out.records.push_back(std::move(rec));
  }
  out.rmse_mh = std::sqrt(mh_sq / static_cast<double>(o.reps));
  const double mh_median = median(mh_times);

  for (int P : o.P) {
    std::vector<double> times;
    for (std::size_t rep = 0; rep < o.reps; ++rep) {
      auto rec = run_smcs_once(o, "vs-mh-budget", RedistributeAlgo::NR, P, o.T, rep, false);
      times.push_back(rec.wall_time_s);
      out.records.push_back(std::move(rec));
    }
    const double su = mh_median / median(times);
    const auto T_eq = static_cast<std::size_t>(std::max<long long>(1, std::llround(static_cast<double>(o.T) * su)));
    double sq = 0.0;
    for (std::size_t rep = 0; rep < o.reps; ++rep) {
      auto rec = run_smcs_once(o, "vs-mh-time", RedistributeAlgo::NR, P, T_eq, rep, false);
      sq += *rec.rmse * *rec.rmse;
      out.records.push_back(std::move(rec));
    }
    out.P.push_back(P);
    out.su.push_back(su);
    out.T_equal_time.push_back(T_eq);
    out.rmse_smcs.push_back(std::sqrt(sq / static_cast<double>(o.reps)));
    out.ideal_ratio.push_back(1.0 / std::sqrt(static_cast<double>(P)));
  }
  return out;
}

}  // namespace smcpar::bench
