// smcbench: run one experiment and write its records as CSV.
//
//   smcbench <subcommand> [--config file.json] [flags]
//
// Subcommands: sort, redistribute, pf-econ, pf-bearing, smcs, multisensor,
// vs-mh. Flags given on the command line override the config file.

#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "smcpar/bench.hpp"

namespace {

using smcpar::bench::Options;
using json = nlohmann::json;

struct Flags {
  std::string config;
  std::string n;
  std::vector<int> p;
  std::size_t t = 0;
  std::size_t reps = 0;
  std::uint64_t seed = 0;
  std::vector<std::string> algo;
  std::vector<std::size_t> d;
  double nu = 0, mu = 0, eps = 0;
  std::size_t tau = 0;
  std::string out;
  bool worst_case = false;
};

std::size_t parse_size(const std::string& s) {
  std::size_t pos = 0;
  if (s.rfind("2^", 0) == 0) {
    const unsigned long k = std::stoul(s.substr(2), &pos);
    if (pos != s.size() - 2 || k >= 63) throw std::invalid_argument("bad size '" + s + "'");
    return std::size_t{1} << k;
  }
  const unsigned long long v = std::stoull(s, &pos);
  if (pos != s.size()) throw std::invalid_argument("bad size '" + s + "'");
  return static_cast<std::size_t>(v);
}

template <class T>
std::vector<T> as_list(const json& v) {
  if (v.is_array()) return v.get<std::vector<T>>();
  return {v.get<T>()};
}

void apply_config(Options& o, std::string& out, const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot read config '" + path + "'");
  const json j = json::parse(f);
  if (!j.is_object()) throw std::runtime_error("config must be a JSON object");
  for (const auto& [key, v] : j.items()) {
    if (key == "n") {
      o.N = v.is_string() ? parse_size(v.get<std::string>()) : v.get<std::size_t>();
    } else if (key == "p") {
      o.P = as_list<int>(v);
    } else if (key == "t") {
      o.T = v.get<std::size_t>();
    } else if (key == "reps") {
      o.reps = v.get<std::size_t>();
    } else if (key == "seed") {
      o.seed = v.get<std::uint64_t>();
    } else if (key == "algo") {
      o.algos = as_list<std::string>(v);
    } else if (key == "d") {
      o.D = as_list<std::size_t>(v);
    } else if (key == "nu") {
      o.student.nu = v.get<double>();
    } else if (key == "mu") {
      o.student.mu = v.get<double>();
    } else if (key == "eps") {
      o.student.epsilon = v.get<double>();
    } else if (key == "tau") {
      o.tau = v.get<std::size_t>();
    } else if (key == "out") {
      out = v.get<std::string>();
    } else if (key == "worst-case" || key == "worst_case") {
      o.worst_case = v.get<bool>();
    } else {
      throw std::runtime_error("unknown config key '" + key + "'");
    }
  }
}

void add_flags(CLI::App* sub, Flags& f) {
  sub->add_option("--config", f.config, "JSON file with default flag values");
  sub->add_option("--n", f.n, "global particle count, e.g. 16384 or 2^14");
  sub->add_option("--p", f.p, "worker counts, comma separated")->delimiter(',');
  sub->add_option("--t", f.t, "iterations");
  sub->add_option("--reps", f.reps, "repetitions per cell");
  sub->add_option("--seed", f.seed, "base seed; repetition r uses seed + r");
  sub->add_option("--algo", f.algo, "algorithms, comma separated")->delimiter(',');
  sub->add_option("--d", f.d, "sensor counts, comma separated")->delimiter(',');
  sub->add_option("--nu", f.nu, "Student's t degrees of freedom");
  sub->add_option("--mu", f.mu, "Student's t location");
  sub->add_option("--eps", f.eps, "random-walk scale");
  sub->add_option("--tau", f.tau, "MH burn-in");
  sub->add_option("--out", f.out, "CSV output path (stdout if absent)");
  sub->add_flag("--worst-case", f.worst_case, "resample at every iteration");
}

Options resolve(const CLI::App* sub, const Flags& f, std::string& out) {
  Options o;
  if (sub->get_name() == "vs-mh") {
    o.N = std::size_t{1} << 10;
    o.P = {1, 8};
  }
  if (!f.config.empty()) apply_config(o, out, f.config);
  auto given = [sub](const char* name) { return sub->count(name) > 0; };
  if (given("--n")) o.N = parse_size(f.n);
  if (given("--p")) o.P = f.p;
  if (given("--t")) o.T = f.t;
  if (given("--reps")) o.reps = f.reps;
  if (given("--seed")) o.seed = f.seed;
  if (given("--algo")) o.algos = f.algo;
  if (given("--d")) o.D = f.d;
  if (given("--nu")) o.student.nu = f.nu;
  if (given("--mu")) o.student.mu = f.mu;
  if (given("--eps")) o.student.epsilon = f.eps;
  if (given("--tau")) o.tau = f.tau;
  if (given("--out")) out = f.out;
  if (given("--worst-case")) o.worst_case = f.worst_case;
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Parallel SMC benchmarks"};
  app.require_subcommand(1);
  Flags flags;
  const std::vector<std::pair<std::string, std::string>> subs = {
      {"sort", "nearly sort vs bitonic sort"},
      {"redistribute", "NR vs BR vs CR redistribute"},
      {"pf-econ", "particle filter, stochastic volatility model"},
      {"pf-bearing", "particle filter, bearing-only tracking"},
      {"smcs", "SMC sampler, Student's t target"},
      {"multisensor", "bearing filter over sensor counts"},
      {"vs-mh", "SMC sampler against Metropolis-Hastings"},
  };
  for (const auto& [name, desc] : subs) add_flags(app.add_subcommand(name, desc), flags);
  CLI11_PARSE(app, argc, argv);

  const CLI::App* sub = app.get_subcommands().front();
  const std::string name = sub->get_name();
  try {
    std::string out;
    const Options o = resolve(sub, flags, out);
    std::vector<smcpar::bench::RunRecord> records;
    std::optional<smcpar::bench::MHComparison> mh;
    if (name == "sort") {
      records = smcpar::bench::bench_sort(o);
    } else if (name == "redistribute") {
      records = smcpar::bench::bench_redistribute(o);
    } else if (name == "pf-econ") {
      records = smcpar::bench::bench_pf(o, "econ");
    } else if (name == "pf-bearing") {
      records = smcpar::bench::bench_pf(o, "bearing");
    } else if (name == "smcs") {
      records = smcpar::bench::bench_smcs(o);
    } else if (name == "multisensor") {
      records = smcpar::bench::bench_multisensor(o);
    } else {
      mh = smcpar::bench::compare_mh(o);
      records = mh->records;
    }

    std::ostream& report = out.empty() ? std::cerr : std::cout;
    if (out.empty()) {
      smcpar::bench::write_csv(std::cout, records);
    } else {
      smcpar::bench::emit_csv(records, out);
    }
    smcpar::bench::write_summary_csv(report, smcpar::bench::summarise(records));
    if (mh) {
      report << "P,su,T_equal_time,rmse_smcs,rmse_mh,ratio,ideal_ratio\n";
      for (std::size_t i = 0; i < mh->P.size(); ++i) {
        report << mh->P[i] << ',' << mh->su[i] << ',' << mh->T_equal_time[i] << ',' << mh->rmse_smcs[i] << ','
               << mh->rmse_mh << ',' << mh->rmse_smcs[i] / mh->rmse_mh << ',' << mh->ideal_ratio[i] << '\n';
      }
    }
  } catch (const std::exception& e) {
    std::cerr << "smcbench " << name << ": " << e.what() << '\n';
    return 1;
  }
  return 0;
}
