#include "iteq/cli.hpp"

#include "iteq/cre_inference.hpp"
#include "iteq/population_inference.hpp"
#include "iteq/serialize.hpp"
#include "iteq/sim_harness.hpp"
#include "iteq/stratified_inference.hpp"

#include <CLI11.hpp>
#include <json.hpp>
#include <openssl/evp.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>

namespace iteq {

using nlohmann::json;

std::string sha256_hex(std::string_view bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1)
    throw InvariantError("SHA-256 computation failed");
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[digest[i] >> 4];
    out += hex[digest[i] & 15];
  }
  return out;
}

namespace {

std::string render(const std::string& v) { return v; }
std::string render(double v) { return format_double(v); }
std::string render(int v) { return std::to_string(v); }
std::string render(unsigned v) { return std::to_string(v); }
std::string render(long long v) { return std::to_string(v); }
std::string render(std::uint64_t v) { return std::to_string(v); }
template <class T>
std::string render(const std::vector<T>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + render(v[i]);
  return s;
}
template <class T>
std::string render(const std::optional<T>& v) {
  return v ? render(*v) : "";
}

template <class T>
constexpr bool is_vector = false;
template <class T>
constexpr bool is_vector<std::vector<T>> = true;

// Options of one subcommand, remembered so the resolved values can be written
// to the manifest and replayed.
class Flags {
public:
  explicit Flags(CLI::App* app) : app_(app) {}

  template <class T>
  CLI::Option* add(const std::string& name, T& var, const std::string& help) {
    auto* o = app_->add_option("--" + name, var, help);
    if constexpr (is_vector<T>) o->delimiter(',');
    values_.emplace_back(name, [&var] { return render(var); });
    return o;
  }
  CLI::Option* flag(const std::string& name, bool& var, const std::string& help) {
    switches_.emplace_back(name, &var);
    return app_->add_flag("--" + name, var, help);
  }

  json resolved() const {
    json j = json::object();
    for (const auto& [name, get] : values_) j[name] = get();
    for (const auto& [name, var] : switches_) j[name] = *var;
    return j;
  }

  CLI::App* app() const { return app_; }

private:
  CLI::App* app_;
  std::vector<std::pair<std::string, std::function<std::string()>>> values_;
  std::vector<std::pair<std::string, bool*>> switches_;
};

std::uint64_t default_seed() {
  if (const char* env = std::getenv(kSeedEnv)) {
    try {
      std::size_t used = 0;
      const auto v = std::stoull(env, &used);
      if (used == std::string_view(env).size()) return v;
    } catch (const std::exception&) {
    }
    throw FlagError(std::string(kSeedEnv) + " must be a nonnegative integer");
  }
  return kDefaultSeed;
}

struct Common {
  std::string data;
  std::optional<std::uint64_t> shuffle_seed;
  double alpha = 0.1;
  std::string statistic = "stephenson";
  int s = 6;
  std::string null_mode = "auto";
  std::uint64_t mc_draws = 100000;
  std::uint64_t seed = kDefaultSeed;
  unsigned threads = 0;
};

void add_common(Flags& f, Common& c, bool with_data) {
  if (with_data) {
    f.add("data", c.data, "CSV with columns z, y and optional stratum, unit_id")->required();
    f.add("shuffle-seed", c.shuffle_seed, "Shuffle rows with this seed before analysis");
    f.add("alpha", c.alpha, "Significance level");
    f.add("statistic", c.statistic, "wilcoxon or stephenson")->check(CLI::IsMember({"wilcoxon", "stephenson"}));
    f.add("s", c.s, "Stephenson parameter");
    f.add("null", c.null_mode, "Null distribution: exact, mc or auto")->check(CLI::IsMember({"exact", "mc", "auto"}));
  }
  f.add("mc-draws", c.mc_draws, "Monte Carlo draws");
  f.add("seed", c.seed, "Monte Carlo seed");
  f.add("threads", c.threads, "Worker threads (0: all cores); never changes results");
}

MonteCarloConfig mc_config(const Common& c) {
  if (c.mc_draws == 0) throw FlagError("--mc-draws must be positive");
  return {c.mc_draws, c.seed, c.threads};
}

NullOptions null_options(const Common& c) {
  NullOptions o;
  o.mode = c.null_mode == "exact" ? NullMode::Exact : c.null_mode == "mc" ? NullMode::MonteCarlo : NullMode::Auto;
  o.mc = mc_config(c);
  return o;
}

RankTransform transform_of(const Common& c) {
  return c.statistic == "wilcoxon" ? RankTransform::wilcoxon() : RankTransform::stephenson(c.s);
}

json statistic_json(const Common& c) {
  json j = {{"name", c.statistic}};
  if (c.statistic == "stephenson") j["s"] = c.s;
  return j;
}

struct Input {
  ExperimentData data;
  std::string digest;
};

Input read_input(const Common& c) {
  std::ifstream in(c.data, std::ios::binary);
  if (!in) throw InputError("cannot read data file " + c.data);
  std::stringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();
  return {load_experiment(text, SchemaOptions{c.shuffle_seed}), sha256_hex(text)};
}

json null_json(const NullDistribution& d) {
  json j = {{"provenance", to_string(d.provenance())}};
  if (d.provenance() == Provenance::MonteCarlo) {
    j["draws"] = d.draws();
    j["seed"] = d.seed();
  }
  return j;
}

std::vector<int> ranks_for(int n, const std::vector<double>& quantiles) {
  std::vector<int> ks;
  for (double b : quantiles) {
    if (!(b > 0.0 && b <= 1.0)) throw FlagError("quantiles must lie in (0, 1]");
    const int k = std::max(1, static_cast<int>(population_rank(n, b)));
    if (!ks.empty() && k <= ks.back()) throw FlagError("quantiles must map to strictly increasing ranks");
    ks.push_back(k);
  }
  return ks;
}

IntervalFamily restrict_to(const IntervalFamily& f, const std::vector<int>& ks) {
  IntervalFamily out = f;
  out.entries.clear();
  for (int k : ks) {
    const auto* iv = f.find(k);
    if (!iv) throw InvariantError("family has no entry for k=" + std::to_string(k));
    out.entries.push_back({static_cast<double>(k), *iv});
  }
  return out;
}

void add_uninformative_warning(IntervalFamily& f) {
  if (std::none_of(f.entries.begin(), f.entries.end(), [](const FamilyEntry& e) { return e.interval.informative(); }))
    f.warnings.push_back("no interval in the family is informative (every lower bound is -inf)");
}

void require_nested(const IntervalFamily& f) {
  if (!f.nested()) throw InvariantError("simultaneous family is not nested in k");
}

struct Result {
  json body;
  std::string csv;
};

// quantile-ci ---------------------------------------------------------------

struct QuantileFlags {
  Common common;
  std::string method = "m1";
  double gamma = 0.5;
  std::vector<double> quantiles;
  bool all = false;
  bool individual = false;
  std::string sides = "both";
  double threshold = 0.0;
};

Result cmd_quantile_ci(const QuantileFlags& q) {
  if (q.all && !q.quantiles.empty()) throw FlagError("--all and --quantiles are mutually exclusive");
  if (q.method == "m2" && q.all) throw FlagError("m2 needs an explicit --quantiles list; --all is not supported");
  if (q.method == "m2" && q.quantiles.empty()) throw FlagError("m2 requires --quantiles");
  if (q.individual && q.method != "m2") throw FlagError("--individual applies to m2 only");
  if (!(q.common.alpha > 0.0 && q.common.alpha < 1.0)) throw FlagError("alpha must lie in (0, 1)");
  const auto in = read_input(q.common);
  const auto& d = in.data;
  const auto t = transform_of(q.common);
  const RankTransform ts[] = {t};
  const auto opts = null_options(q.common);
  const bool stratified = d.num_strata() > 1;
  if (stratified && q.method != "m1") throw FlagError("stratified data support --method m1 only");

  const auto nulls = stratified ? scre_nulls(d, ts, opts) : cre_nulls(d.n(), d.n_treated(), t, opts);
  json extra = json::object();
  IntervalFamily family;
  if (q.method == "m0") {
    family = original_intervals(d, t, q.common.alpha, nulls.treated);
    require_nested(family);
  } else if (q.method == "m1") {
    if (q.common.alpha >= 0.5) throw FlagError("m1 needs alpha < 0.5 (level 1 - 2 alpha)");
    family = stratified ? combine_scre(d, ts, q.common.alpha, nulls) : combine_treated_control(d, t, q.common.alpha, nulls);
    require_nested(family);
  } else {
    const auto ks = ranks_for(d.n(), q.quantiles);
    const bool both = q.sides == "both";
    if (q.individual) {
      family = individual_cis(d, t, ks, q.common.alpha, q.gamma, nulls, both);
    } else {
      const auto plan = plan_simultaneous(d.n(), d.n_treated(), ks, q.common.alpha, q.gamma, both, mc_config(q.common));
      family = simultaneous_cis(d, t, plan, nulls);
      require_nested(family);
      extra["k_primes_treated"] = plan.treated.k_primes;
      extra["correction_treated"] = plan.treated.correction;
      if (plan.control) {
        extra["k_primes_control"] = plan.control->k_primes;
        extra["correction_control"] = plan.control->correction;
      }
    }
  }
  const bool full = family.entries.size() == static_cast<std::size_t>(d.n()) && family.simultaneous;
  if (full) {
    const int count = count_lower_bound(family, q.threshold, d.n());
    extra["effect_count_lower_bound"] = {{"threshold", q.threshold},
                                         {"count", count},
                                         {"proportion", static_cast<double>(count) / d.n()}};
    int threshold_k = 0;
    for (const auto& e : family.entries)
      if (!e.interval.informative()) threshold_k = static_cast<int>(e.index);
    extra["largest_uninformative_k"] = threshold_k;
  }
  if (q.method != "m2" && !q.quantiles.empty()) family = restrict_to(family, ranks_for(d.n(), q.quantiles));
  add_uninformative_warning(family);

  Result r;
  r.body = {{"schema", "iteq.quantile_ci"},
            {"version", kSchemaVersion},
            {"method", q.method},
            {"statistic", statistic_json(q.common)},
            {"n", d.n()},
            {"n_treated", d.n_treated()},
            {"null", null_json(nulls.treated)},
            {"family", to_json(family)}};
  if (q.method == "m2") {
    r.body["gamma"] = q.gamma;
    r.body["sides"] = q.sides;
    r.body["simultaneous"] = !q.individual;
  }
  for (auto& [k, v] : extra.items()) r.body[k] = v;
  std::ostringstream csv;
  write_family_csv(csv, family);
  r.csv = csv.str();
  return r;
}

// test ----------------------------------------------------------------------

struct TestFlags {
  Common common;
  std::string k;
  double c = 0.0;
  std::string scope = "all";
  std::string method = "original";
  double gamma = 0.5;
};

Result cmd_test(const TestFlags& f) {
  const auto in = read_input(f.common);
  const auto& d = in.data;
  const auto t = transform_of(f.common);
  const RankTransform ts[] = {t};
  const auto opts = null_options(f.common);
  const bool stratified = d.num_strata() > 1;
  int k = 0;
  if (f.k == "n") {
    k = f.scope == "treated" ? d.n_treated() : d.n();
  } else {
    try {
      std::size_t used = 0;
      k = std::stoi(f.k, &used);
      if (used != f.k.size()) throw std::invalid_argument(f.k);
    } catch (const std::exception&) {
      throw FlagError("--k must be an integer or \"n\"");
    }
  }
  const int top = f.scope == "treated" ? d.n_treated() : d.n();
  if (k < 0 || k > top) throw FlagError("--k out of range 0.." + std::to_string(top));
  if (f.method == "berger" && (stratified || f.scope != "all"))
    throw FlagError("--method berger needs unstratified data and --scope all");

  const auto dist = stratified ? scre_nulls(d, ts, opts).treated : cre_nulls(d.n(), d.n_treated(), t, opts).treated;
  PValueResult p;
  if (stratified)
    p = f.scope == "treated" ? pvalue_scre_treated(d, ts, k, f.c, dist) : pvalue_scre(d, ts, k, f.c, dist);
  else if (f.method == "berger")
    p = pvalue_berger(d, t, k, f.c, choose_kprime_single(d.n(), d.n_treated(), k, f.common.alpha, f.gamma), dist);
  else
    p = f.scope == "treated" ? pvalue_treated(d, t, k, f.c, dist) : pvalue_all(d, t, k, f.c, dist);

  Result r;
  r.body = {{"schema", "iteq.test"},
            {"version", kSchemaVersion},
            {"statistic", statistic_json(f.common)},
            {"n", d.n()},
            {"n_treated", d.n_treated()},
            {"null", null_json(dist)},
            {"result", to_json(p)}};
  r.csv = "k,c,scope,method,p_value\n" + std::to_string(k) + "," + format_double(f.c) + "," + f.scope + "," +
          std::string(to_string(p.method)) + "," + format_double(p.value) + "\n";
  return r;
}

// sensitivity ---------------------------------------------------------------

struct SensitivityFlags {
  Common common;
  std::vector<double> gamma_grid{1.0};
  bool log_gamma = false;
  std::string mode = "auto";
};

Result cmd_sensitivity(const SensitivityFlags& f) {
  const auto in = read_input(f.common);
  const auto& d = in.data;
  validate_matched_sets(d);
  const auto t = transform_of(f.common);
  const RankTransform ts[] = {t};
  std::vector<double> gammas;
  for (double g : f.gamma_grid)
    gammas.push_back((f.log_gamma ? SensitivityModel::from_log_gamma(g) : SensitivityModel::from_gamma(g)).gamma_bound);
  bool pairs = true;
  for (const auto& s : d.stratum_shapes()) pairs = pairs && s.size == 2;
  SensitivityMode mode = pairs ? SensitivityMode::PairsExact : SensitivityMode::GaussianGKR;
  if (f.mode == "pairs") {
    if (!pairs) throw FlagError("--mode pairs needs every matched set to be a pair");
    mode = SensitivityMode::PairsExact;
  } else if (f.mode == "gkr") {
    mode = SensitivityMode::GaussianGKR;
  }
  const auto curve = sensitivity_curve(d, ts, f.common.alpha, gammas, mode, null_options(f.common));

  json per_gamma = json::array();
  std::ostringstream csv;
  csv << "gamma,k,lower,closed\n";
  for (std::size_t i = 0; i < curve.gammas.size(); ++i) {
    per_gamma.push_back({{"gamma", curve.gammas[i]}, {"family", to_json(curve.families[i])}});
    for (const auto& e : curve.families[i].entries)
      csv << format_double(curve.gammas[i]) << ',' << format_double(e.index) << ',' << format_double(e.interval.lower)
          << ',' << (e.interval.closed ? "true" : "false") << '\n';
  }
  json largest = json::array();
  for (const auto& g : curve.largest_gamma_excluding_zero) largest.push_back(g ? json(*g) : json(nullptr));
  Result r;
  r.body = {{"schema", "iteq.sensitivity"},
            {"version", kSchemaVersion},
            {"statistic", statistic_json(f.common)},
            {"mode", mode == SensitivityMode::PairsExact ? "pairs" : "gkr"},
            {"alpha", f.common.alpha},
            {"sets", d.num_strata()},
            {"curve", per_gamma},
            {"largest_gamma_excluding_zero", largest}};
  r.csv = csv.str();
  return r;
}

// population-ci -------------------------------------------------------------

struct PopulationFlags {
  Common common;
  std::optional<long long> population_size;
  bool superpopulation = false;
  std::vector<double> betas{0.5, 0.6, 0.7, 0.8, 0.9};
  double gamma = 0.5;
  std::string units = "all";
  bool band = false;
};

Result cmd_population_ci(const PopulationFlags& f) {
  if (f.population_size.has_value() == f.superpopulation)
    throw FlagError("give exactly one of --population-size N and --superpopulation");
  const auto in = read_input(f.common);
  const auto& d = in.data;
  const auto t = transform_of(f.common);
  const RankTransform ts[] = {t};
  const auto target =
      f.superpopulation ? PopulationTarget::super(f.betas) : PopulationTarget::finite(*f.population_size, f.betas);
  const SampleUnits units = f.units == "treated" ? SampleUnits::Treated
                            : f.units == "control" ? SampleUnits::Control
                                                   : SampleUnits::All;
  auto family = population_cis(d, ts, target, f.common.alpha, mc_config(f.common), f.gamma, units);
  require_nested(family);
  if (f.band) family = population_band(family);
  add_uninformative_warning(family);
  Result r;
  r.body = {{"schema", "iteq.population_ci"},
            {"version", kSchemaVersion},
            {"statistic", statistic_json(f.common)},
            {"n", d.n()},
            {"n_treated", d.n_treated()},
            {"units", f.units},
            {"gamma", f.gamma},
            {"family", to_json(family)}};
  std::ostringstream csv;
  write_family_csv(csv, family);
  r.csv = csv.str();
  return r;
}

// simulate ------------------------------------------------------------------

struct SimulateFlags {
  Common common;
  std::string study = "method-comparison";
  int replications = 500;
  int n = 100;
  double treat_fraction = 0.5;
  std::vector<double> rho2{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
  std::vector<int> quantile_pcts{50, 60, 70, 80, 90};
  double alpha = 0.1;
  int s = 6;
  double gamma = 0.5;
  std::vector<double> gammas{0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
};

Result cmd_simulate(const SimulateFlags& f) {
  StudyOptions o;
  o.rho2s = f.rho2;
  o.quantile_pcts = f.quantile_pcts;
  o.n = f.n;
  o.treat_fraction = f.treat_fraction;
  o.replications = f.replications;
  o.alpha = f.alpha;
  o.stephenson_s = f.s;
  o.gamma = f.gamma;
  o.seed = f.common.seed;
  o.mc = mc_config(f.common);
  const auto rows = f.study == "gamma"
                        ? gamma_study(o, f.gammas)
                        : method_comparison(o, {Method::M0, Method::M1, Method::M2Simultaneous, Method::M2Individual});
  json jrows = json::array();
  for (const auto& row : rows)
    jrows.push_back({{"rho2", row.rho2},
                     {"quantile_pct", row.quantile_pct},
                     {"method_or_gamma", row.method_or_gamma},
                     {"median_lower", extended_to_json(row.median_lower)},
                     {"n_informative", row.n_informative}});
  Result r;
  r.body = {{"schema", "iteq.simulation"}, {"version", kSchemaVersion}, {"study", f.study}, {"rows", jrows}};
  std::ostringstream csv;
  write_rows_csv(csv, rows);
  r.csv = csv.str();
  return r;
}

// Driver --------------------------------------------------------------------

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path);
  out << text;
}

json read_json_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot read " + path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw InputError(path + ": " + e.what());
  }
}

struct Command {
  std::string name;
  Flags flags;
  std::function<Result()> run;
  const Common* common;
};

// Rebuilds the argument list of a manifest and checks the input is unchanged.
std::vector<std::string> replay_args(const json& manifest, const std::string& output) {
  if (!manifest.is_object() || manifest.value("schema", "") != "iteq.run_manifest")
    throw InputError("not a run manifest");
  if (manifest.value("version", 0) != kSchemaVersion) throw InputError("unsupported manifest version");
  std::vector<std::string> args{"iteq", manifest.at("command").get<std::string>()};
  for (const auto& [name, value] : manifest.at("flags").items()) {
    if (value.is_boolean()) {
      if (value.get<bool>()) args.push_back("--" + name);
    } else if (!value.get<std::string>().empty()) {
      args.push_back("--" + name + "=" + value.get<std::string>());
    }
  }
  args.push_back("--output=" + output);
  const auto& input = manifest.at("input");
  if (!input.is_null()) {
    std::ifstream in(input.at("path").get<std::string>(), std::ios::binary);
    if (!in) throw InputError("cannot read manifest input " + input.at("path").get<std::string>());
    std::stringstream buf;
    buf << in.rdbuf();
    if (sha256_hex(buf.str()) != input.at("sha256").get<std::string>())
      throw InputError("input file changed since the manifest was written");
  }
  return args;
}

int run_parsed(const std::vector<std::string>& args, std::ostream& out, std::ostream& err, int depth);

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err, int depth) {
  CLI::App app{"Randomization inference for quantiles of individual treatment effects", "iteq"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kLibraryVersion));

  std::string output = "iteq_out";
  std::string manifest_out;
  const std::uint64_t seed = default_seed();
  std::vector<Command> commands;
  commands.reserve(5);

  QuantileFlags qf;
  TestFlags tf;
  SensitivityFlags sf;
  PopulationFlags pf;
  SimulateFlags mf;
  for (Common* c : {&qf.common, &tf.common, &sf.common, &pf.common, &mf.common}) c->seed = seed;

  auto add_output = [&](CLI::App* sub) {
    sub->add_option("--output", output, "Output prefix for .json, .csv and .manifest.json");
    sub->add_option("--manifest", manifest_out, "Manifest path (default PREFIX.manifest.json)");
  };

  {
    Flags f(app.add_subcommand("quantile-ci", "Intervals for quantiles of individual effects"));
    add_common(f, qf.common, true);
    f.add("method", qf.method, "m0 (original), m1 (treated + control), m2 (corrected)")
        ->check(CLI::IsMember({"m0", "m1", "m2"}));
    f.add("gamma", qf.gamma, "Share of alpha spent on the sampling correction (m2)");
    f.add("quantiles", qf.quantiles, "Quantile levels in (0, 1], comma separated");
    f.flag("all", qf.all, "Every sample quantile k = 1..n");
    f.flag("individual", qf.individual, "m2: one interval per quantile rather than simultaneous");
    f.add("sides", qf.sides, "m2: both orientations at alpha/2 each, or treated only")
        ->check(CLI::IsMember({"both", "treated"}));
    f.add("threshold", qf.threshold, "Effect threshold for the count lower bound");
    add_output(f.app());
    commands.push_back({"quantile-ci", f, [&] { return cmd_quantile_ci(qf); }, &qf.common});
  }
  {
    Flags f(app.add_subcommand("test", "p-value for H: tau_(k) <= c"));
    add_common(f, tf.common, true);
    f.add("k", tf.k, "Quantile index, or n")->required();
    f.add("c", tf.c, "Threshold");
    f.add("scope", tf.scope, "all units or treated units")->check(CLI::IsMember({"all", "treated"}));
    f.add("method", tf.method, "original or berger")->check(CLI::IsMember({"original", "berger"}));
    f.add("gamma", tf.gamma, "berger: share of alpha for the correction");
    add_output(f.app());
    commands.push_back({"test", f, [&] { return cmd_test(tf); }, &tf.common});
  }
  {
    Flags f(app.add_subcommand("sensitivity", "Sensitivity analysis for matched observational studies"));
    add_common(f, sf.common, true);
    f.add("gamma-grid", sf.gamma_grid, "Values of Gamma (or log Gamma with --log-gamma)");
    f.flag("log-gamma", sf.log_gamma, "Interpret the grid as log Gamma");
    f.add("mode", sf.mode, "pairs, gkr or auto")->check(CLI::IsMember({"pairs", "gkr", "auto"}));
    add_output(f.app());
    commands.push_back({"sensitivity", f, [&] { return cmd_sensitivity(sf); }, &sf.common});
  }
  {
    Flags f(app.add_subcommand("population-ci", "Intervals for finite-population or superpopulation quantiles"));
    add_common(f, pf.common, true);
    auto* size = f.add("population-size", pf.population_size, "Finite population size N");
    auto* super = f.flag("superpopulation", pf.superpopulation, "Target the superpopulation");
    size->excludes(super);
    f.add("betas", pf.betas, "Quantile levels, comma separated");
    f.add("gamma", pf.gamma, "Share of alpha spent on the sampling correction");
    f.add("units", pf.units, "Sample used: all, treated or control")->check(CLI::IsMember({"all", "treated", "control"}));
    f.flag("band", pf.band, "Emit the step-function band over beta");
    add_output(f.app());
    commands.push_back({"population-ci", f, [&] { return cmd_population_ci(pf); }, &pf.common});
  }
  {
    Flags f(app.add_subcommand("simulate", "Simulation studies"));
    add_common(f, mf.common, false);
    f.add("study", mf.study, "method-comparison or gamma")->check(CLI::IsMember({"method-comparison", "gamma"}));
    f.add("replications", mf.replications, "Replications per setting");
    f.add("n", mf.n, "Units per experiment");
    f.add("treat-fraction", mf.treat_fraction, "Share of treated units");
    f.add("rho2", mf.rho2, "Correlation levels");
    f.add("quantiles", mf.quantile_pcts, "Quantile percentages");
    f.add("alpha", mf.alpha, "Significance level");
    f.add("s", mf.s, "Stephenson parameter");
    f.add("gamma", mf.gamma, "Budget split for M2 in method-comparison");
    f.add("gammas", mf.gammas, "Budget splits for the gamma study");
    add_output(f.app());
    commands.push_back({"simulate", f, [&] { return cmd_simulate(mf); }, &mf.common});
  }
  std::string replay_manifest;
  auto* replay = app.add_subcommand("replay", "Re-run a command from its manifest");
  replay->add_option("--manifest", replay_manifest, "Manifest to replay")->required();
  replay->add_option("--output", output, "Output prefix for the replayed run");

  std::vector<std::string> rev(args.rbegin(), args.rend() - (args.empty() ? 0 : 1));
  try {
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 3;
  }

  if (replay->parsed()) {
    if (depth > 0) throw InputError("a manifest cannot replay another replay");
    return run_parsed(replay_args(read_json_file(replay_manifest), output), out, err, depth + 1);
  }
  for (auto& cmd : commands) {
    if (!cmd.flags.app()->parsed()) continue;
    const auto start = std::chrono::steady_clock::now();
    const Result r = cmd.run();
    const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const std::string body = r.body.dump(2) + "\n";
    write_file(output + ".json", body);
    write_file(output + ".csv", r.csv);

    json input = nullptr;
    if (!cmd.common->data.empty()) {
      std::ifstream in(cmd.common->data, std::ios::binary);
      std::stringstream buf;
      buf << in.rdbuf();
      input = {{"path", cmd.common->data}, {"sha256", sha256_hex(buf.str())}};
    }
    const json manifest = {{"schema", "iteq.run_manifest"},
                           {"version", kSchemaVersion},
                           {"library_version", kLibraryVersion},
                           {"command", cmd.name},
                           {"flags", cmd.flags.resolved()},
                           {"input", input},
                           {"seeds",
                            {{"seed", cmd.common->seed}, {"shuffle_seed", render(cmd.common->shuffle_seed)}}},
                           {"mc_draws", cmd.common->mc_draws},
                           {"outputs", json::array({output + ".json", output + ".csv"})},
                           {"elapsed_seconds", elapsed}};
    write_file(manifest_out.empty() ? output + ".manifest.json" : manifest_out, manifest.dump(2) + "\n");
    out << body;
    return 0;
  }
  throw InvariantError("no subcommand ran");
}

int run_parsed(const std::vector<std::string>& args, std::ostream& out, std::ostream& err, int depth) {
  try {
    return dispatch(args, out, err, depth);
  } catch (const InputError& e) {
    err << "input error: " << e.what() << '\n';
    return 2;
  } catch (const FlagError& e) {
    err << "flag error: " << e.what() << '\n';
    return 3;
  } catch (const CapacityError& e) {
    err << "flag error: " << e.what() << '\n';
    return 3;
  } catch (const InvariantError& e) {
    err << "internal invariant failure: " << e.what() << '\n';
    return 4;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << '\n';
    return 4;
  }
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  return run_parsed(args, out, err, 0);
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  return run_cli(std::vector<std::string>(argv, argv + argc), out, err);
}

}  // namespace iteq
