#include "iteq/serialize.hpp"

#include <array>
#include <charconv>
#include <cmath>
#include <stdexcept>

namespace iteq {

using nlohmann::json;

namespace {

constexpr const char* kFamilySchema = "iteq.interval_family";
constexpr const char* kNullSchema = "iteq.null_distribution";

void require_schema(const json& j, const char* schema) {
  if (!j.is_object() || !j.contains("schema") || j.at("schema") != schema)
    throw InputError(std::string("expected a JSON document with schema \"") + schema + "\"");
  if (!j.contains("version") || j.at("version") != kSchemaVersion)
    throw InputError(std::string(schema) + ": unsupported schema version");
}

template <class Enum, std::size_t N>
Enum enum_from(const json& j, const std::array<Enum, N>& values, const char* what) {
  const auto text = j.get<std::string>();
  for (Enum v : values)
    if (to_string(v) == text) return v;
  throw InputError(std::string("unknown ") + what + " \"" + text + "\"");
}

constexpr std::array kTargetKinds{TargetKind::SampleQuantilesAll, TargetKind::SampleQuantilesTreated,
                                  TargetKind::SampleQuantilesControl, TargetKind::PopulationQuantiles,
                                  TargetKind::EffectCount};
constexpr std::array kProvenances{Provenance::ExactEnumeration, Provenance::MonteCarlo,
                                  Provenance::GaussianApproximation};

std::string_view design_name(DesignKind k) {
  switch (k) {
    case DesignKind::CRE:
      return "cre";
    case DesignKind::SCRE:
      return "scre";
    case DesignKind::Sensitivity:
      return "sensitivity";
  }
  return "cre";
}

DesignKind design_from(const std::string& s) {
  for (auto k : {DesignKind::CRE, DesignKind::SCRE, DesignKind::Sensitivity})
    if (design_name(k) == s) return k;
  throw InputError("unknown design kind \"" + s + "\"");
}

}  // namespace

std::string format_double(double x) {
  if (x == kNegInf) return "-inf";
  if (x == kInf) return "inf";
  if (std::isnan(x)) return "nan";
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, r.ptr);
}

double parse_double(std::string_view text) {
  if (text == "-inf") return kNegInf;
  if (text == "inf") return kInf;
  double x = 0;
  const auto r = std::from_chars(text.data(), text.data() + text.size(), x);
  if (r.ec != std::errc() || r.ptr != text.data() + text.size())
    throw InputError("not a number: \"" + std::string(text) + "\"");
  return x;
}

json extended_to_json(double x) {
  if (std::isinf(x)) return format_double(x);
  return x;
}

double extended_from_json(const json& j) {
  if (j.is_string()) return parse_double(j.get<std::string>());
  if (j.is_number()) return j.get<double>();
  throw InputError("expected a number or \"-inf\"");
}

std::string_view to_string(TargetKind kind) {
  switch (kind) {
    case TargetKind::SampleQuantilesAll:
      return "sample_quantiles_all";
    case TargetKind::SampleQuantilesTreated:
      return "sample_quantiles_treated";
    case TargetKind::SampleQuantilesControl:
      return "sample_quantiles_control";
    case TargetKind::PopulationQuantiles:
      return "population_quantiles";
    case TargetKind::EffectCount:
      return "effect_count";
  }
  return "sample_quantiles_all";
}

std::string_view to_string(Provenance provenance) {
  switch (provenance) {
    case Provenance::ExactEnumeration:
      return "exact";
    case Provenance::MonteCarlo:
      return "monte_carlo";
    case Provenance::GaussianApproximation:
      return "gaussian";
  }
  return "exact";
}

std::string_view to_string(PValueMethod method) {
  switch (method) {
    case PValueMethod::Original:
      return "original";
    case PValueMethod::TreatedScope:
      return "treated_scope";
    case PValueMethod::BergerCorrected:
      return "berger_corrected";
  }
  return "original";
}

json to_json(const IntervalFamily& family) {
  json target = {{"kind", to_string(family.target.kind)}};
  if (family.target.kind == TargetKind::PopulationQuantiles)
    target["population_size"] = family.target.population_size ? json(*family.target.population_size) : json(nullptr);
  if (family.target.kind == TargetKind::EffectCount) target["threshold"] = family.target.threshold;
  json entries = json::array();
  for (const auto& e : family.entries)
    entries.push_back({{"index", e.index}, {"lower", extended_to_json(e.interval.lower)}, {"closed", e.interval.closed}});
  return {{"schema", kFamilySchema},
          {"version", kSchemaVersion},
          {"target", target},
          {"level", family.level},
          {"simultaneous", family.simultaneous},
          {"entries", entries},
          {"warnings", family.warnings}};
}

IntervalFamily family_from_json(const json& j) {
  require_schema(j, kFamilySchema);
  try {
    IntervalFamily f;
    const auto& t = j.at("target");
    f.target.kind = enum_from(t.at("kind"), kTargetKinds, "target kind");
    if (t.contains("population_size") && !t.at("population_size").is_null())
      f.target.population_size = t.at("population_size").get<long long>();
    if (t.contains("threshold")) f.target.threshold = t.at("threshold").get<double>();
    f.level = j.at("level").get<double>();
    f.simultaneous = j.at("simultaneous").get<bool>();
    for (const auto& e : j.at("entries"))
      f.entries.push_back({e.at("index").get<double>(), {extended_from_json(e.at("lower")), e.at("closed").get<bool>()}});
    if (j.contains("warnings")) f.warnings = j.at("warnings").get<std::vector<std::string>>();
    return f;
  } catch (const json::exception& e) {
    throw InputError(std::string(kFamilySchema) + ": " + e.what());
  }
}

void write_family_csv(std::ostream& out, const IntervalFamily& family) {
  out << "k,lower,closed,simultaneous_level\n";
  const std::string level = family.simultaneous ? format_double(family.level) : "";
  for (const auto& e : family.entries)
    out << format_double(e.index) << ',' << format_double(e.interval.lower) << ','
        << (e.interval.closed ? "true" : "false") << ',' << level << '\n';
}

json to_json(const NullDistribution& dist) {
  json strata = json::array();
  for (const auto& s : dist.design().strata) strata.push_back({s.size, s.treated});
  return {{"schema", kNullSchema},
          {"version", kSchemaVersion},
          {"provenance", to_string(dist.provenance())},
          {"design",
           {{"kind", design_name(dist.design().kind)},
            {"strata", strata},
            {"gamma", dist.design().gamma},
            {"structure", dist.design().structure}}},
          {"support", dist.support()},
          {"tail", dist.tail()},
          {"draws", dist.draws()},
          {"seed", dist.seed()},
          {"gaussian", {{"mean", dist.gaussian_mean()}, {"sd", dist.gaussian_sd()}, {"lattice_step", dist.lattice_step()}}}};
}

NullDistribution null_distribution_from_json(const json& j) {
  require_schema(j, kNullSchema);
  try {
    NullDesign design;
    const auto& d = j.at("design");
    design.kind = design_from(d.at("kind").get<std::string>());
    for (const auto& s : d.at("strata")) design.strata.push_back({s.at(0).get<int>(), s.at(1).get<int>()});
    design.gamma = d.at("gamma").get<double>();
    design.structure = d.at("structure").get<std::string>();
    const auto& g = j.at("gaussian");
    return NullDistribution::restore(enum_from(j.at("provenance"), kProvenances, "provenance"), std::move(design),
                                     j.at("support").get<std::vector<double>>(), j.at("tail").get<std::vector<double>>(),
                                     j.at("draws").get<std::uint64_t>(), j.at("seed").get<std::uint64_t>(),
                                     g.at("mean").get<double>(), g.at("sd").get<double>(),
                                     g.at("lattice_step").get<double>());
  } catch (const json::exception& e) {
    throw InputError(std::string(kNullSchema) + ": " + e.what());
  }
}

json to_json(const PValueResult& p) {
  json out = {{"p_value", p.value},
              {"k", p.hypothesis.k},
              {"c", extended_to_json(p.hypothesis.c)},
              {"scope", to_string(p.hypothesis.scope)},
              {"method", to_string(p.method)},
              {"statistic_min", extended_to_json(p.statistic_min)},
              {"null_provenance", to_string(p.null_provenance)}};
  if (p.method == PValueMethod::BergerCorrected) {
    out["k_prime"] = p.k_prime;
    out["correction"] = p.correction;
  }
  return out;
}

}  // namespace iteq
