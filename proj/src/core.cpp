#include "iteq/core.hpp"

#include "iteq/random.hpp"

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdlib>
#include <map>
#include <numeric>
#include <sstream>

namespace iteq {

// ExperimentData -----------------------------------------------------------

ExperimentData ExperimentData::create(std::vector<int> assignment, std::vector<double> outcome,
                                      std::vector<std::string> strata,
                                      std::vector<std::string> unit_ids) {
  if (assignment.size() != outcome.size())
    throw InputError("assignment and outcome lengths differ");
  if (!strata.empty() && strata.size() != assignment.size())
    throw InputError("stratum labels must be given for every unit");
  if (!unit_ids.empty() && unit_ids.size() != assignment.size())
    throw InputError("unit ids must be given for every unit");

  ExperimentData d;
  for (std::size_t i = 0; i < assignment.size(); ++i) {
    if (assignment[i] != 0 && assignment[i] != 1)
      throw InputError("assignment of row " + std::to_string(i + 1) + " is not 0 or 1");
    if (!std::isfinite(outcome[i]))
      throw InputError("outcome of row " + std::to_string(i + 1) + " is not finite");
  }
  d.z_ = std::move(assignment);
  d.y_ = std::move(outcome);
  d.unit_ids_ = std::move(unit_ids);
  d.n_treated_ = static_cast<int>(std::count(d.z_.begin(), d.z_.end(), 1));
  if (d.n_treated_ < 1) throw InputError("no treated units");
  if (d.n_treated_ == d.n()) throw InputError("no control units");

  d.stratum_of_.assign(d.z_.size(), 0);
  if (strata.empty()) {
    d.members_.emplace_back(static_cast<std::size_t>(d.n()));
    std::iota(d.members_[0].begin(), d.members_[0].end(), 0);
  } else {
    std::map<std::string, int> index_of;
    for (std::size_t i = 0; i < strata.size(); ++i) {
      auto [it, inserted] = index_of.try_emplace(strata[i], static_cast<int>(d.stratum_labels_.size()));
      if (inserted) {
        d.stratum_labels_.push_back(strata[i]);
        d.members_.emplace_back();
      }
      d.stratum_of_[i] = it->second;
      d.members_[static_cast<std::size_t>(it->second)].push_back(static_cast<int>(i));
    }
    for (int s = 0; s < d.num_strata(); ++s) {
      const StratumShape shape = d.stratum_shape(s);
      if (shape.treated == 0 || shape.treated == shape.size)
        throw InputError("stratum '" + d.stratum_labels_[static_cast<std::size_t>(s)] +
                         "' needs at least one treated and one control unit");
    }
  }
  return d;
}

StratumShape ExperimentData::stratum_shape(int s) const {
  StratumShape shape;
  for (int i : stratum_units(s)) {
    ++shape.size;
    shape.treated += z(i);
  }
  return shape;
}

std::vector<StratumShape> ExperimentData::stratum_shapes() const {
  std::vector<StratumShape> out;
  out.reserve(static_cast<std::size_t>(num_strata()));
  for (int s = 0; s < num_strata(); ++s) out.push_back(stratum_shape(s));
  return out;
}

ExperimentData ExperimentData::shuffled(std::uint64_t seed) const {
  std::vector<std::size_t> perm(z_.size());
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  Rng rng(seed);
  for (std::size_t i = perm.size(); i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i)]);

  std::vector<int> z(perm.size());
  std::vector<double> y(perm.size());
  std::vector<std::string> strata, ids;
  for (std::size_t i = 0; i < perm.size(); ++i) {
    z[i] = z_[perm[i]];
    y[i] = y_[perm[i]];
    if (stratified()) strata.push_back(stratum_labels_[static_cast<std::size_t>(stratum_of_[perm[i]])]);
    if (!unit_ids_.empty()) ids.push_back(unit_ids_[perm[i]]);
  }
  ExperimentData out = create(std::move(z), std::move(y), std::move(strata), std::move(ids));
  // Compose with any earlier shuffle so the permutation always maps to file rows.
  if (!shuffle_.empty())
    for (auto& p : perm) p = shuffle_[p];
  out.shuffle_ = std::move(perm);
  out.shuffle_seed_ = seed;
  return out;
}

ExperimentData ExperimentData::stratum_subset(int s) const {
  std::vector<int> z;
  std::vector<double> y;
  for (int i : stratum_units(s)) {
    z.push_back(this->z(i));
    y.push_back(this->y(i));
  }
  return create(std::move(z), std::move(y));
}

ExperimentData ExperimentData::without_strata() const {
  if (!stratified()) return *this;
  ExperimentData out = create(z_, y_, {}, unit_ids_);
  out.shuffle_ = shuffle_;
  out.shuffle_seed_ = shuffle_seed_;
  return out;
}

// CSV loading --------------------------------------------------------------

namespace {

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && (s[b] == ' ' || s[b] == '\t' || s[b] == '\r')) ++b;
  while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\r')) --e;
  std::string out(s.substr(b, e - b));
  if (out.size() >= 2 && out.front() == '"' && out.back() == '"') out = out.substr(1, out.size() - 2);
  return out;
}

std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> fields;
  std::string current;
  bool quoted = false;
  for (char ch : line) {
    if (ch == '"') {
      quoted = !quoted;
      current.push_back(ch);
    } else if (ch == ',' && !quoted) {
      fields.push_back(trim(current));
      current.clear();
    } else {
      current.push_back(ch);
    }
  }
  fields.push_back(trim(current));
  return fields;
}

bool parse_double(const std::string& text, double& out) {
  if (text.empty()) return false;
  errno = 0;
  char* end = nullptr;
  out = std::strtod(text.c_str(), &end);
  return errno == 0 && end == text.c_str() + text.size();
}

}  // namespace

ExperimentData load_experiment(std::string_view csv_text, const SchemaOptions& options) {
  std::vector<std::string> lines;
  {
    std::size_t start = 0;
    while (start <= csv_text.size()) {
      std::size_t end = csv_text.find('\n', start);
      if (end == std::string_view::npos) end = csv_text.size();
      std::string line = trim(csv_text.substr(start, end - start));
      if (!line.empty()) lines.push_back(std::move(line));
      start = end + 1;
    }
  }
  if (lines.empty()) throw InputError("empty CSV: a header row is required");

  const auto header = split_csv_line(lines[0]);
  auto column = [&](std::string_view name) -> int {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return static_cast<int>(i);
    return -1;
  };
  const int zc = column("z"), yc = column("y"), sc = column("stratum"), ic = column("unit_id");
  if (zc < 0) throw InputError("missing required column 'z'");
  if (yc < 0) throw InputError("missing required column 'y'");

  std::vector<int> z;
  std::vector<double> y;
  std::vector<std::string> strata, ids;
  for (std::size_t r = 1; r < lines.size(); ++r) {
    const auto fields = split_csv_line(lines[r]);
    if (fields.size() != header.size())
      throw InputError("row " + std::to_string(r) + " has " + std::to_string(fields.size()) +
                       " fields, header has " + std::to_string(header.size()));
    double zv = 0.0, yv = 0.0;
    if (!parse_double(fields[static_cast<std::size_t>(zc)], zv) || (zv != 0.0 && zv != 1.0))
      throw InputError("row " + std::to_string(r) + ": z must be 0 or 1, got '" +
                       fields[static_cast<std::size_t>(zc)] + "'");
    if (!parse_double(fields[static_cast<std::size_t>(yc)], yv) || !std::isfinite(yv))
      throw InputError("row " + std::to_string(r) + ": y is not numeric: '" +
                       fields[static_cast<std::size_t>(yc)] + "'");
    z.push_back(static_cast<int>(zv));
    y.push_back(yv);
    if (sc >= 0) strata.push_back(fields[static_cast<std::size_t>(sc)]);
    if (ic >= 0) ids.push_back(fields[static_cast<std::size_t>(ic)]);
  }
  if (z.empty()) throw InputError("CSV has no data rows");

  ExperimentData data = ExperimentData::create(std::move(z), std::move(y), std::move(strata), std::move(ids));
  if (options.shuffle_seed) return data.shuffled(*options.shuffle_seed);
  return data;
}

ExperimentData switch_labels_negate(const ExperimentData& data) {
  std::vector<int> z(data.assignment().begin(), data.assignment().end());
  std::vector<double> y(data.outcome().begin(), data.outcome().end());
  for (auto& v : z) v = 1 - v;
  for (auto& v : y) v = -v;
  std::vector<std::string> strata;
  if (data.stratified())
    for (int s : data.stratum_of()) strata.push_back(data.stratum_labels()[static_cast<std::size_t>(s)]);
  ExperimentData out = ExperimentData::create(std::move(z), std::move(y), std::move(strata), data.unit_ids());
  out.shuffle_ = data.shuffle_;
  out.shuffle_seed_ = data.shuffle_seed_;
  return out;
}

// Rank transforms ----------------------------------------------------------

double binomial_coefficient(int m, int k) {
  if (k < 0 || m < k) return 0.0;
  double result = 1.0;
  for (int i = 1; i <= k; ++i) result *= static_cast<double>(m - k + i) / static_cast<double>(i);
  return std::round(result);
}

RankTransform RankTransform::wilcoxon() { return RankTransform{}; }

RankTransform RankTransform::stephenson(int s) {
  if (s < 2) throw FlagError("Stephenson parameter s must be at least 2");
  RankTransform t;
  t.kind_ = TransformKind::Stephenson;
  t.s_ = s;
  return t;
}

RankTransform RankTransform::table(std::vector<double> scores) {
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!std::isfinite(scores[i])) throw FlagError("score table entries must be finite");
    if (i > 0 && scores[i] < scores[i - 1]) throw FlagError("score table must be nondecreasing");
  }
  RankTransform t;
  t.kind_ = TransformKind::Table;
  t.table_ = std::move(scores);
  return t;
}

std::vector<double> RankTransform::scores(int n) const {
  std::vector<double> out(static_cast<std::size_t>(n));
  switch (kind_) {
    case TransformKind::Wilcoxon:
      for (int r = 1; r <= n; ++r) out[static_cast<std::size_t>(r - 1)] = r;
      break;
    case TransformKind::Stephenson:
      for (int r = 1; r <= n; ++r) out[static_cast<std::size_t>(r - 1)] = binomial_coefficient(r - 1, s_ - 1);
      break;
    case TransformKind::Table:
      if (static_cast<std::size_t>(n) > table_.size())
        throw FlagError("score table has " + std::to_string(table_.size()) + " entries, " +
                        std::to_string(n) + " needed");
      std::copy_n(table_.begin(), n, out.begin());
      break;
  }
  return out;
}

std::string RankTransform::describe() const {
  switch (kind_) {
    case TransformKind::Wilcoxon:
      return "wilcoxon";
    case TransformKind::Stephenson:
      return "stephenson(s=" + std::to_string(s_) + ")";
    case TransformKind::Table:
      return "table(" + std::to_string(table_.size()) + ")";
  }
  return "unknown";
}

// Intervals ----------------------------------------------------------------

std::string_view to_string(Scope scope) {
  switch (scope) {
    case Scope::AllUnits:
      return "all";
    case Scope::Treated:
      return "treated";
    case Scope::Control:
      return "control";
  }
  return "all";
}

bool OneSidedInterval::within(const OneSidedInterval& other) const {
  if (lower != other.lower) return lower > other.lower;
  return other.closed || !closed;
}

OneSidedInterval tighter(const OneSidedInterval& a, const OneSidedInterval& b) {
  return a.within(b) ? a : b;
}

const OneSidedInterval* IntervalFamily::find(double index) const {
  for (const auto& e : entries)
    if (e.index == index) return &e.interval;
  return nullptr;
}

bool IntervalFamily::nested() const {
  for (std::size_t i = 1; i < entries.size(); ++i)
    if (!entries[i].interval.within(entries[i - 1].interval)) return false;
  return true;
}

int count_lower_bound(const IntervalFamily& family, double c, int n) {
  for (const auto& e : family.entries)
    if (!e.interval.contains(c)) return n - static_cast<int>(e.index) + 1;
  return 0;
}

}  // namespace iteq
