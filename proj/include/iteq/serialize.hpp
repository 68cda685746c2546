// JSON and CSV forms of results. Extended-real bounds are written as the
// strings "-inf" / "inf"; every JSON document carries a schema name and
// version.

#pragma once

#include "iteq/core.hpp"
#include "iteq/cre_inference.hpp"
#include "iteq/rank_engine.hpp"

#include <json.hpp>

#include <ostream>
#include <string>

namespace iteq {

inline constexpr int kSchemaVersion = 1;

/// Shortest round-trip decimal form; infinities as "-inf" / "inf".
std::string format_double(double x);
/// Inverse of format_double. Throws InputError.
double parse_double(std::string_view text);

nlohmann::json extended_to_json(double x);
double extended_from_json(const nlohmann::json& j);

std::string_view to_string(TargetKind kind);
std::string_view to_string(Provenance provenance);
std::string_view to_string(PValueMethod method);

nlohmann::json to_json(const IntervalFamily& family);
/// Throws InputError on a wrong schema, version or shape.
IntervalFamily family_from_json(const nlohmann::json& j);

/// Columns k, lower, closed, simultaneous_level (empty when the family is not
/// simultaneous).
void write_family_csv(std::ostream& out, const IntervalFamily& family);

nlohmann::json to_json(const NullDistribution& dist);
NullDistribution null_distribution_from_json(const nlohmann::json& j);

nlohmann::json to_json(const PValueResult& p);

}  // namespace iteq
