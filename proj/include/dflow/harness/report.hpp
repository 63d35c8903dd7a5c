#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "dflow/harness/config.hpp"
#include "dflow/optimize.hpp"

namespace dflow::harness {

inline constexpr int report_schema_version = 1;

/// Doubles print in the shortest form that reads back to the same value.
[[nodiscard]] nlohmann::json vec_json(const Vec& v);
[[nodiscard]] Vec json_vec(const nlohmann::json& j);

[[nodiscard]] nlohmann::json to_json(const ExperimentConfig& cfg);
[[nodiscard]] nlohmann::json to_json(const RunReport& report);

/// %.17g
[[nodiscard]] std::string format_double(double v);

/// One row per recorded outer iteration:
/// outer,updates,cost,base_cost,grad_norm,x0_norm,step
[[nodiscard]] std::string iterates_csv(const RunReport& report);

/// Forward trajectories of every recorded iterate's x0:
/// outer,t,x_0,...,x_{d-1}
[[nodiscard]] std::string snapshots_csv(const FlowField& field, const RunReport& report);

[[nodiscard]] std::string text_summary(const RunReport& report);

/// Writes to a temporary sibling file, then renames it over `path`.
void write_atomic(const std::filesystem::path& path, const std::string& content);

} // namespace dflow::harness
