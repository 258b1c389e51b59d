#pragma once

#include "json.hpp"

#include "prosteval/cluster.hpp"
#include "prosteval/metrics.hpp"
#include "prosteval/phantom.hpp"

namespace prosteval {

using json = nlohmann::json;

/// One object per cluster: grade, voxel_count, volume_mm3, score, zone, bbox.
json lesion_map_to_json(const LesionMap& map);

json froc_to_json(const FrocCurve& curve);

/// grade_order, counts, include_fn_as_gs6, kappa, degenerate and bootstrap stats.
json confusion_to_json(const ConfusionMatrix& cm, const KappaResult& kappa);

json phantom_config_to_json(const PhantomConfig& config);
/// Missing keys keep their defaults.
PhantomConfig phantom_config_from_json(const json& j);

json ledger_to_json(const PhantomLedger& ledger);
PhantomLedger ledger_from_json(const json& j);

json read_json_file(const std::filesystem::path& path);
/// Pretty-printed with a trailing newline.
void write_json_file(const json& j, const std::filesystem::path& path);

}  // namespace prosteval
