#pragma once

#include <json.hpp>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "spa/evaluation.hpp"
#include "spa/extraction.hpp"
#include "spa/prediction.hpp"
#include "spa/simulator.hpp"

namespace spa {

using Json = nlohmann::ordered_json;

Json to_json(const TargetFeatureSet& tf, std::string_view objective);
TargetFeatureSet target_features_from_json(const nlohmann::json& j);

Json to_json(const PredictionReport& report);
PredictionReport prediction_from_json(const nlohmann::json& j);

/// {"attempts": [...]} for several attempts, a bare report for one.
Json predictions_to_json(std::span<const PredictionReport> attempts);
std::vector<PredictionReport> predictions_from_json(const nlohmann::json& j);

/// One row per instruction: index,text,P,rank; an attempt column leads when
/// there is more than one attempt.
std::string predictions_to_csv(std::span<const PredictionReport> attempts);

Json to_json(const CorrelationReport& report);
Json to_json(const CostReport& report);
Json to_json(const GroundTruthSeries& truth);

/// instruction_index,tally
std::string truth_to_csv(const GroundTruthSeries& truth);

/// Accepts `instruction_index,tally` rows, or `id,count` rows whose ids start
/// with `i<index>/`; the latter are summed per instruction and divided by `runs`.
GroundTruthSeries parse_truth_csv(std::string_view csv, std::size_t runs);

std::string csv_field(std::string_view text);

WorldConfig world_config_from_json(const nlohmann::json& j);
Json to_json(const WorldConfig& config);

std::string hex64(std::uint64_t value);

/// FNV-1a over the compact dump of a JSON value (object keys sorted).
std::string fingerprint(const nlohmann::json& normalized);

}  // namespace spa
