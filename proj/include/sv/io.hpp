#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "sv/model.hpp"
#include "sv/retrieval_reuse.hpp"
#include "sv/sparse_moe.hpp"

namespace sv {

nlohmann::json config_to_json(const ModelConfig& cfg);
ModelConfig config_from_json(const nlohmann::json& j); // missing fields = defaults

nlohmann::json anchors_to_json(const AnchorSet& a);
AnchorSet anchors_from_json(const nlohmann::json& j);

nlohmann::json thresholds_to_json(const ThresholdMap& m);
ThresholdMap thresholds_from_json(const nlohmann::json& j);

void save_json(const std::string& path, const nlohmann::json& j);
nlohmann::json load_json(const std::string& path);

/* Weight file: "SVWT" magic, u32 format version, u64 header byte count, JSON
 * header {config, tensors: [{name, shape, offset}]}, then the raw float32
 * payload in directory order. Offsets index into the payload, are contiguous
 * from 0, and the payload length equals the directory total. All integers
 * and floats little-endian. */
inline constexpr std::uint32_t kWeightFormatVersion = 1;

void save_weights(const std::string& path, const Weights& w);
std::shared_ptr<Weights> load_weights(const std::string& path);

/* Prompt corpus: one whitespace-separated token-id sequence per line; blank
 * lines ignored. */
std::vector<std::vector<int>> parse_prompts(std::istream& in);
std::vector<std::vector<int>> load_prompts(const std::string& path);

/* 64-bit FNV-1a; metric records carry fnv1a_hash(canonical config dump) so a
 * record can be tied back to the exact configuration that produced it. */
std::uint64_t fnv1a_hash(std::string_view bytes);

} // namespace sv
