// SPDX-License-Identifier: Apache-2.0
//
// Helpers for the JSON checkpoint layout: float64 arrays travel as base64 of
// their little-endian byte image, independent of the build's Scalar type.
#pragma once

#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "bandfuse/adam.hpp"
#include "bandfuse/nn.hpp"
#include "bandfuse/rng.hpp"

namespace bandfuse {

std::string base64_encode(std::string_view bytes);
std::string base64_decode(std::string_view text);

std::string encode_f64(std::span<const Scalar> values);
std::vector<Scalar> decode_f64(std::string_view text);

/// {name: {shape, data}} for every parameter.
nlohmann::json parameters_to_json(const ParameterSet& params);
/// Writes stored values into matching parameters; names and shapes must agree exactly.
void parameters_from_json(const nlohmann::json& j, ParameterSet& params);

nlohmann::json optimizer_to_json(const Adam& adam, const ParameterSet& params);
void optimizer_from_json(const nlohmann::json& j, Adam& adam, const ParameterSet& params);

nlohmann::json rng_to_json(const Rng& rng);
Rng rng_from_json(const nlohmann::json& j);

}  // namespace bandfuse
