#pragma once

#include <string>

#include "personaforge/jsonl.hpp"

namespace personaforge {

/// Validate `value` against the subset of JSON Schema the shipped schemas
/// use: type, properties, required, items, enum, minimum, maximum,
/// additionalProperties (boolean), and type unions like ["string","null"].
/// Throws SchemaViolation with a JSON-pointer-ish path on the first failure.
void validate_schema(const json& value, const json& schema, const std::string& path = "$");

json load_schema(const std::string& path);

}  // namespace personaforge
