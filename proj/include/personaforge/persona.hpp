#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "personaforge/gateway.hpp"

namespace personaforge {

enum class FeatureCategory { profile, behavior, output_constraint };

std::string to_string(FeatureCategory c);
FeatureCategory feature_category_from_string(const std::string& s);

struct FeatureDimension {
    std::string id;
    FeatureCategory category = FeatureCategory::profile;
    std::vector<std::string> allowed_values;
    bool is_constraint = false;
    bool supports_others = false;
};

struct PersonaBank {
    int version = 1;
    std::vector<FeatureDimension> dimensions;

    const FeatureDimension* find(const std::string& dimension_id) const;
};

enum class FeatureOrigin { bank, expanded };

struct PersonaFeature {
    std::string dimension_id;
    std::string value;
    FeatureOrigin origin = FeatureOrigin::bank;
};

struct Persona {
    std::string id;
    std::vector<PersonaFeature> features;
    uint64_t created_seed = 0;

    const PersonaFeature* find(const std::string& dimension_id) const;
};

struct ObservedFeature {
    std::string dimension_id;
    std::string value;
};

struct ObservedPersona {
    std::string persona_id;
    std::vector<ObservedFeature> observed;
    uint64_t mask_seed = 0;
    double mask_rate = 0.0;
};

struct PreferenceSpec {
    std::string text;
    std::string persona_id;
    std::string compiler_backend;
};

/// Parse and validate a persona bank file
/// ({version, dimensions:[{id, category, values, is_constraint, supports_others}]}).
PersonaBank load_bank(const std::string& path);
PersonaBank bank_from_json(const json& j);

/// Draw one value per dimension, uniformly. A drawn "others" sentinel on an
/// open dimension is replaced by an expand_open_value() result.
Persona sample_persona(const PersonaBank& bank, uint64_t seed, Gateway& gateway,
                       const std::string& id_hint = "");

/// Ask the compiler role for a novel value outside the dimension's taxonomy.
/// Up to three attempts; collisions are checked case-insensitively.
std::string expand_open_value(const FeatureDimension& dimension, const Persona& context,
                              Gateway& gateway, uint64_t seed);

/// Independently drop each soft feature with probability mask_rate. Hard
/// constraints are always retained. Deterministic per (persona, rate, seed):
/// the drop decision for a feature depends only on the seed and dimension id.
ObservedPersona mask_features(const Persona& persona, const PersonaBank& bank, double mask_rate,
                              uint64_t seed);

/// Compile the observed pairs into a natural-language preference spec via
/// the compiler role. Pairs are rendered in dimension-id lexicographic order.
PreferenceSpec compile_spec(const ObservedPersona& observed, Gateway& gateway,
                            std::optional<uint64_t> seed = std::nullopt);

json persona_to_json(const Persona& p);
Persona persona_from_json(const json& j);
json observed_to_json(const ObservedPersona& o);
ObservedPersona observed_from_json(const json& j);

}  // namespace personaforge
