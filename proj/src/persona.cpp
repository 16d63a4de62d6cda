#include "personaforge/persona.hpp"

#include <algorithm>
#include <cstdio>
#include <set>

#include "personaforge/errors.hpp"
#include "personaforge/prompts.hpp"
#include "personaforge/rng.hpp"
#include "personaforge/text.hpp"

namespace personaforge {

std::string to_string(FeatureCategory c) {
    switch (c) {
        case FeatureCategory::profile: return "profile";
        case FeatureCategory::behavior: return "behavior";
        case FeatureCategory::output_constraint: return "output_constraint";
    }
    return "profile";
}

FeatureCategory feature_category_from_string(const std::string& s) {
    if (s == "profile") return FeatureCategory::profile;
    if (s == "behavior") return FeatureCategory::behavior;
    if (s == "output_constraint") return FeatureCategory::output_constraint;
    throw Error("unknown feature category: " + s);
}

const FeatureDimension* PersonaBank::find(const std::string& dimension_id) const {
    for (const auto& d : dimensions)
        if (d.id == dimension_id) return &d;
    return nullptr;
}

const PersonaFeature* Persona::find(const std::string& dimension_id) const {
    for (const auto& f : features)
        if (f.dimension_id == dimension_id) return &f;
    return nullptr;
}

PersonaBank bank_from_json(const json& j) {
    PersonaBank bank;
    bank.version = j.value("version", 1);
    std::set<std::string> seen_ids;
    for (const auto& d : j.at("dimensions")) {
        FeatureDimension dim;
        dim.id = d.at("id").get<std::string>();
        dim.category = feature_category_from_string(d.at("category").get<std::string>());
        for (const auto& v : d.at("values")) dim.allowed_values.push_back(v.get<std::string>());
        dim.is_constraint = d.at("is_constraint").get<bool>();
        dim.supports_others = d.value("supports_others", false);
        if (dim.allowed_values.empty()) throw Error("bank dimension '" + dim.id + "' has no values");
        std::set<std::string> seen_values;
        for (const auto& v : dim.allowed_values)
            if (!seen_values.insert(v).second)
                throw Error("bank dimension '" + dim.id + "' has duplicate value '" + v + "'");
        if (!seen_ids.insert(dim.id).second) throw Error("duplicate bank dimension id '" + dim.id + "'");
        bank.dimensions.push_back(std::move(dim));
    }
    if (bank.dimensions.empty()) throw Error("persona bank has no dimensions");
    return bank;
}

PersonaBank load_bank(const std::string& path) {
    return bank_from_json(json::parse(read_file(path)));
}

std::string expand_open_value(const FeatureDimension& dimension, const Persona& context,
                              Gateway& gateway, uint64_t seed) {
    if (!dimension.supports_others) throw Error("dimension '" + dimension.id + "' is closed");
    std::set<std::string> taken;
    for (const auto& v : dimension.allowed_values) taken.insert(to_lower(v));

    std::string context_lines;
    for (const auto& f : context.features)
        context_lines += "- " + f.dimension_id + "=" + f.value + "\n";

    for (int attempt = 0; attempt < 3; ++attempt) {
        ChatRequest req;
        req.role_tag = RoleTag::compiler;
        req.temperature = gateway.config().temperature;
        req.top_p = gateway.config().top_p;
        req.max_tokens = 64;
        req.seed = static_cast<int64_t>(derive_seed(seed, "expand", static_cast<uint64_t>(attempt)));
        req.messages.push_back({Role::system, load_prompt("expand_value")});
        std::string user = "DIMENSION: " + dimension.id + "\nEXISTING VALUES: ";
        for (size_t i = 0; i < dimension.allowed_values.size(); ++i) {
            if (i) user += ", ";
            user += dimension.allowed_values[i];
        }
        if (!context_lines.empty()) user += "\nPERSONA SO FAR:\n" + context_lines;
        req.messages.push_back({Role::user, user});

        std::string value = trim(gateway.complete(req, Stage::persona_formulation).content);
        if (value.empty()) continue;
        if (count_tokens(value) > 10) continue;
        if (taken.count(to_lower(value))) continue;
        return value;
    }
    throw ExpansionFailed("no valid novel value for dimension '" + dimension.id + "' after 3 attempts");
}

Persona sample_persona(const PersonaBank& bank, uint64_t seed, Gateway& gateway,
                       const std::string& id_hint) {
    if (bank.dimensions.empty()) throw Error("persona bank is empty");
    Persona persona;
    persona.created_seed = seed;
    if (!id_hint.empty()) {
        persona.id = id_hint;
    } else {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "p-%016llx", static_cast<unsigned long long>(seed));
        persona.id = buf;
    }
    Rng rng(seed);
    for (const auto& dim : bank.dimensions) {
        size_t idx = rng.index(dim.allowed_values.size());
        std::string value = dim.allowed_values[idx];
        FeatureOrigin origin = FeatureOrigin::bank;
        if (dim.supports_others && to_lower(value) == "others") {
            value = expand_open_value(dim, persona, gateway, derive_seed(seed, dim.id));
            origin = FeatureOrigin::expanded;
        }
        persona.features.push_back({dim.id, value, origin});
    }
    return persona;
}

ObservedPersona mask_features(const Persona& persona, const PersonaBank& bank, double mask_rate,
                              uint64_t seed) {
    if (mask_rate < 0.0 || mask_rate > 1.0) throw Error("mask_rate out of [0,1]");
    ObservedPersona obs;
    obs.persona_id = persona.id;
    obs.mask_seed = seed;
    obs.mask_rate = mask_rate;
    for (const auto& f : persona.features) {
        const FeatureDimension* dim = bank.find(f.dimension_id);
        bool hard = dim && dim->is_constraint;
        if (!hard) {
            Rng feature_rng(derive_seed(seed, f.dimension_id));
            if (feature_rng.uniform() < mask_rate) continue;
        }
        obs.observed.push_back({f.dimension_id, f.value});
    }
    return obs;
}

PreferenceSpec compile_spec(const ObservedPersona& observed, Gateway& gateway,
                            std::optional<uint64_t> seed) {
    if (observed.observed.empty())
        throw EmptyObservation("observed persona '" + observed.persona_id + "' has no features");

    std::vector<ObservedFeature> sorted = observed.observed;
    std::sort(sorted.begin(), sorted.end(),
              [](const ObservedFeature& a, const ObservedFeature& b) {
                  return a.dimension_id < b.dimension_id;
              });

    ChatRequest req;
    req.role_tag = RoleTag::compiler;
    req.temperature = gateway.config().temperature;
    req.top_p = gateway.config().top_p;
    req.max_tokens = 512;
    if (seed) req.seed = static_cast<int64_t>(*seed);
    req.messages.push_back({Role::system, load_prompt("compile_spec")});
    std::string user = "Observed user features:\n";
    for (const auto& f : sorted) user += "- " + f.dimension_id + "=" + f.value + "\n";
    user += "Write the preference specification.";
    req.messages.push_back({Role::user, user});

    ChatResponse resp = gateway.complete(req, Stage::persona_formulation);
    std::string text = trim(resp.content);
    if (text.empty()) throw MalformedResponse("compiler produced a blank preference spec");

    PreferenceSpec spec;
    spec.text = text;
    spec.persona_id = observed.persona_id;
    spec.compiler_backend = resp.backend_id;
    return spec;
}

json persona_to_json(const Persona& p) {
    json features = json::array();
    for (const auto& f : p.features)
        features.push_back({{"dimension_id", f.dimension_id},
                            {"value", f.value},
                            {"origin", f.origin == FeatureOrigin::bank ? "bank" : "expanded"}});
    return json{{"id", p.id}, {"features", std::move(features)}, {"created_seed", p.created_seed}};
}

Persona persona_from_json(const json& j) {
    Persona p;
    p.id = j.at("id").get<std::string>();
    p.created_seed = j.value("created_seed", uint64_t{0});
    for (const auto& f : j.at("features")) {
        PersonaFeature pf;
        pf.dimension_id = f.at("dimension_id").get<std::string>();
        pf.value = f.at("value").get<std::string>();
        pf.origin = f.value("origin", "bank") == "expanded" ? FeatureOrigin::expanded
                                                            : FeatureOrigin::bank;
        p.features.push_back(std::move(pf));
    }
    return p;
}

json observed_to_json(const ObservedPersona& o) {
    json observed = json::array();
    for (const auto& f : o.observed)
        observed.push_back({{"dimension_id", f.dimension_id}, {"value", f.value}});
    return json{{"persona_id", o.persona_id},
                {"observed", std::move(observed)},
                {"mask_seed", o.mask_seed},
                {"mask_rate", o.mask_rate}};
}

ObservedPersona observed_from_json(const json& j) {
    ObservedPersona o;
    o.persona_id = j.at("persona_id").get<std::string>();
    o.mask_seed = j.value("mask_seed", uint64_t{0});
    o.mask_rate = j.value("mask_rate", 0.0);
    for (const auto& f : j.at("observed"))
        o.observed.push_back({f.at("dimension_id").get<std::string>(), f.at("value").get<std::string>()});
    return o;
}

}  // namespace personaforge
