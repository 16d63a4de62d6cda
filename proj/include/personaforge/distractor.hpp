#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>

#include "personaforge/config.hpp"
#include "personaforge/gateway.hpp"

namespace personaforge {

enum class NoiseLayer { syntactic, incomplete, ambiguous };
enum class NoiseTarget { initial_query, feedback };

std::string to_string(NoiseLayer l);
std::string to_string(NoiseTarget t);
NoiseLayer noise_layer_from_string(const std::string& s);

struct NoiseAnnotation {
    NoiseLayer layer = NoiseLayer::syntactic;
    NoiseTarget target = NoiseTarget::initial_query;
    std::string original;
    std::string corrupted;
    double strength = 0.0;
};

struct NoisifyResult {
    std::string text;
    std::optional<NoiseAnnotation> annotation;
    bool fallback = false;  // distractor returned empty output; original kept
};

/// Categorical draw over the three layers. `strength` is not used for
/// selection; it rides along into the corruption instruction.
NoiseLayer select_layer(const std::array<double, 3>& weights, double strength, uint64_t seed);

/// Verbal intensity bucket for the corruption prompt.
std::string strength_word(double alpha);

/// Layer-1 local transform: lowercase, strip terminal punctuation, one
/// seeded transposition of an adjacent pair of distinct letters. Guaranteed
/// to differ from the input.
std::string syntactic_transform(const std::string& text, uint64_t seed);

/// Apply the gated three-layer corruption. With probability p_q / p_f (by
/// target) a layer is selected and the text rewritten; otherwise the text
/// passes through byte-identical with no annotation.
NoisifyResult noisify(const std::string& text, NoiseTarget target, const NoiseSettings& config,
                      Gateway& gateway, uint64_t seed);

/// Feedback variant: the trailing VERDICT line is the control channel for
/// Decide and must survive, so it is stripped before corruption and
/// re-appended afterwards.
NoisifyResult noisify_feedback(const std::string& raw_feedback, const NoiseSettings& config,
                               Gateway& gateway, uint64_t seed);

json annotation_to_json(const NoiseAnnotation& a);
NoiseAnnotation annotation_from_json(const json& j);

}  // namespace personaforge
