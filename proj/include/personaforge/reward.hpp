#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "personaforge/gateway.hpp"
#include "personaforge/optimizer.hpp"
#include "personaforge/persona.hpp"

namespace personaforge {

/// Linear rescale of a judge rating from [lo, hi] to [0, 1].
double norm_rating(double rating, double lo = 1.0, double hi = 10.0);

struct PairResponses {
    std::string baseline;  // response under the original query
    std::string improved;  // response under the rewritten query
};

/// Produce the baseline and improved assistant responses with identical
/// sampling parameters and identical history conditioning; only the final
/// query differs.
PairResponses generate_pair(const OptimizerState& state, const std::string& improved_prompt,
                            Gateway& gateway, bool include_history, uint64_t seed);

/// Judge the inferred profile against the full persona feature list; parses
/// the "RATING: <1-10>" verdict line and rescales to [0,1]. One retry on an
/// unparseable verdict, then UnparseableVerdict. When `transcript_refs` is
/// given, the request key of each judge call is appended to it.
double compute_r_prof(const std::string& reasoning, const Persona& persona, Gateway& gateway,
                      uint64_t seed, std::vector<std::string>* transcript_refs = nullptr);

/// Pairwise preference judgment with randomized A/B order (de-randomized on
/// parse). Returns 1 when the improved response is preferred, 0 on baseline
/// or tie.
int compute_r_task(const std::string& initial_query, const Persona& persona,
                   const std::string& a_base, const std::string& a_hat, Gateway& gateway,
                   uint64_t ab_seed, std::vector<std::string>* transcript_refs = nullptr);

struct RewardBreakdown {
    double r_prof = 0.0;
    double r_task = 0.0;
    double lambda_prof = 0.0;
    double lambda_task = 0.0;
    double total = 0.0;
};

RewardBreakdown combine(double r_prof, double r_task, double lambda_prof, double lambda_task);

/// Verdict-line parsers, shared with the evaluation harness.
std::optional<double> parse_rating_line(const std::string& text);
std::optional<std::string> parse_preferred_line(const std::string& text);

}  // namespace personaforge
