#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "personaforge/config.hpp"
#include "personaforge/distractor.hpp"
#include "personaforge/gateway.hpp"
#include "personaforge/persona.hpp"

namespace personaforge {

struct SeedQuery {
    std::string text;
    std::string source_dataset;
    std::string domain;
    std::optional<std::string> reference_answer;
};

struct QueryPool {
    std::string source_dataset;
    std::string domain;
    double weight = 0.0;
    std::vector<SeedQuery> queries;
};

/// Read a seed-pool JSONL file ({text, source_dataset, domain}) and group by
/// source_dataset. Pool weights come from `weights` when present, otherwise
/// from the built-in query-collection counts, otherwise from pool size.
std::vector<QueryPool> load_seed_pools(const std::string& path,
                                       const std::map<std::string, double>& weights = {});

/// Default mixture weight for a known source dataset (its query-collection
/// count), or 0 when unknown.
double default_pool_weight(const std::string& source_dataset);

SeedQuery sample_seed_query(const std::vector<QueryPool>& mixture, uint64_t seed);

struct StylizeResult {
    std::string text;
    bool stylized = false;
    bool fallback = false;  // stylizer returned empty twice; seed query kept
};

/// With probability rho, rewrite the seed query in the persona's voice via
/// the user-agent role; otherwise pass it through byte-identical.
StylizeResult stylize_query(const SeedQuery& query, const PreferenceSpec& spec, double rho,
                            uint64_t seed, Gateway& gateway);

struct Decision {
    bool stop = false;
    std::optional<std::string> next_query;
    std::string cleaned_feedback;
};

/// Parse the machine-readable verdict line the user agent is contracted to
/// end its feedback with: "VERDICT: SATISFIED" or
/// "VERDICT: FOLLOWUP: <next query>".
Decision decide_followup(const std::string& feedback_raw);

struct Turn {
    int index = 1;
    std::string user_message;        // q~_t
    std::string assistant_response;  // a_t
    std::string feedback;            // f_t, verdict line removed
    bool followup_issued = false;
    int label = 0;  // y_t = 1 - [follow-up]
    std::vector<NoiseAnnotation> noise;
};

enum class Termination { satisfied, max_turns };

struct Trajectory {
    std::string id;
    std::string persona_id;
    std::string spec_text;
    SeedQuery seed_query;
    bool stylized = false;
    std::vector<Turn> turns;
    Termination termination = Termination::satisfied;
    json config_snapshot;
};

struct TrajectoryOptions {
    int max_turns = 5;
    double rho = 0.5;
    NoiseSettings noise;
    bool noise_enabled = true;
    std::string trajectory_id;
};

/// Synthesize one multi-turn session: stylize, noise the initial query, then
/// loop query -> response -> feedback -> decide until satisfaction or the
/// turn budget runs out.
Trajectory run_trajectory(const SeedQuery& query, const PreferenceSpec& spec,
                          const TrajectoryOptions& options, Gateway& gateway, uint64_t seed);

json trajectory_to_json(const Trajectory& t);
Trajectory trajectory_from_json(const json& j);

}  // namespace personaforge
