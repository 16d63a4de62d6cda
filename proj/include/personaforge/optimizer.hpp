#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "personaforge/config.hpp"
#include "personaforge/corpus.hpp"
#include "personaforge/gateway.hpp"
#include "personaforge/persona.hpp"

namespace personaforge {

struct Session {
    std::vector<HistTriple> turns;
};

/// Optimizer input: the new session's initial query plus prior sessions.
/// The persona rides along for teachers and judges only; it is never part
/// of the rendered prompt.
struct OptimizerState {
    std::string state_id;
    std::string initial_query;
    std::vector<Session> history;
    std::optional<Persona> persona;  // training records only
    std::optional<std::string> reference_answer;
};

/// Canonical prompt serialization: fixed instruction header, sessions in
/// chronological order as USER/ASSISTANT/FEEDBACK blocks, then the new query.
std::string render_state_prompt(const OptimizerState& state);

struct OptimizerOutput {
    std::string reasoning;
    std::string improved_prompt;
    std::string raw;
};

inline constexpr const char* kReasoningOpen = "<REASONING>";
inline constexpr const char* kReasoningClose = "</REASONING>";
inline constexpr const char* kPromptOpen = "<PROMPT>";
inline constexpr const char* kPromptClose = "</PROMPT>";

/// Emit the canonical delimiter form. Inputs are trimmed; an input containing
/// any delimiter token is rejected (DelimiterCollision), never escaped.
std::string format_output(const std::string& reasoning, const std::string& improved_prompt);

/// Extract the first well-nested REASONING and PROMPT regions, tolerating
/// surrounding chatter. MissingSection when either region is absent or
/// unterminated.
OptimizerOutput parse_output(const std::string& text);

enum class FilterVerdict {
    unverdicted,
    kept,
    dropped_near_identical,
    dropped_generic,
    dropped_no_improvement,
};

std::string to_string(FilterVerdict v);

struct PseudoTarget {
    std::string state_id;
    std::string z_star;
    std::string q_star;
    std::string teacher_backend;
    FilterVerdict filter_verdict = FilterVerdict::unverdicted;
};

/// Two teacher calls in sequence: profile summary from (persona, history),
/// then a rewritten prompt from (query, history, z*). Requires a persona.
PseudoTarget synthesize_pseudo_targets(const OptimizerState& state, Gateway& gateway,
                                       uint64_t seed);

/// Count of distinct content tokens (stopwords removed) present in the
/// rewrite but not in the original query.
int added_content_tokens(const std::string& original, const std::string& rewrite);

/// Ordered filter: near-identical (edit similarity), generic (too few added
/// content tokens), then no-improvement (the task judge does not prefer the
/// q*-induced response). Sets and returns the verdict.
FilterVerdict filter_pseudo_target(PseudoTarget& target, const OptimizerState& state,
                                   Gateway& gateway, const OptimizerConfig& config,
                                   uint64_t seed);

/// Group-relative standardization: (r_i - mean) / max(population std, epsilon).
std::vector<double> group_advantages(const std::vector<double>& rewards, double epsilon);

struct GrpoGroup {
    std::string state_id;
    std::string rendered_prompt;
    std::vector<OptimizerOutput> outputs;
    std::vector<double> rewards;
    std::vector<double> advantages;
    double temperature = 0.7;
    double top_p = 0.9;
};

/// Sample K optimizer completions for one state (deterministic slot order).
std::vector<OptimizerOutput> sample_group(const OptimizerState& state, int k, Gateway& gateway,
                                          const OptimizerConfig& config, uint64_t seed);

json grpo_group_to_json(const GrpoGroup& group);

json state_to_json(const OptimizerState& state);
OptimizerState state_from_json(const json& j);

}  // namespace personaforge
