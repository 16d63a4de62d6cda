#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "personaforge/config.hpp"
#include "personaforge/gateway.hpp"
#include "personaforge/optimizer.hpp"

namespace personaforge {

enum class Method {
    vanilla,
    ppopt,
    concat_history,
    persona_rewrite,
    fewshot_icl,
    controller_guided,
};

std::string to_string(Method m);
Method method_from_string(const std::string& s);
const std::vector<Method>& all_methods();

/// Build the assistant context for a method. Helper-backed methods (persona
/// rewriting, few-shot ICL, controller guidance, the optimizer itself) call
/// their helper role through the gateway first.
std::vector<ChatMessage> compose_method_messages(Method method, const OptimizerState& state,
                                                 Gateway& gateway, const EvalConfig& eval_config,
                                                 uint64_t seed);

/// Compose, then ask the assistant role for the final response.
std::string run_baseline(Method method, const OptimizerState& state, Gateway& gateway,
                         const EvalConfig& eval_config, uint64_t seed);

/// 1-10 rating of how well the response matches the persona's preferences
/// (kept unscaled for reporting).
double judge_personalization(const Persona& persona, const std::string& response, Gateway& gateway,
                             uint64_t seed);

/// 1-10 rating of task correctness/completeness; the reference answer is
/// included in the rubric when available.
double judge_task_completion(const std::optional<std::string>& reference_answer,
                             const std::string& query, const std::string& response,
                             Gateway& gateway, uint64_t seed);

struct EvalRecord {
    std::string state_id;
    Method method = Method::vanilla;
    double personalization = 0.0;
    double task_completion = 0.0;
    int run_index = 1;
};

struct MethodSummary {
    double personalization_mean = 0.0;
    double personalization_var = 0.0;  // population variance over run means
    double task_mean = 0.0;
    double task_var = 0.0;
};

struct MethodDelta {
    double personalization_delta = 0.0;      // method mean - vanilla mean
    double personalization_delta_pct = 0.0;  // delta / vanilla * 100
    double task_abs_delta = 0.0;             // |method mean - vanilla mean|
    double task_abs_delta_pct = 0.0;
};

struct EvalReport {
    int runs = 0;
    size_t n_states = 0;
    size_t exclusions = 0;
    std::vector<EvalRecord> records;
    std::map<std::string, MethodSummary> methods;
    std::map<std::string, MethodDelta> deltas;  // vs vanilla, for non-vanilla methods
};

/// Judge the full (state x method x run) grid on both metrics. Cells that
/// fail are excluded from aggregates and counted.
EvalReport evaluate(const std::vector<OptimizerState>& states, const std::vector<Method>& methods,
                    int runs, Gateway& gateway, const EvalConfig& eval_config, uint64_t seed,
                    int workers = 1);

/// Aggregation step of evaluate(): run-level means per method, then mean and
/// population variance over runs, then deltas against vanilla.
EvalReport aggregate_records(std::vector<EvalRecord> records, const std::vector<Method>& methods,
                             int runs, size_t n_states, size_t exclusions);

json report_to_json(const EvalReport& report);
std::string report_table(const EvalReport& report);

}  // namespace personaforge
