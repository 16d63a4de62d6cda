#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "personaforge/config.hpp"
#include "personaforge/corpus.hpp"
#include "personaforge/gateway.hpp"
#include "personaforge/harness.hpp"
#include "personaforge/optimizer.hpp"
#include "personaforge/persona.hpp"
#include "personaforge/simulate.hpp"

namespace personaforge {

struct GenerateOptions {
    std::string bank_path;
    std::string seeds_path;
    std::string out_path;
    std::string personas_out_path;  // empty: skip the sidecar
    int n_personas = 10;
    uint64_t seed = 42;
    int workers = 1;
    bool noise_enabled = true;
};

struct GenerateSummary {
    size_t personas = 0;
    size_t trajectories = 0;
    size_t turns = 0;
    size_t satisfied = 0;
    size_t truncated = 0;
};

/// Full data-generation pipeline: sample personas, mask, compile specs, then
/// run `sessions` trajectories per persona. Trajectories land in the output
/// file in persona order regardless of worker scheduling.
GenerateSummary run_generate(const GenerateOptions& options, const Config& config,
                             Gateway& gateway);

struct PersonaRecord {
    Persona persona;
    ObservedPersona observed;
    PreferenceSpec spec;
};

std::vector<PersonaRecord> read_persona_records(const std::string& path);

/// Group trajectories by persona: the last session's opening query becomes
/// the new initial query, every earlier session becomes history.
std::vector<OptimizerState> build_states(const std::string& trajectories_path,
                                         const std::string& personas_path);

/// Turn-level serialization with schema validation on every emitted line.
size_t run_export(const std::string& trajectories_path, const std::string& personas_path,
                  const std::string& out_path, const std::string& schema_path);

/// Corpus metrics over a JSONL input (trajectory records or {text} records).
json run_stats(const std::string& input_path, const CorpusConfig& config, uint64_t seed,
               int workers = 1);

struct SftSummary {
    size_t states = 0;
    size_t kept = 0;
    size_t dropped_near_identical = 0;
    size_t dropped_generic = 0;
    size_t dropped_no_improvement = 0;
};

/// Teacher synthesis + filtering; kept targets exported as SFT pairs.
SftSummary run_sft_prep(const std::vector<OptimizerState>& states, const std::string& out_path,
                        const Config& config, Gateway& gateway, uint64_t seed, int workers = 1);

/// K optimizer samples per state, judged rewards, group advantages.
size_t run_rl_prep(const std::vector<OptimizerState>& states, const std::string& out_path,
                   const Config& config, Gateway& gateway, uint64_t seed, int workers = 1);

/// Reward module over a states file. Lines carrying reasoning/improved_prompt
/// are scored as-is; otherwise one optimizer completion is drawn first.
size_t run_score(const std::string& states_path, const std::string& out_path,
                 const Config& config, Gateway& gateway, uint64_t seed, int workers = 1);
size_t run_score_records(const std::vector<json>& records, const std::string& out_path,
                         const Config& config, Gateway& gateway, uint64_t seed, int workers = 1);

EvalReport run_eval(const std::vector<OptimizerState>& states, const std::vector<Method>& methods,
                    const Config& config, Gateway& gateway, uint64_t seed, int workers,
                    const std::string& report_json_path, const std::string& report_table_path);

size_t run_import_seeds(const std::string& input_path, const std::string& field,
                        const std::string& source_dataset, const std::string& domain,
                        const std::string& out_path);

std::vector<OptimizerState> read_states(const std::string& path);

}  // namespace personaforge
