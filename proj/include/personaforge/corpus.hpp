#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "personaforge/config.hpp"
#include "personaforge/persona.hpp"
#include "personaforge/simulate.hpp"

namespace personaforge {

struct HistTriple {
    std::string user_message;
    std::string assistant_response;
    std::string feedback;
};

/// One training record per turn: everything the turn-level save step of the
/// generation loop captures.
struct TurnInstance {
    ObservedPersona observed_persona;  // o
    std::string spec;                  // s
    std::vector<HistTriple> history;   // h_{t-1}
    std::string current_input;         // q~_t
    std::string response;              // a_t
    std::optional<std::string> feedback;  // f_t
    int label = 0;                     // y_t
    std::string trajectory_id;
    int turn_index = 1;
};

/// Expand a trajectory into per-turn instances; instance t carries the first
/// t-1 turns as history.
std::vector<TurnInstance> serialize_trajectory(const Trajectory& trajectory,
                                               const ObservedPersona& observed);

json turn_instance_to_json(const TurnInstance& inst);
TurnInstance turn_instance_from_json(const json& j);

struct CorpusStats {
    size_t n_samples = 0;
    double self_bleu = 0.0;
    double ingf = 0.0;
    double ttr = 0.0;
    size_t token_total = 0;
    size_t self_bleu_samples = 0;  // after any subsampling
};

/// Mean sentence-level BLEU of each sample against all the others (uniform
/// n-gram weights up to max_n, add-one smoothing on zero match counts,
/// standard brevity penalty). Lower means more diverse.
double self_bleu(const std::vector<std::string>& samples, int max_n = 4, int workers = 1);

/// Type-token ratio over the concatenated corpus.
double ttr(const std::vector<std::string>& samples);

/// Fraction of distinct n-grams whose corpus frequency is at or below
/// freq_threshold (n-grams do not cross sample boundaries).
double ingf(const std::vector<std::string>& samples, int n = 2, int freq_threshold = 1);

/// All three metrics; Self-BLEU falls back to a seeded subsample beyond
/// the configured exact limit.
CorpusStats corpus_stats(const std::vector<std::string>& samples, const CorpusConfig& config,
                         uint64_t subsample_seed, int workers = 1);

/// Conversation-level sample text: the user and assistant text of every
/// turn, concatenated.
std::string conversation_sample_text(const Trajectory& t);

}  // namespace personaforge
