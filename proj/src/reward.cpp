#include "personaforge/reward.hpp"

#include "personaforge/errors.hpp"
#include "personaforge/prompts.hpp"
#include "personaforge/rng.hpp"
#include "personaforge/text.hpp"

namespace personaforge {

double norm_rating(double rating, double lo, double hi) {
    if (lo >= hi) throw Error("norm: lo must be < hi");
    if (rating < lo || rating > hi) throw OutOfRange("rating outside [lo, hi]");
    return (rating - lo) / (hi - lo);
}

std::optional<double> parse_rating_line(const std::string& text) {
    for (const auto& line : split_lines(text)) {
        std::string t = trim(line);
        if (t.rfind("RATING:", 0) != 0) continue;
        std::string num = trim(t.substr(std::string("RATING:").size()));
        try {
            size_t pos = 0;
            double v = std::stod(num, &pos);
            if (pos == 0) return std::nullopt;
            return v;
        } catch (const std::exception&) {
            return std::nullopt;
        }
    }
    return std::nullopt;
}

std::optional<std::string> parse_preferred_line(const std::string& text) {
    for (const auto& line : split_lines(text)) {
        std::string t = trim(line);
        if (t.rfind("PREFERRED:", 0) != 0) continue;
        std::string v = trim(t.substr(std::string("PREFERRED:").size()));
        if (v == "A" || v == "B" || v == "TIE") return v;
        return std::nullopt;
    }
    return std::nullopt;
}

namespace {

std::string history_block(const OptimizerState& state) {
    std::string out;
    for (size_t j = 0; j < state.history.size(); ++j) {
        out += "SESSION " + std::to_string(j + 1) + ":\n";
        for (const auto& t : state.history[j].turns) {
            out += "USER: " + t.user_message + "\nASSISTANT: " + t.assistant_response +
                   "\nFEEDBACK: " + t.feedback + "\n";
        }
    }
    return out;
}

std::string persona_block(const Persona& persona) {
    std::string out;
    for (const auto& f : persona.features) out += "- " + f.dimension_id + "=" + f.value + "\n";
    return out;
}

std::string ask_assistant_for(const OptimizerState& state, const std::string& query,
                              Gateway& gateway, bool include_history, uint64_t seed) {
    ChatRequest req;
    req.role_tag = RoleTag::assistant_agent;
    req.temperature = gateway.config().temperature;
    req.top_p = gateway.config().top_p;
    req.max_tokens = gateway.config().max_tokens;
    req.seed = static_cast<int64_t>(seed);
    if (include_history && !state.history.empty()) {
        req.messages.push_back(
            {Role::system, "Context from this user's past sessions:\n" + history_block(state)});
    }
    req.messages.push_back({Role::user, query});
    return trim(gateway.complete(req, Stage::reward_judging).content);
}

}  // namespace

PairResponses generate_pair(const OptimizerState& state, const std::string& improved_prompt,
                            Gateway& gateway, bool include_history, uint64_t seed) {
    if (trim(improved_prompt).empty()) throw Error("generate_pair: improved prompt is empty");
    PairResponses pair;
    pair.baseline = ask_assistant_for(state, state.initial_query, gateway, include_history,
                                      derive_seed(seed, "pair_base"));
    pair.improved = ask_assistant_for(state, improved_prompt, gateway, include_history,
                                      derive_seed(seed, "pair_improved"));
    return pair;
}

double compute_r_prof(const std::string& reasoning, const Persona& persona, Gateway& gateway,
                      uint64_t seed, std::vector<std::string>* transcript_refs) {
    for (int attempt = 0; attempt < 2; ++attempt) {
        ChatRequest req;
        req.role_tag = RoleTag::judge_prof;
        req.temperature = 0.0;
        req.top_p = 1.0;
        req.max_tokens = 256;
        req.seed = static_cast<int64_t>(derive_seed(seed, "r_prof", static_cast<uint64_t>(attempt)));
        req.messages.push_back({Role::system, load_prompt("judge_prof")});
        req.messages.push_back({Role::user, "PERSONA FEATURES:\n" + persona_block(persona) +
                                                "\nINFERRED PROFILE:\n" + reasoning});
        if (transcript_refs) transcript_refs->push_back(request_key_hex(req));
        std::string content = gateway.complete(req, Stage::reward_judging).content;
        auto rating = parse_rating_line(content);
        if (rating && *rating >= 1.0 && *rating <= 10.0) return norm_rating(*rating, 1.0, 10.0);
    }
    throw UnparseableVerdict("profile judge produced no usable RATING line");
}

int compute_r_task(const std::string& initial_query, const Persona& persona,
                   const std::string& a_base, const std::string& a_hat, Gateway& gateway,
                   uint64_t ab_seed, std::vector<std::string>* transcript_refs) {
    if (a_base.empty() || a_hat.empty()) throw Error("compute_r_task: empty candidate response");
    Rng rng(ab_seed);
    bool improved_is_a = rng.bernoulli(0.5);
    const std::string& a = improved_is_a ? a_hat : a_base;
    const std::string& b = improved_is_a ? a_base : a_hat;

    for (int attempt = 0; attempt < 2; ++attempt) {
        ChatRequest req;
        req.role_tag = RoleTag::judge_task;
        req.temperature = 0.0;
        req.top_p = 1.0;
        req.max_tokens = 256;
        req.seed = static_cast<int64_t>(derive_seed(ab_seed, "r_task", static_cast<uint64_t>(attempt)));
        req.messages.push_back({Role::system, load_prompt("judge_task_pairwise")});
        req.messages.push_back({Role::user, "ORIGINAL QUERY:\n" + initial_query +
                                                "\nPERSONA FEATURES:\n" + persona_block(persona) +
                                                "\nRESPONSE A:\n\"\"\"\n" + a +
                                                "\n\"\"\"\nRESPONSE B:\n\"\"\"\n" + b + "\n\"\"\""});
        if (transcript_refs) transcript_refs->push_back(request_key_hex(req));
        std::string content = gateway.complete(req, Stage::reward_judging).content;
        auto verdict = parse_preferred_line(content);
        if (!verdict) continue;
        if (*verdict == "TIE") return 0;  // a tie is not an improvement
        bool improved_preferred = (*verdict == "A") == improved_is_a;
        return improved_preferred ? 1 : 0;
    }
    throw UnparseableVerdict("task judge produced no usable PREFERRED line");
}

RewardBreakdown combine(double r_prof, double r_task, double lambda_prof, double lambda_task) {
    if (lambda_prof < 0.0 || lambda_task < 0.0) throw Error("lambdas must be non-negative");
    RewardBreakdown out;
    out.r_prof = r_prof;
    out.r_task = r_task;
    out.lambda_prof = lambda_prof;
    out.lambda_task = lambda_task;
    out.total = lambda_prof * r_prof + lambda_task * r_task;
    return out;
}

}  // namespace personaforge
