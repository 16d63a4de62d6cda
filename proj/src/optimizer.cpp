#include "personaforge/optimizer.hpp"

#include <cmath>
#include <unordered_set>

#include "personaforge/errors.hpp"
#include "personaforge/prompts.hpp"
#include "personaforge/reward.hpp"
#include "personaforge/rng.hpp"
#include "personaforge/text.hpp"

namespace personaforge {

namespace {

constexpr const char* kStateHeader =
    "You are a personalized prompt optimizer. Below are this user's past sessions and the new "
    "session's first query. Infer the user's latent preferences from the history, then produce an "
    "improved version of the new query.";

}  // namespace

std::string render_state_prompt(const OptimizerState& state) {
    std::string out = kStateHeader;
    out += "\n";
    for (size_t j = 0; j < state.history.size(); ++j) {
        out += "\nSESSION " + std::to_string(j + 1) + ":\n";
        for (const auto& turn : state.history[j].turns) {
            out += "USER: " + turn.user_message + "\n";
            out += "ASSISTANT: " + turn.assistant_response + "\n";
            out += "FEEDBACK: " + turn.feedback + "\n";
        }
    }
    out += "\nNEW QUERY: " + state.initial_query;
    return out;
}

std::string format_output(const std::string& reasoning, const std::string& improved_prompt) {
    std::string z = trim(reasoning);
    std::string q = trim(improved_prompt);
    for (const char* token : {kReasoningOpen, kReasoningClose, kPromptOpen, kPromptClose}) {
        if (contains(z, token) || contains(q, token))
            throw DelimiterCollision(std::string("output part contains delimiter ") + token);
    }
    return std::string(kReasoningOpen) + z + kReasoningClose + kPromptOpen + q + kPromptClose;
}

namespace {

std::string extract_region(const std::string& text, const char* open, const char* close) {
    size_t begin = text.find(open);
    if (begin == std::string::npos)
        throw MissingSection(std::string("no ") + open + " region");
    begin += std::string(open).size();
    size_t end = text.find(close, begin);
    if (end == std::string::npos)
        throw MissingSection(std::string("unterminated ") + open + " region");
    return trim(text.substr(begin, end - begin));
}

}  // namespace

OptimizerOutput parse_output(const std::string& text) {
    OptimizerOutput out;
    out.reasoning = extract_region(text, kReasoningOpen, kReasoningClose);
    out.improved_prompt = extract_region(text, kPromptOpen, kPromptClose);
    out.raw = text;
    return out;
}

std::string to_string(FilterVerdict v) {
    switch (v) {
        case FilterVerdict::unverdicted: return "unverdicted";
        case FilterVerdict::kept: return "kept";
        case FilterVerdict::dropped_near_identical: return "dropped_near_identical";
        case FilterVerdict::dropped_generic: return "dropped_generic";
        case FilterVerdict::dropped_no_improvement: return "dropped_no_improvement";
    }
    return "unverdicted";
}

PseudoTarget synthesize_pseudo_targets(const OptimizerState& state, Gateway& gateway,
                                       uint64_t seed) {
    if (!state.persona) throw Error("pseudo-target synthesis needs a training-time persona");

    std::string history_text;
    for (size_t j = 0; j < state.history.size(); ++j) {
        history_text += "SESSION " + std::to_string(j + 1) + ":\n";
        for (const auto& turn : state.history[j].turns) {
            history_text += "USER: " + turn.user_message + "\nASSISTANT: " + turn.assistant_response +
                            "\nFEEDBACK: " + turn.feedback + "\n";
        }
    }
    if (history_text.empty()) history_text = "(no prior sessions)\n";

    std::string persona_lines;
    for (const auto& f : state.persona->features)
        persona_lines += "- " + f.dimension_id + "=" + f.value + "\n";

    ChatRequest prof;
    prof.role_tag = RoleTag::teacher_profile;
    prof.temperature = gateway.config().temperature;
    prof.top_p = gateway.config().top_p;
    prof.max_tokens = 512;
    prof.seed = static_cast<int64_t>(derive_seed(seed, "teacher_prof"));
    prof.messages.push_back({Role::system, load_prompt("teacher_profile")});
    prof.messages.push_back(
        {Role::user, "PERSONA FEATURES:\n" + persona_lines + "\nHISTORY:\n" + history_text});
    ChatResponse prof_resp = gateway.complete(prof, Stage::pseudo_target);
    std::string z_star = trim(prof_resp.content);
    if (z_star.empty()) throw MalformedResponse("teacher_profile returned empty profile");

    ChatRequest prompt;
    prompt.role_tag = RoleTag::teacher_prompt;
    prompt.temperature = gateway.config().temperature;
    prompt.top_p = gateway.config().top_p;
    prompt.max_tokens = 512;
    prompt.seed = static_cast<int64_t>(derive_seed(seed, "teacher_prompt"));
    prompt.messages.push_back({Role::system, load_prompt("teacher_prompt")});
    prompt.messages.push_back({Role::user, "HISTORY:\n" + history_text + "\nINFERRED PROFILE:\n" +
                                               z_star + "\nQUERY: " + state.initial_query});
    ChatResponse prompt_resp = gateway.complete(prompt, Stage::pseudo_target);
    std::string q_star = trim(prompt_resp.content);
    if (q_star.empty()) throw MalformedResponse("teacher_prompt returned empty rewrite");

    PseudoTarget target;
    target.state_id = state.state_id;
    target.z_star = z_star;
    target.q_star = q_star;
    target.teacher_backend = prof_resp.backend_id;
    return target;
}

int added_content_tokens(const std::string& original, const std::string& rewrite) {
    std::unordered_set<std::string> base;
    for (auto& tok : tokenize(original)) base.insert(std::move(tok));
    const auto& stop = stopwords();
    std::unordered_set<std::string> added;
    for (auto& tok : tokenize(rewrite)) {
        if (base.count(tok) || stop.count(tok)) continue;
        added.insert(std::move(tok));
    }
    return static_cast<int>(added.size());
}

FilterVerdict filter_pseudo_target(PseudoTarget& target, const OptimizerState& state,
                                   Gateway& gateway, const OptimizerConfig& config,
                                   uint64_t seed) {
    if (target.filter_verdict != FilterVerdict::unverdicted)
        throw Error("pseudo-target already verdicted");

    if (edit_similarity(target.q_star, state.initial_query) >= config.near_identical_threshold) {
        target.filter_verdict = FilterVerdict::dropped_near_identical;
        return target.filter_verdict;
    }
    if (added_content_tokens(state.initial_query, target.q_star) < config.generic_token_threshold) {
        target.filter_verdict = FilterVerdict::dropped_generic;
        return target.filter_verdict;
    }
    if (!state.persona)
        throw Error("preference-aware filtering needs the training-time persona");
    PairResponses pair =
        generate_pair(state, target.q_star, gateway, true, derive_seed(seed, "filter_pair"));
    int preferred = compute_r_task(state.initial_query, *state.persona, pair.baseline,
                                   pair.improved, gateway, derive_seed(seed, "filter_judge"));
    target.filter_verdict =
        preferred == 1 ? FilterVerdict::kept : FilterVerdict::dropped_no_improvement;
    return target.filter_verdict;
}

std::vector<double> group_advantages(const std::vector<double>& rewards, double epsilon) {
    if (rewards.size() < 2) throw GroupTooSmall("group needs K >= 2 rewards");
    if (epsilon <= 0.0) throw Error("epsilon must be positive");
    double mean = 0.0;
    for (double r : rewards) mean += r;
    mean /= static_cast<double>(rewards.size());
    double var = 0.0;
    for (double r : rewards) var += (r - mean) * (r - mean);
    var /= static_cast<double>(rewards.size());
    double denom = std::max(std::sqrt(var), epsilon);
    std::vector<double> advantages;
    advantages.reserve(rewards.size());
    for (double r : rewards) advantages.push_back((r - mean) / denom);
    return advantages;
}

std::vector<OptimizerOutput> sample_group(const OptimizerState& state, int k, Gateway& gateway,
                                          const OptimizerConfig& config, uint64_t seed) {
    if (k < 2) throw GroupTooSmall("GRPO group size must be >= 2");
    std::string rendered = render_state_prompt(state);
    std::vector<OptimizerOutput> outputs;
    outputs.reserve(k);
    for (int slot = 0; slot < k; ++slot) {
        ChatRequest req;
        req.role_tag = RoleTag::optimizer;
        req.temperature = config.temperature;
        req.top_p = config.top_p;
        req.max_tokens = 1024;
        req.seed = static_cast<int64_t>(derive_seed(seed, "group_slot", static_cast<uint64_t>(slot)));
        req.messages.push_back({Role::system, load_prompt("optimizer")});
        req.messages.push_back({Role::user, rendered});
        ChatResponse resp = gateway.complete(req, Stage::optimizer_sampling);
        outputs.push_back(parse_output(resp.content));
    }
    return outputs;
}

json grpo_group_to_json(const GrpoGroup& group) {
    json outputs = json::array();
    for (const auto& out : group.outputs)
        outputs.push_back(json{{"raw", out.raw},
                               {"reasoning", out.reasoning},
                               {"improved_prompt", out.improved_prompt}});
    return json{{"state_id", group.state_id},
                {"rendered_prompt", group.rendered_prompt},
                {"outputs", std::move(outputs)},
                {"rewards", group.rewards},
                {"advantages", group.advantages},
                {"sampling",
                 {{"temperature", group.temperature},
                  {"top_p", group.top_p},
                  {"K", static_cast<int>(group.outputs.size())}}}};
}

json state_to_json(const OptimizerState& state) {
    json sessions = json::array();
    for (const auto& session : state.history) {
        json turns = json::array();
        for (const auto& t : session.turns)
            turns.push_back({{"user_message", t.user_message},
                             {"assistant_response", t.assistant_response},
                             {"feedback", t.feedback}});
        sessions.push_back(std::move(turns));
    }
    json j{{"state_id", state.state_id},
           {"initial_query", state.initial_query},
           {"history", std::move(sessions)}};
    if (state.persona) j["persona"] = persona_to_json(*state.persona);
    if (state.reference_answer) j["reference_answer"] = *state.reference_answer;
    return j;
}

OptimizerState state_from_json(const json& j) {
    OptimizerState state;
    state.state_id = j.at("state_id").get<std::string>();
    state.initial_query = j.at("initial_query").get<std::string>();
    for (const auto& session : j.value("history", json::array())) {
        Session s;
        for (const auto& t : session) {
            s.turns.push_back({t.at("user_message").get<std::string>(),
                               t.at("assistant_response").get<std::string>(),
                               t.value("feedback", "")});
        }
        state.history.push_back(std::move(s));
    }
    if (j.contains("persona")) state.persona = persona_from_json(j["persona"]);
    if (j.contains("reference_answer") && !j["reference_answer"].is_null())
        state.reference_answer = j["reference_answer"].get<std::string>();
    return state;
}

}  // namespace personaforge
