#include "personaforge/simulate.hpp"

#include <algorithm>

#include "personaforge/errors.hpp"
#include "personaforge/prompts.hpp"
#include "personaforge/rng.hpp"
#include "personaforge/text.hpp"

namespace personaforge {

double default_pool_weight(const std::string& source_dataset) {
    // query-collection counts per source corpus
    static const std::map<std::string, double> counts = {
        {"ultrachat_200k", 3250},      {"openr1_math_220k", 2638},
        {"codefeedback", 2028},        {"mol_instructions", 1766},
        {"mmlu", 1638},                {"ai2_arc", 1300},
        {"alpaca_cleaned", 844},       {"truthfulqa", 759},
        {"databricks_dolly_15k", 684}, {"mbpp", 619},
        {"mt_bench", 80},
    };
    auto it = counts.find(source_dataset);
    return it == counts.end() ? 0.0 : it->second;
}

std::vector<QueryPool> load_seed_pools(const std::string& path,
                                       const std::map<std::string, double>& weights) {
    std::vector<QueryPool> pools;
    std::map<std::string, size_t> index;
    for (const auto& rec : read_jsonl(path)) {
        SeedQuery q;
        q.text = rec.at("text").get<std::string>();
        q.source_dataset = rec.value("source_dataset", "custom");
        q.domain = rec.value("domain", "general");
        if (rec.contains("reference_answer") && !rec["reference_answer"].is_null())
            q.reference_answer = rec["reference_answer"].get<std::string>();
        if (trim(q.text).empty()) throw Error("seed pool " + path + ": empty query text");
        auto [it, fresh] = index.try_emplace(q.source_dataset, pools.size());
        if (fresh) {
            QueryPool pool;
            pool.source_dataset = q.source_dataset;
            pool.domain = q.domain;
            pools.push_back(std::move(pool));
        }
        pools[it->second].queries.push_back(std::move(q));
    }
    for (auto& pool : pools) {
        auto w = weights.find(pool.source_dataset);
        if (w != weights.end()) {
            pool.weight = w->second;
        } else {
            double d = default_pool_weight(pool.source_dataset);
            pool.weight = d > 0.0 ? d : static_cast<double>(pool.queries.size());
        }
    }
    return pools;
}

SeedQuery sample_seed_query(const std::vector<QueryPool>& mixture, uint64_t seed) {
    double total = 0.0;
    for (const auto& pool : mixture) {
        if (pool.weight < 0.0) throw Error("negative pool weight for " + pool.source_dataset);
        if (pool.weight > 0.0 && pool.queries.empty())
            throw EmptyPool("pool '" + pool.source_dataset + "' has weight but no queries");
        total += pool.weight;
    }
    if (mixture.empty() || total <= 0.0) throw EmptyPool("seed query mixture is empty");

    Rng rng(seed);
    double r = rng.uniform() * total;
    const QueryPool* chosen = nullptr;
    double acc = 0.0;
    for (const auto& pool : mixture) {
        acc += pool.weight;
        if (r < acc) {
            chosen = &pool;
            break;
        }
    }
    if (!chosen) chosen = &mixture.back();
    return chosen->queries[rng.index(chosen->queries.size())];
}

StylizeResult stylize_query(const SeedQuery& query, const PreferenceSpec& spec, double rho,
                            uint64_t seed, Gateway& gateway) {
    if (rho < 0.0 || rho > 1.0) throw Error("rho out of [0,1]");
    StylizeResult result;
    result.text = query.text;
    Rng rng(seed);
    if (!rng.bernoulli(rho)) return result;

    for (int attempt = 0; attempt < 2; ++attempt) {
        ChatRequest req;
        req.role_tag = RoleTag::user_agent;
        req.temperature = gateway.config().temperature;
        req.top_p = gateway.config().top_p;
        req.max_tokens = 512;
        req.seed = static_cast<int64_t>(derive_seed(seed, "stylize", static_cast<uint64_t>(attempt)));
        req.messages.push_back({Role::system, load_prompt("stylize", {{"spec", spec.text}})});
        req.messages.push_back({Role::user, "SEED QUERY:\n" + query.text});
        std::string styled = trim(gateway.complete(req, Stage::query_generation).content);
        if (!styled.empty()) {
            result.text = styled;
            result.stylized = true;
            return result;
        }
    }
    result.fallback = true;  // empty output twice: keep the clean query
    return result;
}

Decision decide_followup(const std::string& feedback_raw) {
    if (trim(feedback_raw).empty()) throw Error("decide_followup: feedback must be non-empty");
    auto lines = split_lines(feedback_raw);
    int verdict_idx = -1;
    for (int i = static_cast<int>(lines.size()) - 1; i >= 0; --i) {
        if (trim(lines[i]).rfind("VERDICT:", 0) == 0) {
            verdict_idx = i;
            break;
        }
    }
    if (verdict_idx < 0) throw UnparseableVerdict("feedback has no VERDICT line");

    std::string verdict = trim(trim(lines[verdict_idx]).substr(std::string("VERDICT:").size()));
    Decision decision;
    if (verdict == "SATISFIED") {
        decision.stop = true;
    } else if (verdict.rfind("FOLLOWUP:", 0) == 0) {
        std::string next = trim(verdict.substr(std::string("FOLLOWUP:").size()));
        if (next.empty()) throw UnparseableVerdict("FOLLOWUP verdict carries no query");
        decision.stop = false;
        decision.next_query = next;
    } else {
        throw UnparseableVerdict("unrecognized verdict: " + verdict);
    }

    std::string cleaned;
    for (int i = 0; i < static_cast<int>(lines.size()); ++i) {
        if (i == verdict_idx) continue;
        if (!cleaned.empty()) cleaned += "\n";
        cleaned += lines[i];
    }
    decision.cleaned_feedback = trim(cleaned);
    return decision;
}

namespace {

struct HistoryEntry {
    std::string query, answer, feedback;
};

std::string ask_assistant(const std::string& current, const std::vector<HistoryEntry>& history,
                          Gateway& gateway, uint64_t seed) {
    ChatRequest req;
    req.role_tag = RoleTag::assistant_agent;
    req.temperature = gateway.config().temperature;
    req.top_p = gateway.config().top_p;
    req.max_tokens = gateway.config().max_tokens;
    req.seed = static_cast<int64_t>(seed);
    for (const auto& h : history) {
        req.messages.push_back({Role::user, h.query});
        req.messages.push_back({Role::assistant, h.answer});
        req.messages.push_back({Role::user, "Feedback: " + h.feedback});
    }
    req.messages.push_back({Role::user, current});
    return trim(gateway.complete(req, Stage::interaction_generation).content);
}

std::string ask_feedback(const PreferenceSpec& spec, const std::string& current,
                         const std::string& answer, const std::vector<HistoryEntry>& history,
                         Gateway& gateway, uint64_t seed) {
    ChatRequest req;
    req.role_tag = RoleTag::user_agent;
    req.temperature = gateway.config().temperature;
    req.top_p = gateway.config().top_p;
    req.max_tokens = 512;
    req.seed = static_cast<int64_t>(seed);
    req.messages.push_back({Role::system, load_prompt("feedback", {{"spec", spec.text}})});
    std::string user;
    if (!history.empty()) {
        user += "PRIOR TURNS:\n";
        for (const auto& h : history) {
            user += "USER: " + h.query + "\nASSISTANT: " + h.answer + "\nFEEDBACK: " + h.feedback +
                    "\n";
        }
        user += "\n";
    }
    user += "CURRENT QUERY:\n" + current + "\nASSISTANT RESPONSE:\n" + answer +
            "\nGive your feedback now.";
    req.messages.push_back({Role::user, user});
    return trim(gateway.complete(req, Stage::interaction_generation).content);
}

}  // namespace

Trajectory run_trajectory(const SeedQuery& query, const PreferenceSpec& spec,
                          const TrajectoryOptions& options, Gateway& gateway, uint64_t seed) {
    if (options.max_turns < 1) throw Error("max_turns must be >= 1");

    Trajectory traj;
    traj.id = options.trajectory_id.empty() ? "traj-" + std::to_string(seed) : options.trajectory_id;
    traj.persona_id = spec.persona_id;
    traj.spec_text = spec.text;
    traj.seed_query = query;
    // the snapshot records the effective noise configuration: a disabled
    // distractor and p = 0 are the same process
    double eff_p_q = options.noise_enabled ? options.noise.p_q : 0.0;
    double eff_p_f = options.noise_enabled ? options.noise.p_f : 0.0;
    traj.config_snapshot = json{
        {"T", options.max_turns},
        {"rho", options.rho},
        {"noise",
         {{"p_q", eff_p_q},
          {"p_f", eff_p_f},
          {"alpha_q", options.noise.alpha_q},
          {"alpha_f", options.noise.alpha_f},
          {"layer_weights", options.noise.layer_weights}}},
        {"seed", seed}};

    StylizeResult styled = stylize_query(query, spec, options.rho, derive_seed(seed, "stylize"), gateway);
    traj.stylized = styled.stylized;

    std::string current = styled.text;
    std::vector<NoiseAnnotation> pending_noise;
    if (options.noise_enabled) {
        NoisifyResult noised =
            noisify(current, NoiseTarget::initial_query, options.noise, gateway, derive_seed(seed, "noise_q"));
        current = noised.text;
        if (noised.annotation) pending_noise.push_back(*noised.annotation);
    }

    std::vector<HistoryEntry> history;
    for (int t = 1; t <= options.max_turns; ++t) {
        std::string answer =
            ask_assistant(current, history, gateway, derive_seed(seed, "assistant", static_cast<uint64_t>(t)));

        Turn turn;
        turn.index = t;
        turn.user_message = current;
        turn.assistant_response = answer;
        turn.noise = std::move(pending_noise);
        pending_noise.clear();

        Decision decision;
        bool decided = false;
        for (int attempt = 0; attempt < 2 && !decided; ++attempt) {
            uint64_t fseed = derive_seed(seed, "feedback", static_cast<uint64_t>(t) * 8 + attempt);
            std::string raw = ask_feedback(spec, current, answer, history, gateway, fseed);
            if (options.noise_enabled) {
                NoisifyResult noised = noisify_feedback(raw, options.noise, gateway,
                                                        derive_seed(seed, "noise_f", static_cast<uint64_t>(t) * 8 + attempt));
                raw = noised.text;
                if (noised.annotation) {
                    turn.noise.push_back(*noised.annotation);
                }
            }
            try {
                decision = decide_followup(raw);
                decided = true;
            } catch (const UnparseableVerdict&) {
                // one retry with a fresh seed; annotations from the failed
                // attempt do not describe a kept turn
                while (!turn.noise.empty() && turn.noise.back().target == NoiseTarget::feedback)
                    turn.noise.pop_back();
                if (attempt == 1) {
                    throw UnparseableVerdict("trajectory " + traj.id + " turn " + std::to_string(t) +
                                             ": user agent failed to emit a verdict twice");
                }
            }
        }

        turn.feedback = decision.cleaned_feedback;
        turn.followup_issued = !decision.stop;
        turn.label = decision.stop ? 1 : 0;
        traj.turns.push_back(turn);

        if (decision.stop) {
            traj.termination = Termination::satisfied;
            return traj;
        }
        if (t == options.max_turns) {
            traj.termination = Termination::max_turns;
            return traj;
        }
        history.push_back({current, answer, decision.cleaned_feedback});
        current = *decision.next_query;
    }
    return traj;  // unreachable; loop always returns
}

json trajectory_to_json(const Trajectory& t) {
    json turns = json::array();
    for (const auto& turn : t.turns) {
        json noise = json::array();
        for (const auto& a : turn.noise) noise.push_back(annotation_to_json(a));
        turns.push_back({{"t", turn.index},
                         {"user_message", turn.user_message},
                         {"assistant_response", turn.assistant_response},
                         {"feedback", turn.feedback},
                         {"followup_issued", turn.followup_issued},
                         {"label", turn.label},
                         {"noise", std::move(noise)}});
    }
    json seed_query{{"text", t.seed_query.text},
                    {"source_dataset", t.seed_query.source_dataset},
                    {"domain", t.seed_query.domain}};
    if (t.seed_query.reference_answer) seed_query["reference_answer"] = *t.seed_query.reference_answer;
    return json{{"trajectory_id", t.id},
                {"persona_id", t.persona_id},
                {"spec", t.spec_text},
                {"seed_query", std::move(seed_query)},
                {"stylized", t.stylized},
                {"turns", std::move(turns)},
                {"termination", t.termination == Termination::satisfied ? "satisfied" : "max_turns"},
                {"config_snapshot", t.config_snapshot}};
}

Trajectory trajectory_from_json(const json& j) {
    Trajectory t;
    t.id = j.value("trajectory_id", "");
    t.persona_id = j.at("persona_id").get<std::string>();
    t.spec_text = j.at("spec").get<std::string>();
    const auto& sq = j.at("seed_query");
    t.seed_query.text = sq.at("text").get<std::string>();
    t.seed_query.source_dataset = sq.value("source_dataset", "custom");
    t.seed_query.domain = sq.value("domain", "general");
    if (sq.contains("reference_answer") && !sq["reference_answer"].is_null())
        t.seed_query.reference_answer = sq["reference_answer"].get<std::string>();
    t.stylized = j.at("stylized").get<bool>();
    for (const auto& jt : j.at("turns")) {
        Turn turn;
        turn.index = jt.at("t").get<int>();
        turn.user_message = jt.at("user_message").get<std::string>();
        turn.assistant_response = jt.at("assistant_response").get<std::string>();
        turn.feedback = jt.value("feedback", "");
        turn.followup_issued = jt.at("followup_issued").get<bool>();
        turn.label = jt.at("label").get<int>();
        if (jt.contains("noise"))
            for (const auto& a : jt["noise"]) turn.noise.push_back(annotation_from_json(a));
        t.turns.push_back(std::move(turn));
    }
    t.termination = j.at("termination").get<std::string>() == "satisfied" ? Termination::satisfied
                                                                          : Termination::max_turns;
    if (j.contains("config_snapshot")) t.config_snapshot = j["config_snapshot"];
    return t;
}

}  // namespace personaforge
