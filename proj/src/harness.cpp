#include "personaforge/harness.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include "personaforge/errors.hpp"
#include "personaforge/prompts.hpp"
#include "personaforge/reward.hpp"
#include "personaforge/rng.hpp"
#include "personaforge/text.hpp"
#include "personaforge/worker.hpp"

namespace personaforge {

std::string to_string(Method m) {
    switch (m) {
        case Method::vanilla: return "vanilla";
        case Method::ppopt: return "ppopt";
        case Method::concat_history: return "concat_history";
        case Method::persona_rewrite: return "persona_rewrite";
        case Method::fewshot_icl: return "fewshot_icl";
        case Method::controller_guided: return "controller_guided";
    }
    return "vanilla";
}

Method method_from_string(const std::string& s) {
    for (Method m : all_methods())
        if (to_string(m) == s) return m;
    throw Error("unknown method: " + s);
}

const std::vector<Method>& all_methods() {
    static const std::vector<Method> methods = {
        Method::vanilla,        Method::ppopt,       Method::concat_history,
        Method::persona_rewrite, Method::fewshot_icl, Method::controller_guided,
    };
    return methods;
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

std::string call_helper(RoleTag tag, const std::string& prompt_name, const std::string& user,
                        Gateway& gateway, uint64_t seed) {
    ChatRequest req;
    req.role_tag = tag;
    req.temperature = gateway.config().temperature;
    req.top_p = gateway.config().top_p;
    req.max_tokens = 1024;
    req.seed = static_cast<int64_t>(seed);
    req.messages.push_back({Role::system, load_prompt(prompt_name)});
    req.messages.push_back({Role::user, user});
    std::string out = trim(gateway.complete(req, Stage::reward_judging).content);
    if (out.empty()) throw MalformedResponse(prompt_name + " helper returned empty output");
    return out;
}

}  // namespace

std::vector<ChatMessage> compose_method_messages(Method method, const OptimizerState& state,
                                                 Gateway& gateway, const EvalConfig& eval_config,
                                                 uint64_t seed) {
    std::vector<ChatMessage> messages;
    switch (method) {
        case Method::vanilla:
            messages.push_back({Role::user, state.initial_query});
            break;
        case Method::ppopt: {
            ChatRequest req;
            req.role_tag = RoleTag::optimizer;
            req.temperature = gateway.config().temperature;
            req.top_p = gateway.config().top_p;
            req.max_tokens = 1024;
            req.seed = static_cast<int64_t>(derive_seed(seed, "ppopt_opt"));
            req.messages.push_back({Role::system, load_prompt("optimizer")});
            req.messages.push_back({Role::user, render_state_prompt(state)});
            OptimizerOutput out =
                parse_output(gateway.complete(req, Stage::optimizer_sampling).content);
            if (eval_config.include_history && !state.history.empty()) {
                messages.push_back({Role::system, "Context from this user's past sessions:\n" +
                                                      history_block(state)});
            }
            messages.push_back({Role::user, out.improved_prompt});
            break;
        }
        case Method::concat_history: {
            std::string combined = history_block(state);
            if (!combined.empty()) combined += "\n";
            combined += state.initial_query;
            messages.push_back({Role::user, combined});
            break;
        }
        case Method::persona_rewrite: {
            std::string induced =
                call_helper(RoleTag::teacher_profile, "persona_inducer",
                            "HISTORY:\n" + history_block(state), gateway, derive_seed(seed, "inducer"));
            messages.push_back(
                {Role::user, "User persona: " + induced + "\n\n" + state.initial_query});
            break;
        }
        case Method::fewshot_icl: {
            std::string pairs = call_helper(RoleTag::teacher_prompt, "icl_builder",
                                            "HISTORY:\n" + history_block(state), gateway,
                                            derive_seed(seed, "icl"));
            messages.push_back({Role::user, pairs + "\n\n" + state.initial_query});
            break;
        }
        case Method::controller_guided: {
            std::string rewritten = call_helper(
                RoleTag::teacher_prompt, "controller",
                "HISTORY:\n" + history_block(state) + "\nQUERY: " + state.initial_query, gateway,
                derive_seed(seed, "controller"));
            messages.push_back({Role::user, rewritten});
            break;
        }
    }
    return messages;
}

std::string run_baseline(Method method, const OptimizerState& state, Gateway& gateway,
                         const EvalConfig& eval_config, uint64_t seed) {
    ChatRequest req;
    req.role_tag = RoleTag::assistant_agent;
    req.temperature = gateway.config().temperature;
    req.top_p = gateway.config().top_p;
    req.max_tokens = gateway.config().max_tokens;
    req.seed = static_cast<int64_t>(derive_seed(seed, "final_response"));
    req.messages = compose_method_messages(method, state, gateway, eval_config, seed);
    return trim(gateway.complete(req, Stage::reward_judging).content);
}

namespace {

double scalar_judgment(RoleTag tag, const std::string& prompt_name, const std::string& user,
                       Gateway& gateway, uint64_t seed) {
    for (int attempt = 0; attempt < 2; ++attempt) {
        ChatRequest req;
        req.role_tag = tag;
        req.temperature = 0.0;
        req.top_p = 1.0;
        req.max_tokens = 256;
        req.seed = static_cast<int64_t>(derive_seed(seed, "judge", static_cast<uint64_t>(attempt)));
        req.messages.push_back({Role::system, load_prompt(prompt_name)});
        req.messages.push_back({Role::user, user});
        auto rating = parse_rating_line(gateway.complete(req, Stage::reward_judging).content);
        if (rating && *rating >= 1.0 && *rating <= 10.0) return *rating;
    }
    throw UnparseableVerdict(prompt_name + " produced no usable RATING line");
}

}  // namespace

double judge_personalization(const Persona& persona, const std::string& response, Gateway& gateway,
                             uint64_t seed) {
    std::string persona_lines;
    for (const auto& f : persona.features) persona_lines += "- " + f.dimension_id + "=" + f.value + "\n";
    return scalar_judgment(RoleTag::judge_prof, "judge_personalization",
                           "USER PROFILE:\n" + persona_lines + "\nMODEL RESPONSE:\n" + response,
                           gateway, seed);
}

double judge_task_completion(const std::optional<std::string>& reference_answer,
                             const std::string& query, const std::string& response,
                             Gateway& gateway, uint64_t seed) {
    if (trim(query).empty() || trim(response).empty())
        throw Error("judge_task_completion: query and response must be non-empty");
    std::string user = "TASK QUERY:\n" + query + "\n";
    if (reference_answer) user += "REFERENCE ANSWER:\n" + *reference_answer + "\n";
    user += "MODEL RESPONSE:\n" + response;
    return scalar_judgment(RoleTag::judge_task, "judge_task_completion", user, gateway, seed);
}

EvalReport evaluate(const std::vector<OptimizerState>& states, const std::vector<Method>& methods,
                    int runs, Gateway& gateway, const EvalConfig& eval_config, uint64_t seed,
                    int workers) {
    if (states.empty()) throw Error("evaluate: no states");
    if (runs < 1) throw Error("evaluate: runs must be >= 1");

    struct Cell {
        size_t state_idx;
        size_t method_idx;
        int run;
    };
    std::vector<Cell> cells;
    for (size_t si = 0; si < states.size(); ++si)
        for (size_t mi = 0; mi < methods.size(); ++mi)
            for (int run = 1; run <= runs; ++run) cells.push_back({si, mi, run});

    struct CellResult {
        bool ok = false;
        EvalRecord record;
    };
    std::vector<CellResult> results = parallel_map<CellResult>(
        cells.size(), workers, [&](size_t i) -> CellResult {
            const Cell& cell = cells[i];
            const OptimizerState& state = states[cell.state_idx];
            Method method = methods[cell.method_idx];
            uint64_t cell_seed =
                derive_seed(derive_seed(seed, state.state_id), to_string(method),
                            static_cast<uint64_t>(cell.run));
            CellResult out;
            try {
                std::string response = run_baseline(method, state, gateway, eval_config, cell_seed);
                if (!state.persona) throw Error("state " + state.state_id + " carries no persona");
                out.record.personalization = judge_personalization(
                    *state.persona, response, gateway, derive_seed(cell_seed, "p_judge"));
                out.record.task_completion =
                    judge_task_completion(state.reference_answer, state.initial_query, response,
                                          gateway, derive_seed(cell_seed, "t_judge"));
                out.record.state_id = state.state_id;
                out.record.method = method;
                out.record.run_index = cell.run;
                out.ok = true;
            } catch (const std::exception&) {
                out.ok = false;  // partial failure: excluded, counted below
            }
            return out;
        });

    std::vector<EvalRecord> records;
    size_t exclusions = 0;
    for (const auto& r : results) {
        if (r.ok) {
            records.push_back(r.record);
        } else {
            ++exclusions;
        }
    }
    return aggregate_records(std::move(records), methods, runs, states.size(), exclusions);
}

EvalReport aggregate_records(std::vector<EvalRecord> records, const std::vector<Method>& methods,
                             int runs, size_t n_states, size_t exclusions) {
    EvalReport report;
    report.runs = runs;
    report.n_states = n_states;
    report.exclusions = exclusions;
    report.records = std::move(records);

    // run-level means, then mean/population-variance over runs
    for (Method m : methods) {
        std::vector<double> p_run_means, t_run_means;
        for (int run = 1; run <= runs; ++run) {
            double p_sum = 0.0, t_sum = 0.0;
            size_t n = 0;
            for (const auto& rec : report.records) {
                if (rec.method != m || rec.run_index != run) continue;
                p_sum += rec.personalization;
                t_sum += rec.task_completion;
                ++n;
            }
            if (n == 0) continue;
            p_run_means.push_back(p_sum / static_cast<double>(n));
            t_run_means.push_back(t_sum / static_cast<double>(n));
        }
        auto mean_var = [](const std::vector<double>& xs) {
            double mean = 0.0;
            for (double x : xs) mean += x;
            mean /= xs.empty() ? 1.0 : static_cast<double>(xs.size());
            double var = 0.0;
            for (double x : xs) var += (x - mean) * (x - mean);
            var /= xs.empty() ? 1.0 : static_cast<double>(xs.size());
            return std::pair<double, double>(mean, var);
        };
        MethodSummary summary;
        std::tie(summary.personalization_mean, summary.personalization_var) = mean_var(p_run_means);
        std::tie(summary.task_mean, summary.task_var) = mean_var(t_run_means);
        report.methods[to_string(m)] = summary;
    }

    auto vanilla = report.methods.find(to_string(Method::vanilla));
    if (vanilla != report.methods.end()) {
        for (Method m : methods) {
            if (m == Method::vanilla) continue;
            const MethodSummary& s = report.methods[to_string(m)];
            MethodDelta d;
            d.personalization_delta = s.personalization_mean - vanilla->second.personalization_mean;
            d.task_abs_delta = std::fabs(s.task_mean - vanilla->second.task_mean);
            if (vanilla->second.personalization_mean != 0.0)
                d.personalization_delta_pct =
                    d.personalization_delta / vanilla->second.personalization_mean * 100.0;
            if (vanilla->second.task_mean != 0.0)
                d.task_abs_delta_pct = d.task_abs_delta / vanilla->second.task_mean * 100.0;
            report.deltas[to_string(m)] = d;
        }
    }
    return report;
}

json report_to_json(const EvalReport& report) {
    json records = json::array();
    for (const auto& r : report.records) {
        records.push_back({{"state_id", r.state_id},
                           {"method", to_string(r.method)},
                           {"run", r.run_index},
                           {"personalization", r.personalization},
                           {"task_completion", r.task_completion}});
    }
    json methods = json::object();
    for (const auto& [name, s] : report.methods) {
        methods[name] = {{"personalization", {{"mean", s.personalization_mean}, {"variance", s.personalization_var}}},
                         {"task_completion", {{"mean", s.task_mean}, {"variance", s.task_var}}}};
    }
    json deltas = json::object();
    for (const auto& [name, d] : report.deltas) {
        deltas[name] = {{"personalization_delta", d.personalization_delta},
                        {"personalization_delta_pct", d.personalization_delta_pct},
                        {"task_abs_delta", d.task_abs_delta},
                        {"task_abs_delta_pct", d.task_abs_delta_pct}};
    }
    return json{{"runs", report.runs},
                {"n_states", report.n_states},
                {"exclusions", report.exclusions},
                {"methods", std::move(methods)},
                {"deltas", std::move(deltas)},
                {"records", std::move(records)}};
}

std::string report_table(const EvalReport& report) {
    std::ostringstream out;
    char buf[200];
    if (report.exclusions > 0)
        out << "excluded cells: " << report.exclusions << " (partial failures)\n";
    std::snprintf(buf, sizeof(buf), "%-18s %12s %10s %12s %10s\n", "method", "person(mean)",
                  "(var)", "task(mean)", "(var)");
    out << buf;
    for (const auto& [name, s] : report.methods) {
        std::snprintf(buf, sizeof(buf), "%-18s %12.3f %10.3f %12.3f %10.3f\n", name.c_str(),
                      s.personalization_mean, s.personalization_var, s.task_mean, s.task_var);
        out << buf;
    }
    if (!report.deltas.empty()) {
        std::snprintf(buf, sizeof(buf), "%-18s %12s %10s %12s %10s\n", "delta vs vanilla",
                      "person", "(pct)", "|task|", "(pct)");
        out << buf;
        for (const auto& [name, d] : report.deltas) {
            std::snprintf(buf, sizeof(buf), "%-18s %+12.3f %9.2f%% %12.3f %9.2f%%\n", name.c_str(),
                          d.personalization_delta, d.personalization_delta_pct, d.task_abs_delta,
                          d.task_abs_delta_pct);
            out << buf;
        }
    }
    return out.str();
}

}  // namespace personaforge
