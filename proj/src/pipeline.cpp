#include "personaforge/pipeline.hpp"

#include <cstdio>
#include <fstream>
#include <map>

#include "personaforge/errors.hpp"
#include "personaforge/prompts.hpp"
#include "personaforge/reward.hpp"
#include "personaforge/rng.hpp"
#include "personaforge/schema.hpp"
#include "personaforge/text.hpp"
#include "personaforge/worker.hpp"

namespace personaforge {

namespace {

struct PersonaBundle {
    PersonaRecord record;
    std::vector<Trajectory> trajectories;
};

}  // namespace

GenerateSummary run_generate(const GenerateOptions& options, const Config& config,
                             Gateway& gateway) {
    PersonaBank bank = load_bank(options.bank_path);
    std::vector<QueryPool> pools = load_seed_pools(options.seeds_path, config.seed_weights);
    if (options.n_personas < 1) throw Error("n_personas must be >= 1");

    int sessions = std::max(1, config.simulate.sessions);
    std::vector<PersonaBundle> bundles = parallel_map<PersonaBundle>(
        static_cast<size_t>(options.n_personas), options.workers, [&](size_t i) {
            uint64_t pseed = derive_seed(options.seed, "persona", i);
            char hint[32];
            std::snprintf(hint, sizeof(hint), "persona-%05zu", i);

            PersonaBundle bundle;
            bundle.record.persona = sample_persona(bank, pseed, gateway, hint);
            bundle.record.observed = mask_features(bundle.record.persona, bank,
                                                   config.simulate.mask_rate,
                                                   derive_seed(pseed, "mask"));
            bundle.record.spec =
                compile_spec(bundle.record.observed, gateway, derive_seed(pseed, "compile"));

            for (int s = 0; s < sessions; ++s) {
                SeedQuery query =
                    sample_seed_query(pools, derive_seed(pseed, "seed_query", static_cast<uint64_t>(s)));
                TrajectoryOptions traj_options;
                traj_options.max_turns = config.simulate.max_turns;
                traj_options.rho = config.simulate.rho;
                traj_options.noise = config.noise;
                traj_options.noise_enabled = options.noise_enabled;
                traj_options.trajectory_id =
                    bundle.record.persona.id + "/session-" + std::to_string(s);
                bundle.trajectories.push_back(
                    run_trajectory(query, bundle.record.spec, traj_options, gateway,
                                   derive_seed(pseed, "trajectory", static_cast<uint64_t>(s))));
            }
            return bundle;
        });

    GenerateSummary summary;
    std::vector<json> traj_lines;
    std::vector<json> persona_lines;
    for (const auto& bundle : bundles) {
        ++summary.personas;
        persona_lines.push_back(json{{"persona", persona_to_json(bundle.record.persona)},
                                     {"observed", observed_to_json(bundle.record.observed)},
                                     {"spec",
                                      {{"text", bundle.record.spec.text},
                                       {"persona_id", bundle.record.spec.persona_id},
                                       {"compiler_backend", bundle.record.spec.compiler_backend}}}});
        for (const auto& traj : bundle.trajectories) {
            ++summary.trajectories;
            summary.turns += traj.turns.size();
            if (traj.termination == Termination::satisfied) ++summary.satisfied;
            else ++summary.truncated;
            traj_lines.push_back(trajectory_to_json(traj));
        }
    }
    write_jsonl(options.out_path, traj_lines);
    if (!options.personas_out_path.empty()) write_jsonl(options.personas_out_path, persona_lines);
    return summary;
}

std::vector<PersonaRecord> read_persona_records(const std::string& path) {
    std::vector<PersonaRecord> out;
    for (const auto& rec : read_jsonl(path)) {
        PersonaRecord r;
        r.persona = persona_from_json(rec.at("persona"));
        r.observed = observed_from_json(rec.at("observed"));
        r.spec.text = rec.at("spec").at("text").get<std::string>();
        r.spec.persona_id = rec.at("spec").value("persona_id", r.persona.id);
        r.spec.compiler_backend = rec.at("spec").value("compiler_backend", "");
        out.push_back(std::move(r));
    }
    return out;
}

std::vector<OptimizerState> build_states(const std::string& trajectories_path,
                                         const std::string& personas_path) {
    std::map<std::string, Persona> personas;
    for (const auto& rec : read_persona_records(personas_path))
        personas.emplace(rec.persona.id, rec.persona);

    std::vector<std::string> order;
    std::map<std::string, std::vector<Trajectory>> grouped;
    for (const auto& line : read_jsonl(trajectories_path)) {
        Trajectory traj = trajectory_from_json(line);
        auto [it, fresh] = grouped.try_emplace(traj.persona_id);
        if (fresh) order.push_back(traj.persona_id);
        it->second.push_back(std::move(traj));
    }

    std::vector<OptimizerState> states;
    for (const auto& persona_id : order) {
        const auto& trajs = grouped[persona_id];
        const Trajectory& last = trajs.back();
        if (last.turns.empty()) continue;

        OptimizerState state;
        state.state_id = persona_id;
        state.initial_query = last.turns.front().user_message;
        state.reference_answer = last.seed_query.reference_answer;
        for (size_t j = 0; j + 1 < trajs.size(); ++j) {
            Session session;
            for (const auto& turn : trajs[j].turns)
                session.turns.push_back(
                    {turn.user_message, turn.assistant_response, turn.feedback});
            state.history.push_back(std::move(session));
        }
        auto p = personas.find(persona_id);
        if (p != personas.end()) state.persona = p->second;
        states.push_back(std::move(state));
    }
    return states;
}

size_t run_export(const std::string& trajectories_path, const std::string& personas_path,
                  const std::string& out_path, const std::string& schema_path) {
    std::map<std::string, ObservedPersona> observed;
    for (const auto& rec : read_persona_records(personas_path))
        observed.emplace(rec.persona.id, rec.observed);

    json schema = load_schema(schema_path);
    std::vector<json> lines;
    for (const auto& line : read_jsonl(trajectories_path)) {
        Trajectory traj = trajectory_from_json(line);
        auto it = observed.find(traj.persona_id);
        if (it == observed.end())
            throw Error("no persona record for '" + traj.persona_id + "' in " + personas_path);
        for (const auto& inst : serialize_trajectory(traj, it->second)) {
            json j = turn_instance_to_json(inst);
            validate_schema(j, schema);
            lines.push_back(std::move(j));
        }
    }
    write_jsonl(out_path, lines);
    return lines.size();
}

json run_stats(const std::string& input_path, const CorpusConfig& config, uint64_t seed,
               int workers) {
    std::vector<std::string> samples;
    for (const auto& rec : read_jsonl(input_path)) {
        if (rec.contains("turns")) {
            samples.push_back(conversation_sample_text(trajectory_from_json(rec)));
        } else if (rec.contains("text")) {
            samples.push_back(rec.at("text").get<std::string>());
        } else {
            throw Error(input_path + ": record has neither 'turns' nor 'text'");
        }
    }
    CorpusStats stats = corpus_stats(samples, config, seed, workers);
    return json{{"n_samples", stats.n_samples},
                {"self_bleu", stats.self_bleu},
                {"ingf", stats.ingf},
                {"ttr", stats.ttr},
                {"token_total", stats.token_total},
                {"config",
                 {{"self_bleu_max_n", config.self_bleu_max_n},
                  {"self_bleu_samples", stats.self_bleu_samples},
                  {"self_bleu_exact_limit", config.self_bleu_exact_limit},
                  {"subsample_seed", seed},
                  {"ingf_n", config.ingf_n},
                  {"ingf_threshold", config.ingf_threshold},
                  {"tokenization", "lowercase, whitespace split, edge punctuation .,!?;: stripped"}}}};
}

SftSummary run_sft_prep(const std::vector<OptimizerState>& states, const std::string& out_path,
                        const Config& config, Gateway& gateway, uint64_t seed, int workers) {
    struct Item {
        PseudoTarget target;
        std::string prompt;
    };
    std::vector<Item> items = parallel_map<Item>(states.size(), workers, [&](size_t i) {
        const OptimizerState& state = states[i];
        uint64_t sseed = derive_seed(seed, state.state_id);
        Item item;
        item.target = synthesize_pseudo_targets(state, gateway, sseed);
        filter_pseudo_target(item.target, state, gateway, config.optimizer,
                             derive_seed(sseed, "filter"));
        item.prompt = render_state_prompt(state);
        return item;
    });

    SftSummary summary;
    summary.states = states.size();
    std::vector<json> lines;
    for (const auto& item : items) {
        switch (item.target.filter_verdict) {
            case FilterVerdict::kept: ++summary.kept; break;
            case FilterVerdict::dropped_near_identical: ++summary.dropped_near_identical; break;
            case FilterVerdict::dropped_generic: ++summary.dropped_generic; break;
            case FilterVerdict::dropped_no_improvement: ++summary.dropped_no_improvement; break;
            case FilterVerdict::unverdicted: break;
        }
        if (item.target.filter_verdict != FilterVerdict::kept) continue;
        lines.push_back(json{{"prompt", item.prompt},
                             {"completion", format_output(item.target.z_star, item.target.q_star)},
                             {"persona_id", item.target.state_id},
                             {"provenance",
                              {{"teacher_backend", item.target.teacher_backend},
                               {"filter_verdict", to_string(item.target.filter_verdict)}}}});
    }
    write_jsonl(out_path, lines);
    return summary;
}

size_t run_rl_prep(const std::vector<OptimizerState>& states, const std::string& out_path,
                   const Config& config, Gateway& gateway, uint64_t seed, int workers) {
    std::vector<json> lines = parallel_map<json>(states.size(), workers, [&](size_t i) {
        const OptimizerState& state = states[i];
        if (!state.persona) throw Error("rl-prep: state " + state.state_id + " has no persona");
        uint64_t sseed = derive_seed(seed, state.state_id);

        GrpoGroup group;
        group.state_id = state.state_id;
        group.rendered_prompt = render_state_prompt(state);
        group.temperature = config.optimizer.temperature;
        group.top_p = config.optimizer.top_p;
        group.outputs =
            sample_group(state, config.optimizer.k_samples, gateway, config.optimizer, sseed);
        for (size_t k = 0; k < group.outputs.size(); ++k) {
            uint64_t kseed = derive_seed(sseed, "slot", k);
            double r_prof = compute_r_prof(group.outputs[k].reasoning, *state.persona, gateway,
                                           derive_seed(kseed, "prof"));
            PairResponses pair = generate_pair(state, group.outputs[k].improved_prompt, gateway,
                                               config.eval.include_history,
                                               derive_seed(kseed, "pair"));
            int r_task = compute_r_task(state.initial_query, *state.persona, pair.baseline,
                                        pair.improved, gateway, derive_seed(kseed, "task"));
            group.rewards.push_back(combine(r_prof, static_cast<double>(r_task),
                                            config.reward.lambda_prof, config.reward.lambda_task)
                                        .total);
        }
        group.advantages = group_advantages(group.rewards, config.optimizer.advantage_epsilon);
        return grpo_group_to_json(group);
    });
    write_jsonl(out_path, lines);
    return lines.size();
}

std::vector<OptimizerState> read_states(const std::string& path) {
    std::vector<OptimizerState> states;
    for (const auto& rec : read_jsonl(path)) states.push_back(state_from_json(rec));
    return states;
}

size_t run_score(const std::string& states_path, const std::string& out_path,
                 const Config& config, Gateway& gateway, uint64_t seed, int workers) {
    return run_score_records(read_jsonl(states_path), out_path, config, gateway, seed, workers);
}

size_t run_score_records(const std::vector<json>& records, const std::string& out_path,
                         const Config& config, Gateway& gateway, uint64_t seed, int workers) {
    std::vector<json> lines = parallel_map<json>(records.size(), workers, [&](size_t i) {
        const json& rec = records[i];
        OptimizerState state = state_from_json(rec);
        if (!state.persona) throw Error("score: state " + state.state_id + " has no persona");
        uint64_t sseed = derive_seed(seed, state.state_id);

        std::string reasoning, improved;
        if (rec.contains("reasoning") && rec.contains("improved_prompt")) {
            reasoning = rec.at("reasoning").get<std::string>();
            improved = rec.at("improved_prompt").get<std::string>();
        } else {
            ChatRequest req;
            req.role_tag = RoleTag::optimizer;
            req.temperature = config.optimizer.temperature;
            req.top_p = config.optimizer.top_p;
            req.max_tokens = 1024;
            req.seed = static_cast<int64_t>(derive_seed(sseed, "draw"));
            req.messages.push_back({Role::system, load_prompt("optimizer")});
            req.messages.push_back({Role::user, render_state_prompt(state)});
            OptimizerOutput one = parse_output(gateway.complete(req, Stage::optimizer_sampling).content);
            reasoning = one.reasoning;
            improved = one.improved_prompt;
        }

        std::vector<std::string> refs;
        double r_prof =
            compute_r_prof(reasoning, *state.persona, gateway, derive_seed(sseed, "prof"), &refs);
        PairResponses pair = generate_pair(state, improved, gateway, config.eval.include_history,
                                           derive_seed(sseed, "pair"));
        uint64_t ab_seed = derive_seed(sseed, "task");
        int r_task = compute_r_task(state.initial_query, *state.persona, pair.baseline,
                                    pair.improved, gateway, ab_seed, &refs);
        RewardBreakdown breakdown = combine(r_prof, static_cast<double>(r_task),
                                            config.reward.lambda_prof, config.reward.lambda_task);
        return json{{"state_id", state.state_id},
                    {"r_prof", breakdown.r_prof},
                    {"r_task", breakdown.r_task},
                    {"lambda_prof", breakdown.lambda_prof},
                    {"lambda_task", breakdown.lambda_task},
                    {"R", breakdown.total},
                    {"judge_transcript_refs", refs},
                    {"ab_seed", ab_seed}};
    });
    write_jsonl(out_path, lines);
    return lines.size();
}

EvalReport run_eval(const std::vector<OptimizerState>& states, const std::vector<Method>& methods,
                    const Config& config, Gateway& gateway, uint64_t seed, int workers,
                    const std::string& report_json_path, const std::string& report_table_path) {
    EvalReport report =
        evaluate(states, methods, config.eval.runs, gateway, config.eval, seed, workers);
    if (!report_json_path.empty()) write_file(report_json_path, report_to_json(report).dump(2) + "\n");
    if (!report_table_path.empty()) write_file(report_table_path, report_table(report));
    return report;
}

size_t run_import_seeds(const std::string& input_path, const std::string& field,
                        const std::string& source_dataset, const std::string& domain,
                        const std::string& out_path) {
    std::vector<json> out;
    bool jsonl = input_path.size() >= 6 &&
                 input_path.compare(input_path.size() - 6, 6, ".jsonl") == 0;
    if (jsonl) {
        for (const auto& rec : read_jsonl(input_path)) {
            if (!rec.contains(field)) continue;
            std::string text = trim(rec.at(field).get<std::string>());
            if (text.empty()) continue;
            json line{{"text", text}, {"source_dataset", source_dataset}, {"domain", domain}};
            if (rec.contains("reference_answer"))
                line["reference_answer"] = rec["reference_answer"];
            out.push_back(std::move(line));
        }
    } else {
        for (const auto& raw : split_lines(read_file(input_path))) {
            std::string text = trim(raw);
            if (text.empty()) continue;
            out.push_back(json{{"text", text}, {"source_dataset", source_dataset}, {"domain", domain}});
        }
    }
    if (out.empty()) throw Error("import-seeds: no usable queries in " + input_path);
    write_jsonl(out_path, out);
    return out.size();
}

}  // namespace personaforge
