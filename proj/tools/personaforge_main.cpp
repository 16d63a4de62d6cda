#include <cstdio>
#include <iostream>
#include <memory>
#include <string>

#include <CLI11.hpp>

#include "personaforge/distractor.hpp"
#include "personaforge/errors.hpp"
#include "personaforge/pipeline.hpp"
#include "personaforge/prompts.hpp"
#include "personaforge/rng.hpp"
#include "personaforge/text.hpp"

using namespace personaforge;

namespace {

struct GlobalOptions {
    std::string config_path;
    uint64_t seed = 42;
    int workers = 1;
    std::string backend = "scripted";
    std::string cassette;
    std::string record_to;
    std::string assets;
};

Config make_config(const GlobalOptions& global) {
    Config cfg;
    if (!global.config_path.empty()) cfg = load_config(global.config_path);
    return cfg;
}

BackendHandle make_backend(const GlobalOptions& global, const Config& cfg) {
    BackendHandle backend;
    if (global.backend == "scripted") {
        backend = std::make_shared<ScriptedBackend>();
    } else if (global.backend == "replay") {
        if (global.cassette.empty()) throw Error("--backend replay needs --cassette");
        backend = std::make_shared<ReplayBackend>(global.cassette);
    } else if (global.backend == "remote") {
        backend = std::make_shared<RemoteBackend>(cfg.gateway);
    } else {
        throw Error("unknown backend '" + global.backend + "'");
    }
    if (!global.record_to.empty())
        backend = std::make_shared<RecordingBackend>(backend, global.record_to);
    return backend;
}

void print_ledger(const Gateway& gateway) {
    if (gateway.ledger().grand_total() <= 0.0) return;
    std::cerr << "\ntoken ledger:\n" << format_ledger_report(ledger_report(gateway.ledger(), 14.0));
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"personaforge: persona-conditioned dialogue synthesis and prompt-optimization data prep"};
    app.require_subcommand(1);
    app.fallthrough();

    GlobalOptions global;
    app.add_option("--config", global.config_path, "config file (TOML-style sections)");
    app.add_option("--seed", global.seed, "root random seed")->capture_default_str();
    app.add_option("--workers", global.workers, "worker threads")->capture_default_str();
    app.add_option("--backend", global.backend, "scripted|replay|remote")->capture_default_str();
    app.add_option("--cassette", global.cassette, "cassette file for --backend replay");
    app.add_option("--record", global.record_to, "record every exchange to this cassette file");
    app.add_option("--assets", global.assets, "override the asset directory");

    // generate
    auto* generate = app.add_subcommand("generate", "personas -> trajectories");
    generate->fallthrough();
    GenerateOptions gen;
    generate->add_option("--bank", gen.bank_path, "persona bank JSON");
    generate->add_option("--seeds", gen.seeds_path, "seed query pool JSONL");
    generate->add_option("--out", gen.out_path, "trajectory JSONL output")->required();
    generate->add_option("--personas-out", gen.personas_out_path, "persona/observed/spec sidecar JSONL");
    generate->add_option("--personas", gen.n_personas, "number of personas")->capture_default_str();
    bool no_noise = false;
    generate->add_flag("--no-noise", no_noise, "disable the distractor entirely");

    // noisify
    auto* noisify_cmd = app.add_subcommand("noisify", "corrupt a text-lines file");
    noisify_cmd->fallthrough();
    std::string noisify_in, noisify_out, noisify_target = "initial_query";
    noisify_cmd->add_option("--input", noisify_in, "plain text, one item per line")->required();
    noisify_cmd->add_option("--out", noisify_out, "JSONL output {original, corrupted, layer}")->required();
    noisify_cmd->add_option("--target", noisify_target, "initial_query|feedback")->capture_default_str();

    // export
    auto* export_cmd = app.add_subcommand("export", "trajectories -> turn instances");
    export_cmd->fallthrough();
    std::string exp_traj, exp_personas, exp_out, exp_schema;
    export_cmd->add_option("--trajectories", exp_traj)->required();
    export_cmd->add_option("--personas", exp_personas, "sidecar from generate")->required();
    export_cmd->add_option("--out", exp_out)->required();
    export_cmd->add_option("--schema", exp_schema, "turn instance JSON schema");

    // stats
    auto* stats_cmd = app.add_subcommand("stats", "corpus diversity metrics");
    stats_cmd->fallthrough();
    std::string stats_in, stats_out;
    stats_cmd->add_option("--input", stats_in, "trajectory JSONL or {text} JSONL")->required();
    stats_cmd->add_option("--out", stats_out, "write the JSON report here (default stdout)");

    // sft-prep
    auto* sft_cmd = app.add_subcommand("sft-prep", "pseudo-targets -> filtered SFT pairs");
    sft_cmd->fallthrough();
    std::string sft_traj, sft_personas, sft_out;
    sft_cmd->add_option("--trajectories", sft_traj)->required();
    sft_cmd->add_option("--personas", sft_personas)->required();
    sft_cmd->add_option("--out", sft_out)->required();

    // rl-prep
    auto* rl_cmd = app.add_subcommand("rl-prep", "GRPO groups with rewards and advantages");
    rl_cmd->fallthrough();
    std::string rl_traj, rl_personas, rl_out;
    rl_cmd->add_option("--trajectories", rl_traj)->required();
    rl_cmd->add_option("--personas", rl_personas)->required();
    rl_cmd->add_option("--out", rl_out)->required();

    // score
    auto* score_cmd = app.add_subcommand("score", "reward module over a states file");
    score_cmd->fallthrough();
    std::string score_states, score_traj, score_personas, score_out;
    score_cmd->add_option("--states", score_states, "prepared states JSONL");
    score_cmd->add_option("--trajectories", score_traj, "build states from trajectories");
    score_cmd->add_option("--personas", score_personas, "sidecar for --trajectories");
    score_cmd->add_option("--out", score_out)->required();

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "baselines + judge report");
    eval_cmd->fallthrough();
    std::string eval_states, eval_traj, eval_personas, eval_report, eval_table, eval_methods;
    eval_cmd->add_option("--states", eval_states, "prepared states JSONL");
    eval_cmd->add_option("--trajectories", eval_traj, "build states from trajectories");
    eval_cmd->add_option("--personas", eval_personas, "sidecar for --trajectories");
    eval_cmd->add_option("--report", eval_report, "JSON report path")->required();
    eval_cmd->add_option("--table", eval_table, "plain-text table path");
    eval_cmd->add_option("--methods", eval_methods, "comma-separated subset (default: all)");

    // import-seeds
    auto* import_cmd = app.add_subcommand("import-seeds", "ingest an upstream dataset as a seed pool");
    import_cmd->fallthrough();
    std::string imp_in, imp_field = "text", imp_source = "custom", imp_domain = "general", imp_out;
    import_cmd->add_option("--input", imp_in, ".jsonl or plain text lines")->required();
    import_cmd->add_option("--field", imp_field, "JSONL field holding the query")->capture_default_str();
    import_cmd->add_option("--source-dataset", imp_source)->capture_default_str();
    import_cmd->add_option("--domain", imp_domain)->capture_default_str();
    import_cmd->add_option("--out", imp_out)->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (!global.assets.empty()) set_asset_dir(global.assets);
        Config cfg = make_config(global);

        if (import_cmd->parsed()) {
            size_t n = run_import_seeds(imp_in, imp_field, imp_source, imp_domain, imp_out);
            std::cerr << "imported " << n << " queries -> " << imp_out << "\n";
            return 0;
        }
        if (stats_cmd->parsed()) {
            json report = run_stats(stats_in, cfg.corpus, global.seed, global.workers);
            std::string dumped = report.dump(2) + "\n";
            if (stats_out.empty()) {
                std::cout << dumped;
            } else {
                write_file(stats_out, dumped);
            }
            char line[160];
            std::snprintf(line, sizeof(line), "%-12s %10s\n", "metric", "value");
            std::cerr << line;
            std::snprintf(line, sizeof(line), "%-12s %10zu\n", "n_samples",
                          report["n_samples"].get<size_t>());
            std::cerr << line;
            for (const char* key : {"self_bleu", "ingf", "ttr"}) {
                std::snprintf(line, sizeof(line), "%-12s %10.4f\n", key, report[key].get<double>());
                std::cerr << line;
            }
            return 0;
        }

        Gateway gateway(make_backend(global, cfg), cfg.gateway);

        if (generate->parsed()) {
            gen.seed = global.seed;
            gen.workers = global.workers;
            gen.noise_enabled = !no_noise;
            if (gen.bank_path.empty()) gen.bank_path = asset_path("persona_bank.json");
            if (gen.seeds_path.empty()) gen.seeds_path = asset_path("seed_pools.jsonl");
            GenerateSummary s = run_generate(gen, cfg, gateway);
            std::cerr << "personas " << s.personas << ", trajectories " << s.trajectories
                      << ", turns " << s.turns << " (satisfied " << s.satisfied << ", truncated "
                      << s.truncated << ") -> " << gen.out_path << "\n";
            print_ledger(gateway);
            return 0;
        }
        if (noisify_cmd->parsed()) {
            NoiseTarget target = noisify_target == "feedback" ? NoiseTarget::feedback
                                                              : NoiseTarget::initial_query;
            NoiseSettings noise = cfg.noise;
            // standalone corruption tool: every line is noised
            noise.p_q = 1.0;
            noise.p_f = 1.0;
            std::vector<json> out;
            size_t lineno = 0;
            for (const auto& raw : split_lines(read_file(noisify_in))) {
                std::string text = trim(raw);
                if (text.empty()) continue;
                NoisifyResult r = noisify(text, target, noise, gateway,
                                          derive_seed(global.seed, "noisify", lineno++));
                out.push_back(json{{"original", text},
                                   {"corrupted", r.text},
                                   {"layer", r.annotation ? to_string(r.annotation->layer) : "none"}});
            }
            write_jsonl(noisify_out, out);
            std::cerr << "noisified " << out.size() << " lines -> " << noisify_out << "\n";
            print_ledger(gateway);
            return 0;
        }
        if (export_cmd->parsed()) {
            if (exp_schema.empty()) exp_schema = asset_path("schemas/turn_instance.schema.json");
            size_t n = run_export(exp_traj, exp_personas, exp_out, exp_schema);
            std::cerr << "exported " << n << " turn instances -> " << exp_out << "\n";
            return 0;
        }
        if (sft_cmd->parsed()) {
            auto states = build_states(sft_traj, sft_personas);
            SftSummary s = run_sft_prep(states, sft_out, cfg, gateway, global.seed, global.workers);
            std::cerr << "states " << s.states << ": kept " << s.kept << ", near-identical "
                      << s.dropped_near_identical << ", generic " << s.dropped_generic
                      << ", no-improvement " << s.dropped_no_improvement << " -> " << sft_out << "\n";
            print_ledger(gateway);
            return 0;
        }
        if (rl_cmd->parsed()) {
            auto states = build_states(rl_traj, rl_personas);
            size_t n = run_rl_prep(states, rl_out, cfg, gateway, global.seed, global.workers);
            std::cerr << "prepared " << n << " GRPO groups -> " << rl_out << "\n";
            print_ledger(gateway);
            return 0;
        }
        if (score_cmd->parsed()) {
            size_t n = 0;
            if (!score_states.empty()) {
                n = run_score(score_states, score_out, cfg, gateway, global.seed, global.workers);
            } else if (!score_traj.empty() && !score_personas.empty()) {
                std::vector<json> records;
                for (const auto& state : build_states(score_traj, score_personas))
                    records.push_back(state_to_json(state));
                n = run_score_records(records, score_out, cfg, gateway, global.seed, global.workers);
            } else {
                throw Error("score needs --states or --trajectories + --personas");
            }
            std::cerr << "scored " << n << " states -> " << score_out << "\n";
            print_ledger(gateway);
            return 0;
        }
        if (eval_cmd->parsed()) {
            std::vector<OptimizerState> states;
            if (!eval_states.empty()) {
                states = read_states(eval_states);
            } else if (!eval_traj.empty() && !eval_personas.empty()) {
                states = build_states(eval_traj, eval_personas);
            } else {
                throw Error("eval needs --states or --trajectories + --personas");
            }
            std::vector<Method> methods;
            if (eval_methods.empty()) {
                methods = all_methods();
            } else {
                std::string rest = eval_methods;
                while (!rest.empty()) {
                    size_t comma = rest.find(',');
                    methods.push_back(method_from_string(trim(rest.substr(0, comma))));
                    if (comma == std::string::npos) break;
                    rest = rest.substr(comma + 1);
                }
            }
            EvalReport report = run_eval(states, methods, cfg, gateway, global.seed,
                                         global.workers, eval_report, eval_table);
            std::cout << report_table(report);
            print_ledger(gateway);
            return report.exclusions > 0 ? 2 : 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
