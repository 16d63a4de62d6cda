#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace personaforge {

struct GatewayConfig {
    int max_retries = 5;
    int backoff_base_ms = 500;
    double backoff_factor = 2.0;
    double backoff_jitter = 0.2;  // +-20%
    int max_inflight = 8;
    std::string base_url = "https://api.openai.com";
    std::string model = "gpt-4o-mini";
    double temperature = 0.7;
    double top_p = 0.9;
    int max_tokens = 1024;
};

struct NoiseSettings {
    double p_q = 0.5;
    double p_f = 0.5;
    double alpha_q = 0.5;
    double alpha_f = 0.5;
    std::array<double, 3> layer_weights = {0.4, 0.35, 0.25};
};

struct SimulateConfig {
    int max_turns = 5;     // T
    double rho = 0.5;      // stylization probability
    double mask_rate = 0.3;
    int sessions = 1;      // trajectories per persona
};

struct OptimizerConfig {
    int k_samples = 8;         // GRPO group size K
    double temperature = 0.7;  // tau
    double top_p = 0.9;
    double near_identical_threshold = 0.95;
    int generic_token_threshold = 3;
    double advantage_epsilon = 1e-6;
};

struct RewardConfig {
    double lambda_prof = 0.5;
    double lambda_task = 0.5;
};

struct CorpusConfig {
    int self_bleu_max_n = 4;
    int ingf_n = 2;
    int ingf_threshold = 1;
    int self_bleu_exact_limit = 2000;
};

struct EvalConfig {
    int runs = 3;
    bool include_history = true;
};

/// Every tunable default named in the module design decisions, overridable
/// from a TOML-style config file ([section] + key = value lines).
struct Config {
    GatewayConfig gateway;
    NoiseSettings noise;
    SimulateConfig simulate;
    OptimizerConfig optimizer;
    RewardConfig reward;
    CorpusConfig corpus;
    EvalConfig eval;
    std::map<std::string, double> seed_weights;  // source_dataset -> mixture weight
};

Config load_config(const std::string& path);
void apply_config_text(Config& cfg, const std::string& text, const std::string& origin);

}  // namespace personaforge
