#include "personaforge/config.hpp"

#include <charconv>
#include <cstdlib>

#include "personaforge/errors.hpp"
#include "personaforge/jsonl.hpp"
#include "personaforge/text.hpp"

namespace personaforge {

namespace {

struct RawValue {
    std::string scalar;
    std::vector<double> array;
    bool is_array = false;
};

double to_number(const std::string& s, const std::string& where) {
    try {
        size_t pos = 0;
        double v = std::stod(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw ConfigError(where + ": expected a number, got '" + s + "'");
    }
}

int to_int(const std::string& s, const std::string& where) {
    double v = to_number(s, where);
    int i = static_cast<int>(v);
    if (static_cast<double>(i) != v) throw ConfigError(where + ": expected an integer, got '" + s + "'");
    return i;
}

bool to_bool(const std::string& s, const std::string& where) {
    if (s == "true") return true;
    if (s == "false") return false;
    throw ConfigError(where + ": expected true/false, got '" + s + "'");
}

std::string unquote(std::string v) {
    if (v.size() >= 2 && ((v.front() == '"' && v.back() == '"') || (v.front() == '\'' && v.back() == '\''))) {
        return v.substr(1, v.size() - 2);
    }
    return v;
}

RawValue parse_value(const std::string& raw, const std::string& where) {
    RawValue out;
    std::string v = trim(raw);
    if (!v.empty() && v.front() == '[') {
        if (v.back() != ']') throw ConfigError(where + ": unterminated array");
        out.is_array = true;
        std::string body = v.substr(1, v.size() - 2);
        size_t start = 0;
        while (start <= body.size()) {
            size_t comma = body.find(',', start);
            std::string item = trim(body.substr(start, comma == std::string::npos ? std::string::npos : comma - start));
            if (!item.empty()) out.array.push_back(to_number(item, where));
            if (comma == std::string::npos) break;
            start = comma + 1;
        }
        return out;
    }
    out.scalar = unquote(v);
    return out;
}

}  // namespace

void apply_config_text(Config& cfg, const std::string& text, const std::string& origin) {
    std::string section;
    int lineno = 0;
    for (const std::string& raw_line : split_lines(text)) {
        ++lineno;
        std::string line = raw_line;
        size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        std::string where = origin + ":" + std::to_string(lineno);
        if (line.front() == '[') {
            if (line.back() != ']') throw ConfigError(where + ": bad section header");
            section = trim(line.substr(1, line.size() - 2));
            continue;
        }
        size_t eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError(where + ": expected key = value");
        std::string key = trim(line.substr(0, eq));
        RawValue val = parse_value(line.substr(eq + 1), where);

        auto num = [&]() { return to_number(val.scalar, where); };
        auto integer = [&]() { return to_int(val.scalar, where); };
        auto boolean = [&]() { return to_bool(val.scalar, where); };

        bool known = true;
        if (section == "gateway") {
            if (key == "max_retries") cfg.gateway.max_retries = integer();
            else if (key == "backoff_base_ms") cfg.gateway.backoff_base_ms = integer();
            else if (key == "backoff_factor") cfg.gateway.backoff_factor = num();
            else if (key == "backoff_jitter") cfg.gateway.backoff_jitter = num();
            else if (key == "max_inflight") cfg.gateway.max_inflight = integer();
            else if (key == "base_url") cfg.gateway.base_url = val.scalar;
            else if (key == "model") cfg.gateway.model = val.scalar;
            else if (key == "temperature") cfg.gateway.temperature = num();
            else if (key == "top_p") cfg.gateway.top_p = num();
            else if (key == "max_tokens") cfg.gateway.max_tokens = integer();
            else known = false;
        } else if (section == "noise") {
            if (key == "p_q") cfg.noise.p_q = num();
            else if (key == "p_f") cfg.noise.p_f = num();
            else if (key == "alpha_q") cfg.noise.alpha_q = num();
            else if (key == "alpha_f") cfg.noise.alpha_f = num();
            else if (key == "layer_weights") {
                if (!val.is_array || val.array.size() != 3)
                    throw ConfigError(where + ": layer_weights needs 3 entries");
                for (int i = 0; i < 3; ++i) cfg.noise.layer_weights[i] = val.array[i];
            } else known = false;
        } else if (section == "simulate") {
            if (key == "T" || key == "max_turns") cfg.simulate.max_turns = integer();
            else if (key == "rho") cfg.simulate.rho = num();
            else if (key == "mask_rate") cfg.simulate.mask_rate = num();
            else if (key == "sessions") cfg.simulate.sessions = integer();
            else known = false;
        } else if (section == "optimizer") {
            if (key == "K" || key == "k_samples") cfg.optimizer.k_samples = integer();
            else if (key == "temperature") cfg.optimizer.temperature = num();
            else if (key == "top_p") cfg.optimizer.top_p = num();
            else if (key == "near_identical_threshold") cfg.optimizer.near_identical_threshold = num();
            else if (key == "generic_token_threshold") cfg.optimizer.generic_token_threshold = integer();
            else if (key == "epsilon" || key == "advantage_epsilon") cfg.optimizer.advantage_epsilon = num();
            else known = false;
        } else if (section == "reward") {
            if (key == "lambda_prof") cfg.reward.lambda_prof = num();
            else if (key == "lambda_task") cfg.reward.lambda_task = num();
            else known = false;
        } else if (section == "corpus") {
            if (key == "self_bleu_max_n") cfg.corpus.self_bleu_max_n = integer();
            else if (key == "ingf_n") cfg.corpus.ingf_n = integer();
            else if (key == "ingf_threshold") cfg.corpus.ingf_threshold = integer();
            else if (key == "self_bleu_exact_limit") cfg.corpus.self_bleu_exact_limit = integer();
            else known = false;
        } else if (section == "eval") {
            if (key == "runs") cfg.eval.runs = integer();
            else if (key == "include_history") cfg.eval.include_history = boolean();
            else known = false;
        } else if (section == "seeds") {
            cfg.seed_weights[key] = num();
        } else {
            throw ConfigError(where + ": unknown section [" + section + "]");
        }
        if (!known) throw ConfigError(where + ": unknown key '" + key + "' in [" + section + "]");
    }
}

Config load_config(const std::string& path) {
    Config cfg;
    apply_config_text(cfg, read_file(path), path);
    return cfg;
}

}  // namespace personaforge
