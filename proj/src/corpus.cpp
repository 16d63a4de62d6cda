#include "personaforge/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_map>
#include <unordered_set>

#include "personaforge/errors.hpp"
#include "personaforge/rng.hpp"
#include "personaforge/text.hpp"
#include "personaforge/worker.hpp"

namespace personaforge {

std::vector<TurnInstance> serialize_trajectory(const Trajectory& trajectory,
                                               const ObservedPersona& observed) {
    std::vector<TurnInstance> out;
    std::vector<HistTriple> history;
    for (const auto& turn : trajectory.turns) {
        TurnInstance inst;
        inst.observed_persona = observed;
        inst.spec = trajectory.spec_text;
        inst.history = history;
        inst.current_input = turn.user_message;
        inst.response = turn.assistant_response;
        if (!turn.feedback.empty()) inst.feedback = turn.feedback;
        inst.label = turn.label;
        inst.trajectory_id = trajectory.id;
        inst.turn_index = turn.index;
        out.push_back(std::move(inst));
        history.push_back({turn.user_message, turn.assistant_response, turn.feedback});
    }
    return out;
}

json turn_instance_to_json(const TurnInstance& inst) {
    json history = json::array();
    for (const auto& h : inst.history)
        history.push_back({{"user_message", h.user_message},
                           {"assistant_response", h.assistant_response},
                           {"feedback", h.feedback}});
    json j{{"observed_persona", observed_to_json(inst.observed_persona)},
           {"spec", inst.spec},
           {"history", std::move(history)},
           {"current_input", inst.current_input},
           {"response", inst.response},
           {"feedback", inst.feedback ? json(*inst.feedback) : json(nullptr)},
           {"label", inst.label},
           {"trajectory_id", inst.trajectory_id},
           {"turn_index", inst.turn_index}};
    return j;
}

TurnInstance turn_instance_from_json(const json& j) {
    TurnInstance inst;
    inst.observed_persona = observed_from_json(j.at("observed_persona"));
    inst.spec = j.at("spec").get<std::string>();
    for (const auto& h : j.at("history")) {
        inst.history.push_back({h.at("user_message").get<std::string>(),
                                h.at("assistant_response").get<std::string>(),
                                h.value("feedback", "")});
    }
    inst.current_input = j.at("current_input").get<std::string>();
    inst.response = j.at("response").get<std::string>();
    if (j.contains("feedback") && !j["feedback"].is_null())
        inst.feedback = j["feedback"].get<std::string>();
    inst.label = j.at("label").get<int>();
    inst.trajectory_id = j.at("trajectory_id").get<std::string>();
    inst.turn_index = j.at("turn_index").get<int>();
    return inst;
}

// ---------------------------------------------------------------------------
// diversity metrics

namespace {

struct NgramKey {
    std::vector<uint32_t> ids;
    bool operator==(const NgramKey& other) const { return ids == other.ids; }
};

struct NgramKeyHash {
    size_t operator()(const NgramKey& k) const {
        uint64_t h = 1469598103934665603ULL;
        for (uint32_t id : k.ids) {
            h ^= id;
            h *= 1099511628211ULL;
        }
        return static_cast<size_t>(h);
    }
};

template <typename V>
using NgramMap = std::unordered_map<NgramKey, V, NgramKeyHash>;

std::vector<std::vector<uint32_t>> encode_samples(const std::vector<std::string>& samples) {
    std::unordered_map<std::string, uint32_t> vocab;
    std::vector<std::vector<uint32_t>> encoded(samples.size());
    for (size_t i = 0; i < samples.size(); ++i) {
        for (auto& tok : tokenize(samples[i])) {
            auto [it, _] = vocab.try_emplace(tok, static_cast<uint32_t>(vocab.size()));
            encoded[i].push_back(it->second);
        }
    }
    return encoded;
}

void count_ngrams(const std::vector<uint32_t>& tokens, int n, NgramMap<int>& out) {
    if (static_cast<int>(tokens.size()) < n) return;
    NgramKey key;
    key.ids.resize(n);
    for (size_t i = 0; i + n <= tokens.size(); ++i) {
        std::copy(tokens.begin() + i, tokens.begin() + i + n, key.ids.begin());
        out[key] += 1;
    }
}

// max and second-max counts of one ngram across samples, plus the argmax;
// lets each candidate read the reference maximum over "everyone but me"
struct TopTwo {
    int max1 = 0;
    int max2 = 0;
    uint32_t arg1 = 0;
    void feed(uint32_t sample, int count) {
        if (count > max1) {
            max2 = max1;
            max1 = count;
            arg1 = sample;
        } else if (count > max2) {
            max2 = count;
        }
    }
};

}  // namespace

double self_bleu(const std::vector<std::string>& samples, int max_n, int workers) {
    if (samples.size() < 2) throw TooFewSamples("self_bleu needs at least 2 samples");
    if (max_n < 1) throw Error("self_bleu: max_n must be >= 1");

    auto encoded = encode_samples(samples);
    size_t n_samples = encoded.size();

    std::vector<std::vector<NgramMap<int>>> per_order(n_samples);
    for (size_t i = 0; i < n_samples; ++i) {
        per_order[i].resize(max_n);
        for (int n = 1; n <= max_n; ++n) count_ngrams(encoded[i], n, per_order[i][n - 1]);
    }

    std::vector<NgramMap<TopTwo>> tops(max_n);
    for (size_t i = 0; i < n_samples; ++i) {
        for (int n = 0; n < max_n; ++n) {
            for (const auto& [key, count] : per_order[i][n]) {
                tops[n][key].feed(static_cast<uint32_t>(i), count);
            }
        }
    }

    std::vector<size_t> lengths(n_samples);
    for (size_t i = 0; i < n_samples; ++i) lengths[i] = encoded[i].size();
    std::vector<size_t> sorted_lengths = lengths;
    std::sort(sorted_lengths.begin(), sorted_lengths.end());

    // closest reference length to c, excluding one copy of own_len;
    // ties resolve to the shorter length
    auto closest_ref = [&](size_t c, size_t own_len) -> size_t {
        size_t best = 0;
        bool have = false;
        bool skipped_own = false;
        for (size_t len : sorted_lengths) {
            if (!skipped_own && len == own_len) {
                skipped_own = true;
                continue;
            }
            if (!have) {
                best = len;
                have = true;
                continue;
            }
            auto dist = [&](size_t l) {
                return l > c ? l - c : c - l;
            };
            if (dist(len) < dist(best)) best = len;
        }
        return best;
    };

    auto bleu_of = [&](size_t i) -> double {
        size_t c = lengths[i];
        if (c == 0) return 0.0;
        double log_sum = 0.0;
        int orders = 0;
        for (int n = 1; n <= max_n; ++n) {
            const auto& own = per_order[i][n - 1];
            int64_t total = static_cast<int64_t>(c) - n + 1;
            if (total <= 0) continue;
            int64_t matched = 0;
            for (const auto& [key, count] : own) {
                auto it = tops[n - 1].find(key);
                if (it == tops[n - 1].end()) continue;
                int ref_max = it->second.arg1 == static_cast<uint32_t>(i) ? it->second.max2
                                                                          : it->second.max1;
                matched += std::min(count, ref_max);
            }
            double p;
            if (matched > 0) {
                p = static_cast<double>(matched) / static_cast<double>(total);
            } else {
                p = 1.0 / static_cast<double>(total + 1);  // add-one smoothing on zero counts
            }
            log_sum += std::log(p);
            ++orders;
        }
        if (orders == 0) return 0.0;
        double geo = std::exp(log_sum / orders);
        size_t r = closest_ref(c, c);
        double bp = (c >= r) ? 1.0 : std::exp(1.0 - static_cast<double>(r) / static_cast<double>(c));
        return bp * geo;
    };

    std::vector<double> scores = parallel_map<double>(
        n_samples, workers, [&](size_t i) { return bleu_of(i); });
    // summing in value order makes the mean independent of sample order
    std::sort(scores.begin(), scores.end());
    double sum = std::accumulate(scores.begin(), scores.end(), 0.0);
    return sum / static_cast<double>(n_samples);
}

double ttr(const std::vector<std::string>& samples) {
    size_t total = 0;
    std::unordered_set<std::string> unique;
    for (const auto& s : samples) {
        for (auto& tok : tokenize(s)) {
            ++total;
            unique.insert(std::move(tok));
        }
    }
    if (total == 0) throw EmptyCorpus("ttr: corpus has no tokens");
    return static_cast<double>(unique.size()) / static_cast<double>(total);
}

double ingf(const std::vector<std::string>& samples, int n, int freq_threshold) {
    if (n < 1) throw Error("ingf: n must be >= 1");
    if (freq_threshold < 1) throw Error("ingf: freq_threshold must be >= 1");
    auto encoded = encode_samples(samples);
    NgramMap<int> counts;
    size_t total_tokens = 0;
    for (const auto& toks : encoded) {
        total_tokens += toks.size();
        count_ngrams(toks, n, counts);
    }
    if (total_tokens == 0) throw EmptyCorpus("ingf: corpus has no tokens");
    if (counts.empty()) return 0.0;
    size_t infrequent = 0;
    for (const auto& [_, count] : counts)
        if (count <= freq_threshold) ++infrequent;
    return static_cast<double>(infrequent) / static_cast<double>(counts.size());
}

CorpusStats corpus_stats(const std::vector<std::string>& samples, const CorpusConfig& config,
                         uint64_t subsample_seed, int workers) {
    CorpusStats stats;
    stats.n_samples = samples.size();
    stats.ttr = ttr(samples);
    stats.ingf = ingf(samples, config.ingf_n, config.ingf_threshold);
    for (const auto& s : samples) stats.token_total += tokenize(s).size();

    const std::vector<std::string>* bleu_input = &samples;
    std::vector<std::string> subsample;
    size_t limit = static_cast<size_t>(config.self_bleu_exact_limit);
    if (samples.size() > limit) {
        // seeded Fisher-Yates prefix
        std::vector<size_t> idx(samples.size());
        std::iota(idx.begin(), idx.end(), size_t{0});
        Rng rng(subsample_seed);
        for (size_t i = 0; i < limit; ++i) {
            size_t j = i + rng.index(idx.size() - i);
            std::swap(idx[i], idx[j]);
        }
        subsample.reserve(limit);
        for (size_t i = 0; i < limit; ++i) subsample.push_back(samples[idx[i]]);
        bleu_input = &subsample;
    }
    stats.self_bleu_samples = bleu_input->size();
    stats.self_bleu = self_bleu(*bleu_input, config.self_bleu_max_n, workers);
    return stats;
}

std::string conversation_sample_text(const Trajectory& t) {
    std::string out;
    for (const auto& turn : t.turns) {
        if (!out.empty()) out += " ";
        out += turn.user_message;
        out += " ";
        out += turn.assistant_response;
    }
    return out;
}

}  // namespace personaforge
