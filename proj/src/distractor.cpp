#include "personaforge/distractor.hpp"

#include <cctype>
#include <random>

#include "personaforge/errors.hpp"
#include "personaforge/prompts.hpp"
#include "personaforge/rng.hpp"
#include "personaforge/text.hpp"

namespace personaforge {

std::string to_string(NoiseLayer l) {
    switch (l) {
        case NoiseLayer::syntactic: return "syntactic";
        case NoiseLayer::incomplete: return "incomplete";
        case NoiseLayer::ambiguous: return "ambiguous";
    }
    return "syntactic";
}

std::string to_string(NoiseTarget t) {
    return t == NoiseTarget::initial_query ? "initial_query" : "feedback";
}

NoiseLayer noise_layer_from_string(const std::string& s) {
    if (s == "syntactic") return NoiseLayer::syntactic;
    if (s == "incomplete") return NoiseLayer::incomplete;
    if (s == "ambiguous") return NoiseLayer::ambiguous;
    throw Error("unknown noise layer: " + s);
}

NoiseLayer select_layer(const std::array<double, 3>& weights, double strength, uint64_t seed) {
    (void)strength;
    double total = weights[0] + weights[1] + weights[2];
    if (total <= 0.0) throw Error("layer weights must not all be zero");
    Rng rng(seed);
    double r = rng.uniform() * total;
    if (r < weights[0]) return NoiseLayer::syntactic;
    if (r < weights[0] + weights[1]) return NoiseLayer::incomplete;
    return NoiseLayer::ambiguous;
}

std::string strength_word(double alpha) {
    if (alpha < 0.34) return "mild";
    if (alpha < 0.67) return "moderate";
    return "heavy";
}

std::string syntactic_transform(const std::string& text, uint64_t seed) {
    std::string out = to_lower(text);
    while (!out.empty() && is_edge_punct(out.back())) out.pop_back();

    std::vector<size_t> candidates;
    for (size_t i = 0; i + 1 < out.size(); ++i) {
        if (std::isalpha(static_cast<unsigned char>(out[i])) &&
            std::isalpha(static_cast<unsigned char>(out[i + 1])) && out[i] != out[i + 1]) {
            candidates.push_back(i);
        }
    }
    if (!candidates.empty()) {
        std::knuth_b engine(static_cast<uint32_t>(seed ^ (seed >> 32)));
        size_t pick = std::uniform_int_distribution<size_t>(0, candidates.size() - 1)(engine);
        std::swap(out[candidates[pick]], out[candidates[pick] + 1]);
    }
    if (out == text) {
        // no usable transposition and the text was already clean: still must
        // differ from the input
        if (out.empty()) out = text;
        out += out.back();
    }
    return out;
}

namespace {

std::string llm_corrupt(const std::string& text, NoiseLayer layer, double strength,
                        Gateway& gateway, uint64_t seed) {
    const char* prompt_name = layer == NoiseLayer::syntactic    ? "distractor_layer1"
                              : layer == NoiseLayer::incomplete ? "distractor_layer2"
                                                                : "distractor_layer3";
    ChatRequest req;
    req.role_tag = RoleTag::distractor;
    req.temperature = gateway.config().temperature;
    req.top_p = gateway.config().top_p;
    req.max_tokens = 512;
    req.seed = static_cast<int64_t>(seed);
    req.messages.push_back({Role::system, load_prompt(prompt_name, {{"strength", strength_word(strength)}})});
    req.messages.push_back({Role::user, "TEXT:\n" + text});
    return trim(gateway.complete(req, Stage::distractor).content);
}

}  // namespace

NoisifyResult noisify(const std::string& text, NoiseTarget target, const NoiseSettings& config,
                      Gateway& gateway, uint64_t seed) {
    if (text.empty()) throw Error("noisify: text must be non-empty");
    NoisifyResult result;
    result.text = text;

    double p = target == NoiseTarget::initial_query ? config.p_q : config.p_f;
    double alpha = target == NoiseTarget::initial_query ? config.alpha_q : config.alpha_f;
    Rng rng(seed);
    if (!rng.bernoulli(p)) return result;

    NoiseLayer layer = select_layer(config.layer_weights, alpha, rng.next_u64());

    std::string corrupted;
    if (layer == NoiseLayer::syntactic && gateway.backend().is_scripted()) {
        corrupted = syntactic_transform(text, rng.next_u64());
    } else {
        corrupted = llm_corrupt(text, layer, alpha, gateway, rng.next_u64());
        if (corrupted.empty()) {
            // MalformedResponse case: keep the original, note the fallback
            result.fallback = true;
            return result;
        }
    }
    if (corrupted == text) return result;  // no effective change, no annotation

    result.text = corrupted;
    result.annotation = NoiseAnnotation{layer, target, text, corrupted, alpha};
    return result;
}

NoisifyResult noisify_feedback(const std::string& raw_feedback, const NoiseSettings& config,
                               Gateway& gateway, uint64_t seed) {
    // locate the last VERDICT line; it must never be corrupted
    auto lines = split_lines(raw_feedback);
    int verdict_idx = -1;
    for (int i = static_cast<int>(lines.size()) - 1; i >= 0; --i) {
        if (trim(lines[i]).rfind("VERDICT:", 0) == 0) {
            verdict_idx = i;
            break;
        }
    }
    if (verdict_idx < 0) return noisify(raw_feedback, NoiseTarget::feedback, config, gateway, seed);

    std::string body;
    for (int i = 0; i < static_cast<int>(lines.size()); ++i) {
        if (i == verdict_idx) continue;
        if (!body.empty()) body += "\n";
        body += lines[i];
    }
    body = trim(body);
    if (body.empty()) {
        NoisifyResult pass;
        pass.text = raw_feedback;
        return pass;
    }

    NoisifyResult inner = noisify(body, NoiseTarget::feedback, config, gateway, seed);
    NoisifyResult result;
    result.annotation = inner.annotation;
    result.fallback = inner.fallback;
    result.text = inner.text + "\n" + trim(lines[verdict_idx]);
    return result;
}

json annotation_to_json(const NoiseAnnotation& a) {
    return json{{"layer", to_string(a.layer)},
                {"target", to_string(a.target)},
                {"original", a.original},
                {"corrupted", a.corrupted},
                {"strength", a.strength}};
}

NoiseAnnotation annotation_from_json(const json& j) {
    NoiseAnnotation a;
    a.layer = noise_layer_from_string(j.at("layer").get<std::string>());
    a.target = j.at("target").get<std::string>() == "feedback" ? NoiseTarget::feedback
                                                               : NoiseTarget::initial_query;
    a.original = j.at("original").get<std::string>();
    a.corrupted = j.at("corrupted").get<std::string>();
    a.strength = j.at("strength").get<double>();
    return a;
}

}  // namespace personaforge
