#include <doctest.h>

#include <array>
#include <map>

#include "personaforge/distractor.hpp"
#include "personaforge/errors.hpp"
#include "personaforge/rng.hpp"
#include "personaforge/simulate.hpp"
#include "personaforge/text.hpp"

using namespace personaforge;

namespace {
Gateway scripted_gateway() { return Gateway(std::make_shared<ScriptedBackend>()); }
}  // namespace

TEST_CASE("select_layer degenerate weights") {
    for (uint64_t seed = 0; seed < 500; ++seed) {
        CHECK(select_layer({1.0, 0.0, 0.0}, 0.5, seed) == NoiseLayer::syntactic);
        CHECK(select_layer({0.0, 0.0, 1.0}, 0.5, seed) == NoiseLayer::ambiguous);
    }
}

TEST_CASE("select_layer frequencies converge to the weights") {
    std::map<NoiseLayer, int> counts;
    const int kDraws = 30000;
    for (int seed = 0; seed < kDraws; ++seed)
        counts[select_layer({0.5, 0.3, 0.2}, 0.5, derive_seed(1, "layer", seed))] += 1;
    CHECK(counts[NoiseLayer::syntactic] / double(kDraws) == doctest::Approx(0.5).epsilon(0.02));
    CHECK(counts[NoiseLayer::incomplete] / double(kDraws) == doctest::Approx(0.3).epsilon(0.034));
    CHECK(counts[NoiseLayer::ambiguous] / double(kDraws) == doctest::Approx(0.2).epsilon(0.05));
}

TEST_CASE("strength maps to a verbal scale") {
    CHECK(strength_word(0.1) == "mild");
    CHECK(strength_word(0.5) == "moderate");
    CHECK(strength_word(0.9) == "heavy");
}

TEST_CASE("layer-1 transform reproduces the frozen example") {
    CHECK(syntactic_transform("Summarize this Document.", 7) == "summarize this docmuent");
}

TEST_CASE("layer-1 transform always differs and preserves the letter multiset") {
    for (uint64_t seed = 0; seed < 300; ++seed) {
        for (const char* raw : {"Summarize this Document.", "Plan my trip, fast!", "x", "Aa", "..."}) {
            const std::string text = raw;
            std::string out = syntactic_transform(text, seed);
            CHECK(out != text);
        }
        std::string out = syntactic_transform("Refactor the billing module now", seed);
        auto count_letters = [](const std::string& s) {
            std::map<char, int> m;
            for (char c : to_lower(s))
                if (std::isalpha(static_cast<unsigned char>(c))) m[c] += 1;
            return m;
        };
        CHECK(count_letters(out) == count_letters("Refactor the billing module now"));
    }
}

TEST_CASE("noisify with p = 0 is the identity with no annotation") {
    Gateway gw = scripted_gateway();
    NoiseSettings noise;
    noise.p_q = 0.0;
    noise.p_f = 0.0;
    for (uint64_t seed = 0; seed < 200; ++seed) {
        NoisifyResult r = noisify("Keep me unchanged, please.", NoiseTarget::initial_query, noise,
                                  gw, seed);
        CHECK(r.text == "Keep me unchanged, please.");
        CHECK_FALSE(r.annotation.has_value());
    }
    CHECK(gw.ledger().grand_total() == doctest::Approx(0.0));
}

TEST_CASE("noisify with p = 1 always annotates and always changes the text") {
    Gateway gw = scripted_gateway();
    NoiseSettings noise;
    noise.p_q = 1.0;
    const std::string text = "Summarize the quarterly report in three bullet points.";
    for (uint64_t seed = 0; seed < 10000; ++seed) {
        NoisifyResult r = noisify(text, NoiseTarget::initial_query, noise, gw, seed);
        REQUIRE(r.annotation.has_value());
        CHECK(r.annotation->corrupted != r.annotation->original);
        CHECK(r.annotation->original == text);
        CHECK(r.text == r.annotation->corrupted);
    }
}

TEST_CASE("annotation exists iff the text changed") {
    Gateway gw = scripted_gateway();
    NoiseSettings noise;
    noise.p_q = 0.5;
    for (uint64_t seed = 0; seed < 2000; ++seed) {
        NoisifyResult r =
            noisify("Draft an onboarding checklist for new hires.", NoiseTarget::initial_query,
                    noise, gw, seed);
        bool changed = r.text != "Draft an onboarding checklist for new hires.";
        CHECK(changed == r.annotation.has_value());
        if (r.annotation) CHECK(r.annotation->original == "Draft an onboarding checklist for new hires.");
    }
}

TEST_CASE("empty distractor output falls back to the original") {
    auto scripted = std::make_shared<ScriptedBackend>();
    Gateway gw(scripted);
    NoiseSettings noise;
    noise.p_q = 1.0;
    noise.layer_weights = {0.0, 1.0, 0.0};  // force the LLM-backed layer
    scripted->push_response(RoleTag::distractor, "   ");
    NoisifyResult r = noisify("Important question here?", NoiseTarget::initial_query, noise, gw, 3);
    CHECK(r.text == "Important question here?");
    CHECK(r.fallback);
    CHECK_FALSE(r.annotation.has_value());
}

TEST_CASE("feedback corruption never touches the verdict line") {
    Gateway gw = scripted_gateway();
    NoiseSettings noise;
    noise.p_f = 1.0;
    const std::string raw =
        "This answer is too long for my taste.\nVERDICT: FOLLOWUP: tighten it to one paragraph";
    for (uint64_t seed = 0; seed < 500; ++seed) {
        NoisifyResult r = noisify_feedback(raw, noise, gw, seed);
        Decision d = decide_followup(r.text);  // must stay parseable
        CHECK_FALSE(d.stop);
        CHECK(*d.next_query == "tighten it to one paragraph");
        if (r.annotation) {
            CHECK(r.annotation->original == "This answer is too long for my taste.");
            CHECK(r.annotation->target == NoiseTarget::feedback);
        }
    }
}

TEST_CASE("feedback that is only a verdict line passes through") {
    Gateway gw = scripted_gateway();
    NoiseSettings noise;
    noise.p_f = 1.0;
    NoisifyResult r = noisify_feedback("VERDICT: SATISFIED", noise, gw, 11);
    CHECK(r.text == "VERDICT: SATISFIED");
    CHECK_FALSE(r.annotation.has_value());
}

TEST_CASE("noisify rejects empty text") {
    Gateway gw = scripted_gateway();
    NoiseSettings noise;
    CHECK_THROWS_AS(noisify("", NoiseTarget::initial_query, noise, gw, 1), Error);
}
