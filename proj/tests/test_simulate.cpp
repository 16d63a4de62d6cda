#include <doctest.h>

#include <map>
#include <set>

#include "personaforge/errors.hpp"
#include "personaforge/prompts.hpp"
#include "personaforge/rng.hpp"
#include "personaforge/simulate.hpp"
#include "personaforge/text.hpp"

using namespace personaforge;

namespace {

PreferenceSpec test_spec() {
    PreferenceSpec spec;
    spec.text = "You are simulating a user with: tone=formal";
    spec.persona_id = "p-test";
    spec.compiler_backend = "scripted";
    return spec;
}

SeedQuery q(const std::string& text) {
    SeedQuery query;
    query.text = text;
    query.source_dataset = "custom";
    query.domain = "general";
    return query;
}

QueryPool pool_of(const std::string& name, double weight, std::vector<std::string> texts) {
    QueryPool pool;
    pool.source_dataset = name;
    pool.domain = "general";
    pool.weight = weight;
    for (auto& t : texts) {
        SeedQuery query = q(t);
        query.source_dataset = name;
        pool.queries.push_back(query);
    }
    return pool;
}

}  // namespace

TEST_CASE("single pool with one query is forced") {
    std::vector<QueryPool> mixture = {pool_of("only", 1.0, {"the query"})};
    for (uint64_t seed = 0; seed < 50; ++seed)
        CHECK(sample_seed_query(mixture, seed).text == "the query");
}

TEST_CASE("empty and zero-weight mixtures are rejected") {
    CHECK_THROWS_AS(sample_seed_query({}, 1), EmptyPool);
    std::vector<QueryPool> zero = {pool_of("z", 0.0, {"x"})};
    CHECK_THROWS_AS(sample_seed_query(zero, 1), EmptyPool);
}

TEST_CASE("pool draw frequencies follow the query-collection weights") {
    // weights mirror the query-collection counts; ultrachat is 3250 of 15606
    std::vector<QueryPool> mixture = {
        pool_of("ultrachat_200k", 3250, {"a"}), pool_of("openr1_math_220k", 2638, {"b"}),
        pool_of("codefeedback", 2028, {"c"}),   pool_of("mol_instructions", 1766, {"d"}),
        pool_of("mmlu", 1638, {"e"}),           pool_of("ai2_arc", 1300, {"f"}),
        pool_of("alpaca_cleaned", 844, {"g"}),  pool_of("truthfulqa", 759, {"h"}),
        pool_of("databricks_dolly_15k", 684, {"i"}), pool_of("mbpp", 619, {"j"}),
        pool_of("mt_bench", 80, {"k"})};
    int ultrachat = 0;
    const int kDraws = 50000;
    for (int i = 0; i < kDraws; ++i) {
        if (sample_seed_query(mixture, derive_seed(7, "draw", i)).source_dataset == "ultrachat_200k")
            ++ultrachat;
    }
    double fraction = ultrachat / static_cast<double>(kDraws);
    CHECK(fraction > 0.2083 - 0.006);
    CHECK(fraction < 0.2083 + 0.006);
}

TEST_CASE("zero-weight pool is never drawn") {
    std::vector<QueryPool> mixture = {pool_of("live", 5.0, {"x"}), pool_of("dead", 0.0, {"y"})};
    for (int i = 0; i < 10000; ++i)
        CHECK(sample_seed_query(mixture, derive_seed(3, "z", i)).source_dataset == "live");
}

TEST_CASE("shipped seed pools load with the documented sizes and weights") {
    auto pools = load_seed_pools(asset_path("seed_pools.jsonl"));
    CHECK(pools.size() == 11);
    double total_weight = 0.0;
    for (const auto& p : pools) {
        CHECK(p.queries.size() >= 50);
        CHECK(p.weight == default_pool_weight(p.source_dataset));
        total_weight += p.weight;
    }
    CHECK(total_weight == doctest::Approx(15606.0));
}

TEST_CASE("stylize with rho = 0 passes the query through byte-identically") {
    Gateway gw(std::make_shared<ScriptedBackend>());
    for (uint64_t seed = 0; seed < 200; ++seed) {
        StylizeResult r = stylize_query(q("Summarize this document."), test_spec(), 0.0, seed, gw);
        CHECK(r.text == "Summarize this document.");
        CHECK_FALSE(r.stylized);
    }
    CHECK(gw.ledger().grand_total() == doctest::Approx(0.0));
}

TEST_CASE("stylize with rho = 1 applies the scripted prefix") {
    Gateway gw(std::make_shared<ScriptedBackend>());
    StylizeResult r = stylize_query(q("Summarize this document."), test_spec(), 1.0, 5, gw);
    CHECK(r.stylized);
    CHECK(r.text == "[styled] Summarize this document.");
}

TEST_CASE("stylization rate matches rho = 0.5 within 3 sigma") {
    Gateway gw(std::make_shared<ScriptedBackend>());
    int stylized = 0;
    const int kDraws = 10000;
    for (int i = 0; i < kDraws; ++i) {
        if (stylize_query(q("A query."), test_spec(), 0.5, derive_seed(11, "sty", i), gw).stylized)
            ++stylized;
    }
    double fraction = stylized / static_cast<double>(kDraws);
    CHECK(fraction > 0.485);
    CHECK(fraction < 0.515);
}

TEST_CASE("empty stylizer output falls back to the clean query after one retry") {
    auto scripted = std::make_shared<ScriptedBackend>();
    Gateway gw(scripted);
    scripted->push_response(RoleTag::user_agent, " ");
    scripted->push_response(RoleTag::user_agent, " ");
    StylizeResult r = stylize_query(q("Keep me."), test_spec(), 1.0, 4, gw);
    CHECK(r.text == "Keep me.");
    CHECK_FALSE(r.stylized);
    CHECK(r.fallback);
}

TEST_CASE("decide_followup parses the verdict contract") {
    Decision d = decide_followup("Too long.\nVERDICT: FOLLOWUP: shorten to 3 bullets");
    CHECK_FALSE(d.stop);
    CHECK(*d.next_query == "shorten to 3 bullets");
    CHECK(d.cleaned_feedback == "Too long.");

    d = decide_followup("Perfect, thanks.\nVERDICT: SATISFIED");
    CHECK(d.stop);
    CHECK_FALSE(d.next_query.has_value());
    CHECK(d.cleaned_feedback == "Perfect, thanks.");

    CHECK_THROWS_AS(decide_followup("no verdict here"), UnparseableVerdict);
    CHECK_THROWS_AS(decide_followup("VERDICT: FOLLOWUP:   "), UnparseableVerdict);
    CHECK_THROWS_AS(decide_followup("VERDICT: MAYBE"), UnparseableVerdict);
}

TEST_CASE("T = 1 yields exactly one turn regardless of verdict") {
    auto scripted = std::make_shared<ScriptedBackend>();
    Gateway gw(scripted);
    scripted->push_response(RoleTag::user_agent, "More please.\nVERDICT: FOLLOWUP: next question");
    TrajectoryOptions options;
    options.max_turns = 1;
    options.rho = 0.0;
    options.noise_enabled = false;
    Trajectory t = run_trajectory(q("First question"), test_spec(), options, gw, 21);
    CHECK(t.turns.size() == 1);
    CHECK(t.termination == Termination::max_turns);
    CHECK(t.turns[0].label == 0);
}

TEST_CASE("scripted FOLLOWUP twice then SATISFIED gives 3 turns with labels 0,0,1") {
    auto scripted = std::make_shared<ScriptedBackend>();
    Gateway gw(scripted);
    scripted->push_response(RoleTag::user_agent, "Wrong tone.\nVERDICT: FOLLOWUP: make it formal");
    scripted->push_response(RoleTag::user_agent, "Still off.\nVERDICT: FOLLOWUP: shorter please");
    scripted->push_response(RoleTag::user_agent, "Great.\nVERDICT: SATISFIED");
    TrajectoryOptions options;
    options.max_turns = 5;
    options.rho = 0.0;
    options.noise_enabled = false;
    Trajectory t = run_trajectory(q("Write a memo"), test_spec(), options, gw, 33);
    REQUIRE(t.turns.size() == 3);
    CHECK(t.turns[0].label == 0);
    CHECK(t.turns[1].label == 0);
    CHECK(t.turns[2].label == 1);
    CHECK(t.termination == Termination::satisfied);
    CHECK(t.turns[1].user_message == "make it formal");
    CHECK(t.turns[2].user_message == "shorter please");
    CHECK(t.turns[2].feedback == "Great.");
}

TEST_CASE("always-FOLLOWUP with T = 4 truncates with all labels 0") {
    auto scripted = std::make_shared<ScriptedBackend>();
    Gateway gw(scripted);
    for (int i = 0; i < 4; ++i)
        scripted->push_response(RoleTag::user_agent, "Again.\nVERDICT: FOLLOWUP: refine step " + std::to_string(i));
    TrajectoryOptions options;
    options.max_turns = 4;
    options.rho = 0.0;
    options.noise_enabled = false;
    Trajectory t = run_trajectory(q("Plan a launch"), test_spec(), options, gw, 44);
    REQUIRE(t.turns.size() == 4);
    for (const auto& turn : t.turns) CHECK(turn.label == 0);
    CHECK(t.termination == Termination::max_turns);
}

TEST_CASE("verdict failure is retried once, twice aborts the trajectory") {
    auto scripted = std::make_shared<ScriptedBackend>();
    Gateway gw(scripted);
    scripted->push_response(RoleTag::user_agent, "no verdict at all");
    scripted->push_response(RoleTag::user_agent, "Recovered.\nVERDICT: SATISFIED");
    TrajectoryOptions options;
    options.max_turns = 3;
    options.rho = 0.0;
    options.noise_enabled = false;
    Trajectory t = run_trajectory(q("Question"), test_spec(), options, gw, 55);
    REQUIRE(t.turns.size() == 1);
    CHECK(t.turns[0].label == 1);

    auto failing = std::make_shared<ScriptedBackend>();
    Gateway gw2(failing);
    failing->push_response(RoleTag::user_agent, "still no verdict");
    failing->push_response(RoleTag::user_agent, "and again nothing");
    CHECK_THROWS_AS(run_trajectory(q("Question"), test_spec(), options, gw2, 56),
                    UnparseableVerdict);
}

TEST_CASE("label law and unique terminal hold over many simulated trajectories") {
    Gateway gw(std::make_shared<ScriptedBackend>());
    TrajectoryOptions options;
    options.max_turns = 5;
    options.rho = 0.5;
    options.noise_enabled = true;
    size_t satisfied = 0, truncated = 0;
    for (uint64_t seed = 0; seed < 300; ++seed) {
        Trajectory t = run_trajectory(q("Draft an outline for a short talk."), test_spec(),
                                      options, gw, seed);
        REQUIRE(!t.turns.empty());
        CHECK(t.turns.size() <= 5);
        for (size_t i = 0; i < t.turns.size(); ++i) {
            const Turn& turn = t.turns[i];
            CHECK(turn.label == (turn.followup_issued ? 0 : 1));
            if (i + 1 < t.turns.size()) CHECK(turn.followup_issued);
        }
        if (t.termination == Termination::satisfied) {
            ++satisfied;
            CHECK_FALSE(t.turns.back().followup_issued);
        } else {
            ++truncated;
            CHECK(t.turns.back().followup_issued);
            CHECK(t.turns.size() == 5);
        }
    }
    CHECK(satisfied > 0);
    CHECK(truncated > 0);
}

TEST_CASE("the assistant context at turn t holds exactly the first t-1 triples in order") {
    auto scripted = std::make_shared<ScriptedBackend>();
    scripted->set_capture(true);
    Gateway gw(scripted);
    TrajectoryOptions options;
    options.max_turns = 4;
    options.rho = 0.0;
    options.noise_enabled = false;
    Trajectory t = run_trajectory(q("Initial question"), test_spec(), options, gw, 77);
    REQUIRE(t.turns.size() >= 2);

    std::vector<ChatRequest> assistant_calls;
    for (const auto& req : scripted->captured())
        if (req.role_tag == RoleTag::assistant_agent) assistant_calls.push_back(req);
    REQUIRE(assistant_calls.size() == t.turns.size());

    for (size_t turn_idx = 0; turn_idx < assistant_calls.size(); ++turn_idx) {
        const auto& messages = assistant_calls[turn_idx].messages;
        REQUIRE(messages.size() == 3 * turn_idx + 1);
        for (size_t h = 0; h < turn_idx; ++h) {
            CHECK(messages[3 * h].content == t.turns[h].user_message);
            CHECK(messages[3 * h + 1].content == t.turns[h].assistant_response);
            CHECK(messages[3 * h + 2].content == "Feedback: " + t.turns[h].feedback);
        }
        CHECK(messages.back().content == t.turns[turn_idx].user_message);
    }
}

TEST_CASE("trajectory serialization round-trips") {
    Gateway gw(std::make_shared<ScriptedBackend>());
    TrajectoryOptions options;
    options.max_turns = 5;
    for (uint64_t seed = 0; seed < 30; ++seed) {
        Trajectory t =
            run_trajectory(q("Compare two options for me."), test_spec(), options, gw, seed);
        json j = trajectory_to_json(t);
        CHECK(trajectory_to_json(trajectory_from_json(j)) == j);
    }
}

TEST_CASE("trajectories are byte-identical across repeated runs") {
    TrajectoryOptions options;
    options.max_turns = 5;
    options.rho = 0.5;
    std::string first;
    for (int rep = 0; rep < 3; ++rep) {
        Gateway gw(std::make_shared<ScriptedBackend>());
        std::string dump;
        for (uint64_t seed = 0; seed < 20; ++seed) {
            dump += trajectory_to_json(run_trajectory(q("Outline the project plan."), test_spec(),
                                                      options, gw, seed))
                        .dump();
            dump += "\n";
        }
        if (rep == 0) first = dump;
        CHECK(dump == first);
    }
}
