#include "personaforge/gateway.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <sstream>
#include <thread>

#include <httplib.h>

#include "personaforge/errors.hpp"
#include "personaforge/rng.hpp"
#include "personaforge/text.hpp"

namespace personaforge {

std::string to_string(Role r) {
    switch (r) {
        case Role::system: return "system";
        case Role::user: return "user";
        case Role::assistant: return "assistant";
    }
    return "user";
}

Role role_from_string(const std::string& s) {
    if (s == "system") return Role::system;
    if (s == "assistant") return Role::assistant;
    if (s == "user") return Role::user;
    throw Error("unknown chat role: " + s);
}

std::string to_string(RoleTag t) {
    switch (t) {
        case RoleTag::user_agent: return "user_agent";
        case RoleTag::assistant_agent: return "assistant_agent";
        case RoleTag::distractor: return "distractor";
        case RoleTag::compiler: return "compiler";
        case RoleTag::teacher_profile: return "teacher_profile";
        case RoleTag::teacher_prompt: return "teacher_prompt";
        case RoleTag::judge_prof: return "judge_prof";
        case RoleTag::judge_task: return "judge_task";
        case RoleTag::optimizer: return "optimizer";
    }
    return "assistant_agent";
}

RoleTag role_tag_from_string(const std::string& s) {
    static const std::map<std::string, RoleTag> table = {
        {"user_agent", RoleTag::user_agent},       {"assistant_agent", RoleTag::assistant_agent},
        {"distractor", RoleTag::distractor},       {"compiler", RoleTag::compiler},
        {"teacher_profile", RoleTag::teacher_profile}, {"teacher_prompt", RoleTag::teacher_prompt},
        {"judge_prof", RoleTag::judge_prof},       {"judge_task", RoleTag::judge_task},
        {"optimizer", RoleTag::optimizer},
    };
    auto it = table.find(s);
    if (it == table.end()) throw Error("unknown role tag: " + s);
    return it->second;
}

std::string to_string(Stage s) {
    switch (s) {
        case Stage::interaction_generation: return "interaction_generation";
        case Stage::query_generation: return "query_generation";
        case Stage::distractor: return "distractor";
        case Stage::persona_formulation: return "persona_formulation";
        case Stage::pseudo_target: return "pseudo_target";
        case Stage::reward_judging: return "reward_judging";
        case Stage::optimizer_sampling: return "optimizer_sampling";
    }
    return "interaction_generation";
}

void ChatRequest::validate() const {
    if (messages.empty()) throw Error("ChatRequest: messages must be non-empty");
    if (temperature < 0.0 || temperature > 2.0) throw Error("ChatRequest: temperature out of [0,2]");
    if (top_p <= 0.0 || top_p > 1.0) throw Error("ChatRequest: top_p out of (0,1]");
    if (max_tokens <= 0) throw Error("ChatRequest: max_tokens must be positive");
    int system_count = 0;
    for (size_t i = 0; i < messages.size(); ++i) {
        if (trim(messages[i].content).empty()) throw Error("ChatRequest: blank message content");
        if (messages[i].role == Role::system) {
            ++system_count;
            if (i != 0) throw Error("ChatRequest: system message must come first");
        }
    }
    if (system_count > 1) throw Error("ChatRequest: at most one system message");
}

// ---------------------------------------------------------------------------
// ledger

void TokenLedger::add(Stage stage, const Usage& usage) {
    add_raw(stage, static_cast<double>(usage.prompt_tokens + usage.completion_tokens));
}

void TokenLedger::add_raw(Stage stage, double tokens) {
    std::lock_guard<std::mutex> lk(mutex_);
    totals_[stage] += tokens;
}

double TokenLedger::stage_total(Stage stage) const {
    std::lock_guard<std::mutex> lk(mutex_);
    auto it = totals_.find(stage);
    return it == totals_.end() ? 0.0 : it->second;
}

double TokenLedger::grand_total() const {
    std::lock_guard<std::mutex> lk(mutex_);
    double sum = 0.0;
    for (const auto& [_, v] : totals_) sum += v;
    return sum;
}

std::map<std::string, double> TokenLedger::totals() const {
    std::lock_guard<std::mutex> lk(mutex_);
    std::map<std::string, double> out;
    for (const auto& [k, v] : totals_) out[to_string(k)] = v;
    return out;
}

void TokenLedger::reset() {
    std::lock_guard<std::mutex> lk(mutex_);
    totals_.clear();
}

std::vector<LedgerRow> ledger_report(const TokenLedger& ledger, double price_per_mtoken) {
    auto totals = ledger.totals();
    double grand = 0.0;
    for (const auto& [_, v] : totals) grand += v;
    if (grand == 0.0) throw EmptyLedger("ledger has no recorded tokens");
    std::vector<LedgerRow> rows;
    for (const auto& [stage, tokens] : totals) {
        LedgerRow row;
        row.stage = stage;
        row.tokens = tokens;
        row.percent = tokens / grand * 100.0;
        row.cost = tokens * price_per_mtoken / 1e6;
        rows.push_back(row);
    }
    std::sort(rows.begin(), rows.end(), [](const LedgerRow& a, const LedgerRow& b) {
        if (a.tokens != b.tokens) return a.tokens > b.tokens;
        return a.stage < b.stage;
    });
    return rows;
}

std::string format_ledger_report(const std::vector<LedgerRow>& rows) {
    // The cost column is dollars per generated sample at the given flat rate,
    // not dollars per token.
    std::ostringstream out;
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%-26s %14s %9s %16s\n", "stage", "tokens", "percent",
                  "cost_per_sample");
    out << buf;
    double tok = 0.0, cost = 0.0;
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof(buf), "%-26s %14.1f %8.1f%% %16.4f\n", r.stage.c_str(), r.tokens,
                      r.percent, r.cost);
        out << buf;
        tok += r.tokens;
        cost += r.cost;
    }
    std::snprintf(buf, sizeof(buf), "%-26s %14.1f %8.1f%% %16.4f\n", "total", tok, 100.0, cost);
    out << buf;
    return out.str();
}

// ---------------------------------------------------------------------------
// request identity and serialization

uint64_t request_key(const ChatRequest& req) {
    uint64_t h = fnv1a64(to_string(req.role_tag));
    for (const auto& m : req.messages) {
        h = fnv1a64(to_string(m.role), h);
        h = fnv1a64("\x1f", h);
        h = fnv1a64(m.content, h);
        h = fnv1a64("\x1e", h);
    }
    char buf[96];
    if (req.seed) {
        std::snprintf(buf, sizeof(buf), "|t=%.6g|p=%.6g|m=%d|s=%lld", req.temperature, req.top_p,
                      req.max_tokens, static_cast<long long>(*req.seed));
    } else {
        std::snprintf(buf, sizeof(buf), "|t=%.6g|p=%.6g|m=%d|s=none", req.temperature, req.top_p,
                      req.max_tokens);
    }
    h = fnv1a64(buf, h);
    return h;
}

std::string request_key_hex(const ChatRequest& req) {
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(request_key(req)));
    return buf;
}

json request_to_json(const ChatRequest& req) {
    json msgs = json::array();
    for (const auto& m : req.messages) msgs.push_back({{"role", to_string(m.role)}, {"content", m.content}});
    json j{{"role_tag", to_string(req.role_tag)},
           {"messages", std::move(msgs)},
           {"temperature", req.temperature},
           {"top_p", req.top_p},
           {"max_tokens", req.max_tokens}};
    if (req.seed) j["seed"] = *req.seed;
    return j;
}

ChatRequest request_from_json(const json& j) {
    ChatRequest req;
    req.role_tag = role_tag_from_string(j.at("role_tag").get<std::string>());
    for (const auto& m : j.at("messages")) {
        req.messages.push_back({role_from_string(m.at("role").get<std::string>()),
                                m.at("content").get<std::string>()});
    }
    req.temperature = j.at("temperature").get<double>();
    req.top_p = j.at("top_p").get<double>();
    req.max_tokens = j.at("max_tokens").get<int>();
    if (j.contains("seed")) req.seed = j.at("seed").get<int64_t>();
    return req;
}

json response_to_json(const ChatResponse& resp) {
    return json{{"content", resp.content},
                {"usage",
                 {{"prompt_tokens", resp.usage.prompt_tokens},
                  {"completion_tokens", resp.usage.completion_tokens}}},
                {"backend_id", resp.backend_id},
                {"latency_ms", resp.latency_ms}};
}

ChatResponse response_from_json(const json& j) {
    ChatResponse resp;
    resp.content = j.at("content").get<std::string>();
    resp.usage.prompt_tokens = j.at("usage").at("prompt_tokens").get<int64_t>();
    resp.usage.completion_tokens = j.at("usage").at("completion_tokens").get<int64_t>();
    resp.backend_id = j.value("backend_id", "");
    resp.latency_ms = j.value("latency_ms", 0);
    return resp;
}

// ---------------------------------------------------------------------------
// scripted backend

namespace {

uint64_t content_hash(const ChatRequest& req) {
    uint64_t h = fnv1a64(to_string(req.role_tag));
    for (const auto& m : req.messages) h = fnv1a64(m.content, h);
    if (req.seed) h = splitmix64(h ^ static_cast<uint64_t>(*req.seed));
    return splitmix64(h);
}

std::string system_text(const ChatRequest& req) {
    if (!req.messages.empty() && req.messages.front().role == Role::system)
        return req.messages.front().content;
    return "";
}

std::string last_user_text(const ChatRequest& req) {
    for (auto it = req.messages.rbegin(); it != req.messages.rend(); ++it)
        if (it->role == Role::user) return it->content;
    return "";
}

/// Everything after the last occurrence of "<marker>\n" (or "<marker> ").
std::string after_marker(const std::string& text, const std::string& marker) {
    size_t pos = text.rfind(marker);
    if (pos == std::string::npos) return "";
    size_t start = pos + marker.size();
    while (start < text.size() && (text[start] == ' ' || text[start] == '\n')) ++start;
    return trim(text.substr(start));
}

/// Content of the first """-fenced block after a marker.
std::string fenced_section(const std::string& text, const std::string& marker) {
    size_t pos = text.find(marker);
    if (pos == std::string::npos) return "";
    size_t open = text.find("\"\"\"", pos);
    if (open == std::string::npos) return "";
    open += 3;
    size_t close = text.find("\"\"\"", open);
    if (close == std::string::npos) return "";
    return trim(text.substr(open, close - open));
}

const char* pick(uint64_t h, std::initializer_list<const char*> options) {
    return *(options.begin() + (h % options.size()));
}

std::string simulate_compiler(const ChatRequest& req, uint64_t h) {
    std::string user = last_user_text(req);
    if (contains(system_text(req), "novel value")) {
        // open-vocabulary expansion
        static const char* kNovel[] = {
            "urban beekeeper",          "independent field researcher", "antique map restorer",
            "volunteer wildlife tracker", "community radio host",       "competitive puzzle solver",
            "amateur astronomer",        "itinerant workshop facilitator"};
        return kNovel[h % (sizeof(kNovel) / sizeof(kNovel[0]))];
    }
    std::vector<std::string> pairs;
    for (const auto& line : split_lines(user)) {
        std::string t = trim(line);
        if (t.rfind("- ", 0) == 0) pairs.push_back(t.substr(2));
    }
    std::string out = "You are simulating a user with: ";
    for (size_t i = 0; i < pairs.size(); ++i) {
        if (i) out += "; ";
        out += pairs[i];
    }
    return out;
}

std::string simulate_user_agent(const ChatRequest& req, uint64_t h) {
    if (!contains(system_text(req), "VERDICT")) {
        // stylization
        std::string q = after_marker(last_user_text(req), "SEED QUERY:");
        if (q.empty()) q = last_user_text(req);
        return "[styled] " + q;
    }
    // feedback with machine-readable verdict
    bool satisfied = (h % 100) < 45;
    if (satisfied) {
        return std::string(pick(h >> 8, {"That works for me, thanks.", "Great, exactly what I needed.",
                                         "Good answer, I am satisfied with this."})) +
               "\nVERDICT: SATISFIED";
    }
    std::string body = pick(h >> 8, {"Close, but this still misses what I asked for.",
                                     "Not quite right yet.", "This is not matching my preference.",
                                     "Almost there, but the shape is off."});
    std::string followup =
        pick(h >> 16, {"Could you tighten it into three bullet points?",
                       "Add a short worked example, please.", "Rephrase it in a more formal register.",
                       "Focus on the main point and trim the rest.",
                       "Walk me through the reasoning step by step.",
                       "Shorten it and lead with the conclusion."});
    return body + "\nVERDICT: FOLLOWUP: " + followup;
}

// Echoes the final user message between fixed-length framing lines, so the
// response length tracks the request deterministically (the built-in pairwise
// judge compares lengths).
std::string simulate_assistant(const ChatRequest& req, uint64_t h) {
    std::string q = last_user_text(req);
    const char* prefix = pick(h, {"Here is a focused answer to the request you gave:",
                                  "Taking your message in order, the key response points follow:",
                                  "A direct reply to what you asked for comes next:"});
    return std::string(prefix) + "\n" + q + "\n(ref " +
           std::to_string(h % 9973) + ")";
}

std::string simulate_distractor(const ChatRequest& req, uint64_t h) {
    std::string sys = system_text(req);
    std::string text = after_marker(last_user_text(req), "TEXT:");
    if (text.empty()) text = last_user_text(req);
    if (contains(sys, "surface form")) {
        // layer 1 normally runs locally; mirror it for completeness
        std::string t = to_lower(text);
        while (!t.empty() && is_edge_punct(t.back())) t.pop_back();
        if (t == text) t += "?";
        return t;
    }
    if (contains(sys, "remove or blur")) {
        // layer 2: keep the front half, lose the constraints
        auto words = tokenize(text);
        if (words.size() < 2) return "the usual thing";
        size_t keep = (words.size() + 1) / 2;
        std::string out;
        for (size_t i = 0; i < keep; ++i) {
            if (i) out += " ";
            out += words[i];
        }
        return out;
    }
    // layer 3: inject conflicting intent
    return text + " " +
           pick(h, {"or actually, maybe do the opposite instead?",
                    "though possibly I want the other version, not sure.",
                    "but also make it longer and shorter at the same time."});
}

std::string simulate_teacher_profile(const ChatRequest& req, uint64_t h) {
    (void)req;
    char buf[256];
    std::snprintf(buf, sizeof(buf),
                  "Preference summary: the user favors %s structure, a %s register, and direct "
                  "answers grounded in their stated constraints (signal %llu).",
                  pick(h, {"tight", "layered", "minimal"}), pick(h >> 8, {"plain", "formal", "casual"}),
                  static_cast<unsigned long long>(h % 997));
    return buf;
}

std::string simulate_teacher_prompt(const ChatRequest& req, uint64_t h) {
    std::string sys = system_text(req);
    std::string user = last_user_text(req);
    if (contains(sys, "Chosen:")) {
        char buf[512];
        std::snprintf(buf, sizeof(buf),
                      "Chosen: a structured reply with a worked example (case %llu).\n"
                      "Rejected: a rambling reply that ignores formatting.\n\n"
                      "Chosen: a concise reply that leads with the conclusion.\n"
                      "Rejected: an answer padded with boilerplate caveats.",
                      static_cast<unsigned long long>(h % 89));
        return buf;
    }
    std::string q = after_marker(user, "NEW QUERY:");
    if (q.empty()) q = after_marker(user, "QUERY:");
    if (q.empty()) q = user;
    if (contains(sys, "guidance")) {
        return q + " Match my established formatting preferences and include practical detail.";
    }
    // pseudo-target prompt rewriting
    return q + " Use a structured layout, include one concrete example, and keep terminology precise.";
}

std::string simulate_judge(const ChatRequest& req, uint64_t h) {
    std::string sys = system_text(req);
    if (contains(sys, "PREFERRED")) {
        std::string user = last_user_text(req);
        std::string a = fenced_section(user, "RESPONSE A:");
        std::string b = fenced_section(user, "RESPONSE B:");
        size_t na = count_tokens(a), nb = count_tokens(b);
        const char* verdict = na == nb ? "TIE" : (na > nb ? "A" : "B");
        return std::string("Judged on completeness and fit to the stated preferences.\nPREFERRED: ") +
               verdict;
    }
    int rating = 1 + static_cast<int>(h % 10);
    char buf[160];
    std::snprintf(buf, sizeof(buf), "Evaluated against the rubric provided.\nRATING: %d", rating);
    return buf;
}

std::string simulate_optimizer(const ChatRequest& req, uint64_t h) {
    std::string q = after_marker(last_user_text(req), "NEW QUERY:");
    if (q.empty()) q = last_user_text(req);
    char buf[512];
    std::snprintf(buf, sizeof(buf),
                  "The history shows a consistent preference for concise, well-structured answers "
                  "with concrete examples (trace %llu).",
                  static_cast<unsigned long long>(h % 373));
    return "<REASONING>" + std::string(buf) + "</REASONING><PROMPT>" + q +
           " Keep it concise, use a clear structure, and add one concrete example.</PROMPT>";
}

}  // namespace

std::string simulate_role(const ChatRequest& req) {
    uint64_t h = content_hash(req);
    switch (req.role_tag) {
        case RoleTag::compiler: return simulate_compiler(req, h);
        case RoleTag::user_agent: return simulate_user_agent(req, h);
        case RoleTag::assistant_agent: return simulate_assistant(req, h);
        case RoleTag::distractor: return simulate_distractor(req, h);
        case RoleTag::teacher_profile: return simulate_teacher_profile(req, h);
        case RoleTag::teacher_prompt: return simulate_teacher_prompt(req, h);
        case RoleTag::judge_prof:
        case RoleTag::judge_task: return simulate_judge(req, h);
        case RoleTag::optimizer: return simulate_optimizer(req, h);
    }
    throw Error("unhandled role tag");
}

ChatResponse ScriptedBackend::complete(const ChatRequest& request) {
    std::string content;
    {
        std::lock_guard<std::mutex> lk(mutex_);
        if (capture_) captured_.push_back(request);
        auto exact = exact_.find(request_key(request));
        if (exact != exact_.end()) {
            content = exact->second;
        } else {
            auto q = queues_.find(request.role_tag);
            if (q != queues_.end() && !q->second.empty()) {
                content = q->second.front();
                q->second.pop_front();
            }
        }
    }
    if (content.empty()) content = simulate_role(request);

    ChatResponse resp;
    resp.content = content;
    int64_t prompt_tokens = 0;
    for (const auto& m : request.messages) prompt_tokens += static_cast<int64_t>(count_tokens(m.content));
    resp.usage.prompt_tokens = prompt_tokens;
    resp.usage.completion_tokens = static_cast<int64_t>(count_tokens(content));
    resp.backend_id = id();
    resp.latency_ms = 0;
    return resp;
}

void ScriptedBackend::register_exact(const ChatRequest& request, std::string response) {
    std::lock_guard<std::mutex> lk(mutex_);
    exact_[request_key(request)] = std::move(response);
}

void ScriptedBackend::push_response(RoleTag tag, std::string response) {
    std::lock_guard<std::mutex> lk(mutex_);
    queues_[tag].push_back(std::move(response));
}

std::vector<ChatRequest> ScriptedBackend::captured() const {
    std::lock_guard<std::mutex> lk(mutex_);
    return captured_;
}

// ---------------------------------------------------------------------------
// record / replay

RecordingBackend::RecordingBackend(BackendHandle inner, std::string cassette_path)
    : inner_(std::move(inner)), path_(std::move(cassette_path)) {
    std::ofstream out(path_, std::ios::trunc);
    if (!out) throw IoError("cannot open cassette " + path_ + " for writing");
}

ChatResponse RecordingBackend::complete(const ChatRequest& request) {
    ChatResponse resp = inner_->complete(request);
    char stamp[32];
    std::time_t now = std::time(nullptr);
    std::tm tm_utc{};
    gmtime_r(&now, &tm_utc);
    std::strftime(stamp, sizeof(stamp), "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
    json rec{{"key_hash", request_key_hex(request)},
             {"request", request_to_json(request)},
             {"response", response_to_json(resp)},
             {"recorded_at", stamp}};
    std::lock_guard<std::mutex> lk(mutex_);
    std::ofstream out(path_, std::ios::app);
    if (!out) throw IoError("cannot append to cassette " + path_);
    out << rec.dump() << "\n";
    return resp;
}

ReplayBackend::ReplayBackend(const std::string& cassette_path) {
    for (const auto& rec : read_jsonl(cassette_path)) {
        ChatRequest req = request_from_json(rec.at("request"));
        records_[request_key(req)].push_back(rec.at("response"));
    }
}

ChatResponse ReplayBackend::complete(const ChatRequest& request) {
    std::lock_guard<std::mutex> lk(mutex_);
    auto it = records_.find(request_key(request));
    if (it == records_.end() || it->second.empty())
        throw MissingRecording("no cassette entry for request key " + request_key_hex(request));
    json rec = it->second.front();
    if (it->second.size() > 1) it->second.pop_front();  // last entry stays sticky
    ChatResponse resp = response_from_json(rec);
    resp.backend_id = id();
    return resp;
}

// ---------------------------------------------------------------------------
// remote backend

namespace {
std::atomic<int64_t> g_network_attempts{0};

double jitter_factor(double jitter) {
    thread_local std::mt19937 gen(
        static_cast<uint32_t>(std::chrono::steady_clock::now().time_since_epoch().count()));
    return 1.0 + std::uniform_real_distribution<double>(-jitter, jitter)(gen);
}
}  // namespace

RemoteBackend::RemoteBackend(GatewayConfig config) : config_(std::move(config)) {
    const char* key = std::getenv("PERSONAFORGE_API_KEY");
    if (key) api_key_ = key;
}

int64_t RemoteBackend::network_attempts() { return g_network_attempts.load(); }
void RemoteBackend::reset_network_attempts() { g_network_attempts.store(0); }

ChatResponse RemoteBackend::complete(const ChatRequest& request) {
    json body{{"model", config_.model}, {"messages", json::array()},
              {"temperature", request.temperature}, {"top_p", request.top_p},
              {"max_tokens", request.max_tokens}};
    for (const auto& m : request.messages)
        body["messages"].push_back({{"role", to_string(m.role)}, {"content", m.content}});
    if (request.seed) body["seed"] = *request.seed;
    std::string payload = body.dump();

    httplib::Headers headers;
    if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);

    int attempts = 0;
    std::string last_error;
    while (true) {
        ++attempts;
        g_network_attempts.fetch_add(1);
        auto t0 = std::chrono::steady_clock::now();
        httplib::Client cli(config_.base_url);
        cli.set_connection_timeout(10, 0);
        cli.set_read_timeout(120, 0);
        auto res = cli.Post("/v1/chat/completions", headers, payload, "application/json");
        auto elapsed = std::chrono::duration_cast<std::chrono::milliseconds>(
                           std::chrono::steady_clock::now() - t0)
                           .count();
        bool transient = false;
        if (!res) {
            transient = true;
            last_error = "transport error " + httplib::to_string(res.error());
        } else if (res->status == 200) {
            json reply;
            try {
                reply = json::parse(res->body);
            } catch (const std::exception& e) {
                throw MalformedResponse(std::string("remote returned unparseable JSON: ") + e.what());
            }
            if (!reply.contains("choices") || reply["choices"].empty() ||
                !reply["choices"][0].contains("message") ||
                !reply["choices"][0]["message"].contains("content")) {
                throw MalformedResponse("remote reply missing choices[0].message.content");
            }
            ChatResponse out;
            out.content = reply["choices"][0]["message"]["content"].get<std::string>();
            if (reply.contains("usage")) {
                out.usage.prompt_tokens = reply["usage"].value("prompt_tokens", int64_t{0});
                out.usage.completion_tokens = reply["usage"].value("completion_tokens", int64_t{0});
            } else {
                int64_t prompt_tokens = 0;
                for (const auto& m : request.messages)
                    prompt_tokens += static_cast<int64_t>(count_tokens(m.content));
                out.usage.prompt_tokens = prompt_tokens;
                out.usage.completion_tokens = static_cast<int64_t>(count_tokens(out.content));
            }
            out.backend_id = id();
            out.latency_ms = elapsed;
            return out;
        } else if (res->status == 429 || res->status >= 500) {
            transient = true;
            last_error = "HTTP " + std::to_string(res->status);
        } else {
            throw BackendUnavailable("remote rejected request: HTTP " + std::to_string(res->status));
        }
        if (!transient || attempts > config_.max_retries) {
            throw BackendUnavailable("remote unavailable after " + std::to_string(attempts) +
                                     " attempts: " + last_error);
        }
        double delay = config_.backoff_base_ms *
                       std::pow(config_.backoff_factor, static_cast<double>(attempts - 1)) *
                       jitter_factor(config_.backoff_jitter);
        std::this_thread::sleep_for(std::chrono::milliseconds(static_cast<int64_t>(delay)));
    }
}

// ---------------------------------------------------------------------------
// gateway

Gateway::Gateway(BackendHandle backend, GatewayConfig config)
    : backend_(std::move(backend)), config_(std::move(config)) {}

ChatResponse Gateway::complete(const ChatRequest& request, Stage stage) {
    request.validate();
    {
        std::unique_lock<std::mutex> lk(inflight_mutex_);
        inflight_cv_.wait(lk, [&] { return inflight_ < config_.max_inflight; });
        ++inflight_;
    }
    ChatResponse resp;
    try {
        resp = backend_->complete(request);
    } catch (...) {
        {
            std::lock_guard<std::mutex> lk(inflight_mutex_);
            --inflight_;
        }
        inflight_cv_.notify_one();
        throw;
    }
    {
        std::lock_guard<std::mutex> lk(inflight_mutex_);
        --inflight_;
    }
    inflight_cv_.notify_one();
    ledger_.add(stage, resp.usage);
    return resp;
}

}  // namespace personaforge
