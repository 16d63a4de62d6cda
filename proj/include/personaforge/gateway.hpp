#pragma once

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "personaforge/config.hpp"
#include "personaforge/jsonl.hpp"

namespace personaforge {

enum class Role { system, user, assistant };

/// Which LLM the call stands in for. One gateway serves every role in the
/// pipeline; backends may dispatch on the tag.
enum class RoleTag {
    user_agent,
    assistant_agent,
    distractor,
    compiler,
    teacher_profile,
    teacher_prompt,
    judge_prof,
    judge_task,
    optimizer,
};

std::string to_string(Role r);
std::string to_string(RoleTag t);
Role role_from_string(const std::string& s);
RoleTag role_tag_from_string(const std::string& s);

struct ChatMessage {
    Role role = Role::user;
    std::string content;
};

struct ChatRequest {
    RoleTag role_tag = RoleTag::assistant_agent;
    std::vector<ChatMessage> messages;
    double temperature = 0.7;
    double top_p = 0.9;
    int max_tokens = 1024;
    std::optional<int64_t> seed;

    /// Throws Error if the type invariants do not hold (non-empty messages,
    /// at most one leading system message, non-blank contents).
    void validate() const;
};

struct Usage {
    int64_t prompt_tokens = 0;
    int64_t completion_tokens = 0;
};

struct ChatResponse {
    std::string content;
    Usage usage;
    std::string backend_id;
    int64_t latency_ms = 0;
};

/// Pipeline stage a call is accounted under. The first four match the token
/// ledger categories of the data-generation pipeline; the rest cover the
/// prompt-optimization half.
enum class Stage {
    interaction_generation,
    query_generation,
    distractor,
    persona_formulation,
    pseudo_target,
    reward_judging,
    optimizer_sampling,
};

std::string to_string(Stage s);

struct LedgerRow {
    std::string stage;
    double tokens = 0.0;
    double percent = 0.0;
    double cost = 0.0;
};

/// Thread-safe per-stage token accounting.
class TokenLedger {
public:
    void add(Stage stage, const Usage& usage);
    void add_raw(Stage stage, double tokens);
    double stage_total(Stage stage) const;
    double grand_total() const;
    std::map<std::string, double> totals() const;
    void reset();

private:
    mutable std::mutex mutex_;
    std::map<Stage, double> totals_;
};

/// Rows sorted descending by tokens. `price_per_mtoken` is a flat rate in
/// dollars per million tokens; the resulting column is a per-sample cost,
/// not a per-token one.
std::vector<LedgerRow> ledger_report(const TokenLedger& ledger, double price_per_mtoken);
std::string format_ledger_report(const std::vector<LedgerRow>& rows);

/// Stable hash of everything that identifies a request: role tag, messages,
/// and sampling parameters. Used as scripted-table and cassette key.
uint64_t request_key(const ChatRequest& req);
std::string request_key_hex(const ChatRequest& req);

class Backend {
public:
    virtual ~Backend() = default;
    virtual ChatResponse complete(const ChatRequest& request) = 0;
    virtual std::string id() const = 0;
    /// True when responses are produced locally with no model behind them
    /// (lets callers choose built-in deterministic transforms).
    virtual bool is_scripted() const { return false; }
};

using BackendHandle = std::shared_ptr<Backend>;

/// Deterministic test backend. Resolution order per request:
///  1. exact-match table keyed by request_key()
///  2. per-role FIFO queue
///  3. built-in role simulator (pure function of the request and its seed)
class ScriptedBackend : public Backend {
public:
    ChatResponse complete(const ChatRequest& request) override;
    std::string id() const override { return "scripted"; }
    bool is_scripted() const override { return true; }

    void register_exact(const ChatRequest& request, std::string response);
    void push_response(RoleTag tag, std::string response);

    /// When enabled, every request is retained for structural inspection.
    void set_capture(bool on) { capture_ = on; }
    std::vector<ChatRequest> captured() const;

private:
    mutable std::mutex mutex_;
    std::map<uint64_t, std::string> exact_;
    std::map<RoleTag, std::deque<std::string>> queues_;
    bool capture_ = false;
    std::vector<ChatRequest> captured_;
};

/// Built-in deterministic role behaviors used by ScriptedBackend when no
/// explicit script matches. Exposed so tests can call them directly.
std::string simulate_role(const ChatRequest& request);

json request_to_json(const ChatRequest& req);
ChatRequest request_from_json(const json& j);
json response_to_json(const ChatResponse& resp);
ChatResponse response_from_json(const json& j);

/// Wraps another backend and appends every exchange to a cassette file
/// (JSON Lines: key_hash, request, response, recorded_at).
class RecordingBackend : public Backend {
public:
    RecordingBackend(BackendHandle inner, std::string cassette_path);
    ChatResponse complete(const ChatRequest& request) override;
    std::string id() const override { return "record(" + inner_->id() + ")"; }
    bool is_scripted() const override { return inner_->is_scripted(); }

private:
    BackendHandle inner_;
    std::string path_;
    std::mutex mutex_;
};

/// Replays a cassette. Repeated identical requests consume recorded entries
/// in order; the final entry is sticky. Never touches the network.
class ReplayBackend : public Backend {
public:
    explicit ReplayBackend(const std::string& cassette_path);
    ChatResponse complete(const ChatRequest& request) override;
    std::string id() const override { return "replay"; }
    bool is_scripted() const override { return true; }

private:
    std::mutex mutex_;
    std::map<uint64_t, std::deque<json>> records_;
};

/// OpenAI-compatible chat-completions client. Retries timeouts and HTTP
/// 429/5xx with exponential backoff; other failures surface immediately.
class RemoteBackend : public Backend {
public:
    explicit RemoteBackend(GatewayConfig config);
    ChatResponse complete(const ChatRequest& request) override;
    std::string id() const override { return "remote:" + config_.model; }

    /// Total HTTP attempts made by any RemoteBackend in this process; lets
    /// tests assert that replay runs make zero network calls.
    static int64_t network_attempts();
    static void reset_network_attempts();

private:
    GatewayConfig config_;
    std::string api_key_;
};

/// Front door for every LLM call. Owns the ledger, enforces the in-flight
/// cap, and delegates transport to the configured backend.
class Gateway {
public:
    Gateway(BackendHandle backend, GatewayConfig config = {});

    ChatResponse complete(const ChatRequest& request, Stage stage);

    TokenLedger& ledger() { return ledger_; }
    const TokenLedger& ledger() const { return ledger_; }
    Backend& backend() { return *backend_; }
    BackendHandle backend_handle() const { return backend_; }
    const GatewayConfig& config() const { return config_; }

private:
    BackendHandle backend_;
    GatewayConfig config_;
    TokenLedger ledger_;
    std::mutex inflight_mutex_;
    std::condition_variable inflight_cv_;
    int inflight_ = 0;
};

}  // namespace personaforge
