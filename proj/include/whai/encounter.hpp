#pragma once

#include "whai/belief.hpp"
#include "whai/emr.hpp"
#include "whai/gateway.hpp"
#include "whai/lab_oracle.hpp"
#include "whai/scenario.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace whai {

enum class Channel { OnRecord, OutOfBand };

std::string to_string(Channel channel);
Channel parse_channel(const std::string& s);

inline constexpr const char* kSpeakerSystem = "system";

/// Purposes carried by logged messages.
inline constexpr const char* kMsgDialogue = "dialogue";
inline constexpr const char* kMsgPrivateContext = "private-context";
inline constexpr const char* kMsgDocSummary = "doc-summary";
inline constexpr const char* kMsgEmrReview = "emr-review";

struct Message {
    std::uint64_t seq = 0;
    int encounter_id = 0;
    int position = 0;
    Role speaker;
    Channel channel = Channel::OnRecord;
    std::string purpose = kMsgDialogue;
    /// Owner of an out-of-band note; empty on the record.
    Role audience;
    int turn = 0;
    std::string content;
    Usage usage;
    /// Logged only; never used for control flow.
    bool persona_break = false;
    std::string display_time;
};

enum class TerminalReason { TurnLimit, NaturalClose };

std::string to_string(TerminalReason reason);
TerminalReason parse_terminal_reason(const std::string& s);

struct Transcript {
    int encounter_id = 0;
    int position = 0;
    Role doctor_role;
    std::vector<Message> messages;
    TerminalReason terminal = TerminalReason::TurnLimit;
};

/// "Parent: ...\nPediatrician: ..." rendering of the on-record turns.
std::string transcript_text(const Transcript& transcript);

/// Per-agent document queued for internalization at the next encounter.
struct PendingPrime {
    Role agent;
    int doc_id = 0;
    std::string document;
    bool operator==(const PendingPrime&) const = default;
};

/// Everything that evolves as a session runs. A plain value: copying it is a snapshot.
struct SessionState {
    /// 1-based index into `order` of the next encounter to execute.
    int cursor = 1;
    std::vector<int> order;
    std::map<Role, AgentSpec> agents;
    std::string global_doc;
    std::vector<BeliefProbe> probes;
    std::string emr_prompt;
    RecordsPolicy policy;
    VisibilityOverlay overlay;
    HiddenLabSet hidden;
    EmrStore emr;
    std::vector<Message> messages;
    std::vector<Transcript> transcripts;
    std::vector<BeliefObservation> observations;
    std::vector<LabRelease> releases;
    std::vector<PendingPrime> pending_primes;
    std::uint64_t next_seq = 1;

    bool finished() const { return cursor > static_cast<int>(order.size()); }
    int total() const { return static_cast<int>(order.size()); }

    static SessionState initial(const Scenario& scenario);
};

/// Persona, voice, specialist prefix, global document, then primed summaries.
std::string compose_system_prompt(const AgentSpec& agent, const ScenarioConfig& config, const std::string& global_doc);

struct EngineOptions {
    CallOptions call;
    std::uint64_t salt = 0;
    bool run_probes = true;
    /// Extra request annotations (series, replicate, ...); never keyed.
    std::map<std::string, std::string> annotations;
    /// Store for persona-filtered document summaries; empty disables reuse.
    std::filesystem::path summaries_dir;
};

using EngineEvent = std::variant<Message, EmrRecord, LabRelease, BeliefObservation>;

struct EncounterOutcome {
    int position = 0;
    int encounter_id = 0;
    Transcript transcript;
    /// Outputs in the order they happened.
    std::vector<EngineEvent> events;
    UsageLedger ledger;
    /// Keys the lab matcher proposed that were not held.
    std::vector<std::string> dropped_lab_keys;
};

/// Roles a probe addresses in an encounter whose specialist is `doctor`.
std::vector<Role> resolve_probe_targets(const BeliefProbe& probe, const Role& doctor, const Scenario& scenario);

class EncounterEngine {
public:
    EncounterEngine(const Scenario& scenario, const Gateway& gateway, EngineOptions options);

    /// Executes state.order[cursor - 1]. Commits into `state` only on success;
    /// any exception leaves `state` exactly as it was.
    EncounterOutcome run_next(SessionState& state) const;

    /// Out-of-band probe at the current boundary. Appends the observation to `state`.
    BeliefObservation probe_on_demand(SessionState& state, const Role& agent, const BeliefProbe& probe,
                                      UsageLedger& ledger) const;

    std::string system_prompt(const SessionState& state, const Role& role) const;

    const EngineOptions& options() const { return options_; }
    const Scenario& scenario() const { return scenario_; }

private:
    struct Run;

    const Scenario& scenario_;
    const Gateway& gateway_;
    EngineOptions options_;
};

/// Logged-only heuristic for out-of-character meta statements.
bool looks_like_persona_break(const std::string& text);

}  // namespace whai
