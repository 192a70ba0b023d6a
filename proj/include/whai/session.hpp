#pragma once

#include "whai/encounter.hpp"
#include "whai/event_log.hpp"
#include "whai/gateway.hpp"
#include "whai/scenario.hpp"

#include <chrono>
#include <condition_variable>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace whai {

struct PrimingControl {
    /// Empty: global, appended to the shared document every prompt carries.
    Role agent;
    int doc_id = 0;
    std::string text;
    bool operator==(const PrimingControl&) const = default;
};

struct ExposureControl {
    VisibilityOverlay overlay;
    std::map<Role, Visibility> rules;
    std::vector<RecordOverride> overrides;
    bool operator==(const ExposureControl&) const = default;
};

enum class LabInjectionMode { OracleUpsert, EmrDirect };

struct LabInjection {
    std::string key;
    std::string result;
    LabInjectionMode mode = LabInjectionMode::OracleUpsert;
    bool operator==(const LabInjection&) const = default;
};

/// One field per debugger control.
struct ControlSet {
    std::vector<PrimingControl> priming;
    std::optional<ExposureControl> exposure;
    /// Replace the probe with the same id, or add it.
    std::vector<BeliefProbe> probes;
    /// Full permutation of encounter ids; the executed prefix must be kept.
    std::optional<std::vector<int>> encounter_order;
    std::vector<LabInjection> labs;
    std::map<Role, std::string> voices;
    /// Replacement EMR summarization prompt.
    std::optional<std::string> emr_prompt;

    bool empty() const;
};

nlohmann::json controls_json(const ControlSet& c);
/// Strict: unknown or malformed fields raise SessionError(InvalidControl).
ControlSet controls_from_json(const nlohmann::json& j);

struct ParentRef {
    std::string session_id;
    int fork_at = 0;
};

struct BeliefDiffRow {
    Role agent;
    int encounter_id = 0;
    ProbePhase phase = ProbePhase::Post;
    std::string probe_id;
    std::optional<BeliefObservation> a;
    std::optional<BeliefObservation> b;
    /// b.score - a.score when both are scored.
    std::optional<double> delta;
    bool same_value() const;
};

class DebugSession {
public:
    DebugSession(std::shared_ptr<const Scenario> scenario, std::shared_ptr<const Gateway> gateway, std::string session_id,
                 EngineOptions options);

    const std::string& id() const { return id_; }
    const std::optional<ParentRef>& parent() const { return parent_; }
    const Scenario& scenario() const { return *scenario_; }
    std::shared_ptr<const Scenario> scenario_ptr() const { return scenario_; }
    std::shared_ptr<const Gateway> gateway_ptr() const { return gateway_; }
    const EngineOptions& options() const { return engine_.options(); }
    const SessionState& state() const { return state_; }
    int cursor() const { return state_.cursor; }
    bool finished() const { return state_.finished(); }
    const std::set<int>& breakpoints() const { return breakpoints_; }
    const UsageLedger& ledger() const { return ledger_; }

    /// Copy of the log, safe while another thread runs a command.
    std::vector<Event> events() const;
    std::size_t event_count() const;
    /// Blocks up to `wait` for events at index >= from.
    std::vector<Event> events_since(std::size_t from, std::chrono::milliseconds wait) const;

    void set_breakpoints(std::set<int> breakpoints);
    EncounterOutcome step();
    /// Steps until the cursor reaches `target` (default: past the last
    /// encounter) or enters the breakpoint set.
    std::vector<EncounterOutcome> run_until(std::optional<int> target = {});
    /// Runs to the end, passing every breakpoint.
    std::vector<EncounterOutcome> run_to_end();
    void apply_controls(const ControlSet& controls);
    BeliefObservation probe(const Role& agent, const BeliefProbe& probe);
    BeliefObservation probe(const Role& agent, const std::string& probe_id);

    /// Child sharing this session's log up to position `at`, with `controls` applied.
    std::unique_ptr<DebugSession> fork(int at, const ControlSet& controls, std::string child_id) const;

    /// Rebuilds a session by re-issuing the commands recorded in `events`.
    /// Output events are regenerated, not copied.
    static std::unique_ptr<DebugSession> redrive(std::shared_ptr<const Scenario> scenario,
                                                 std::shared_ptr<const Gateway> gateway, std::string session_id,
                                                 EngineOptions options, const std::vector<Event>& events);

    /// Replaces regenerated display timestamps with the recorded ones after a
    /// behaviorally identical redrive.
    void adopt_display_times(const std::vector<Event>& recorded);
    void set_parent(std::optional<ParentRef> parent) { parent_ = std::move(parent); }

    /// Serializes commands against this session.
    std::mutex& command_mutex() const { return command_mutex_; }

    /// On-record transcripts, in execution order.
    const std::vector<Transcript>& transcripts() const { return state_.transcripts; }

private:
    struct Boundary {
        SessionState state;
        std::set<int> breakpoints;
    };

    void emit(EventKind kind, nlohmann::json payload);
    void emit_outcome(const EncounterOutcome& outcome);
    void record_boundary();

    std::shared_ptr<const Scenario> scenario_;
    std::shared_ptr<const Gateway> gateway_;
    std::string id_;
    EncounterEngine engine_;
    SessionState state_;
    std::set<int> breakpoints_;
    UsageLedger ledger_;
    std::optional<ParentRef> parent_;
    /// boundaries_[k - 1]: state when the cursor became k.
    std::vector<Boundary> boundaries_;

    EventLog log_;
    mutable std::mutex log_mutex_;
    mutable std::condition_variable log_cv_;
    mutable std::mutex command_mutex_;
};

struct ReplayResult {
    std::unique_ptr<DebugSession> session;
    bool identical = false;
    /// Index of the first behaviorally different event, or the shorter length.
    std::size_t first_divergence = 0;
};

/// Re-executes `source` from scratch. Cache-only when the provider is live.
ReplayResult replay_exact(const DebugSession& source, const std::string& replay_id);
/// Fork at 1 with `controls`, run to the end.
std::unique_ptr<DebugSession> replay_with(const DebugSession& source, const ControlSet& controls,
                                          const std::string& replay_id);

/// First index where the behavioral forms differ, or the shorter size.
std::size_t first_divergence(const std::vector<Event>& a, const std::vector<Event>& b);

/// Aligns observations on (agent, encounter, phase, probe). Raises
/// SessionError(ProbeMismatch) when the sessions' probe ids differ.
std::vector<BeliefDiffRow> diff_beliefs(const DebugSession& a, const DebugSession& b);

nlohmann::json diff_json(const std::vector<BeliefDiffRow>& rows);

}  // namespace whai
