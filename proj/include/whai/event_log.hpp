#pragma once

#include "whai/belief.hpp"
#include "whai/emr.hpp"
#include "whai/encounter.hpp"
#include "whai/lab_oracle.hpp"

#include "json.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace whai {

enum class EventKind { Message, EmrRecord, LabRelease, BeliefObservation, BreakpointHit, ControlApplied, RunState };

std::string to_string(EventKind kind);
EventKind parse_event_kind(const std::string& s);

struct Event {
    /// Dense, 0-based, gapless per session.
    std::uint64_t index = 0;
    EventKind kind = EventKind::RunState;
    /// Execution position the event belongs to. Everything logged while the
    /// cursor sits at k, and the encounter run from there, carries k.
    int encounter = 0;
    std::string display_time;
    nlohmann::json payload;
};

nlohmann::json event_json(const Event& e);
Event event_from_json(const nlohmann::json& j);

/// Copy of `j` with every "display_time" member removed, recursively.
nlohmann::json strip_display_times(const nlohmann::json& j);

/// One stripped event per line; equal strings mean behaviorally identical logs.
std::string behavioral_form(const std::vector<Event>& events);

class EventLog {
public:
    const Event& append(EventKind kind, int encounter, nlohmann::json payload);
    /// Appends an event read back from disk; its index must be the next one.
    void adopt(Event e);
    const std::vector<Event>& events() const { return events_; }
    std::size_t size() const { return events_.size(); }
    /// Events with encounter < `position`.
    std::vector<Event> prefix_before(int position) const;
    std::string to_ndjson() const;
    static EventLog from_ndjson(const std::string& text);
    /// Parses NDJSON events whose indices must run densely from `first_index`.
    static std::vector<Event> parse_ndjson(const std::string& text, std::size_t first_index);

private:
    std::vector<Event> events_;
};

nlohmann::json message_json(const Message& m);
Message message_from_json(const nlohmann::json& j);
nlohmann::json record_json(const EmrRecord& r);
EmrRecord record_from_json(const nlohmann::json& j);
nlohmann::json release_json(const LabRelease& r);
LabRelease release_from_json(const nlohmann::json& j);
nlohmann::json observation_json(const BeliefObservation& o);
BeliefObservation observation_from_json(const nlohmann::json& j);
nlohmann::json probe_json(const BeliefProbe& p);
/// Parses and compiles.
BeliefProbe probe_from_json(const nlohmann::json& j);
nlohmann::json transcript_json(const Transcript& t);
nlohmann::json engine_event_json(const EngineEvent& e);
EventKind engine_event_kind(const EngineEvent& e);

}  // namespace whai
