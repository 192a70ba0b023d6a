#include "whai/event_log.hpp"

#include "whai/error.hpp"
#include "whai/util.hpp"

using nlohmann::json;

namespace whai {

namespace {

const std::vector<std::pair<EventKind, const char*>>& kind_names() {
    static const std::vector<std::pair<EventKind, const char*>> names = {
        {EventKind::Message, "message"},
        {EventKind::EmrRecord, "emr-record"},
        {EventKind::LabRelease, "lab-release"},
        {EventKind::BeliefObservation, "belief-observation"},
        {EventKind::BreakpointHit, "breakpoint-hit"},
        {EventKind::ControlApplied, "control-applied"},
        {EventKind::RunState, "run-state"},
    };
    return names;
}

json time_json(const LogicalTime& t) { return json{{"encounter", t.encounter}, {"step", t.step}}; }

LogicalTime time_from_json(const json& j) { return {j.at("encounter").get<int>(), j.at("step").get<int>()}; }

}  // namespace

std::string to_string(EventKind kind) {
    for (const auto& [k, n] : kind_names()) {
        if (k == kind) {
            return n;
        }
    }
    return "run-state";
}

EventKind parse_event_kind(const std::string& s) {
    for (const auto& [k, n] : kind_names()) {
        if (s == n) {
            return k;
        }
    }
    throw Error("unknown event kind '" + s + "'");
}

json event_json(const Event& e) {
    return json{{"index", e.index},
                {"kind", to_string(e.kind)},
                {"encounter", e.encounter},
                {"display_time", e.display_time},
                {"payload", e.payload}};
}

Event event_from_json(const json& j) {
    Event e;
    e.index = j.at("index").get<std::uint64_t>();
    e.kind = parse_event_kind(j.at("kind").get<std::string>());
    e.encounter = j.at("encounter").get<int>();
    e.display_time = j.value("display_time", "");
    e.payload = j.at("payload");
    return e;
}

json strip_display_times(const json& j) {
    if (j.is_object()) {
        json out = json::object();
        for (auto it = j.begin(); it != j.end(); ++it) {
            if (it.key() == "display_time") {
                continue;
            }
            out[it.key()] = strip_display_times(it.value());
        }
        return out;
    }
    if (j.is_array()) {
        json out = json::array();
        for (const auto& v : j) {
            out.push_back(strip_display_times(v));
        }
        return out;
    }
    return j;
}

std::string behavioral_form(const std::vector<Event>& events) {
    std::string out;
    for (const auto& e : events) {
        out += strip_display_times(event_json(e)).dump();
        out += '\n';
    }
    return out;
}

const Event& EventLog::append(EventKind kind, int encounter, json payload) {
    Event e;
    e.index = events_.size();
    e.kind = kind;
    e.encounter = encounter;
    e.display_time = iso8601_now();
    e.payload = std::move(payload);
    events_.push_back(std::move(e));
    return events_.back();
}

void EventLog::adopt(Event e) {
    if (e.index != events_.size()) {
        throw Error("event index " + std::to_string(e.index) + " breaks the sequence at " +
                    std::to_string(events_.size()));
    }
    events_.push_back(std::move(e));
}

std::vector<Event> EventLog::prefix_before(int position) const {
    std::vector<Event> out;
    for (const auto& e : events_) {
        if (e.encounter < position) {
            out.push_back(e);
        }
    }
    return out;
}

std::string EventLog::to_ndjson() const {
    std::string out;
    for (const auto& e : events_) {
        out += event_json(e).dump();
        out += '\n';
    }
    return out;
}

std::vector<Event> EventLog::parse_ndjson(const std::string& text, std::size_t first_index) {
    std::vector<Event> out;
    std::size_t line_no = 0;
    for (const auto& line : split(text, '\n')) {
        ++line_no;
        if (trim(line).empty()) {
            continue;
        }
        Event e;
        try {
            e = event_from_json(json::parse(line));
        } catch (const json::exception& ex) {
            throw Error("event log line " + std::to_string(line_no) + ": " + ex.what());
        }
        if (e.index != first_index + out.size()) {
            throw Error("event log line " + std::to_string(line_no) + " has index " + std::to_string(e.index) +
                        ", expected " + std::to_string(first_index + out.size()));
        }
        out.push_back(std::move(e));
    }
    return out;
}

EventLog EventLog::from_ndjson(const std::string& text) {
    EventLog log;
    for (auto& e : parse_ndjson(text, 0)) {
        log.adopt(std::move(e));
    }
    return log;
}

json message_json(const Message& m) {
    json j{{"seq", m.seq},
           {"encounter_id", m.encounter_id},
           {"position", m.position},
           {"speaker", m.speaker},
           {"channel", to_string(m.channel)},
           {"purpose", m.purpose},
           {"turn", m.turn},
           {"content", m.content},
           {"usage", {{"prompt_tokens", m.usage.prompt_tokens}, {"completion_tokens", m.usage.completion_tokens}}},
           {"persona_break", m.persona_break},
           {"display_time", m.display_time}};
    if (!m.audience.empty()) {
        j["audience"] = m.audience;
    }
    return j;
}

Message message_from_json(const json& j) {
    Message m;
    m.seq = j.at("seq").get<std::uint64_t>();
    m.encounter_id = j.at("encounter_id").get<int>();
    m.position = j.at("position").get<int>();
    m.speaker = j.at("speaker").get<std::string>();
    m.channel = parse_channel(j.at("channel").get<std::string>());
    m.purpose = j.at("purpose").get<std::string>();
    m.audience = j.value("audience", "");
    m.turn = j.at("turn").get<int>();
    m.content = j.at("content").get<std::string>();
    m.usage.prompt_tokens = j.at("usage").at("prompt_tokens").get<std::int64_t>();
    m.usage.completion_tokens = j.at("usage").at("completion_tokens").get<std::int64_t>();
    m.persona_break = j.value("persona_break", false);
    m.display_time = j.value("display_time", "");
    return m;
}

json record_json(const EmrRecord& r) {
    const auto s = r.sections();
    return json{{"record_id", r.record_id},
                {"encounter_id", r.encounter_id},
                {"author_role", r.author_role},
                {"sim_time", time_json(r.sim_time)},
                {"body", r.body},
                {"sections",
                 {{"subjective", s.subjective},
                  {"findings", s.findings},
                  {"labs", s.labs},
                  {"assessment", s.assessment},
                  {"plan", s.plan}}},
                {"tags", std::vector<std::string>(r.tags.begin(), r.tags.end())},
                {"display_time", r.display_time}};
}

EmrRecord record_from_json(const json& j) {
    EmrRecord r;
    r.record_id = j.at("record_id").get<std::uint64_t>();
    r.encounter_id = j.at("encounter_id").get<int>();
    r.author_role = j.at("author_role").get<std::string>();
    r.sim_time = time_from_json(j.at("sim_time"));
    r.body = j.at("body").get<std::string>();
    for (const auto& t : j.at("tags")) {
        r.tags.insert(t.get<std::string>());
    }
    r.display_time = j.value("display_time", "");
    return r;
}

json release_json(const LabRelease& r) {
    return json{{"lab_key", r.lab_key},
                {"result_text", r.result_text},
                {"released_at", time_json(r.released_at)},
                {"matched_order_text", r.matched_order_text},
                {"matcher", r.matcher}};
}

LabRelease release_from_json(const json& j) {
    return LabRelease{j.at("lab_key").get<std::string>(), j.at("result_text").get<std::string>(),
                      time_from_json(j.at("released_at")), j.at("matched_order_text").get<std::string>(),
                      j.at("matcher").get<std::string>()};
}

json observation_json(const BeliefObservation& o) {
    json parsed = nullptr;
    if (o.category) {
        parsed = *o.category;
    } else if (o.number) {
        parsed = *o.number;
    } else if (!o.ranked.empty()) {
        parsed = o.ranked;
    }
    return json{{"agent_role", o.agent_role},
                {"encounter_id", o.encounter_id},
                {"position", o.position},
                {"phase", to_string(o.phase)},
                {"probe_id", o.probe_id},
                {"response_kind", to_string(o.kind)},
                {"raw_response", o.raw_response},
                {"parsed", parsed},
                {"parse_failed", o.parse_failed},
                {"score", o.score ? json(*o.score) : json(nullptr)}};
}

BeliefObservation observation_from_json(const json& j) {
    BeliefObservation o;
    o.agent_role = j.at("agent_role").get<std::string>();
    o.encounter_id = j.at("encounter_id").get<int>();
    o.position = j.at("position").get<int>();
    o.phase = parse_phase(j.at("phase").get<std::string>());
    o.probe_id = j.at("probe_id").get<std::string>();
    o.kind = parse_response_kind(j.at("response_kind").get<std::string>());
    o.raw_response = j.at("raw_response").get<std::string>();
    const auto& parsed = j.at("parsed");
    if (parsed.is_string()) {
        o.category = parsed.get<std::string>();
    } else if (parsed.is_number()) {
        o.number = parsed.get<double>();
    } else if (parsed.is_array()) {
        o.ranked = parsed.get<std::vector<std::string>>();
    }
    o.parse_failed = j.at("parse_failed").get<bool>();
    if (!j.at("score").is_null()) {
        o.score = j.at("score").get<double>();
    }
    return o;
}

json probe_json(const BeliefProbe& p) {
    json j{{"id", p.id},
           {"prompt", p.prompt_template},
           {"parse_expr", p.parse_expr},
           {"kind", to_string(p.kind)},
           {"schedule", to_string(p.schedule)},
           {"targets", p.targets}};
    if (p.kind == ResponseKind::Categorical) {
        j["categories"] = p.categories;
        if (!p.scores.empty()) {
            j["scores"] = p.scores;
        }
    }
    if (p.kind == ResponseKind::Numeric) {
        j["range"] = {p.min, p.max};
    }
    return j;
}

BeliefProbe probe_from_json(const json& j) {
    static const std::set<std::string> allowed = {"id",       "prompt",     "parse_expr", "kind", "schedule",
                                                  "targets",  "categories", "scores",     "range"};
    if (!j.is_object()) {
        throw Error("probe must be an object");
    }
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (!allowed.contains(it.key())) {
            throw Error("unknown probe field '" + it.key() + "'");
        }
    }
    try {
        BeliefProbe p;
        p.id = j.at("id").get<std::string>();
        p.prompt_template = j.at("prompt").get<std::string>();
        p.parse_expr = j.at("parse_expr").get<std::string>();
        p.kind = parse_response_kind(j.value("kind", std::string("categorical")));
        p.schedule = parse_schedule(j.value("schedule", std::string("post-encounter")));
        if (j.contains("targets")) {
            p.targets = j["targets"].is_string() ? std::vector<std::string>{j["targets"].get<std::string>()}
                                                 : j["targets"].get<std::vector<std::string>>();
        }
        if (j.contains("categories")) {
            p.categories = j["categories"].get<std::vector<std::string>>();
        }
        if (j.contains("scores")) {
            p.scores = j["scores"].get<std::map<std::string, double>>();
        }
        if (j.contains("range")) {
            p.min = j["range"].at(0).get<double>();
            p.max = j["range"].at(1).get<double>();
        }
        compile_probe(p);
        return p;
    } catch (const json::exception& e) {
        throw Error(std::string("malformed probe: ") + e.what());
    }
}

json transcript_json(const Transcript& t) {
    json messages = json::array();
    for (const auto& m : t.messages) {
        messages.push_back(message_json(m));
    }
    return json{{"encounter_id", t.encounter_id},
                {"position", t.position},
                {"doctor_role", t.doctor_role},
                {"terminal", to_string(t.terminal)},
                {"messages", messages}};
}

json engine_event_json(const EngineEvent& e) {
    return std::visit(
        [](const auto& v) -> json {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, Message>) {
                return message_json(v);
            } else if constexpr (std::is_same_v<T, EmrRecord>) {
                return record_json(v);
            } else if constexpr (std::is_same_v<T, LabRelease>) {
                return release_json(v);
            } else {
                return observation_json(v);
            }
        },
        e);
}

EventKind engine_event_kind(const EngineEvent& e) {
    switch (e.index()) {
    case 0: return EventKind::Message;
    case 1: return EventKind::EmrRecord;
    case 2: return EventKind::LabRelease;
    default: return EventKind::BeliefObservation;
    }
}

}  // namespace whai
