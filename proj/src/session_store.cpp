#include "whai/session_store.hpp"

#include "whai/error.hpp"
#include "whai/util.hpp"

#include <algorithm>

namespace fs = std::filesystem;
using nlohmann::json;

namespace whai {

json meta_json(const SessionMeta& m) {
    json j{{"session_id", m.session_id},
           {"scenario_config", m.scenario_config.string()},
           {"scenario_id", m.scenario_id},
           {"salt", m.salt},
           {"use_cache", m.use_cache},
           {"provider", m.provider},
           {"script", m.script.string()},
           {"prefix_events", m.prefix_events},
           {"annotations", m.annotations}};
    if (m.parent) {
        j["parent"] = {{"session_id", m.parent->session_id}, {"fork_at", m.parent->fork_at}};
    } else {
        j["parent"] = nullptr;
    }
    return j;
}

SessionMeta meta_from_json(const json& j) {
    SessionMeta m;
    m.session_id = j.at("session_id").get<std::string>();
    m.scenario_config = j.at("scenario_config").get<std::string>();
    m.scenario_id = j.at("scenario_id").get<int>();
    m.salt = j.value("salt", std::uint64_t{0});
    m.use_cache = j.value("use_cache", true);
    m.provider = j.value("provider", "scripted");
    m.script = j.value("script", "");
    m.prefix_events = j.value("prefix_events", std::size_t{0});
    m.annotations = j.value("annotations", std::map<std::string, std::string>{});
    if (j.contains("parent") && j["parent"].is_object()) {
        m.parent = ParentRef{j["parent"].at("session_id").get<std::string>(), j["parent"].at("fork_at").get<int>()};
    }
    return m;
}

SessionStore::SessionStore(fs::path root) : root_(std::move(root)) {}

fs::path SessionStore::session_dir(const std::string& id) const { return root_ / "sessions" / id; }

fs::path SessionStore::emr_path(const std::string& id) const { return root_ / "emr" / (id + ".ndjson"); }

bool SessionStore::exists(const std::string& id) const { return fs::exists(session_dir(id) / "meta.json"); }

std::vector<std::string> SessionStore::list() const {
    std::vector<std::string> out;
    const auto dir = root_ / "sessions";
    if (!fs::exists(dir)) {
        return out;
    }
    for (const auto& e : fs::directory_iterator(dir)) {
        if (fs::exists(e.path() / "meta.json")) {
            out.push_back(e.path().filename().string());
        }
    }
    std::sort(out.begin(), out.end());
    return out;
}

std::string csv_field(std::string_view value) {
    if (value.find_first_of(",\"\n\r") == std::string_view::npos) {
        return std::string(value);
    }
    std::string out = "\"";
    for (char c : value) {
        if (c == '"') {
            out += '"';
        }
        out += c;
    }
    out += '"';
    return out;
}

std::string observations_csv(const std::vector<BeliefObservation>& observations) {
    std::string out = "agent,encounter_id,position,phase,probe_id,value,score,parse_failed\n";
    for (const auto& o : observations) {
        out += csv_field(o.agent_role) + "," + std::to_string(o.encounter_id) + "," + std::to_string(o.position) + "," +
               to_string(o.phase) + "," + csv_field(o.probe_id) + "," + csv_field(o.display_value()) + "," +
               (o.score ? format_fixed(*o.score, 4) : std::string()) + "," + (o.parse_failed ? "true" : "false") +
               "\n";
    }
    return out;
}

void SessionStore::save(const DebugSession& session, SessionMeta meta) const {
    const auto dir = session_dir(session.id());
    const auto events = session.events();
    meta.session_id = session.id();
    meta.parent = session.parent();
    if (meta.parent) {
        const auto at = meta.parent->fork_at;
        std::size_t n = 0;
        while (n < events.size() && events[n].encounter < at) {
            ++n;
        }
        meta.prefix_events = n;
    } else {
        meta.prefix_events = 0;
    }
    std::string lines;
    for (std::size_t i = meta.prefix_events; i < events.size(); ++i) {
        lines += event_json(events[i]).dump();
        lines += '\n';
    }
    write_text_file_atomic(dir / "events.ndjson", lines);
    write_text_file_atomic(dir / "meta.json", meta_json(meta).dump(2) + "\n");
    write_text_file_atomic(dir / "observations.csv", observations_csv(session.state().observations));
    write_text_file_atomic(dir / "ledger.json", session.ledger().to_json().dump(2) + "\n");
    std::string emr;
    for (const auto& r : session.state().emr.records()) {
        emr += record_json(r).dump();
        emr += '\n';
    }
    write_text_file_atomic(emr_path(session.id()), emr);
}

SessionMeta SessionStore::load_meta(const std::string& id) const {
    const auto path = session_dir(id) / "meta.json";
    if (!fs::exists(path)) {
        throw SessionError(SessionError::Code::NotFound, "no stored session '" + id + "'");
    }
    try {
        return meta_from_json(json::parse(read_text_file(path)));
    } catch (const json::exception& e) {
        throw Error("unreadable " + path.string() + ": " + e.what());
    }
}

std::vector<Event> SessionStore::load_events(const std::string& id) const {
    const auto meta = load_meta(id);
    std::vector<Event> out;
    if (meta.parent) {
        auto parent = load_events(meta.parent->session_id);
        for (auto& e : parent) {
            if (e.encounter >= meta.parent->fork_at) {
                break;
            }
            out.push_back(std::move(e));
        }
        if (out.size() != meta.prefix_events) {
            throw Error("session '" + id + "' expects " + std::to_string(meta.prefix_events) +
                        " parent events but the parent provides " + std::to_string(out.size()));
        }
    }
    const auto own = EventLog::parse_ndjson(read_text_file(session_dir(id) / "events.ndjson"), out.size());
    out.insert(out.end(), own.begin(), own.end());
    return out;
}

std::unique_ptr<DebugSession> SessionStore::restore(const std::string& id, std::shared_ptr<const Scenario> scenario,
                                                    std::shared_ptr<const Gateway> gateway,
                                                    EngineOptions options) const {
    const auto meta = load_meta(id);
    const auto events = load_events(id);
    auto session = DebugSession::redrive(std::move(scenario), std::move(gateway), id, std::move(options), events);
    session->set_parent(meta.parent);
    session->adopt_display_times(events);
    return session;
}

}  // namespace whai
