#pragma once

// Trial protocol engine: phase machine, gaze-to-cell triggering, scoring of
// drawn responses and a JSON-lines event log that can be replayed.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "echotrain/analytics.hpp"
#include "echotrain/errors.hpp"
#include "echotrain/gaze.hpp"
#include "echotrain/geometry.hpp"

namespace echotrain::session {

using analytics::Condition;
using geometry::ShapeMask;
using geometry::TargetSpec;

enum class Phase { idle, sensing, drawing, scored, finished };

inline std::string_view to_string(Phase p)
{
    switch (p) {
    case Phase::idle: return "idle";
    case Phase::sensing: return "sensing";
    case Phase::drawing: return "drawing";
    case Phase::scored: return "scored";
    case Phase::finished: return "finished";
    }
    return "idle";
}

inline Phase parse_phase(std::string_view s)
{
    for (auto p : {Phase::idle, Phase::sensing, Phase::drawing, Phase::scored, Phase::finished}) {
        if (to_string(p) == s) {
            return p;
        }
    }
    throw ParseError("unknown phase '" + std::string(s) + "'", 0);
}

struct RetriggerPolicy {
    enum class Kind { on_cell_change, on_dwell };
    Kind kind = Kind::on_cell_change;
    /// Repeat interval while dwelling on one cell (on_dwell only).
    double dwell_ms = 250.0;
};

struct ProtocolConfig {
    std::vector<std::string> training_trials;
    std::vector<std::string> test_trials;
    bool feedback_in_training = true;
    double pog_rate_hint = 150.0;
    RetriggerPolicy retrigger{};
    /// cols/rows of zero take the catalog's mask dimensions.
    GridLayout layout{0, 0, 0.0, 0.0, 1.0, 1.0};
    analytics::ShapeOptions shape{};

    std::size_t trial_count() const { return training_trials.size() + test_trials.size(); }
};

inline nlohmann::json to_json(const ProtocolConfig& c)
{
    return {
        {"training_trials", c.training_trials},
        {"test_trials", c.test_trials},
        {"feedback_in_training", c.feedback_in_training},
        {"pog_rate_hint_hz", c.pog_rate_hint},
        {"retrigger_policy", c.retrigger.kind == RetriggerPolicy::Kind::on_cell_change ? "on_cell_change" : "on_dwell"},
        {"retrigger_dwell_ms", c.retrigger.dwell_ms},
        {"layout",
         {{"cols", c.layout.cols},
          {"rows", c.layout.rows},
          {"left", c.layout.left},
          {"top", c.layout.top},
          {"width", c.layout.width},
          {"height", c.layout.height}}},
        {"shape_metric", analytics::to_string(c.shape.metric)},
        {"moment_source", analytics::to_string(c.shape.source)},
        {"match_threshold", c.shape.threshold},
    };
}

/// Missing keys keep the values in `base`.
inline ProtocolConfig protocol_from_json(const nlohmann::json& j, ProtocolConfig base = {})
{
    try {
        if (!j.is_object()) {
            throw ConfigError("protocol config must be a JSON object");
        }
        auto c = base;
        c.training_trials = j.value("training_trials", c.training_trials);
        c.test_trials = j.value("test_trials", c.test_trials);
        c.feedback_in_training = j.value("feedback_in_training", c.feedback_in_training);
        c.pog_rate_hint = j.value("pog_rate_hint_hz", c.pog_rate_hint);
        if (j.contains("retrigger_policy")) {
            auto p = j.at("retrigger_policy").get<std::string>();
            if (p == "on_cell_change") {
                c.retrigger.kind = RetriggerPolicy::Kind::on_cell_change;
            } else if (p == "on_dwell") {
                c.retrigger.kind = RetriggerPolicy::Kind::on_dwell;
            } else {
                throw ConfigError("unknown retrigger_policy '" + p + "'");
            }
        }
        c.retrigger.dwell_ms = j.value("retrigger_dwell_ms", c.retrigger.dwell_ms);
        if (j.contains("layout")) {
            const auto& l = j.at("layout");
            c.layout.cols = l.value("cols", c.layout.cols);
            c.layout.rows = l.value("rows", c.layout.rows);
            c.layout.left = l.value("left", c.layout.left);
            c.layout.top = l.value("top", c.layout.top);
            c.layout.width = l.value("width", c.layout.width);
            c.layout.height = l.value("height", c.layout.height);
        }
        if (j.contains("shape_metric")) {
            c.shape.metric = analytics::parse_metric(j.at("shape_metric").get<std::string>());
        }
        if (j.contains("moment_source")) {
            c.shape.source = analytics::parse_source(j.at("moment_source").get<std::string>());
        }
        c.shape.threshold = j.value("match_threshold", c.shape.threshold);
        return c;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("invalid protocol config: ") + e.what());
    }
}

using Catalog = std::map<std::string, TargetSpec>;

struct Trial {
    std::size_t index = 0;
    std::string target_id;
    bool training = false;
    Condition condition = Condition::training;
};

struct TriggerEvent {
    double t = 0.0;
    std::size_t cell = 0;
    std::string asset;
};

struct TrialResult {
    std::size_t trial = 0;
    std::string target_id;
    Condition condition = Condition::training;
    bool training = false;
    double difference = 0.0;
    bool matched = false;
    double sensing_time = 0.0;
    double edge_dwell_fraction = 0.0;
    /// The true mask, present only on training trials with feedback enabled.
    std::optional<ShapeMask> feedback;
};

inline std::string asset_ref(const std::string& target, std::size_t cell)
{
    return "/assets/" + target + "/" + std::to_string(cell) + ".wav";
}

/// Expands the trial queue (training then test). Test trials on a target that
/// also appears in the training list are test_trained.
inline std::vector<Trial> build_trials(const ProtocolConfig& c)
{
    std::vector<Trial> out;
    std::set<std::string> trained(c.training_trials.begin(), c.training_trials.end());
    for (const auto& id : c.training_trials) {
        out.push_back({out.size(), id, true, Condition::training});
    }
    for (const auto& id : c.test_trials) {
        out.push_back(
            {out.size(), id, false, trained.contains(id) ? Condition::test_trained : Condition::test_untrained});
    }
    return out;
}

/// Checks the config against the catalog and fills in layout dimensions.
inline ProtocolConfig resolve_protocol(ProtocolConfig c, const Catalog& catalog)
{
    if (c.training_trials.empty() && c.test_trials.empty()) {
        throw ConfigError("protocol has no trials");
    }
    std::vector<std::string> unknown;
    std::optional<std::pair<std::size_t, std::size_t>> dims;
    for (const auto& t : build_trials(c)) {
        auto it = catalog.find(t.target_id);
        if (it == catalog.end()) {
            if (std::find(unknown.begin(), unknown.end(), t.target_id) == unknown.end()) {
                unknown.push_back(t.target_id);
            }
            continue;
        }
        std::pair<std::size_t, std::size_t> d{it->second.mask.cols(), it->second.mask.rows()};
        if (dims && *dims != d) {
            throw ConfigError("target '" + t.target_id + "' grid " + std::to_string(d.first) + "x" +
                              std::to_string(d.second) + " differs from the session grid " +
                              std::to_string(dims->first) + "x" + std::to_string(dims->second));
        }
        dims = d;
    }
    if (!unknown.empty()) {
        std::string list;
        for (const auto& u : unknown) {
            list += (list.empty() ? "" : ", ") + u;
        }
        throw NotFoundError("unknown target(s): " + list);
    }
    if (c.layout.cols == 0 && c.layout.rows == 0) {
        c.layout.cols = dims->first;
        c.layout.rows = dims->second;
    }
    if (c.layout.cols != dims->first || c.layout.rows != dims->second) {
        throw ConfigError("layout grid does not match the target masks");
    }
    c.layout.validate();
    if (c.retrigger.kind == RetriggerPolicy::Kind::on_dwell && !(c.retrigger.dwell_ms > 0.0)) {
        throw ConfigError("retrigger_dwell_ms must be positive");
    }
    if (!(c.shape.threshold > 0.0)) {
        throw ConfigError("match_threshold must be positive");
    }
    return c;
}

/// One trainee's session. Not thread-safe; callers serialize access.
///
/// Every operation accepts an explicit timestamp (seconds since session
/// start). Without one the session clock is used, clamped so time never runs
/// backwards.
class SessionEngine {
public:
    using Clock = std::function<double()>;
    using Sink = std::function<void(const std::string& line)>;

    SessionEngine(std::string id, const ProtocolConfig& config, const Catalog& catalog, Clock clock = {},
                  Sink sink = {})
        : id_(std::move(id)), config_(resolve_protocol(config, catalog)), trials_(build_trials(config_)),
          clock_(std::move(clock)), sink_(std::move(sink))
    {
        for (const auto& t : trials_) {
            targets_.emplace(t.target_id, catalog.at(t.target_id));
        }
        if (!clock_) {
            auto start = std::chrono::steady_clock::now();
            clock_ = [start] {
                return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
            };
        }
        record({{"type", "created"}, {"t", 0.0}, {"session_id", id_}, {"config", to_json(config_)}});
    }

    const std::string& id() const { return id_; }
    const ProtocolConfig& config() const { return config_; }
    Phase phase() const { return phase_; }
    std::size_t trial_index() const { return trial_; }
    const std::vector<Trial>& trials() const { return trials_; }
    const Trial& current_trial() const { return trials_.at(std::min(trial_, trials_.size() - 1)); }
    const std::vector<GazeSample>& gaze_log() const { return gaze_; }
    const std::vector<TriggerEvent>& trigger_log() const { return triggers_; }
    const std::vector<TrialResult>& results() const { return results_; }
    std::optional<double> sensing_start() const { return sensing_start_; }
    std::optional<double> sensing_end() const { return sensing_end_; }
    const std::vector<std::string>& log_lines() const { return log_; }

    std::string export_log() const
    {
        std::string out;
        for (const auto& l : log_) {
            out += l;
            out += '\n';
        }
        return out;
    }

    /// Idle -> Sensing.
    const Trial& begin(std::optional<double> t = {})
    {
        expect(Phase::idle, "begin");
        double now = advance(t);
        gaze_.clear();
        triggers_.clear();
        last_cell_.reset();
        sensing_start_ = now;
        sensing_end_.reset();
        set_phase(Phase::sensing, now);
        return trials_[trial_];
    }

    std::optional<TriggerEvent> ingest_gaze(const GazeSample& s)
    {
        expect(Phase::sensing, "gaze");
        if (!std::isfinite(s.t)) {
            throw ValidationError("gaze timestamp must be finite");
        }
        advance(s.t);
        gaze_.push_back(s);
        record({{"type", "gaze"}, {"t", s.t}, {"trial", trial_}, {"x", s.x}, {"y", s.y}, {"valid", s.valid}});

        auto cell = map_pog_to_cell(s, config_.layout);
        bool fire = false;
        if (cell) {
            if (cell != last_cell_) {
                fire = true;
            } else if (config_.retrigger.kind == RetriggerPolicy::Kind::on_dwell &&
                       (s.t - last_trigger_t_) * 1000.0 >= config_.retrigger.dwell_ms) {
                fire = true;
            }
        }
        last_cell_ = cell;
        if (!fire) {
            return std::nullopt;
        }
        TriggerEvent ev{s.t, *cell, asset_ref(trials_[trial_].target_id, *cell)};
        last_trigger_t_ = s.t;
        triggers_.push_back(ev);
        record({{"type", "trigger"}, {"t", ev.t}, {"trial", trial_}, {"cell", ev.cell}, {"asset", ev.asset}});
        return ev;
    }

    /// Sensing -> Drawing; returns the sensing time.
    double end_sensing(std::optional<double> t = {})
    {
        expect(Phase::sensing, "end_sensing");
        double now = advance(t);
        sensing_end_ = now;
        set_phase(Phase::drawing, now);
        return now - *sensing_start_;
    }

    /// Drawing -> Scored -> Idle (or Finished after the last trial).
    TrialResult submit_drawing(const ShapeMask& drawing, std::optional<double> t = {})
    {
        expect(Phase::drawing, "drawing");
        if (drawing.cols() != config_.layout.cols || drawing.rows() != config_.layout.rows) {
            throw ValidationError("drawing is " + std::to_string(drawing.cols()) + "x" +
                                  std::to_string(drawing.rows()) + ", session grid is " +
                                  std::to_string(config_.layout.cols) + "x" + std::to_string(config_.layout.rows));
        }
        if (drawing.count() == 0) {
            throw ValidationError("drawing must contain at least one cell");
        }
        double now = advance(t);
        const Trial& trial = trials_[trial_];
        const TargetSpec& target = targets_.at(trial.target_id);
        auto score = analytics::shape_difference(drawing, target.mask, config_.shape);

        TrialResult r;
        r.trial = trial_;
        r.target_id = trial.target_id;
        r.condition = trial.condition;
        r.training = trial.training;
        r.difference = score.value;
        r.matched = analytics::classify_match(score);
        r.sensing_time = *sensing_end_ - *sensing_start_;
        r.edge_dwell_fraction = analytics::edge_dwell_fraction(gaze_, target.mask, config_.layout);
        if (trial.training && config_.feedback_in_training) {
            r.feedback = target.mask;
        }
        results_.push_back(r);
        record({{"type", "result"},
                {"t", now},
                {"trial", trial_},
                {"target", r.target_id},
                {"condition", analytics::to_string(r.condition)},
                {"training", r.training},
                {"difference", r.difference},
                {"matched", r.matched},
                {"sensing_time", r.sensing_time},
                {"edge_dwell_fraction", r.edge_dwell_fraction},
                {"drawing", drawing.to_text()}});
        set_phase(Phase::scored, now);
        if (trial_ + 1 < trials_.size()) {
            ++trial_;
            set_phase(Phase::idle, now);
        } else {
            set_phase(Phase::finished, now);
        }
        return r;
    }

    /// Observer for phase changes (used by the network layer).
    void on_phase(std::function<void(Phase, std::size_t trial)> f) { phase_listener_ = std::move(f); }

private:
    void expect(Phase want, const char* op) const
    {
        if (phase_ != want) {
            throw ProtocolError(std::string(op) + " is not allowed in phase " + std::string(to_string(phase_)) +
                                " (expected " + std::string(to_string(want)) + ")");
        }
    }

    double advance(std::optional<double> t)
    {
        double now = t ? *t : std::max(clock_(), last_t_);
        if (!std::isfinite(now) || now < last_t_) {
            throw ValidationError("timestamp " + std::to_string(now) + " precedes the previous event at " +
                                  std::to_string(last_t_));
        }
        last_t_ = now;
        return now;
    }

    void set_phase(Phase p, double t)
    {
        phase_ = p;
        record({{"type", "phase"}, {"t", t}, {"trial", trial_}, {"phase", to_string(p)}});
        if (phase_listener_) {
            phase_listener_(p, trial_);
        }
    }

    void record(const nlohmann::json& j)
    {
        log_.push_back(j.dump());
        if (sink_) {
            sink_(log_.back());
        }
    }

    std::string id_;
    ProtocolConfig config_;
    std::vector<Trial> trials_;
    std::map<std::string, TargetSpec> targets_;
    Clock clock_;
    Sink sink_;
    std::function<void(Phase, std::size_t)> phase_listener_;

    Phase phase_ = Phase::idle;
    std::size_t trial_ = 0;
    double last_t_ = 0.0;
    std::optional<double> sensing_start_;
    std::optional<double> sensing_end_;
    std::optional<std::size_t> last_cell_;
    double last_trigger_t_ = 0.0;
    std::vector<GazeSample> gaze_;
    std::vector<TriggerEvent> triggers_;
    std::vector<TrialResult> results_;
    std::vector<std::string> log_;
};

// ---------------------------------------------------------------------------
// Logs

inline std::vector<nlohmann::json> parse_log(std::string_view text)
{
    std::vector<nlohmann::json> out;
    std::size_t pos = 0, line = 0;
    while (pos < text.size()) {
        auto end = text.find('\n', pos);
        if (end == std::string_view::npos) {
            end = text.size();
        }
        auto l = text.substr(pos, end - pos);
        ++line;
        if (!l.empty() && l.find_first_not_of(" \t\r") != std::string_view::npos) {
            try {
                out.push_back(nlohmann::json::parse(l));
            } catch (const nlohmann::json::exception& e) {
                throw ParseError("log line " + std::to_string(line) + ": " + e.what(), pos);
            }
        }
        pos = end + 1;
    }
    return out;
}

inline ProtocolConfig config_from_log(const std::vector<nlohmann::json>& records)
{
    if (records.empty() || records.front().value("type", "") != "created") {
        throw ParseError("log does not start with a created record", 0);
    }
    return protocol_from_json(records.front().at("config"));
}

/// Re-drives a fresh engine with the logged user actions (begin, gaze,
/// end_sensing, drawing) and returns it; its log can be compared with the
/// original.
inline SessionEngine replay(std::string_view log_text, const Catalog& catalog, std::string id = "replay")
{
    auto records = parse_log(log_text);
    SessionEngine e(std::move(id), config_from_log(records), catalog, [] { return 0.0; });
    try {
        for (std::size_t i = 1; i < records.size(); ++i) {
            const auto& r = records[i];
            auto type = r.at("type").get<std::string>();
            double t = r.at("t").get<double>();
            if (type == "phase") {
                auto p = parse_phase(r.at("phase").get<std::string>());
                if (p == Phase::sensing) {
                    e.begin(t);
                } else if (p == Phase::drawing) {
                    e.end_sensing(t);
                }
            } else if (type == "gaze") {
                e.ingest_gaze({t, r.at("x").get<double>(), r.at("y").get<double>(), r.at("valid").get<bool>()});
            } else if (type == "result") {
                e.submit_drawing(ShapeMask::from_text(r.at("drawing").get<std::string>()), t);
            }
        }
    } catch (const nlohmann::json::exception& ex) {
        throw ParseError(std::string("malformed log record: ") + ex.what(), 0);
    }
    return e;
}

/// Log lines with the session id blanked, for comparing runs.
inline std::vector<std::string> comparable_log(std::string_view log_text)
{
    std::vector<std::string> out;
    for (auto r : parse_log(log_text)) {
        if (r.value("type", "") == "created") {
            r["session_id"] = "";
        }
        out.push_back(r.dump());
    }
    return out;
}

inline std::vector<std::string> trigger_lines(std::string_view log_text)
{
    std::vector<std::string> out;
    for (const auto& r : parse_log(log_text)) {
        if (r.value("type", "") == "trigger") {
            out.push_back(r.dump());
        }
    }
    return out;
}

/// Trial rows for reporting, recovered from a session log.
inline std::vector<analytics::TrialRecord> trial_records(std::string_view log_text)
{
    auto records = parse_log(log_text);
    std::string sid = records.empty() ? "" : records.front().value("session_id", "");
    std::vector<analytics::TrialRecord> out;
    for (const auto& r : records) {
        if (r.value("type", "") != "result") {
            continue;
        }
        try {
            analytics::TrialRecord t;
            t.session = sid;
            t.trial = r.at("trial").get<std::size_t>();
            t.condition = analytics::parse_condition(r.at("condition").get<std::string>());
            t.target = r.at("target").get<std::string>();
            t.difference = r.at("difference").get<double>();
            t.matched = r.at("matched").get<bool>();
            t.sensing_time = r.at("sensing_time").get<double>();
            t.edge_dwell_fraction = r.at("edge_dwell_fraction").get<double>();
            out.push_back(t);
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(std::string("malformed result record: ") + e.what(), 0);
        }
    }
    return out;
}

/// Gaze samples of one trial, recovered from a session log.
inline std::vector<GazeSample> trial_gaze(std::string_view log_text, std::size_t trial)
{
    std::vector<GazeSample> out;
    for (const auto& r : parse_log(log_text)) {
        if (r.value("type", "") == "gaze" && r.value("trial", std::size_t{0}) == trial) {
            out.push_back({r.at("t").get<double>(), r.at("x").get<double>(), r.at("y").get<double>(),
                           r.at("valid").get<bool>()});
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Registry of live sessions

class SessionManager {
public:
    /// Returns the ids of targets whose banks or assets are missing.
    using AssetCheck = std::function<std::vector<std::string>(const std::vector<std::string>& target_ids)>;

    SessionManager(Catalog catalog, ProtocolConfig defaults, AssetCheck check = {},
                   std::filesystem::path log_dir = {})
        : catalog_(std::move(catalog)), defaults_(std::move(defaults)), check_(std::move(check)),
          log_dir_(std::move(log_dir))
    {
    }

    const Catalog& catalog() const { return catalog_; }
    const ProtocolConfig& defaults() const { return defaults_; }

    /// Creates a session; missing keys in `overrides` come from the defaults.
    std::string create(const nlohmann::json& overrides = nlohmann::json::object())
    {
        std::lock_guard lock(mutex_);
        auto config = resolve_protocol(protocol_from_json(overrides, defaults_), catalog_);
        if (check_) {
            std::vector<std::string> ids;
            for (const auto& t : build_trials(config)) {
                if (std::find(ids.begin(), ids.end(), t.target_id) == ids.end()) {
                    ids.push_back(t.target_id);
                }
            }
            auto missing = check_(ids);
            if (!missing.empty()) {
                std::string list;
                for (const auto& m : missing) {
                    list += (list.empty() ? "" : ", ") + m;
                }
                throw NotFoundError("missing bank or assets for target(s): " + list);
            }
        }
        auto id = new_id();
        SessionEngine::Sink sink;
        if (!log_dir_.empty()) {
            std::filesystem::create_directories(log_dir_);
            auto file = std::make_shared<std::ofstream>(log_dir_ / (id + ".jsonl"), std::ios::app);
            if (!*file) {
                throw IoError("cannot open session log in " + log_dir_.string());
            }
            sink = [file](const std::string& line) {
                *file << line << '\n';
                file->flush();
            };
        }
        sessions_.emplace(id, std::make_unique<SessionEngine>(id, config, catalog_, SessionEngine::Clock{}, sink));
        return id;
    }

    /// Runs f with exclusive access to the session.
    template <typename F>
    auto with(const std::string& id, F&& f)
    {
        std::lock_guard lock(mutex_);
        auto it = sessions_.find(id);
        if (it == sessions_.end()) {
            throw NotFoundError("unknown session '" + id + "'");
        }
        return f(*it->second);
    }

    std::size_t size() const
    {
        std::lock_guard lock(mutex_);
        return sessions_.size();
    }

private:
    std::string new_id()
    {
        static constexpr char digits[] = "0123456789abcdef";
        std::string id;
        do {
            id.clear();
            for (int i = 0; i < 16; ++i) {
                id += digits[rng_() & 15];
            }
        } while (sessions_.contains(id));
        return id;
    }

    Catalog catalog_;
    ProtocolConfig defaults_;
    AssetCheck check_;
    std::filesystem::path log_dir_;
    mutable std::mutex mutex_;
    std::map<std::string, std::unique_ptr<SessionEngine>> sessions_;
    std::mt19937_64 rng_{std::random_device{}()};
};

} // namespace echotrain::session
