#pragma once

// Scenario files (simulation, head, placement, stimulus) and the workspace
// directory layout with its target catalog.
//
// All physical quantities carry their unit in the key name.

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "echotrain/bytes.hpp"
#include "echotrain/errors.hpp"
#include "echotrain/fdtd.hpp"
#include "echotrain/geometry.hpp"
#include "echotrain/irbank.hpp"
#include "echotrain/session.hpp"
#include "echotrain/stl.hpp"
#include "echotrain/synth.hpp"

namespace echotrain::config {

using geometry::Vec3;
using nlohmann::json;

struct HeadConfig {
    /// Empty selects the parametric sphere.
    std::string stl;
    geometry::HeadParams sphere{};
    Vec3 mouth{};
    Vec3 ear_left{};
    Vec3 ear_right{};
    Vec3 mouth_dir{};
    Vec3 ear_left_dir{};
    Vec3 ear_right_dir{};
};

struct Scenario {
    fdtd::SimConfig sim{};
    HeadConfig head{};
    double distance = 1.0;        // mouth to panel front face, m
    double panel_thickness = 0.0; // m; 0 = two grid spacings
    double standoff_cells = 2.0;
    bool remove_direct = true;
    std::string source = "impulse"; // impulse | gaussian
    int threads = 1;
    synth::ChirpParams chirp{};
    synth::BuzzParams buzz{};
    /// Directory relative paths are resolved against.
    std::filesystem::path base_dir;

    void validate() const
    {
        sim.validate();
        if (!(distance > 0.0)) {
            throw ConfigError("distance_m must be positive");
        }
        if (panel_thickness < 0.0 || standoff_cells < 0.0) {
            throw ConfigError("panel_thickness_m and standoff_cells must be non-negative");
        }
        if (source != "impulse" && source != "gaussian") {
            throw ConfigError("source must be 'impulse' or 'gaussian'");
        }
        if (threads < 1) {
            throw ConfigError("threads must be at least 1");
        }
        chirp.validate();
        buzz.validate(chirp);
    }

    irbank::BankOptions bank_options() const
    {
        irbank::BankOptions o;
        o.standoff_cells = standoff_cells;
        o.remove_direct = remove_direct;
        o.threads = threads;
        if (source == "gaussian") {
            o.source_signal = fdtd::gaussian_pulse(sim).samples;
        }
        return o;
    }
};

inline json vec_json(const Vec3& v) { return json::array({v.x, v.y, v.z}); }

inline Vec3 vec_from(const json& j, const char* key)
{
    if (!j.is_array() || j.size() != 3) {
        throw ConfigError(std::string(key) + " must be an array of 3 numbers");
    }
    return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

inline json to_json(const Scenario& s)
{
    json head;
    if (s.head.stl.empty()) {
        head = {{"model", "sphere"},
                {"radius_m", s.head.sphere.radius},
                {"subdivision", s.head.sphere.subdivision},
                {"id", s.head.sphere.id}};
    } else {
        head = {{"stl", s.head.stl},
                {"mouth_m", vec_json(s.head.mouth)},
                {"ear_left_m", vec_json(s.head.ear_left)},
                {"ear_right_m", vec_json(s.head.ear_right)},
                {"mouth_dir", vec_json(s.head.mouth_dir)},
                {"ear_left_dir", vec_json(s.head.ear_left_dir)},
                {"ear_right_dir", vec_json(s.head.ear_right_dir)}};
    }
    return {
        {"sim",
         {{"sound_speed_m_per_s", s.sim.sound_speed},
          {"spacing_m", s.sim.spacing},
          {"cfl", s.sim.cfl},
          {"domain_extent_m", vec_json(s.sim.domain_extent)},
          {"pml_layers", s.sim.pml_layers},
          {"pml_peak_damping_per_s", s.sim.pml_peak_damping},
          {"duration_s", s.sim.duration}}},
        {"head", head},
        {"placement", {{"distance_m", s.distance}, {"panel_thickness_m", s.panel_thickness}}},
        {"bank",
         {{"standoff_cells", s.standoff_cells},
          {"remove_direct", s.remove_direct},
          {"source", s.source},
          {"threads", s.threads}}},
        {"stimulus",
         {{"chirp",
           {{"f_start_hz", s.chirp.f_start},
            {"f_end_hz", s.chirp.f_end},
            {"duration_s", s.chirp.duration},
            {"sample_rate_hz", s.chirp.sample_rate},
            {"amplitude", s.chirp.amplitude}}},
          {"buzz", {{"repeat_count", s.buzz.repeat_count}, {"onset_interval_s", s.buzz.onset_interval}}}}},
    };
}

/// Missing sections and keys keep their defaults.
inline Scenario scenario_from_json(const json& j, std::filesystem::path base_dir = {})
{
    Scenario s;
    s.base_dir = std::move(base_dir);
    try {
        if (!j.is_object()) {
            throw ConfigError("scenario must be a JSON object");
        }
        auto section = [&](const char* name) { return j.contains(name) ? j.at(name) : json::object(); };
        auto sim = section("sim");
        s.sim.sound_speed = sim.value("sound_speed_m_per_s", s.sim.sound_speed);
        s.sim.spacing = sim.value("spacing_m", s.sim.spacing);
        s.sim.cfl = sim.value("cfl", s.sim.cfl);
        if (sim.contains("domain_extent_m")) {
            s.sim.domain_extent = vec_from(sim.at("domain_extent_m"), "domain_extent_m");
        }
        s.sim.pml_layers = sim.value("pml_layers", s.sim.pml_layers);
        s.sim.pml_peak_damping = sim.value("pml_peak_damping_per_s", s.sim.pml_peak_damping);
        s.sim.duration = sim.value("duration_s", s.sim.duration);

        auto head = section("head");
        s.head.stl = head.value("stl", std::string{});
        s.head.sphere.radius = head.value("radius_m", s.head.sphere.radius);
        s.head.sphere.subdivision = head.value("subdivision", s.head.sphere.subdivision);
        s.head.sphere.id = head.value("id", s.head.sphere.id);
        if (!s.head.stl.empty()) {
            for (const char* k : {"mouth_m", "ear_left_m", "ear_right_m"}) {
                if (!head.contains(k)) {
                    throw ConfigError(std::string("STL head needs ") + k);
                }
            }
            s.head.mouth = vec_from(head.at("mouth_m"), "mouth_m");
            s.head.ear_left = vec_from(head.at("ear_left_m"), "ear_left_m");
            s.head.ear_right = vec_from(head.at("ear_right_m"), "ear_right_m");
            if (head.contains("mouth_dir")) s.head.mouth_dir = vec_from(head.at("mouth_dir"), "mouth_dir");
            if (head.contains("ear_left_dir")) s.head.ear_left_dir = vec_from(head.at("ear_left_dir"), "ear_left_dir");
            if (head.contains("ear_right_dir")) s.head.ear_right_dir = vec_from(head.at("ear_right_dir"), "ear_right_dir");
        }

        auto place = section("placement");
        s.distance = place.value("distance_m", s.distance);
        s.panel_thickness = place.value("panel_thickness_m", s.panel_thickness);

        auto bank = section("bank");
        s.standoff_cells = bank.value("standoff_cells", s.standoff_cells);
        s.remove_direct = bank.value("remove_direct", s.remove_direct);
        s.source = bank.value("source", s.source);
        s.threads = bank.value("threads", s.threads);

        auto stim = section("stimulus");
        auto chirp = stim.contains("chirp") ? stim.at("chirp") : json::object();
        s.chirp.f_start = chirp.value("f_start_hz", s.chirp.f_start);
        s.chirp.f_end = chirp.value("f_end_hz", s.chirp.f_end);
        s.chirp.duration = chirp.value("duration_s", s.chirp.duration);
        s.chirp.sample_rate = chirp.value("sample_rate_hz", s.chirp.sample_rate);
        s.chirp.amplitude = chirp.value("amplitude", s.chirp.amplitude);
        auto buzz = stim.contains("buzz") ? stim.at("buzz") : json::object();
        s.buzz.repeat_count = buzz.value("repeat_count", s.buzz.repeat_count);
        s.buzz.onset_interval = buzz.value("onset_interval_s", s.buzz.onset_interval);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("invalid scenario: ") + e.what());
    }
    return s;
}

inline Scenario load_scenario(const std::filesystem::path& path)
{
    json j;
    try {
        j = json::parse(read_text_file(path));
    } catch (const json::parse_error& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
    return scenario_from_json(j, path.parent_path());
}

inline geometry::HeadModel build_head(const Scenario& s)
{
    if (s.head.stl.empty()) {
        return geometry::build_head_model(s.head.sphere);
    }
    std::filesystem::path p = s.head.stl;
    if (p.is_relative() && !s.base_dir.empty()) {
        p = s.base_dir / p;
    }
    auto bytes = read_file(p);
    geometry::HeadModel h;
    h.mesh = geometry::parse_stl(bytes, p.stem().string());
    h.mesh.validate();
    h.id = p.stem().string();
    h.mouth = s.head.mouth;
    h.ear_left = s.head.ear_left;
    h.ear_right = s.head.ear_right;
    h.mouth_dir = s.head.mouth_dir;
    h.ear_left_dir = s.head.ear_left_dir;
    h.ear_right_dir = s.head.ear_right_dir;
    return h;
}

/// Desk-scale scenario: 1 cm lattice, 0.64 m cube, 8 PML layers, target 0.15 m
/// ahead of the mouth.
inline Scenario desk_scenario()
{
    Scenario s;
    s.sim.spacing = 0.01;
    s.sim.domain_extent = {0.64, 0.64, 0.64};
    s.sim.pml_layers = 8;
    s.distance = 0.15;
    s.head.sphere.subdivision = 2;
    return s;
}

// ---------------------------------------------------------------------------
// Targets

struct DefaultTarget {
    const char* id;
    geometry::TargetRole role;
    const char* mask;
};

/// Built-in 5x5 silhouettes: eight trained, five untrained.
inline const std::vector<DefaultTarget>& default_targets()
{
    using geometry::TargetRole;
    static const std::vector<DefaultTarget> t = {
        {"T01", TargetRole::trained, ".....\n#####\n#####\n#####\n.....\n"},   // rectangle
        {"T02", TargetRole::trained, "#....\n#....\n#....\n#....\n#####\n"},   // L
        {"T03", TargetRole::trained, "#####\n..#..\n..#..\n..#..\n..#..\n"},   // T
        {"T04", TargetRole::trained, "..#..\n..#..\n#####\n..#..\n..#..\n"},   // cross
        {"T05", TargetRole::trained, "#....\n##...\n###..\n####.\n#####\n"},   // staircase
        {"T06", TargetRole::trained, "#...#\n#...#\n#...#\n#...#\n#####\n"},   // U
        {"T07", TargetRole::trained, "#####\n#....\n#####\n....#\n#####\n"},   // S
        {"T08", TargetRole::trained, "#...#\n#...#\n#####\n#...#\n#...#\n"},   // H
        {"N01", TargetRole::untrained, "#####\n#...#\n#...#\n#...#\n#####\n"}, // ring
        {"N02", TargetRole::untrained, "#####\n...#.\n..#..\n.#...\n#####\n"}, // Z
        {"N03", TargetRole::untrained, "..#..\n.###.\n#####\n..#..\n..#..\n"}, // arrow
        {"N04", TargetRole::untrained, "..#..\n.###.\n#####\n.###.\n..#..\n"}, // diamond
        {"N05", TargetRole::untrained, "#####\n#....\n####.\n#....\n#....\n"}, // F
    };
    return t;
}

inline session::ProtocolConfig default_protocol()
{
    session::ProtocolConfig c;
    c.training_trials = {"T01", "T02", "T03", "T04", "T05", "T06", "T07", "T08"};
    c.test_trials = {"T02", "N01", "T04", "N02", "N03", "T07", "N04"};
    return c;
}

inline session::Catalog default_catalog()
{
    session::Catalog c;
    for (const auto& d : default_targets()) {
        geometry::TargetSpec t;
        t.id = d.id;
        t.role = d.role;
        t.mask = geometry::ShapeMask::from_text(d.mask);
        c.emplace(t.id, t);
    }
    return c;
}

// ---------------------------------------------------------------------------
// Workspace

/// root/{targets,banks,assets,logs,reports}. targets/catalog.json lists the
/// targets; protocol.json and scenario.json sit at the root.
class Workspace {
public:
    explicit Workspace(std::filesystem::path root) : root_(std::move(root)) {}

    /// --root, else $ECHOTRAIN_ROOT, else the current directory.
    static Workspace locate(const std::string& flag = {})
    {
        if (!flag.empty()) {
            return Workspace(flag);
        }
        if (const char* env = std::getenv("ECHOTRAIN_ROOT"); env && *env) {
            return Workspace(env);
        }
        return Workspace(std::filesystem::current_path());
    }

    const std::filesystem::path& root() const { return root_; }
    std::filesystem::path targets() const { return root_ / "targets"; }
    std::filesystem::path banks() const { return root_ / "banks"; }
    std::filesystem::path assets() const { return root_ / "assets"; }
    std::filesystem::path logs() const { return root_ / "logs"; }
    std::filesystem::path reports() const { return root_ / "reports"; }
    std::filesystem::path catalog_file() const { return targets() / "catalog.json"; }
    std::filesystem::path protocol_file() const { return root_ / "protocol.json"; }
    std::filesystem::path scenario_file() const { return root_ / "scenario.json"; }
    std::filesystem::path bank_file(const std::string& id) const { return banks() / (id + ".eirb"); }
    std::filesystem::path asset_dir(const std::string& id) const { return assets() / id; }

    void ensure() const
    {
        for (const auto& d : {targets(), banks(), assets(), logs(), reports()}) {
            std::filesystem::create_directories(d);
        }
    }

    /// Writes the default catalog, protocol and desk scenario; existing files
    /// are kept unless overwrite is set. Returns the files written.
    std::vector<std::filesystem::path> init(bool overwrite = false) const
    {
        ensure();
        std::vector<std::filesystem::path> written;
        auto put = [&](const std::filesystem::path& p, const std::string& text) {
            if (!overwrite && std::filesystem::exists(p)) {
                return;
            }
            write_text_file(p, text);
            written.push_back(p);
        };
        json list = json::array();
        for (const auto& d : default_targets()) {
            put(targets() / (std::string(d.id) + ".mask"), d.mask);
            list.push_back({{"id", d.id},
                            {"mask", std::string(d.id) + ".mask"},
                            {"role", geometry::to_string(d.role)},
                            {"cell_size_m", geometry::default_cell_size}});
        }
        put(catalog_file(), json{{"targets", list}}.dump(2) + "\n");
        put(protocol_file(), session::to_json(default_protocol()).dump(2) + "\n");
        put(scenario_file(), to_json(desk_scenario()).dump(2) + "\n");
        return written;
    }

    session::Catalog load_catalog() const
    {
        if (!std::filesystem::exists(catalog_file())) {
            throw NotFoundError("no target catalog at " + catalog_file().string() + " (run 'echotrain init')");
        }
        session::Catalog c;
        try {
            auto j = json::parse(read_text_file(catalog_file()));
            for (const auto& e : j.at("targets")) {
                geometry::TargetSpec t;
                t.id = e.at("id").get<std::string>();
                auto role = e.value("role", std::string("trained"));
                if (role != "trained" && role != "untrained") {
                    throw ConfigError("target '" + t.id + "' has unknown role '" + role + "'");
                }
                t.role = role == "trained" ? geometry::TargetRole::trained : geometry::TargetRole::untrained;
                t.cell_size = e.value("cell_size_m", geometry::default_cell_size);
                t.panel_thickness = e.value("panel_thickness_m", 0.0);
                t.mask = geometry::ShapeMask::from_text(
                    read_text_file(targets() / e.value("mask", t.id + ".mask")));
                t.validate();
                c.emplace(t.id, t);
            }
        } catch (const json::exception& e) {
            throw ConfigError(catalog_file().string() + ": " + e.what());
        }
        return c;
    }

    geometry::TargetSpec target(const std::string& id) const
    {
        auto c = load_catalog();
        auto it = c.find(id);
        if (it == c.end()) {
            throw NotFoundError("unknown target '" + id + "'");
        }
        return it->second;
    }

    session::ProtocolConfig load_protocol() const
    {
        if (!std::filesystem::exists(protocol_file())) {
            return default_protocol();
        }
        try {
            return session::protocol_from_json(json::parse(read_text_file(protocol_file())), default_protocol());
        } catch (const json::parse_error& e) {
            throw ConfigError(protocol_file().string() + ": " + e.what());
        }
    }

    /// Ids among `ids` lacking a bank or a complete asset directory.
    std::vector<std::string> missing_assets(const std::vector<std::string>& ids) const
    {
        std::vector<std::string> out;
        auto catalog = load_catalog();
        for (const auto& id : ids) {
            auto it = catalog.find(id);
            bool ok = it != catalog.end() && std::filesystem::exists(bank_file(id));
            if (ok) {
                for (std::size_t c = 0; c < it->second.mask.size(); ++c) {
                    if (!std::filesystem::exists(asset_dir(id) / (std::to_string(c) + ".wav"))) {
                        ok = false;
                        break;
                    }
                }
            }
            if (!ok) {
                out.push_back(id);
            }
        }
        return out;
    }

private:
    std::filesystem::path root_;
};

} // namespace echotrain::config
