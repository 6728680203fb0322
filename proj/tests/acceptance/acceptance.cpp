// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fail.
// Usage: acceptance [criterion numbers...]

#include <chrono>
#include <cstdio>
#include <functional>
#include <numbers>
#include <random>
#include <set>
#include <sstream>
#include <thread>

#include <boost/asio.hpp>
#include <boost/beast.hpp>

#include "echotrain/cli.hpp"
#include "support.hpp"

using namespace echotrain;
using geometry::ShapeMask;
using geometry::Vec3;
using geometry::VoxelGrid;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = true;
    std::string detail;

    void require(bool ok, const std::string& what)
    {
        if (!ok) {
            pass = false;
            detail += (detail.empty() ? "" : "; ") + ("FAILED " + what);
        }
    }
    void note(const std::string& s) { detail += (detail.empty() ? "" : "; ") + s; }
};

std::string fmt(const char* f, auto... v)
{
    char buf[256];
    std::snprintf(buf, sizeof buf, f, v...);
    return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0)
{
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// World position of lattice coordinate (i, j, k); integers are voxel corners.
Vec3 lattice(const fdtd::SimConfig& c, double i, double j, double k)
{
    return {i * c.spacing, j * c.spacing, k * c.spacing};
}

fdtd::SimConfig cube(std::size_t n, double h, int pml)
{
    fdtd::SimConfig c;
    c.sound_speed = 344.0;
    c.cfl = 0.5;
    c.spacing = h;
    c.domain_extent = {static_cast<double>(n) * h, static_cast<double>(n) * h, static_cast<double>(n) * h};
    c.pml_layers = pml;
    return c;
}

// ---------------------------------------------------------------------------

// Six PML layers: sixteen would leave 32 interior cells, too few for a
// receiver 40 cells from the source.
Outcome free_field()
{
    Outcome o;
    auto t0 = std::chrono::steady_clock::now();
    auto c = cube(64, 0.005, 6);
    const double s = 10.5;
    c.source = lattice(c, s, 32.5, 32.5);
    c.receivers = {lattice(c, s + 20, 32.5, 32.5), lattice(c, s + 40, 32.5, 32.5)};
    auto pulse = fdtd::gaussian_pulse(c);
    c.duration = 240 * c.dt();
    auto tr = fdtd::run(VoxelGrid(c.grid()), c, pulse.samples);
    double secs = seconds_since(t0);

    double peaks[2];
    for (int r = 0; r < 2; ++r) {
        auto at = testsupport::argmax_abs(tr.traces[static_cast<std::size_t>(r)]);
        double arrival = static_cast<double>(at) - static_cast<double>(pulse.delay);
        double expect = (r + 1) * 0.1 / (c.sound_speed * c.dt());
        o.note(fmt("r%d arrival %.0f expected %.2f", r + 1, arrival, expect));
        o.require(std::abs(arrival - expect) <= 1.0, "arrival");
        peaks[r] = std::abs(tr.traces[static_cast<std::size_t>(r)][at]);
    }
    double ratio = peaks[0] / peaks[1];
    o.note(fmt("peak ratio %.3f", ratio));
    o.require(std::abs(ratio - 2.0) <= 0.2, "ratio 2 +/- 10%");
    o.note(fmt("%.1f s", secs));
    o.require(secs < 30.0, "runtime < 30 s");
    return o;
}

Outcome stability_and_determinism()
{
    Outcome o;
    auto c = cube(32, 0.01, 6);
    VoxelGrid scene(c.grid());
    for (std::size_t i = 14; i < 20; ++i) {
        for (std::size_t j = 10; j < 22; ++j) {
            for (std::size_t k = 12; k < 16; ++k) {
                scene.set(i, j, k);
            }
        }
    }
    c.source = lattice(c, 9.5, 15.5, 15.5);
    auto pulse = fdtd::gaussian_pulse(c);
    double source_peak = 0.0;
    for (double v : pulse.samples) {
        source_peak = std::max(source_peak, std::abs(v));
    }

    fdtd::Propagator<double> prop(scene, c);
    auto state = prop.make_state();
    auto src = prop.stencil_at(c.source, "source");
    double worst = 0.0;
    for (std::size_t n = 0; n < 10000; ++n) {
        if (n < pulse.samples.size()) {
            prop.inject(state, src, pulse.samples[n]);
        }
        prop.step(state);
        if (n % 10 == 0 || n + 1 == 10000) {
            worst = std::max(worst, prop.max_abs(state));
        }
    }
    o.note(fmt("10^4 steps max|p| %.3g (%.2fx source peak), final %.3g", worst, worst / source_peak,
               prop.max_abs(state)));
    o.require(std::isfinite(worst) && worst < 10.0 * source_peak, "bounded field");

    auto d = cube(48, 0.01, 8);
    VoxelGrid obstacle(d.grid());
    for (std::size_t i = 20; i < 30; ++i) {
        for (std::size_t j = 15; j < 33; ++j) {
            obstacle.set(i, j, 24);
        }
    }
    d.source = lattice(d, 12.3, 20.7, 22.1);
    d.receivers = {lattice(d, 35.5, 24.0, 24.0), lattice(d, 10.0, 38.2, 30.9), lattice(d, 24.0, 24.0, 30.0)};
    d.duration = 400 * d.dt();
    std::vector<std::vector<std::vector<double>>> runs;
    for (int threads : {1, 2, 8}) {
        fdtd::RunOptions opt;
        opt.threads = threads;
        runs.push_back(fdtd::run(obstacle, d, pulse.samples, opt).traces);
    }
    bool same = runs[0] == runs[1] && runs[0] == runs[2];
    o.note(same ? "traces bitwise identical for 1/2/8 threads" : "traces differ across threads");
    o.require(same, "determinism");
    return o;
}

Outcome pml_absorption()
{
    // Reflection = difference from a rigid box big enough that its own
    // reflections arrive after the window; incident = direct pulse energy.
    Outcome o;
    const std::size_t window = 300;
    auto c = cube(96, 0.005, 16);
    auto ref = cube(176, 0.005, 0);
    auto pulse = fdtd::gaussian_pulse(c);
    const std::array<std::array<double, 3>, 2> offsets{{{20, 0, 0}, {14, 14, 0}}};
    auto place = [&](fdtd::SimConfig& cfg, double centre) {
        cfg.source = lattice(cfg, centre + 0.5, centre + 0.5, centre + 0.5);
        cfg.receivers.clear();
        for (const auto& d : offsets) {
            cfg.receivers.push_back(lattice(cfg, centre + 0.5 + d[0], centre + 0.5 + d[1], centre + 0.5 + d[2]));
        }
        cfg.duration = static_cast<double>(window) * cfg.dt();
    };
    place(c, 48);
    place(ref, 88);
    auto a = fdtd::run(VoxelGrid(c.grid()), c, pulse.samples);
    auto b = fdtd::run(VoxelGrid(ref.grid()), ref, pulse.samples);
    for (std::size_t r = 0; r < offsets.size(); ++r) {
        double incident = 0.0, reflected = 0.0;
        for (std::size_t n = 0; n < window; ++n) {
            double e = a.traces[r][n] - b.traces[r][n];
            incident += b.traces[r][n] * b.traces[r][n];
            reflected += e * e;
        }
        double db = 10.0 * std::log10(reflected / incident);
        o.note(fmt("receiver %zu reflection %.1f dB", r, db));
        o.require(db <= -40.0, "reflection <= -40 dB");
    }
    return o;
}

Outcome image_source()
{
    Outcome o;
    fdtd::SimConfig c = cube(64, 0.005, 8);
    c.domain_extent = {64 * 0.005, 96 * 0.005, 96 * 0.005};
    const double d = 0.15;
    // Source on a voxel face, plate front face 30 cells further along x.
    c.source = lattice(c, 13.0, 48.5, 48.5);
    c.receivers = {c.source};
    auto pulse = fdtd::gaussian_pulse(c);
    c.duration = 260 * c.dt();
    VoxelGrid plate(c.grid());
    for (std::size_t i = 43; i < 46; ++i) {
        for (std::size_t j = 8; j < 88; ++j) {
            for (std::size_t k = 8; k < 88; ++k) {
                plate.set(i, j, k);
            }
        }
    }
    auto with = fdtd::run(plate, c, pulse.samples).traces[0];
    auto without = fdtd::run(VoxelGrid(c.grid()), c, pulse.samples).traces[0];
    std::vector<double> echo(with.size());
    for (std::size_t n = 0; n < echo.size(); ++n) {
        echo[n] = with[n] - without[n];
    }
    auto at = testsupport::argmax_abs(echo);
    double delay = static_cast<double>(at) - static_cast<double>(pulse.delay);
    double expect = 2.0 * d / (c.sound_speed * c.dt());
    o.note(fmt("echo delay %.0f samples, 2d/c = %.2f samples, sign %+d", delay, expect, echo[at] > 0 ? 1 : -1));
    o.require(std::abs(delay - expect) <= 1.0, "delay within 1 sample");
    o.require(echo[at] > 0.0, "rigid reflection keeps polarity");
    return o;
}

Outcome stimulus()
{
    Outcome o;
    synth::ChirpParams p;
    auto s = synth::linear_chirp(p);
    o.note(fmt("chirp %zu samples", s.size()));
    o.require(s.size() == 480, "480 samples");

    // Instantaneous frequency from successive zero crossings.
    std::vector<double> zc;
    for (std::size_t n = 0; n + 1 < s.size(); ++n) {
        if ((s[n] <= 0.0 && s[n + 1] > 0.0) || (s[n] >= 0.0 && s[n + 1] < 0.0)) {
            zc.push_back((static_cast<double>(n) + s[n] / (s[n] - s[n + 1])) / p.sample_rate);
        }
    }
    double worst = 0.0, first = 0.0, last = 0.0, t_first = 0.0, t_last = 0.0;
    for (std::size_t i = 0; i + 1 < zc.size(); ++i) {
        double tm = 0.5 * (zc[i] + zc[i + 1]);
        double f = 1.0 / (2.0 * (zc[i + 1] - zc[i]));
        double want = p.f_start + (p.f_end - p.f_start) * tm / p.duration;
        worst = std::max(worst, std::abs(f - want) / want);
        if (i == 0) {
            first = f;
            t_first = tm;
        }
        last = f;
        t_last = tm;
    }
    o.note(fmt("measured %.0f Hz at %.2f ms -> %.0f Hz at %.2f ms, worst deviation from the line %.2f%%", first,
               1e3 * t_first, last, 1e3 * t_last, 100 * worst));
    o.require(worst <= 0.02, "sweep within 2%");

    synth::BuzzParams b;
    auto buzz = synth::buzz_train(s, b, p.sample_rate);
    bool onsets = true;
    for (std::size_t n = 0; n < buzz.size(); ++n) {
        std::size_t k = n / 1440, off = n % 1440;
        double want = (k < 30 && off < s.size()) ? s[off] : 0.0;
        onsets = onsets && buzz[n] == want;
    }
    std::size_t end = buzz.size();
    while (end > 0 && buzz[end - 1] == 0.0) {
        --end;
    }
    double span = static_cast<double>(end) / p.sample_rate;
    o.note(fmt("30 chirps at k*1440, active span %.4f s", span));
    o.require(onsets, "onsets at k*1440");
    o.require(std::abs(span - 0.880) < 0.5 / p.sample_rate, "span 0.880 s");
    return o;
}

Outcome convolution()
{
    Outcome o;
    std::mt19937_64 rng(2024);
    std::normal_distribution<double> g;
    std::uniform_int_distribution<std::size_t> len(1, 3000);
    double worst = 0.0;
    for (int i = 0; i < 100; ++i) {
        std::size_t na = i == 0 ? 1024 : len(rng), nb = i == 0 ? 1024 : len(rng);
        std::vector<double> a(na), b(nb);
        for (auto& v : a) v = g(rng);
        for (auto& v : b) v = g(rng);
        auto fast = synth::convolve(a, b);
        auto ref = testsupport::direct_convolution(a, b);
        if (fast.size() != ref.size()) {
            o.require(false, "output length");
            return o;
        }
        worst = std::max(worst, testsupport::rms_diff(fast, ref) / testsupport::rms(ref));
    }
    o.note(fmt("100 cases, worst relative RMS %.2e", worst));
    o.require(worst <= 1e-9, "within 1e-9");
    return o;
}

Outcome hu_matching()
{
    Outcome o;
    std::mt19937_64 rng(77);
    double self = 0.0, trans = 0.0, rot = 0.0, scale = 0.0;
    for (int i = 0; i < 200; ++i) {
        auto m = i % 2 ? testsupport::random_mask(rng, 1 + rng() % 8, 1 + rng() % 8)
                       : testsupport::random_blob(rng, 8, 8, 2 + rng() % 40);
        if (m.count() == 0) {
            continue;
        }
        auto h = analytics::hu_moments(m);
        self = std::max(self, analytics::shape_difference(m, m).value);
        auto moved = analytics::hu_moments(m.padded(m.cols() + 7, m.rows() + 5, rng() % 8, rng() % 6));
        auto turned = analytics::hu_moments(m.rotated90());
        auto big = analytics::hu_moments(m.upsampled(2));
        for (std::size_t k = 0; k < 7; ++k) {
            trans = std::max(trans, std::abs(h[k] - moved[k]));
            rot = std::max(rot, std::abs(h[k] - turned[k]));
            scale = std::max(scale, std::abs(h[k] - big[k]));
        }
    }
    o.note(fmt("max d(a,a) %.1e, translation %.1e, rotation %.1e, 2x scaling %.1e", self, trans, rot, scale));
    o.require(self == 0.0, "d(a,a) = 0");
    o.require(trans <= 1e-12, "translation 1e-12");
    o.require(rot <= 1e-10, "rotation 1e-10");
    o.require(scale < 1e-3, "scaling 1e-3");

    bool strict = analytics::classify_match({0.0199999, 0.02}) && !analytics::classify_match({0.02, 0.02}) &&
                  analytics::classify_match({0.015, 0.02}) && !analytics::classify_match({0.17, 0.02});
    o.require(strict, "strict < 0.02");

    ShapeMask disc(400, 400);
    for (std::size_t r = 0; r < 400; ++r) {
        for (std::size_t c = 0; c < 400; ++c) {
            double x = static_cast<double>(c) - 199.5, y = static_cast<double>(r) - 199.5;
            disc.set(c, r, x * x + y * y <= 190.0 * 190.0);
        }
    }
    double h1 = analytics::hu_moments(disc)[0];
    double rel = std::abs(h1 * 2.0 * std::numbers::pi - 1.0);
    o.note(fmt("disc h1 %.6f vs 1/(2pi) %.6f (%.3f%%)", h1, 1.0 / (2.0 * std::numbers::pi), 100 * rel));
    o.require(rel <= 0.02, "disc within 2%");
    return o;
}

Outcome bank_symmetry()
{
    Outcome o;
    auto t0 = std::chrono::steady_clock::now();
    auto s = config::desk_scenario();
    auto d = s.sim.dims();
    o.note(fmt("grid %zux%zux%zu", d.nx, d.ny, d.nz));
    auto head = config::build_head(s);
    auto make = [&](const std::string& text) {
        geometry::TargetSpec t;
        t.id = "sym";
        t.mask = ShapeMask::from_text(text);
        return irbank::arrange_scene(t, head, s.sim, s.distance);
    };
    auto opts = s.bank_options();

    auto [one, h1] = make("#\n");
    auto single = irbank::generate_ir_bank(one, h1, s.sim, opts).at(0);
    double lr = testsupport::rms_diff(single.left, single.right) / testsupport::rms(single.left);
    o.note(fmt("single cell L/R relative RMS %.1e", lr));
    o.require(lr <= 0.01, "L/R within 1%");

    auto [two, h2] = make("##\n");
    auto bank = irbank::generate_ir_bank(two, h2, s.sim, opts);
    const auto& a = bank.at(0);
    const auto& b = bank.at(1);
    double swap_l = testsupport::rms_diff(a.left, b.right) / testsupport::rms(a.left);
    double swap_r = testsupport::rms_diff(a.right, b.left) / testsupport::rms(a.right);
    double own = testsupport::rms_diff(a.left, a.right) / testsupport::rms(a.left);
    o.note(fmt("mirrored cells swap %.1e / %.1e (ears differ by %.2f)", swap_l, swap_r, own));
    o.require(swap_l <= 0.02 && swap_r <= 0.02, "swap within 2%");
    double secs = seconds_since(t0);
    o.note(fmt("%.1f s", secs));
    o.require(d.nx == 64 && secs < 120.0, "64^3 in < 2 min");
    return o;
}

// Raster sweep over the grid at 150 Hz, passing through every cell.
std::vector<session::GazeSample> raster(double t0, std::size_t rows, std::mt19937_64& rng)
{
    std::vector<session::GazeSample> out;
    std::uniform_real_distribution<double> jitter(-0.02, 0.02);
    double t = t0;
    for (std::size_t r = 0; r < rows; ++r) {
        for (int step = 0; step <= 60; ++step) {
            double x = step / 60.0;
            if (r % 2) {
                x = 1.0 - x;
            }
            double y = (static_cast<double>(r) + 0.5) / static_cast<double>(rows);
            out.push_back({t, x + jitter(rng), y + jitter(rng), rng() % 25 != 0});
            t += 1.0 / 150.0;
        }
    }
    return out;
}

Outcome protocol_replay()
{
    Outcome o;
    auto catalog = config::default_catalog();
    session::SessionEngine e("scripted", config::default_protocol(), catalog, [] { return 0.0; });
    std::mt19937_64 rng(9);
    double t = 0.0;
    for (std::size_t i = 0; i < 15; ++i) {
        e.begin(t);
        for (const auto& s : raster(t + 0.1, 5, rng)) {
            e.ingest_gaze(s);
            t = s.t;
        }
        e.end_sensing(t += 0.2);
        const auto& truth = catalog.at(e.current_trial().target_id).mask;
        e.submit_drawing(i % 3 ? truth : testsupport::random_mask(rng, 5, 5), t += 2.0);
    }
    const auto& res = e.results();
    bool feedback = res.size() == 15;
    for (std::size_t i = 0; i < res.size(); ++i) {
        feedback = feedback && res[i].feedback.has_value() == (i < 8) && res[i].training == (i < 8);
    }
    o.note(fmt("%zu results, %zu triggers", res.size(), session::trigger_lines(e.export_log()).size()));
    o.require(res.size() == 15 && e.phase() == session::Phase::finished, "15 results");
    o.require(feedback, "feedback only in the first 8");

    auto text = e.export_log();
    auto again = session::replay(text, catalog);
    std::string a, b;
    for (const auto& l : session::trigger_lines(text)) a += l + "\n";
    for (const auto& l : session::trigger_lines(again.export_log())) b += l + "\n";
    o.note(fmt("replayed trigger log %zu bytes, %s", b.size(), a == b ? "identical" : "differs"));
    o.require(!a.empty() && a == b, "trigger log byte-for-byte");
    return o;
}

// ---------------------------------------------------------------------------
// End to end

namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
namespace asio = boost::asio;
using tcp = asio::ip::tcp;

struct Client {
    unsigned short port;

    std::pair<unsigned, std::string> call(http::verb verb, const std::string& target, const std::string& body = "")
    {
        asio::io_context ioc;
        beast::tcp_stream s(ioc);
        s.connect(tcp::endpoint(asio::ip::make_address("127.0.0.1"), port));
        http::request<http::string_body> req{verb, target, 11};
        req.set(http::field::host, "localhost");
        req.body() = body;
        req.prepare_payload();
        http::write(s, req);
        beast::flat_buffer buf;
        http::response<http::string_body> res;
        http::read(s, buf, res);
        beast::error_code ec;
        s.socket().shutdown(tcp::socket::shutdown_both, ec);
        return {res.result_int(), res.body()};
    }
};

std::string slurp(const fs::path& p)
{
    std::ifstream f(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(f), {}};
}

Outcome end_to_end()
{
    Outcome o;
    auto t0 = std::chrono::steady_clock::now();
    testsupport::TempDir dir("echotrain-e2e");
    auto root = dir.path().string();
    std::ostringstream out, err;
    auto cli = [&](std::vector<std::string> args) {
        args.push_back("--root");
        args.push_back(root);
        int code = cli::run_cli(args, out, err);
        o.require(code == 0, args[0] + " exit " + std::to_string(code) + ": " + err.str().substr(0, 200));
        return code == 0;
    };
    if (!cli({"init"})) {
        return o;
    }
    const std::map<std::string, std::string> masks = {{"P9", ".#.\n###\n.#.\n"}, {"U9", "#..\n#..\n###\n"}};
    json cat = {{"targets", json::array()}};
    for (const auto& [id, m] : masks) {
        cat["targets"].push_back({{"id", id}, {"role", id == "P9" ? "trained" : "untrained"}});
        std::ofstream(dir.path() / "targets" / (id + ".mask")) << m;
    }
    std::ofstream(dir.path() / "targets" / "catalog.json") << cat.dump(2);
    std::ofstream(dir.path() / "protocol.json")
        << json{{"training_trials", {"P9"}}, {"test_trials", {"P9", "U9"}}}.dump(2);
    for (const auto& [id, m] : masks) {
        if (!cli({"bank", "--target", id}) || !cli({"synth", "--target", id})) {
            return o;
        }
    }
    o.note(fmt("banks and assets in %.0f s", seconds_since(t0)));

    auto ws = config::Workspace::locate(root);
    session::SessionManager manager(
        ws.load_catalog(), ws.load_protocol(),
        [&](const std::vector<std::string>& ids) { return ws.missing_assets(ids); }, ws.logs());
    server::Server srv(manager, ws.assets(), "127.0.0.1", 0);
    std::thread th([&] { srv.run(); });
    std::size_t triggers = 0, fetched = 0;
    std::string stage = "create";
    try {
        Client c{srv.port()};
        auto [code, body] = c.call(http::verb::post, "/sessions");
        o.require(code == 201, "create session");
        auto id = json::parse(body).at("session_id").get<std::string>();

        asio::io_context ioc;
        websocket::stream<beast::tcp_stream> gaze(ioc);
        beast::get_lowest_layer(gaze).connect(tcp::endpoint(asio::ip::make_address("127.0.0.1"), srv.port()));
        gaze.handshake("localhost", "/sessions/" + id + "/gaze");
        auto next = [&] {
            beast::flat_buffer b;
            gaze.read(b);
            return json::parse(beast::buffers_to_string(b.data()));
        };
        next(); // idle

        double t = 0.0;
        std::set<std::string> assets;
        for (int trial = 0; trial < 3; ++trial) {
            stage = "trial " + std::to_string(trial);
            auto [bc, bb] = c.call(http::verb::post, "/sessions/" + id + "/begin", json{{"t", t}}.dump());
            o.require(bc == 200, "begin");
            auto target = json::parse(bb).at("target").get<std::string>();
            next(); // sensing
            // Visit every cell of the 3x3 grid once, row-major.
            for (std::size_t cell = 0; cell < 9; ++cell) {
                for (int k = 0; k < 15; ++k) {
                    t += 1.0 / 150.0;
                    gaze.write(asio::buffer(json{{"t", t},
                                                 {"x", (static_cast<double>(cell % 3) + 0.5) / 3.0},
                                                 {"y", (static_cast<double>(cell / 3) + 0.5) / 3.0}}
                                                .dump()));
                    if (k == 0) {
                        auto m = next();
                        triggers += m.value("type", "") == "trigger" && m.value("cell", 99u) == cell;
                        assets.insert(m.value("asset", ""));
                    }
                }
            }
            // Gaze and HTTP travel on separate connections: a final return to
            // the centre cell, answered by its trigger, flushes the gaze queue.
            gaze.write(asio::buffer(json{{"t", t += 0.1}, {"x", 0.5}, {"y", 0.5}}.dump()));
            auto back = next();
            triggers += back.value("type", "") == "trigger" && back.value("cell", 99u) == 4u;
            o.require(c.call(http::verb::post, "/sessions/" + id + "/end_sensing", json{{"t", t += 0.5}}.dump())
                              .first == 200,
                      "end_sensing");
            next(); // drawing
            auto [dc, db] = c.call(http::verb::post, "/sessions/" + id + "/drawing?t=" + std::to_string(t += 1.0),
                                   masks.at(target));
            o.require(dc == 200 && json::parse(db).at("difference") == 0.0, "perfect drawing scores 0");
            next(); // scored
            next(); // idle or finished
        }
        stage = "assets";
        for (const auto& a : assets) {
            auto [ac, ab] = c.call(http::verb::get, a);
            if (ac == 200) {
                auto wav = synth::decode_wav(std::span(reinterpret_cast<const std::uint8_t*>(ab.data()), ab.size()));
                fetched += wav.frames() > 0;
            }
        }
        gaze.close(websocket::close_code::normal);
    } catch (const std::exception& e) {
        o.require(false, "session, " + stage + ": " + e.what());
    }
    srv.stop();
    th.join();
    o.note(fmt("30 cell entries, %zu triggers, %zu assets served", triggers, fetched));
    o.require(triggers == 30, "one trigger per cell entry");
    o.require(fetched == 18, "all assets served");

    if (!cli({"report"})) {
        return o;
    }
    auto csv = slurp(ws.reports() / "trials.csv");
    auto summary = json::parse(slurp(ws.reports() / "summary.json"));
    std::vector<std::string> lines;
    std::istringstream in(csv);
    for (std::string l; std::getline(in, l);) {
        lines.push_back(l);
    }
    bool rows_ok = lines.size() == 4;
    const char* conditions[] = {"training", "test_trained", "test_untrained"};
    const char* targets[] = {"P9", "P9", "U9"};
    for (std::size_t i = 1; rows_ok && i < 4; ++i) {
        std::vector<std::string> f;
        std::istringstream row(lines[i]);
        for (std::string x; std::getline(row, x, ',');) {
            f.push_back(x);
        }
        rows_ok = f.size() == 8 && f[2] == conditions[i - 1] && f[3] == targets[i - 1] && f[4] == "0" &&
                  f[5] == "true";
    }
    bool groups = summary.at("conditions").size() == 3;
    for (std::size_t i = 0; groups && i < 3; ++i) {
        groups = summary["conditions"][i]["condition"] == conditions[i] && summary["conditions"][i]["count"] == 1;
    }
    o.require(rows_ok, "report rows (difference 0, conditions)");
    o.require(groups, "condition grouping");
    double secs = seconds_since(t0);
    o.note(fmt("report %zu rows, 3 condition groups, total %.0f s", lines.size() - 1, secs));
    o.require(secs < 600.0, "total < 10 min");
    return o;
}

} // namespace

int main(int argc, char** argv)
{
    const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
        {"FDTD free-field propagation", free_field},
        {"Stability and determinism", stability_and_determinism},
        {"PML absorption", pml_absorption},
        {"Image-source echo", image_source},
        {"Stimulus", stimulus},
        {"Convolution oracle", convolution},
        {"Hu moments and shape matching", hu_matching},
        {"IR-bank symmetry", bank_symmetry},
        {"Protocol replay", protocol_replay},
        {"End-to-end pipeline", end_to_end},
    };
    std::set<std::size_t> only;
    for (int i = 1; i < argc; ++i) {
        only.insert(static_cast<std::size_t>(std::stoul(argv[i])));
    }
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        if (!only.empty() && !only.contains(i + 1)) {
            continue;
        }
        auto t0 = std::chrono::steady_clock::now();
        Outcome r;
        try {
            r = criteria[i].second();
        } catch (const std::exception& e) {
            r.require(false, std::string("exception: ") + e.what());
        }
        failed += !r.pass;
        std::printf("%s %2zu %s: %s [%.1f s]\n", r.pass ? "PASS" : "FAIL", i + 1, criteria[i].first,
                    r.detail.c_str(), seconds_since(t0));
        std::fflush(stdout);
    }
    return failed ? 1 : 0;
}
