#pragma once

// HTTP + WebSocket front end for the session engine.
//
//   POST /sessions                       JSON protocol overrides -> {session_id, ...}
//   GET  /targets                        ids, roles and grid sizes (no masks)
//   POST /sessions/{id}/begin            optional {"t": s}
//   POST /sessions/{id}/end_sensing      optional {"t": s}
//   POST /sessions/{id}/drawing          mask text; optional ?t=s
//   GET  /sessions/{id}/log              JSON lines
//   GET  /assets/{target}/{cell}.wav
//   WS   /sessions/{id}/gaze             {t, x, y, valid} in; trigger/phase out
//
// Runs on one io_context thread; every handler completes synchronously.

#include <deque>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <thread>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>
#include <nlohmann/json.hpp>

#include "echotrain/bytes.hpp"
#include "echotrain/errors.hpp"
#include "echotrain/session.hpp"

namespace echotrain::server {

namespace asio = boost::asio;
namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
using tcp = asio::ip::tcp;

using session::Phase;
using session::SessionManager;

inline nlohmann::json phase_message(Phase p, std::size_t trial)
{
    return {{"type", "phase"}, {"phase", session::to_string(p)}, {"trial", trial}};
}

inline nlohmann::json result_json(const session::TrialResult& r, Phase next)
{
    nlohmann::json j = {
        {"trial", r.trial},
        {"target", r.target_id},
        {"condition", analytics::to_string(r.condition)},
        {"training", r.training},
        {"difference", r.difference},
        {"matched", r.matched},
        {"sensing_time", r.sensing_time},
        {"edge_dwell_fraction", r.edge_dwell_fraction},
        {"phase", session::to_string(next)},
    };
    if (r.feedback) {
        j["feedback"] = r.feedback->to_text();
    }
    return j;
}

/// Splits a request target into path segments and query parameters.
struct Route {
    std::vector<std::string> parts;
    std::map<std::string, std::string> query;

    explicit Route(std::string_view target)
    {
        auto q = target.find('?');
        std::string_view path = target.substr(0, q);
        if (q != std::string_view::npos) {
            std::string_view rest = target.substr(q + 1);
            while (!rest.empty()) {
                auto amp = rest.find('&');
                auto kv = rest.substr(0, amp);
                auto eq = kv.find('=');
                query[std::string(kv.substr(0, eq))] = eq == std::string_view::npos ? "" : std::string(kv.substr(eq + 1));
                rest = amp == std::string_view::npos ? std::string_view{} : rest.substr(amp + 1);
            }
        }
        std::size_t pos = 0;
        while (pos < path.size()) {
            auto slash = path.find('/', pos);
            auto seg = path.substr(pos, slash - pos);
            if (!seg.empty()) {
                parts.emplace_back(seg);
            }
            if (slash == std::string_view::npos) {
                break;
            }
            pos = slash + 1;
        }
    }
};

inline bool safe_segment(std::string_view s)
{
    if (s.empty() || s == "." || s == "..") {
        return false;
    }
    return std::all_of(s.begin(), s.end(), [](char c) {
        return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.';
    });
}

class Server;

class GazeSocket : public std::enable_shared_from_this<GazeSocket> {
public:
    GazeSocket(tcp::socket socket, Server& server, std::string session_id)
        : ws_(std::move(socket)), server_(server), session_id_(std::move(session_id))
    {
    }

    void start(http::request<http::string_body> req);
    void send(const nlohmann::json& msg);
    const std::string& session_id() const { return session_id_; }

private:
    void on_accept(beast::error_code ec);
    void read();
    void on_read(beast::error_code ec, std::size_t);
    void write_next();

    websocket::stream<beast::tcp_stream> ws_;
    Server& server_;
    std::string session_id_;
    beast::flat_buffer buffer_;
    std::deque<std::string> outbox_;
    bool open_ = false;
};

class HttpConnection : public std::enable_shared_from_this<HttpConnection> {
public:
    HttpConnection(tcp::socket socket, Server& server) : stream_(std::move(socket)), server_(server) {}

    void start() { read(); }

private:
    void read()
    {
        req_ = {};
        stream_.expires_after(std::chrono::seconds(60));
        http::async_read(stream_, buffer_, req_,
                         beast::bind_front_handler(&HttpConnection::on_read, shared_from_this()));
    }

    void on_read(beast::error_code ec, std::size_t);

    void on_write(bool close, beast::error_code ec, std::size_t)
    {
        if (ec || close) {
            beast::error_code ignored;
            stream_.socket().shutdown(tcp::socket::shutdown_send, ignored);
            return;
        }
        read();
    }

    beast::tcp_stream stream_;
    Server& server_;
    beast::flat_buffer buffer_;
    http::request<http::string_body> req_;
    std::shared_ptr<http::response<http::string_body>> res_;
};

class Server {
public:
    Server(SessionManager& sessions, std::filesystem::path assets_dir, const std::string& host = "127.0.0.1",
           unsigned short port = 8080)
        : sessions_(sessions), assets_(std::move(assets_dir)), acceptor_(ioc_)
    {
        tcp::endpoint ep(asio::ip::make_address(host), port);
        acceptor_.open(ep.protocol());
        acceptor_.set_option(asio::socket_base::reuse_address(true));
        acceptor_.bind(ep);
        acceptor_.listen();
    }

    unsigned short port() const { return acceptor_.local_endpoint().port(); }

    /// Serves until stop().
    void run()
    {
        accept();
        ioc_.run();
    }

    void stop()
    {
        asio::post(ioc_, [this] {
            beast::error_code ec;
            acceptor_.close(ec);
            ioc_.stop();
        });
    }

    /// SIGINT/SIGTERM end run().
    void stop_on_signals()
    {
        signals_.emplace(ioc_, SIGINT, SIGTERM);
        signals_->async_wait([this](beast::error_code ec, int) {
            if (!ec) {
                stop();
            }
        });
    }

    SessionManager& sessions() { return sessions_; }

    http::response<http::string_body> handle(const http::request<http::string_body>& req);

    void subscribe(const std::shared_ptr<GazeSocket>& s) { sockets_[s->session_id()].insert(s); }
    void unsubscribe(const std::shared_ptr<GazeSocket>& s)
    {
        auto it = sockets_.find(s->session_id());
        if (it != sockets_.end()) {
            it->second.erase(s);
        }
    }

    void broadcast(const std::string& session_id, const nlohmann::json& msg)
    {
        auto it = sockets_.find(session_id);
        if (it == sockets_.end()) {
            return;
        }
        for (const auto& s : it->second) {
            s->send(msg);
        }
    }

private:
    void accept()
    {
        acceptor_.async_accept(asio::make_strand(ioc_), [this](beast::error_code ec, tcp::socket socket) {
            if (ec) {
                return;
            }
            std::make_shared<HttpConnection>(std::move(socket), *this)->start();
            accept();
        });
    }

    http::response<http::string_body> route(const http::request<http::string_body>& req);

    SessionManager& sessions_;
    std::filesystem::path assets_;
    asio::io_context ioc_{1};
    tcp::acceptor acceptor_;
    std::map<std::string, std::set<std::shared_ptr<GazeSocket>>> sockets_;
    std::optional<asio::signal_set> signals_;
};

// ---------------------------------------------------------------------------

inline http::response<http::string_body> make_response(const http::request<http::string_body>& req,
                                                       http::status status, std::string body,
                                                       std::string_view type = "application/json")
{
    http::response<http::string_body> res{status, req.version()};
    res.set(http::field::content_type, std::string(type));
    res.set(http::field::access_control_allow_origin, "*");
    res.keep_alive(req.keep_alive());
    res.body() = std::move(body);
    res.prepare_payload();
    return res;
}

inline http::response<http::string_body> json_response(const http::request<http::string_body>& req,
                                                       http::status status, const nlohmann::json& j)
{
    return make_response(req, status, j.dump());
}

inline std::optional<double> body_time(const http::request<http::string_body>& req)
{
    if (req.body().find_first_not_of(" \t\r\n") == std::string::npos) {
        return std::nullopt;
    }
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(req.body());
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("request body is not JSON: ") + e.what());
    }
    if (j.is_object() && j.contains("t")) {
        if (!j.at("t").is_number()) {
            throw ValidationError("'t' must be a number");
        }
        return j.at("t").get<double>();
    }
    return std::nullopt;
}

inline http::response<http::string_body> Server::handle(const http::request<http::string_body>& req)
{
    auto error = [&](http::status s, const std::string& msg) {
        return json_response(req, s, {{"error", msg}});
    };
    try {
        return route(req);
    } catch (const NotFoundError& e) {
        return error(http::status::not_found, e.what());
    } catch (const ProtocolError& e) {
        return error(http::status::conflict, e.what());
    } catch (const Error& e) {
        return error(http::status::bad_request, e.what());
    } catch (const std::exception& e) {
        return error(http::status::internal_server_error, e.what());
    }
}

inline http::response<http::string_body> Server::route(const http::request<http::string_body>& req)
{
    Route r(std::string_view(req.target().data(), req.target().size()));
    const auto& p = r.parts;
    const auto method = req.method();
    auto bad_method = [&] {
        return json_response(req, http::status::method_not_allowed, {{"error", "method not allowed"}});
    };

    if (method == http::verb::options) {
        auto res = make_response(req, http::status::no_content, "");
        res.set(http::field::access_control_allow_methods, "GET, POST, OPTIONS");
        res.set(http::field::access_control_allow_headers, "Content-Type");
        return res;
    }

    if (p.size() == 1 && p[0] == "targets") {
        if (method != http::verb::get) {
            return bad_method();
        }
        nlohmann::json list = nlohmann::json::array();
        for (const auto& [id, t] : sessions_.catalog()) {
            list.push_back({{"id", id},
                            {"role", geometry::to_string(t.role)},
                            {"cols", t.mask.cols()},
                            {"rows", t.mask.rows()},
                            {"cell_size_m", t.cell_size}});
        }
        return json_response(req, http::status::ok, {{"targets", list}});
    }

    if (p.size() == 1 && p[0] == "sessions") {
        if (method != http::verb::post) {
            return bad_method();
        }
        nlohmann::json overrides = nlohmann::json::object();
        if (req.body().find_first_not_of(" \t\r\n") != std::string::npos) {
            try {
                overrides = nlohmann::json::parse(req.body());
            } catch (const nlohmann::json::exception& e) {
                throw ValidationError(std::string("session config is not JSON: ") + e.what());
            }
        }
        auto id = sessions_.create(overrides);
        nlohmann::json info = sessions_.with(id, [&](session::SessionEngine& e) {
            e.on_phase([this, id](Phase ph, std::size_t trial) { broadcast(id, phase_message(ph, trial)); });
            const auto& l = e.config().layout;
            return nlohmann::json{
                {"session_id", id},
                {"trials", e.trials().size()},
                {"training_trials", e.config().training_trials.size()},
                {"phase", session::to_string(e.phase())},
                {"layout",
                 {{"cols", l.cols}, {"rows", l.rows}, {"left", l.left}, {"top", l.top}, {"width", l.width},
                  {"height", l.height}}},
            };
        });
        return json_response(req, http::status::created, info);
    }

    if (p.size() == 3 && p[0] == "sessions") {
        const std::string& id = p[1];
        const std::string& op = p[2];
        if (op == "log") {
            if (method != http::verb::get) {
                return bad_method();
            }
            auto text = sessions_.with(id, [](session::SessionEngine& e) { return e.export_log(); });
            return make_response(req, http::status::ok, text, "application/x-ndjson");
        }
        if (method != http::verb::post) {
            return bad_method();
        }
        if (op == "begin") {
            auto t = body_time(req);
            auto j = sessions_.with(id, [&](session::SessionEngine& e) {
                const auto& trial = e.begin(t);
                return nlohmann::json{
                    {"phase", "sensing"},
                    {"trial", trial.index},
                    {"training", trial.training},
                    {"condition", analytics::to_string(trial.condition)},
                    {"target", trial.target_id},
                    {"cols", e.config().layout.cols},
                    {"rows", e.config().layout.rows},
                };
            });
            return json_response(req, http::status::ok, j);
        }
        if (op == "end_sensing") {
            auto t = body_time(req);
            auto j = sessions_.with(id, [&](session::SessionEngine& e) {
                double st = e.end_sensing(t);
                return nlohmann::json{{"phase", "drawing"}, {"sensing_time", st}};
            });
            return json_response(req, http::status::ok, j);
        }
        if (op == "drawing") {
            std::optional<double> t;
            if (auto it = r.query.find("t"); it != r.query.end()) {
                try {
                    t = std::stod(it->second);
                } catch (const std::exception&) {
                    throw ValidationError("query parameter t must be a number");
                }
            }
            auto mask = geometry::ShapeMask::from_text(req.body());
            auto j = sessions_.with(id, [&](session::SessionEngine& e) {
                auto res = e.submit_drawing(mask, t);
                return result_json(res, e.phase());
            });
            return json_response(req, http::status::ok, j);
        }
    }

    if (p.size() == 3 && p[0] == "assets") {
        if (method != http::verb::get) {
            return bad_method();
        }
        const std::string& file = p[2];
        if (!safe_segment(p[1]) || file.size() < 5 || file.substr(file.size() - 4) != ".wav" ||
            !std::all_of(file.begin(), file.end() - 4, [](char c) { return c >= '0' && c <= '9'; })) {
            throw NotFoundError("no such asset");
        }
        auto path = assets_ / p[1] / file;
        if (!std::filesystem::is_regular_file(path)) {
            throw NotFoundError("no such asset: " + p[1] + "/" + file);
        }
        auto bytes = read_file(path);
        auto res = make_response(req, http::status::ok, std::string(bytes.begin(), bytes.end()), "audio/wav");
        res.set(http::field::cache_control, "max-age=3600");
        return res;
    }

    throw NotFoundError("no route for " + std::string(req.target()));
}

inline void HttpConnection::on_read(beast::error_code ec, std::size_t)
{
    if (ec == http::error::end_of_stream) {
        beast::error_code ignored;
        stream_.socket().shutdown(tcp::socket::shutdown_send, ignored);
        return;
    }
    if (ec) {
        return;
    }
    if (websocket::is_upgrade(req_)) {
        Route r(std::string_view(req_.target().data(), req_.target().size()));
        if (r.parts.size() == 3 && r.parts[0] == "sessions" && r.parts[2] == "gaze") {
            stream_.expires_never();
            std::make_shared<GazeSocket>(stream_.release_socket(), server_, r.parts[1])->start(std::move(req_));
            return;
        }
    }
    res_ = std::make_shared<http::response<http::string_body>>(server_.handle(req_));
    bool close = res_->need_eof();
    http::async_write(stream_, *res_,
                      beast::bind_front_handler(&HttpConnection::on_write, shared_from_this(), close));
}

inline void GazeSocket::start(http::request<http::string_body> req)
{
    try {
        server_.sessions().with(session_id_, [](session::SessionEngine&) { return 0; });
    } catch (const NotFoundError&) {
        // Refuse the upgrade with a plain 404.
        auto res = std::make_shared<http::response<http::string_body>>(
            make_response(req, http::status::not_found, nlohmann::json{{"error", "unknown session"}}.dump()));
        auto self = shared_from_this();
        http::async_write(beast::get_lowest_layer(ws_), *res, [self, res](beast::error_code, std::size_t) {
            beast::error_code ignored;
            beast::get_lowest_layer(self->ws_).socket().shutdown(tcp::socket::shutdown_send, ignored);
        });
        return;
    }
    ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
    ws_.async_accept(req, beast::bind_front_handler(&GazeSocket::on_accept, shared_from_this()));
}

inline void GazeSocket::on_accept(beast::error_code ec)
{
    if (ec) {
        return;
    }
    open_ = true;
    server_.subscribe(shared_from_this());
    auto hello = server_.sessions().with(session_id_, [](session::SessionEngine& e) {
        return phase_message(e.phase(), e.trial_index());
    });
    send(hello);
    read();
}

inline void GazeSocket::read()
{
    ws_.async_read(buffer_, beast::bind_front_handler(&GazeSocket::on_read, shared_from_this()));
}

inline void GazeSocket::on_read(beast::error_code ec, std::size_t)
{
    if (ec) {
        open_ = false;
        server_.unsubscribe(shared_from_this());
        return;
    }
    std::string text = beast::buffers_to_string(buffer_.data());
    buffer_.consume(buffer_.size());
    try {
        auto j = nlohmann::json::parse(text);
        session::GazeSample s;
        s.t = j.at("t").get<double>();
        s.x = j.at("x").get<double>();
        s.y = j.at("y").get<double>();
        s.valid = j.value("valid", true);
        auto ev = server_.sessions().with(session_id_, [&](session::SessionEngine& e) { return e.ingest_gaze(s); });
        if (ev) {
            send({{"type", "trigger"}, {"cell", ev->cell}, {"asset", ev->asset}, {"t", ev->t}});
        }
    } catch (const nlohmann::json::exception& e) {
        send({{"type", "error"}, {"error", std::string("bad gaze message: ") + e.what()}});
    } catch (const Error& e) {
        send({{"type", "error"}, {"error", e.what()}});
    }
    read();
}

inline void GazeSocket::send(const nlohmann::json& msg)
{
    if (!open_) {
        return;
    }
    outbox_.push_back(msg.dump());
    if (outbox_.size() == 1) {
        write_next();
    }
}

inline void GazeSocket::write_next()
{
    ws_.text(true);
    ws_.async_write(asio::buffer(outbox_.front()), [self = shared_from_this()](beast::error_code ec, std::size_t) {
        self->outbox_.pop_front();
        if (ec) {
            self->open_ = false;
            self->outbox_.clear();
            return;
        }
        if (!self->outbox_.empty()) {
            self->write_next();
        }
    });
}

} // namespace echotrain::server
