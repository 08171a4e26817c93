#include "factrag/service.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <fstream>
#include <sstream>

#include <httplib.h>
#include <json.hpp>

#include "factrag/errors.hpp"

using nlohmann::json;

namespace factrag {

namespace {

void set_error(httplib::Response& res, int status, ErrorCode code, const std::string& message) {
    res.status = status;
    res.set_content(json{{"error", {{"code", code_name(code)}, {"message", message}}}}.dump(),
                    "application/json");
}

} // namespace

ServeLock::ServeLock(const std::filesystem::path& root) {
    std::error_code ec;
    std::filesystem::create_directories(root, ec);
    path_ = root / ".serve.lock";
    const int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd < 0) {
        path_.clear();
        throw Error(ErrorCode::StoreLocked, "store is already being served: " + root.string());
    }
    ::close(fd);
}

ServeLock::~ServeLock() {
    if (!path_.empty()) {
        std::error_code ec;
        std::filesystem::remove(path_, ec);
    }
}

HttpService::HttpService(FePipeline& pipeline, const CorpusStore& store,
                         std::filesystem::path trace_dir, std::string config_fingerprint,
                         PipelineMode default_mode)
    : pipeline_(pipeline),
      store_(store),
      trace_dir_(std::move(trace_dir)),
      config_fingerprint_(std::move(config_fingerprint)),
      default_mode_(default_mode),
      lock_(store.root()),
      server_(std::make_unique<httplib::Server>()) {
    route();
}

HttpService::~HttpService() = default;

void HttpService::route() {
    server_->Post("/v1/query", [this](const httplib::Request& req, httplib::Response& res) {
        json body;
        try {
            body = json::parse(req.body);
        } catch (const json::exception& e) {
            set_error(res, 400, ErrorCode::ParseFailure, std::string("invalid JSON body: ") + e.what());
            return;
        }
        if (!body.is_object() || !body.contains("question") || !body.at("question").is_string() ||
            body.at("question").get<std::string>().empty()) {
            set_error(res, 400, ErrorCode::PreconditionViolation,
                      "body must be an object with a non-empty question string");
            return;
        }
        PipelineMode mode = default_mode_;
        if (body.contains("mode")) {
            if (!body.at("mode").is_string()) {
                set_error(res, 400, ErrorCode::ConfigError, "mode must be a string");
                return;
            }
            try {
                mode = mode_from_name(body.at("mode").get<std::string>());
            } catch (const Error& e) {
                set_error(res, 400, e.code(), e.what());
                return;
            }
        }
        try {
            const PipelineTrace trace =
                pipeline_.run(body.at("question").get<std::string>(), mode);
            json citations = json::array();
            for (const Citation& c : trace.answer.citations) {
                citations.push_back(json{{"identifier", c.identifier}, {"reason", c.reason}});
            }
            res.set_content(json{{"answer", trace.answer.text},
                                 {"citations", citations},
                                 {"run_id", trace.run_id},
                                 {"mode", trace.mode}}
                                .dump(),
                            "application/json");
        } catch (const Error& e) {
            set_error(res, is_gateway_error(e.code()) ? 503 : 500, e.code(), e.what());
        }
    });

    server_->Get(R"(/v1/trace/([0-9a-f]+))", [this](const httplib::Request& req,
                                                    httplib::Response& res) {
        const std::string run_id = req.matches[1];
        std::ifstream in(trace_dir_ / (run_id + ".json"), std::ios::binary);
        if (!in) {
            set_error(res, 404, ErrorCode::UnknownIdentifier, "no trace for run " + run_id);
            return;
        }
        std::ostringstream buf;
        buf << in.rdbuf();
        res.set_content(buf.str(), "application/json");
    });

    server_->Get("/healthz", [this](const httplib::Request&, httplib::Response& res) {
        res.set_content(json{{"ok", true},
                             {"manifest_fingerprint", store_.manifest().fingerprint()},
                             {"config_fingerprint", config_fingerprint_}}
                            .dump(),
                        "application/json");
    });
}

bool HttpService::listen(const std::string& addr) {
    const std::size_t colon = addr.rfind(':');
    if (colon == std::string::npos) {
        throw Error(ErrorCode::ConfigError, "serve address must be host:port, got " + addr);
    }
    const std::string host = addr.substr(0, colon);
    const int port = std::atoi(addr.c_str() + colon + 1);
    if (port <= 0 || port > 65535) {
        throw Error(ErrorCode::ConfigError, "bad port in serve address " + addr);
    }
    return server_->listen(host, port);
}

int HttpService::bind_ephemeral(const std::string& host) {
    return server_->bind_to_any_port(host);
}

bool HttpService::serve_after_bind() { return server_->listen_after_bind(); }

void HttpService::stop() { server_->stop(); }

} // namespace factrag
