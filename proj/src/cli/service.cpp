#include <mutex>
#include <unordered_map>

#include "httplib.h"
#include "msp/cli.hpp"
#include "msp/error.hpp"

namespace msp::cli {

struct Service::Impl {
    ServiceData data;
    std::unordered_map<std::string, std::size_t> point_index;
    std::mutex project_mutex;  // projections are CPU heavy; run one at a time
    httplib::Server server;
};

namespace {

void reply(httplib::Response& res, int status, const std::string& body) {
    res.status = status;
    res.set_content(body, "application/json");
}

void fail(httplib::Response& res, int status, const std::string& message) {
    reply(res, status, nlohmann::json{{"error", message}}.dump());
}

nlohmann::json entry_json(const ManifestEntry& e) {
    return {{"id", e.id},        {"image", e.image},         {"field", e.field},
            {"label", e.label},  {"group", e.group},         {"variant", e.variant},
            {"threshold", e.threshold}, {"resolution", e.resolution}, {"params", e.params}};
}

}  // namespace

Service::Service(ServiceData data) : impl_(std::make_unique<Impl>()) {
    impl_->data = std::move(data);
    for (std::size_t i = 0; i < impl_->data.embedding.points.size(); ++i) impl_->point_index[impl_->data.embedding.points[i].id] = i;

    auto& svr = impl_->server;
    Impl& st = *impl_;
    svr.set_default_headers({{"Access-Control-Allow-Origin", "*"}});

    svr.Get("/api/embedding", [&st](const httplib::Request&, httplib::Response& res) { reply(res, 200, st.data.embedding_json); });

    svr.Get(R"(/api/points/([^/]+))", [&st](const httplib::Request& req, httplib::Response& res) {
        const std::string id = req.matches[1];
        const auto it = st.point_index.find(id);
        const ManifestEntry* entry = st.data.manifest.find(id);
        if (it == st.point_index.end() && !entry) return fail(res, 404, "unknown id " + id);
        nlohmann::json j{{"id", id}};
        if (it != st.point_index.end()) {
            const auto& p = st.data.embedding.points[it->second];
            j["x"] = p.x;
            j["y"] = p.y;
            j["label"] = p.label;
            j["meta"] = p.meta;
        }
        if (entry) j["manifest"] = entry_json(*entry);
        reply(res, 200, j.dump());
    });

    svr.Get(R"(/api/image/([^/]+))", [&st](const httplib::Request& req, httplib::Response& res) {
        const std::string id = req.matches[1];
        const ManifestEntry* entry = st.data.manifest.find(id);
        if (!entry) return fail(res, 404, "unknown id " + id);
        const std::string format = req.has_param("format") ? req.get_param_value("format") : "png";
        if (format != "png" && format != "p4") return fail(res, 400, "format must be png or p4");
        const auto img = raster::load_image(st.data.manifest.image_path(*entry));
        if (format == "png") {
            res.set_content(raster::encode_png(img), "image/png");
        } else {
            res.set_content(raster::encode_p4(img), "image/x-portable-bitmap");
        }
    });

    svr.Get(R"(/api/field/([^/]+))", [&st](const httplib::Request& req, httplib::Response& res) {
        const std::string id = req.matches[1];
        const ManifestEntry* entry = st.data.manifest.find(id);
        if (!entry) return fail(res, 404, "unknown id " + id);
        if (entry->field.empty()) return fail(res, 404, "no field recorded for " + id);
        const auto f = field::load_field(st.data.manifest.field_path(*entry));
        const auto& v = f.values();
        nlohmann::json j{{"id", id},
                         {"width", f.width()},
                         {"height", f.height()},
                         {"min", *std::min_element(v.begin(), v.end())},
                         {"max", *std::max_element(v.begin(), v.end())},
                         {"values", v}};
        reply(res, 200, j.dump());
    });

    svr.Post("/api/project", [&st](const httplib::Request& req, httplib::Response& res) {
        if (!st.data.latents) return fail(res, 409, "service was started without latent vectors");
        nlohmann::json body;
        try {
            body = req.body.empty() ? nlohmann::json::object() : nlohmann::json::parse(req.body);
        } catch (const nlohmann::json::parse_error& e) {
            return fail(res, 400, std::string("request body is not JSON: ") + e.what());
        }
        try {
            const auto options = project_options_from_json(body);
            std::lock_guard lock(st.project_mutex);
            reply(res, 200, embed::to_json(project(*st.data.latents, options)));
        } catch (const ParameterError& e) {
            fail(res, 400, e.what());
        }
    });

    svr.Options(R"(/api/.*)", [](const httplib::Request&, httplib::Response& res) {
        res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
        res.set_header("Access-Control-Allow-Headers", "Content-Type");
        res.status = 204;
    });

    svr.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
        try {
            std::rethrow_exception(ep);
        } catch (const std::exception& e) {
            fail(res, 500, e.what());
        } catch (...) {
            fail(res, 500, "unknown error");
        }
    });
    svr.set_error_handler([](const httplib::Request& req, httplib::Response& res) {
        if (res.body.empty()) fail(res, res.status, res.status == 404 ? "no route for " + req.path : "request failed");
    });
}

Service::~Service() { stop(); }

int Service::bind(const std::string& host, int port) {
    if (port == 0) {
        const int p = impl_->server.bind_to_any_port(host);
        if (p < 0) throw IoError("cannot bind " + host);
        return p;
    }
    if (!impl_->server.bind_to_port(host, port)) throw IoError("cannot bind " + host + ":" + std::to_string(port));
    return port;
}

void Service::run() { impl_->server.listen_after_bind(); }

void Service::stop() { impl_->server.stop(); }

}  // namespace msp::cli
