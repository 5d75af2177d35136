#include "canopy/app.hpp"

#include "canopy/error.hpp"

#include <httplib.h>
#include <toml.hpp>

#include <charconv>
#include <fstream>
#include <iostream>
#include <sstream>

namespace canopy {

using ojson = nlohmann::ordered_json;

AppConfig parse_app_config(std::string_view text, const std::filesystem::path& base_dir) {
    toml::table root;
    try {
        root = toml::parse(text);
    } catch (const toml::parse_error& e) {
        std::ostringstream msg;
        msg << "invalid app config: " << e.description() << " (line " << e.source().begin.line << ")";
        throw ValidationError(msg.str(), "config");
    }
    for (const auto& [key, v] : root) {
        const std::string k(key.str());
        if (k != "store" && k != "crs" && k != "server" && k != "layers" && k != "bind") {
            throw ValidationError("unknown key '" + k + "' in app config", k);
        }
    }
    auto resolve = [&](const std::string& p) {
        std::filesystem::path path(p);
        return path.is_relative() && !base_dir.empty() ? base_dir / path : path;
    };
    AppConfig c;
    const auto store = root["store"].value<std::string>();
    if (!store) throw ValidationError("app config needs 'store'", "store");
    c.store = resolve(*store);
    c.crs = root["crs"].value_or(std::string());
    auto parse_bind = [&](const std::string& bind) {
        const auto colon = bind.rfind(':');
        if (colon == std::string::npos) throw ValidationError("bind must be host:port", "bind");
        c.host = bind.substr(0, colon);
        int port = 0;
        const auto [p, ec] = std::from_chars(bind.data() + colon + 1, bind.data() + bind.size(), port);
        if (ec != std::errc{} || p != bind.data() + bind.size()) throw ValidationError("bind port is not a number", "bind");
        c.port = port;
    };
    if (const auto bind = root["bind"].value<std::string>()) parse_bind(*bind);
    if (const auto* server = root["server"].as_table()) {
        if (const auto bind = (*server)["bind"].value<std::string>()) parse_bind(*bind);
        c.host = (*server)["host"].value_or(c.host);
        c.port = static_cast<int>((*server)["port"].value_or(static_cast<std::int64_t>(c.port)));
    }
    if (c.port < 0 || c.port > 65535) throw ValidationError("port outside 0..65535", "port");
    if (const auto* layers = root["layers"].as_array()) {
        for (const auto& node : *layers) {
            const auto* t = node.as_table();
            if (!t) throw ValidationError("[[layers]] entries must be tables", "layers");
            LayerConfig l;
            const auto name = (*t)["name"].value<std::string>();
            const auto path = (*t)["path"].value<std::string>();
            if (!name || !path) throw ValidationError("layers need 'name' and 'path'", "layers");
            l.name = *name;
            l.path = resolve(*path);
            l.kind = parse_layer_kind((*t)["kind"].value_or(std::string("rgb")));
            c.layers.push_back(std::move(l));
        }
    } else if (root.contains("layers")) {
        throw ValidationError("'layers' must be an array of tables", "layers");
    }
    return c;
}

AppConfig read_app_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read config '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_app_config(ss.str(), path.parent_path());
}

App::App(std::shared_ptr<const InventoryStore> store, std::vector<Layer> layers, std::string crs)
    : store_(std::move(store)), layers_(std::move(layers)), crs_(std::move(crs)) {
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        validate(layers_[i]);
        for (std::size_t j = 0; j < i; ++j)
            if (layers_[j].name == layers_[i].name) throw ValidationError("duplicate layer '" + layers_[i].name + "'", "layers");
    }
}

App App::from_config(const AppConfig& config) {
    std::vector<Layer> layers;
    for (const auto& l : config.layers) layers.push_back(load_layer(l.name, l.kind, l.path));
    return App(std::make_shared<FileStore>(config.store), std::move(layers), config.crs);
}

namespace {

std::vector<std::string_view> split_path(std::string_view path) {
    std::vector<std::string_view> parts;
    std::size_t start = 0;
    while (start <= path.size()) {
        const std::size_t slash = path.find('/', start);
        const std::size_t end = slash == std::string_view::npos ? path.size() : slash;
        if (end > start) parts.push_back(path.substr(start, end - start));
        if (slash == std::string_view::npos) break;
        start = slash + 1;
    }
    return parts;
}

HttpResponse json_response(int status, const ojson& body) { return {status, "application/json", body.dump()}; }

HttpResponse error_response(int status, const std::string& message, const std::string& field = {}) {
    ojson j = ojson::object();
    j["error"] = message;
    if (!field.empty()) j["field"] = field;
    return json_response(status, j);
}

void only_params(const QueryParams& params, std::initializer_list<std::string_view> allowed) {
    for (const auto& [k, v] : params)
        if (std::find(allowed.begin(), allowed.end(), k) == allowed.end()) {
            throw ValidationError("unknown query parameter '" + k + "'", k);
        }
}

std::optional<std::string> single(const QueryParams& params, const std::string& key) {
    const auto [lo, hi] = params.equal_range(key);
    if (lo == hi) return std::nullopt;
    if (std::next(lo) != hi) throw ValidationError("parameter '" + key + "' given more than once", key);
    return lo->second;
}

long long parse_tile_int(std::string_view s, const char* field) {
    long long v = 0;
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || ec != std::errc{} || p != s.data() + s.size()) {
        throw ValidationError(std::string("tile ") + field + " is not an integer", field);
    }
    return v;
}

}  // namespace

HttpResponse App::handle_get(std::string_view path, const QueryParams& params) const {
    try {
        return route(path, params);
    } catch (const ValidationError& e) {
        return error_response(400, e.what(), e.field());
    } catch (const NotFoundError& e) {
        return error_response(404, e.what());
    } catch (const std::exception& e) {
        return error_response(500, e.what());
    }
}

HttpResponse App::route(std::string_view path, const QueryParams& params) const {
    const auto parts = split_path(path);
    const std::size_t n = parts.size();

    if (n == 2 && parts[0] == "api" && parts[1] == "trees") {
        return json_response(200, to_geojson(query_trees(*store_, parse_tree_query(params))));
    }
    if (n == 3 && parts[0] == "api" && parts[1] == "trees") {
        only_params(params, {"snapshot"});
        const std::string id(parts[2]);
        std::shared_ptr<const CadastreSnapshot> snap;
        if (const auto s = single(params, "snapshot")) {
            snap = store_->snapshot(parse_snapshot_id(*s));
        } else {
            const auto latest = store_->latest_snapshot();
            if (!latest) throw NotFoundError("the store holds no snapshots");
            snap = store_->snapshot(*latest);
        }
        const TreeRecord* rec = snap->find(id);
        if (!rec) throw NotFoundError("unknown tree '" + id + "' in snapshot S" + std::to_string(snap->snapshot_id));
        TreeView view{rec, {}};
        ojson all = ojson::array();
        for (auto& a : store_->annotations()) {
            if (a.target_id != id) continue;
            all.push_back(to_json(a));
            const auto it = view.annotations.find(a.kind);
            if (it == view.annotations.end() || a.produced_at >= it->second.produced_at) view.annotations[a.kind] = a;
        }
        ojson j = to_json(view);
        j["snapshot_id"] = snap->snapshot_id;
        j["annotation_log"] = all;
        return json_response(200, j);
    }
    if (n == 4 && parts[0] == "api" && parts[1] == "trees" && parts[3] == "history") {
        only_params(params, {});
        const std::string id(parts[2]);
        ojson entries = ojson::array();
        for (const auto& e : tree_history(*store_, id)) {
            ojson changes = ojson::array();
            for (const auto& c : e.fields) changes.push_back({{"field", c.field}, {"old", c.old_value}, {"new", c.new_value}});
            entries.push_back({{"from", e.from},
                               {"to", e.to},
                               {"captured_at", format_timestamp(e.captured_at)},
                               {"change", e.change},
                               {"fields", changes}});
        }
        return json_response(200, ojson{{"tree_id", id}, {"history", entries}});
    }
    if (n == 3 && parts[0] == "api" && parts[1] == "stats" && parts[2] == "histogram") {
        const auto field = single(params, "field");
        if (!field) throw ValidationError("parameter 'field' is required", "field");
        int bins = 10;
        if (const auto b = single(params, "bins")) bins = static_cast<int>(parse_tile_int(*b, "bins"));
        const TreeQuery q = parse_tree_query(params, {"field", "bins"});
        return json_response(200, to_json(stats_histogram(*store_, q, parse_histogram_field(*field), bins)));
    }
    if (n == 4 && parts[0] == "api" && parts[1] == "sensors" && parts[3] == "series") {
        only_params(params, {"from", "to", "depth"});
        SeriesQuery q;
        q.sensor_id = std::string(parts[2]);
        if (const auto v = single(params, "from")) q.from = parse_timestamp(*v, "from");
        if (const auto v = single(params, "to")) q.to = parse_timestamp(*v, "to");
        if (const auto v = single(params, "depth")) q.depth = parse_depth(*v);
        if (q.from && q.to && *q.from > *q.to) throw ValidationError("'from' is later than 'to'", "from");
        ojson readings = ojson::array();
        for (const auto& r : store_->series(q)) {
            readings.push_back({{"timestamp", format_timestamp(r.timestamp)}, {"depth", to_string(r.depth)}, {"vwc", r.vwc}});
        }
        return json_response(200, ojson{{"sensor_id", q.sensor_id}, {"readings", readings}});
    }
    if (n == 2 && parts[0] == "api" && parts[1] == "layers") {
        only_params(params, {});
        ojson arr = ojson::array();
        for (const auto& l : layers_) {
            const MercatorBounds b = layer_bounds(l);
            ojson j = ojson::object();
            j["name"] = l.name;
            j["kind"] = to_string(l.kind);
            j["crs"] = l.raster.crs();
            j["bounds_3857"] = {b.min_x, b.min_y, b.max_x, b.max_y};
            j["tiles"] = "/tiles/" + l.name + "/{z}/{x}/{y}.png";
            if (l.kind != LayerKind::rgb) {
                ojson legend = ojson::array();
                for (const auto& s : index_colormap()) legend.push_back({{"value", s.value}, {"rgb", s.rgb}});
                j["legend"] = legend;
            }
            arr.push_back(j);
        }
        return json_response(200, ojson{{"layers", arr}});
    }
    if (n == 5 && parts[0] == "tiles") {
        only_params(params, {});
        std::string_view last = parts[4];
        if (last.size() < 5 || last.substr(last.size() - 4) != ".png") throw NotFoundError("tiles are served as .png");
        TileAddress addr{std::string(parts[1]), static_cast<int>(parse_tile_int(parts[2], "z")),
                         parse_tile_int(parts[3], "x"), parse_tile_int(last.substr(0, last.size() - 4), "y")};
        const Layer* layer = nullptr;
        for (const auto& l : layers_)
            if (l.name == addr.layer) layer = &l;
        if (!layer) throw NotFoundError("unknown layer '" + addr.layer + "'");
        validate(addr);
        return {200, "image/png", render_tile(*layer, addr)};
    }
    throw NotFoundError("no route for '" + std::string(path) + "'");
}

void serve(const App& app, const std::string& host, int port) {
    httplib::Server server;
    server.Get(R"(/.*)", [&app](const httplib::Request& req, httplib::Response& res) {
        QueryParams params(req.params.begin(), req.params.end());
        const HttpResponse r = app.handle_get(req.path, params);
        res.status = r.status;
        res.set_content(r.body, r.content_type);
    });
    if (!server.bind_to_port(host, port)) throw IoError("cannot bind " + host + ":" + std::to_string(port));
    std::cerr << "serving on http://" << host << ':' << port << '\n';
    if (!server.listen_after_bind()) throw IoError("server stopped unexpectedly");
}

}  // namespace canopy
