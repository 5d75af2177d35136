#pragma once

#include "canopy/inventory.hpp"
#include "canopy/service.hpp"
#include "canopy/tiles.hpp"

#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

namespace canopy {

struct LayerConfig {
    std::string name;
    LayerKind kind = LayerKind::rgb;
    std::filesystem::path path;
};

struct AppConfig {
    std::filesystem::path store;
    std::vector<LayerConfig> layers;
    std::string host = "127.0.0.1";
    int port = 8080;
    std::string crs;  // CRS of cadastre coordinates
};

// TOML keys: store, crs, [server] host/port (or bind = "host:port"),
// [[layers]] name/kind/path. Relative paths resolve against the file's directory.
AppConfig read_app_config(const std::filesystem::path& path);
AppConfig parse_app_config(std::string_view text, const std::filesystem::path& base_dir = {});

struct HttpResponse {
    int status = 200;
    std::string content_type = "application/json";
    std::string body;
};

// Read-only request router shared by the HTTP server and tests.
class App {
public:
    App(std::shared_ptr<const InventoryStore> store, std::vector<Layer> layers, std::string crs = {});
    static App from_config(const AppConfig& config);

    // Never throws: errors become 4xx/5xx JSON bodies.
    HttpResponse handle_get(std::string_view path, const QueryParams& params) const;

    const std::vector<Layer>& layers() const { return layers_; }

private:
    HttpResponse route(std::string_view path, const QueryParams& params) const;

    std::shared_ptr<const InventoryStore> store_;
    std::vector<Layer> layers_;
    std::string crs_;
};

// Blocks serving GET requests until the process is stopped.
void serve(const App& app, const std::string& host, int port);

}  // namespace canopy
