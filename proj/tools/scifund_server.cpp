#include <csignal>
#include <iostream>

#include <httplib.h>

#include "scifund/service.hpp"

namespace {
httplib::Server* g_server = nullptr;
}

int main() {
    const auto config = scifund::ServiceConfig::from_env();
    scifund::Service service(config);
    httplib::Server server;
    service.mount(server);
    g_server = &server;
    std::signal(SIGINT, [](int) { g_server->stop(); });
    std::signal(SIGTERM, [](int) { g_server->stop(); });
    std::cerr << "listening on " << config.host << ':' << config.port << '\n';
    if (!server.listen(config.host, config.port)) {
        std::cerr << "cannot bind " << config.host << ':' << config.port << '\n';
        return 1;
    }
    return 0;
}
