#pragma once

#include "dw/project.hpp"

#include <memory>
#include <string>

namespace dw {

/// HTTP/JSON front of a project. Engine errors map to 400 with {kind, message}; stale
/// versions and a busy writer map to 409. Refresh progress is published as server-sent
/// events on GET /runs/progress.
class Service {
public:
    explicit Service(Project& project);
    ~Service();

    Service(const Service&) = delete;
    Service& operator=(const Service&) = delete;

    /// Binds `host:port`; port 0 picks a free port. Returns the bound port, or -1.
    int bind(const std::string& host, int port);
    /// Serves until stop(); call after bind().
    void serve();
    void stop();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

} // namespace dw
