#pragma once

#include <stdexcept>
#include <string>

namespace gridqa {

struct MalformedTag : std::runtime_error {
    explicit MalformedTag(const std::string& text)
        : std::runtime_error("malformed cell tag: '" + text + "'") {}
};

struct NotFound : std::runtime_error {
    explicit NotFound(const std::string& what) : std::runtime_error("not found: " + what) {}
};

struct ScenarioMismatch : std::runtime_error {
    explicit ScenarioMismatch(const std::string& what)
        : std::runtime_error("scenario mismatch: " + what) {}
};

struct EmptyRegion : std::runtime_error {
    explicit EmptyRegion(const std::string& what) : std::runtime_error("empty region: " + what) {}
};

struct MissingColumn : std::runtime_error {
    explicit MissingColumn(const std::string& name)
        : std::runtime_error("missing column: " + name) {}
};

struct EmptyTable : std::runtime_error {
    EmptyTable() : std::runtime_error("table has no data rows") {}
};

struct EmptySelection : std::runtime_error {
    EmptySelection() : std::runtime_error("empty variable selection") {}
};

struct UnknownTemplate : std::runtime_error {
    explicit UnknownTemplate(const std::string& id)
        : std::runtime_error("unknown template: " + id) {}
};

struct DimensionMismatch : std::runtime_error {
    DimensionMismatch(std::size_t a, std::size_t b)
        : std::runtime_error("embedding dimension mismatch: " + std::to_string(a) + " vs " +
                             std::to_string(b)) {}
};

struct ZeroVector : std::runtime_error {
    ZeroVector() : std::runtime_error("cosine of zero vector is undefined") {}
};

struct EmptyBatch : std::runtime_error {
    EmptyBatch() : std::runtime_error("embedding batch is empty") {}
};

struct GatewayError : std::runtime_error {
    enum class Kind { Timeout, RateLimited, Protocol, Auth };
    Kind kind;
    int attempts;
    GatewayError(Kind k, int att, const std::string& detail)
        : std::runtime_error("gateway error (" + kind_name(k) + ", attempts=" +
                             std::to_string(att) + "): " + detail),
          kind(k),
          attempts(att) {}
    static std::string kind_name(Kind k) {
        switch (k) {
            case Kind::Timeout: return "timeout";
            case Kind::RateLimited: return "rate_limited";
            case Kind::Protocol: return "protocol";
            case Kind::Auth: return "auth";
        }
        return "?";
    }
};

struct AllRecordsFailed : std::runtime_error {
    AllRecordsFailed() : std::runtime_error("every record failed during evaluation") {}
};

struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& what) : std::runtime_error("config error: " + what) {}
};

struct SchemaError : std::runtime_error {
    explicit SchemaError(const std::string& what) : std::runtime_error("schema error: " + what) {}
};

struct SinkError : std::runtime_error {
    explicit SinkError(const std::string& what) : std::runtime_error("write failed: " + what) {}
};

struct IoError : std::runtime_error {
    explicit IoError(const std::string& what) : std::runtime_error("io error: " + what) {}
};

}  // namespace gridqa
