#pragma once

// PMLB-format dataset fetch. Kept out of dataset.hpp so the heavy HTTP client is
// only compiled into translation units that actually fetch.

#include <filesystem>
#include <string>

#include <httplib.h>

#include "evopipe/dataset.hpp"
#include "evopipe/errors.hpp"

namespace evopipe {

inline constexpr const char* kDefaultPmlbBaseUrl =
    "https://github.com/EpistasisLab/pmlb/raw/master/datasets";

// Fetches <base_url>/<name>/<name>.tsv.gz, caches it under
// <cache_dir>/<name>.tsv.gz, and parses it. A cached copy short-circuits the
// network entirely.
inline Dataset fetch_pmlb(const std::string& name, const std::filesystem::path& cache_dir,
                          const std::string& base_url = kDefaultPmlbBaseUrl) {
    const std::filesystem::path cached = pmlb_cache_path(cache_dir, name);
    if (std::filesystem::exists(cached)) return load_pmlb_file(cached, name);

    // Split base_url into host part and path prefix.
    std::string url = base_url;
    std::string scheme_host = url;
    std::string prefix;
    const auto scheme_end = url.find("://");
    const auto path_start = url.find('/', scheme_end == std::string::npos ? 0 : scheme_end + 3);
    if (path_start != std::string::npos) {
        scheme_host = url.substr(0, path_start);
        prefix = url.substr(path_start);
    }
    const std::string request_path = prefix + "/" + name + "/" + name + ".tsv.gz";

    httplib::Client client(scheme_host);
    client.set_follow_location(true);
    client.set_connection_timeout(20);
    client.set_read_timeout(60);
    auto res = client.Get(request_path);
    if (!res)
        throw FetchError(0, "fetch_pmlb: connection to " + scheme_host + " failed (" +
                                httplib::to_string(res.error()) + ")");
    if (res->status != 200)
        throw FetchError(res->status, "fetch_pmlb: HTTP " + std::to_string(res->status) +
                                          " for " + scheme_host + request_path);
    if (res->body.size() < 2 || static_cast<unsigned char>(res->body[0]) != 0x1f ||
        static_cast<unsigned char>(res->body[1]) != 0x8b)
        throw ParseError("fetch_pmlb: response for '" + name + "' is not gzip data");

    std::error_code ec;
    std::filesystem::create_directories(cache_dir, ec);
    const std::filesystem::path tmp = cached.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw IoError("fetch_pmlb: cannot write cache file " + tmp.string());
        out.write(res->body.data(), static_cast<std::streamsize>(res->body.size()));
        if (!out) throw IoError("fetch_pmlb: cache write failed for " + tmp.string());
    }
    std::filesystem::rename(tmp, cached, ec);
    if (ec) throw IoError("fetch_pmlb: cannot move cache file into place: " + ec.message());

    return load_pmlb_file(cached, name);
}

}  // namespace evopipe
