#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <thread>

#include "evopipe/pmlb.hpp"

using namespace evopipe;

namespace {

std::string gzip_bytes(const std::string& content) {
    auto tmp = std::filesystem::temp_directory_path() / "evopipe_fetch_payload.gz";
    detail::write_gzip_file(tmp, content);
    std::ifstream in(tmp, std::ios::binary);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

struct LocalServer {
    httplib::Server server;
    std::thread thread;
    int port = 0;

    explicit LocalServer(const std::string& tsv) {
        const std::string payload = gzip_bytes(tsv);
        server.Get("/datasets/tiny-set/tiny-set.tsv.gz",
                   [payload](const httplib::Request&, httplib::Response& res) {
                       res.set_content(payload, "application/gzip");
                   });
        server.Get("/datasets/not-gzip/not-gzip.tsv.gz",
                   [](const httplib::Request&, httplib::Response& res) {
                       res.set_content("plain text", "text/plain");
                   });
        port = server.bind_to_any_port("127.0.0.1");
        thread = std::thread([this] { server.listen_after_bind(); });
        server.wait_until_ready();
    }
    ~LocalServer() {
        server.stop();
        thread.join();
    }
    std::string base_url() const {
        return "http://127.0.0.1:" + std::to_string(port) + "/datasets";
    }
};

std::filesystem::path fresh_cache(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / name;
    std::filesystem::remove_all(dir);
    return dir;
}

}  // namespace

TEST_CASE("fetch_pmlb downloads, caches, and parses a PMLB-format file") {
    LocalServer server("a\tb\ttarget\n1\t2\t0\n3\t4\t1\n5\t6\t0\n");
    auto cache = fresh_cache("evopipe_fetch_cache");

    Dataset ds = fetch_pmlb("tiny-set", cache, server.base_url());
    REQUIRE(ds.n_rows() == 3);
    REQUIRE(ds.n_features() == 2);
    REQUIRE(ds.n_classes == 2);
    REQUIRE(ds.name == "tiny-set");
    REQUIRE(std::filesystem::exists(pmlb_cache_path(cache, "tiny-set")));
}

TEST_CASE("fetch_pmlb handles multi-class targets") {
    // car-evaluation-shaped: four target values
    LocalServer server("a\tb\ttarget\n1\t0\tunacc\n2\t1\tacc\n3\t0\tgood\n4\t1\tvgood\n5\t0\tacc\n");
    auto cache = fresh_cache("evopipe_fetch_cache_mc");
    Dataset ds = fetch_pmlb("tiny-set", cache, server.base_url());
    REQUIRE(ds.n_classes == 4);
    REQUIRE(ds.n_rows() == 5);
    // labels follow sorted raw-value order: acc < good < unacc < vgood
    REQUIRE(ds.labels == std::vector<int>{2, 0, 1, 3, 0});
}

TEST_CASE("fetch_pmlb uses the cache without touching the network") {
    auto cache = fresh_cache("evopipe_fetch_cache2");
    {
        LocalServer server("x\ttarget\n1\ta\n2\tb\n");
        fetch_pmlb("tiny-set", cache, server.base_url());
    }
    // the server is gone; an unreachable base URL must not matter
    Dataset ds = fetch_pmlb("tiny-set", cache, "http://127.0.0.1:1/datasets");
    REQUIRE(ds.n_rows() == 2);
}

TEST_CASE("fetch_pmlb reports HTTP failures with their status") {
    LocalServer server("x\ttarget\n1\ta\n2\tb\n");
    auto cache = fresh_cache("evopipe_fetch_cache3");
    try {
        fetch_pmlb("unknown-name", cache, server.base_url());
        FAIL("expected FetchError");
    } catch (const FetchError& e) {
        REQUIRE(e.status() == 404);
        REQUIRE(std::string(e.what()).find("404") != std::string::npos);
    }
    REQUIRE_FALSE(std::filesystem::exists(pmlb_cache_path(cache, "unknown-name")));
}

TEST_CASE("fetch_pmlb rejects non-gzip payloads") {
    LocalServer server("x\ttarget\n1\ta\n2\tb\n");
    auto cache = fresh_cache("evopipe_fetch_cache4");
    REQUIRE_THROWS_AS(fetch_pmlb("not-gzip", cache, server.base_url()), ParseError);
}

TEST_CASE("connection failures carry status zero") {
    auto cache = fresh_cache("evopipe_fetch_cache5");
    try {
        fetch_pmlb("tiny-set", cache, "http://127.0.0.1:1/datasets");
        FAIL("expected FetchError");
    } catch (const FetchError& e) {
        REQUIRE(e.status() == 0);
    }
}
