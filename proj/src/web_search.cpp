#include "factrag/web_search.hpp"

#include <cctype>
#include <chrono>
#include <ctime>
#include <fstream>

#include <httplib.h>
#include <json.hpp>

#include "factrag/errors.hpp"
#include "factrag/tokenizer.hpp"

using nlohmann::json;

namespace factrag {

namespace {

std::vector<WebPage> parse_pages(const json& body, const std::string& origin) {
    if (!body.is_array()) {
        throw Error(ErrorCode::ProviderUnavailable, origin + ": expected a JSON array of pages");
    }
    std::vector<WebPage> pages;
    for (const json& p : body) {
        pages.push_back({p.value("url", ""), p.value("text", "")});
    }
    return pages;
}

std::string now_utc_iso8601() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

bool host_allowed(const std::string& host, const std::vector<std::string>& whitelist) {
    if (whitelist.empty()) return true;
    for (const std::string& allowed : whitelist) {
        if (host == allowed) return true;
        if (host.size() > allowed.size() &&
            host.compare(host.size() - allowed.size() - 1, allowed.size() + 1, "." + allowed) == 0) {
            return true;
        }
    }
    return false;
}

} // namespace

std::string url_host(std::string_view url) {
    std::string_view rest = url;
    const auto scheme = rest.find("://");
    if (scheme != std::string_view::npos) rest = rest.substr(scheme + 3);
    const auto end = rest.find_first_of("/?#");
    if (end != std::string_view::npos) rest = rest.substr(0, end);
    const auto at = rest.rfind('@');
    if (at != std::string_view::npos) rest = rest.substr(at + 1);
    const auto colon = rest.find(':');
    if (colon != std::string_view::npos) rest = rest.substr(0, colon);
    std::string host(rest);
    for (char& c : host) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return host;
}

FixtureWebProvider::FixtureWebProvider(std::filesystem::path dir) : dir_(std::move(dir)) {}

std::vector<WebPage> FixtureWebProvider::fetch(std::string_view query, std::size_t k) {
    std::filesystem::path file = dir_ / (fnv1a64_hex(query) + ".json");
    if (!std::filesystem::exists(file)) file = dir_ / "default.json";
    std::ifstream in(file, std::ios::binary);
    if (!in) {
        throw Error(ErrorCode::ProviderUnavailable, "no web fixture for query (looked for " +
                                                        file.string() + ")");
    }
    auto pages = parse_pages(json::parse(in), file.string());
    if (pages.size() > k) pages.resize(k);
    return pages;
}

HttpWebProvider::HttpWebProvider(std::string endpoint, int timeout_s)
    : endpoint_(std::move(endpoint)), timeout_s_(timeout_s) {}

std::vector<WebPage> HttpWebProvider::fetch(std::string_view query, std::size_t k) {
    httplib::Client client(endpoint_);
    client.set_connection_timeout(timeout_s_, 0);
    client.set_read_timeout(timeout_s_, 0);
    httplib::Params params{{"q", std::string(query)}, {"k", std::to_string(k)}};
    const auto res = client.Get("/search", params, httplib::Headers{});
    if (!res) {
        throw Error(ErrorCode::ProviderUnavailable, "web search endpoint unreachable: " + endpoint_,
                    true);
    }
    if (res->status != 200) {
        throw Error(ErrorCode::ProviderUnavailable,
                    "web search endpoint returned " + std::to_string(res->status), res->status >= 500);
    }
    auto pages = parse_pages(json::parse(res->body), endpoint_);
    if (pages.size() > k) pages.resize(k);
    return pages;
}

std::vector<WebSnippet> web_search(WebProvider& provider, std::string_view query, std::size_t k,
                                   const std::vector<std::string>& whitelist,
                                   const ChunkingConfig& chunking) {
    if (k == 0) throw Error(ErrorCode::PreconditionViolation, "k must be >= 1");
    const std::vector<WebPage> pages = provider.fetch(query, k);

    std::vector<WebSnippet> out;
    const std::string stamp = now_utc_iso8601();
    std::size_t next_wid = 1;
    bool any_page = false;
    for (const WebPage& page : pages) {
        if (!host_allowed(url_host(page.url), whitelist)) continue;
        any_page = true;
        if (page.text.empty()) continue;
        // Page text becomes paragraph chunks on the fly; chunk ids are
        // throwaway, only the snippet WIDs matter.
        for (const Chunk& c : split_into_chunks("web", page.text, chunking.max_chunk_tokens,
                                                chunking.overlap_tokens)) {
            if (out.size() >= k) break;
            WebSnippet snip;
            snip.wid = "WID-" + std::to_string(next_wid++);
            snip.url = page.url;
            snip.text = c.text;
            snip.retrieved_at = stamp;
            out.push_back(std::move(snip));
        }
        if (out.size() >= k) break;
    }
    if (!pages.empty() && !any_page) {
        throw Error(ErrorCode::AllResultsFiltered, "whitelist removed every web result");
    }
    return out;
}

} // namespace factrag
