#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "factrag/context.hpp"
#include "factrag/corpus_store.hpp"

namespace factrag {

struct WebPage {
    std::string url;
    std::string text;
};

/// Source of web results: a live search endpoint or canned fixtures.
class WebProvider {
public:
    virtual ~WebProvider() = default;
    virtual std::vector<WebPage> fetch(std::string_view query, std::size_t k) = 0;
};

/// Reads canned responses from a directory: `<dir>/<fnv1a64 hex of query>.json`
/// if present, else `<dir>/default.json`. File format: [{"url":..., "text":...}].
class FixtureWebProvider : public WebProvider {
public:
    explicit FixtureWebProvider(std::filesystem::path dir);
    std::vector<WebPage> fetch(std::string_view query, std::size_t k) override;

private:
    std::filesystem::path dir_;
};

/// GETs `<endpoint>/search?q=<query>&k=<k>` expecting a JSON array of
/// {url, text} objects.
class HttpWebProvider : public WebProvider {
public:
    explicit HttpWebProvider(std::string endpoint, int timeout_s = 10);
    std::vector<WebPage> fetch(std::string_view query, std::size_t k) override;

private:
    std::string endpoint_;
    int timeout_s_;
};

/// Fetches up to k pages, keeps those whose host passes the whitelist (empty
/// whitelist admits all), chunks page text with the corpus rules, and returns
/// at most k snippets with fresh WID-<n> identifiers. Nothing is persisted.
std::vector<WebSnippet> web_search(WebProvider& provider, std::string_view query, std::size_t k,
                                   const std::vector<std::string>& whitelist,
                                   const ChunkingConfig& chunking = {});

/// Host component of a URL, lowercased, with port and userinfo stripped.
/// Scheme-less input is treated as starting at the host.
std::string url_host(std::string_view url);

} // namespace factrag
