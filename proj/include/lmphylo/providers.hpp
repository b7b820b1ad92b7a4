// Probing: obtaining completions from models and aggregating them into
// population profiles.
//
// Three providers sit behind one interface: live HTTP completion endpoints,
// synthetic models from the lab, and replay of recorded completions. The
// completion cache doubles as the replay file format: an append-only journal
// of raw completions per gene, so interrupted runs resume at probe
// granularity and a warm rerun issues zero requests.
//
// Requests are identical across providers: no stop sequences are sent, and
// allele truncation happens client-side only. Transport failures are retried
// with exponential backoff + jitter; a probe that still fails is recorded as
// a failure count, never dropped, keeping counts + failures == N per gene.
#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "lmphylo/errors.hpp"
#include "lmphylo/genome.hpp"
#include "lmphylo/population.hpp"
#include "lmphylo/synthlab.hpp"
#include "lmphylo/util/rng.hpp"

namespace lmphylo {

struct ProbeOptions {
    int max_retries = 3; // retries after the initial attempt
    int backoff_base_ms = 250;
    int timeout_sec = 60;
    double failure_ceiling = 0.5; // per-gene failure fraction marking a profile degraded
};

/// One model being probed. complete() must be safe to call from multiple
/// threads; draw_index makes deterministic providers reproducible and is
/// ignored by live endpoints.
class Prober {
public:
    virtual ~Prober() = default;
    virtual std::string complete(const Gene& gene, std::uint64_t draw_index) = 0;
    virtual std::int64_t retries_total() const { return 0; }
};

// ---- synthetic --------------------------------------------------------------

class SyntheticProber : public Prober {
public:
    explicit SyntheticProber(SyntheticModel model) : model_(std::move(model)) {
        model_.check_distributions();
    }

    std::string complete(const Gene& gene, std::uint64_t draw_index) override {
        return model_.sample_completion(gene.context, draw_index);
    }

    const SyntheticModel& model() const { return model_; }

private:
    SyntheticModel model_;
};

// ---- completion cache / replay -----------------------------------------------

struct ProbeCache {
    std::string model_id;
    std::string gene_fingerprint;
    std::string template_tag;
    std::map<std::string, std::vector<std::string>> completions; // gene id -> raw texts
};

inline ProbeCache probe_cache_from_string(const std::string& body, const std::string& origin) {
    ProbeCache cache;
    std::istringstream in(body);
    std::string line;
    std::size_t line_no = 0;
    bool saw_header = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty())
            continue;
        nlohmann::json obj;
        try {
            obj = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception&) {
            if (in.peek() == EOF)
                break; // torn trailing line from an interrupted append
            throw parse_error(origin + ", line " + std::to_string(line_no) + ": invalid record");
        }
        try {
            if (!saw_header) {
                if (!obj.contains("record") || obj["record"] != "probe-cache")
                    throw parse_error(origin + ": missing probe-cache header");
                if (obj.value("version", std::int64_t{-1}) != 1)
                    throw parse_error(origin + ": unsupported probe-cache version");
                cache.model_id = obj.at("model_id").get<std::string>();
                cache.gene_fingerprint = obj.value("gene_fingerprint", std::string());
                cache.template_tag = obj.value("template_tag", std::string());
                saw_header = true;
                continue;
            }
            auto& bucket = cache.completions[obj.at("gene").get<std::string>()];
            for (const auto& c : obj.at("completions"))
                bucket.push_back(c.get<std::string>());
        } catch (const nlohmann::json::exception& e) {
            throw parse_error(origin + ", line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    if (!saw_header)
        throw parse_error(origin + ": missing probe-cache header");
    return cache;
}

inline ProbeCache load_probe_cache(const std::filesystem::path& path) {
    return probe_cache_from_string(read_text_file(path), path.string());
}

class ReplayProber : public Prober {
public:
    ReplayProber(const std::filesystem::path& path, const std::string& model_id)
        : cache_(load_probe_cache(path)) {
        if (cache_.model_id != model_id)
            throw input_error("replay file " + path.string() + " belongs to model '" +
                              cache_.model_id + "', not '" + model_id + "'");
    }

    std::string complete(const Gene& gene, std::uint64_t draw_index) override {
        const auto it = cache_.completions.find(gene.id);
        if (it == cache_.completions.end())
            throw probe_error("replay: no recorded completions for gene " + gene.id);
        if (draw_index >= it->second.size())
            throw probe_error("replay: gene " + gene.id + " has only " +
                              std::to_string(it->second.size()) + " recorded completions");
        return it->second[draw_index];
    }

private:
    ProbeCache cache_;
};

// ---- http -------------------------------------------------------------------

namespace detail {

/// Split an endpoint URL into the client base (scheme://host[:port]) and path.
inline std::pair<std::string, std::string> split_endpoint(const std::string& url) {
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos)
        throw input_error("endpoint '" + url + "' has no scheme");
    const auto path_start = url.find('/', scheme_end + 3);
    if (path_start == std::string::npos)
        return {url, "/"};
    return {url.substr(0, path_start), url.substr(path_start)};
}

/// Map provider-specific response shapes to plain completion text.
inline std::string completion_from_response(const nlohmann::json& body) {
    if (body.contains("choices") && body["choices"].is_array() && !body["choices"].empty()) {
        const auto& choice = body["choices"][0];
        if (choice.contains("text") && choice["text"].is_string())
            return choice["text"].get<std::string>();
        if (choice.contains("message") && choice["message"].contains("content") &&
            choice["message"]["content"].is_string())
            return choice["message"]["content"].get<std::string>();
    }
    if (body.contains("tokens") && body["tokens"].is_array()) {
        std::string out;
        for (const auto& t : body["tokens"])
            out += t.get<std::string>();
        return out;
    }
    if (body.contains("content") && body["content"].is_array()) {
        std::string out;
        for (const auto& block : body["content"])
            if (block.contains("text") && block["text"].is_string())
                out += block["text"].get<std::string>();
        return out;
    }
    for (const char* field : {"text", "completion", "content"})
        if (body.contains(field) && body[field].is_string())
            return body[field].get<std::string>();
    throw probe_error("unrecognized completion response shape: " + body.dump().substr(0, 200));
}

} // namespace detail

class HttpProber : public Prober {
public:
    HttpProber(const ModelSpec& spec, const ProbeOptions& opts = {})
        : spec_(spec), opts_(opts) {
        if (spec.endpoint.empty())
            throw input_error("model '" + spec.id + "': http provider requires an endpoint");
        std::tie(base_, path_) = detail::split_endpoint(spec.endpoint);
        if (!spec.auth_env.empty()) {
            const char* secret = std::getenv(spec.auth_env.c_str());
            if (secret == nullptr || *secret == '\0')
                throw config_error("model '" + spec.id + "': environment variable " + spec.auth_env +
                                   " is not set");
            token_ = secret;
        }
    }

    std::string complete(const Gene& gene, std::uint64_t draw_index) override {
        (void)draw_index; // live endpoints sample fresh every call
        const nlohmann::json request{{"prompt", gene.context},
                                     {"max_tokens", spec_.sampling.max_new_tokens},
                                     {"temperature", spec_.sampling.temperature},
                                     {"top_p", spec_.sampling.top_p}};
        const std::string payload = request.dump();

        std::string last_error;
        for (int attempt = 0;; ++attempt) {
            // one client per call: httplib clients are not safe to share
            // across the worker threads issuing probes
            httplib::Client client(base_);
            client.set_connection_timeout(opts_.timeout_sec, 0);
            client.set_read_timeout(opts_.timeout_sec, 0);
            httplib::Headers headers;
            if (!token_.empty())
                headers.insert({"Authorization", "Bearer " + token_});
            const auto res = client.Post(path_, headers, payload, "application/json");

            if (res && res->status / 100 == 2) {
                try {
                    return detail::completion_from_response(nlohmann::json::parse(res->body));
                } catch (const nlohmann::json::exception& e) {
                    throw probe_error("model '" + spec_.id + "': invalid JSON in response: " + e.what());
                }
            }
            if (res && res->status / 100 == 4 && res->status != 429)
                throw probe_error("model '" + spec_.id + "': HTTP " + std::to_string(res->status));

            last_error = res ? "HTTP " + std::to_string(res->status)
                             : "transport error: " + httplib::to_string(res.error());
            if (attempt >= opts_.max_retries)
                throw probe_error("model '" + spec_.id + "': " + last_error + " after " +
                                  std::to_string(attempt + 1) + " attempts");
            retries_.fetch_add(1, std::memory_order_relaxed);
            backoff(attempt);
        }
    }

    std::int64_t retries_total() const override { return retries_.load(std::memory_order_relaxed); }

private:
    void backoff(int attempt) {
        auto rng = RngStream::keyed(stable_hash64(spec_.id), std::string_view("backoff"),
                                    static_cast<std::uint64_t>(attempt),
                                    nonce_.fetch_add(1, std::memory_order_relaxed));
        const double jitter = 0.5 + rng.uniform(); // [0.5, 1.5)
        const auto delay = static_cast<std::int64_t>(
            static_cast<double>(opts_.backoff_base_ms) * static_cast<double>(1 << attempt) * jitter);
        std::this_thread::sleep_for(std::chrono::milliseconds(delay));
    }

    ModelSpec spec_;
    ProbeOptions opts_;
    std::string base_, path_, token_;
    std::atomic<std::int64_t> retries_{0};
    std::atomic<std::uint64_t> nonce_{0};
};

// ---- factory ----------------------------------------------------------------

inline std::unique_ptr<Prober> make_prober(const ModelSpec& spec, const ProbeOptions& opts = {}) {
    switch (spec.provider) {
    case Provider::http:
        return std::make_unique<HttpProber>(spec, opts);
    case Provider::synthetic: {
        if (spec.endpoint.empty())
            throw input_error("model '" + spec.id + "': synthetic provider needs endpoint = models file");
        for (auto& m : load_synthetic_models(spec.endpoint))
            if (m.id == spec.id)
                return std::make_unique<SyntheticProber>(std::move(m));
        throw input_error("model '" + spec.id + "' not found in " + spec.endpoint);
    }
    case Provider::replay:
        if (spec.endpoint.empty())
            throw input_error("model '" + spec.id + "': replay provider needs endpoint = replay file");
        return std::make_unique<ReplayProber>(spec.endpoint, spec.id);
    }
    throw input_error("model '" + spec.id + "': unknown provider");
}

/// One completion for one gene (draw 0). Convenience wrapper over a
/// freshly built provider.
inline std::string probe_once(const ModelSpec& spec, const Gene& gene, const ProbeOptions& opts = {}) {
    return make_prober(spec, opts)->complete(gene, 0);
}

// ---- profile collection ------------------------------------------------------

struct CollectResult {
    PopulationProfile profile;
    std::int64_t probes_issued = 0; // attempts this run, successes + failures
    std::int64_t cache_hits = 0;
    std::int64_t retries = 0;
};

/// Collect N probes per gene, reusing cached completions first. New
/// completions are appended to the cache as each gene finishes, so an
/// interrupted run resumes where it stopped. Aggregation is per gene and
/// counts commute, so any worker interleaving yields the same profile.
inline CollectResult collect_profile(Prober& prober, const ModelSpec& spec, const GeneSet& genes,
                                     std::int64_t probes, int parallelism,
                                     const std::optional<std::filesystem::path>& cache_path = {},
                                     const ProbeOptions& opts = {}) {
    if (probes < 1)
        throw input_error("collect_profile: probes must be >= 1, got " + std::to_string(probes));
    if (genes.genes.empty())
        throw input_error("collect_profile: gene set is empty");
    if (parallelism < 1)
        throw input_error("collect_profile: parallelism must be >= 1");

    const std::string fingerprint = genes.fingerprint();
    const std::string template_tag = genes.template_tag();

    ProbeCache cache;
    bool cache_existed = false;
    if (cache_path && std::filesystem::exists(*cache_path) &&
        std::filesystem::file_size(*cache_path) > 0) {
        cache = load_probe_cache(*cache_path);
        cache_existed = true;
        if (cache.model_id != spec.id)
            throw input_error("cache " + cache_path->string() + " belongs to model '" +
                              cache.model_id + "', not '" + spec.id + "'");
        if (cache.gene_fingerprint != fingerprint)
            throw input_error("cache " + cache_path->string() +
                              " was recorded for a different gene set; use a fresh cache path");
        if (cache.template_tag != template_tag)
            throw input_error("cache " + cache_path->string() +
                              " was recorded under a different template");
    }

    std::ofstream journal;
    std::mutex journal_mutex;
    if (cache_path) {
        std::filesystem::create_directories(cache_path->parent_path().empty()
                                                ? std::filesystem::path(".")
                                                : cache_path->parent_path());
        journal.open(*cache_path, std::ios::app | std::ios::binary);
        if (!journal)
            throw io_error("cannot open cache " + cache_path->string());
        if (!cache_existed) {
            journal << nlohmann::json{{"record", "probe-cache"},
                                      {"version", 1},
                                      {"model_id", spec.id},
                                      {"gene_fingerprint", fingerprint},
                                      {"template_tag", template_tag}}
                           .dump()
                    << '\n';
            journal.flush();
        }
    }

    const std::size_t n_genes = genes.genes.size();
    std::vector<GeneCounts> per_gene(n_genes);
    std::atomic<std::int64_t> issued{0}, hits{0};
    std::atomic<std::size_t> next{0};
    std::exception_ptr first_error;
    std::mutex error_mutex;

    const auto worker = [&] {
        for (;;) {
            const std::size_t gi = next.fetch_add(1, std::memory_order_relaxed);
            if (gi >= n_genes)
                return;
            const Gene& gene = genes.genes[gi];
            try {
                std::vector<std::string> used;
                used.reserve(static_cast<std::size_t>(probes));
                const auto it = cache.completions.find(gene.id);
                if (it != cache.completions.end()) {
                    const std::size_t take =
                        std::min<std::size_t>(it->second.size(), static_cast<std::size_t>(probes));
                    used.assign(it->second.begin(),
                                it->second.begin() + static_cast<std::ptrdiff_t>(take));
                    hits.fetch_add(static_cast<std::int64_t>(take), std::memory_order_relaxed);
                }
                const std::size_t cached_n = used.size();
                std::vector<std::string> fresh;
                std::int64_t failures = 0;
                for (std::uint64_t k = cached_n; k < static_cast<std::uint64_t>(probes); ++k) {
                    issued.fetch_add(1, std::memory_order_relaxed);
                    try {
                        fresh.push_back(prober.complete(gene, k));
                    } catch (const probe_error&) {
                        ++failures;
                    }
                }
                if (journal.is_open() && !fresh.empty()) {
                    const std::string line =
                        nlohmann::json{{"gene", gene.id}, {"completions", fresh}}.dump();
                    std::lock_guard<std::mutex> lock(journal_mutex);
                    journal << line << '\n';
                    journal.flush();
                }
                GeneCounts counts;
                counts.failures = failures;
                for (const auto& text : used)
                    ++counts.counts[extract_allele(text, spec.sampling.allele_chars)];
                for (const auto& text : fresh)
                    ++counts.counts[extract_allele(text, spec.sampling.allele_chars)];
                per_gene[gi] = std::move(counts);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!first_error)
                    first_error = std::current_exception();
                return;
            }
        }
    };

    const int threads = static_cast<int>(
        std::min<std::size_t>(static_cast<std::size_t>(parallelism), n_genes));
    if (threads <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(static_cast<std::size_t>(threads));
        for (int t = 0; t < threads; ++t)
            pool.emplace_back(worker);
        for (auto& t : pool)
            t.join();
    }
    if (first_error)
        std::rethrow_exception(first_error);

    CollectResult result;
    result.profile.model_id = spec.id;
    result.profile.probes_requested = probes;
    result.profile.gene_fingerprint = fingerprint;
    result.profile.template_tag = template_tag;
    for (const auto& g : genes.genes)
        result.profile.gene_ids.push_back(g.id);
    result.profile.per_gene = std::move(per_gene);
    for (const auto& g : result.profile.per_gene)
        if (static_cast<double>(g.failures) > opts.failure_ceiling * static_cast<double>(probes))
            result.profile.degraded = true;
    result.profile.check_conservation();
    result.probes_issued = issued.load();
    result.cache_hits = hits.load();
    result.retries = prober.retries_total();
    return result;
}

/// ModelSpec-level convenience: builds the provider, then collects.
inline CollectResult collect_profile(const ModelSpec& spec, const GeneSet& genes, std::int64_t probes,
                                     int parallelism,
                                     const std::optional<std::filesystem::path>& cache_path = {},
                                     const ProbeOptions& opts = {}) {
    const auto prober = make_prober(spec, opts);
    return collect_profile(*prober, spec, genes, probes, parallelism, cache_path, opts);
}

} // namespace lmphylo
