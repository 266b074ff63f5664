#include "palmforge/palmforge.h"

#include <cstring>
#include <exception>
#include <new>
#include <string>

#include <nlohmann/json.hpp>

#include "palmforge/error.hpp"
#include "palmforge/pipeline.hpp"

using json = nlohmann::json;

struct pf_config {
    palmforge::PipelineConfig impl;
};

namespace {

thread_local std::string g_last_error;

char* copy_string(const std::string& text) {
    char* out = new char[text.size() + 1];
    std::memcpy(out, text.c_str(), text.size() + 1);
    return out;
}

void set_out(char** slot, const std::string& text) {
    if (slot) *slot = copy_string(text);
}

// Runs fn(), translating exceptions into status codes + the thread-local
// message. Success clears the message so pf_last_error() never reports stale
// failures.
template <typename Fn>
pf_status guarded(Fn&& fn) {
    try {
        fn();
        g_last_error.clear();
        return PF_OK;
    } catch (const palmforge::Error& e) {
        g_last_error = e.what();
        return static_cast<pf_status>(static_cast<int>(e.code()));
    } catch (const std::bad_alloc&) {
        g_last_error = "out of memory";
        return PF_INTERNAL_ERROR;
    } catch (const std::exception& e) {
        g_last_error = e.what();
        return PF_INTERNAL_ERROR;
    } catch (...) {
        g_last_error = "unknown error";
        return PF_INTERNAL_ERROR;
    }
}

void require_arg(const void* ptr, const char* name) {
    palmforge::require(ptr != nullptr, palmforge::ErrorCode::invalid_argument,
                       std::string(name) + " must not be null");
}

json corpus_summary(const palmforge::GenCorpusResult& r) {
    return json{{"command", "gen-corpus"},
                {"entries", r.n_entries},
                {"manifest", r.manifest_path}};
}

json library_summary(const palmforge::BuildLibraryResult& r) {
    return json{{"command", "build-library"},
                {"total", r.summary.total},
                {"kept", r.summary.kept},
                {"rejected",
                 {{"smoothness", r.summary.rejected_discontinuity},
                  {"consistency", r.summary.rejected_consistency}}},
                {"degenerate_estimates", r.summary.degenerate_estimates},
                {"library", r.library_path},
                {"summary", r.summary_path}};
}

json sample_summary(const palmforge::SampleResult& r) {
    return json{{"command", "sample"},
                {"images", r.n_images},
                {"manifest", r.manifest_path}};
}

json evaluate_summary(const palmforge::EvaluateResult& r) {
    return json{{"command", "evaluate"},
                {"metrics", r.metrics_path},
                {"report", json::parse(palmforge::to_json(r.report))}};
}

} // namespace

extern "C" {

const char* pf_version(void) { return "1.0.0"; }

const char* pf_status_name(pf_status status) {
    switch (status) {
        case PF_OK: return "ok";
        case PF_INVALID_ARGUMENT: return "invalid_argument";
        case PF_SHAPE_MISMATCH: return "shape_mismatch";
        case PF_IO_ERROR: return "io_error";
        case PF_FORMAT_ERROR: return "format_error";
        case PF_TRUNCATED: return "truncated";
        case PF_NON_FINITE: return "non_finite";
        case PF_INTEGRITY_ERROR: return "integrity_error";
        case PF_EMPTY_LIBRARY: return "empty_library";
        case PF_INSUFFICIENT_SAMPLES: return "insufficient_samples";
        case PF_CONFIG_ERROR: return "config_error";
        case PF_PROTOCOL_ERROR: return "protocol_error";
        case PF_NOT_FOUND: return "not_found";
        case PF_INTERNAL_ERROR: return "internal_error";
    }
    return "unknown";
}

const char* pf_last_error(void) { return g_last_error.c_str(); }

pf_status pf_config_default(pf_config** out) {
    return guarded([&] {
        require_arg(out, "out");
        *out = new pf_config{};
    });
}

pf_status pf_config_load(const char* path, pf_config** out) {
    return guarded([&] {
        require_arg(path, "path");
        require_arg(out, "out");
        *out = new pf_config{palmforge::load_pipeline_config(path)};
    });
}

pf_status pf_config_parse(const char* json_text, pf_config** out) {
    return guarded([&] {
        require_arg(json_text, "json_text");
        require_arg(out, "out");
        *out = new pf_config{palmforge::PipelineConfig::from_json(json_text)};
    });
}

pf_status pf_config_set(pf_config* config, const char* dotted_key, const char* value) {
    return guarded([&] {
        require_arg(config, "config");
        require_arg(dotted_key, "dotted_key");
        require_arg(value, "value");
        palmforge::apply_override(config->impl, dotted_key, value);
    });
}

pf_status pf_config_dump(const pf_config* config, char** json_out) {
    return guarded([&] {
        require_arg(config, "config");
        require_arg(json_out, "json_out");
        set_out(json_out, config->impl.to_json());
    });
}

void pf_config_free(pf_config* config) { delete config; }

void pf_string_free(char* text) { delete[] text; }

pf_status pf_run_gen_corpus(const pf_config* config, int force, char** summary_json_out) {
    return guarded([&] {
        require_arg(config, "config");
        auto result = palmforge::cmd_gen_corpus(config->impl, force != 0);
        set_out(summary_json_out, corpus_summary(result).dump(2));
    });
}

pf_status pf_run_build_library(const pf_config* config, int force,
                               char** summary_json_out) {
    return guarded([&] {
        require_arg(config, "config");
        auto result = palmforge::cmd_build_library(config->impl, force != 0);
        set_out(summary_json_out, library_summary(result).dump(2));
    });
}

pf_status pf_run_sample(const pf_config* config, int trace, int force,
                        char** summary_json_out) {
    return guarded([&] {
        require_arg(config, "config");
        auto result = palmforge::cmd_sample(config->impl, trace != 0, force != 0);
        set_out(summary_json_out, sample_summary(result).dump(2));
    });
}

pf_status pf_run_evaluate(const pf_config* config, const char* generated_tree,
                          const char* reference_tree, char** summary_json_out) {
    return guarded([&] {
        require_arg(config, "config");
        auto result = palmforge::cmd_evaluate(config->impl,
                                              generated_tree ? generated_tree : "",
                                              reference_tree ? reference_tree : "");
        set_out(summary_json_out, evaluate_summary(result).dump(2));
    });
}

pf_status pf_run_demo(const pf_config* config, int trace, int force,
                      char** summary_json_out) {
    return guarded([&] {
        require_arg(config, "config");
        auto result = palmforge::cmd_demo(config->impl, trace != 0, force != 0);
        json summary{{"command", "demo"},
                     {"gen_corpus", corpus_summary(result.corpus)},
                     {"build_library", library_summary(result.library)},
                     {"sample", sample_summary(result.samples)},
                     {"evaluate", evaluate_summary(result.metrics)}};
        set_out(summary_json_out, summary.dump(2));
    });
}

pf_status pf_validate_output_tree(const char* root) {
    return guarded([&] {
        require_arg(root, "root");
        palmforge::validate_output_tree(root);
    });
}

} // extern "C"
