#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "palmforge/deformation_library.hpp"
#include "palmforge/diffusion.hpp"
#include "palmforge/flow_estimator.hpp"
#include "palmforge/metrics.hpp"
#include "palmforge/noise_transport.hpp"
#include "palmforge/synthetic.hpp"

namespace palmforge {

// Whole-run configuration. One JSON document, every key optional with these
// defaults, unknown keys rejected at every nesting level, round trip
// (from_json ∘ to_json) value-preserving. The working resolution is pinned
// to 256: the block-gradient embedder and the documented output tree are
// defined at that size.
struct PipelineConfig {
    int resolution = 256;
    std::uint64_t master_seed = 42;
    int workers = 1;
    std::string output_dir = "palmforge-out";

    struct Corpus {
        int n_identities = 10;
        int pairs_per_identity = 4;
        int corrupted_per_identity = 0;
        float texture_weight = 0.3f;
        double smooth_sigma = 1.0;
    } corpus;

    DeformationParams deformation;   // max_displacement, smoothness (no affine)
    FlowEstimatorParams estimator;   // regularization_weight, iterations, levels
    LibraryThresholds thresholds;    // delta, tau_d, tau_c

    struct Library {
        bool ingest_flows = false; // score the stored truth flows, skip estimation
    } library;

    SamplerConfig sampler;
    TransportConfig transport;

    struct DenoiserSpec {
        std::string kind = "gaussian"; // "gaussian" | "external"
        double data_std = 0.3;
        double condition_smoothing_sigma = 1.0;
        float unconditional_level = 0.0f;
        std::vector<std::string> command; // external server argv; required iff external
    } denoiser;

    struct Sample {
        int n_identities = 10;      // fresh synthetic identities to generate
        int count_per_identity = 4; // images per identity
    } sample;

    struct Evaluate {
        std::optional<int> reduce_dim = 32; // null disables projection
    } evaluate;

    static PipelineConfig from_json(const std::string& text);
    std::string to_json() const;
    void validate() const; // every module-level invariant, rechecked here
};

PipelineConfig load_pipeline_config(const std::string& path);

// Sets one key by dotted path ("sampler.T", "denoiser.kind", ...). The value
// is parsed as JSON when it is valid JSON, else taken as a string. Unknown
// paths and type mismatches are rejected; the updated config is re-validated.
void apply_override(PipelineConfig& config, const std::string& dotted_key,
                    const std::string& value);

// Fixed output tree rooted at config.output_dir:
//   effective_config.json
//   corpus/manifest.json, corpus/{identity}/p{j}_{src,tgt}.png + p{j}_truth.flo
//   library/library.bin, library/summary.json
//   samples/manifest.json, samples/{identity}/{k}.png (+ trace{k}/*.png)
//   metrics.json
// Each command owns one slot of that tree, refuses to overwrite a non-empty
// one without force, and re-dumps the effective config at the root.

struct GenCorpusResult {
    std::string manifest_path;
    std::size_t n_entries = 0;
};
GenCorpusResult cmd_gen_corpus(const PipelineConfig& config, bool force = false);

struct BuildLibraryResult {
    std::string library_path;
    std::string summary_path;
    BuildSummary summary;
};
BuildLibraryResult cmd_build_library(const PipelineConfig& config, bool force = false);

struct SampleResult {
    std::string manifest_path;
    std::size_t n_images = 0;
};
SampleResult cmd_sample(const PipelineConfig& config, bool trace = false,
                        bool force = false);

struct EvaluateResult {
    std::string metrics_path;
    MetricsReport report;
};
// Tree arguments default (when empty) to {output_dir}/samples vs
// {output_dir}/corpus. A tree is {label-directory}/*.png, one level deep;
// class statistics are computed on the generated tree.
EvaluateResult cmd_evaluate(const PipelineConfig& config,
                            const std::string& generated_tree = {},
                            const std::string& reference_tree = {});

struct DemoResult {
    GenCorpusResult corpus;
    BuildLibraryResult library;
    SampleResult samples;
    EvaluateResult metrics;
};
// gen-corpus -> build-library -> sample -> evaluate under one root, then
// re-reads every artifact it wrote (format + invariant re-checks).
DemoResult cmd_demo(const PipelineConfig& config, bool trace = true,
                    bool force = false);

// Re-reads everything under the output root: PNGs and flow files through
// their format readers, manifests and metrics against their schemas, the
// library through load() + validate(). Throws on the first violation.
void validate_output_tree(const std::string& root);

} // namespace palmforge
