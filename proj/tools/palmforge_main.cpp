// palmforge CLI: thin shell over the C API. All behaviour lives behind
// palmforge.h; this file only maps flags onto config overrides and prints
// the run summary each command returns.

#include <cstdio>
#include <cstdlib>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>

#include "palmforge/palmforge.h"

namespace {

struct ConfigDeleter {
    void operator()(pf_config* c) const { pf_config_free(c); }
};
using ConfigPtr = std::unique_ptr<pf_config, ConfigDeleter>;

struct StringDeleter {
    void operator()(char* s) const { pf_string_free(s); }
};
using StringPtr = std::unique_ptr<char, StringDeleter>;

[[noreturn]] void die(pf_status status) {
    std::fprintf(stderr, "error (%s): %s\n", pf_status_name(status), pf_last_error());
    std::exit(static_cast<int>(status));
}

void check(pf_status status) {
    if (status != PF_OK) die(status);
}

// Flags shared by every subcommand. Overrides apply in order: config file
// (--config, else $PALMFORGE_CONFIG, else defaults), then --set pairs, then
// the dedicated flags.
struct CommonOpts {
    std::string config_path;
    std::vector<std::string> sets; // KEY=VALUE
    std::string out_dir;
    std::string seed;
    std::string workers;
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
    cmd->add_option("--config", opts.config_path,
                    "JSON config file (default: $PALMFORGE_CONFIG if set)")
        ->check(CLI::ExistingFile);
    cmd->add_option("--set", opts.sets,
                    "Override one config key by dotted path, KEY=VALUE (repeatable)");
    cmd->add_option("--out", opts.out_dir, "Output tree root (output_dir)");
    cmd->add_option("--seed", opts.seed, "Master seed (master_seed)");
    cmd->add_option("--workers", opts.workers, "Worker thread count");
}

ConfigPtr build_config(const CommonOpts& opts,
                       const std::vector<std::pair<std::string, std::string>>& extra) {
    pf_config* raw = nullptr;
    std::string path = opts.config_path;
    if (path.empty()) {
        if (const char* env = std::getenv("PALMFORGE_CONFIG")) path = env;
    }
    check(path.empty() ? pf_config_default(&raw) : pf_config_load(path.c_str(), &raw));
    ConfigPtr config(raw);

    for (const auto& pair : opts.sets) {
        auto eq = pair.find('=');
        if (eq == std::string::npos || eq == 0) {
            std::fprintf(stderr, "error (invalid_argument): --set expects KEY=VALUE, got '%s'\n",
                         pair.c_str());
            std::exit(static_cast<int>(PF_INVALID_ARGUMENT));
        }
        check(pf_config_set(config.get(), pair.substr(0, eq).c_str(),
                            pair.substr(eq + 1).c_str()));
    }
    if (!opts.out_dir.empty()) check(pf_config_set(config.get(), "output_dir", opts.out_dir.c_str()));
    if (!opts.seed.empty()) check(pf_config_set(config.get(), "master_seed", opts.seed.c_str()));
    if (!opts.workers.empty()) check(pf_config_set(config.get(), "workers", opts.workers.c_str()));
    for (const auto& [key, value] : extra) {
        check(pf_config_set(config.get(), key.c_str(), value.c_str()));
    }
    return config;
}

void print_summary(const StringPtr& summary) {
    if (summary) std::printf("%s\n", summary.get());
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Deformation-driven palmprint generation pipeline"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(pf_version()));

    CommonOpts gen_opts;
    int gen_identities = 0, gen_pairs = 0;
    bool gen_force = false;
    auto* gen = app.add_subcommand("gen-corpus", "Render a synthetic labeled pair corpus");
    add_common(gen, gen_opts);
    gen->add_option("--identities", gen_identities, "Identities to synthesize");
    gen->add_option("--pairs", gen_pairs, "Image pairs per identity");
    gen->add_flag("--force", gen_force, "Replace an existing corpus/ slot");

    CommonOpts build_opts;
    bool build_ingest = false, build_force = false;
    auto* build = app.add_subcommand("build-library",
                                     "Filter corpus pairs into a deformation library");
    add_common(build, build_opts);
    build->add_flag("--ingest-flows", build_ingest,
                    "Score the stored truth flows instead of estimating");
    build->add_flag("--force", build_force, "Replace an existing library/ slot");

    CommonOpts sample_opts;
    int sample_identities = 0, sample_count = 0;
    bool sample_trace = false, sample_force = false;
    auto* sample = app.add_subcommand("sample",
                                      "Generate palmprints with library deformations");
    add_common(sample, sample_opts);
    sample->add_option("--identities", sample_identities, "Fresh identities to generate");
    sample->add_option("--count", sample_count, "Images per identity");
    sample->add_flag("--trace", sample_trace, "Write per-stage intermediates");
    sample->add_flag("--force", sample_force, "Replace an existing samples/ slot");

    CommonOpts eval_opts;
    std::string eval_generated, eval_reference;
    auto* eval = app.add_subcommand("evaluate",
                                    "Score a generated tree against a reference tree");
    add_common(eval, eval_opts);
    eval->add_option("--generated", eval_generated,
                     "Generated image tree (default: {out}/samples)");
    eval->add_option("--reference", eval_reference,
                     "Reference image tree (default: {out}/corpus)");

    CommonOpts demo_opts;
    bool demo_trace = true, demo_force = false;
    auto* demo = app.add_subcommand("demo",
                                    "Full pipeline: corpus, library, samples, metrics");
    add_common(demo, demo_opts);
    demo->add_flag("--trace,!--no-trace", demo_trace,
                   "Write per-stage intermediates (default: on)");
    demo->add_flag("--force", demo_force, "Replace existing output slots");

    std::string validate_root;
    auto* validate = app.add_subcommand("validate", "Re-check every artifact in an output tree");
    validate->add_option("root", validate_root, "Output tree root")->required();

    CLI11_PARSE(app, argc, argv);

    StringPtr summary;
    char* raw = nullptr;

    if (gen->parsed()) {
        std::vector<std::pair<std::string, std::string>> extra;
        if (gen->count("--identities")) extra.emplace_back("corpus.n_identities", std::to_string(gen_identities));
        if (gen->count("--pairs")) extra.emplace_back("corpus.pairs_per_identity", std::to_string(gen_pairs));
        auto config = build_config(gen_opts, extra);
        check(pf_run_gen_corpus(config.get(), gen_force ? 1 : 0, &raw));
    } else if (build->parsed()) {
        std::vector<std::pair<std::string, std::string>> extra;
        if (build_ingest) extra.emplace_back("library.ingest_flows", "true");
        auto config = build_config(build_opts, extra);
        check(pf_run_build_library(config.get(), build_force ? 1 : 0, &raw));
    } else if (sample->parsed()) {
        std::vector<std::pair<std::string, std::string>> extra;
        if (sample->count("--identities")) extra.emplace_back("sample.n_identities", std::to_string(sample_identities));
        if (sample->count("--count")) extra.emplace_back("sample.count_per_identity", std::to_string(sample_count));
        auto config = build_config(sample_opts, extra);
        check(pf_run_sample(config.get(), sample_trace ? 1 : 0, sample_force ? 1 : 0, &raw));
    } else if (eval->parsed()) {
        auto config = build_config(eval_opts, {});
        check(pf_run_evaluate(config.get(),
                              eval_generated.empty() ? nullptr : eval_generated.c_str(),
                              eval_reference.empty() ? nullptr : eval_reference.c_str(),
                              &raw));
    } else if (demo->parsed()) {
        auto config = build_config(demo_opts, {});
        check(pf_run_demo(config.get(), demo_trace ? 1 : 0, demo_force ? 1 : 0, &raw));
    } else if (validate->parsed()) {
        check(pf_validate_output_tree(validate_root.c_str()));
        std::printf("{\n  \"command\": \"validate\",\n  \"root\": \"%s\",\n  \"ok\": true\n}\n",
                    validate_root.c_str());
        return 0;
    }

    summary.reset(raw);
    print_summary(summary);
    return 0;
}
