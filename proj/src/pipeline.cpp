#include "palmforge/pipeline.hpp"

#include <json.hpp>

#include <algorithm>
#include <array>
#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <memory>
#include <thread>

#include "palmforge/embedding.hpp"
#include "palmforge/error.hpp"
#include "palmforge/external_denoiser.hpp"
#include "palmforge/image_io.hpp"
#include "palmforge/rng.hpp"

namespace palmforge {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

[[noreturn]] void bad_config(const std::string& message) {
    fail(ErrorCode::config_error, message);
}

std::string joined(const std::string& path, const char* key) {
    return path.empty() ? std::string(key) : path + "." + key;
}

void check_keys(const json& obj, const std::string& path,
                std::initializer_list<const char*> allowed) {
    if (!obj.is_object())
        bad_config("config section '" + (path.empty() ? std::string("<root>") : path) +
                   "' must be a JSON object");
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        const bool known = std::any_of(allowed.begin(), allowed.end(),
                                       [&](const char* k) { return it.key() == k; });
        if (!known) bad_config("unknown config key: " + joined(path, it.key().c_str()));
    }
}

int get_int(const json& o, const std::string& path, const char* key, int fallback) {
    if (!o.contains(key)) return fallback;
    const json& v = o.at(key);
    if (!v.is_number_integer() && !v.is_number_unsigned())
        bad_config(joined(path, key) + " must be an integer");
    const auto wide = v.get<std::int64_t>();
    if (wide < INT32_MIN || wide > INT32_MAX)
        bad_config(joined(path, key) + " is out of range");
    return static_cast<int>(wide);
}

std::uint64_t get_u64(const json& o, const std::string& path, const char* key,
                      std::uint64_t fallback) {
    if (!o.contains(key)) return fallback;
    const json& v = o.at(key);
    if (v.is_number_unsigned()) return v.get<std::uint64_t>();
    if (v.is_number_integer() && v.get<std::int64_t>() >= 0)
        return static_cast<std::uint64_t>(v.get<std::int64_t>());
    bad_config(joined(path, key) + " must be a non-negative integer");
}

double get_double(const json& o, const std::string& path, const char* key, double fallback) {
    if (!o.contains(key)) return fallback;
    const json& v = o.at(key);
    if (!v.is_number()) bad_config(joined(path, key) + " must be a number");
    return v.get<double>();
}

bool get_bool(const json& o, const std::string& path, const char* key, bool fallback) {
    if (!o.contains(key)) return fallback;
    const json& v = o.at(key);
    if (!v.is_boolean()) bad_config(joined(path, key) + " must be a boolean");
    return v.get<bool>();
}

std::string get_string(const json& o, const std::string& path, const char* key,
                       const std::string& fallback) {
    if (!o.contains(key)) return fallback;
    const json& v = o.at(key);
    if (!v.is_string()) bad_config(joined(path, key) + " must be a string");
    return v.get<std::string>();
}

// Deterministic work pool: items are claimed from a shared cursor, results
// land in index-addressed slots, and the first failure is rethrown after
// join. Byte-level outputs therefore never depend on the worker count.
template <typename Fn>
void parallel_for(std::size_t n, int workers, const Fn& fn) {
    if (n == 0) return;
    std::atomic<std::size_t> cursor{0};
    std::vector<std::exception_ptr> errors(n);
    auto run = [&]() {
        for (;;) {
            const std::size_t i = cursor.fetch_add(1);
            if (i >= n) return;
            try {
                fn(i);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    const auto n_threads =
        std::min<std::size_t>(static_cast<std::size_t>(std::max(workers, 1)), n);
    if (n_threads <= 1) {
        run();
    } else {
        std::vector<std::thread> threads;
        threads.reserve(n_threads);
        for (std::size_t t = 0; t < n_threads; ++t) threads.emplace_back(run);
        for (std::thread& t : threads) t.join();
    }
    for (const std::exception_ptr& e : errors)
        if (e) std::rethrow_exception(e);
}

std::string read_text_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), ErrorCode::io_error, "cannot open " + path.string());
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    require(!in.bad(), ErrorCode::io_error, "cannot read " + path.string());
    return text;
}

void write_text_file(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    require(out.good(), ErrorCode::io_error, "cannot open " + path.string() + " for writing");
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    out.flush();
    require(out.good(), ErrorCode::io_error, "cannot write " + path.string());
}

json parse_json_file(const fs::path& path) {
    try {
        return json::parse(read_text_file(path));
    } catch (const json::exception& e) {
        fail(ErrorCode::format_error, path.string() + " is not valid JSON: " + e.what());
    }
}

// Claims one slot of the output tree: refuses a non-empty directory unless
// force, which replaces it wholesale.
void prepare_dir(const fs::path& dir, bool force, const char* what) {
    std::error_code ec;
    if (fs::exists(dir, ec)) {
        require(fs::is_directory(dir, ec), ErrorCode::io_error,
                dir.string() + " exists and is not a directory");
        if (!fs::is_empty(dir, ec)) {
            require(force, ErrorCode::invalid_argument,
                    std::string(what) + " output " + dir.string() +
                        " is not empty; pass --force to replace it");
            fs::remove_all(dir, ec);
            require(!ec, ErrorCode::io_error, "cannot clear " + dir.string());
        }
    }
    fs::create_directories(dir, ec);
    require(!ec, ErrorCode::io_error, "cannot create " + dir.string());
}

void dump_effective_config(const PipelineConfig& config) {
    std::error_code ec;
    fs::create_directories(config.output_dir, ec);
    require(!ec, ErrorCode::io_error, "cannot create " + config.output_dir);
    write_text_file(fs::path(config.output_dir) / "effective_config.json",
                    config.to_json() + "\n");
}

const json& manifest_field(const json& entry, const char* key, const char* context) {
    if (!entry.contains(key))
        fail(ErrorCode::format_error,
             std::string(context) + " entry is missing the '" + key + "' field");
    return entry.at(key);
}

std::string manifest_str(const json& entry, const char* key, const char* context) {
    const json& v = manifest_field(entry, key, context);
    require(v.is_string(), ErrorCode::format_error,
            std::string(context) + " field '" + key + "' must be a string");
    return v.get<std::string>();
}

std::string identity_name(const char* prefix, int index) {
    char buf[24];
    std::snprintf(buf, sizeof(buf), "%s%03d", prefix, index);
    return buf;
}

// {label-directory}/*.png, one level deep, labels and files in sorted order
// so embedding indices are stable. Trace subdirectories are skipped by
// construction (their images sit one level deeper).
struct TreeScan {
    std::vector<std::string> labels;
    std::vector<fs::path> files;
};

TreeScan scan_image_tree(const fs::path& root) {
    require(fs::exists(root), ErrorCode::not_found, "image tree not found: " + root.string());
    require(fs::is_directory(root), ErrorCode::invalid_argument,
            root.string() + " is not a directory");
    std::vector<fs::path> dirs;
    for (const auto& entry : fs::directory_iterator(root))
        if (entry.is_directory()) dirs.push_back(entry.path());
    std::sort(dirs.begin(), dirs.end());

    TreeScan scan;
    for (const fs::path& dir : dirs) {
        std::vector<fs::path> files;
        for (const auto& entry : fs::directory_iterator(dir))
            if (entry.is_regular_file() && entry.path().extension() == ".png")
                files.push_back(entry.path());
        std::sort(files.begin(), files.end());
        for (fs::path& f : files) {
            scan.labels.push_back(dir.filename().string());
            scan.files.push_back(std::move(f));
        }
    }
    require(!scan.files.empty(), ErrorCode::invalid_argument,
            "no {identity}/*.png images under " + root.string());
    return scan;
}

std::unique_ptr<Denoiser> make_denoiser(const PipelineConfig& config,
                                        const NoiseSchedule& schedule) {
    if (config.denoiser.kind == "gaussian") {
        GaussianDenoiserSpec spec;
        spec.data_std = config.denoiser.data_std;
        spec.condition_smoothing_sigma = config.denoiser.condition_smoothing_sigma;
        spec.unconditional_level = config.denoiser.unconditional_level;
        return gaussian_denoiser(spec, schedule);
    }
    ExternalDenoiserConfig spec;
    spec.command = config.denoiser.command;
    spec.height = config.resolution;
    spec.width = config.resolution;
    spec.T = config.sampler.T;
    return std::make_unique<ExternalDenoiser>(spec);
}

} // namespace

PipelineConfig PipelineConfig::from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        bad_config(std::string("config is not valid JSON: ") + e.what());
    }

    PipelineConfig c;
    check_keys(j, "",
               {"resolution", "master_seed", "workers", "output_dir", "corpus",
                "deformation", "estimator", "thresholds", "library", "sampler",
                "transport", "denoiser", "sample", "evaluate"});
    c.resolution = get_int(j, "", "resolution", c.resolution);
    c.master_seed = get_u64(j, "", "master_seed", c.master_seed);
    c.workers = get_int(j, "", "workers", c.workers);
    c.output_dir = get_string(j, "", "output_dir", c.output_dir);

    if (j.contains("corpus")) {
        const json& o = j.at("corpus");
        check_keys(o, "corpus",
                   {"n_identities", "pairs_per_identity", "corrupted_per_identity"});
        c.corpus.n_identities = get_int(o, "corpus", "n_identities", c.corpus.n_identities);
        c.corpus.pairs_per_identity =
            get_int(o, "corpus", "pairs_per_identity", c.corpus.pairs_per_identity);
        c.corpus.corrupted_per_identity =
            get_int(o, "corpus", "corrupted_per_identity", c.corpus.corrupted_per_identity);
    }
    if (j.contains("deformation")) {
        const json& o = j.at("deformation");
        check_keys(o, "deformation", {"max_displacement", "smoothness"});
        c.deformation.max_displacement =
            get_double(o, "deformation", "max_displacement", c.deformation.max_displacement);
        c.deformation.smoothness =
            get_double(o, "deformation", "smoothness", c.deformation.smoothness);
    }
    if (j.contains("estimator")) {
        const json& o = j.at("estimator");
        check_keys(o, "estimator",
                   {"regularization_weight", "iterations_per_level", "pyramid_levels"});
        c.estimator.regularization_weight = get_double(
            o, "estimator", "regularization_weight", c.estimator.regularization_weight);
        c.estimator.iterations_per_level =
            get_int(o, "estimator", "iterations_per_level", c.estimator.iterations_per_level);
        c.estimator.pyramid_levels =
            get_int(o, "estimator", "pyramid_levels", c.estimator.pyramid_levels);
    }
    if (j.contains("thresholds")) {
        const json& o = j.at("thresholds");
        check_keys(o, "thresholds", {"delta", "tau_d", "tau_c"});
        c.thresholds.delta = get_double(o, "thresholds", "delta", c.thresholds.delta);
        c.thresholds.tau_d = get_double(o, "thresholds", "tau_d", c.thresholds.tau_d);
        c.thresholds.tau_c = get_double(o, "thresholds", "tau_c", c.thresholds.tau_c);
    }
    if (j.contains("library")) {
        const json& o = j.at("library");
        check_keys(o, "library", {"ingest_flows"});
        c.library.ingest_flows = get_bool(o, "library", "ingest_flows", c.library.ingest_flows);
    }
    if (j.contains("sampler")) {
        const json& o = j.at("sampler");
        check_keys(o, "sampler", {"T", "t_star_fraction", "tau_u", "eta", "step_stride"});
        c.sampler.T = get_int(o, "sampler", "T", c.sampler.T);
        c.sampler.t_star_fraction =
            get_double(o, "sampler", "t_star_fraction", c.sampler.t_star_fraction);
        c.sampler.tau_u = get_double(o, "sampler", "tau_u", c.sampler.tau_u);
        c.sampler.eta = get_double(o, "sampler", "eta", c.sampler.eta);
        c.sampler.step_stride = get_int(o, "sampler", "step_stride", c.sampler.step_stride);
    }
    if (j.contains("transport")) {
        const json& o = j.at("transport");
        check_keys(o, "transport", {"subpixel_factor"});
        c.transport.subpixel_factor =
            get_int(o, "transport", "subpixel_factor", c.transport.subpixel_factor);
    }
    if (j.contains("denoiser")) {
        const json& o = j.at("denoiser");
        check_keys(o, "denoiser",
                   {"kind", "data_std", "condition_smoothing_sigma", "unconditional_level",
                    "command"});
        c.denoiser.kind = get_string(o, "denoiser", "kind", c.denoiser.kind);
        c.denoiser.data_std = get_double(o, "denoiser", "data_std", c.denoiser.data_std);
        c.denoiser.condition_smoothing_sigma = get_double(
            o, "denoiser", "condition_smoothing_sigma", c.denoiser.condition_smoothing_sigma);
        c.denoiser.unconditional_level = static_cast<float>(get_double(
            o, "denoiser", "unconditional_level", c.denoiser.unconditional_level));
        if (o.contains("command")) {
            const json& v = o.at("command");
            if (!v.is_array()) bad_config("denoiser.command must be an array of strings");
            c.denoiser.command.clear();
            for (const json& item : v) {
                if (!item.is_string())
                    bad_config("denoiser.command must be an array of strings");
                c.denoiser.command.push_back(item.get<std::string>());
            }
        }
    }
    if (j.contains("sample")) {
        const json& o = j.at("sample");
        check_keys(o, "sample", {"n_identities", "count_per_identity"});
        c.sample.n_identities = get_int(o, "sample", "n_identities", c.sample.n_identities);
        c.sample.count_per_identity =
            get_int(o, "sample", "count_per_identity", c.sample.count_per_identity);
    }
    if (j.contains("evaluate")) {
        const json& o = j.at("evaluate");
        check_keys(o, "evaluate", {"reduce_dim"});
        if (o.contains("reduce_dim")) {
            const json& v = o.at("reduce_dim");
            if (v.is_null())
                c.evaluate.reduce_dim.reset();
            else if (v.is_number_integer() || v.is_number_unsigned())
                c.evaluate.reduce_dim = v.get<int>();
            else
                bad_config("evaluate.reduce_dim must be an integer or null");
        }
    }

    c.validate();
    return c;
}

std::string PipelineConfig::to_json() const {
    json j;
    j["resolution"] = resolution;
    j["master_seed"] = master_seed;
    j["workers"] = workers;
    j["output_dir"] = output_dir;
    j["corpus"] = {{"n_identities", corpus.n_identities},
                   {"pairs_per_identity", corpus.pairs_per_identity},
                   {"corrupted_per_identity", corpus.corrupted_per_identity}};
    j["deformation"] = {{"max_displacement", deformation.max_displacement},
                        {"smoothness", deformation.smoothness}};
    j["estimator"] = {{"regularization_weight", estimator.regularization_weight},
                      {"iterations_per_level", estimator.iterations_per_level},
                      {"pyramid_levels", estimator.pyramid_levels}};
    j["thresholds"] = {{"delta", thresholds.delta},
                       {"tau_d", thresholds.tau_d},
                       {"tau_c", thresholds.tau_c}};
    j["library"] = {{"ingest_flows", library.ingest_flows}};
    j["sampler"] = {{"T", sampler.T},
                    {"t_star_fraction", sampler.t_star_fraction},
                    {"tau_u", sampler.tau_u},
                    {"eta", sampler.eta},
                    {"step_stride", sampler.step_stride}};
    j["transport"] = {{"subpixel_factor", transport.subpixel_factor}};
    j["denoiser"] = {{"kind", denoiser.kind},
                     {"data_std", denoiser.data_std},
                     {"condition_smoothing_sigma", denoiser.condition_smoothing_sigma},
                     {"unconditional_level", static_cast<double>(denoiser.unconditional_level)},
                     {"command", denoiser.command}};
    j["sample"] = {{"n_identities", sample.n_identities},
                   {"count_per_identity", sample.count_per_identity}};
    j["evaluate"] = {{"reduce_dim", evaluate.reduce_dim ? json(*evaluate.reduce_dim)
                                                        : json(nullptr)}};
    return j.dump(2);
}

void PipelineConfig::validate() const {
    // the embedder's block grid and the documented tree are defined at 256
    require(resolution == 256, ErrorCode::config_error, "resolution is fixed at 256");
    require(workers >= 1, ErrorCode::config_error, "workers must be >= 1");
    require(!output_dir.empty(), ErrorCode::config_error, "output_dir must not be empty");

    require(corpus.n_identities >= 1, ErrorCode::config_error,
            "corpus.n_identities must be >= 1");
    require(corpus.pairs_per_identity >= 0 && corpus.corrupted_per_identity >= 0,
            ErrorCode::config_error, "corpus pair counts must be non-negative");
    require(corpus.pairs_per_identity + corpus.corrupted_per_identity >= 1,
            ErrorCode::config_error, "corpus would be empty: no pairs per identity");

    require(deformation.max_displacement > 0.0, ErrorCode::config_error,
            "deformation.max_displacement must be positive");
    require(deformation.smoothness >= 8.0, ErrorCode::config_error,
            "deformation.smoothness must be >= 8 px");

    require(estimator.regularization_weight > 0.0, ErrorCode::config_error,
            "estimator.regularization_weight must be positive");
    require(estimator.iterations_per_level >= 1, ErrorCode::config_error,
            "estimator.iterations_per_level must be >= 1");
    require(estimator.pyramid_levels >= 1, ErrorCode::config_error,
            "estimator.pyramid_levels must be >= 1");

    require(thresholds.delta > 0.0, ErrorCode::config_error,
            "thresholds.delta must be positive");
    require(thresholds.tau_d > 0.0 && thresholds.tau_d <= 1.0, ErrorCode::config_error,
            "thresholds.tau_d must be in (0, 1]");
    require(thresholds.tau_c >= -1.0 && thresholds.tau_c < 1.0, ErrorCode::config_error,
            "thresholds.tau_c must be in [-1, 1)");

    (void)stage_plan(sampler); // throws config_error on any bad sampler combo

    require(transport.subpixel_factor >= 1, ErrorCode::config_error,
            "transport.subpixel_factor must be >= 1");

    require(denoiser.kind == "gaussian" || denoiser.kind == "external",
            ErrorCode::config_error,
            "denoiser.kind must be 'gaussian' or 'external', got '" + denoiser.kind + "'");
    require(denoiser.data_std > 0.0, ErrorCode::config_error,
            "denoiser.data_std must be positive");
    require(denoiser.condition_smoothing_sigma >= 0.0, ErrorCode::config_error,
            "denoiser.condition_smoothing_sigma must be >= 0");
    require(denoiser.unconditional_level >= -1.0f && denoiser.unconditional_level <= 1.0f,
            ErrorCode::config_error, "denoiser.unconditional_level must be in [-1, 1]");
    if (denoiser.kind == "external")
        require(!denoiser.command.empty(), ErrorCode::config_error,
                "denoiser.command is required when denoiser.kind is 'external'");

    require(sample.n_identities >= 1, ErrorCode::config_error,
            "sample.n_identities must be >= 1");
    require(sample.count_per_identity >= 1, ErrorCode::config_error,
            "sample.count_per_identity must be >= 1");

    if (evaluate.reduce_dim)
        require(*evaluate.reduce_dim >= 1, ErrorCode::config_error,
                "evaluate.reduce_dim must be >= 1 (or null to disable)");
}

PipelineConfig load_pipeline_config(const std::string& path) {
    return PipelineConfig::from_json(read_text_file(path));
}

void apply_override(PipelineConfig& config, const std::string& dotted_key,
                    const std::string& value) {
    require(!dotted_key.empty(), ErrorCode::config_error, "override key must not be empty");
    json doc = json::parse(config.to_json());

    std::vector<std::string> parts;
    std::size_t start = 0;
    while (true) {
        const std::size_t dot = dotted_key.find('.', start);
        parts.push_back(dotted_key.substr(start, dot - start));
        if (dot == std::string::npos) break;
        start = dot + 1;
    }

    json* node = &doc;
    for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
        if (!node->is_object() || !node->contains(parts[i]))
            bad_config("unknown config key: " + dotted_key);
        node = &node->at(parts[i]);
    }
    if (!node->is_object() || !node->contains(parts.back()))
        bad_config("unknown config key: " + dotted_key);

    json& slot = node->at(parts.back());
    if (slot.is_string()) {
        slot = json(value); // string-typed keys take the value verbatim
    } else {
        try {
            slot = json::parse(value);
        } catch (const json::exception&) {
            slot = json(value); // bare words ("gaussian") are strings
        }
    }

    config = PipelineConfig::from_json(doc.dump());
}

GenCorpusResult cmd_gen_corpus(const PipelineConfig& config, bool force) {
    config.validate();
    const fs::path dir = fs::path(config.output_dir) / "corpus";
    prepare_dir(dir, force, "corpus");
    dump_effective_config(config);

    const auto pairs =
        gen_pair_corpus(config.corpus.n_identities, config.corpus.pairs_per_identity,
                        config.deformation, config.master_seed, config.resolution,
                        config.corpus.corrupted_per_identity);

    for (const CorpusPair& p : pairs) fs::create_directories(dir / p.identity_id);
    std::vector<std::array<std::string, 3>> rel(pairs.size()); // src, tgt, flo
    parallel_for(pairs.size(), config.workers, [&](std::size_t i) {
        const CorpusPair& p = pairs[i];
        const std::string tail = p.pair_id.substr(p.pair_id.find('/') + 1);
        const std::string base = p.identity_id + "/" + tail;
        rel[i] = {base + "_src.png", base + "_tgt.png", base + "_truth.flo"};
        write_png(p.source, (dir / rel[i][0]).string());
        write_png(p.target, (dir / rel[i][1]).string());
        write_flo(p.truth, (dir / rel[i][2]).string());
    });

    json entries = json::array();
    for (std::size_t i = 0; i < pairs.size(); ++i)
        entries.push_back({{"identity", pairs[i].identity_id},
                           {"pair", pairs[i].pair_id},
                           {"source", rel[i][0]},
                           {"target", rel[i][1]},
                           {"truth_flow", rel[i][2]},
                           {"corrupted", pairs[i].corrupted}});
    const json manifest = {{"kind", "corpus"},
                           {"resolution", config.resolution},
                           {"seed", config.master_seed},
                           {"n_identities", config.corpus.n_identities},
                           {"pairs_per_identity", config.corpus.pairs_per_identity},
                           {"corrupted_per_identity", config.corpus.corrupted_per_identity},
                           {"entries", entries}};

    GenCorpusResult result;
    result.manifest_path = (dir / "manifest.json").string();
    result.n_entries = pairs.size();
    write_text_file(result.manifest_path, manifest.dump(2) + "\n");
    return result;
}

BuildLibraryResult cmd_build_library(const PipelineConfig& config, bool force) {
    config.validate();
    const fs::path corpus_dir = fs::path(config.output_dir) / "corpus";
    const fs::path manifest_path = corpus_dir / "manifest.json";
    require(fs::exists(manifest_path), ErrorCode::not_found,
            "corpus manifest not found: " + manifest_path.string() + "; run gen-corpus first");

    const json manifest = parse_json_file(manifest_path);
    require(manifest.value("kind", "") == std::string("corpus"), ErrorCode::format_error,
            manifest_path.string() + " is not a corpus manifest");
    const json& entries = manifest_field(manifest, "entries", "corpus manifest");
    require(entries.is_array(), ErrorCode::format_error,
            "corpus manifest 'entries' must be an array");
    require(!entries.empty(), ErrorCode::invalid_argument,
            "corpus is empty: nothing to build a library from");

    const fs::path dir = fs::path(config.output_dir) / "library";
    prepare_dir(dir, force, "library");
    dump_effective_config(config);

    std::vector<BuildPair> pairs(entries.size());
    parallel_for(entries.size(), config.workers, [&](std::size_t i) {
        const json& e = entries[static_cast<json::size_type>(i)];
        BuildPair p;
        p.pair_id = manifest_str(e, "pair", "corpus manifest");
        p.identity_id = manifest_str(e, "identity", "corpus manifest");
        p.source = read_png((corpus_dir / manifest_str(e, "source", "corpus manifest")).string());
        p.target = read_png((corpus_dir / manifest_str(e, "target", "corpus manifest")).string());
        if (config.library.ingest_flows)
            p.precomputed_flow = read_flo(
                (corpus_dir / manifest_str(e, "truth_flow", "corpus manifest")).string());
        pairs[i] = std::move(p);
    });

    const FlowEstimatorParams est = config.estimator;
    const BlockGradientEmbedder embedder;
    BuildLibraryResult result;
    const auto library = DeformationLibrary::build(
        pairs,
        [&est](const GrayImage& s, const GrayImage& t) { return estimate_flow(s, t, est); },
        embedder, config.thresholds, config.workers, &result.summary);

    result.library_path = (dir / "library.bin").string();
    library.save(result.library_path);

    const json summary = {
        {"kind", "library-summary"},
        {"total", result.summary.total},
        {"kept", result.summary.kept},
        {"rejected",
         {{"smoothness", result.summary.rejected_discontinuity},
          {"consistency", result.summary.rejected_consistency}}},
        {"degenerate_estimates", result.summary.degenerate_estimates},
        {"ingested_flows", config.library.ingest_flows},
        {"thresholds",
         {{"delta", config.thresholds.delta},
          {"tau_d", config.thresholds.tau_d},
          {"tau_c", config.thresholds.tau_c}}}};
    result.summary_path = (dir / "summary.json").string();
    write_text_file(result.summary_path, summary.dump(2) + "\n");
    return result;
}

SampleResult cmd_sample(const PipelineConfig& config, bool trace, bool force) {
    config.validate();
    const fs::path library_path = fs::path(config.output_dir) / "library" / "library.bin";
    require(fs::exists(library_path), ErrorCode::not_found,
            "library not found: " + library_path.string() + "; run build-library first");
    const auto library = DeformationLibrary::load(library_path.string());

    const fs::path dir = fs::path(config.output_dir) / "samples";
    prepare_dir(dir, force, "samples");
    dump_effective_config(config);

    const NoiseSchedule schedule = make_linear_schedule(config.sampler.T);
    const auto denoiser = make_denoiser(config, schedule);
    const StagePlan plan = stage_plan(config.sampler);

    const int n_ident = config.sample.n_identities;
    const int count = config.sample.count_per_identity;

    // Fresh synthetic identities; crease maps rendered once per identity.
    std::vector<std::string> names(static_cast<std::size_t>(n_ident));
    std::vector<GrayImage> creases(static_cast<std::size_t>(n_ident));
    parallel_for(names.size(), config.workers, [&](std::size_t i) {
        names[i] = identity_name("gen", static_cast<int>(i));
        const auto identity = CreaseIdentity::from_seed(
            derive_seed(config.master_seed, "gen-identity", i));
        creases[i] = gen_crease_map(identity, config.resolution);
    });
    for (std::size_t i = 0; i < names.size(); ++i) {
        fs::create_directories(dir / names[i]);
        if (trace)
            for (int k = 0; k < count; ++k)
                fs::create_directories(dir / names[i] / ("trace" + std::to_string(k)));
    }

    const std::size_t total = names.size() * static_cast<std::size_t>(count);
    parallel_for(total, config.workers, [&](std::size_t idx) {
        const std::size_t i = idx / static_cast<std::size_t>(count);
        const int k = static_cast<int>(idx % static_cast<std::size_t>(count));
        const DeformationRecord& record =
            library.sample(derive_seed(config.master_seed, "sample-deformation", i, k));

        SampleOptions options;
        options.transport = config.transport;
        // One noise stream per identity: its samples share the injected
        // noise and differ only through their deformations.
        options.shared_noise_seed = derive_seed(config.master_seed, "identity-noise", i);
        SampleTrace tr;
        if (trace) options.trace = &tr;

        const GrayImage image = sample_three_stage(
            *denoiser, creases[i], record, config.sampler, schedule,
            derive_seed(config.master_seed, "sample", i, k), options);
        write_png(image, (dir / names[i] / (std::to_string(k) + ".png")).string());

        if (trace) {
            const fs::path tdir = dir / names[i] / ("trace" + std::to_string(k));
            const std::string ts = std::to_string(plan.t_star);
            write_png(tr.condition_warped, (tdir / "condition_warped.png").string());
            write_png(tr.stage1_end.to_image_clamped(),
                      (tdir / ("stage1_t" + ts + ".png")).string());
            write_png(tr.x_clean.to_image_clamped(),
                      (tdir / ("clean_t" + ts + ".png")).string());
            write_png(tr.x_renoised.to_image_clamped(),
                      (tdir / ("renoised_t" + ts + ".png")).string());
            write_png(tr.stage2_end.to_image_clamped(),
                      (tdir / ("stage2_t" + std::to_string(plan.t_u) + ".png")).string());
            write_png(tr.final_unclamped.to_image_clamped(),
                      (tdir / "stage3_t0.png").string());
        }
    });

    json entries = json::array();
    for (std::size_t i = 0; i < names.size(); ++i)
        for (int k = 0; k < count; ++k) {
            json e = {{"identity", names[i]},
                      {"index", k},
                      {"path", names[i] + "/" + std::to_string(k) + ".png"}};
            if (trace) e["trace"] = names[i] + "/trace" + std::to_string(k);
            entries.push_back(std::move(e));
        }
    const json manifest = {{"kind", "samples"},        {"seed", config.master_seed},
                           {"n_identities", n_ident},  {"count_per_identity", count},
                           {"trace", trace},           {"entries", entries}};

    SampleResult result;
    result.manifest_path = (dir / "manifest.json").string();
    result.n_images = total;
    write_text_file(result.manifest_path, manifest.dump(2) + "\n");
    return result;
}

EvaluateResult cmd_evaluate(const PipelineConfig& config, const std::string& generated_tree,
                            const std::string& reference_tree) {
    config.validate();
    const fs::path root(config.output_dir);
    const fs::path gen_dir = generated_tree.empty() ? root / "samples" : fs::path(generated_tree);
    const fs::path ref_dir = reference_tree.empty() ? root / "corpus" : fs::path(reference_tree);

    const TreeScan gen = scan_image_tree(gen_dir);
    const TreeScan ref = scan_image_tree(ref_dir);

    const BlockGradientEmbedder embedder;
    auto embed_all = [&](const TreeScan& scan) {
        std::vector<std::vector<float>> embeddings(scan.files.size());
        parallel_for(scan.files.size(), config.workers, [&](std::size_t i) {
            embeddings[i] = embedder.embed(read_png(scan.files[i].string()));
        });
        return embeddings;
    };
    const auto gen_set = EmbeddingSet::create(embed_all(gen), gen.labels);
    const auto ref_set = EmbeddingSet::create(embed_all(ref), ref.labels);

    EvaluateResult result;
    result.report.frechet = frechet_distance(gen_set, ref_set, config.evaluate.reduce_dim);
    const ClassDistances classes = class_distances(gen_set, config.master_seed);
    result.report.inter = classes.inter;
    result.report.intra = classes.intra;
    result.report.n_samples = gen_set.size();
    result.report.dim = gen_set.dim();
    result.report.reduce_dim = config.evaluate.reduce_dim;
    result.report.seed = config.master_seed;

    dump_effective_config(config);
    result.metrics_path = (root / "metrics.json").string();
    write_text_file(result.metrics_path, to_json(result.report) + "\n");
    return result;
}

DemoResult cmd_demo(const PipelineConfig& config, bool trace, bool force) {
    DemoResult result;
    result.corpus = cmd_gen_corpus(config, force);
    result.library = cmd_build_library(config, force);
    result.samples = cmd_sample(config, trace, force);
    result.metrics = cmd_evaluate(config);
    validate_output_tree(config.output_dir);
    return result;
}

void validate_output_tree(const std::string& root) {
    const fs::path base(root);
    require(fs::is_directory(base), ErrorCode::not_found,
            "output tree not found: " + root);

    // format pass: every artifact must re-read through its own parser
    for (const auto& entry : fs::recursive_directory_iterator(base)) {
        if (!entry.is_regular_file()) continue;
        const std::string ext = entry.path().extension().string();
        if (ext == ".png")
            (void)read_png(entry.path().string());
        else if (ext == ".flo")
            (void)read_flo(entry.path().string());
        else if (ext == ".json")
            (void)parse_json_file(entry.path());
    }

    const fs::path config_path = base / "effective_config.json";
    require(fs::exists(config_path), ErrorCode::not_found,
            "missing effective_config.json under " + root);
    const PipelineConfig config = load_pipeline_config(config_path.string());

    const fs::path corpus_manifest = base / "corpus" / "manifest.json";
    if (fs::exists(corpus_manifest)) {
        const json manifest = parse_json_file(corpus_manifest);
        require(manifest.value("kind", "") == std::string("corpus"), ErrorCode::format_error,
                corpus_manifest.string() + " is not a corpus manifest");
        for (const json& e : manifest_field(manifest, "entries", "corpus manifest")) {
            for (const char* key : {"source", "target"}) {
                const GrayImage img = read_png(
                    (base / "corpus" / manifest_str(e, key, "corpus manifest")).string());
                require(img.height() == config.resolution && img.width() == config.resolution,
                        ErrorCode::integrity_error,
                        "corpus image resolution drifted from the config");
            }
            (void)read_flo(
                (base / "corpus" / manifest_str(e, "truth_flow", "corpus manifest")).string());
        }
    }

    const fs::path library_path = base / "library" / "library.bin";
    if (fs::exists(library_path)) {
        const auto library = DeformationLibrary::load(library_path.string());
        library.validate();
        const json summary = parse_json_file(base / "library" / "summary.json");
        require(summary.value("kind", "") == std::string("library-summary"),
                ErrorCode::format_error, "library summary has the wrong kind");
        const json& kept = manifest_field(summary, "kept", "library summary");
        require(kept.is_number_unsigned() || kept.is_number_integer(),
                ErrorCode::format_error, "library summary 'kept' must be a count");
        require(kept.get<std::size_t>() == library.records().size(),
                ErrorCode::integrity_error,
                "library summary 'kept' disagrees with the stored record count");
    }

    const fs::path samples_manifest = base / "samples" / "manifest.json";
    if (fs::exists(samples_manifest)) {
        const json manifest = parse_json_file(samples_manifest);
        require(manifest.value("kind", "") == std::string("samples"), ErrorCode::format_error,
                samples_manifest.string() + " is not a samples manifest");
        for (const json& e : manifest_field(manifest, "entries", "samples manifest")) {
            const GrayImage img = read_png(
                (base / "samples" / manifest_str(e, "path", "samples manifest")).string());
            require(img.height() == config.resolution && img.width() == config.resolution,
                    ErrorCode::integrity_error,
                    "sample image resolution drifted from the config");
        }
    }

    const fs::path metrics_path = base / "metrics.json";
    if (fs::exists(metrics_path)) {
        const json metrics = parse_json_file(metrics_path);
        for (const char* key :
             {"frechet", "inter", "intra", "n_samples", "dim", "reduce_dim", "seed"})
            require(metrics.contains(key), ErrorCode::format_error,
                    std::string("metrics.json is missing the '") + key + "' field");
    }
}

} // namespace palmforge
