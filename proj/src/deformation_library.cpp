#include "palmforge/deformation_library.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <memory>
#include <thread>
#include <utility>

#include <json.hpp>

#include "palmforge/error.hpp"
#include "palmforge/image_io.hpp"
#include "palmforge/rng.hpp"

namespace palmforge {

namespace {

constexpr char kLibraryMagic[8] = {'P', 'A', 'L', 'M', 'L', 'I', 'B', '1'};

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

void check_thresholds(const LibraryThresholds& t) {
    require(t.tau_d > 0.0 && t.tau_d <= 1.0, ErrorCode::invalid_argument,
            "tau_d must be in (0, 1]");
    require(t.tau_c > -1.0 && t.tau_c < 1.0, ErrorCode::invalid_argument,
            "tau_c must be in (-1, 1)");
    require(t.delta > 0.0, ErrorCode::invalid_argument, "delta must be positive");
}

} // namespace

double discontinuity_ratio(const FlowField& flow, double delta) {
    require(delta > 0.0, ErrorCode::invalid_argument, "delta must be positive");
    const Jacobian jac = jacobian(flow); // enforces the >= 3x3 precondition
    const std::size_t n = static_cast<std::size_t>(jac.height) * jac.width;
    std::size_t flagged = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const float* j = jac.data.data() + 4 * i;
        const double norm_sq = static_cast<double>(j[0]) * j[0] +
                               static_cast<double>(j[1]) * j[1] +
                               static_cast<double>(j[2]) * j[2] +
                               static_cast<double>(j[3]) * j[3];
        if (norm_sq > delta * delta) ++flagged;
    }
    return static_cast<double>(flagged) / static_cast<double>(n);
}

double identity_consistency(const FlowField& flow, const GrayImage& source,
                            const GrayImage& target, const Embedder& embedder) {
    require(source.height() == target.height() && source.width() == target.width(),
            ErrorCode::shape_mismatch, "consistency inputs must share a shape");
    require(flow.height() == source.height() && flow.width() == source.width(),
            ErrorCode::shape_mismatch, "flow shape must match the images");
    const GrayImage warped = warp_bilinear(source, flow);
    return cosine_similarity(embedder.embed(warped), embedder.embed(target));
}

DeformationLibrary::DeformationLibrary(std::vector<DeformationRecord> records,
                                       LibraryThresholds thresholds)
    : records_(std::move(records)), thresholds_(thresholds) {}

DeformationLibrary DeformationLibrary::build(const std::vector<BuildPair>& pairs,
                                             const FlowEstimatorFn& estimator,
                                             const Embedder& embedder,
                                             const LibraryThresholds& thresholds,
                                             int workers, BuildSummary* summary) {
    require(!pairs.empty(), ErrorCode::invalid_argument,
            "cannot build a library from zero pairs");
    require(workers >= 1, ErrorCode::invalid_argument, "need at least one worker");
    check_thresholds(thresholds);
    const int h = pairs.front().source.height();
    const int w = pairs.front().source.width();
    for (const BuildPair& p : pairs) {
        require(p.source.height() == h && p.source.width() == w &&
                    p.target.height() == h && p.target.width() == w,
                ErrorCode::shape_mismatch, "all pairs must share one resolution");
        if (p.precomputed_flow)
            require(p.precomputed_flow->height() == h && p.precomputed_flow->width() == w,
                    ErrorCode::shape_mismatch,
                    "precomputed flow resolution must match the images");
    }

    struct Scored {
        FlowField flow;
        double d = 0.0, c = 0.0;
        bool degenerate = false;
    };
    std::vector<Scored> scored(pairs.size());
    std::vector<std::exception_ptr> errors(pairs.size());
    std::atomic<std::size_t> cursor{0};

    auto run = [&]() {
        for (;;) {
            const std::size_t i = cursor.fetch_add(1);
            if (i >= pairs.size()) return;
            try {
                const BuildPair& p = pairs[i];
                Scored s;
                if (p.precomputed_flow) {
                    s.flow = *p.precomputed_flow;
                } else {
                    FlowResult r = estimator(p.source, p.target);
                    s.flow = std::move(r.flow);
                    s.degenerate = r.degenerate;
                }
                s.d = discontinuity_ratio(s.flow, thresholds.delta);
                // the cheap geometric check gates the embedding work
                if (s.d < thresholds.tau_d)
                    s.c = identity_consistency(s.flow, p.source, p.target, embedder);
                scored[i] = std::move(s);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };

    const int n_threads = static_cast<int>(
        std::min<std::size_t>(static_cast<std::size_t>(workers), pairs.size()));
    if (n_threads <= 1) {
        run();
    } else {
        std::vector<std::thread> threads;
        threads.reserve(static_cast<std::size_t>(n_threads));
        for (int t = 0; t < n_threads; ++t) threads.emplace_back(run);
        for (std::thread& t : threads) t.join();
    }
    for (const std::exception_ptr& e : errors)
        if (e) std::rethrow_exception(e);

    BuildSummary local;
    local.total = pairs.size();
    std::vector<DeformationRecord> records;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        Scored& s = scored[i];
        if (s.degenerate) ++local.degenerate_estimates;
        if (s.d >= thresholds.tau_d) {
            ++local.rejected_discontinuity;
        } else if (s.c <= thresholds.tau_c) {
            ++local.rejected_consistency;
        } else {
            ++local.kept;
            records.push_back({std::move(s.flow), s.d, s.c, pairs[i].pair_id,
                               pairs[i].identity_id});
        }
    }
    if (summary) *summary = local;
    require(!records.empty(), ErrorCode::empty_library,
            "every candidate field was rejected; nothing to sample from");
    return DeformationLibrary(std::move(records), thresholds);
}

const DeformationRecord& DeformationLibrary::sample(std::uint64_t seed) const {
    require(!records_.empty(), ErrorCode::empty_library, "library has no records");
    Rng rng(derive_seed(seed, "sample-deformation"));
    return records_[rng.below(records_.size())];
}

const DeformationRecord& DeformationLibrary::sample(
    std::uint64_t seed, const std::string& identity_id) const {
    require(!records_.empty(), ErrorCode::empty_library, "library has no records");
    std::vector<std::size_t> matching;
    for (std::size_t i = 0; i < records_.size(); ++i)
        if (records_[i].identity_id == identity_id) matching.push_back(i);
    require(!matching.empty(), ErrorCode::not_found,
            "no records for identity " + identity_id);
    Rng rng(derive_seed(seed, "sample-deformation"));
    return records_[matching[rng.below(matching.size())]];
}

void DeformationLibrary::save(const std::string& path) const {
    nlohmann::json index;
    index["format"] = 1;
    index["tau_d"] = thresholds_.tau_d;
    index["tau_c"] = thresholds_.tau_c;
    index["delta"] = thresholds_.delta;

    std::vector<std::uint8_t> blob;
    nlohmann::json entries = nlohmann::json::array();
    for (const DeformationRecord& r : records_) {
        const std::vector<std::uint8_t> payload = encode_flo(r.flow);
        nlohmann::json e;
        e["pair_id"] = r.source_pair_id;
        e["identity_id"] = r.identity_id;
        e["discontinuity_ratio"] = r.discontinuity_ratio;
        e["consistency"] = r.consistency;
        e["offset"] = blob.size();
        e["length"] = payload.size();
        entries.push_back(std::move(e));
        blob.insert(blob.end(), payload.begin(), payload.end());
    }
    index["records"] = std::move(entries);
    const std::string json_text = index.dump();

    FilePtr f(std::fopen(path.c_str(), "wb"));
    require(f != nullptr, ErrorCode::io_error, "cannot open " + path);
    require(std::fwrite(kLibraryMagic, 1, 8, f.get()) == 8, ErrorCode::io_error,
            "short write");
    std::uint8_t len_le[8];
    const std::uint64_t len = json_text.size();
    std::memcpy(len_le, &len, 8);
    require(std::fwrite(len_le, 1, 8, f.get()) == 8, ErrorCode::io_error, "short write");
    require(std::fwrite(json_text.data(), 1, json_text.size(), f.get()) ==
                json_text.size(),
            ErrorCode::io_error, "short write");
    require(std::fwrite(blob.data(), 1, blob.size(), f.get()) == blob.size(),
            ErrorCode::io_error, "short write");
}

DeformationLibrary DeformationLibrary::load(const std::string& path) {
    FilePtr f(std::fopen(path.c_str(), "rb"));
    require(f != nullptr, ErrorCode::io_error, "cannot open " + path);
    std::vector<std::uint8_t> bytes;
    std::uint8_t chunk[65536];
    for (;;) {
        const std::size_t n = std::fread(chunk, 1, sizeof(chunk), f.get());
        bytes.insert(bytes.end(), chunk, chunk + n);
        if (n < sizeof(chunk)) break;
    }

    require(bytes.size() >= 16, ErrorCode::truncated, path + ": missing header");
    require(std::memcmp(bytes.data(), kLibraryMagic, 8) == 0, ErrorCode::format_error,
            path + ": not a deformation library file");
    std::uint64_t json_len = 0;
    std::memcpy(&json_len, bytes.data() + 8, 8);
    require(json_len > 0 && json_len <= bytes.size() - 16, ErrorCode::truncated,
            path + ": index does not fit in the file");

    nlohmann::json index;
    try {
        index = nlohmann::json::parse(bytes.begin() + 16,
                                      bytes.begin() + 16 + static_cast<std::ptrdiff_t>(json_len));
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::format_error, path + ": bad index: " + e.what());
    }

    const std::uint8_t* blob = bytes.data() + 16 + json_len;
    const std::size_t blob_size = bytes.size() - 16 - json_len;

    try {
        require(index.at("format").get<int>() == 1, ErrorCode::format_error,
                path + ": unsupported container version");
        LibraryThresholds thresholds;
        thresholds.tau_d = index.at("tau_d").get<double>();
        thresholds.tau_c = index.at("tau_c").get<double>();
        thresholds.delta = index.at("delta").get<double>();
        check_thresholds(thresholds);

        std::vector<DeformationRecord> records;
        for (const nlohmann::json& e : index.at("records")) {
            DeformationRecord r;
            r.source_pair_id = e.at("pair_id").get<std::string>();
            r.identity_id = e.at("identity_id").get<std::string>();
            r.discontinuity_ratio = e.at("discontinuity_ratio").get<double>();
            r.consistency = e.at("consistency").get<double>();
            const std::uint64_t offset = e.at("offset").get<std::uint64_t>();
            const std::uint64_t length = e.at("length").get<std::uint64_t>();
            require(offset <= blob_size && length <= blob_size - offset,
                    ErrorCode::integrity_error,
                    path + ": record payload lies outside the file");
            r.flow = decode_flo(blob + offset, static_cast<std::size_t>(length),
                                path + " record " + r.source_pair_id);
            records.push_back(std::move(r));
        }
        require(!records.empty(), ErrorCode::empty_library,
                path + ": container holds no records");
        DeformationLibrary lib(std::move(records), thresholds);
        lib.validate();
        return lib;
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::format_error, path + ": bad index: " + e.what());
    }
}

void DeformationLibrary::validate() const {
    for (const DeformationRecord& r : records_) {
        require(r.discontinuity_ratio >= 0.0 && r.discontinuity_ratio < thresholds_.tau_d,
                ErrorCode::integrity_error,
                "stored discontinuity ratio violates the library threshold");
        require(r.consistency > thresholds_.tau_c && r.consistency <= 1.0 + 1e-9,
                ErrorCode::integrity_error,
                "stored consistency violates the library threshold");
        const double recomputed = palmforge::discontinuity_ratio(r.flow, thresholds_.delta);
        require(recomputed == r.discontinuity_ratio, ErrorCode::integrity_error,
                "stored discontinuity ratio does not match its flow field");
    }
}

} // namespace palmforge
