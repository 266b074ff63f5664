#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "palmforge/embedding.hpp"
#include "palmforge/flow_estimator.hpp"
#include "palmforge/image.hpp"

namespace palmforge {

// Fraction of pixels whose 2x2 flow Jacobian has Frobenius norm strictly
// above delta. 0 for perfectly smooth fields, 1 for fields that jump
// everywhere. Translation-invariant. Field must be at least 3x3.
double discontinuity_ratio(const FlowField& flow, double delta);

// Cosine similarity between the embeddings of the warped source and the
// target: how much of the subject's identity the field preserves.
double identity_consistency(const FlowField& flow, const GrayImage& source,
                            const GrayImage& target, const Embedder& embedder);

struct LibraryThresholds {
    double tau_d = 0.01; // keep fields with discontinuity_ratio < tau_d
    double tau_c = 0.4;  // ... and identity_consistency > tau_c
    double delta = 5.0;  // Jacobian norm above which a pixel counts as a jump
};

struct DeformationRecord {
    FlowField flow;
    double discontinuity_ratio = 0.0;
    double consistency = 0.0;
    std::string source_pair_id;
    std::string identity_id;
};

// One estimation job: a same-identity image pair, optionally with a
// precomputed flow (ingested from a flow file) that skips estimation.
struct BuildPair {
    std::string pair_id;
    std::string identity_id;
    GrayImage source;
    GrayImage target;
    std::optional<FlowField> precomputed_flow;
};

struct BuildSummary {
    std::size_t total = 0;
    std::size_t kept = 0;
    std::size_t rejected_discontinuity = 0;
    std::size_t rejected_consistency = 0;
    std::size_t degenerate_estimates = 0; // constant-image pairs (flagged, still scored)
};

using FlowEstimatorFn =
    std::function<FlowResult(const GrayImage& source, const GrayImage& target)>;

// Immutable collection of deformation fields that passed both checks.
// Records keep the input order of the pairs that produced them regardless of
// how many workers scored the candidates. Safe to sample concurrently.
class DeformationLibrary {
  public:
    // Scores every pair and keeps the survivors. Rejects an empty pair list,
    // mixed resolutions, out-of-range thresholds, and a zero-record outcome
    // (such a library could never serve a sample).
    static DeformationLibrary build(const std::vector<BuildPair>& pairs,
                                    const FlowEstimatorFn& estimator,
                                    const Embedder& embedder,
                                    const LibraryThresholds& thresholds,
                                    int workers = 1, BuildSummary* summary = nullptr);

    const std::vector<DeformationRecord>& records() const { return records_; }
    const LibraryThresholds& thresholds() const { return thresholds_; }

    // Uniform seeded draw; same seed, same record. The identity overload
    // restricts the draw to records of one identity (no match -> error).
    const DeformationRecord& sample(std::uint64_t seed) const;
    const DeformationRecord& sample(std::uint64_t seed,
                                    const std::string& identity_id) const;

    // Binary container: magic, little-endian u64 index length, JSON index
    // (thresholds, per-record scores and payload offsets), then concatenated
    // flow blocks. load(save(lib)) is value-exact; load re-validates.
    void save(const std::string& path) const;
    static DeformationLibrary load(const std::string& path);

    // Re-checks stored invariants: scores in range and below/above their
    // thresholds, and each stored discontinuity ratio matching its flow.
    void validate() const;

  private:
    DeformationLibrary(std::vector<DeformationRecord> records,
                       LibraryThresholds thresholds);

    std::vector<DeformationRecord> records_;
    LibraryThresholds thresholds_;
};

} // namespace palmforge
