#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace palmforge {

// Labeled population of unit-norm embedding vectors. create() validates
// uniform dimension, unit norm (within 1e-6), and label alignment.
class EmbeddingSet {
  public:
    static EmbeddingSet create(std::vector<std::vector<float>> vectors,
                               std::vector<std::string> labels);

    std::size_t size() const { return vectors_.size(); }
    std::size_t dim() const { return vectors_.empty() ? 0 : vectors_[0].size(); }
    const std::vector<std::vector<float>>& vectors() const { return vectors_; }
    const std::vector<std::string>& labels() const { return labels_; }

  private:
    EmbeddingSet() = default;
    std::vector<std::vector<float>> vectors_;
    std::vector<std::string> labels_;
};

// Gaussian-approximation distance between two sample populations:
// sqrt(|mu_a - mu_b|^2 + Tr(Sa + Sb - 2 (Sa^1/2 Sb Sa^1/2)^1/2)), with
// matrix square roots via symmetric eigendecomposition (eigenvalues clamped
// at zero). When reduce_dim is set and below the ambient dimension, both
// sets are first projected onto the top principal components fitted on the
// union. Each set needs at least effective-dim + 1 samples.
double frechet_distance(const std::vector<std::vector<float>>& a,
                        const std::vector<std::vector<float>>& b,
                        std::optional<int> reduce_dim = 32);
double frechet_distance(const EmbeddingSet& a, const EmbeddingSet& b,
                        std::optional<int> reduce_dim = 32);

// Mean cosine distance (1 - cosine similarity) over same-label pairs
// (intra) and different-label pairs (inter). A statistic with no pairs is
// absent rather than an error. Categories above the pair cap are estimated
// from a seeded uniform subsample; pair counts report what was averaged.
struct ClassDistances {
    std::optional<double> inter;
    std::optional<double> intra;
    std::size_t inter_pairs = 0;
    std::size_t intra_pairs = 0;
};

inline constexpr std::size_t kClassPairCap = 1000000;

ClassDistances class_distances(const EmbeddingSet& e, std::uint64_t seed = 0);

// JSON evaluation record: {frechet, inter, intra, n_samples, dim,
// reduce_dim, seed}; absent statistics serialize as null.
struct MetricsReport {
    std::optional<double> frechet;
    std::optional<double> inter;
    std::optional<double> intra;
    std::size_t n_samples = 0;
    std::size_t dim = 0;
    std::optional<int> reduce_dim;
    std::uint64_t seed = 0;
};

std::string to_json(const MetricsReport& report);

} // namespace palmforge
