#include "palmforge/metrics.hpp"

#include <Eigen/Dense>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <map>

#include "palmforge/error.hpp"
#include "palmforge/rng.hpp"

namespace palmforge {

namespace {

Eigen::MatrixXd to_matrix(const std::vector<std::vector<float>>& rows, const char* which) {
    require(!rows.empty(), ErrorCode::insufficient_samples,
            std::string(which) + " sample set is empty");
    const std::size_t d = rows[0].size();
    require(d > 0, ErrorCode::invalid_argument,
            std::string(which) + " sample set has zero-dimensional vectors");
    Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(d));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        require(rows[i].size() == d, ErrorCode::shape_mismatch,
                std::string(which) + " sample set has rows of differing dimension");
        for (std::size_t j = 0; j < d; ++j) {
            const float v = rows[i][j];
            require(std::isfinite(v), ErrorCode::non_finite,
                    std::string(which) + " sample set contains a non-finite value");
            m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = v;
        }
    }
    return m;
}

// Sample covariance with the unbiased 1/(n-1) normalizer.
Eigen::MatrixXd covariance(const Eigen::MatrixXd& x, const Eigen::RowVectorXd& mean) {
    const Eigen::MatrixXd centered = x.rowwise() - mean;
    return centered.transpose() * centered / static_cast<double>(x.rows() - 1);
}

// PSD square root: eigendecompose, clamp eigenvalues at zero (covariance
// estimates can dip slightly negative numerically), rebuild.
Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
    require(es.info() == Eigen::Success, ErrorCode::internal_error,
            "eigendecomposition failed");
    Eigen::VectorXd lam = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return es.eigenvectors() * lam.asDiagonal() * es.eigenvectors().transpose();
}

std::size_t pairs_of(std::size_t n) { return n < 2 ? 0 : n * (n - 1) / 2; }

// 1 - cosine; rows of m are unit vectors, so cosine is the plain dot.
double cosine_distance(const Eigen::MatrixXd& m, std::size_t i, std::size_t j) {
    return 1.0 - m.row(static_cast<Eigen::Index>(i)).dot(m.row(static_cast<Eigen::Index>(j)));
}

// Uniform unordered pair {i, j} from [0, n), i != j.
std::pair<std::size_t, std::size_t> draw_pair(Rng& rng, std::size_t n) {
    const auto i = static_cast<std::size_t>(rng.below(n));
    auto j = static_cast<std::size_t>(rng.below(n - 1));
    if (j >= i) ++j;
    return {i, j};
}

} // namespace

EmbeddingSet EmbeddingSet::create(std::vector<std::vector<float>> vectors,
                                  std::vector<std::string> labels) {
    require(!vectors.empty(), ErrorCode::invalid_argument, "embedding set is empty");
    require(vectors.size() == labels.size(), ErrorCode::shape_mismatch,
            "embedding/label counts differ: " + std::to_string(vectors.size()) + " vs " +
                std::to_string(labels.size()));
    const std::size_t d = vectors[0].size();
    require(d > 0, ErrorCode::invalid_argument, "embedding vectors are zero-dimensional");
    for (std::size_t i = 0; i < vectors.size(); ++i) {
        require(vectors[i].size() == d, ErrorCode::shape_mismatch,
                "embedding " + std::to_string(i) + " has dimension " +
                    std::to_string(vectors[i].size()) + ", expected " + std::to_string(d));
        double norm2 = 0.0;
        for (float v : vectors[i]) {
            require(std::isfinite(v), ErrorCode::non_finite,
                    "embedding " + std::to_string(i) + " contains a non-finite value");
            norm2 += static_cast<double>(v) * v;
        }
        require(std::abs(std::sqrt(norm2) - 1.0) <= 1e-6, ErrorCode::invalid_argument,
                "embedding " + std::to_string(i) + " is not unit-norm (|v| = " +
                    std::to_string(std::sqrt(norm2)) + ")");
    }
    EmbeddingSet set;
    set.vectors_ = std::move(vectors);
    set.labels_ = std::move(labels);
    return set;
}

double frechet_distance(const std::vector<std::vector<float>>& a,
                        const std::vector<std::vector<float>>& b,
                        std::optional<int> reduce_dim) {
    Eigen::MatrixXd ma = to_matrix(a, "first");
    Eigen::MatrixXd mb = to_matrix(b, "second");
    require(ma.cols() == mb.cols(), ErrorCode::shape_mismatch,
            "sample sets have different dimensions: " + std::to_string(ma.cols()) + " vs " +
                std::to_string(mb.cols()));
    if (reduce_dim)
        require(*reduce_dim >= 1, ErrorCode::invalid_argument,
                "reduce_dim must be >= 1, got " + std::to_string(*reduce_dim));

    const auto d = ma.cols();
    // Reduction is a no-op when the target is not below the ambient dim.
    if (reduce_dim && *reduce_dim < d) {
        const auto k = static_cast<Eigen::Index>(*reduce_dim);
        Eigen::MatrixXd joint(ma.rows() + mb.rows(), d);
        joint << ma, mb;
        const Eigen::RowVectorXd mean = joint.colwise().mean();
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(covariance(joint, mean));
        require(es.info() == Eigen::Success, ErrorCode::internal_error,
                "eigendecomposition failed");
        // Eigen orders eigenvalues ascending; top components are rightmost.
        const Eigen::MatrixXd basis = es.eigenvectors().rightCols(k);
        ma = (ma.rowwise() - mean) * basis;
        mb = (mb.rowwise() - mean) * basis;
    }

    const auto k_eff = ma.cols();
    require(ma.rows() > k_eff && mb.rows() > k_eff, ErrorCode::insufficient_samples,
            "need at least dim + 1 = " + std::to_string(k_eff + 1) +
                " samples per set, got " + std::to_string(ma.rows()) + " and " +
                std::to_string(mb.rows()));

    const Eigen::RowVectorXd mu_a = ma.colwise().mean();
    const Eigen::RowVectorXd mu_b = mb.colwise().mean();
    const Eigen::MatrixXd cov_a = covariance(ma, mu_a);
    const Eigen::MatrixXd cov_b = covariance(mb, mu_b);

    const Eigen::MatrixXd root_a = psd_sqrt(cov_a);
    Eigen::MatrixXd inner = root_a * cov_b * root_a;
    inner = 0.5 * (inner + inner.transpose().eval()); // symmetrize roundoff
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(inner);
    require(es.info() == Eigen::Success, ErrorCode::internal_error,
            "eigendecomposition failed");
    const double tr_cross = es.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();

    const double fd2 =
        (mu_a - mu_b).squaredNorm() + cov_a.trace() + cov_b.trace() - 2.0 * tr_cross;
    const double fd = std::sqrt(std::max(fd2, 0.0));
    require(std::isfinite(fd), ErrorCode::non_finite, "distance is non-finite");
    return fd;
}

double frechet_distance(const EmbeddingSet& a, const EmbeddingSet& b,
                        std::optional<int> reduce_dim) {
    return frechet_distance(a.vectors(), b.vectors(), reduce_dim);
}

ClassDistances class_distances(const EmbeddingSet& e, std::uint64_t seed) {
    const Eigen::MatrixXd m = to_matrix(e.vectors(), "embedding");
    const std::size_t n = e.size();

    // Classes in sorted-label order so the subsample index space is stable.
    std::map<std::string, std::vector<std::size_t>> by_label;
    for (std::size_t i = 0; i < n; ++i) by_label[e.labels()[i]].push_back(i);
    std::vector<const std::vector<std::size_t>*> classes;
    classes.reserve(by_label.size());
    for (const auto& [label, members] : by_label) classes.push_back(&members);

    std::size_t intra_total = 0;
    std::vector<std::size_t> intra_prefix; // cumulative pair counts per class
    intra_prefix.reserve(classes.size());
    for (const auto* members : classes) {
        intra_total += pairs_of(members->size());
        intra_prefix.push_back(intra_total);
    }
    const std::size_t inter_total = pairs_of(n) - intra_total;

    ClassDistances out;

    if (intra_total > 0) {
        double sum = 0.0;
        if (intra_total <= kClassPairCap) {
            for (const auto* members : classes)
                for (std::size_t i = 0; i + 1 < members->size(); ++i)
                    for (std::size_t j = i + 1; j < members->size(); ++j)
                        sum += cosine_distance(m, (*members)[i], (*members)[j]);
            out.intra_pairs = intra_total;
        } else {
            Rng rng(derive_seed(seed, "intra-pairs"));
            for (std::size_t draw = 0; draw < kClassPairCap; ++draw) {
                // Class weighted by its pair count, then a uniform pair in it:
                // uniform over all same-label pairs overall.
                const auto u = static_cast<std::size_t>(rng.below(intra_total));
                const auto it = std::upper_bound(intra_prefix.begin(), intra_prefix.end(), u);
                const auto* members =
                    classes[static_cast<std::size_t>(it - intra_prefix.begin())];
                const auto [i, j] = draw_pair(rng, members->size());
                sum += cosine_distance(m, (*members)[i], (*members)[j]);
            }
            out.intra_pairs = kClassPairCap;
        }
        out.intra = sum / static_cast<double>(out.intra_pairs);
    }

    if (inter_total > 0) {
        double sum = 0.0;
        if (inter_total <= kClassPairCap) {
            for (std::size_t ca = 0; ca + 1 < classes.size(); ++ca)
                for (std::size_t cb = ca + 1; cb < classes.size(); ++cb)
                    for (std::size_t i : *classes[ca])
                        for (std::size_t j : *classes[cb]) sum += cosine_distance(m, i, j);
            out.inter_pairs = inter_total;
        } else {
            // Rejection from all pairs; acceptance rate is the inter fraction,
            // which is large whenever inter pairs dominate enough to exceed
            // the cap while intra does not force a tiny ratio.
            Rng rng(derive_seed(seed, "inter-pairs"));
            for (std::size_t draw = 0; draw < kClassPairCap; ++draw) {
                while (true) {
                    const auto [i, j] = draw_pair(rng, n);
                    if (e.labels()[i] != e.labels()[j]) {
                        sum += cosine_distance(m, i, j);
                        break;
                    }
                }
            }
            out.inter_pairs = kClassPairCap;
        }
        out.inter = sum / static_cast<double>(out.inter_pairs);
    }

    return out;
}

std::string to_json(const MetricsReport& report) {
    nlohmann::json j;
    j["frechet"] = report.frechet ? nlohmann::json(*report.frechet) : nlohmann::json(nullptr);
    j["inter"] = report.inter ? nlohmann::json(*report.inter) : nlohmann::json(nullptr);
    j["intra"] = report.intra ? nlohmann::json(*report.intra) : nlohmann::json(nullptr);
    j["n_samples"] = report.n_samples;
    j["dim"] = report.dim;
    j["reduce_dim"] =
        report.reduce_dim ? nlohmann::json(*report.reduce_dim) : nlohmann::json(nullptr);
    j["seed"] = report.seed;
    return j.dump(2);
}

} // namespace palmforge
