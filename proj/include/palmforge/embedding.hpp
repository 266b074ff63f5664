#pragma once

#include <vector>

#include "palmforge/image.hpp"

namespace palmforge {

// Maps an image to a unit-norm descriptor used by the identity-consistency
// check. Implementations must be deterministic and pure.
class Embedder {
  public:
    virtual ~Embedder() = default;
    virtual int dim() const = 0;
    // returns a vector of dim() floats with L2 norm 1 (within 1e-6)
    virtual std::vector<float> embed(const GrayImage& img) const = 0;
};

// Block gradient-orientation histogram: the 256x256 input is cut into an 8x8
// grid of 32px blocks; each block accumulates gradient magnitude into 8
// unsigned-orientation bins (angles mod pi). The 512 concatenated bins are
// L2-normalized; a constant image (all-zero histogram) maps to the first
// canonical basis vector so the output is always unit norm.
class BlockGradientEmbedder final : public Embedder {
  public:
    int dim() const override { return 512; }
    std::vector<float> embed(const GrayImage& img) const override;
};

// Plain cosine similarity; rejects mismatched dimensions and zero vectors.
double cosine_similarity(const std::vector<float>& a, const std::vector<float>& b);

} // namespace palmforge
