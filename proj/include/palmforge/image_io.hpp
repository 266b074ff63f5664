#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "palmforge/image.hpp"

namespace palmforge {

// 8-bit grayscale PNG <-> GrayImage. Pixel p maps to v = 2p/255 - 1 on read;
// write quantizes with round((v+1)/2*255) clamped to [0,255]. Anything that
// is not an 8-bit, non-interlaced grayscale PNG is rejected.
GrayImage read_png(const std::string& path);
void write_png(const GrayImage& img, const std::string& path);

// Dense flow files: magic float 202021.25, int32 width, int32 height, then
// H*W interleaved (u, v) float32 pairs, everything little-endian, row-major.
// write(read(f)) is byte-identical. Wrong magic, truncation, and non-finite
// payloads are rejected with distinct error codes.
FlowField read_flo(const std::string& path);
void write_flo(const FlowField& flow, const std::string& path);

// Same flow container as the .flo files, but in memory; archive formats embed
// these blocks verbatim. `context` names the block in error messages.
std::vector<std::uint8_t> encode_flo(const FlowField& flow);
FlowField decode_flo(const std::uint8_t* bytes, std::size_t size,
                     const std::string& context);

// Single-channel variant of the flow container for noise fields; same layout
// with one float per pixel and magic float 212021.25.
NoiseField read_noise(const std::string& path);
void write_noise(const NoiseField& field, const std::string& path);

} // namespace palmforge
