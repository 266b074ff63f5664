#pragma once

#include <cstdint>
#include <mutex>
#include <string>
#include <vector>

#include "palmforge/diffusion.hpp"

namespace palmforge {

// Noise predictor served by a child process over length-prefixed binary
// frames on its standard I/O. Every frame is a little-endian u32 byte count
// followed by the body. The client opens with a handshake frame {H, W, T}
// (three u32) which the server must echo verbatim; each request is then
// {t: i32, has_condition: u8, x: H*W f32, condition?: H*W f32} answered by
// {eps: H*W f32}.
struct ExternalDenoiserConfig {
    std::vector<std::string> command; // argv, command[0] = executable
    int height = 0;
    int width = 0;
    int T = 0;
};

// Spawns the server on construction and performs the handshake; the child
// is closed and reaped on destruction. evaluate() is serialized internally
// so the single request pipe is safe to use from concurrent samplers.
// SIGPIPE is ignored process-wide on first use; a vanished child surfaces
// as a protocol error instead.
class ExternalDenoiser final : public Denoiser {
  public:
    explicit ExternalDenoiser(const ExternalDenoiserConfig& config);
    ~ExternalDenoiser() override;

    ExternalDenoiser(const ExternalDenoiser&) = delete;
    ExternalDenoiser& operator=(const ExternalDenoiser&) = delete;

    NoiseField evaluate(const NoiseField& x, const GrayImage* condition,
                        int t) override;

  private:
    void shutdown() noexcept;
    void write_all(const std::uint8_t* data, std::size_t n);
    void read_all(std::uint8_t* data, std::size_t n);

    int height_ = 0;
    int width_ = 0;
    int T_ = 0;
    int pid_ = -1;
    int to_child_ = -1;
    int from_child_ = -1;
    std::mutex mutex_;
};

} // namespace palmforge
