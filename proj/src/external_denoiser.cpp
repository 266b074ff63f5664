#include "palmforge/external_denoiser.hpp"

#include <bit>
#include <cmath>
#include <csignal>
#include <cstring>

#include <errno.h>
#include <fcntl.h>
#include <sys/wait.h>
#include <time.h>
#include <unistd.h>

#include "palmforge/error.hpp"

static_assert(std::endian::native == std::endian::little,
              "wire format is little-endian; big-endian hosts need byte swaps");

namespace palmforge {

namespace {

void ignore_sigpipe_once() {
    static std::once_flag flag;
    std::call_once(flag, [] { ::signal(SIGPIPE, SIG_IGN); });
}

void close_quiet(int& fd) {
    if (fd >= 0) {
        ::close(fd);
        fd = -1;
    }
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
    out.insert(out.end(), p, p + 4);
}

std::uint32_t get_u32(const std::uint8_t* p) {
    std::uint32_t v;
    std::memcpy(&v, p, 4);
    return v;
}

} // namespace

ExternalDenoiser::ExternalDenoiser(const ExternalDenoiserConfig& config)
    : height_(config.height), width_(config.width), T_(config.T) {
    require(!config.command.empty(), ErrorCode::invalid_argument,
            "external denoiser needs a command to run");
    require(height_ >= 1 && width_ >= 1, ErrorCode::invalid_argument,
            "external denoiser needs a positive frame shape");
    require(T_ >= 1, ErrorCode::invalid_argument,
            "external denoiser needs a positive timestep count");
    ignore_sigpipe_once();

    int to_pipe[2] = {-1, -1}, from_pipe[2] = {-1, -1}, exec_pipe[2] = {-1, -1};
    if (::pipe(to_pipe) != 0 || ::pipe(from_pipe) != 0 || ::pipe(exec_pipe) != 0)
        fail(ErrorCode::io_error, "could not create denoiser pipes");
    // the exec-status pipe closes on successful exec; a write means failure
    ::fcntl(exec_pipe[1], F_SETFD, FD_CLOEXEC);

    std::vector<char*> argv;
    argv.reserve(config.command.size() + 1);
    for (const std::string& arg : config.command)
        argv.push_back(const_cast<char*>(arg.c_str()));
    argv.push_back(nullptr);

    const pid_t pid = ::fork();
    if (pid < 0) {
        for (int fd : {to_pipe[0], to_pipe[1], from_pipe[0], from_pipe[1],
                       exec_pipe[0], exec_pipe[1]})
            ::close(fd);
        fail(ErrorCode::io_error, "could not fork the denoiser process");
    }
    if (pid == 0) {
        ::dup2(to_pipe[0], STDIN_FILENO);
        ::dup2(from_pipe[1], STDOUT_FILENO);
        for (int fd : {to_pipe[0], to_pipe[1], from_pipe[0], from_pipe[1],
                       exec_pipe[0]})
            ::close(fd);
        ::execvp(argv[0], argv.data());
        const int err = errno;
        ssize_t ignored = ::write(exec_pipe[1], &err, sizeof(err));
        (void)ignored;
        ::_exit(127);
    }

    pid_ = pid;
    to_child_ = to_pipe[1];
    from_child_ = from_pipe[0];
    ::close(to_pipe[0]);
    ::close(from_pipe[1]);
    ::close(exec_pipe[1]);

    int exec_err = 0;
    const ssize_t got = ::read(exec_pipe[0], &exec_err, sizeof(exec_err));
    ::close(exec_pipe[0]);
    if (got > 0) {
        shutdown();
        fail(ErrorCode::io_error, "could not start denoiser command '" +
                                      config.command[0] +
                                      "': " + std::strerror(exec_err));
    }

    try {
        std::vector<std::uint8_t> hello;
        put_u32(hello, 12);
        put_u32(hello, static_cast<std::uint32_t>(height_));
        put_u32(hello, static_cast<std::uint32_t>(width_));
        put_u32(hello, static_cast<std::uint32_t>(T_));
        write_all(hello.data(), hello.size());

        std::uint8_t echo[16];
        read_all(echo, 16);
        require(get_u32(echo) == 12 &&
                    get_u32(echo + 4) == static_cast<std::uint32_t>(height_) &&
                    get_u32(echo + 8) == static_cast<std::uint32_t>(width_) &&
                    get_u32(echo + 12) == static_cast<std::uint32_t>(T_),
                ErrorCode::protocol_error,
                "denoiser handshake echo does not match");
    } catch (...) {
        shutdown();
        throw;
    }
}

ExternalDenoiser::~ExternalDenoiser() { shutdown(); }

void ExternalDenoiser::shutdown() noexcept {
    close_quiet(to_child_);
    close_quiet(from_child_);
    if (pid_ > 0) {
        // give the server a moment to exit on EOF, then force it
        int status = 0;
        for (int i = 0; i < 100; ++i) {
            if (::waitpid(pid_, &status, WNOHANG) != 0) {
                pid_ = -1;
                return;
            }
            struct timespec ts = {0, 20 * 1000 * 1000};
            ::nanosleep(&ts, nullptr);
        }
        ::kill(pid_, SIGKILL);
        ::waitpid(pid_, &status, 0);
        pid_ = -1;
    }
}

void ExternalDenoiser::write_all(const std::uint8_t* data, std::size_t n) {
    while (n > 0) {
        const ssize_t wrote = ::write(to_child_, data, n);
        if (wrote < 0) {
            if (errno == EINTR) continue;
            fail(ErrorCode::protocol_error,
                 "denoiser stream write failed: " + std::string(std::strerror(errno)));
        }
        data += wrote;
        n -= static_cast<std::size_t>(wrote);
    }
}

void ExternalDenoiser::read_all(std::uint8_t* data, std::size_t n) {
    while (n > 0) {
        const ssize_t got = ::read(from_child_, data, n);
        if (got < 0) {
            if (errno == EINTR) continue;
            fail(ErrorCode::protocol_error,
                 "denoiser stream read failed: " + std::string(std::strerror(errno)));
        }
        if (got == 0)
            fail(ErrorCode::protocol_error, "denoiser closed the stream mid-frame");
        data += got;
        n -= static_cast<std::size_t>(got);
    }
}

NoiseField ExternalDenoiser::evaluate(const NoiseField& x, const GrayImage* condition,
                                      int t) {
    require(x.height() == height_ && x.width() == width_, ErrorCode::shape_mismatch,
            "state shape does not match the denoiser handshake");
    require(t >= 1 && t <= T_, ErrorCode::invalid_argument,
            "timestep out of the denoiser's range");
    if (condition != nullptr)
        require(condition->height() == height_ && condition->width() == width_,
                ErrorCode::shape_mismatch, "condition shape must match the state");

    const std::size_t plane = static_cast<std::size_t>(height_) * width_;
    const std::uint32_t body_len = static_cast<std::uint32_t>(
        4 + 1 + plane * 4 + (condition ? plane * 4 : 0));

    std::vector<std::uint8_t> frame;
    frame.reserve(4 + body_len);
    put_u32(frame, body_len);
    put_u32(frame, static_cast<std::uint32_t>(t));
    frame.push_back(condition ? 1 : 0);
    const auto* xf = reinterpret_cast<const std::uint8_t*>(x.data().data());
    frame.insert(frame.end(), xf, xf + plane * 4);
    if (condition) {
        const auto* cf = reinterpret_cast<const std::uint8_t*>(condition->data().data());
        frame.insert(frame.end(), cf, cf + plane * 4);
    }

    std::lock_guard<std::mutex> lock(mutex_);
    write_all(frame.data(), frame.size());

    std::uint8_t prefix[4];
    read_all(prefix, 4);
    const std::uint32_t resp_len = get_u32(prefix);
    require(resp_len == plane * 4, ErrorCode::protocol_error,
            "denoiser response has the wrong length");
    std::vector<float> eps(plane);
    read_all(reinterpret_cast<std::uint8_t*>(eps.data()), resp_len);
    for (float v : eps)
        require(std::isfinite(v), ErrorCode::non_finite,
                "denoiser returned a non-finite prediction");
    return NoiseField::from_data(height_, width_, std::move(eps));
}

} // namespace palmforge
