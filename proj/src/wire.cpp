#include "dfg/wire.hpp"

#include <arpa/inet.h>
#include <fcntl.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <stdexcept>

#include "dfg/binio.hpp"

namespace dfg {

namespace {
// Sanity cap on one payload; the largest real vector here is a 3072-dim view.
constexpr uint32_t kMaxDim = 1u << 20;
constexpr size_t kHeaderBytes = 1 + 1 + 2 + 8 + 1 + 4;
}  // namespace

std::string encode_message(const WireMessage& msg) {
    if (msg.null_flag && !msg.payload.empty())
        throw std::invalid_argument("wire: null marker must carry no payload");
    if (msg.payload.size() > kMaxDim) throw std::invalid_argument("wire: payload too large");
    std::string out;
    out.reserve(kHeaderBytes + 4 * msg.payload.size());
    put_u8(out, msg.version);
    put_u8(out, static_cast<uint8_t>(msg.type));
    put_u16(out, msg.source_node);
    put_u64(out, msg.inference_id);
    put_u8(out, msg.null_flag);
    put_u32(out, static_cast<uint32_t>(msg.payload.size()));
    for (float v : msg.payload) put_f32(out, v);
    return out;
}

WireMessage decode_message(const uint8_t* data, size_t n) {
    ByteReader r(data, n);
    WireMessage msg;
    msg.version = r.u8();
    const uint8_t type = r.u8();
    if (type > static_cast<uint8_t>(MsgType::Shutdown))
        throw std::runtime_error("wire: unknown message type " + std::to_string(type));
    msg.type = static_cast<MsgType>(type);
    msg.source_node = r.u16();
    msg.inference_id = r.u64();
    msg.null_flag = r.u8();
    const uint32_t dim = r.u32();
    if (dim > kMaxDim) throw std::runtime_error("wire: dim exceeds cap");
    if (msg.null_flag && dim != 0) throw std::runtime_error("wire: null marker with payload");
    if (r.remaining() != static_cast<size_t>(dim) * 4)
        throw std::runtime_error("wire: body length does not match dim");
    msg.payload.resize(dim);
    for (auto& v : msg.payload) v = r.f32();
    return msg;
}

WireMessage decode_message(const std::string& body) {
    return decode_message(reinterpret_cast<const uint8_t*>(body.data()), body.size());
}

std::string frame_message(const WireMessage& msg) {
    const std::string body = encode_message(msg);
    std::string out;
    put_u32(out, static_cast<uint32_t>(body.size()));
    out += body;
    return out;
}

// ---- sockets ----

FrameSocket::FrameSocket(int fd) : fd_(fd) {
    int one = 1;
    ::setsockopt(fd_, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
#ifdef SO_NOSIGPIPE
    ::setsockopt(fd_, SOL_SOCKET, SO_NOSIGPIPE, &one, sizeof(one));
#endif
}

FrameSocket::~FrameSocket() { close_now(); }

std::unique_ptr<FrameSocket> FrameSocket::connect(const std::string& host, int port,
                                                  int timeout_ms) {
    int fd = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd < 0) return nullptr;
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(static_cast<uint16_t>(port));
    if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
        ::close(fd);
        return nullptr;
    }
    ::fcntl(fd, F_SETFL, O_NONBLOCK);
    int rc = ::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr));
    if (rc != 0 && errno == EINPROGRESS) {
        pollfd p{fd, POLLOUT, 0};
        if (::poll(&p, 1, timeout_ms) <= 0) {
            ::close(fd);
            return nullptr;
        }
        int err = 0;
        socklen_t len = sizeof(err);
        ::getsockopt(fd, SOL_SOCKET, SO_ERROR, &err, &len);
        if (err != 0) {
            ::close(fd);
            return nullptr;
        }
    } else if (rc != 0) {
        ::close(fd);
        return nullptr;
    }
    ::fcntl(fd, F_SETFL, 0);  // back to blocking
    return std::make_unique<FrameSocket>(fd);
}

bool FrameSocket::write_message(const WireMessage& msg) {
    const std::string bytes = frame_message(msg);
    std::lock_guard<std::mutex> lock(write_mu_);
    if (fd_ < 0) return false;
    size_t sent = 0;
    while (sent < bytes.size()) {
        ssize_t n = ::send(fd_, bytes.data() + sent, bytes.size() - sent, MSG_NOSIGNAL);
        if (n <= 0) {
            if (n < 0 && errno == EINTR) continue;
            return false;
        }
        sent += static_cast<size_t>(n);
    }
    return true;
}

bool FrameSocket::read_exact(uint8_t* buf, size_t n) {
    size_t got = 0;
    while (got < n) {
        ssize_t r = ::recv(fd_, buf + got, n - got, 0);
        if (r <= 0) {
            if (r < 0 && errno == EINTR) continue;
            return false;
        }
        got += static_cast<size_t>(r);
    }
    return true;
}

std::optional<WireMessage> FrameSocket::read_message() {
    uint8_t len_buf[4];
    if (fd_ < 0 || !read_exact(len_buf, 4)) return std::nullopt;
    const uint32_t len = static_cast<uint32_t>(len_buf[0]) | (len_buf[1] << 8) |
                         (len_buf[2] << 16) | (static_cast<uint32_t>(len_buf[3]) << 24);
    if (len < kHeaderBytes || len > kHeaderBytes + 4ull * kMaxDim) return std::nullopt;
    std::vector<uint8_t> body(len);
    if (!read_exact(body.data(), len)) return std::nullopt;
    try {
        return decode_message(body.data(), body.size());
    } catch (const std::exception&) {
        return std::nullopt;
    }
}

void FrameSocket::close_now() {
    if (fd_ >= 0) {
        ::shutdown(fd_, SHUT_RDWR);
        ::close(fd_);
        fd_ = -1;
    }
}

Listener::Listener(int port) : fd_(-1), port_(port) {
    fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd_ < 0) throw std::runtime_error("cannot create socket");
    int one = 1;
    ::setsockopt(fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(static_cast<uint16_t>(port));
    addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    if (::bind(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0 ||
        ::listen(fd_, 64) != 0) {
        ::close(fd_);
        fd_ = -1;
        throw std::runtime_error("cannot bind 127.0.0.1:" + std::to_string(port));
    }
}

Listener::~Listener() { close_now(); }

std::unique_ptr<FrameSocket> Listener::accept_one() {
    if (fd_ < 0) return nullptr;
    int client = ::accept(fd_, nullptr, nullptr);
    if (client < 0) return nullptr;
    return std::make_unique<FrameSocket>(client);
}

void Listener::close_now() {
    if (fd_ >= 0) {
        ::shutdown(fd_, SHUT_RDWR);
        ::close(fd_);
        fd_ = -1;
    }
}

std::pair<std::string, int> split_address(const std::string& address) {
    const auto colon = address.rfind(':');
    if (colon == std::string::npos)
        throw std::invalid_argument("address must be host:port, got " + address);
    return {address.substr(0, colon), std::stoi(address.substr(colon + 1))};
}

}  // namespace dfg
