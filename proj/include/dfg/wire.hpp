#pragma once

#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace dfg {

constexpr uint8_t kWireVersion = 1;

enum class MsgType : uint8_t {
    Hello = 0,
    Data = 1,
    KeepAlive = 2,
    KeepAliveAck = 3,
    Shutdown = 4,
};

// One protocol message. dim is implied by payload.size(); a null marker
// (null_flag = 1) carries no payload at all.
struct WireMessage {
    uint8_t version = kWireVersion;
    MsgType type = MsgType::Data;
    uint16_t source_node = 0;
    uint64_t inference_id = 0;
    uint8_t null_flag = 0;
    std::vector<float> payload;

    bool operator==(const WireMessage& o) const {
        return version == o.version && type == o.type && source_node == o.source_node &&
               inference_id == o.inference_id && null_flag == o.null_flag && payload == o.payload;
    }
};

// Body layout, all little-endian: version u8, msg_type u8, source_node u16,
// inference_id u64, null_flag u8, dim u32, then dim 32-bit reals.
std::string encode_message(const WireMessage& msg);
WireMessage decode_message(const uint8_t* data, size_t n);
WireMessage decode_message(const std::string& body);

// Framing: u32 length prefix, then the message body.
std::string frame_message(const WireMessage& msg);

// Blocking TCP stream carrying framed messages. Writes are serialized so data
// and keep-alive traffic can share one connection from different threads.
class FrameSocket {
  public:
    explicit FrameSocket(int fd);
    ~FrameSocket();
    FrameSocket(const FrameSocket&) = delete;
    FrameSocket& operator=(const FrameSocket&) = delete;

    // nullptr on refused/unreachable/timeout.
    static std::unique_ptr<FrameSocket> connect(const std::string& host, int port, int timeout_ms);

    bool write_message(const WireMessage& msg);     // false on any transport error
    std::optional<WireMessage> read_message();      // nullopt on EOF, error, or bad frame
    void close_now();
    bool closed() const { return fd_ < 0; }

  private:
    bool read_exact(uint8_t* buf, size_t n);
    int fd_;
    std::mutex write_mu_;
};

// Listening socket bound to 127.0.0.1:port (SO_REUSEADDR set).
class Listener {
  public:
    explicit Listener(int port);
    ~Listener();
    Listener(const Listener&) = delete;
    Listener& operator=(const Listener&) = delete;

    std::unique_ptr<FrameSocket> accept_one();  // nullptr once closed
    void close_now();
    int port() const { return port_; }

  private:
    int fd_;
    int port_;
};

// "host:port" helpers for config and CLI address maps.
std::pair<std::string, int> split_address(const std::string& address);

}  // namespace dfg
