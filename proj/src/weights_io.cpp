#include "dfg/weights_io.hpp"

#include <fstream>

#include "dfg/binio.hpp"

namespace dfg {

namespace {
constexpr uint32_t kFormatVersion = 1;
}

void save_weights(const DistributedNet<float>& net, const std::string& path) {
    uint32_t layer_count = 0;
    for (const auto& node : net.nodes()) layer_count += static_cast<uint32_t>(node.layers.size());

    std::string out;
    out += "DFGW";
    put_u32(out, kFormatVersion);
    put_u32(out, layer_count);
    for (const auto& node : net.nodes())
        for (const auto& layer : node.layers) {
            put_u32(out, static_cast<uint32_t>(layer.w.rows));
            put_u32(out, static_cast<uint32_t>(layer.w.cols));
            put_u8(out, static_cast<uint8_t>(layer.act));
            for (float v : layer.w.a) put_f32(out, v);
            for (float v : layer.b) put_f32(out, v);
        }

    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write " + path);
    write_all(os, out);
}

void load_weights(DistributedNet<float>& net, const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open " + path);
    std::string bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    if (bytes.size() < 4 || bytes.compare(0, 4, "DFGW") != 0)
        throw std::runtime_error(path + ": not a DFGW weight file");
    ByteReader r(bytes);
    r.u32();  // magic
    if (r.u32() != kFormatVersion) throw std::runtime_error(path + ": unsupported format version");

    uint32_t expected = 0;
    for (const auto& node : net.nodes()) expected += static_cast<uint32_t>(node.layers.size());
    const uint32_t count = r.u32();
    if (count != expected)
        throw std::runtime_error(path + ": layer count " + std::to_string(count) +
                                 " does not match topology (" + std::to_string(expected) + ")");

    for (auto& node : net.nodes())
        for (auto& layer : node.layers) {
            const uint32_t rows = r.u32(), cols = r.u32();
            const uint8_t act = r.u8();
            if (static_cast<int>(rows) != layer.w.rows || static_cast<int>(cols) != layer.w.cols ||
                act != static_cast<uint8_t>(layer.act))
                throw std::runtime_error(path + ": layer shape/activation mismatch with topology");
            for (float& v : layer.w.a) v = r.f32();
            for (float& v : layer.b) v = r.f32();
        }
    if (r.remaining() != 0) throw std::runtime_error(path + ": trailing bytes");
}

}  // namespace dfg
