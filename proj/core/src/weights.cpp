#include "fedbal/weights.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "fedbal/error.hpp"

namespace fedbal {

static_assert(std::endian::native == std::endian::little,
              "weight blob codec assumes a little-endian host");

namespace {

constexpr char kMagic[4] = {'F', 'A', 'W', '1'};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(static_cast<std::uint8_t>(v & 0xFF));
    out.push_back(static_cast<std::uint8_t>((v >> 8) & 0xFF));
    out.push_back(static_cast<std::uint8_t>((v >> 16) & 0xFF));
    out.push_back(static_cast<std::uint8_t>((v >> 24) & 0xFF));
}

std::uint32_t get_u32(const std::uint8_t* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

} // namespace

std::vector<std::uint8_t> WeightBlob::to_bytes() const {
    std::vector<std::uint8_t> out;
    out.reserve(8 + shapes.size() * 8 + payload.size() * 8);
    out.insert(out.end(), kMagic, kMagic + 4);
    put_u32(out, static_cast<std::uint32_t>(shapes.size()));
    for (const auto& s : shapes) {
        put_u32(out, s.rows);
        put_u32(out, s.cols);
    }
    const std::size_t start = out.size();
    out.resize(start + payload.size() * 8);
    std::memcpy(out.data() + start, payload.data(), payload.size() * 8);
    return out;
}

WeightBlob WeightBlob::from_bytes(const std::uint8_t* data, std::size_t size) {
    if (size < 8) throw EngineError("weight blob: truncated header");
    if (std::memcmp(data, kMagic, 4) != 0) throw EngineError("weight blob: bad magic");
    const std::uint32_t layer_count = get_u32(data + 4);
    const std::size_t header = 8 + static_cast<std::size_t>(layer_count) * 8;
    if (size < header) throw EngineError("weight blob: truncated shape table");
    WeightBlob blob;
    blob.shapes.reserve(layer_count);
    for (std::uint32_t i = 0; i < layer_count; ++i) {
        const std::uint8_t* p = data + 8 + static_cast<std::size_t>(i) * 8;
        blob.shapes.push_back({get_u32(p), get_u32(p + 4)});
    }
    const std::size_t body = size - header;
    if (body % 8 != 0) throw EngineError("weight blob: truncated payload");
    blob.payload.resize(body / 8);
    std::memcpy(blob.payload.data(), data + header, body);
    return blob;
}

WeightBlob WeightBlob::from_bytes(const std::vector<std::uint8_t>& bytes) {
    return from_bytes(bytes.data(), bytes.size());
}

void WeightBlob::save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot open for writing: " + path);
    const auto bytes = to_bytes();
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("write failed: " + path);
}

WeightBlob WeightBlob::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open: " + path);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    return from_bytes(bytes);
}

WeightBlob serialize_weights(const Network& net) {
    WeightBlob blob;
    std::vector<double> payload;
    for (std::size_t i = 0; i < net.layer_count(); ++i) {
        const Layer& layer = net.layer(i);
        const auto [rows, cols] = layer.blob_shape();
        blob.shapes.push_back({rows, cols});
        layer.write_payload(payload);
    }
    blob.payload = std::move(payload);
    return blob;
}

void deserialize_weights(const WeightBlob& blob, Network& net) {
    if (blob.shapes.size() != net.layer_count())
        throw EngineError("weight blob: layer count mismatch");
    std::size_t expected = 0;
    for (std::size_t i = 0; i < net.layer_count(); ++i) {
        const auto [rows, cols] = net.layer(i).blob_shape();
        if (blob.shapes[i].rows != rows || blob.shapes[i].cols != cols)
            throw EngineError("weight blob: layer shape mismatch");
        expected += net.layer(i).payload_size();
    }
    if (blob.payload.size() != expected)
        throw EngineError("weight blob: payload size mismatch");
    std::size_t offset = 0;
    for (std::size_t i = 0; i < net.layer_count(); ++i) {
        const std::size_t count = net.layer(i).payload_size();
        net.layer(i).read_payload(blob.payload.data() + offset, count);
        offset += count;
    }
}

} // namespace fedbal
