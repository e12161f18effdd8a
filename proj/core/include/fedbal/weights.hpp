#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fedbal/layers.hpp"

namespace fedbal {

/// Flat parameter snapshot of a network: per-layer shape header plus the
/// concatenated payload doubles. Immutable once built; safe to share.
struct WeightBlob {
    struct LayerShape {
        std::uint32_t rows = 0;
        std::uint32_t cols = 0;
        bool operator==(const LayerShape&) const = default;
    };

    std::vector<LayerShape> shapes;
    std::vector<double> payload;

    bool same_shape(const WeightBlob& other) const {
        return shapes == other.shapes && payload.size() == other.payload.size();
    }

    /// Little-endian: "FAW1", layer count u32, rows/cols u32 pairs, payload.
    std::vector<std::uint8_t> to_bytes() const;
    static WeightBlob from_bytes(const std::uint8_t* data, std::size_t size);
    static WeightBlob from_bytes(const std::vector<std::uint8_t>& bytes);

    void save(const std::string& path) const;
    static WeightBlob load(const std::string& path);
};

WeightBlob serialize_weights(const Network& net);
void deserialize_weights(const WeightBlob& blob, Network& net);

} // namespace fedbal
