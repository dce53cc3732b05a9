#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "nht/model.hpp"

namespace nht {

// Which sections get quantized. entropy toggles the DEFLATE frame around the
// payload; all false = lossless float debugging container.
struct QuantSpec {
    bool positions_u16 = true;
    bool features_i8 = true;
    bool mlp_f16 = true;
    bool entropy = true;
};

uint16_t float_to_half(float f);
float half_to_float(uint16_t h);

// Uniform 8-bit quantization with per-channel scale and offset:
// value ~ scale[c] * (q + 128) + offset[c]; constant channels get scale 1.
struct QuantizedChannels {
    int channels = 0;
    std::vector<int8_t> q;        // n x channels
    std::vector<float> scale, offset;
};
QuantizedChannels quantize_features(const std::vector<double>& values, int channels);
std::vector<double> dequantize_features(const QuantizedChannels& qc);

// Fixed-point uint16 positions over the image rectangle.
std::vector<uint16_t> quantize_positions(const std::vector<Vec2>& pos,
                                         double width, double height);
std::vector<Vec2> dequantize_positions(const std::vector<uint16_t>& q,
                                       double width, double height);

std::vector<uint8_t> serialize_model(const Model& model, const QuantSpec& spec);
Model deserialize_model(const std::vector<uint8_t>& bytes);

void save_model(const Model& model, const QuantSpec& spec, const std::string& path);
Model load_model(const std::string& path);

uint64_t fnv1a64(const uint8_t* data, size_t n);

}  // namespace nht
