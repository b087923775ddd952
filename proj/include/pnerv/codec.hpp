#pragma once

#include "pnerv/model.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace pnerv {

/// One tensor under 8-bit min-max quantization.
struct QuantizedTensor {
    std::string name;
    Shape shape;
    double min = 0.0;
    double max = 0.0;
    std::vector<std::uint8_t> codes;
};

/// code = round((v - min) / (max - min) * 255). A constant tensor stores
/// all-zero codes and decodes to min exactly.
QuantizedTensor quantize_u8(const Tensor& t, std::string name = {});
/// Code 0 decodes to min and code 255 to max exactly.
Tensor dequantize(const QuantizedTensor& q);

inline constexpr std::uint16_t kBitstreamVersion = 1;

/// Quantized decoder weights plus per-frame embeddings. Encoder weights are
/// not part of the stream: decoding needs only the decoder and embeddings.
struct QuantizedBlob {
    PNeRVConfig config;
    std::string train_mode = "regression";
    std::vector<QuantizedTensor> tensors;
    std::vector<QuantizedTensor> embeddings;

    std::size_t value_count() const;
};

QuantizedBlob quantize(const PNeRVModel& model, const EmbeddingSet& embeddings, const std::string& train_mode = "regression");
/// Rebuilds a decoder-only checkpoint from the dequantized blob.
Checkpoint dequantize(const QuantizedBlob& blob);

std::vector<std::uint8_t> serialize_bitstream(const QuantizedBlob& blob);
QuantizedBlob deserialize_bitstream(const std::vector<std::uint8_t>& bytes);

struct RateReport {
    std::uint64_t model_values = 0;
    std::uint64_t embedding_values = 0;
    std::uint64_t payload_bits = 0;  // 8 per quantized value
    std::uint64_t header_bits = 0;   // everything else in the stream
    std::uint64_t total_bits = 0;
    std::size_t frames = 0, height = 0, width = 0;
    double bpp = 0.0;        // payload bits per pixel
    double total_bpp = 0.0;  // including header

    nlohmann::json to_json() const;
};

RateReport rate_report(const QuantizedBlob& blob, std::size_t stream_bytes);

struct CompressResult {
    std::vector<std::uint8_t> bytes;
    RateReport rate;
};

CompressResult compress(const PNeRVModel& model, const EmbeddingSet& embeddings, const std::string& train_mode = "regression");
Checkpoint decompress(const std::vector<std::uint8_t>& bytes);

struct RateDistortion {
    RateReport rate;
    double psnr = 0.0;
    std::optional<double> ms_ssim;
    double psnr_unquantized = 0.0;

    nlohmann::json to_json() const;
};

/// Encodes every frame of `clip`, quantizes, decodes the round trip and scores
/// it against the clip.
RateDistortion rate_distortion(const PNeRVModel& model, const VideoClip& clip);

}  // namespace pnerv
