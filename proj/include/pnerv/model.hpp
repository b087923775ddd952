#pragma once

#include "pnerv/bsm.hpp"
#include "pnerv/grad_check.hpp"
#include "pnerv/kfc.hpp"
#include "pnerv/ops.hpp"
#include "pnerv/video.hpp"

#include <nlohmann/json.hpp>

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace pnerv {

enum class Variant { M, L };
enum class FusionKind { BSM, Concat };
enum class UpscalerKind { KFc, Deconv, Bilinear };

std::string to_string(Variant v);
std::string to_string(FusionKind f);
std::string to_string(UpscalerKind u);

struct Dims3 {
    std::size_t c = 0, h = 0, w = 0;
    std::size_t numel() const { return c * h * w; }
    friend bool operator==(const Dims3&, const Dims3&) = default;
};

/// Number of mainstream blocks; shortcuts feed blocks 2..kLastShortcutLayer.
inline constexpr std::size_t kNumLayers = 6;
inline constexpr std::size_t kFirstShortcutLayer = 2;
inline constexpr std::size_t kLastShortcutLayer = 5;

struct PNeRVConfig {
    Variant variant = Variant::L;
    Dims3 embed_content{16, 2, 4};
    Dims3 embed_temporal{2, 8, 16};
    std::vector<std::size_t> strides{2, 2, 2, 2, 2, 1};
    std::vector<std::size_t> widths{32, 32, 16, 16, 8, 8};
    FusionKind fusion = FusionKind::BSM;
    UpscalerKind upscaler = UpscalerKind::KFc;
    std::size_t block_kernel = 3;
    std::size_t first_block_kernel = 1;
    std::size_t bsm_kernel = 3;
    std::size_t encoder_width = 16;
    std::uint64_t seed = 0;

    /// 16x2x4 -> 3x64x128 with a 2x8x16 temporal embedding.
    static PNeRVConfig desk();
    /// 960x1920 output, strides [5,4,4,3,2,1], temporal 2x40x80.
    static PNeRVConfig full_scale();
    /// 4x1x2 -> 3x4x8, the smallest shape the gradient suite runs on.
    static PNeRVConfig tiny_gradcheck();

    std::size_t out_height() const;
    std::size_t out_width() const;
    /// Shape of H_l (1-based layer index).
    Dims3 layer_shape(std::size_t layer) const;
    bool has_shortcut(std::size_t layer) const;

    /// Throws std::invalid_argument on any inconsistency.
    void validate() const;

    nlohmann::json to_json() const;
    static PNeRVConfig from_json(const nlohmann::json& j);
};

/// Conv stack mapping a 3 x H x W input to an embedding shape. Each stage
/// downsamples by one prime factor of H / embed_h.
struct ConvEncoder {
    std::vector<ConvParams> stages;
    std::vector<std::size_t> strides;

    static ConvEncoder make(std::size_t in_h, std::size_t in_w, const Dims3& out, std::size_t width);
    bool empty() const { return stages.empty(); }
};

struct Shortcut {
    std::size_t layer = 0;
    std::size_t rate = 1;  // integer upscale factor (Deconv / Bilinear only)
    std::optional<KFcParams> kfc;
    std::optional<ConvParams> deconv;
    Tensor bn_gamma, bn_beta;
    std::optional<BSMParams> bsm;
    std::optional<ConcatFusionParams> concat;
};

struct PNeRVModel {
    PNeRVConfig config;
    ConvEncoder content_encoder;
    ConvEncoder temporal_encoder;
    std::vector<ConvParams> blocks;
    std::vector<Shortcut> shortcuts;
    std::optional<ConvParams> head;

    bool has_encoder() const { return !content_encoder.empty(); }
    const Shortcut* shortcut_for(std::size_t layer) const;

    /// Every stored tensor with a stable name, in serialization order.
    std::vector<NamedTensor> named_tensors();
    std::vector<std::pair<std::string, const Tensor*>> named_tensors() const;
    /// Decoder tensors only (what a decoder needs besides the embeddings).
    std::vector<std::pair<std::string, const Tensor*>> decoder_tensors() const;
};

/// Per-frame embeddings (the decoder's inputs).
struct Embedding {
    Tensor content;
    std::optional<Tensor> temporal;
};

struct EmbeddingSet {
    std::vector<Tensor> content;
    std::vector<Tensor> temporal;  // empty for variant M
    std::size_t frames() const { return content.size(); }
    Embedding at(std::size_t t) const;
    std::size_t numel() const;
};

PNeRVModel build_model(const PNeRVConfig& cfg);

/// Encoder input for the temporal path of frame t: (V[t+1] - V[t-1]) / 2 with
/// indices clamped to the clip.
Tensor temporal_difference(const VideoClip& clip, std::size_t t);

/// Embeddings of frame t (0-based).
Embedding encode(const PNeRVModel& model, const VideoClip& clip, std::size_t t);
EmbeddingSet encode_all(const PNeRVModel& model, const VideoClip& clip);

struct DecodeOptions {
    /// Replaces every BSM gate with this constant (ensemble-reduction hook).
    std::optional<double> gate_override;
};

Tensor decode_frame(const PNeRVModel& model, const Embedding& e, const DecodeOptions& opt = {});

struct ParamCount {
    std::size_t decoder = 0;
    std::size_t encoder = 0;
    std::size_t embeddings = 0;
    std::size_t total() const { return decoder + encoder + embeddings; }
};

ParamCount count_params(const PNeRVModel& model, const EmbeddingSet* embeddings = nullptr);

namespace ad {

struct EncodedVars {
    Var content;
    std::optional<Var> temporal;
};

EncodedVars encode(Bindings& b, const PNeRVModel& model, const VideoClip& clip, std::size_t t);
Var decode(Bindings& b, const PNeRVModel& model, Var content, std::optional<Var> temporal, const DecodeOptions& opt = {});

}  // namespace ad

// --- checkpoint ---------------------------------------------------------

inline constexpr std::uint16_t kCheckpointVersion = 1;

struct Checkpoint {
    PNeRVModel model;
    std::optional<EmbeddingSet> embeddings;
    std::string train_mode = "regression";
};

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ck);
Checkpoint deserialize_checkpoint(const std::vector<std::uint8_t>& bytes);
void save_checkpoint(const Checkpoint& ck, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

/// Rebuilds a model skeleton for `cfg` and fills it from named tensors.
/// Decoder tensors are mandatory; encoder tensors are all-or-nothing.
PNeRVModel model_from_tensors(const PNeRVConfig& cfg, const std::vector<std::pair<std::string, Tensor>>& tensors,
                              std::optional<EmbeddingSet>* embeddings_out);

}  // namespace pnerv
