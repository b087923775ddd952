#pragma once

#include "pnerv/model.hpp"

#include <functional>
#include <iosfwd>
#include <nlohmann/json.hpp>

namespace pnerv {

enum class TrainMode { Regression, Interpolation };

std::string to_string(TrainMode m);
TrainMode train_mode_from_string(const std::string& s);

struct TrainConfig {
    std::size_t epochs = 300;
    double lr_max = 5e-4;
    double lr_min = 0.0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    TrainMode mode = TrainMode::Regression;
    /// Seeds model initialization when the trainer builds the model itself.
    std::uint64_t seed = 0;

    /// Requires epochs >= 1 and lr_max >= lr_min >= 0.
    void validate() const;
    nlohmann::json to_json() const;
    /// Reads the known keys from `j`, keeping defaults for the rest.
    static TrainConfig from_json(const nlohmann::json& j);
};

/// Mean squared error between equally shaped tensors.
double l2_loss(const Tensor& pred, const Tensor& target);

/// lr_min + (lr_max - lr_min) (1 + cos(pi t / T)) / 2, for 0 <= t <= T.
double cosine_lr(std::size_t t, std::size_t total, double lr_max, double lr_min);

struct AdamState {
    std::vector<Tensor> m, v;
    std::size_t step = 0;

    /// Zero moments mirroring `params`.
    static AdamState like(const std::vector<Tensor*>& params);
};

struct AdamOptions {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// One bias-corrected Adam update, in place.
void adam_step(const std::vector<Tensor*>& params, const std::vector<Tensor>& grads, AdamState& state, double lr,
               const AdamOptions& opt = {});

/// Training/evaluation frame indices (0-based). Interpolation trains on the
/// 1-based odd frames (0, 2, 4, ...) and holds out the rest.
struct FrameSplit {
    std::vector<std::size_t> train;
    std::vector<std::size_t> eval;
};

FrameSplit interpolation_split(std::size_t frames);
FrameSplit frame_split(TrainMode mode, std::size_t frames);

struct EpochLog {
    std::size_t epoch = 0;  // 1-based
    double loss = 0.0;      // mean per-frame L2 over the epoch
    double psnr = 0.0;      // mean per-frame PSNR of the predictions seen in the epoch
    double lr = 0.0;        // learning rate of the epoch's last step
};

struct TrainLog {
    std::vector<EpochLog> epochs;
    /// Frames whose loss produced gradients, in visiting order.
    std::vector<std::size_t> trained_frames;

    void write_csv(std::ostream& os) const;
};

using EpochCallback = std::function<void(const EpochLog&)>;

/// Fits encoder and decoder end to end with Adam and a per-step cosine
/// schedule. Frames are visited in order, one per step.
TrainLog train(PNeRVModel& model, const VideoClip& clip, const TrainConfig& cfg, const EpochCallback& on_epoch = {});

/// Reconstructs the listed frames; each frame is encoded from `clip` and
/// decoded independently (parallel across frames).
std::vector<Tensor> reconstruct(const PNeRVModel& model, const VideoClip& clip, const std::vector<std::size_t>& frames);
/// Decodes every stored embedding.
std::vector<Tensor> reconstruct(const PNeRVModel& model, const EmbeddingSet& embeddings);

}  // namespace pnerv
