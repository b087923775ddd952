#include "pnerv/trainer.hpp"

#include "pnerv/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <exception>
#include <numbers>
#include <ostream>
#include <unordered_map>

namespace pnerv {

std::string to_string(TrainMode m) { return m == TrainMode::Regression ? "regression" : "interpolation"; }

TrainMode train_mode_from_string(const std::string& s) {
    if (s == "regression") return TrainMode::Regression;
    if (s == "interpolation") return TrainMode::Interpolation;
    throw std::invalid_argument("unknown training mode '" + s + "' (expected regression or interpolation)");
}

void TrainConfig::validate() const {
    if (epochs < 1) throw std::invalid_argument("epochs must be >= 1");
    if (!(lr_min >= 0.0) || !(lr_max >= lr_min)) throw std::invalid_argument("learning rates must satisfy lr_max >= lr_min >= 0");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) throw std::invalid_argument("Adam betas must lie in [0, 1)");
    if (!(eps > 0.0)) throw std::invalid_argument("Adam epsilon must be positive");
}

nlohmann::json TrainConfig::to_json() const {
    return {{"epochs", epochs},   {"lr_max", lr_max},          {"lr_min", lr_min},
            {"betas", {beta1, beta2}}, {"eps", eps},             {"weight_decay", 0.0},
            {"loss", "L2"},        {"mode", to_string(mode)}, {"seed", seed}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
    TrainConfig c;
    if (j.contains("epochs")) c.epochs = j.at("epochs").get<std::size_t>();
    if (j.contains("lr_max")) c.lr_max = j.at("lr_max").get<double>();
    if (j.contains("lr_min")) c.lr_min = j.at("lr_min").get<double>();
    if (j.contains("betas")) {
        const auto& b = j.at("betas");
        if (!b.is_array() || b.size() != 2) throw std::invalid_argument("betas must be a pair");
        c.beta1 = b[0].get<double>();
        c.beta2 = b[1].get<double>();
    }
    if (j.contains("eps")) c.eps = j.at("eps").get<double>();
    if (j.contains("weight_decay") && j.at("weight_decay").get<double>() != 0.0)
        throw std::invalid_argument("weight_decay is fixed at 0");
    if (j.contains("loss") && j.at("loss").get<std::string>() != "L2") throw std::invalid_argument("only the L2 loss is supported");
    if (j.contains("mode")) c.mode = train_mode_from_string(j.at("mode").get<std::string>());
    if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
    c.validate();
    return c;
}

double l2_loss(const Tensor& pred, const Tensor& target) { return mse(pred, target); }

double cosine_lr(std::size_t t, std::size_t total, double lr_max, double lr_min) {
    if (t > total) throw std::out_of_range("cosine_lr: step beyond schedule");
    if (total == 0) return lr_max;
    if (t == total) return lr_min;
    const double phase = std::numbers::pi * static_cast<double>(t) / static_cast<double>(total);
    return lr_min + 0.5 * (lr_max - lr_min) * (1.0 + std::cos(phase));
}

AdamState AdamState::like(const std::vector<Tensor*>& params) {
    AdamState s;
    for (const Tensor* p : params) {
        s.m.emplace_back(p->shape());
        s.v.emplace_back(p->shape());
    }
    return s;
}

void adam_step(const std::vector<Tensor*>& params, const std::vector<Tensor>& grads, AdamState& state, double lr,
               const AdamOptions& opt) {
    if (params.size() != grads.size() || params.size() != state.m.size() || params.size() != state.v.size())
        throw std::invalid_argument("adam_step: parameter, gradient and moment counts differ");
    ++state.step;
    const double bc1 = 1.0 - std::pow(opt.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(opt.beta2, static_cast<double>(state.step));
    for (std::size_t k = 0; k < params.size(); ++k) {
        Tensor& p = *params[k];
        const Tensor& g = grads[k];
        require_same_shape(p, g, "adam_step");
        Tensor& m = state.m[k];
        Tensor& v = state.v[k];
        for (std::size_t i = 0; i < p.size(); ++i) {
            m[i] = opt.beta1 * m[i] + (1.0 - opt.beta1) * g[i];
            v[i] = opt.beta2 * v[i] + (1.0 - opt.beta2) * g[i] * g[i];
            p[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + opt.eps);
        }
    }
}

FrameSplit interpolation_split(std::size_t frames) {
    if (frames < 2) throw std::invalid_argument("interpolation needs at least 2 frames");
    FrameSplit s;
    for (std::size_t t = 0; t < frames; ++t) (t % 2 == 0 ? s.train : s.eval).push_back(t);
    return s;
}

FrameSplit frame_split(TrainMode mode, std::size_t frames) {
    if (mode == TrainMode::Interpolation) return interpolation_split(frames);
    FrameSplit s;
    for (std::size_t t = 0; t < frames; ++t) s.train.push_back(t);
    s.eval = s.train;
    return s;
}

void TrainLog::write_csv(std::ostream& os) const {
    os << "epoch,loss,psnr,lr\n";
    char line[128];
    for (const auto& e : epochs) {
        std::snprintf(line, sizeof line, "%zu,%.17g,%.17g,%.17g\n", e.epoch, e.loss, e.psnr, e.lr);
        os << line;
    }
}

TrainLog train(PNeRVModel& model, const VideoClip& clip, const TrainConfig& cfg, const EpochCallback& on_epoch) {
    cfg.validate();
    if (clip.frames() == 0) throw std::invalid_argument("train: empty clip");
    if (!model.has_encoder()) throw std::logic_error("train: model has no encoder");

    // Interpolation trains on a clip made only of the training frames, so the
    // held-out frames never reach the encoder input either.
    const FrameSplit split = frame_split(cfg.mode, clip.frames());
    const VideoClip source = cfg.mode == TrainMode::Interpolation ? clip.subset(split.train) : clip;

    std::vector<Tensor*> params;
    for (auto& nt : model.named_tensors()) params.push_back(nt.value);
    std::unordered_map<const Tensor*, std::size_t> slot;
    for (std::size_t i = 0; i < params.size(); ++i) slot[params[i]] = i;

    AdamState adam = AdamState::like(params);
    const AdamOptions aopt{cfg.beta1, cfg.beta2, cfg.eps};
    const std::size_t per_epoch = source.frames();
    const std::size_t total_steps = cfg.epochs * per_epoch;

    TrainLog log;
    log.trained_frames = split.train;
    std::vector<Tensor> grads;
    for (const Tensor* p : params) grads.emplace_back(p->shape());

    std::size_t step = 0;
    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        EpochLog e{epoch, 0.0, 0.0, 0.0};
        for (std::size_t i = 0; i < per_epoch; ++i, ++step) {
            ad::Tape tape;
            Bindings b(tape);
            const auto enc = ad::encode(b, model, source, i);
            const ad::Var pred = ad::decode(b, model, enc.content, enc.temporal);
            const ad::Var loss = ad::mse(tape, pred, source.frame(i));
            tape.backward(loss);

            for (auto& g : grads) g.fill(0.0);
            for (const auto& [ptr, var] : b.entries()) {
                const auto it = slot.find(ptr);
                if (it != slot.end() && tape.has_grad(var)) grads[it->second] = tape.grad(var);
            }
            e.lr = cosine_lr(step, total_steps, cfg.lr_max, cfg.lr_min);
            adam_step(params, grads, adam, e.lr, aopt);

            e.loss += tape.value(loss)[0];
            e.psnr += psnr(tape.value(pred), source.frame(i));
        }
        e.loss /= static_cast<double>(per_epoch);
        e.psnr /= static_cast<double>(per_epoch);
        log.epochs.push_back(e);
        if (on_epoch) on_epoch(e);
    }
    return log;
}

namespace {
// Runs fn(i) for i < n across threads; the first exception is rethrown.
template <class Fn>
void parallel_frames(std::size_t n, Fn&& fn) {
    std::exception_ptr err;
#pragma omp parallel for schedule(dynamic)
    for (std::size_t i = 0; i < n; ++i) {
        try {
            fn(i);
        } catch (...) {
#pragma omp critical(pnerv_frame_error)
            if (!err) err = std::current_exception();
        }
    }
    if (err) std::rethrow_exception(err);
}
}  // namespace

std::vector<Tensor> reconstruct(const PNeRVModel& model, const VideoClip& clip, const std::vector<std::size_t>& frames) {
    std::vector<Tensor> out(frames.size());
    parallel_frames(frames.size(), [&](std::size_t i) { out[i] = decode_frame(model, encode(model, clip, frames[i])); });
    return out;
}

std::vector<Tensor> reconstruct(const PNeRVModel& model, const EmbeddingSet& embeddings) {
    std::vector<Tensor> out(embeddings.frames());
    parallel_frames(out.size(), [&](std::size_t i) { out[i] = decode_frame(model, embeddings.at(i)); });
    return out;
}

}  // namespace pnerv
