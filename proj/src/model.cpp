#include "pnerv/model.hpp"

#include "pnerv/binary_io.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <stdexcept>

namespace pnerv {

using nlohmann::json;

std::string to_string(Variant v) { return v == Variant::M ? "M" : "L"; }
std::string to_string(FusionKind f) { return f == FusionKind::BSM ? "BSM" : "Concat"; }
std::string to_string(UpscalerKind u) {
    switch (u) {
        case UpscalerKind::KFc: return "KFc";
        case UpscalerKind::Deconv: return "Deconv";
        case UpscalerKind::Bilinear: return "Bilinear";
    }
    return "?";
}

namespace {

Variant variant_from(const std::string& s) {
    if (s == "M") return Variant::M;
    if (s == "L") return Variant::L;
    throw std::invalid_argument("variant must be \"M\" or \"L\", got \"" + s + "\"");
}

FusionKind fusion_from(const std::string& s) {
    if (s == "BSM") return FusionKind::BSM;
    if (s == "Concat") return FusionKind::Concat;
    throw std::invalid_argument("fusion_kind must be \"BSM\" or \"Concat\", got \"" + s + "\"");
}

UpscalerKind upscaler_from(const std::string& s) {
    if (s == "KFc") return UpscalerKind::KFc;
    if (s == "Deconv") return UpscalerKind::Deconv;
    if (s == "Bilinear") return UpscalerKind::Bilinear;
    throw std::invalid_argument("upscaler_kind must be KFc, Deconv or Bilinear, got \"" + s + "\"");
}

json dims_json(const Dims3& d) { return json::array({d.c, d.h, d.w}); }

Dims3 dims_from(const json& j) {
    if (!j.is_array() || j.size() != 3) throw std::invalid_argument("embedding shape must be [C, H, W]");
    return {j[0].get<std::size_t>(), j[1].get<std::size_t>(), j[2].get<std::size_t>()};
}

std::vector<std::size_t> prime_factors_desc(std::size_t n) {
    std::vector<std::size_t> f;
    for (std::size_t p = 2; p * p <= n; ++p)
        while (n % p == 0) {
            f.push_back(p);
            n /= p;
        }
    if (n > 1) f.push_back(n);
    std::sort(f.rbegin(), f.rend());
    return f;
}

// Kernel/padding that divide a length exactly by `stride`.
kernels::ConvGeometry stage_geometry(std::size_t stride, std::size_t kernel) {
    if (stride == 1) return {1, kernel / 2};
    return {stride, stride % 2 == 1 ? 0 : stride / 2};
}

std::size_t stage_kernel(std::size_t stride) {
    if (stride == 1) return 3;
    return stride % 2 == 1 ? stride : stride + 1;
}

std::string indexed(const char* fmt, std::size_t i) {
    char buf[64];
    std::snprintf(buf, sizeof buf, fmt, i);
    return buf;
}

template <class Out, class Model>
void collect(Model& m, Out&& out, bool include_encoder, bool include_decoder) {
    auto conv = [&](const std::string& prefix, auto& p) {
        out(prefix + ".weight", p.weight);
        out(prefix + ".bias", p.bias);
    };
    if (include_encoder) {
        for (std::size_t i = 0; i < m.content_encoder.stages.size(); ++i)
            conv(indexed("encoder.content.%zu", i), m.content_encoder.stages[i]);
        for (std::size_t i = 0; i < m.temporal_encoder.stages.size(); ++i)
            conv(indexed("encoder.temporal.%zu", i), m.temporal_encoder.stages[i]);
    }
    if (!include_decoder) return;
    for (std::size_t l = 0; l < m.blocks.size(); ++l) conv(indexed("decoder.block%zu", l + 1), m.blocks[l]);
    for (auto& s : m.shortcuts) {
        const std::string p = indexed("decoder.shortcut%zu", s.layer);
        if (s.kfc) {
            out(p + ".kfc.k1", s.kfc->k1);
            out(p + ".kfc.k2", s.kfc->k2);
            out(p + ".kfc.b_c", s.kfc->b_c);
            out(p + ".kfc.b_h", s.kfc->b_h);
            out(p + ".kfc.b_w", s.kfc->b_w);
        }
        if (s.deconv) conv(p + ".deconv", *s.deconv);
        out(p + ".bn.gamma", s.bn_gamma);
        out(p + ".bn.beta", s.bn_beta);
        if (s.bsm) {
            conv(p + ".bsm.w_n", s.bsm->w_n);
            conv(p + ".bsm.w_m", s.bsm->w_m);
            conv(p + ".bsm.w_s", s.bsm->w_s);
        }
        if (s.concat) conv(p + ".concat", s.concat->mix);
    }
    if (m.head) conv("decoder.head", *m.head);
}

}  // namespace

// --- config -------------------------------------------------------------

PNeRVConfig PNeRVConfig::desk() { return PNeRVConfig{}; }

PNeRVConfig PNeRVConfig::full_scale() {
    PNeRVConfig c;
    c.embed_temporal = {2, 40, 80};
    c.strides = {5, 4, 4, 3, 2, 1};
    c.widths = {96, 96, 64, 48, 32, 32};
    return c;
}

PNeRVConfig PNeRVConfig::tiny_gradcheck() {
    PNeRVConfig c;
    c.embed_content = {4, 1, 2};
    c.embed_temporal = {2, 2, 4};
    c.strides = {2, 2, 1, 1, 1, 1};
    c.widths = {4, 4, 3, 3, 3, 3};
    c.encoder_width = 3;
    return c;
}

std::size_t PNeRVConfig::out_height() const { return layer_shape(kNumLayers).h; }
std::size_t PNeRVConfig::out_width() const { return layer_shape(kNumLayers).w; }

Dims3 PNeRVConfig::layer_shape(std::size_t layer) const {
    if (layer == 0 || layer > strides.size() || layer > widths.size()) throw std::out_of_range("layer index out of range");
    std::size_t h = embed_content.h, w = embed_content.w;
    for (std::size_t l = 0; l < layer; ++l) {
        h *= strides[l];
        w *= strides[l];
    }
    return {widths[layer - 1], h, w};
}

bool PNeRVConfig::has_shortcut(std::size_t layer) const {
    return variant == Variant::L && layer >= kFirstShortcutLayer && layer <= kLastShortcutLayer;
}

void PNeRVConfig::validate() const {
    auto fail = [](const std::string& msg) { throw std::invalid_argument("config: " + msg); };
    if (strides.size() != kNumLayers) fail("mainstream_strides must have exactly 6 entries");
    if (widths.size() != kNumLayers) fail("channel_widths must have exactly 6 entries");
    for (auto s : strides)
        if (s == 0) fail("strides must be positive");
    for (auto w : widths)
        if (w == 0) fail("channel widths must be positive");
    if (embed_content.numel() == 0) fail("embed_content_shape must be positive");
    if (block_kernel % 2 == 0 || first_block_kernel % 2 == 0 || bsm_kernel % 2 == 0) fail("kernel sizes must be odd");
    if (encoder_width == 0) fail("encoder_width must be positive");
    const std::size_t H = out_height(), W = out_width();
    if (W != 2 * H) fail("output must be 1:2 (got " + std::to_string(H) + "x" + std::to_string(W) + ")");
    auto check_encoder = [&](const Dims3& e, const char* what) {
        if (H % e.h != 0 || W % e.w != 0 || H / e.h != W / e.w)
            fail(std::string(what) + " embedding does not divide the frame by a common integer factor");
    };
    check_encoder(embed_content, "content");
    if (variant == Variant::L) {
        if (embed_temporal.numel() == 0) fail("embed_temporal_shape must be positive for variant L");
        check_encoder(embed_temporal, "temporal");
        if (upscaler != UpscalerKind::KFc)
            for (std::size_t l = kFirstShortcutLayer; l <= kLastShortcutLayer; ++l) {
                const Dims3 d = layer_shape(l);
                if (d.h % embed_temporal.h != 0 || d.w % embed_temporal.w != 0 || d.h / embed_temporal.h != d.w / embed_temporal.w)
                    fail(to_string(upscaler) + " shortcut needs an integer common upscale factor at layer " + std::to_string(l));
            }
    }
}

json PNeRVConfig::to_json() const {
    json j;
    j["variant"] = to_string(variant);
    j["embed_content_shape"] = dims_json(embed_content);
    j["embed_temporal_shape"] = dims_json(embed_temporal);
    j["mainstream_strides"] = strides;
    j["channel_widths"] = widths;
    j["fusion_kind"] = to_string(fusion);
    j["upscaler_kind"] = to_string(upscaler);
    j["block_kernel"] = block_kernel;
    j["first_block_kernel"] = first_block_kernel;
    j["bsm_kernel"] = bsm_kernel;
    j["encoder_width"] = encoder_width;
    j["seed"] = seed;
    return j;
}

PNeRVConfig PNeRVConfig::from_json(const json& j) {
    PNeRVConfig c;
    if (j.contains("variant")) c.variant = variant_from(j.at("variant").get<std::string>());
    if (j.contains("embed_content_shape")) c.embed_content = dims_from(j.at("embed_content_shape"));
    if (j.contains("embed_temporal_shape")) c.embed_temporal = dims_from(j.at("embed_temporal_shape"));
    if (j.contains("mainstream_strides")) c.strides = j.at("mainstream_strides").get<std::vector<std::size_t>>();
    if (j.contains("channel_widths")) c.widths = j.at("channel_widths").get<std::vector<std::size_t>>();
    if (j.contains("fusion_kind")) c.fusion = fusion_from(j.at("fusion_kind").get<std::string>());
    if (j.contains("upscaler_kind")) c.upscaler = upscaler_from(j.at("upscaler_kind").get<std::string>());
    if (j.contains("block_kernel")) c.block_kernel = j.at("block_kernel").get<std::size_t>();
    if (j.contains("first_block_kernel")) c.first_block_kernel = j.at("first_block_kernel").get<std::size_t>();
    if (j.contains("bsm_kernel")) c.bsm_kernel = j.at("bsm_kernel").get<std::size_t>();
    if (j.contains("encoder_width")) c.encoder_width = j.at("encoder_width").get<std::size_t>();
    if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
    return c;
}

// --- construction -------------------------------------------------------

ConvEncoder ConvEncoder::make(std::size_t in_h, std::size_t in_w, const Dims3& out, std::size_t width) {
    if (in_h % out.h != 0 || in_w % out.w != 0 || in_h / out.h != in_w / out.w)
        throw std::invalid_argument("encoder: frame does not reduce to the embedding by a common factor");
    std::vector<std::size_t> factors = prime_factors_desc(in_h / out.h);
    if (factors.empty()) factors.push_back(1);
    ConvEncoder e;
    std::size_t in_c = 3;
    for (std::size_t i = 0; i < factors.size(); ++i) {
        const std::size_t out_c = i + 1 == factors.size() ? out.c : width;
        e.stages.push_back(ConvParams::conv(out_c, in_c, stage_kernel(factors[i])));
        e.strides.push_back(factors[i]);
        in_c = out_c;
    }
    return e;
}

const Shortcut* PNeRVModel::shortcut_for(std::size_t layer) const {
    for (const auto& s : shortcuts)
        if (s.layer == layer) return &s;
    return nullptr;
}

std::vector<NamedTensor> PNeRVModel::named_tensors() {
    std::vector<NamedTensor> out;
    collect(*this, [&](const std::string& n, Tensor& t) { out.push_back({n, &t}); }, true, true);
    return out;
}

std::vector<std::pair<std::string, const Tensor*>> PNeRVModel::named_tensors() const {
    std::vector<std::pair<std::string, const Tensor*>> out;
    collect(*this, [&](const std::string& n, const Tensor& t) { out.emplace_back(n, &t); }, true, true);
    return out;
}

std::vector<std::pair<std::string, const Tensor*>> PNeRVModel::decoder_tensors() const {
    std::vector<std::pair<std::string, const Tensor*>> out;
    collect(*this, [&](const std::string& n, const Tensor& t) { out.emplace_back(n, &t); }, false, true);
    return out;
}

Embedding EmbeddingSet::at(std::size_t t) const {
    Embedding e{content.at(t), std::nullopt};
    if (!temporal.empty()) e.temporal = temporal.at(t);
    return e;
}

std::size_t EmbeddingSet::numel() const {
    std::size_t n = 0;
    for (const auto& t : content) n += t.size();
    for (const auto& t : temporal) n += t.size();
    return n;
}

PNeRVModel build_model(const PNeRVConfig& cfg) {
    cfg.validate();
    Rng rng(cfg.seed);
    PNeRVModel m;
    m.config = cfg;
    const std::size_t H = cfg.out_height(), W = cfg.out_width();

    m.content_encoder = ConvEncoder::make(H, W, cfg.embed_content, cfg.encoder_width);
    for (auto& s : m.content_encoder.stages) s.init_kaiming(rng);
    if (cfg.variant == Variant::L) {
        m.temporal_encoder = ConvEncoder::make(H, W, cfg.embed_temporal, cfg.encoder_width);
        for (auto& s : m.temporal_encoder.stages) s.init_kaiming(rng);
    }

    std::size_t in_c = cfg.embed_content.c;
    for (std::size_t l = 1; l <= kNumLayers; ++l) {
        const std::size_t r = cfg.strides[l - 1];
        const std::size_t k = l == 1 ? cfg.first_block_kernel : cfg.block_kernel;
        ConvParams conv = ConvParams::conv(cfg.widths[l - 1] * r * r, in_c, k);
        conv.init_kaiming(rng);
        m.blocks.push_back(std::move(conv));
        in_c = cfg.widths[l - 1];
    }

    if (cfg.variant == Variant::L) {
        const Dims3 t = cfg.embed_temporal;
        for (std::size_t l = kFirstShortcutLayer; l <= kLastShortcutLayer; ++l) {
            const Dims3 d = cfg.layer_shape(l);
            Shortcut s;
            s.layer = l;
            switch (cfg.upscaler) {
                case UpscalerKind::KFc:
                    s.kfc = KFcParams::zeros(t.c, t.h, t.w, d.h, d.w);
                    s.kfc->init_kaiming(rng);
                    break;
                case UpscalerKind::Deconv:
                    s.rate = d.h / t.h;
                    s.deconv = ConvParams::transposed(t.c, t.c, s.rate);
                    s.deconv->init_kaiming(rng);
                    break;
                case UpscalerKind::Bilinear: s.rate = d.h / t.h; break;
            }
            s.bn_gamma = Tensor::vec(t.c, 1.0);
            s.bn_beta = Tensor::vec(t.c, 0.0);
            if (cfg.fusion == FusionKind::BSM) {
                s.bsm = BSMParams::make(t.c, d.c, cfg.bsm_kernel);
                s.bsm->init_kaiming(rng);
            } else {
                s.concat = ConcatFusionParams::make(t.c, d.c);
                s.concat->init_kaiming(rng);
            }
            m.shortcuts.push_back(std::move(s));
        }
    }

    m.head = ConvParams::conv(3, cfg.widths.back(), 1);
    m.head->init_kaiming(rng);
    return m;
}

// --- forward ------------------------------------------------------------

Tensor temporal_difference(const VideoClip& clip, std::size_t t) {
    if (t >= clip.frames()) throw std::out_of_range("frame index out of range");
    const std::size_t prev = t == 0 ? 0 : t - 1;
    const std::size_t next = std::min(t + 1, clip.frames() - 1);
    Tensor d = clip.frame(next) - clip.frame(prev);
    return d *= 0.5;
}

namespace ad {

namespace {

Var run_encoder(Bindings& b, const ConvEncoder& enc, Var x) {
    for (std::size_t i = 0; i < enc.stages.size(); ++i) {
        const auto g = stage_geometry(enc.strides[i], enc.stages[i].kernel());
        const ConvVars cv = bind(b, enc.stages[i]);
        x = conv2d(b.tape(), x, cv.weight, cv.bias, g.stride, g.padding);
        if (i + 1 < enc.stages.size()) x = gelu(b.tape(), x);
    }
    return x;
}

Var shortcut_features(Bindings& b, const Shortcut& s, Var temporal) {
    Tape& t = b.tape();
    Var up;
    if (s.kfc) {
        up = kfc(t, temporal, bind(b, *s.kfc));
    } else if (s.deconv) {
        const ConvVars cv = bind(b, *s.deconv);
        up = deconv2d(t, temporal, cv.weight, cv.bias, s.rate, 0);
    } else {
        up = bilinear_upsample(t, temporal, s.rate);
    }
    return gelu(t, batch_norm2d(t, up, b(s.bn_gamma), b(s.bn_beta)));
}

}  // namespace

EncodedVars encode(Bindings& b, const PNeRVModel& model, const VideoClip& clip, std::size_t t) {
    if (t >= clip.frames()) throw std::out_of_range("encode: frame index " + std::to_string(t) + " out of range");
    if (!model.has_encoder()) throw std::logic_error("encode: model has no encoder (decoder-only checkpoint)");
    if (clip.height() != model.config.out_height() || clip.width() != model.config.out_width())
        throw ShapeError("encode: clip is " + std::to_string(clip.height()) + "x" + std::to_string(clip.width()) + ", model expects " +
                         std::to_string(model.config.out_height()) + "x" + std::to_string(model.config.out_width()));
    EncodedVars out;
    out.content = run_encoder(b, model.content_encoder, b.tape().leaf(clip.frame(t), false, "frame"));
    if (model.config.variant == Variant::L)
        out.temporal = run_encoder(b, model.temporal_encoder, b.tape().leaf(temporal_difference(clip, t), false, "frame_diff"));
    return out;
}

Var decode(Bindings& b, const PNeRVModel& model, Var content, std::optional<Var> temporal, const DecodeOptions& opt) {
    Tape& t = b.tape();
    const PNeRVConfig& cfg = model.config;
    const Tensor& c0 = t.value(content);
    if (c0.shape() != Shape{cfg.embed_content.c, cfg.embed_content.h, cfg.embed_content.w})
        throw ShapeError("decode: content embedding " + shape_str(c0.shape()) + " does not match config");
    if (cfg.variant == Variant::L) {
        if (!temporal) throw ShapeError("decode: variant L needs a temporal embedding");
        const Tensor& tv = t.value(*temporal);
        if (tv.shape() != Shape{cfg.embed_temporal.c, cfg.embed_temporal.h, cfg.embed_temporal.w})
            throw ShapeError("decode: temporal embedding " + shape_str(tv.shape()) + " does not match config");
    }

    Var h = content;
    for (std::size_t l = 1; l <= kNumLayers; ++l) {
        const ConvParams& blk = model.blocks.at(l - 1);
        const std::size_t r = cfg.strides[l - 1];
        // Copies, not references: recording new nodes may move tape storage.
        const std::size_t prev_h = t.value(h).height(), prev_w = t.value(h).width();
        const ConvVars cv = bind(b, blk);
        Var hat = gelu(t, pixel_shuffle(t, conv2d(t, h, cv.weight, cv.bias, 1, blk.kernel() / 2), r));
        const Tensor& hv = t.value(hat);
        if (hv.height() != prev_h * r || hv.width() != prev_w * r)
            throw std::logic_error("decode: layer " + std::to_string(l) + " broke the stride chain");
        if (const Shortcut* s = model.shortcut_for(l)) {
            const Var z = shortcut_features(b, *s, *temporal);
            h = s->bsm ? bsm(t, z, hat, bind(b, *s->bsm), opt.gate_override) : concat_fusion(t, z, hat, bind(b, s->concat->mix));
        } else {
            h = hat;
        }
    }
    const ConvVars head = bind(b, model.head.value());
    return conv2d(t, h, head.weight, head.bias, 1, 0);
}

}  // namespace ad

Embedding encode(const PNeRVModel& model, const VideoClip& clip, std::size_t t) {
    ad::Tape tape;
    Bindings b(tape, false);
    const auto vars = ad::encode(b, model, clip, t);
    Embedding e{tape.value(vars.content), std::nullopt};
    if (vars.temporal) e.temporal = tape.value(*vars.temporal);
    return e;
}

EmbeddingSet encode_all(const PNeRVModel& model, const VideoClip& clip) {
    EmbeddingSet set;
    for (std::size_t t = 0; t < clip.frames(); ++t) {
        Embedding e = encode(model, clip, t);
        set.content.push_back(std::move(e.content));
        if (e.temporal) set.temporal.push_back(std::move(*e.temporal));
    }
    return set;
}

Tensor decode_frame(const PNeRVModel& model, const Embedding& e, const DecodeOptions& opt) {
    ad::Tape tape;
    Bindings b(tape, false);
    const ad::Var c = tape.leaf(e.content, false, "embedding");
    std::optional<ad::Var> tv;
    if (e.temporal) tv = tape.leaf(*e.temporal, false, "embedding");
    return tape.value(ad::decode(b, model, c, tv, opt));
}

ParamCount count_params(const PNeRVModel& model, const EmbeddingSet* embeddings) {
    ParamCount pc;
    for (const auto& [name, t] : model.named_tensors()) {
        if (name.rfind("decoder.", 0) == 0)
            pc.decoder += t->size();
        else
            pc.encoder += t->size();
    }
    if (embeddings) pc.embeddings = embeddings->numel();
    return pc;
}

// --- checkpoint ---------------------------------------------------------

namespace {

constexpr char kCheckpointMagic[4] = {'P', 'N', 'R', 'V'};

void write_tensor(ByteWriter& w, const std::string& name, const Tensor& t) {
    if (name.size() > 0xFFFF) throw std::invalid_argument("tensor name too long");
    w.u16(static_cast<std::uint16_t>(name.size()));
    w.bytes(name);
    w.u8(static_cast<std::uint8_t>(t.rank()));
    for (auto d : t.shape()) w.u32(static_cast<std::uint32_t>(d));
    for (double v : t.data()) w.f64(v);
}

std::pair<std::string, Tensor> read_tensor(ByteReader& r) {
    const std::size_t n = r.u16();
    std::string name = r.str(n);
    const std::size_t rank = r.u8();
    if (rank == 0 || rank > 4) throw FormatError("tensor '" + name + "' has invalid rank " + std::to_string(rank));
    Shape shape(rank);
    for (auto& d : shape) d = r.u32();
    const std::size_t count = shape_numel(shape);
    if (count * 8 > r.remaining()) throw FormatError("truncated data for tensor '" + name + "'");
    std::vector<double> data(count);
    for (auto& v : data) v = r.f64();
    return {std::move(name), Tensor(std::move(shape), std::move(data))};
}

}  // namespace

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ck) {
    ByteWriter w;
    w.bytes(std::string_view(kCheckpointMagic, 4));
    w.u16(kCheckpointVersion);
    json meta;
    meta["config"] = ck.model.config.to_json();
    meta["train_mode"] = ck.train_mode;
    const std::string blob = meta.dump();
    w.u32(static_cast<std::uint32_t>(blob.size()));
    w.bytes(blob);

    std::vector<std::pair<std::string, const Tensor*>> tensors = ck.model.named_tensors();
    if (ck.embeddings) {
        for (std::size_t t = 0; t < ck.embeddings->content.size(); ++t)
            tensors.emplace_back(indexed("embedding.content.%05zu", t), &ck.embeddings->content[t]);
        for (std::size_t t = 0; t < ck.embeddings->temporal.size(); ++t)
            tensors.emplace_back(indexed("embedding.temporal.%05zu", t), &ck.embeddings->temporal[t]);
    }
    w.u32(static_cast<std::uint32_t>(tensors.size()));
    for (const auto& [name, t] : tensors) write_tensor(w, name, *t);
    return w.buffer();
}

PNeRVModel model_from_tensors(const PNeRVConfig& cfg, const std::vector<std::pair<std::string, Tensor>>& tensors,
                              std::optional<EmbeddingSet>* embeddings_out) {
    PNeRVModel m = build_model(cfg);
    std::map<std::string, const Tensor*> by_name;
    std::map<std::size_t, const Tensor*> content, temporal;
    for (const auto& [name, t] : tensors) {
        if (by_name.count(name)) throw FormatError("duplicate tensor '" + name + "'");
        by_name[name] = &t;
        unsigned idx = 0;
        if (std::sscanf(name.c_str(), "embedding.content.%u", &idx) == 1) content[idx] = &t;
        if (std::sscanf(name.c_str(), "embedding.temporal.%u", &idx) == 1) temporal[idx] = &t;
    }

    std::size_t used = 0;
    std::size_t encoder_found = 0, encoder_total = 0;
    for (auto& [name, slot] : m.named_tensors()) {
        const bool is_encoder = name.rfind("encoder.", 0) == 0;
        encoder_total += is_encoder;
        auto it = by_name.find(name);
        if (it == by_name.end()) {
            if (!is_encoder) throw FormatError("missing tensor '" + name + "'");
            continue;
        }
        if (it->second->shape() != slot->shape())
            throw FormatError("tensor '" + name + "' has shape " + shape_str(it->second->shape()) + ", config implies " +
                              shape_str(slot->shape()));
        *slot = *it->second;
        encoder_found += is_encoder;
        ++used;
    }
    if (encoder_found != 0 && encoder_found != encoder_total) throw FormatError("encoder tensors are incomplete");
    if (encoder_found == 0) {
        m.content_encoder = ConvEncoder{};
        m.temporal_encoder = ConvEncoder{};
    }
    if (used + content.size() + temporal.size() != tensors.size()) throw FormatError("unexpected tensors in table");

    if (!content.empty()) {
        EmbeddingSet set;
        const Shape cs{cfg.embed_content.c, cfg.embed_content.h, cfg.embed_content.w};
        const Shape ts{cfg.embed_temporal.c, cfg.embed_temporal.h, cfg.embed_temporal.w};
        for (std::size_t t = 0; t < content.size(); ++t) {
            auto it = content.find(t);
            if (it == content.end() || it->second->shape() != cs) throw FormatError("content embedding table inconsistent");
            set.content.push_back(*it->second);
        }
        if (cfg.variant == Variant::L) {
            if (temporal.size() != content.size()) throw FormatError("temporal embedding count mismatch");
            for (std::size_t t = 0; t < temporal.size(); ++t) {
                auto it = temporal.find(t);
                if (it == temporal.end() || it->second->shape() != ts) throw FormatError("temporal embedding table inconsistent");
                set.temporal.push_back(*it->second);
            }
        } else if (!temporal.empty()) {
            throw FormatError("variant M checkpoint carries temporal embeddings");
        }
        if (embeddings_out) *embeddings_out = std::move(set);
    } else if (!temporal.empty()) {
        throw FormatError("temporal embeddings without content embeddings");
    }
    return m;
}

Checkpoint deserialize_checkpoint(const std::vector<std::uint8_t>& bytes) {
    ByteReader r(bytes);
    if (r.str(4) != std::string(kCheckpointMagic, 4)) throw FormatError("bad magic, expected PNRV");
    const std::uint16_t version = r.u16();
    if (version != kCheckpointVersion) throw FormatError("unsupported checkpoint version " + std::to_string(version));
    const std::size_t blob_len = r.u32();
    json meta;
    try {
        meta = json::parse(r.str(blob_len));
    } catch (const json::exception& e) {
        throw FormatError(std::string("config blob is not valid JSON: ") + e.what());
    }
    const std::size_t count = r.u32();
    std::vector<std::pair<std::string, Tensor>> tensors;
    for (std::size_t i = 0; i < count; ++i) tensors.push_back(read_tensor(r));
    if (r.remaining() != 0) throw FormatError("trailing bytes after tensor table");

    Checkpoint ck;
    PNeRVConfig cfg;
    try {
        cfg = PNeRVConfig::from_json(meta.at("config"));
        ck.train_mode = meta.value("train_mode", "regression");
    } catch (const json::exception& e) {
        throw FormatError(std::string("bad config blob: ") + e.what());
    } catch (const std::invalid_argument& e) {
        throw FormatError(std::string("bad config blob: ") + e.what());
    }
    try {
        ck.model = model_from_tensors(cfg, tensors, &ck.embeddings);
    } catch (const std::invalid_argument& e) {
        throw FormatError(std::string("bad config blob: ") + e.what());
    }
    return ck;
}

void save_checkpoint(const Checkpoint& ck, const std::string& path) { write_file(path, serialize_checkpoint(ck)); }

Checkpoint load_checkpoint(const std::string& path) { return deserialize_checkpoint(read_file(path)); }

}  // namespace pnerv
