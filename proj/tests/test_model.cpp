#include "pnerv/binary_io.hpp"
#include "pnerv/model.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <utility>

using namespace pnerv;

namespace {

PNeRVConfig tiny_l() {
    PNeRVConfig cfg = PNeRVConfig::tiny_gradcheck();
    cfg.seed = 5;
    return cfg;
}

Embedding random_embedding(const PNeRVConfig& cfg, Rng& rng) {
    Embedding e{uniform({cfg.embed_content.c, cfg.embed_content.h, cfg.embed_content.w}, rng), std::nullopt};
    if (cfg.variant == Variant::L) e.temporal = uniform({cfg.embed_temporal.c, cfg.embed_temporal.h, cfg.embed_temporal.w}, rng);
    return e;
}

std::filesystem::path scratch(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / "pnerv_model_tests";
    std::filesystem::create_directories(dir);
    return dir / name;
}

}  // namespace

TEST(Config, DeskShapeArithmetic) {
    const PNeRVConfig cfg = PNeRVConfig::desk();
    EXPECT_NO_THROW(cfg.validate());
    EXPECT_EQ(cfg.out_height(), 64u);
    EXPECT_EQ(cfg.out_width(), 128u);
    EXPECT_EQ(cfg.layer_shape(6), (Dims3{8, 64, 128}));
    for (std::size_t l = 1; l <= 6; ++l) EXPECT_EQ(cfg.has_shortcut(l), l >= 2 && l <= 5);
}

TEST(Config, ValidationRejectsBadShapes) {
    PNeRVConfig cfg = PNeRVConfig::desk();
    cfg.strides = {2, 2, 2, 2, 2};
    EXPECT_THROW(cfg.validate(), std::invalid_argument);
    cfg = PNeRVConfig::desk();
    cfg.embed_content = {16, 2, 3};  // not 1:2
    EXPECT_THROW(cfg.validate(), std::invalid_argument);
}

TEST(Config, JsonRoundTrip) {
    PNeRVConfig cfg = PNeRVConfig::desk();
    cfg.variant = Variant::M;
    cfg.fusion = FusionKind::Concat;
    cfg.upscaler = UpscalerKind::Bilinear;
    cfg.seed = 99;
    const PNeRVConfig back = PNeRVConfig::from_json(cfg.to_json());
    EXPECT_EQ(back.to_json(), cfg.to_json());
}

TEST(Model, DeskBuildsAndDecodesToConfiguredShape) {
    const PNeRVConfig cfg = PNeRVConfig::desk();
    const PNeRVModel m = build_model(cfg);
    Rng rng(1);
    const Tensor y = decode_frame(m, random_embedding(cfg, rng));
    EXPECT_EQ(y.shape(), (Shape{3, 64, 128}));
    EXPECT_TRUE(y.all_finite());
}

TEST(Model, ShortcutCounts) {
    PNeRVConfig cfg = PNeRVConfig::desk();
    const PNeRVModel l = build_model(cfg);
    EXPECT_EQ(l.shortcuts.size(), 4u);
    for (const auto& s : l.shortcuts) EXPECT_TRUE(s.kfc && s.bsm);

    cfg.variant = Variant::M;
    const PNeRVModel m = build_model(cfg);
    EXPECT_TRUE(m.shortcuts.empty());
    EXPECT_TRUE(m.temporal_encoder.empty());
    for (const auto& [name, t] : m.named_tensors()) {
        EXPECT_EQ(name.find("shortcut"), std::string::npos) << name;
        EXPECT_EQ(name.find("bsm"), std::string::npos) << name;
        EXPECT_EQ(name.find("kfc"), std::string::npos) << name;
    }
}

TEST(Model, SameSeedIsBitIdentical) {
    const PNeRVModel a = build_model(PNeRVConfig::desk()), b = build_model(PNeRVConfig::desk());
    const auto ta = a.named_tensors(), tb = b.named_tensors();
    ASSERT_EQ(ta.size(), tb.size());
    for (std::size_t i = 0; i < ta.size(); ++i) {
        EXPECT_EQ(ta[i].first, tb[i].first);
        EXPECT_EQ(*ta[i].second, *tb[i].second);
    }
    PNeRVConfig other = PNeRVConfig::desk();
    other.seed = 1;
    EXPECT_NE(*build_model(other).blocks[0].weight.data().data(), *a.blocks[0].weight.data().data());
}

TEST(Model, BiasesStartAtZero) {
    const PNeRVModel m = build_model(PNeRVConfig::desk());
    for (const auto& b : m.blocks) EXPECT_EQ(max_abs(b.bias), 0.0);
    EXPECT_EQ(max_abs(m.head->bias), 0.0);
}

TEST(Model, ConstantClipGivesZeroTemporalEmbedding) {
    const PNeRVConfig cfg = PNeRVConfig::desk();
    const PNeRVModel m = build_model(cfg);
    const VideoClip clip = synthetic::constant(3, 64, 128, 0.4);
    for (std::size_t t = 0; t < 3; ++t) {
        const Embedding e = encode(m, clip, t);
        ASSERT_TRUE(e.temporal);
        EXPECT_EQ(e.temporal->shape(), (Shape{2, 8, 16}));
        EXPECT_EQ(e.content.shape(), (Shape{16, 2, 4}));
        EXPECT_EQ(max_abs(*e.temporal), 0.0);
    }
    EXPECT_THROW(encode(m, clip, 3), std::out_of_range);
}

TEST(Model, TemporalDifferenceClampsAtBoundaries) {
    const VideoClip clip = synthetic::ramp(4, 2, 4, 1.0 / 16);
    EXPECT_EQ(max_abs_diff(temporal_difference(clip, 0), Tensor::chw(3, 2, 4, 0.5 / 16)), 0.0);
    EXPECT_EQ(max_abs_diff(temporal_difference(clip, 1), Tensor::chw(3, 2, 4, 1.0 / 16)), 0.0);
    EXPECT_EQ(max_abs_diff(temporal_difference(clip, 3), Tensor::chw(3, 2, 4, 0.5 / 16)), 0.0);
}

TEST(Model, EncodingIsDeterministic) {
    const PNeRVModel m = build_model(tiny_l());
    const VideoClip clip = synthetic::moving_gradient(3, 4, 8, 1.0, 2);
    const Embedding a = encode(m, clip, 1), b = encode(m, clip, 1);
    EXPECT_EQ(a.content, b.content);
    EXPECT_EQ(*a.temporal, *b.temporal);
}

TEST(Model, ZeroHeadGivesZeroFrame) {
    PNeRVModel m = build_model(PNeRVConfig::desk());
    m.head->weight.fill(0.0);
    Rng rng(2);
    const Tensor y = decode_frame(m, random_embedding(m.config, rng));
    EXPECT_EQ(max_abs(y), 0.0);
}

TEST(Model, VariantMIsSerialComposition) {
    PNeRVConfig cfg = PNeRVConfig::desk();
    cfg.variant = Variant::M;
    PNeRVModel m = build_model(cfg);
    Rng rng(3);
    for (auto& b : m.blocks) b.bias = uniform(b.bias.shape(), rng, -0.1, 0.1);
    const Embedding e = random_embedding(cfg, rng);
    Tensor h = e.content;
    for (std::size_t l = 0; l < kNumLayers; ++l)
        h = gelu(pixel_shuffle(conv2d(h, m.blocks[l], 1, m.blocks[l].kernel() / 2), cfg.strides[l]));
    const Tensor expect = conv2d(h, *m.head, 1, 0);
    EXPECT_LE(max_abs_diff(decode_frame(m, e), expect), 1e-12);
}

TEST(Model, ZeroGateReducesVariantLToVariantM) {
    PNeRVConfig cfg = PNeRVConfig::desk();
    PNeRVModel l = build_model(cfg);
    cfg.variant = Variant::M;
    PNeRVModel m = build_model(cfg);
    m.blocks = l.blocks;
    m.head = l.head;
    Rng rng(4);
    const Embedding e = random_embedding(l.config, rng);
    DecodeOptions off;
    off.gate_override = 0.0;
    EXPECT_EQ(decode_frame(l, e, off), decode_frame(m, Embedding{e.content, std::nullopt}));
    EXPECT_NE(decode_frame(l, e), decode_frame(m, Embedding{e.content, std::nullopt}));
}

TEST(Model, ParamCountMatchesEnumeration) {
    for (Variant v : {Variant::L, Variant::M}) {
        PNeRVConfig cfg = PNeRVConfig::desk();
        cfg.variant = v;
        const PNeRVModel m = build_model(cfg);
        std::size_t dec = 0, all = 0;
        for (const auto& [name, t] : m.named_tensors()) {
            all += t->size();
            if (name.rfind("decoder.", 0) == 0) dec += t->size();
        }
        const VideoClip clip = synthetic::constant(2, 64, 128, 0.1);
        const EmbeddingSet emb = encode_all(m, clip);
        const ParamCount pc = count_params(m, &emb);
        EXPECT_EQ(pc.decoder, dec);
        EXPECT_EQ(pc.decoder + pc.encoder, all);
        EXPECT_EQ(pc.embeddings, emb.numel());
        EXPECT_EQ(emb.numel(), 2 * (16 * 2 * 4 + (v == Variant::L ? 2 * 8 * 16 : 0)));
    }
}

TEST(Model, EmptyStubHasNoParameters) { EXPECT_EQ(count_params(PNeRVModel{}).total(), 0u); }

TEST(Model, ShortcutKFcCountDelegatesToBudget) {
    const PNeRVModel m = build_model(PNeRVConfig::desk());
    for (const auto& s : m.shortcuts) {
        const KFcParams& k = *s.kfc;
        const std::size_t stored = k.k1.size() + k.k2.size() + k.b_c.size() + k.b_h.size() + k.b_w.size();
        EXPECT_EQ(stored, kfc_param_count(k.channels(), k.h_in(), k.w_in(), k.h_out(), k.w_out()).total_params());
    }
}

TEST(Checkpoint, SaveLoadSaveIsByteIdentical) {
    Checkpoint ck{build_model(tiny_l()), std::nullopt, "regression"};
    const VideoClip clip = synthetic::moving_gradient(3, 4, 8, 1.0, 1);
    ck.embeddings = encode_all(ck.model, clip);
    const auto p1 = scratch("a.pnrv"), p2 = scratch("b.pnrv");
    save_checkpoint(ck, p1.string());
    const Checkpoint back = load_checkpoint(p1.string());
    save_checkpoint(back, p2.string());
    EXPECT_EQ(read_file(p1.string()), read_file(p2.string()));

    const auto ta = std::as_const(ck.model).named_tensors(), tb = back.model.named_tensors();
    ASSERT_EQ(ta.size(), tb.size());
    for (std::size_t i = 0; i < ta.size(); ++i) EXPECT_EQ(*ta[i].second, *tb[i].second) << ta[i].first;
    ASSERT_TRUE(back.embeddings);
    EXPECT_EQ(back.embeddings->content, ck.embeddings->content);
}

TEST(Checkpoint, CorruptedMagicIsRejected) {
    const Checkpoint ck{build_model(tiny_l()), std::nullopt, "regression"};
    auto bytes = serialize_checkpoint(ck);
    EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "PNRV");
    bytes[0] = 'X';
    EXPECT_THROW(deserialize_checkpoint(bytes), FormatError);
}

TEST(Checkpoint, TruncationAndVersionAreRejected) {
    const Checkpoint ck{build_model(tiny_l()), std::nullopt, "regression"};
    const auto bytes = serialize_checkpoint(ck);
    EXPECT_THROW(deserialize_checkpoint({bytes.begin(), bytes.end() - 3}), FormatError);
    auto bad = bytes;
    bad[4] = 9;  // version, little endian
    EXPECT_THROW(deserialize_checkpoint(bad), FormatError);
}

TEST(Checkpoint, ShapeTableMismatchIsRejected) {
    const PNeRVModel m = build_model(tiny_l());
    std::vector<std::pair<std::string, Tensor>> tensors;
    for (const auto& [name, t] : m.decoder_tensors()) tensors.emplace_back(name, *t);
    EXPECT_NO_THROW(model_from_tensors(m.config, tensors, nullptr));
    tensors[0].second = Tensor({1}, 0.0);
    EXPECT_ANY_THROW(model_from_tensors(m.config, tensors, nullptr));
    tensors.erase(tensors.begin());
    EXPECT_ANY_THROW(model_from_tensors(m.config, tensors, nullptr));
}

TEST(Checkpoint, MissingFileIsReported) { EXPECT_ANY_THROW(load_checkpoint(scratch("does_not_exist.pnrv").string())); }
