#include "pnerv/codec.hpp"

#include "pnerv/binary_io.hpp"
#include "pnerv/metrics.hpp"
#include "pnerv/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace pnerv {

QuantizedTensor quantize_u8(const Tensor& t, std::string name) {
    if (t.empty()) throw std::invalid_argument("quantize_u8: empty tensor");
    if (!t.all_finite()) throw std::invalid_argument("quantize_u8: non-finite values in '" + name + "'");
    QuantizedTensor q{std::move(name), t.shape(), 0.0, 0.0, {}};
    const auto [lo, hi] = std::minmax_element(t.data().begin(), t.data().end());
    q.min = *lo;
    q.max = *hi;
    q.codes.resize(t.size(), 0);
    const double range = q.max - q.min;
    if (range > 0.0)
        for (std::size_t i = 0; i < t.size(); ++i)
            q.codes[i] = static_cast<std::uint8_t>(std::clamp(std::round((t[i] - q.min) / range * 255.0), 0.0, 255.0));
    return q;
}

Tensor dequantize(const QuantizedTensor& q) {
    if (q.codes.size() != shape_numel(q.shape)) throw FormatError("quantized tensor '" + q.name + "': code count mismatch");
    Tensor t(q.shape);
    const double range = q.max - q.min;
    for (std::size_t i = 0; i < q.codes.size(); ++i) {
        const std::uint8_t c = q.codes[i];
        t[i] = c == 255 ? q.max : q.min + range * (static_cast<double>(c) / 255.0);
    }
    return t;
}

std::size_t QuantizedBlob::value_count() const {
    std::size_t n = 0;
    for (const auto& q : tensors) n += q.codes.size();
    for (const auto& q : embeddings) n += q.codes.size();
    return n;
}

namespace {

std::string frame_name(const char* kind, std::size_t t) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "embedding.%s.%05zu", kind, t);
    return buf;
}

}  // namespace

QuantizedBlob quantize(const PNeRVModel& model, const EmbeddingSet& embeddings, const std::string& train_mode) {
    QuantizedBlob blob{model.config, train_mode, {}, {}};
    for (const auto& [name, t] : model.decoder_tensors()) blob.tensors.push_back(quantize_u8(*t, name));
    for (std::size_t t = 0; t < embeddings.content.size(); ++t)
        blob.embeddings.push_back(quantize_u8(embeddings.content[t], frame_name("content", t)));
    for (std::size_t t = 0; t < embeddings.temporal.size(); ++t)
        blob.embeddings.push_back(quantize_u8(embeddings.temporal[t], frame_name("temporal", t)));
    return blob;
}

Checkpoint dequantize(const QuantizedBlob& blob) {
    std::vector<std::pair<std::string, Tensor>> tensors;
    for (const auto& q : blob.tensors) tensors.emplace_back(q.name, dequantize(q));
    for (const auto& q : blob.embeddings) tensors.emplace_back(q.name, dequantize(q));
    Checkpoint ck;
    ck.train_mode = blob.train_mode;
    ck.model = model_from_tensors(blob.config, tensors, &ck.embeddings);
    if (ck.model.has_encoder()) throw FormatError("bitstream must not carry encoder weights");
    return ck;
}

// Layout: "PNRQ", u16 version, u32 + JSON metadata, then two tables
// (decoder tensors, embeddings) of: u32 count, and per entry u16 name length,
// name, u8 rank, u32 dims, f64 min, f64 max, raw codes.
namespace {

constexpr char kMagic[4] = {'P', 'N', 'R', 'Q'};

void write_table(ByteWriter& w, const std::vector<QuantizedTensor>& table) {
    w.u32(static_cast<std::uint32_t>(table.size()));
    for (const auto& q : table) {
        w.u16(static_cast<std::uint16_t>(q.name.size()));
        w.bytes(q.name);
        w.u8(static_cast<std::uint8_t>(q.shape.size()));
        for (auto d : q.shape) w.u32(static_cast<std::uint32_t>(d));
        w.f64(q.min);
        w.f64(q.max);
        w.bytes(q.codes.data(), q.codes.size());
    }
}

std::vector<QuantizedTensor> read_table(ByteReader& r) {
    const std::size_t count = r.u32();
    std::vector<QuantizedTensor> table;
    for (std::size_t i = 0; i < count; ++i) {
        QuantizedTensor q;
        q.name = r.str(r.u16());
        const std::size_t rank = r.u8();
        if (rank == 0 || rank > 4) throw FormatError("quantized tensor '" + q.name + "' has invalid rank");
        q.shape.resize(rank);
        for (auto& d : q.shape) d = r.u32();
        q.min = r.f64();
        q.max = r.f64();
        if (!(q.min <= q.max)) throw FormatError("quantized tensor '" + q.name + "' has min > max");
        const std::size_t n = shape_numel(q.shape);
        const std::uint8_t* p = r.raw(n);
        q.codes.assign(p, p + n);
        table.push_back(std::move(q));
    }
    return table;
}

}  // namespace

std::vector<std::uint8_t> serialize_bitstream(const QuantizedBlob& blob) {
    ByteWriter w;
    w.bytes(std::string_view(kMagic, 4));
    w.u16(kBitstreamVersion);
    const nlohmann::json meta{{"config", blob.config.to_json()}, {"train_mode", blob.train_mode}};
    const std::string s = meta.dump();
    w.u32(static_cast<std::uint32_t>(s.size()));
    w.bytes(s);
    write_table(w, blob.tensors);
    write_table(w, blob.embeddings);
    return w.buffer();
}

QuantizedBlob deserialize_bitstream(const std::vector<std::uint8_t>& bytes) {
    ByteReader r(bytes);
    if (r.str(4) != std::string(kMagic, 4)) throw FormatError("bad magic, expected PNRQ");
    const auto version = r.u16();
    if (version != kBitstreamVersion) throw FormatError("unsupported bitstream version " + std::to_string(version));
    QuantizedBlob blob;
    try {
        const auto meta = nlohmann::json::parse(r.str(r.u32()));
        blob.config = PNeRVConfig::from_json(meta.at("config"));
        blob.train_mode = meta.value("train_mode", "regression");
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("bad bitstream metadata: ") + e.what());
    } catch (const std::invalid_argument& e) {
        throw FormatError(std::string("bad bitstream metadata: ") + e.what());
    }
    blob.tensors = read_table(r);
    blob.embeddings = read_table(r);
    if (r.remaining() != 0) throw FormatError("trailing bytes after embedding table");
    return blob;
}

RateReport rate_report(const QuantizedBlob& blob, std::size_t stream_bytes) {
    RateReport r;
    for (const auto& q : blob.tensors) r.model_values += q.codes.size();
    for (const auto& q : blob.embeddings) r.embedding_values += q.codes.size();
    r.payload_bits = 8 * (r.model_values + r.embedding_values);
    r.total_bits = 8 * static_cast<std::uint64_t>(stream_bytes);
    r.header_bits = r.total_bits - r.payload_bits;
    std::size_t frames = 0;
    for (const auto& q : blob.embeddings) frames += q.name.rfind("embedding.content.", 0) == 0;
    r.frames = frames;
    r.height = blob.config.out_height();
    r.width = blob.config.out_width();
    if (frames > 0) {
        r.bpp = pnerv::bpp(8 * r.model_values, 8 * r.embedding_values, frames, r.height, r.width);
        r.total_bpp = static_cast<double>(r.total_bits) / static_cast<double>(frames * r.height * r.width);
    }
    return r;
}

nlohmann::json RateReport::to_json() const {
    return {{"model_values", model_values}, {"embedding_values", embedding_values}, {"payload_bits", payload_bits},
            {"header_bits", header_bits},   {"total_bits", total_bits},             {"frames", frames},
            {"height", height},             {"width", width},                       {"bpp", bpp},
            {"total_bpp", total_bpp}};
}

CompressResult compress(const PNeRVModel& model, const EmbeddingSet& embeddings, const std::string& train_mode) {
    const QuantizedBlob blob = quantize(model, embeddings, train_mode);
    CompressResult out{serialize_bitstream(blob), {}};
    out.rate = rate_report(blob, out.bytes.size());
    return out;
}

Checkpoint decompress(const std::vector<std::uint8_t>& bytes) { return dequantize(deserialize_bitstream(bytes)); }

nlohmann::json RateDistortion::to_json() const {
    return {{"rate", rate.to_json()},
            {"bpp", rate.bpp},
            {"psnr", psnr},
            {"psnr_unquantized", psnr_unquantized},
            {"ms_ssim", ms_ssim ? nlohmann::json(*ms_ssim) : nlohmann::json(nullptr)}};
}

RateDistortion rate_distortion(const PNeRVModel& model, const VideoClip& clip) {
    const EmbeddingSet emb = encode_all(model, clip);
    const CompressResult c = compress(model, emb);
    const Checkpoint ck = decompress(c.bytes);

    std::vector<std::size_t> idx(clip.frames());
    for (std::size_t t = 0; t < idx.size(); ++t) idx[t] = t;
    const QualityReport q = evaluate_frames(reconstruct(ck.model, *ck.embeddings), clip.all(), idx);
    const QualityReport raw = evaluate_frames(reconstruct(model, emb), clip.all(), idx);

    RateDistortion rd;
    rd.rate = c.rate;
    rd.psnr = q.avg_psnr();
    rd.ms_ssim = q.avg_ms_ssim();
    rd.psnr_unquantized = raw.avg_psnr();
    return rd;
}

}  // namespace pnerv
