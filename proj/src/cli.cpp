#include "pnerv/cli.hpp"

#include "pnerv/binary_io.hpp"
#include "pnerv/codec.hpp"
#include "pnerv/gradcheck_suite.hpp"
#include "pnerv/kfc.hpp"
#include "pnerv/metrics.hpp"
#include "pnerv/trainer.hpp"
#include "pnerv/uat.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <fstream>
#include <iostream>
#include <sstream>

namespace pnerv {

namespace {

using json = nlohmann::json;

/// Bad flag values found after CLI11 has accepted the syntax.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config '" + path + "'");
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw std::runtime_error("config '" + path + "' is not valid JSON: " + e.what());
    }
}

std::vector<double> parse_eps_list(const std::string& s) {
    std::vector<double> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        std::size_t used = 0;
        double v = 0.0;
        try {
            v = std::stod(item, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used == 0 || used != item.size() || !(v >= 0.0)) throw UsageError("--eps expects non-negative numbers, got '" + item + "'");
        out.push_back(v);
    }
    if (out.empty()) throw UsageError("--eps needs at least one value");
    return out;
}

json budget_entry(OperatorKind kind, const UpscaleShape& s) {
    const OperatorBudget b = operator_flops(kind, s);
    return {{"kernel_params", b.kernel_params}, {"bias_params", b.bias_params}, {"total_params", b.total_params()},
            {"macs", b.macs},                   {"adds", b.adds},               {"flops", b.flops()}};
}

json budget_table(const UpscaleShape& s, bool integer_rate) {
    json ops;
    ops["KFc"] = budget_entry(OperatorKind::KFc, s);
    if (integer_rate) {
        ops["PixelShuffle"] = budget_entry(OperatorKind::PixelShuffle, s);
        ops["Deconv"] = budget_entry(OperatorKind::Deconv, s);
        ops["Bilinear"] = budget_entry(OperatorKind::Bilinear, s);
    } else {
        ops["PixelShuffle"] = ops["Deconv"] = ops["Bilinear"] = nullptr;
    }
    json row{{"channels", s.channels}, {"in", {s.h_in, s.w_in}}, {"out", {s.h_out, s.w_out}}, {"kernel", s.kernel},
             {"operators", ops}};
    row["rate"] = integer_rate ? json(s.rate) : json(nullptr);
    if (integer_rate) {
        const double kfc = static_cast<double>(ops["KFc"]["total_params"].get<std::uint64_t>());
        const double ps = static_cast<double>(ops["PixelShuffle"]["total_params"].get<std::uint64_t>());
        row["kfc_to_pixelshuffle_params"] = kfc / ps;
    }
    return row;
}

json grad_report_json(const SuiteCheck& c) {
    json entries = json::array();
    for (const auto& e : c.report.entries)
        entries.push_back({{"name", e.name}, {"count", e.count}, {"max_rel_error", e.max_rel_error}, {"max_abs_error", e.max_abs_error}});
    return {{"name", c.name}, {"max_rel_error", c.report.max_rel_error}, {"passed", c.report.passed()}, {"entries", entries}};
}

void print(std::ostream& out, const json& j) { out << j.dump(2) << '\n'; }

// --- commands -------------------------------------------------------------

struct TrainArgs {
    std::string video, config, out, mode, log;
    std::optional<std::size_t> epochs;
    std::optional<double> lr;
    std::optional<std::uint64_t> seed;
};

int cmd_train(const TrainArgs& a, std::ostream& out) {
    const VideoClip clip = load_video(a.video);
    PNeRVConfig cfg = PNeRVConfig::desk();
    TrainConfig tc;
    if (!a.config.empty()) {
        const json j = read_json_file(a.config);
        cfg = PNeRVConfig::from_json(j);
        tc = TrainConfig::from_json(j);
    }
    if (!a.mode.empty()) tc.mode = train_mode_from_string(a.mode);
    if (a.epochs) tc.epochs = *a.epochs;
    if (a.lr) tc.lr_max = *a.lr;
    if (a.seed) tc.seed = *a.seed;
    cfg.seed = tc.seed;
    tc.validate();
    cfg.validate();
    if (clip.height() != cfg.out_height() || clip.width() != cfg.out_width())
        throw std::runtime_error("video is " + std::to_string(clip.height()) + "x" + std::to_string(clip.width()) +
                                 " after cropping but the config decodes " + std::to_string(cfg.out_height()) + "x" +
                                 std::to_string(cfg.out_width()));

    PNeRVModel model = build_model(cfg);
    const TrainLog log = train(model, clip, tc);

    Checkpoint ck{model, encode_all(model, clip), to_string(tc.mode)};
    save_checkpoint(ck, a.out);
    const std::string log_path = a.log.empty() ? a.out + ".csv" : a.log;
    std::ofstream csv(log_path);
    if (!csv) throw std::runtime_error("cannot write log '" + log_path + "'");
    log.write_csv(csv);

    const ParamCount pc = count_params(model, &*ck.embeddings);
    print(out, {{"checkpoint", a.out},
                {"log", log_path},
                {"mode", to_string(tc.mode)},
                {"epochs", tc.epochs},
                {"initial_loss", log.epochs.front().loss},
                {"final_loss", log.epochs.back().loss},
                {"final_psnr", log.epochs.back().psnr},
                {"params", {{"decoder", pc.decoder}, {"encoder", pc.encoder}, {"embeddings", pc.embeddings}}}});
    return kExitOk;
}

int cmd_eval(const std::string& video, const std::string& model_path, std::ostream& out) {
    const Checkpoint ck = load_checkpoint(model_path);
    const VideoClip clip = load_video(video);
    const TrainMode mode = train_mode_from_string(ck.train_mode);
    const FrameSplit split = frame_split(mode, clip.frames());

    std::vector<Tensor> recon, refs;
    std::string source;
    if (ck.model.has_encoder()) {
        recon = reconstruct(ck.model, clip, split.eval);
        source = "encoder";
    } else {
        if (!ck.embeddings || ck.embeddings->frames() != clip.frames())
            throw std::runtime_error("decoder-only model has embeddings for " +
                                     std::to_string(ck.embeddings ? ck.embeddings->frames() : 0) + " frames, video has " +
                                     std::to_string(clip.frames()));
        const std::vector<Tensor> all = reconstruct(ck.model, *ck.embeddings);
        for (auto t : split.eval) recon.push_back(all[t]);
        source = "embeddings";
    }
    for (auto t : split.eval) refs.push_back(clip.frame(t));
    json j = evaluate_frames(recon, refs, split.eval).to_json();
    j["protocol"] = to_string(mode);
    j["embedding_source"] = source;
    print(out, j);
    return kExitOk;
}

int cmd_compress(const std::string& model_path, const std::string& video, const std::string& out_path, std::ostream& out) {
    const Checkpoint ck = load_checkpoint(model_path);
    EmbeddingSet emb;
    if (ck.model.has_encoder()) {
        emb = encode_all(ck.model, load_video(video));
    } else {
        if (!ck.embeddings) throw std::runtime_error("decoder-only model carries no embeddings");
        emb = *ck.embeddings;
    }
    const CompressResult c = compress(ck.model, emb, ck.train_mode);
    write_file(out_path, c.bytes);
    json j = c.rate.to_json();
    j["bitstream"] = out_path;
    print(out, j);
    return kExitOk;
}

int cmd_decompress(const std::string& in_path, const std::string& out_path, std::ostream& out) {
    const auto bytes = read_file(in_path);
    const QuantizedBlob blob = deserialize_bitstream(bytes);
    save_checkpoint(dequantize(blob), out_path);
    json j = rate_report(blob, bytes.size()).to_json();
    j["checkpoint"] = out_path;
    print(out, j);
    return kExitOk;
}

int cmd_analyze(const std::string& video, const std::vector<double>& eps, const std::string& model_path, std::ostream& out) {
    const VideoClip clip = load_video(video);
    const DynamicsProfile prof = dynamics_profile(clip);
    json j = prof.to_json();
    const std::size_t d_out = 3 * clip.height() * clip.width();
    const double diam = static_cast<double>(clip.frames() - 1);
    j["bound_query"] = {{"d_in", 1}, {"d_out", d_out}, {"diam", diam}};
    j["bound_note"] = "upper bound up to the suppressed O(1) constant (taken as 1)";
    json inv = json::array(), bounds = json::array();
    for (double e : eps) {
        const std::size_t w = dual_modulus(prof, e);
        inv.push_back({{"epsilon", e}, {"omega_inv", w}});
        json b{{"epsilon", e}, {"omega_inv", w}};
        if (diam > 0.0) {
            const BoundResult r = param_bound({1, d_out, diam, e, static_cast<double>(w)});
            b["param_bound"] = r.params ? json(*r.params) : json(nullptr);
            b["bounded"] = r.bounded();
        } else {
            b["param_bound"] = nullptr;
            b["bounded"] = false;
        }
        bounds.push_back(b);
    }
    j["omega_inv"] = inv;
    j["param_bound"] = bounds;
    if (!model_path.empty()) {
        const Checkpoint ck = load_checkpoint(model_path);
        const EmbeddingSet emb = ck.model.has_encoder() ? encode_all(ck.model, clip) : ck.embeddings.value_or(EmbeddingSet{});
        j["embedding_diameter"] = embedding_diameter(emb.content);
    }
    print(out, j);
    return kExitOk;
}

int cmd_budget(const std::string& config, UpscaleShape s, std::ostream& out) {
    json rows = json::array();
    if (!config.empty()) {
        const PNeRVConfig cfg = PNeRVConfig::from_json(read_json_file(config));
        cfg.validate();
        const Dims3 t = cfg.embed_temporal;
        for (std::size_t l = kFirstShortcutLayer; l <= kLastShortcutLayer; ++l) {
            const Dims3 d = cfg.layer_shape(l);
            UpscaleShape u{t.c, t.h, t.w, d.h, d.w, s.kernel, d.h / t.h};
            const bool integer_rate = d.h % t.h == 0 && d.w % t.w == 0 && d.h / t.h == d.w / t.w;
            json row = budget_table(u, integer_rate);
            row["layer"] = l;
            rows.push_back(row);
        }
    } else {
        if (!s.channels || !s.h_in || !s.w_in || !s.h_out || !s.w_out || !s.kernel) throw UsageError("budget shapes must be positive");
        const bool integer_rate = s.h_out % s.h_in == 0 && s.w_out % s.w_in == 0 && s.h_out / s.h_in == s.w_out / s.w_in;
        s.rate = s.h_out / s.h_in;
        rows.push_back(budget_table(s, integer_rate));
    }
    print(out, {{"shapes", rows}});
    return kExitOk;
}

int cmd_gradcheck(std::uint64_t seed, std::ostream& out) {
    const auto checks = run_gradcheck_suite(seed);
    json arr = json::array();
    bool ok = true;
    double worst = 0.0;
    for (const auto& c : checks) {
        arr.push_back(grad_report_json(c));
        ok = ok && c.report.passed();
        worst = std::max(worst, c.report.max_rel_error);
    }
    print(out, {{"checks", arr}, {"passed", ok}, {"max_rel_error", worst}, {"tol", GradCheckOptions{}.tol}, {"seed", seed}});
    return ok ? kExitOk : kExitPipeline;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Pyramidal neural video representation toolkit", "pnerv"};
    app.require_subcommand(1);

    TrainArgs ta;
    auto* train_cmd = app.add_subcommand("train", "Fit a model to a video and write a checkpoint plus CSV log");
    train_cmd->add_option("--video", ta.video, "Input .rgbv file or PPM frame directory")->required();
    train_cmd->add_option("--config", ta.config, "JSON with model and training fields");
    train_cmd->add_option("--out", ta.out, "Checkpoint path")->required();
    train_cmd->add_option("--mode", ta.mode, "regression or interpolation")->check(CLI::IsMember({"regression", "interpolation"}));
    train_cmd->add_option("--epochs", ta.epochs)->check(CLI::PositiveNumber);
    train_cmd->add_option("--lr", ta.lr, "Peak learning rate")->check(CLI::NonNegativeNumber);
    train_cmd->add_option("--seed", ta.seed);
    train_cmd->add_option("--log", ta.log, "CSV log path (default: <out>.csv)");

    std::string video, model, out_path, in_path, eps_text, config;
    auto* eval_cmd = app.add_subcommand("eval", "Score a checkpoint against a video");
    eval_cmd->add_option("--video", video)->required();
    eval_cmd->add_option("--model", model)->required();

    auto* compress_cmd = app.add_subcommand("compress", "Quantize a model and its embeddings to 8 bits");
    compress_cmd->add_option("--model", model)->required();
    compress_cmd->add_option("--video", video)->required();
    compress_cmd->add_option("--out", out_path)->required();

    auto* decompress_cmd = app.add_subcommand("decompress", "Turn a bitstream back into a decoder checkpoint");
    decompress_cmd->add_option("--in", in_path)->required();
    decompress_cmd->add_option("--out", out_path)->required();

    auto* analyze_cmd = app.add_subcommand("analyze", "Modulus of continuity profile and capacity bound");
    analyze_cmd->add_option("--video", video)->required();
    analyze_cmd->add_option("--eps", eps_text, "Comma-separated epsilon values")->required();
    analyze_cmd->add_option("--model", model, "Optional checkpoint for the embedding diameter");

    UpscaleShape shape{16, 2, 4, 320, 640, 1, 160};
    auto* budget_cmd = app.add_subcommand("budget", "Parameter and FLOP table for the upscaling operators");
    budget_cmd->add_option("--config", config, "Use the shortcut shapes of this model config");
    budget_cmd->add_option("--channels", shape.channels)->capture_default_str();
    budget_cmd->add_option("--in-h", shape.h_in)->capture_default_str();
    budget_cmd->add_option("--in-w", shape.w_in)->capture_default_str();
    budget_cmd->add_option("--out-h", shape.h_out)->capture_default_str();
    budget_cmd->add_option("--out-w", shape.w_out)->capture_default_str();
    budget_cmd->add_option("--kernel", shape.kernel, "Conv kernel in front of PixelShuffle")->capture_default_str();

    std::uint64_t seed = 0;
    auto* grad_cmd = app.add_subcommand("gradcheck", "Finite-difference gradient suite");
    grad_cmd->add_option("--seed", seed)->capture_default_str();

    std::string command;
    try {
        app.parse(argc, argv);
        CLI::App* sub = app.get_subcommands().front();
        command = sub->get_name();
        if (sub == train_cmd) return cmd_train(ta, out);
        if (sub == eval_cmd) return cmd_eval(video, model, out);
        if (sub == compress_cmd) return cmd_compress(model, video, out_path, out);
        if (sub == decompress_cmd) return cmd_decompress(in_path, out_path, out);
        if (sub == analyze_cmd) return cmd_analyze(video, parse_eps_list(eps_text), model, out);
        if (sub == budget_cmd) return cmd_budget(config, shape, out);
        return cmd_gradcheck(seed, out);
    } catch (const CLI::ParseError& e) {
        return app.exit(e, out, err) == 0 ? kExitOk : kExitUsage;
    } catch (const UsageError& e) {
        err << "error: " << e.what() << '\n' << app.help();
        return kExitUsage;
    } catch (const std::exception& e) {
        err << json{{"error", e.what()}, {"command", command}}.dump() << '\n';
        return kExitPipeline;
    }
}

}  // namespace pnerv
