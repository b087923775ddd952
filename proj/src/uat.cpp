#include "pnerv/uat.hpp"

#include <algorithm>
#include <cmath>

namespace pnerv {

double frame_rms_distance(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "frame_rms_distance");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(acc / static_cast<double>(a.size()));
}

namespace {

void check_delta(std::size_t T, std::size_t delta) {
    if (delta < 1 || delta + 1 > T)
        throw std::out_of_range("delta " + std::to_string(delta) + " outside [1, " + std::to_string(T == 0 ? 0 : T - 1) + "]");
}

// row[d - 1] = max over i of dist(i, i + d).
std::vector<double> max_by_gap(const VideoClip& clip) {
    const std::size_t T = clip.frames();
    std::vector<double> gap(T > 0 ? T - 1 : 0, 0.0);
#pragma omp parallel for schedule(dynamic)
    for (std::size_t d = 1; d < T; ++d) {
        double m = 0.0;
        for (std::size_t i = 0; i + d < T; ++i) m = std::max(m, frame_rms_distance(clip.frame(i), clip.frame(i + d)));
        gap[d - 1] = m;
    }
    return gap;
}

}  // namespace

double modulus(const VideoClip& clip, std::size_t delta) {
    check_delta(clip.frames(), delta);
    double m = 0.0;
    for (std::size_t i = 0; i < clip.frames(); ++i)
        for (std::size_t j = i + 1; j < clip.frames() && j - i <= delta; ++j)
            m = std::max(m, frame_rms_distance(clip.frame(i), clip.frame(j)));
    return m;
}

double DynamicsProfile::at(std::size_t delta) const {
    if (delta == 0) return 0.0;
    check_delta(frames, delta);
    return omega[delta - 1];
}

nlohmann::json DynamicsProfile::to_json() const {
    nlohmann::json table = nlohmann::json::array();
    for (std::size_t d = 1; d <= omega.size(); ++d) table.push_back({{"delta", d}, {"omega", omega[d - 1]}});
    return {{"T", frames}, {"norm", norm}, {"omega_table", table}};
}

DynamicsProfile dynamics_profile(const VideoClip& clip) {
    DynamicsProfile p;
    p.frames = clip.frames();
    p.omega = max_by_gap(clip);
    // sup over |i - j| <= delta is a running max over exact gaps.
    for (std::size_t d = 1; d < p.omega.size(); ++d) p.omega[d] = std::max(p.omega[d], p.omega[d - 1]);
    return p;
}

std::size_t dual_modulus(const DynamicsProfile& p, double eps) {
    if (!(eps >= 0.0)) throw std::invalid_argument("dual_modulus: epsilon must be >= 0");
    std::size_t best = 0;
    for (std::size_t d = 1; d <= p.omega.size(); ++d)
        if (p.omega[d - 1] <= eps) best = d;
    return best;
}

BoundResult param_bound(const BoundQuery& q) {
    if (q.d_in == 0 || q.d_out == 0) throw std::invalid_argument("param_bound: dimensions must be positive");
    if (!(q.diam > 0.0)) throw std::invalid_argument("param_bound: diam must be positive");
    if (!(q.omega_inv >= 0.0) || q.omega_inv > q.diam) throw std::invalid_argument("param_bound: need 0 <= omega_inv <= diam");
    if (q.omega_inv == 0.0) return {};
    const double dout = static_cast<double>(q.d_out);
    const double v = dout * dout * std::pow(q.diam / q.omega_inv, static_cast<double>(q.d_in + 1));
    // Values within rounding noise of an integer are not bumped up.
    const double r = std::round(v);
    return {std::abs(v - r) <= 1e-9 * std::max(1.0, r) ? r : std::ceil(v)};
}

std::vector<DynamicsRank> rank_by_dynamics(const std::vector<NamedClip>& clips, double eps) {
    if (clips.size() < 2) throw std::invalid_argument("rank_by_dynamics: need at least 2 clips");
    for (const auto& c : clips)
        if (!c.clip || c.clip->frames() != clips.front().clip->frames())
            throw std::invalid_argument("rank_by_dynamics: clips must have equal frame counts");
    std::vector<DynamicsRank> out;
    for (const auto& c : clips) out.push_back({c.name, dual_modulus(dynamics_profile(*c.clip), eps)});
    std::sort(out.begin(), out.end(), [](const DynamicsRank& a, const DynamicsRank& b) {
        return a.omega_inv != b.omega_inv ? a.omega_inv > b.omega_inv : a.name < b.name;
    });
    return out;
}

double embedding_diameter(const std::vector<Tensor>& embeddings) {
    double best = 0.0;
    for (std::size_t i = 0; i < embeddings.size(); ++i)
        for (std::size_t j = i + 1; j < embeddings.size(); ++j) {
            require_same_shape(embeddings[i], embeddings[j], "embedding_diameter");
            double acc = 0.0;
            for (std::size_t k = 0; k < embeddings[i].size(); ++k)
                acc += (embeddings[i][k] - embeddings[j][k]) * (embeddings[i][k] - embeddings[j][k]);
            best = std::max(best, std::sqrt(acc));
        }
    return best;
}

}  // namespace pnerv
