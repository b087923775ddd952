#pragma once

// Rate-of-dynamics tools: the modulus of continuity of a clip viewed as a
// function of its frame index, its dual, and the capacity bound that the dual
// feeds into.

#include "pnerv/video.hpp"

#include <nlohmann/json.hpp>

#include <optional>
#include <string>
#include <vector>

namespace pnerv {

/// Root-mean-square difference over all channels and pixels.
double frame_rms_distance(const Tensor& a, const Tensor& b);

/// Max RMS distance over frame pairs at index distance <= delta, 1 <= delta <= T-1.
double modulus(const VideoClip& clip, std::size_t delta);

struct DynamicsProfile {
    std::size_t frames = 0;
    /// omega[d - 1] = omega(d) for d = 1 .. T-1.
    std::vector<double> omega;
    std::string norm = "per-pixel RMS";

    double at(std::size_t delta) const;  // at(0) == 0
    nlohmann::json to_json() const;
};

/// Full omega table in one pass over all frame pairs.
DynamicsProfile dynamics_profile(const VideoClip& clip);

/// Largest delta in [0, T-1] whose omega(delta) <= eps.
std::size_t dual_modulus(const DynamicsProfile& p, double eps);

struct BoundQuery {
    std::size_t d_in = 1;
    std::size_t d_out = 1;
    double diam = 1.0;
    double epsilon = 0.0;
    double omega_inv = 1.0;
};

struct BoundResult {
    /// Empty when omega_inv is 0 (no finite bound).
    std::optional<double> params;
    bool bounded() const { return params.has_value(); }
};

/// ceil(d_out^2 (diam / omega_inv)^(d_in + 1)), up to the suppressed O(1) factor.
BoundResult param_bound(const BoundQuery& q);

struct NamedClip {
    std::string name;
    const VideoClip* clip = nullptr;
};

struct DynamicsRank {
    std::string name;
    std::size_t omega_inv = 0;
};

/// Smoothest first (descending omega_inv); ties by name.
std::vector<DynamicsRank> rank_by_dynamics(const std::vector<NamedClip>& clips, double eps);

/// Largest pairwise L2 distance between embeddings.
double embedding_diameter(const std::vector<Tensor>& embeddings);

}  // namespace pnerv
