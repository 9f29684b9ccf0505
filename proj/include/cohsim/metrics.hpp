#pragma once

// Post-processing of recorded channels: centre-of-inertia frequency, ringdown
// metrics and a plain Pearson correlation.

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <vector>

#include "cohsim/error.hpp"

namespace cohsim {

/// Inertia-weighted mean speed: sum(H S w) / sum(H S).
inline double coi_frequency(std::span<const double> omega, std::span<const double> h, std::span<const double> s) {
    if (omega.size() != h.size() || omega.size() != s.size()) throw ConfigError("coi_frequency: length mismatch");
    double num = 0.0, den = 0.0;
    for (std::size_t k = 0; k < omega.size(); ++k) {
        num += h[k] * s[k] * omega[k];
        den += h[k] * s[k];
    }
    if (!(den > 0.0)) throw ConfigError("coi_frequency: no machine with positive inertia");
    return num / den;
}

struct DampingMetrics {
    double peak_to_peak = 0.0;
    std::optional<double> peak_ratio;       ///< second / first swing in the same direction; < 1 is damped
    double settling_time = 0.0;             ///< seconds after the event
    std::optional<double> modal_frequency;  ///< Hz, from the spacing of the two swings
};

/// Alternating extrema of `x`, ignoring reversals smaller than `threshold`.
/// The first and last samples are never reported.
inline std::vector<std::size_t> turning_points(std::span<const double> x, double threshold) {
    std::vector<std::size_t> out;
    if (x.empty() || !(threshold > 0.0)) return out;
    int dir = 0;
    std::size_t cand = 0;
    for (std::size_t k = 1; k < x.size(); ++k) {
        if (dir == 0) {
            if (std::abs(x[k] - x[0]) > threshold) {
                dir = x[k] > x[0] ? 1 : -1;
                cand = k;
            }
            continue;
        }
        if ((x[k] - x[cand]) * dir > 0.0) {
            cand = k;
        } else if ((x[cand] - x[k]) * dir > threshold) {
            out.push_back(cand);
            dir = -dir;
            cand = k;
        }
    }
    return out;
}

/// Ringdown metrics of a channel after `event_time`.
/// Swings are the differences between successive turning points, where
/// reversals below `min_fraction` of the peak-to-peak value do not count;
/// slow drift therefore does not masquerade as damping or growth. The
/// settling band is `band` times the largest deviation from the last sample.
inline DampingMetrics damping_metrics(std::span<const double> t, std::span<const double> x, double event_time,
                                      double band = 0.02, double min_fraction = 0.05) {
    if (t.size() != x.size()) throw ConfigError("damping_metrics: length mismatch");
    DampingMetrics m;
    std::size_t a = 0;
    while (a < t.size() && t[a] < event_time - 1e-12) ++a;
    if (t.size() - a < 2) return m;

    const auto post = x.subspan(a);
    const auto [lo, hi] = std::minmax_element(post.begin(), post.end());
    m.peak_to_peak = *hi - *lo;
    if (m.peak_to_peak == 0.0) return m;

    const double final_value = post.back();
    double max_dev = 0.0;
    for (double v : post) max_dev = std::max(max_dev, std::abs(v - final_value));
    std::size_t last_out = 0;
    bool outside = false;
    for (std::size_t k = 0; k < post.size(); ++k) {
        if (std::abs(post[k] - final_value) > band * max_dev) {
            last_out = k;
            outside = true;
        }
    }
    if (outside) {
        const std::size_t settle = std::min(last_out + 1, post.size() - 1);
        m.settling_time = t[a + settle] - t[a];
    }

    const auto tp = turning_points(post, min_fraction * m.peak_to_peak);
    if (tp.size() < 4) return m;
    const double first = std::abs(post[tp[1]] - post[tp[0]]);
    const double second = std::abs(post[tp[3]] - post[tp[2]]);
    m.peak_ratio = second / first;
    m.modal_frequency = 1.0 / (t[a + tp[2]] - t[a + tp[0]]);
    return m;
}

inline double pearson(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size() || a.size() < 2) throw ConfigError("pearson: need two equal-length series");
    const double n = static_cast<double>(a.size());
    double ma = 0.0, mb = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) {
        ma += a[k];
        mb += b[k];
    }
    ma /= n;
    mb /= n;
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) {
        sab += (a[k] - ma) * (b[k] - mb);
        saa += (a[k] - ma) * (a[k] - ma);
        sbb += (b[k] - mb) * (b[k] - mb);
    }
    if (saa == 0.0 || sbb == 0.0) return 0.0;
    return sab / std::sqrt(saa * sbb);
}

}  // namespace cohsim
