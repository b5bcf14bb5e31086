#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "metares/types.hpp"

namespace metares {

/// Superposition of unit-amplitude sine tones, RMS-normalized after summing.
struct MultiToneSpec {
    std::vector<double> frequencies_hz;
    double duration_s = 6.0;
    double sample_rate_hz = 500.0;
};

/// Default tone ladder; an input of complexity k uses the first k entries.
inline const std::vector<double>& default_tone_ladder() {
    static const std::vector<double> ladder = {9.3, 24.1, 32.2, 18.5, 38.0, 14.5, 21.0, 11.1};
    return ladder;
}

inline double rms(const Eigen::VectorXd& v) {
    if (v.size() == 0) return 0.0;
    return std::sqrt(v.squaredNorm() / static_cast<double>(v.size()));
}

/// Scale to unit RMS. Errors on an all-zero signal.
inline TimeSeries normalize_rms(TimeSeries ts) {
    const double r = rms(ts.values);
    if (r == 0.0)
        throw std::invalid_argument("normalize_rms: signal '" + ts.label + "' is identically zero");
    ts.values /= r;
    return ts;
}

inline TimeSeries make_multitone(const MultiToneSpec& spec) {
    if (spec.frequencies_hz.empty())
        throw std::invalid_argument("make_multitone: tone list is empty");
    if (spec.sample_rate_hz <= 0.0)
        throw std::invalid_argument("make_multitone: sample rate must be positive");
    const double nyquist = spec.sample_rate_hz / 2.0;
    for (std::size_t i = 0; i < spec.frequencies_hz.size(); ++i) {
        const double f = spec.frequencies_hz[i];
        if (f <= 0.0 || f >= nyquist)
            throw std::invalid_argument("make_multitone: tone " + std::to_string(i) + " at " +
                                        format_double(f) + " Hz is outside (0, " +
                                        format_double(nyquist) + ") Hz");
    }
    const auto samples = static_cast<Eigen::Index>(std::llround(spec.duration_s * spec.sample_rate_hz));
    if (samples < 2)
        throw std::invalid_argument("make_multitone: duration " + format_double(spec.duration_s) +
                                    " s at " + format_double(spec.sample_rate_hz) +
                                    " Hz yields fewer than 2 samples");
    TimeSeries ts;
    ts.sample_rate = spec.sample_rate_hz;
    ts.label = "multitone_k" + std::to_string(spec.frequencies_hz.size());
    ts.values = Eigen::VectorXd::Zero(samples);
    for (Eigen::Index t = 0; t < samples; ++t) {
        const double time = static_cast<double>(t) / spec.sample_rate_hz;
        double acc = 0.0;
        for (double f : spec.frequencies_hz) acc += std::sin(2.0 * M_PI * f * time);
        ts.values[t] = acc;
    }
    return normalize_rms(std::move(ts));
}

/// y = 10 x for x >= 0, else y = x.
inline TimeSeries relu10_target(const TimeSeries& input) {
    TimeSeries out = input;
    out.label = "relu10";
    for (Eigen::Index t = 0; t < out.size(); ++t)
        out.values[t] = input.values[t] >= 0.0 ? 10.0 * input.values[t] : input.values[t];
    return out;
}

/// y(t) = I(t - d); the first d samples are a warm-up region flagged via
/// valid_from and excluded from training/scoring windows.
inline TimeSeries delay_target(const TimeSeries& input, Eigen::Index delay) {
    if (delay < 0) throw std::invalid_argument("delay_target: delay must be non-negative");
    if (delay >= input.size())
        throw std::invalid_argument("delay_target: delay " + std::to_string(delay) +
                                    " exceeds signal length " + std::to_string(input.size()));
    TimeSeries out = input;
    out.label = "delay" + std::to_string(delay);
    out.valid_from = delay;
    out.values.setZero();
    out.values.tail(input.size() - delay) = input.values.head(input.size() - delay);
    return out;
}

/// NARMA recurrence driven by an already-scaled input u:
///   y(t+1) = 0.3 y(t) + 0.05 y(t) sum_{i=0}^{order-1} y(t-i) + 1.5 u(t-order+1) u(t) + 0.1
/// with y = 0 for t < order. Errors if |y| exceeds 10 (divergence).
inline Eigen::VectorXd narma_recurrence(const Eigen::VectorXd& u, int order) {
    if (order < 1) throw std::invalid_argument("narma_recurrence: order must be >= 1");
    const Eigen::Index n = u.size();
    Eigen::VectorXd y = Eigen::VectorXd::Zero(n);
    for (Eigen::Index t = 0; t + 1 < n; ++t) {
        if (t + 1 < order) continue;  // warm-up: outputs pinned at zero
        double window = 0.0;
        for (int i = 0; i < order; ++i)
            if (t - i >= 0) window += y[t - i];
        const double u_old = t - order + 1 >= 0 ? u[t - order + 1] : 0.0;
        const double next = 0.3 * y[t] + 0.05 * y[t] * window + 1.5 * u_old * u[t] + 0.1;
        if (std::abs(next) > 10.0)
            throw std::runtime_error("narma_recurrence: diverged at sample " + std::to_string(t + 1) +
                                     " (|y| = " + format_double(std::abs(next)) + " > 10)");
        y[t + 1] = next;
    }
    return y;
}

/// NARMA target of the given order; the input is mapped affinely onto
/// [0, 0.5] first. A constant input carries no information and maps to u = 0.
inline TimeSeries narma_target(const TimeSeries& input, int order) {
    const double lo = input.values.minCoeff();
    const double hi = input.values.maxCoeff();
    Eigen::VectorXd u;
    if (hi > lo)
        u = (input.values.array() - lo) * (0.5 / (hi - lo));
    else
        u = Eigen::VectorXd::Zero(input.size());
    TimeSeries out = input;
    out.label = "narma" + std::to_string(order);
    out.values = narma_recurrence(u, order);
    return out;
}

/// Time derivative of one sensor column: central differences scaled by
/// sample_rate / 2 inside, one-sided differences at the ends.
inline TimeSeries strain_rate_target(const StateMatrix& state, const std::string& sensor_id) {
    check_state_matrix(state, "strain_rate_target");
    const Eigen::Index j = state.sensor_index(sensor_id);
    const Eigen::Index n = state.samples();
    if (n < 3)
        throw std::invalid_argument("strain_rate_target: need at least 3 samples, got " +
                                    std::to_string(n));
    const auto x = state.values.col(j);
    TimeSeries out;
    out.sample_rate = state.sample_rate;
    out.label = "strain_rate_" + sensor_id;
    out.values.resize(n);
    const double fs = state.sample_rate;
    out.values[0] = (x[1] - x[0]) * fs;
    for (Eigen::Index t = 1; t + 1 < n; ++t)
        out.values[t] = (x[t + 1] - x[t - 1]) * fs / 2.0;
    out.values[n - 1] = (x[n - 1] - x[n - 2]) * fs;
    return out;
}

}  // namespace metares
