#pragma once

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "metares/types.hpp"

namespace metares {

/// Orthonormal real trigonometric basis of a 2n-sample window together with
/// the transformed state matrix and its truncated SVD.
///
/// Basis column layout: columns [0, n) are cosine vectors, columns [n, 2n)
/// their sine partners, bin i at frequency i * sample_rate / (2n). Slot 0
/// packs the two unpaired directions: its cosine is the DC vector and its
/// sine slot holds the Nyquist alternation, completing the orthonormal set.
struct SpectralBasis {
    Eigen::Index n = 0;
    double sample_rate = 0.0;
    Eigen::MatrixXd basis;  ///< 2n x 2n, orthonormal
    Eigen::MatrixXd xf;     ///< basis^T X, 2n x sensors
    Eigen::VectorXd svals;
    Eigen::MatrixXd uk;     ///< left singular vectors kept by the rank rule
    Eigen::Index rank = 0;
    double variance_capture = 0.9999;

    double bin_frequency(Eigen::Index i) const {
        return static_cast<double>(i) * sample_rate / static_cast<double>(2 * n);
    }
};

namespace detail {

inline Eigen::MatrixXd trig_basis(Eigen::Index two_n) {
    const Eigen::Index n = two_n / 2;
    Eigen::MatrixXd f(two_n, two_n);
    const double inv_sqrt_2n = 1.0 / std::sqrt(static_cast<double>(two_n));
    const double inv_sqrt_n = 1.0 / std::sqrt(static_cast<double>(n));
    for (Eigen::Index t = 0; t < two_n; ++t) {
        f(t, 0) = inv_sqrt_2n;                          // DC
        f(t, n) = (t % 2 == 0) ? inv_sqrt_2n : -inv_sqrt_2n;  // Nyquist
    }
    for (Eigen::Index i = 1; i < n; ++i) {
        const double w = 2.0 * M_PI * static_cast<double>(i) / static_cast<double>(two_n);
        for (Eigen::Index t = 0; t < two_n; ++t) {
            f(t, i) = inv_sqrt_n * std::cos(w * static_cast<double>(t));
            f(t, n + i) = inv_sqrt_n * std::sin(w * static_cast<double>(t));
        }
    }
    return f;
}

/// Smallest k whose singular values capture the requested energy fraction.
inline Eigen::Index energy_rank(const Eigen::VectorXd& svals, double capture) {
    const double total = svals.squaredNorm();
    if (total == 0.0) return 0;
    double acc = 0.0;
    for (Eigen::Index k = 0; k < svals.size(); ++k) {
        acc += svals[k] * svals[k];
        if (acc >= capture * total) return k + 1;
    }
    return svals.size();
}

}  // namespace detail

inline SpectralBasis dft_basis(const Eigen::MatrixXd& values, double sample_rate,
                               double variance_capture = 0.9999) {
    const Eigen::Index two_n = values.rows();
    if (two_n < 4 || two_n % 2 != 0)
        throw std::invalid_argument("dft_basis: window length must be even and >= 4, got " +
                                    std::to_string(two_n) +
                                    (two_n % 2 != 0 ? "; trim one sample" : ""));
    if (sample_rate <= 0.0) throw std::invalid_argument("dft_basis: sample rate must be positive");
    if (variance_capture <= 0.0 || variance_capture > 1.0)
        throw std::invalid_argument("dft_basis: variance capture must lie in (0, 1]");
    SpectralBasis b;
    b.n = two_n / 2;
    b.sample_rate = sample_rate;
    b.variance_capture = variance_capture;
    b.basis = detail::trig_basis(two_n);
    b.xf = b.basis.transpose() * values;
    Eigen::BDCSVD<Eigen::MatrixXd> svd(b.xf, Eigen::ComputeThinU);
    b.svals = svd.singularValues();
    b.rank = detail::energy_rank(b.svals, variance_capture);
    b.uk = svd.matrixU().leftCols(b.rank);
    return b;
}

inline SpectralBasis dft_basis(const StateMatrix& x, double variance_capture = 0.9999) {
    check_state_matrix(x, "dft_basis");
    return dft_basis(x.values, x.sample_rate, variance_capture);
}

/// Coefficients of a series in the window's trigonometric basis.
inline Eigen::VectorXd spectral_transform(const SpectralBasis& b, const Eigen::VectorXd& y) {
    if (y.size() != 2 * b.n)
        throw std::invalid_argument("spectral_transform: series has " + std::to_string(y.size()) +
                                    " samples, window expects " + std::to_string(2 * b.n));
    return b.basis.transpose() * y;
}

/// Per-bin fraction of a unit cosine/sine pair captured by the state span:
/// chi_i = (|P u_cos,i|^2 + |P u_sin,i|^2) / 2 with P the projection onto
/// the retained singular subspace. In basis coordinates this reduces to row
/// norms of the truncated U.
inline Eigen::VectorXd frequency_content(const SpectralBasis& b) {
    Eigen::VectorXd chi = Eigen::VectorXd::Zero(b.n);
    if (b.rank == 0) return chi;
    for (Eigen::Index i = 0; i < b.n; ++i)
        chi[i] = 0.5 * (b.uk.row(i).squaredNorm() + b.uk.row(b.n + i).squaredNorm());
    return chi;
}

/// Single-column variant of frequency_content for every sensor: column j is
/// analysed as its own rank-1 span. Zero columns yield zero spectra.
inline Eigen::MatrixXd frequency_content_per_sensor(const SpectralBasis& b) {
    const Eigen::Index n_s = b.xf.cols();
    Eigen::MatrixXd chi = Eigen::MatrixXd::Zero(b.n, n_s);
    for (Eigen::Index j = 0; j < n_s; ++j) {
        const double norm2 = b.xf.col(j).squaredNorm();
        if (norm2 == 0.0) continue;
        for (Eigen::Index i = 0; i < b.n; ++i) {
            const double c = b.xf(i, j);
            const double s = b.xf(b.n + i, j);
            chi(i, j) = 0.5 * (c * c + s * s) / norm2;
        }
    }
    return chi;
}

/// Bins owned by the driving tones: each tone claims its nearest bin plus a
/// guard band of +-guard_bins to absorb rectangular-window leakage.
inline std::vector<Eigen::Index> input_bin_set(Eigen::Index n, double sample_rate,
                                               const std::vector<double>& tones_hz,
                                               Eigen::Index guard_bins) {
    if (n < 1) throw std::invalid_argument("input_bin_set: need at least one bin");
    if (guard_bins < 0) throw std::invalid_argument("input_bin_set: guard must be >= 0");
    const double bin_width = sample_rate / static_cast<double>(2 * n);
    std::set<Eigen::Index> bins;
    for (double f : tones_hz) {
        if (f < 0.0 || f > sample_rate / 2.0)
            throw std::invalid_argument("input_bin_set: tone " + format_double(f) +
                                        " Hz outside [0, Nyquist]");
        const auto nearest = static_cast<Eigen::Index>(std::llround(f / bin_width));
        for (Eigen::Index i = nearest - guard_bins; i <= nearest + guard_bins; ++i)
            if (i >= 0 && i < n) bins.insert(i);
    }
    return {bins.begin(), bins.end()};
}

struct FrequencyContent {
    Eigen::VectorXd chi;
    std::vector<Eigen::Index> input_bins;
};

inline FrequencyContent frequency_content(const SpectralBasis& b,
                                          const std::vector<double>& tones_hz,
                                          Eigen::Index guard_bins) {
    return {frequency_content(b), input_bin_set(b.n, b.sample_rate, tones_hz, guard_bins)};
}

/// Task alignment: chi averaged with the task's per-bin spectral energy as
/// weights. The task is mean-centered first (the readout bias makes the fit
/// mean-invariant, so DC carries no information about achievable R^2).
inline double frequency_alignment(const SpectralBasis& b, const Eigen::VectorXd& chi,
                                  const TimeSeries& task) {
    if (chi.size() != b.n)
        throw std::invalid_argument("frequency_alignment: chi has " + std::to_string(chi.size()) +
                                    " bins, basis has " + std::to_string(b.n));
    Eigen::VectorXd centered = task.values.array() - task.values.mean();
    const Eigen::VectorXd c = spectral_transform(b, centered);
    double num = 0.0;
    double den = 0.0;
    for (Eigen::Index i = 0; i < b.n; ++i) {
        const double w = c[i] * c[i] + c[b.n + i] * c[b.n + i];
        num += w * chi[i];
        den += w;
    }
    if (den == 0.0)
        throw std::invalid_argument("frequency_alignment: task '" + task.label +
                                    "' has no spectral energy");
    return num / den;
}

/// Fraction of captured content outside the input bins.
inline double nonlinearity(const Eigen::VectorXd& chi, const std::vector<Eigen::Index>& input_bins) {
    const double total = chi.sum();
    if (total <= 0.0)
        throw std::invalid_argument("nonlinearity: spectrum has no content");
    double inside = 0.0;
    for (Eigen::Index i : input_bins) {
        if (i < 0 || i >= chi.size())
            throw std::invalid_argument("nonlinearity: input bin " + std::to_string(i) +
                                        " outside spectrum");
        inside += chi[i];
    }
    return (total - inside) / total;
}

inline double nonlinearity(const FrequencyContent& content) {
    return nonlinearity(content.chi, content.input_bins);
}

/// Per-sensor signal-to-noise in dB: the retained singular subspace is the
/// signal, the residual is noise. Values are clamped to [-100, 100] dB; the
/// cap applies once the noise power drops below 1e-10 of the signal power.
inline Eigen::VectorXd snr(const SpectralBasis& b) {
    const Eigen::MatrixXd sig = b.uk * (b.uk.transpose() * b.xf);
    const Eigen::MatrixXd noise = b.xf - sig;
    Eigen::VectorXd out(b.xf.cols());
    for (Eigen::Index j = 0; j < b.xf.cols(); ++j) {
        const double ps = sig.col(j).squaredNorm();
        const double pn = noise.col(j).squaredNorm();
        if (ps == 0.0)
            out[j] = -100.0;
        else if (pn <= 1.0e-10 * ps)
            out[j] = 100.0;
        else
            out[j] = std::clamp(10.0 * std::log10(ps / pn), -100.0, 100.0);
    }
    return out;
}

struct MemoryResult {
    double m = 0.0;       ///< tau_opt * |r(tau_opt)|
    int tau_opt = 0;
    double r_opt = 0.0;   ///< signed correlation at tau_opt
};

/// Linear memory: Pearson correlation between y and the input delayed by
/// tau, over their overlap window, for tau = 0..max_delay. Ties in |r| keep
/// the smaller delay.
inline MemoryResult memory(const TimeSeries& y, const TimeSeries& input, int max_delay = 25) {
    if (y.size() != input.size())
        throw std::invalid_argument("memory: length mismatch (" + std::to_string(y.size()) +
                                    " vs " + std::to_string(input.size()) + ")");
    if (max_delay < 0) throw std::invalid_argument("memory: max_delay must be >= 0");
    const Eigen::Index t_n = y.size();
    if (t_n < max_delay + 2)
        throw std::invalid_argument("memory: need more than max_delay + 1 = " +
                                    std::to_string(max_delay + 1) + " samples, got " +
                                    std::to_string(t_n));
    const auto constant = [](const TimeSeries& s) {
        return ((s.values.array() - s.values.mean()).abs() == 0.0).all();
    };
    if (constant(y) || constant(input))
        throw std::invalid_argument("memory: constant signal; correlation is undefined");
    MemoryResult best;
    double best_abs = -1.0;
    for (int tau = 0; tau <= max_delay; ++tau) {
        const Eigen::Index len = t_n - tau;
        const auto a = y.values.segment(tau, len);
        const auto b = input.values.segment(0, len);
        const double ma = a.mean();
        const double mb = b.mean();
        const double va = (a.array() - ma).matrix().squaredNorm();
        const double vb = (b.array() - mb).matrix().squaredNorm();
        double r = 0.0;
        if (va > 0.0 && vb > 0.0)
            r = ((a.array() - ma) * (b.array() - mb)).sum() / std::sqrt(va * vb);
        if (std::abs(r) > best_abs) {
            best_abs = std::abs(r);
            best.tau_opt = tau;
            best.r_opt = r;
        }
    }
    best.m = best.tau_opt * std::abs(best.r_opt);
    return best;
}

/// Absolute zero-lag Pearson correlations between all sensor pairs.
/// Constant columns are rejected; callers should drop dead channels first.
inline Eigen::MatrixXd correlation_matrix(const StateMatrix& x) {
    check_state_matrix(x, "correlation_matrix");
    if (x.samples() < 2) throw std::invalid_argument("correlation_matrix: need at least 2 samples");
    const Eigen::Index n_s = x.sensor_count();
    Eigen::MatrixXd centered = x.values.rowwise() - x.values.colwise().mean();
    Eigen::VectorXd norms(n_s);
    for (Eigen::Index j = 0; j < n_s; ++j) {
        norms[j] = centered.col(j).norm();
        if (norms[j] == 0.0)
            throw std::invalid_argument("correlation_matrix: sensor '" + x.sensors[j].id +
                                        "' is constant; correlation is undefined");
    }
    Eigen::MatrixXd corr = (centered.transpose() * centered).cwiseAbs();
    for (Eigen::Index a = 0; a < n_s; ++a)
        for (Eigen::Index c = 0; c < n_s; ++c) corr(a, c) /= norms[a] * norms[c];
    for (Eigen::Index a = 0; a < n_s; ++a) corr(a, a) = 1.0;
    return corr;
}

enum class PcaNormalize { unit, raw };

struct PcaResult {
    Eigen::MatrixXd scores;        ///< sensors x components
    Eigen::VectorXd explained;     ///< variance fractions, descending
};

/// Per-bin spectral magnitude of each sensor (sensors x n feature matrix).
inline Eigen::MatrixXd spectral_magnitudes(const SpectralBasis& b, PcaNormalize mode) {
    const Eigen::Index n_s = b.xf.cols();
    Eigen::MatrixXd feat(n_s, b.n);
    for (Eigen::Index j = 0; j < n_s; ++j) {
        for (Eigen::Index i = 0; i < b.n; ++i)
            feat(j, i) = std::hypot(b.xf(i, j), b.xf(b.n + i, j));
        if (mode == PcaNormalize::unit) {
            const double norm = feat.row(j).norm();
            if (norm > 0.0) feat.row(j) /= norm;
        }
    }
    return feat;
}

/// PCA of sensor magnitude spectra: centers the features over sensors and
/// projects each sensor onto the principal directions. Degenerate feature
/// sets (all sensors spectrally identical) give all-zero scores.
inline PcaResult pca_spectra(const SpectralBasis& b, PcaNormalize mode = PcaNormalize::unit) {
    Eigen::MatrixXd feat = spectral_magnitudes(b, mode);
    feat.rowwise() -= feat.colwise().mean();
    Eigen::BDCSVD<Eigen::MatrixXd> svd(feat, Eigen::ComputeThinU);
    const Eigen::VectorXd& sv = svd.singularValues();
    const double total = sv.squaredNorm();
    PcaResult out;
    if (total < 1.0e-18) {
        out.scores = Eigen::MatrixXd::Zero(feat.rows(), sv.size());
        out.explained = Eigen::VectorXd::Zero(sv.size());
        return out;
    }
    out.scores = svd.matrixU() * sv.asDiagonal();
    out.explained = sv.array().square() / total;
    // Deterministic sign: the largest-magnitude score of each component is positive.
    for (Eigen::Index c = 0; c < out.scores.cols(); ++c) {
        Eigen::Index arg = 0;
        out.scores.col(c).cwiseAbs().maxCoeff(&arg);
        if (out.scores(arg, c) < 0.0) out.scores.col(c) = -out.scores.col(c);
    }
    return out;
}

}  // namespace metares
