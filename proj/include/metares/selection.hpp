#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "metares/metrics.hpp"
#include "metares/parallel.hpp"
#include "metares/pipeline.hpp"
#include "metares/readout.hpp"
#include "metares/rng.hpp"
#include "metares/types.hpp"

namespace metares {

struct SelectionResult {
    std::vector<Eigen::Index> order;        ///< sensor columns, greedy pick order
    std::vector<std::string> order_ids;
    Eigen::VectorXd alignment_trace;        ///< task alignment of each prefix
    Eigen::VectorXd r2_by_size;             ///< test R^2 after training on each prefix
    Eigen::Index best_size = 0;             ///< argmax of r2_by_size, ties to smaller
};

struct SelectionOptions {
    double ridge_lambda = -1.0;   ///< passed to train(); < 0 = default
    double residual_tol = 1.0e-8; ///< relative threshold for a new span direction
    double variance_capture = 0.9999;
};

/// Greedy frequency-aligned forward selection. Each step adds the sensor
/// whose span enlargement raises the subset's task alignment the most, with
/// ties resolved toward the lower sensor index.
///
/// Subset spectra are compared as subspaces: candidate columns are scaled to
/// unit norm in the spectral domain and the subset span is maintained by
/// modified Gram-Schmidt, re-ranking the subset at every step. Directions
/// below residual_tol add nothing, so a duplicate sensor has exactly zero
/// gain and the alignment trace never decreases.
inline SelectionResult greedy_select(const SplitData& data, const SelectionOptions& opt = {}) {
    check_state_matrix(data.train_x, "greedy_select");
    const Eigen::Index n_s = data.train_x.sensor_count();
    if (n_s < 1) throw std::invalid_argument("greedy_select: no sensors");
    Eigen::Index window = data.train_x.samples();
    if (window != data.train_y.size())
        throw std::invalid_argument("greedy_select: train target length mismatch");
    if (window % 2 != 0) --window;  // spectral window must be even
    if (window < 4) throw std::invalid_argument("greedy_select: training window too short");

    const SpectralBasis basis = dft_basis(data.train_x.values.topRows(window),
                                          data.train_x.sample_rate, opt.variance_capture);
    const Eigen::Index n = basis.n;

    // Task weights: per-bin spectral energy of the mean-centered train target.
    Eigen::VectorXd yw = data.train_y.values.head(window);
    yw.array() -= yw.mean();
    const Eigen::VectorXd c = spectral_transform(basis, yw);
    Eigen::VectorXd weights(n);
    for (Eigen::Index i = 0; i < n; ++i) weights[i] = c[i] * c[i] + c[n + i] * c[n + i];
    const double weight_sum = weights.sum();
    if (weight_sum == 0.0)
        throw std::invalid_argument("greedy_select: task '" + data.train_y.label +
                                    "' has no spectral energy");

    // Unit-norm candidate spectra.
    Eigen::MatrixXd cand = basis.xf;
    for (Eigen::Index j = 0; j < n_s; ++j) {
        const double norm = cand.col(j).norm();
        if (norm > 0.0) cand.col(j) /= norm;
    }

    SelectionResult res;
    res.alignment_trace.resize(n_s);
    Eigen::MatrixXd span(2 * n, n_s);  // orthonormal basis of the selected span
    Eigen::Index span_dim = 0;
    std::vector<bool> taken(static_cast<std::size_t>(n_s), false);
    double alignment = 0.0;

    auto orthogonal_rest = [&](Eigen::Index j) {
        Eigen::VectorXd r = cand.col(j);
        for (int pass = 0; pass < 2; ++pass)
            if (span_dim > 0)
                r -= span.leftCols(span_dim) * (span.leftCols(span_dim).transpose() * r);
        return r;
    };

    for (Eigen::Index step = 0; step < n_s; ++step) {
        double best_score = -1.0;
        Eigen::Index best_j = -1;
        Eigen::VectorXd best_dir;
        for (Eigen::Index j = 0; j < n_s; ++j) {
            if (taken[static_cast<std::size_t>(j)]) continue;
            Eigen::VectorXd r = orthogonal_rest(j);
            const double rn = r.norm();
            double gain = 0.0;
            if (rn > opt.residual_tol) {
                r /= rn;
                for (Eigen::Index i = 0; i < n; ++i)
                    gain += weights[i] * 0.5 * (r[i] * r[i] + r[n + i] * r[n + i]);
                gain /= weight_sum;
            } else {
                r.setZero();
            }
            const double score = alignment + gain;
            if (score > best_score) {
                best_score = score;
                best_j = j;
                best_dir = r;
            }
        }
        taken[static_cast<std::size_t>(best_j)] = true;
        res.order.push_back(best_j);
        res.order_ids.push_back(data.train_x.sensors[static_cast<std::size_t>(best_j)].id);
        if (best_dir.norm() > 0.0) span.col(span_dim++) = best_dir;
        alignment = best_score;
        res.alignment_trace[step] = alignment;
    }

    // Test performance of every prefix.
    res.r2_by_size.resize(n_s);
    for (Eigen::Index size = 1; size <= n_s; ++size) {
        StateMatrix sub_train;
        StateMatrix sub_test;
        sub_train.sample_rate = data.train_x.sample_rate;
        sub_test.sample_rate = data.test_x.sample_rate;
        sub_train.start_index = data.train_x.start_index;
        sub_test.start_index = data.test_x.start_index;
        sub_train.values.resize(data.train_x.samples(), size);
        sub_test.values.resize(data.test_x.samples(), size);
        for (Eigen::Index k = 0; k < size; ++k) {
            const Eigen::Index j = res.order[static_cast<std::size_t>(k)];
            sub_train.values.col(k) = data.train_x.values.col(j);
            sub_test.values.col(k) = data.test_x.values.col(j);
            sub_train.sensors.push_back(data.train_x.sensors[static_cast<std::size_t>(j)]);
            sub_test.sensors.push_back(data.test_x.sensors[static_cast<std::size_t>(j)]);
        }
        const ReadoutModel model = train(sub_train, data.train_y, opt.ridge_lambda);
        res.r2_by_size[size - 1] = r_squared(data.test_y, predict(model, sub_test));
    }
    res.best_size = 1;
    for (Eigen::Index size = 2; size <= n_s; ++size)
        if (res.r2_by_size[size - 1] > res.r2_by_size[res.best_size - 1]) res.best_size = size;
    return res;
}

/// Test R^2 of `trials` uniformly drawn sensor subsets of the given size.
/// Trial t draws its subset from a generator seeded by derive_seed(seed, t),
/// so results do not depend on evaluation order or worker count.
inline Eigen::VectorXd random_baseline(const SplitData& data, Eigen::Index size,
                                       Eigen::Index trials, std::uint64_t seed,
                                       double ridge_lambda = -1.0, unsigned threads = 1) {
    check_state_matrix(data.train_x, "random_baseline");
    const Eigen::Index n_s = data.train_x.sensor_count();
    if (size < 1 || size > n_s)
        throw std::invalid_argument("random_baseline: subset size " + std::to_string(size) +
                                    " outside [1, " + std::to_string(n_s) + "]");
    if (trials < 0) throw std::invalid_argument("random_baseline: trials must be >= 0");
    Eigen::VectorXd scores(trials);
    parallel_for(static_cast<std::size_t>(trials), threads, [&](std::size_t trial) {
        const auto t = static_cast<Eigen::Index>(trial);
        std::mt19937_64 gen(derive_seed(seed, static_cast<std::uint64_t>(t)));
        auto subset = sample_without_replacement(gen, static_cast<std::size_t>(n_s),
                                                 static_cast<std::size_t>(size));
        std::sort(subset.begin(), subset.end());
        StateMatrix sub_train;
        StateMatrix sub_test;
        sub_train.sample_rate = data.train_x.sample_rate;
        sub_test.sample_rate = data.test_x.sample_rate;
        sub_train.values.resize(data.train_x.samples(), size);
        sub_test.values.resize(data.test_x.samples(), size);
        for (Eigen::Index k = 0; k < size; ++k) {
            const auto j = static_cast<Eigen::Index>(subset[static_cast<std::size_t>(k)]);
            sub_train.values.col(k) = data.train_x.values.col(j);
            sub_test.values.col(k) = data.test_x.values.col(j);
            sub_train.sensors.push_back(data.train_x.sensors[static_cast<std::size_t>(j)]);
            sub_test.sensors.push_back(data.test_x.sensors[static_cast<std::size_t>(j)]);
        }
        const ReadoutModel model = train(sub_train, data.train_y, ridge_lambda);
        scores[t] = r_squared(data.test_y, predict(model, sub_test));
    });
    return scores;
}

struct BaselineSummary {
    Eigen::Index size = 0;
    Eigen::Index trials = 0;
    double r2_min = 0.0;
    double r2_median = 0.0;
    double r2_max = 0.0;
};

inline BaselineSummary summarize_baseline(Eigen::Index size, const Eigen::VectorXd& scores) {
    if (scores.size() == 0)
        throw std::invalid_argument("summarize_baseline: no trials");
    std::vector<double> sorted(scores.data(), scores.data() + scores.size());
    std::sort(sorted.begin(), sorted.end());
    BaselineSummary s;
    s.size = size;
    s.trials = scores.size();
    s.r2_min = sorted.front();
    s.r2_max = sorted.back();
    const std::size_t m = sorted.size() / 2;
    s.r2_median = sorted.size() % 2 == 1 ? sorted[m] : 0.5 * (sorted[m - 1] + sorted[m]);
    return s;
}

inline nlohmann::json selection_report(const SelectionResult& res,
                                       const std::vector<BaselineSummary>& baselines) {
    nlohmann::json j;
    j["order"] = res.order_ids;
    j["alignment_trace"] = std::vector<double>(res.alignment_trace.data(),
                                               res.alignment_trace.data() +
                                                   res.alignment_trace.size());
    j["r2_by_size"] = std::vector<double>(res.r2_by_size.data(),
                                          res.r2_by_size.data() + res.r2_by_size.size());
    j["best_size"] = res.best_size;
    nlohmann::json b = nlohmann::json::array();
    for (const BaselineSummary& s : baselines)
        b.push_back({{"size", s.size},
                     {"trials", s.trials},
                     {"r2_min", s.r2_min},
                     {"r2_median", s.r2_median},
                     {"r2_max", s.r2_max}});
    j["baseline"] = b;
    return j;
}

}  // namespace metares
