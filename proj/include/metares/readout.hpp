#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "metares/types.hpp"

namespace metares {

/// Linear readout y ~ X w + b with ridge-regularized weights.
struct ReadoutModel {
    Eigen::VectorXd weights;
    double bias = 0.0;
    double lambda = 0.0;
    std::vector<std::string> sensor_ids;  ///< training column order
    std::string task;                     ///< label of the fitted target
};

/// Ridge regression on mean-centered data. The centered system is solved as
/// the stacked least-squares problem [X_c; sqrt(lambda) I] w = [y_c; 0] via a
/// rank-revealing orthogonal decomposition; the bias absorbs the means.
/// lambda < 0 selects the default 1e-6 * trace(X_c^T X_c) / n_sensors.
inline ReadoutModel train(const StateMatrix& x, const TimeSeries& y, double lambda = -1.0) {
    check_state_matrix(x, "train");
    const Eigen::Index t_n = x.samples();
    const Eigen::Index n_s = x.sensor_count();
    if (t_n != y.size())
        throw std::invalid_argument("train: state has " + std::to_string(t_n) +
                                    " samples, target has " + std::to_string(y.size()));
    if (t_n < 2) throw std::invalid_argument("train: need at least 2 samples");
    if (n_s < 1) throw std::invalid_argument("train: state matrix has no sensors");

    const Eigen::RowVectorXd x_mean = x.values.colwise().mean();
    const double y_mean = y.values.mean();
    Eigen::MatrixXd xc = x.values.rowwise() - x_mean;
    Eigen::VectorXd yc = y.values.array() - y_mean;

    const double col_energy = xc.squaredNorm();
    if (lambda < 0.0) lambda = 1.0e-6 * col_energy / static_cast<double>(n_s);
    if (col_energy == 0.0 && lambda == 0.0)
        throw std::invalid_argument(
            "train: every sensor column is constant and lambda = 0; the problem is degenerate");

    ReadoutModel model;
    model.lambda = lambda;
    model.task = y.label;
    for (const SensorInfo& s : x.sensors) model.sensor_ids.push_back(s.id);

    if (lambda == 0.0) {
        model.weights = xc.completeOrthogonalDecomposition().solve(yc);
    } else {
        Eigen::MatrixXd stacked(t_n + n_s, n_s);
        stacked.topRows(t_n) = xc;
        stacked.bottomRows(n_s) =
            std::sqrt(lambda) * Eigen::MatrixXd::Identity(n_s, n_s);
        Eigen::VectorXd rhs = Eigen::VectorXd::Zero(t_n + n_s);
        rhs.head(t_n) = yc;
        model.weights = stacked.completeOrthogonalDecomposition().solve(rhs);
    }
    model.bias = y_mean - x_mean * model.weights;
    return model;
}

/// Apply the readout. Columns are matched to the training sensors by id, so
/// any column permutation of the training layout is accepted; a sensor set
/// mismatch is an error listing the missing and extra ids.
inline TimeSeries predict(const ReadoutModel& model, const StateMatrix& x) {
    check_state_matrix(x, "predict");
    std::vector<Eigen::Index> perm;
    std::vector<std::string> missing;
    perm.reserve(model.sensor_ids.size());
    for (const std::string& id : model.sensor_ids) {
        bool found = false;
        for (Eigen::Index j = 0; j < x.sensor_count(); ++j) {
            if (x.sensors[j].id == id) {
                perm.push_back(j);
                found = true;
                break;
            }
        }
        if (!found) missing.push_back(id);
    }
    std::vector<std::string> extra;
    for (const SensorInfo& s : x.sensors) {
        bool known = false;
        for (const std::string& id : model.sensor_ids)
            if (id == s.id) {
                known = true;
                break;
            }
        if (!known) extra.push_back(s.id);
    }
    if (!missing.empty() || !extra.empty()) {
        std::string msg = "predict: sensor set does not match the trained model;";
        if (!missing.empty()) {
            msg += " missing:";
            for (const auto& id : missing) msg += " " + id;
            msg += ";";
        }
        if (!extra.empty()) {
            msg += " extra:";
            for (const auto& id : extra) msg += " " + id;
        }
        throw std::invalid_argument(msg);
    }

    TimeSeries out;
    out.sample_rate = x.sample_rate;
    out.label = "prediction";
    out.values = Eigen::VectorXd::Constant(x.samples(), model.bias);
    for (std::size_t k = 0; k < perm.size(); ++k)
        out.values += model.weights[static_cast<Eigen::Index>(k)] * x.values.col(perm[k]);
    return out;
}

/// Coefficient of determination 1 - SS_res / SS_tot. May be negative; a
/// constant truth signal has no variance to explain and is an error.
inline double r_squared(const TimeSeries& y_true, const TimeSeries& y_pred) {
    if (y_true.size() != y_pred.size())
        throw std::invalid_argument("r_squared: length mismatch (" + std::to_string(y_true.size()) +
                                    " vs " + std::to_string(y_pred.size()) + ")");
    if (y_true.size() < 2) throw std::invalid_argument("r_squared: need at least 2 samples");
    const double mean = y_true.values.mean();
    const double ss_tot = (y_true.values.array() - mean).matrix().squaredNorm();
    if (ss_tot == 0.0)
        throw std::invalid_argument("r_squared: y_true is constant; R^2 is undefined");
    const double ss_res = (y_true.values - y_pred.values).squaredNorm();
    return 1.0 - ss_res / ss_tot;
}

inline nlohmann::json readout_to_json(const ReadoutModel& model) {
    nlohmann::json weights;
    for (std::size_t k = 0; k < model.sensor_ids.size(); ++k)
        weights[model.sensor_ids[k]] = model.weights[static_cast<Eigen::Index>(k)];
    return {{"weights", weights},
            {"bias", model.bias},
            {"lambda", model.lambda},
            {"task", model.task}};
}

inline ReadoutModel readout_from_json(const nlohmann::json& j) {
    ReadoutModel model;
    model.bias = j.at("bias").get<double>();
    model.lambda = j.at("lambda").get<double>();
    model.task = j.value("task", std::string{});
    const nlohmann::json& weights = j.at("weights");
    model.weights.resize(static_cast<Eigen::Index>(weights.size()));
    Eigen::Index k = 0;
    for (auto it = weights.begin(); it != weights.end(); ++it) {
        model.sensor_ids.push_back(it.key());
        model.weights[k++] = it.value().get<double>();
    }
    return model;
}

}  // namespace metares
