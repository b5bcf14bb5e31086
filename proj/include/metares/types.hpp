#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace metares {

/// Uniformly sampled scalar signal.
struct TimeSeries {
    Eigen::VectorXd values;
    double sample_rate = 0.0;  ///< Hz
    std::string label;
    /// Index of the first sample that is meaningful for training/scoring.
    /// Nonzero only for targets with an undefined warm-up region (e.g. delay).
    Eigen::Index valid_from = 0;

    Eigen::Index size() const { return values.size(); }
};

enum class SensorKind { edge_x, edge_y, kxx, kyy };

inline const char* to_string(SensorKind k) {
    switch (k) {
        case SensorKind::edge_x: return "edge_x";
        case SensorKind::edge_y: return "edge_y";
        case SensorKind::kxx: return "kxx";
        case SensorKind::kyy: return "kyy";
    }
    throw std::invalid_argument("unknown SensorKind");
}

inline SensorKind sensor_kind_from_string(const std::string& s) {
    if (s == "edge_x") return SensorKind::edge_x;
    if (s == "edge_y") return SensorKind::edge_y;
    if (s == "kxx") return SensorKind::kxx;
    if (s == "kyy") return SensorKind::kyy;
    throw std::invalid_argument("unknown sensor kind '" + s + "'");
}

/// Identity and grid placement of one readout channel.
struct SensorInfo {
    std::string id;
    SensorKind kind = SensorKind::edge_x;
    int row = 0;  ///< grid row of the sensor's anchor node
    int col = 0;  ///< grid column of the sensor's anchor node
};

/// Time-by-sensor readout matrix with channel metadata.
/// Row t holds every sensor at time index start_index + t.
struct StateMatrix {
    Eigen::MatrixXd values;  ///< rows: time samples, cols: sensors
    double sample_rate = 0.0;
    std::vector<SensorInfo> sensors;
    std::int64_t start_index = 0;

    Eigen::Index samples() const { return values.rows(); }
    Eigen::Index sensor_count() const { return values.cols(); }

    Eigen::Index sensor_index(const std::string& id) const {
        for (Eigen::Index j = 0; j < static_cast<Eigen::Index>(sensors.size()); ++j)
            if (sensors[j].id == id) return j;
        throw std::invalid_argument("unknown sensor id '" + id + "'");
    }
};

inline void check_state_matrix(const StateMatrix& x, const char* where) {
    if (x.values.cols() != static_cast<Eigen::Index>(x.sensors.size()))
        throw std::invalid_argument(std::string(where) + ": sensor metadata count " +
                                    std::to_string(x.sensors.size()) + " does not match " +
                                    std::to_string(x.values.cols()) + " columns");
    if (x.sample_rate <= 0.0)
        throw std::invalid_argument(std::string(where) + ": sample rate must be positive");
    for (std::size_t a = 0; a < x.sensors.size(); ++a)
        for (std::size_t b = a + 1; b < x.sensors.size(); ++b)
            if (x.sensors[a].id == x.sensors[b].id)
                throw std::invalid_argument(std::string(where) + ": duplicate sensor id '" +
                                            x.sensors[a].id + "'");
}

inline std::string format_double(double v, int significant = 9) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*g", significant, v);
    return buf;
}

}  // namespace metares
