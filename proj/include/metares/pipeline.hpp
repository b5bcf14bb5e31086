#pragma once

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "metares/types.hpp"

namespace metares {

/// Drop floor(head_frac * T) leading and floor(tail_frac * T) trailing
/// samples; start_index tracks the global time offset of the kept window.
inline StateMatrix trim_transient(const StateMatrix& x, double head_frac = 0.30,
                                  double tail_frac = 0.20) {
    if (head_frac < 0.0 || tail_frac < 0.0 || head_frac + tail_frac >= 1.0)
        throw std::invalid_argument("trim_transient: fractions must be non-negative and sum below 1");
    const Eigen::Index t_n = x.samples();
    const auto head = static_cast<Eigen::Index>(std::floor(head_frac * static_cast<double>(t_n)));
    const auto tail = static_cast<Eigen::Index>(std::floor(tail_frac * static_cast<double>(t_n)));
    const Eigen::Index kept = t_n - head - tail;
    if (kept < 2)
        throw std::invalid_argument("trim_transient: only " + std::to_string(kept) +
                                    " samples would remain");
    StateMatrix out;
    out.values = x.values.middleRows(head, kept);
    out.sample_rate = x.sample_rate;
    out.sensors = x.sensors;
    out.start_index = x.start_index + head;
    return out;
}

inline TimeSeries trim_transient(const TimeSeries& ts, double head_frac = 0.30,
                                 double tail_frac = 0.20) {
    if (head_frac < 0.0 || tail_frac < 0.0 || head_frac + tail_frac >= 1.0)
        throw std::invalid_argument("trim_transient: fractions must be non-negative and sum below 1");
    const Eigen::Index t_n = ts.size();
    const auto head = static_cast<Eigen::Index>(std::floor(head_frac * static_cast<double>(t_n)));
    const auto tail = static_cast<Eigen::Index>(std::floor(tail_frac * static_cast<double>(t_n)));
    const Eigen::Index kept = t_n - head - tail;
    if (kept < 2)
        throw std::invalid_argument("trim_transient: only " + std::to_string(kept) +
                                    " samples would remain");
    TimeSeries out = ts;
    out.values = ts.values.segment(head, kept);
    out.valid_from = std::max<Eigen::Index>(0, ts.valid_from - head);
    return out;
}

struct SplitData {
    StateMatrix train_x;
    TimeSeries train_y;
    StateMatrix test_x;
    TimeSeries test_y;
};

/// Chronological train/test split at floor(train_frac * T). Leading samples
/// still inside the target's warm-up region (valid_from) are dropped from
/// both sides first.
inline SplitData split_train_test(const StateMatrix& x, const TimeSeries& y,
                                  double train_frac = 0.8) {
    check_state_matrix(x, "split_train_test");
    if (x.samples() != y.size())
        throw std::invalid_argument("split_train_test: state has " + std::to_string(x.samples()) +
                                    " samples, target has " + std::to_string(y.size()));
    if (train_frac <= 0.0 || train_frac >= 1.0)
        throw std::invalid_argument("split_train_test: train_frac must lie strictly in (0, 1)");
    const Eigen::Index skip = std::max<Eigen::Index>(0, y.valid_from);
    const Eigen::Index t_n = x.samples() - skip;
    const auto cut = static_cast<Eigen::Index>(std::floor(train_frac * static_cast<double>(t_n)));
    if (cut < 1 || cut >= t_n)
        throw std::invalid_argument("split_train_test: split leaves an empty train or test set");

    SplitData s;
    s.train_x.values = x.values.middleRows(skip, cut);
    s.train_x.sample_rate = x.sample_rate;
    s.train_x.sensors = x.sensors;
    s.train_x.start_index = x.start_index + skip;
    s.test_x.values = x.values.middleRows(skip + cut, t_n - cut);
    s.test_x.sample_rate = x.sample_rate;
    s.test_x.sensors = x.sensors;
    s.test_x.start_index = x.start_index + skip + cut;

    s.train_y = y;
    s.train_y.values = y.values.segment(skip, cut);
    s.train_y.valid_from = 0;
    s.test_y = y;
    s.test_y.values = y.values.segment(skip + cut, t_n - cut);
    s.test_y.valid_from = 0;
    return s;
}

// ---------------------------------------------------------------------------
// CSV + JSON sidecar serialization. Numbers are written with 9 significant
// digits; re-ingesting a written file and writing it again is byte-stable.
// ---------------------------------------------------------------------------

namespace detail {

inline void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
    out << content;
    if (!out) throw std::runtime_error("failed writing '" + path + "'");
}

inline std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open '" + path + "' for reading");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline nlohmann::json read_json_file(const std::string& path) {
    try {
        return nlohmann::json::parse(read_text_file(path));
    } catch (const nlohmann::json::parse_error& e) {
        throw std::runtime_error("'" + path + "' is not valid JSON: " + e.what());
    }
}

inline double parse_value(const std::string& token, const std::string& path, std::size_t line,
                          std::size_t column) {
    char* end = nullptr;
    const double v = std::strtod(token.c_str(), &end);
    if (end == token.c_str() || *end != '\0')
        throw std::runtime_error(path + ": line " + std::to_string(line) + ", column " +
                                 std::to_string(column) + ": '" + token + "' is not a number");
    if (!std::isfinite(v))
        throw std::runtime_error(path + ": line " + std::to_string(line) + ", column " +
                                 std::to_string(column) + ": non-finite value");
    return v;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur.push_back(ch);
        }
    }
    out.push_back(cur);
    return out;
}

inline void require_finite(double v, const std::string& what) {
    if (!std::isfinite(v)) throw std::invalid_argument(what + " contains a non-finite value");
}

}  // namespace detail

inline void export_timeseries(const TimeSeries& ts, const std::string& csv_path,
                              const std::string& meta_path) {
    if (ts.sample_rate <= 0.0)
        throw std::invalid_argument("export_timeseries: sample rate must be positive");
    std::string csv = "t_index,value\n";
    for (Eigen::Index t = 0; t < ts.size(); ++t) {
        detail::require_finite(ts.values[t], "export_timeseries: '" + ts.label + "'");
        csv += std::to_string(t) + "," + format_double(ts.values[t]) + "\n";
    }
    detail::write_text_file(csv_path, csv);

    nlohmann::json meta;
    meta["sample_rate_hz"] = ts.sample_rate;
    meta["label"] = ts.label;
    if (ts.valid_from > 0) meta["valid_from"] = ts.valid_from;
    detail::write_text_file(meta_path, meta.dump(2) + "\n");
}

inline TimeSeries import_timeseries(const std::string& csv_path, const std::string& meta_path) {
    const nlohmann::json meta = detail::read_json_file(meta_path);
    if (!meta.contains("sample_rate_hz"))
        throw std::runtime_error("'" + meta_path + "' is missing sample_rate_hz");
    TimeSeries ts;
    ts.sample_rate = meta.at("sample_rate_hz").get<double>();
    if (ts.sample_rate <= 0.0)
        throw std::runtime_error("'" + meta_path + "' has a non-positive sample_rate_hz");
    ts.label = meta.value("label", std::string{});
    ts.valid_from = meta.value("valid_from", 0);

    std::istringstream in(detail::read_text_file(csv_path));
    std::string line;
    if (!std::getline(in, line) || detail::split_csv_line(line).size() != 2)
        throw std::runtime_error(csv_path + ": expected header 't_index,value'");
    std::vector<double> vals;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const auto cells = detail::split_csv_line(line);
        if (cells.size() != 2)
            throw std::runtime_error(csv_path + ": line " + std::to_string(lineno) +
                                     " has " + std::to_string(cells.size()) + " columns, expected 2");
        vals.push_back(detail::parse_value(cells[1], csv_path, lineno, 2));
    }
    ts.values = Eigen::Map<Eigen::VectorXd>(vals.data(), static_cast<Eigen::Index>(vals.size()));
    return ts;
}

inline void export_state(const StateMatrix& x, const std::string& csv_path,
                         const std::string& meta_path) {
    check_state_matrix(x, "export_state");
    std::string csv = "t_index";
    for (const SensorInfo& s : x.sensors) csv += "," + s.id;
    csv += "\n";
    for (Eigen::Index t = 0; t < x.samples(); ++t) {
        csv += std::to_string(x.start_index + t);
        for (Eigen::Index j = 0; j < x.sensor_count(); ++j) {
            detail::require_finite(x.values(t, j), "export_state: sensor '" + x.sensors[j].id + "'");
            csv += "," + format_double(x.values(t, j));
        }
        csv += "\n";
    }
    detail::write_text_file(csv_path, csv);

    nlohmann::json sensors;
    for (const SensorInfo& s : x.sensors)
        sensors[s.id] = {{"kind", to_string(s.kind)}, {"row", s.row}, {"col", s.col}};
    nlohmann::json meta;
    meta["sample_rate_hz"] = x.sample_rate;
    meta["start_index"] = x.start_index;
    meta["sensors"] = sensors;
    detail::write_text_file(meta_path, meta.dump(2) + "\n");
}

/// Inverse of export_state. Column order comes from the CSV header; sensor
/// kind and grid placement come from the sidecar.
inline StateMatrix ingest_csv(const std::string& csv_path, const std::string& meta_path) {
    const nlohmann::json meta = detail::read_json_file(meta_path);
    if (!meta.contains("sample_rate_hz"))
        throw std::runtime_error("'" + meta_path + "' is missing sample_rate_hz");
    StateMatrix x;
    x.sample_rate = meta.at("sample_rate_hz").get<double>();
    if (x.sample_rate <= 0.0)
        throw std::runtime_error("'" + meta_path + "' has a non-positive sample_rate_hz");
    x.start_index = meta.value("start_index", 0);
    if (!meta.contains("sensors") || !meta.at("sensors").is_object())
        throw std::runtime_error("'" + meta_path + "' is missing the sensors map");
    const nlohmann::json& sensor_map = meta.at("sensors");

    std::istringstream in(detail::read_text_file(csv_path));
    std::string line;
    if (!std::getline(in, line))
        throw std::runtime_error(csv_path + ": empty file");
    const auto header = detail::split_csv_line(line);
    if (header.size() < 2 || header[0] != "t_index")
        throw std::runtime_error(csv_path + ": header must start with 't_index' and list sensors");
    for (std::size_t j = 1; j < header.size(); ++j) {
        const std::string& id = header[j];
        if (!sensor_map.contains(id))
            throw std::runtime_error(csv_path + ": sensor '" + id + "' is not in '" + meta_path +
                                     "'");
        const nlohmann::json& rec = sensor_map.at(id);
        SensorInfo s;
        s.id = id;
        s.kind = sensor_kind_from_string(rec.at("kind").get<std::string>());
        s.row = rec.at("row").get<int>();
        s.col = rec.at("col").get<int>();
        x.sensors.push_back(s);
    }
    if (sensor_map.size() != header.size() - 1)
        throw std::runtime_error(csv_path + ": header lists " + std::to_string(header.size() - 1) +
                                 " sensors but '" + meta_path + "' describes " +
                                 std::to_string(sensor_map.size()));

    std::vector<double> vals;
    std::size_t rows = 0;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const auto cells = detail::split_csv_line(line);
        if (cells.size() != header.size())
            throw std::runtime_error(csv_path + ": line " + std::to_string(lineno) + " has " +
                                     std::to_string(cells.size()) + " columns, expected " +
                                     std::to_string(header.size()));
        for (std::size_t j = 1; j < cells.size(); ++j)
            vals.push_back(detail::parse_value(cells[j], csv_path, lineno, j + 1));
        ++rows;
    }
    if (rows == 0) throw std::runtime_error(csv_path + ": no data rows");
    x.values.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(header.size() - 1));
    std::size_t idx = 0;
    for (Eigen::Index t = 0; t < x.values.rows(); ++t)
        for (Eigen::Index j = 0; j < x.values.cols(); ++j) x.values(t, j) = vals[idx++];
    check_state_matrix(x, "ingest_csv");
    return x;
}

}  // namespace metares
