#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "metares/detail/sha256.hpp"
#include "metares/lattice.hpp"
#include "metares/metrics.hpp"
#include "metares/parallel.hpp"
#include "metares/pipeline.hpp"
#include "metares/readout.hpp"
#include "metares/rng.hpp"
#include "metares/selection.hpp"
#include "metares/signals.hpp"
#include "metares/types.hpp"

namespace metares {

// Counter scheme for seeds derived from the master seed. Every randomized
// stage uses derive_seed(master, counter); nothing reads ambient entropy.
inline constexpr std::uint64_t kSeedLattice = 1;   ///< edge orientation draw
inline constexpr std::uint64_t kSeedBaseline = 2;  ///< random-subset baseline

// ---------------------------------------------------------------------------
// Task descriptors
// ---------------------------------------------------------------------------

struct TaskSpec {
    enum class Kind { relu10, delay, narma, strain_rate, input_force };
    Kind kind = Kind::relu10;
    int order = 0;           ///< delay steps or recurrence order
    std::string sensor_id;   ///< strain-rate source sensor
    std::string name;        ///< canonical form, e.g. "delay5"

    /// Filesystem-safe variant of the name.
    std::string slug() const {
        std::string s = name;
        std::replace(s.begin(), s.end(), ':', '_');
        return s;
    }
};

namespace detail {

inline int parse_count(const std::string& text, const std::string& what) {
    int value = 0;
    const char* first = text.data();
    const char* last = text.data() + text.size();
    const auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc{} || ptr != last || value < 1)
        throw std::invalid_argument(what + ": expected a positive count, got '" + text + "'");
    return value;
}

}  // namespace detail

/// Accepted forms: relu10, delayN / delay:N, narmaN / narma:N, input_force,
/// strain_rate, strain_rate:<sensor_id>.
inline TaskSpec parse_task(const std::string& raw) {
    TaskSpec t;
    auto tail = [&raw](std::size_t prefix) {
        std::string rest = raw.substr(prefix);
        if (!rest.empty() && rest.front() == ':') rest.erase(rest.begin());
        return rest;
    };
    if (raw == "relu10") {
        t.kind = TaskSpec::Kind::relu10;
        t.name = raw;
    } else if (raw.rfind("delay", 0) == 0) {
        t.kind = TaskSpec::Kind::delay;
        t.order = detail::parse_count(tail(5), "task '" + raw + "'");
        t.name = "delay" + std::to_string(t.order);
    } else if (raw.rfind("narma", 0) == 0) {
        t.kind = TaskSpec::Kind::narma;
        t.order = detail::parse_count(tail(5), "task '" + raw + "'");
        t.name = "narma" + std::to_string(t.order);
    } else if (raw == "input_force") {
        t.kind = TaskSpec::Kind::input_force;
        t.name = raw;
    } else if (raw.rfind("strain_rate", 0) == 0) {
        t.kind = TaskSpec::Kind::strain_rate;
        t.sensor_id = tail(11);
        t.name = t.sensor_id.empty() ? "strain_rate" : "strain_rate:" + t.sensor_id;
    } else {
        throw std::invalid_argument(
            "unknown task '" + raw +
            "'; expected relu10, delayN, narmaN, input_force, or strain_rate[:sensor_id]");
    }
    return t;
}

// ---------------------------------------------------------------------------
// Experiment configuration
// ---------------------------------------------------------------------------

struct DriveConfig {
    int node = -1;        ///< < 0 selects the lattice centre
    /// Force scale applied to the unit-RMS input, in newtons. The default
    /// sits a little above the gap-crossing threshold of the default lattice:
    /// low enough that tone reconstruction survives, high enough that
    /// rectified harmonics appear in dozens of sensors.
    double gain_n = 0.005;
    int substeps = 0;     ///< 0 = automatic
};

struct PipelineConfig {
    double trim_head = 0.30;
    double trim_tail = 0.20;
    double train_fraction = 0.80;
};

struct MetricsConfig {
    Eigen::Index guard_bins = 5;
    double variance_capture = 0.9999;
    int memory_max_delay = 25;
    PcaNormalize pca_normalize = PcaNormalize::unit;
    double high_snr_db = 20.0;
};

struct DataConfig {
    std::string states_csv;
    std::string states_meta;
    std::string input_csv;
    std::string input_meta;

    bool active() const { return !states_csv.empty(); }
};

struct SelectionConfig {
    std::string task = "relu10";
    Eigen::Index baseline_trials = 1000;
    std::vector<Eigen::Index> baseline_sizes;  ///< empty = every size
    double residual_tol = 1.0e-8;
};

struct SweepConfig {
    std::vector<int> k_values = {1, 2, 3, 4, 5, 6, 7, 8};
    std::vector<std::string> variants = {"nonlinear", "linearized"};
    std::vector<std::string> tasks = {"strain_rate", "relu10"};
};

struct ExperimentConfig {
    std::uint64_t seed = 42;
    unsigned threads = 1;
    LatticeConfig lattice;   ///< lattice.seed is derived from `seed`, not set here
    bool linearized = false;
    DriveConfig drive;
    int tone_count = 2;      ///< > 0: first k ladder tones; 0: explicit list
    MultiToneSpec input;     ///< resolved frequency list
    bool input_explicit = false;  ///< config document named the input section
    DataConfig data;
    PipelineConfig pipeline;
    double ridge_lambda = -1.0;
    MetricsConfig metrics;
    std::vector<std::string> tasks = {"relu10", "strain_rate"};
    SelectionConfig selection;
    SweepConfig sweep;
};

namespace detail {

inline void check_keys(const nlohmann::json& j, std::initializer_list<const char*> allowed,
                       const std::string& where) {
    if (!j.is_object()) throw std::invalid_argument(where + ": expected a JSON object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool known = false;
        for (const char* key : allowed)
            if (it.key() == key) {
                known = true;
                break;
            }
        if (!known) throw std::invalid_argument(where + ": unknown key '" + it.key() + "'");
    }
}

inline std::string default_meta_path(std::string csv_path) {
    const std::string suffix = ".csv";
    if (csv_path.size() > suffix.size() &&
        csv_path.compare(csv_path.size() - suffix.size(), suffix.size(), suffix) == 0)
        csv_path.resize(csv_path.size() - suffix.size());
    return csv_path + ".meta.json";
}

inline std::vector<double> ladder_prefix(int k) {
    const std::vector<double>& ladder = default_tone_ladder();
    if (k < 1 || k > static_cast<int>(ladder.size()))
        throw std::invalid_argument("input complexity " + std::to_string(k) +
                                    " outside 1.." + std::to_string(ladder.size()));
    return {ladder.begin(), ladder.begin() + k};
}

}  // namespace detail

inline ExperimentConfig config_from_json(const nlohmann::json& j) {
    detail::check_keys(j,
                       {"seed", "threads", "lattice", "drive", "input", "data", "pipeline",
                        "readout", "metrics", "tasks", "selection", "sweep"},
                       "config");
    ExperimentConfig cfg;
    cfg.seed = j.value("seed", cfg.seed);
    cfg.threads = j.value("threads", cfg.threads);

    if (j.contains("lattice")) {
        const nlohmann::json& l = j.at("lattice");
        detail::check_keys(l,
                           {"rows", "cols", "mass_kg", "spacing_m", "slope_ratio", "gap_deg",
                            "k_soft", "target_fundamental_hz", "damping_ratio", "linearized"},
                           "config.lattice");
        cfg.lattice.rows = l.value("rows", cfg.lattice.rows);
        cfg.lattice.cols = l.value("cols", cfg.lattice.cols);
        cfg.lattice.mass_kg = l.value("mass_kg", cfg.lattice.mass_kg);
        cfg.lattice.spacing_m = l.value("spacing_m", cfg.lattice.spacing_m);
        cfg.lattice.slope_ratio = l.value("slope_ratio", cfg.lattice.slope_ratio);
        cfg.lattice.gap_deg = l.value("gap_deg", cfg.lattice.gap_deg);
        cfg.lattice.k_soft = l.value("k_soft", cfg.lattice.k_soft);
        cfg.lattice.target_fundamental_hz =
            l.value("target_fundamental_hz", cfg.lattice.target_fundamental_hz);
        cfg.lattice.damping_ratio = l.value("damping_ratio", cfg.lattice.damping_ratio);
        cfg.linearized = l.value("linearized", cfg.linearized);
    }
    if (j.contains("drive")) {
        const nlohmann::json& d = j.at("drive");
        detail::check_keys(d, {"node", "gain_n", "substeps"}, "config.drive");
        cfg.drive.node = d.value("node", cfg.drive.node);
        cfg.drive.gain_n = d.value("gain_n", cfg.drive.gain_n);
        cfg.drive.substeps = d.value("substeps", cfg.drive.substeps);
    }
    if (j.contains("input")) {
        const nlohmann::json& in = j.at("input");
        detail::check_keys(in, {"tones", "frequencies_hz", "duration_s", "sample_rate_hz"},
                           "config.input");
        cfg.input_explicit = true;
        if (in.contains("tones") && in.contains("frequencies_hz"))
            throw std::invalid_argument(
                "config.input: give either 'tones' or 'frequencies_hz', not both");
        if (in.contains("frequencies_hz")) {
            cfg.tone_count = 0;
            cfg.input.frequencies_hz = in.at("frequencies_hz").get<std::vector<double>>();
            if (cfg.input.frequencies_hz.empty())
                throw std::invalid_argument("config.input: frequencies_hz is empty");
        } else {
            cfg.tone_count = in.value("tones", cfg.tone_count);
        }
        cfg.input.duration_s = in.value("duration_s", cfg.input.duration_s);
        cfg.input.sample_rate_hz = in.value("sample_rate_hz", cfg.input.sample_rate_hz);
    }
    if (cfg.tone_count > 0) cfg.input.frequencies_hz = detail::ladder_prefix(cfg.tone_count);

    if (j.contains("data")) {
        const nlohmann::json& d = j.at("data");
        detail::check_keys(d, {"states_csv", "states_meta", "input_csv", "input_meta"},
                           "config.data");
        cfg.data.states_csv = d.value("states_csv", std::string{});
        cfg.data.states_meta = d.value("states_meta", std::string{});
        cfg.data.input_csv = d.value("input_csv", std::string{});
        cfg.data.input_meta = d.value("input_meta", std::string{});
        if (cfg.data.active()) {
            if (cfg.data.input_csv.empty())
                throw std::invalid_argument(
                    "config.data: external states need input_csv for the drive record");
            if (cfg.data.states_meta.empty())
                cfg.data.states_meta = detail::default_meta_path(cfg.data.states_csv);
            if (cfg.data.input_meta.empty())
                cfg.data.input_meta = detail::default_meta_path(cfg.data.input_csv);
        }
    }
    if (j.contains("pipeline")) {
        const nlohmann::json& p = j.at("pipeline");
        detail::check_keys(p, {"trim_head", "trim_tail", "train_fraction"}, "config.pipeline");
        cfg.pipeline.trim_head = p.value("trim_head", cfg.pipeline.trim_head);
        cfg.pipeline.trim_tail = p.value("trim_tail", cfg.pipeline.trim_tail);
        cfg.pipeline.train_fraction = p.value("train_fraction", cfg.pipeline.train_fraction);
    }
    if (j.contains("readout")) {
        const nlohmann::json& r = j.at("readout");
        detail::check_keys(r, {"ridge_lambda"}, "config.readout");
        cfg.ridge_lambda = r.value("ridge_lambda", cfg.ridge_lambda);
    }
    if (j.contains("metrics")) {
        const nlohmann::json& m = j.at("metrics");
        detail::check_keys(m,
                           {"guard_bins", "variance_capture", "memory_max_delay",
                            "pca_normalize", "high_snr_db"},
                           "config.metrics");
        cfg.metrics.guard_bins = m.value("guard_bins", cfg.metrics.guard_bins);
        cfg.metrics.variance_capture = m.value("variance_capture", cfg.metrics.variance_capture);
        cfg.metrics.memory_max_delay = m.value("memory_max_delay", cfg.metrics.memory_max_delay);
        if (m.contains("pca_normalize")) {
            const std::string mode = m.at("pca_normalize").get<std::string>();
            if (mode == "unit")
                cfg.metrics.pca_normalize = PcaNormalize::unit;
            else if (mode == "raw")
                cfg.metrics.pca_normalize = PcaNormalize::raw;
            else
                throw std::invalid_argument("config.metrics: pca_normalize must be 'unit' or "
                                            "'raw', got '" + mode + "'");
        }
        cfg.metrics.high_snr_db = m.value("high_snr_db", cfg.metrics.high_snr_db);
    }
    if (j.contains("tasks")) {
        cfg.tasks = j.at("tasks").get<std::vector<std::string>>();
        for (const std::string& t : cfg.tasks) parse_task(t);  // validate early
    }
    if (j.contains("selection")) {
        const nlohmann::json& s = j.at("selection");
        detail::check_keys(s, {"task", "baseline_trials", "baseline_sizes", "residual_tol"},
                           "config.selection");
        cfg.selection.task = s.value("task", cfg.selection.task);
        parse_task(cfg.selection.task);
        cfg.selection.baseline_trials = s.value("baseline_trials", cfg.selection.baseline_trials);
        if (s.contains("baseline_sizes"))
            cfg.selection.baseline_sizes =
                s.at("baseline_sizes").get<std::vector<Eigen::Index>>();
        cfg.selection.residual_tol = s.value("residual_tol", cfg.selection.residual_tol);
    }
    if (j.contains("sweep")) {
        const nlohmann::json& s = j.at("sweep");
        detail::check_keys(s, {"k_values", "variants", "tasks"}, "config.sweep");
        if (s.contains("k_values")) cfg.sweep.k_values = s.at("k_values").get<std::vector<int>>();
        if (s.contains("variants"))
            cfg.sweep.variants = s.at("variants").get<std::vector<std::string>>();
        for (const std::string& v : cfg.sweep.variants)
            if (v != "nonlinear" && v != "linearized")
                throw std::invalid_argument("config.sweep: variant must be 'nonlinear' or "
                                            "'linearized', got '" + v + "'");
        if (s.contains("tasks")) cfg.sweep.tasks = s.at("tasks").get<std::vector<std::string>>();
        for (const std::string& t : cfg.sweep.tasks) parse_task(t);
    }
    return cfg;
}

inline nlohmann::json config_to_json(const ExperimentConfig& cfg) {
    nlohmann::json input;
    if (cfg.tone_count > 0)
        input["tones"] = cfg.tone_count;
    else
        input["frequencies_hz"] = cfg.input.frequencies_hz;
    input["duration_s"] = cfg.input.duration_s;
    input["sample_rate_hz"] = cfg.input.sample_rate_hz;

    nlohmann::json j;
    j["seed"] = cfg.seed;
    j["threads"] = cfg.threads;
    j["lattice"] = {{"rows", cfg.lattice.rows},
                    {"cols", cfg.lattice.cols},
                    {"mass_kg", cfg.lattice.mass_kg},
                    {"spacing_m", cfg.lattice.spacing_m},
                    {"slope_ratio", cfg.lattice.slope_ratio},
                    {"gap_deg", cfg.lattice.gap_deg},
                    {"k_soft", cfg.lattice.k_soft},
                    {"target_fundamental_hz", cfg.lattice.target_fundamental_hz},
                    {"damping_ratio", cfg.lattice.damping_ratio},
                    {"linearized", cfg.linearized}};
    j["drive"] = {{"node", cfg.drive.node},
                  {"gain_n", cfg.drive.gain_n},
                  {"substeps", cfg.drive.substeps}};
    j["input"] = input;
    j["data"] = {{"states_csv", cfg.data.states_csv},
                 {"states_meta", cfg.data.states_meta},
                 {"input_csv", cfg.data.input_csv},
                 {"input_meta", cfg.data.input_meta}};
    j["pipeline"] = {{"trim_head", cfg.pipeline.trim_head},
                     {"trim_tail", cfg.pipeline.trim_tail},
                     {"train_fraction", cfg.pipeline.train_fraction}};
    j["readout"] = {{"ridge_lambda", cfg.ridge_lambda}};
    j["metrics"] = {{"guard_bins", cfg.metrics.guard_bins},
                    {"variance_capture", cfg.metrics.variance_capture},
                    {"memory_max_delay", cfg.metrics.memory_max_delay},
                    {"pca_normalize",
                     cfg.metrics.pca_normalize == PcaNormalize::unit ? "unit" : "raw"},
                    {"high_snr_db", cfg.metrics.high_snr_db}};
    j["tasks"] = cfg.tasks;
    j["selection"] = {{"task", cfg.selection.task},
                      {"baseline_trials", cfg.selection.baseline_trials},
                      {"baseline_sizes", cfg.selection.baseline_sizes},
                      {"residual_tol", cfg.selection.residual_tol}};
    j["sweep"] = {{"k_values", cfg.sweep.k_values},
                  {"variants", cfg.sweep.variants},
                  {"tasks", cfg.sweep.tasks}};
    return j;
}

inline std::string config_sha256(const ExperimentConfig& cfg) {
    return detail::sha256_hex(config_to_json(cfg).dump());
}

inline std::string config_fingerprint(const ExperimentConfig& cfg) {
    return config_sha256(cfg).substr(0, 12);
}

// ---------------------------------------------------------------------------
// Stage tagging
// ---------------------------------------------------------------------------

template <typename Fn>
auto stage(const std::string& name, Fn&& fn) -> decltype(fn()) {
    try {
        return fn();
    } catch (const std::exception& e) {
        throw std::runtime_error("[" + name + "] " + e.what());
    }
}

// ---------------------------------------------------------------------------
// Output bundles
// ---------------------------------------------------------------------------

namespace detail {

inline std::string read_binary_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open '" + path.string() + "' for reading");
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

}  // namespace detail

/// Collects every output file of a run and finishes with a manifest mapping
/// relative path to content hash. Thread-safe for concurrent registration;
/// writing the manifest is the single serialization point.
class BundleWriter {
public:
    explicit BundleWriter(std::filesystem::path root) : root_(std::move(root)) {
        std::filesystem::create_directories(root_);
    }

    const std::filesystem::path& root() const { return root_; }
    std::filesystem::path path(const std::string& relative) const { return root_ / relative; }

    void write_text(const std::string& relative, const std::string& content) {
        const std::filesystem::path p = path(relative);
        std::filesystem::create_directories(p.parent_path());
        detail::write_text_file(p.string(), content);
        const std::lock_guard<std::mutex> lock(mu_);
        hashes_[relative] = detail::sha256_hex(content);
    }

    void write_json(const std::string& relative, const nlohmann::json& j) {
        write_text(relative, j.dump(2) + "\n");
    }

    /// Register a file some exporter already wrote under root().
    void add_existing(const std::string& relative) {
        const std::string content = detail::read_binary_file(path(relative));
        const std::lock_guard<std::mutex> lock(mu_);
        hashes_[relative] = detail::sha256_hex(content);
    }

    std::size_t file_count() const { return hashes_.size(); }

    /// Write manifest.json and return it. The manifest lists every other
    /// file, so it is not hashed itself.
    nlohmann::json finish(nlohmann::json manifest) {
        nlohmann::json files;
        for (const auto& [relative, hash] : hashes_) files[relative] = hash;
        manifest["files"] = files;
        detail::write_text_file((root_ / "manifest.json").string(), manifest.dump(2) + "\n");
        return manifest;
    }

private:
    std::filesystem::path root_;
    std::map<std::string, std::string> hashes_;
    std::mutex mu_;
};

struct VerifyResult {
    bool ok = false;
    std::size_t files_checked = 0;
    std::vector<std::string> problems;
};

/// Re-hash every file listed in dir/manifest.json; files that are missing,
/// altered, or present but unlisted are reported as problems.
inline VerifyResult verify_bundle(const std::filesystem::path& dir) {
    const std::filesystem::path manifest_path = dir / "manifest.json";
    if (!std::filesystem::exists(manifest_path))
        throw std::runtime_error("verify: no manifest.json under '" + dir.string() + "'");
    const nlohmann::json manifest = detail::read_json_file(manifest_path.string());
    if (!manifest.contains("files"))
        throw std::runtime_error("verify: manifest has no 'files' table");

    VerifyResult result;
    const nlohmann::json& files = manifest.at("files");
    for (auto it = files.begin(); it != files.end(); ++it) {
        const std::string relative = it.key();
        const std::filesystem::path p = dir / relative;
        ++result.files_checked;
        if (!std::filesystem::exists(p)) {
            result.problems.push_back("missing: " + relative);
            continue;
        }
        const std::string hash = detail::sha256_hex(detail::read_binary_file(p));
        if (hash != it.value().get<std::string>())
            result.problems.push_back("hash mismatch: " + relative);
    }
    for (const auto& entry : std::filesystem::recursive_directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        const std::string relative =
            std::filesystem::relative(entry.path(), dir).generic_string();
        if (relative == "manifest.json") continue;
        if (!files.contains(relative)) result.problems.push_back("unlisted: " + relative);
    }
    std::sort(result.problems.begin(), result.problems.end());
    result.ok = result.problems.empty();
    return result;
}

// ---------------------------------------------------------------------------
// Data preparation shared by every command
// ---------------------------------------------------------------------------

enum class LatticeVariant { as_configured, nonlinear, linearized };

struct PreparedData {
    bool simulated = false;
    bool linearized = false;
    LatticeModel model;           ///< valid when simulated
    int drive_node = -1;
    TimeSeries input_full;        ///< unit-RMS drive reference, untrimmed
    StateMatrix states_full;      ///< physical readouts, untrimmed
    TimeSeries input_trim;
    StateMatrix states_physical;  ///< trimmed, physical units
    StateMatrix states;           ///< trimmed, unit train-window RMS per column
    Eigen::VectorXd scale;        ///< per-column standardization divisor
    Eigen::Index trim_len = 0;
};

/// Simulate (or ingest) and produce the trimmed analysis window. Mixed
/// sensor units (angles vs. curvatures) would otherwise let one unit family
/// dominate every variance-based analysis, so the trimmed columns are scaled
/// to unit RMS over the training portion; `scale` converts back.
inline PreparedData prepare_data(const ExperimentConfig& cfg,
                                 LatticeVariant variant = LatticeVariant::as_configured) {
    PreparedData p;
    if (cfg.data.active()) {
        if (variant != LatticeVariant::as_configured)
            throw std::invalid_argument(
                "lattice variants require simulation, but config.data supplies external states");
        p.states_full = stage("ingest", [&] {
            return ingest_csv(cfg.data.states_csv, cfg.data.states_meta);
        });
        p.input_full = stage("ingest", [&] {
            return import_timeseries(cfg.data.input_csv, cfg.data.input_meta);
        });
        if (std::abs(p.states_full.sample_rate - p.input_full.sample_rate) >
            1.0e-9 * p.states_full.sample_rate)
            throw std::invalid_argument("ingest: states at " +
                                        format_double(p.states_full.sample_rate) +
                                        " Hz but input at " +
                                        format_double(p.input_full.sample_rate) + " Hz");
        if (p.states_full.samples() != p.input_full.size())
            throw std::invalid_argument(
                "ingest: states have " + std::to_string(p.states_full.samples()) +
                " samples but input has " + std::to_string(p.input_full.size()));
    } else {
        const bool want_linear =
            variant == LatticeVariant::as_configured ? cfg.linearized
                                                     : variant == LatticeVariant::linearized;
        LatticeConfig lattice_cfg = cfg.lattice;
        lattice_cfg.seed = derive_seed(cfg.seed, kSeedLattice);
        p.model = stage("build", [&] { return build_lattice(lattice_cfg); });
        if (want_linear) p.model = linearize(p.model);
        p.linearized = want_linear;
        p.simulated = true;
        p.input_full = stage("input", [&] { return make_multitone(cfg.input); });
        TimeSeries forcing = p.input_full;
        forcing.values *= cfg.drive.gain_n;
        forcing.label = "forcing";
        p.drive_node = cfg.drive.node < 0 ? p.model.default_drive_node() : cfg.drive.node;
        p.states_full = stage("simulate", [&] {
            return simulate(p.model, forcing, p.drive_node, cfg.input.sample_rate_hz,
                            cfg.drive.substeps);
        });
    }

    p.states_physical = stage("trim", [&] {
        return trim_transient(p.states_full, cfg.pipeline.trim_head, cfg.pipeline.trim_tail);
    });
    p.input_trim = trim_transient(p.input_full, cfg.pipeline.trim_head, cfg.pipeline.trim_tail);
    if (p.states_physical.samples() % 2 != 0) {
        // Spectral analysis needs an even window; drop the final sample.
        p.states_physical.values.conservativeResize(p.states_physical.samples() - 1,
                                                    Eigen::NoChange);
        p.input_trim.values.conservativeResize(p.input_trim.size() - 1);
    }
    p.trim_len = p.states_physical.samples();

    const Eigen::Index cut = std::max<Eigen::Index>(
        1, static_cast<Eigen::Index>(
               std::floor(cfg.pipeline.train_fraction * static_cast<double>(p.trim_len))));
    p.states = p.states_physical;
    p.scale.resize(p.states.sensor_count());
    for (Eigen::Index j = 0; j < p.states.sensor_count(); ++j) {
        const double r = rms(p.states.values.col(j).head(cut));
        p.scale[j] = r > 0.0 ? r : 1.0;
        p.states.values.col(j) /= p.scale[j];
    }
    return p;
}

/// Fill in defaults that need the dataset: the bare strain_rate task binds to
/// the mid-row horizontal edge next to the clamped boundary.
inline TaskSpec resolve_task(TaskSpec t, const PreparedData& p) {
    if (t.kind == TaskSpec::Kind::strain_rate) {
        if (t.sensor_id.empty()) {
            const std::string preferred = "edge_x_2_1";
            bool found = false;
            for (const SensorInfo& s : p.states.sensors)
                if (s.id == preferred) {
                    found = true;
                    break;
                }
            if (!found)
                throw std::invalid_argument(
                    "task strain_rate: default sensor '" + preferred +
                    "' is not in this dataset; name one as strain_rate:<sensor_id>");
            t.sensor_id = preferred;
        }
        p.states.sensor_index(t.sensor_id);  // errors on unknown ids
        t.name = "strain_rate:" + t.sensor_id;
    }
    return t;
}

/// Target series over the trimmed window. Input-derived targets are built on
/// the full record first so recurrences warm up inside the discarded head.
inline TimeSeries make_target(const TaskSpec& t, const PreparedData& p,
                              const ExperimentConfig& cfg) {
    TimeSeries full;
    switch (t.kind) {
        case TaskSpec::Kind::relu10:
            full = relu10_target(p.input_full);
            break;
        case TaskSpec::Kind::delay:
            full = delay_target(p.input_full, t.order);
            break;
        case TaskSpec::Kind::narma:
            full = narma_target(p.input_full, t.order);
            break;
        case TaskSpec::Kind::input_force:
            full = p.input_full;
            break;
        case TaskSpec::Kind::strain_rate:
            full = strain_rate_target(p.states_full, t.sensor_id);
            break;
    }
    TimeSeries y = trim_transient(full, cfg.pipeline.trim_head, cfg.pipeline.trim_tail);
    if (y.size() > p.trim_len) y.values.conservativeResize(p.trim_len);
    y.label = t.name;
    return y;
}

namespace detail {

inline TimeSeries column_series(const StateMatrix& x, Eigen::Index j) {
    TimeSeries ts;
    ts.values = x.values.col(j);
    ts.sample_rate = x.sample_rate;
    ts.label = x.sensors[static_cast<std::size_t>(j)].id;
    return ts;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

struct TaskScore {
    std::string name;
    double r2_train = 0.0;
    double r2_test = 0.0;
    double lambda = 0.0;
    Eigen::Index train_samples = 0;
    Eigen::Index test_samples = 0;
};

namespace detail {

inline nlohmann::json dataset_record(const ExperimentConfig& cfg, const PreparedData& p) {
    nlohmann::json d;
    d["samples"] = p.states_full.samples();
    d["trimmed_samples"] = p.trim_len;
    d["sample_rate_hz"] = p.states_full.sample_rate;
    d["sensors"] = p.states_full.sensor_count();
    d["tones_hz"] = cfg.input.frequencies_hz;
    d["source"] = p.simulated ? "simulation" : "external";
    if (p.simulated) {
        d["fundamental_hz"] = p.model.fundamental_hz;
        d["max_mode_hz"] = p.model.max_mode_hz;
        d["linearized"] = p.linearized;
        d["drive_node"] = p.drive_node;
    }
    return d;
}

inline void export_dataset(BundleWriter& writer, const PreparedData& p) {
    export_timeseries(p.input_full, writer.path("input.csv").string(),
                      writer.path("input.meta.json").string());
    writer.add_existing("input.csv");
    writer.add_existing("input.meta.json");
    export_state(p.states_full, writer.path("states.csv").string(),
                 writer.path("states.meta.json").string());
    writer.add_existing("states.csv");
    writer.add_existing("states.meta.json");
    if (p.simulated) writer.write_json("lattice.json", lattice_to_json(p.model));
}

inline std::string overlay_csv(const TimeSeries& target, const TimeSeries& prediction,
                               std::int64_t start_index) {
    std::ostringstream out;
    out << "t_index,target,prediction\n";
    for (Eigen::Index i = 0; i < target.size(); ++i)
        out << start_index + i << ',' << format_double(target.values[i]) << ','
            << format_double(prediction.values[i]) << '\n';
    return out.str();
}

/// Readout weights divided by the column scale act on physical sensor units.
inline ReadoutModel to_physical(ReadoutModel model, const Eigen::VectorXd& scale) {
    for (Eigen::Index j = 0; j < model.weights.size(); ++j) model.weights[j] /= scale[j];
    return model;
}

}  // namespace detail

/// simulate: generate (or re-export) the dataset without training anything.
inline nlohmann::json run_simulate(const ExperimentConfig& cfg, BundleWriter& writer) {
    const PreparedData p = prepare_data(cfg);
    detail::export_dataset(writer, p);
    writer.write_json("config.json", config_to_json(cfg));
    nlohmann::json summary;
    summary["command"] = "simulate";
    summary["seed"] = cfg.seed;
    summary["dataset"] = detail::dataset_record(cfg, p);
    writer.write_json("summary.json", summary);
    writer.finish({{"command", "simulate"},
                   {"seed", cfg.seed},
                   {"config_sha256", config_sha256(cfg)}});
    return summary;
}

/// run: end-to-end pipeline over every configured task.
inline std::vector<TaskScore> run_pipeline(const ExperimentConfig& cfg, BundleWriter& writer) {
    const PreparedData p = prepare_data(cfg);
    detail::export_dataset(writer, p);
    writer.write_json("config.json", config_to_json(cfg));

    std::vector<TaskSpec> specs;
    std::set<std::string> seen;
    for (const std::string& raw : cfg.tasks) {
        TaskSpec t = resolve_task(parse_task(raw), p);
        if (!seen.insert(t.name).second)
            throw std::invalid_argument("pipeline: duplicate task '" + t.name + "'");
        specs.push_back(std::move(t));
    }

    std::vector<TaskScore> scores;
    nlohmann::json task_records = nlohmann::json::array();
    for (const TaskSpec& t : specs) {
        const TimeSeries y = stage("target " + t.name, [&] { return make_target(t, p, cfg); });
        const SplitData split = stage("split", [&] {
            return split_train_test(p.states, y, cfg.pipeline.train_fraction);
        });
        const ReadoutModel model = stage("train " + t.name, [&] {
            return train(split.train_x, split.train_y, cfg.ridge_lambda);
        });
        const TimeSeries pred_train = predict(model, split.train_x);
        const TimeSeries pred_test = predict(model, split.test_x);
        TaskScore score;
        score.name = t.name;
        score.r2_train = r_squared(split.train_y, pred_train);
        score.r2_test = r_squared(split.test_y, pred_test);
        score.lambda = model.lambda;
        score.train_samples = split.train_x.samples();
        score.test_samples = split.test_x.samples();
        scores.push_back(score);

        const std::string dir = "tasks/" + t.slug() + "/";
        writer.write_text(dir + "train_overlay.csv",
                          detail::overlay_csv(split.train_y, pred_train,
                                              split.train_x.start_index));
        writer.write_text(dir + "test_overlay.csv",
                          detail::overlay_csv(split.test_y, pred_test,
                                              split.test_x.start_index));
        writer.write_json(dir + "readout.json",
                          readout_to_json(detail::to_physical(model, p.scale)));
        task_records.push_back({{"name", score.name},
                                {"r2_train", score.r2_train},
                                {"r2_test", score.r2_test},
                                {"lambda", score.lambda},
                                {"train_samples", score.train_samples},
                                {"test_samples", score.test_samples}});
    }

    nlohmann::json summary;
    summary["command"] = "run";
    summary["seed"] = cfg.seed;
    summary["dataset"] = detail::dataset_record(cfg, p);
    summary["tasks"] = task_records;
    writer.write_json("summary.json", summary);
    writer.finish(
        {{"command", "run"}, {"seed", cfg.seed}, {"config_sha256", config_sha256(cfg)}});
    return scores;
}

/// metrics: frequency content, SNR, nonlinearity, memory, correlations, PCA.
inline nlohmann::json run_metrics(const ExperimentConfig& cfg, BundleWriter& writer) {
    const PreparedData p = prepare_data(cfg);
    writer.write_json("config.json", config_to_json(cfg));

    const SpectralBasis basis = stage("spectrum", [&] {
        return dft_basis(p.states, cfg.metrics.variance_capture);
    });
    const FrequencyContent content = frequency_content(basis, cfg.input.frequencies_hz,
                                                       cfg.metrics.guard_bins);
    const Eigen::MatrixXd chi_sensor = frequency_content_per_sensor(basis);
    const Eigen::VectorXd snr_db = snr(basis);
    const PcaResult pca = pca_spectra(basis, cfg.metrics.pca_normalize);

    // Dead channels (edges between clamped nodes) never move. Correlation and
    // memory are undefined on constant series, so those sensors are excluded
    // from the correlation matrix and pinned to nu = 0, M = 0 here.
    const Eigen::Index n_s = p.states.sensor_count();
    std::vector<bool> live(static_cast<std::size_t>(n_s));
    StateMatrix live_states;
    live_states.sample_rate = p.states.sample_rate;
    live_states.start_index = p.states.start_index;
    std::vector<Eigen::Index> live_cols;
    for (Eigen::Index j = 0; j < n_s; ++j) {
        const auto col = p.states.values.col(j);
        live[static_cast<std::size_t>(j)] = (col.array() - col.mean()).abs().maxCoeff() > 0.0;
        if (live[static_cast<std::size_t>(j)]) live_cols.push_back(j);
    }
    live_states.values.resize(p.states.samples(), static_cast<Eigen::Index>(live_cols.size()));
    for (std::size_t c = 0; c < live_cols.size(); ++c) {
        live_states.values.col(static_cast<Eigen::Index>(c)) = p.states.values.col(live_cols[c]);
        live_states.sensors.push_back(p.states.sensors[static_cast<std::size_t>(live_cols[c])]);
    }
    const Eigen::MatrixXd corr =
        stage("correlation", [&] { return correlation_matrix(live_states); });

    std::vector<MemoryResult> memories(static_cast<std::size_t>(n_s));
    std::vector<double> nus(static_cast<std::size_t>(n_s));
    for (Eigen::Index j = 0; j < n_s; ++j) {
        if (!live[static_cast<std::size_t>(j)]) continue;
        memories[static_cast<std::size_t>(j)] =
            memory(detail::column_series(p.states, j), p.input_trim,
                   cfg.metrics.memory_max_delay);
        nus[static_cast<std::size_t>(j)] = nonlinearity(chi_sensor.col(j), content.input_bins);
    }

    auto pc_score = [&](Eigen::Index j, Eigen::Index c) {
        return c < pca.scores.cols() ? pca.scores(j, c) : 0.0;
    };

    nlohmann::json sensors = nlohmann::json::array();
    std::ostringstream csv;
    csv << "id,kind,row,col,snr_db,nu,memory,tau_opt,pc1,pc2,pc3\n";
    for (Eigen::Index j = 0; j < n_s; ++j) {
        const SensorInfo& s = p.states.sensors[static_cast<std::size_t>(j)];
        const MemoryResult& mem = memories[static_cast<std::size_t>(j)];
        sensors.push_back({{"id", s.id},
                           {"kind", to_string(s.kind)},
                           {"row", s.row},
                           {"col", s.col},
                           {"snr_db", snr_db[j]},
                           {"nu", nus[static_cast<std::size_t>(j)]},
                           {"memory", mem.m},
                           {"tau_opt", mem.tau_opt},
                           {"pc_scores", {pc_score(j, 0), pc_score(j, 1), pc_score(j, 2)}}});
        csv << s.id << ',' << to_string(s.kind) << ',' << s.row << ',' << s.col << ','
            << format_double(snr_db[j]) << ',' << format_double(nus[static_cast<std::size_t>(j)])
            << ',' << format_double(mem.m) << ',' << mem.tau_opt << ','
            << format_double(pc_score(j, 0)) << ',' << format_double(pc_score(j, 1)) << ','
            << format_double(pc_score(j, 2)) << '\n';
    }
    writer.write_text("metrics/sensors.csv", csv.str());

    std::ostringstream chi_csv;
    chi_csv << "bin,frequency_hz,chi,input_bin\n";
    const std::set<Eigen::Index> bin_set(content.input_bins.begin(), content.input_bins.end());
    for (Eigen::Index i = 0; i < basis.n; ++i)
        chi_csv << i << ',' << format_double(basis.bin_frequency(i)) << ','
                << format_double(content.chi[i]) << ',' << (bin_set.count(i) ? 1 : 0) << '\n';
    writer.write_text("metrics/chi.csv", chi_csv.str());

    std::ostringstream pca_csv;
    pca_csv << "component,explained_variance\n";
    for (Eigen::Index c = 0; c < pca.explained.size(); ++c)
        pca_csv << c + 1 << ',' << format_double(pca.explained[c]) << '\n';
    writer.write_text("metrics/pca.csv", pca_csv.str());

    std::ostringstream corr_csv;
    corr_csv << "id";
    for (const SensorInfo& s : live_states.sensors) corr_csv << ',' << s.id;
    corr_csv << '\n';
    for (Eigen::Index i = 0; i < corr.rows(); ++i) {
        corr_csv << live_states.sensors[static_cast<std::size_t>(i)].id;
        for (Eigen::Index j = 0; j < corr.cols(); ++j) corr_csv << ',' << format_double(corr(i, j));
        corr_csv << '\n';
    }
    writer.write_text("metrics/correlation.csv", corr_csv.str());

    nlohmann::json report;
    report["command"] = "metrics";
    report["seed"] = cfg.seed;
    report["dataset"] = detail::dataset_record(cfg, p);
    report["sensors"] = sensors;
    report["global"] = {
        {"chi", std::vector<double>(content.chi.data(), content.chi.data() + content.chi.size())},
        {"explained_variance",
         std::vector<double>(pca.explained.data(), pca.explained.data() + pca.explained.size())},
        {"input_bins", content.input_bins},
        {"rank", basis.rank}};
    writer.write_json("metrics/report.json", report);
    writer.finish(
        {{"command", "metrics"}, {"seed", cfg.seed}, {"config_sha256", config_sha256(cfg)}});
    return report;
}

struct SweepRow {
    int k = 0;
    std::string variant;
    std::string task;
    double r2_train = 0.0;
    double r2_test = 0.0;
};

/// sweep: input complexity k against lattice variant, scored per task.
inline std::vector<SweepRow> run_complexity_sweep(const ExperimentConfig& cfg,
                                                  BundleWriter& writer) {
    // The k-tone prefix comes from the default ladder unless the config named
    // an explicit frequency list to use as the ladder instead.
    const std::vector<double> ladder =
        cfg.tone_count > 0 ? default_tone_ladder() : cfg.input.frequencies_hz;
    for (int k : cfg.sweep.k_values)
        if (k < 1 || k > static_cast<int>(ladder.size()))
            throw std::invalid_argument("sweep: k = " + std::to_string(k) +
                                        " outside 1.." + std::to_string(ladder.size()));
    if (cfg.sweep.variants.empty() || cfg.sweep.tasks.empty() || cfg.sweep.k_values.empty())
        throw std::invalid_argument("sweep: k_values, variants, and tasks must be non-empty");

    struct Cell {
        int k = 0;
        std::string variant;
        std::vector<TaskScore> scores;
    };
    std::vector<Cell> cells;
    for (int k : cfg.sweep.k_values)
        for (const std::string& variant : cfg.sweep.variants) cells.push_back({k, variant, {}});

    parallel_for(cells.size(), cfg.threads, [&](std::size_t idx) {
        Cell& cell = cells[idx];
        ExperimentConfig cell_cfg = cfg;
        cell_cfg.tone_count = cell.k;
        cell_cfg.input.frequencies_hz = {ladder.begin(), ladder.begin() + cell.k};
        const LatticeVariant variant = cell.variant == "linearized" ? LatticeVariant::linearized
                                                                   : LatticeVariant::nonlinear;
        const PreparedData p = stage("sweep k=" + std::to_string(cell.k) + " " + cell.variant,
                                     [&] { return prepare_data(cell_cfg, variant); });
        for (const std::string& raw : cfg.sweep.tasks) {
            const TaskSpec t = resolve_task(parse_task(raw), p);
            const TimeSeries y = make_target(t, p, cell_cfg);
            const SplitData split = split_train_test(p.states, y, cfg.pipeline.train_fraction);
            const ReadoutModel model = train(split.train_x, split.train_y, cfg.ridge_lambda);
            TaskScore score;
            score.name = t.name;
            score.r2_train = r_squared(split.train_y, predict(model, split.train_x));
            score.r2_test = r_squared(split.test_y, predict(model, split.test_x));
            cell.scores.push_back(score);
        }
    });

    std::vector<SweepRow> rows;
    std::ostringstream csv;
    csv << "k,variant,task,r2_train,r2_test\n";
    nlohmann::json records = nlohmann::json::array();
    for (const Cell& cell : cells)
        for (const TaskScore& score : cell.scores) {
            rows.push_back({cell.k, cell.variant, score.name, score.r2_train, score.r2_test});
            csv << cell.k << ',' << cell.variant << ',' << score.name << ','
                << format_double(score.r2_train) << ',' << format_double(score.r2_test) << '\n';
            records.push_back({{"k", cell.k},
                               {"variant", cell.variant},
                               {"task", score.name},
                               {"r2_train", score.r2_train},
                               {"r2_test", score.r2_test}});
        }
    writer.write_json("config.json", config_to_json(cfg));
    writer.write_text("sweep.csv", csv.str());
    writer.write_json("sweep.json", {{"command", "sweep"}, {"rows", records}});
    writer.finish(
        {{"command", "sweep"}, {"seed", cfg.seed}, {"config_sha256", config_sha256(cfg)}});
    return rows;
}

/// select: greedy ranking, per-size curve, and the random baseline.
inline nlohmann::json run_selection(const ExperimentConfig& cfg, BundleWriter& writer) {
    const PreparedData p = prepare_data(cfg);
    writer.write_json("config.json", config_to_json(cfg));

    const TaskSpec t = resolve_task(parse_task(cfg.selection.task), p);
    const TimeSeries y = stage("target " + t.name, [&] { return make_target(t, p, cfg); });
    const SplitData split = stage("split", [&] {
        return split_train_test(p.states, y, cfg.pipeline.train_fraction);
    });

    SelectionOptions options;
    options.ridge_lambda = cfg.ridge_lambda;
    options.residual_tol = cfg.selection.residual_tol;
    options.variance_capture = cfg.metrics.variance_capture;
    const SelectionResult result = stage("greedy", [&] { return greedy_select(split, options); });

    const Eigen::Index n_s = p.states.sensor_count();
    std::vector<Eigen::Index> sizes = cfg.selection.baseline_sizes;
    if (sizes.empty())
        for (Eigen::Index s = 1; s <= n_s; ++s) sizes.push_back(s);
    const std::uint64_t baseline_seed = derive_seed(cfg.seed, kSeedBaseline);
    std::vector<BaselineSummary> baselines;
    std::map<Eigen::Index, BaselineSummary> by_size;
    for (Eigen::Index size : sizes) {
        const Eigen::VectorXd sample = stage("baseline", [&] {
            return random_baseline(split, size, cfg.selection.baseline_trials,
                                   derive_seed(baseline_seed, static_cast<std::uint64_t>(size)),
                                   cfg.ridge_lambda, cfg.threads);
        });
        if (sample.size() == 0) continue;
        const BaselineSummary summary = summarize_baseline(size, sample);
        baselines.push_back(summary);
        by_size[size] = summary;
    }

    std::ostringstream csv;
    csv << "size,greedy_r2,baseline_min,baseline_median,baseline_max\n";
    for (Eigen::Index size = 1; size <= n_s; ++size) {
        csv << size << ',' << format_double(result.r2_by_size[size - 1]) << ',';
        const auto it = by_size.find(size);
        if (it != by_size.end())
            csv << format_double(it->second.r2_min) << ',' << format_double(it->second.r2_median)
                << ',' << format_double(it->second.r2_max);
        else
            csv << ",,";
        csv << '\n';
    }
    writer.write_text("selection/curve.csv", csv.str());

    nlohmann::json report = selection_report(result, baselines);
    report["command"] = "select";
    report["seed"] = cfg.seed;
    report["task"] = t.name;
    report["baseline_trials"] = cfg.selection.baseline_trials;
    nlohmann::json best = nlohmann::json::array();
    for (Eigen::Index k = 0; k < result.best_size; ++k) {
        const SensorInfo& s =
            p.states.sensors[static_cast<std::size_t>(result.order[static_cast<std::size_t>(k)])];
        best.push_back({{"id", s.id}, {"kind", to_string(s.kind)}, {"row", s.row},
                        {"col", s.col}});
    }
    report["best_sensors"] = best;
    report["r2_best"] = result.r2_by_size[result.best_size - 1];
    report["r2_full"] = result.r2_by_size[n_s - 1];
    writer.write_json("selection/report.json", report);
    writer.finish(
        {{"command", "select"}, {"seed", cfg.seed}, {"config_sha256", config_sha256(cfg)}});
    return report;
}

namespace detail {

/// Per-bin energy fractions of a single mean-centered series.
inline Eigen::VectorXd series_chi(const SpectralBasis& b, const TimeSeries& y) {
    Eigen::VectorXd centered = y.values;
    centered.array() -= centered.mean();
    const Eigen::VectorXd q = spectral_transform(b, centered);
    Eigen::VectorXd chi(b.n);
    for (Eigen::Index i = 0; i < b.n; ++i)
        chi[i] = q[i] * q[i] + q[b.n + i] * q[b.n + i];
    return chi;
}

/// SNR of a sensor's rate of change: both the retained-subspace signal and
/// the residual are differentiated before comparing powers.
inline double derivative_snr(const SpectralBasis& b, const Eigen::MatrixXd& values,
                             Eigen::Index j, double sample_rate) {
    const Eigen::VectorXd sig_f = b.uk * (b.uk.transpose() * b.xf.col(j));
    const Eigen::VectorXd sig = b.basis * sig_f;
    const Eigen::VectorXd noise = values.col(j) - sig;
    auto differentiate = [sample_rate](const Eigen::VectorXd& x) {
        const Eigen::Index n = x.size();
        Eigen::VectorXd d(n);
        d[0] = (x[1] - x[0]) * sample_rate;
        for (Eigen::Index t = 1; t + 1 < n; ++t)
            d[t] = (x[t + 1] - x[t - 1]) * sample_rate / 2.0;
        d[n - 1] = (x[n - 1] - x[n - 2]) * sample_rate;
        return d;
    };
    const double ps = differentiate(sig).squaredNorm();
    const double pn = differentiate(noise).squaredNorm();
    if (pn <= 1.0e-10 * ps) return 100.0;
    return std::clamp(10.0 * std::log10(ps / pn), -100.0, 100.0);
}

}  // namespace detail

/// atlas: place every sensor and every task in nonlinearity-memory space.
/// Without an explicit input section the atlas runs on a four-tone drive.
inline nlohmann::json run_task_atlas(const ExperimentConfig& base_cfg, BundleWriter& writer) {
    ExperimentConfig cfg = base_cfg;
    if (!cfg.input_explicit && !cfg.data.active()) {
        cfg.tone_count = 4;
        cfg.input.frequencies_hz = detail::ladder_prefix(4);
        cfg.input_explicit = true;
    }
    const PreparedData p = prepare_data(cfg);
    writer.write_json("config.json", config_to_json(cfg));

    const SpectralBasis basis = stage("spectrum", [&] {
        return dft_basis(p.states, cfg.metrics.variance_capture);
    });
    const std::vector<Eigen::Index> bins =
        input_bin_set(basis.n, basis.sample_rate, cfg.input.frequencies_hz,
                      cfg.metrics.guard_bins);
    const Eigen::MatrixXd chi_sensor = frequency_content_per_sensor(basis);
    const Eigen::VectorXd snr_db = snr(basis);

    // Dead channels (edges between clamped nodes) never move; nu and memory
    // are undefined there and pinned to zero, and no rate task is formed.
    const Eigen::Index n_s = p.states.sensor_count();
    std::vector<bool> live(static_cast<std::size_t>(n_s));
    for (Eigen::Index j = 0; j < n_s; ++j) {
        const auto col = p.states.values.col(j);
        live[static_cast<std::size_t>(j)] = (col.array() - col.mean()).abs().maxCoeff() > 0.0;
    }
    nlohmann::json sensor_records = nlohmann::json::array();
    std::ostringstream sensors_csv;
    sensors_csv << "id,kind,row,col,nu,memory,tau_opt,snr_db,high_snr\n";
    for (Eigen::Index j = 0; j < n_s; ++j) {
        const SensorInfo& s = p.states.sensors[static_cast<std::size_t>(j)];
        const bool alive = live[static_cast<std::size_t>(j)];
        const double nu = alive ? nonlinearity(chi_sensor.col(j), bins) : 0.0;
        const MemoryResult mem = alive ? memory(detail::column_series(p.states, j), p.input_trim,
                                                cfg.metrics.memory_max_delay)
                                       : MemoryResult{};
        const bool high = snr_db[j] >= cfg.metrics.high_snr_db;
        sensor_records.push_back({{"id", s.id},
                                  {"kind", to_string(s.kind)},
                                  {"row", s.row},
                                  {"col", s.col},
                                  {"nu", nu},
                                  {"memory", mem.m},
                                  {"tau_opt", mem.tau_opt},
                                  {"snr_db", snr_db[j]},
                                  {"high_snr", high}});
        sensors_csv << s.id << ',' << to_string(s.kind) << ',' << s.row << ',' << s.col << ','
                    << format_double(nu) << ',' << format_double(mem.m) << ',' << mem.tau_opt
                    << ',' << format_double(snr_db[j]) << ',' << (high ? 1 : 0) << '\n';
    }
    writer.write_text("atlas/sensors.csv", sensors_csv.str());

    // Fixed task suite: the input-function tasks plus a rate task per live
    // sensor.
    std::vector<TaskSpec> suite;
    for (const char* name : {"relu10", "delay2", "delay5", "delay10", "narma5", "narma10",
                             "input_force"})
        suite.push_back(parse_task(name));
    for (Eigen::Index j = 0; j < n_s; ++j)
        if (live[static_cast<std::size_t>(j)])
            suite.push_back(
                parse_task("strain_rate:" + p.states.sensors[static_cast<std::size_t>(j)].id));

    struct TaskRecord {
        std::string name;
        double nu = 0.0;
        MemoryResult mem;
        double r2_test = 0.0;
        bool has_snr = false;
        double snr_db = 0.0;
    };
    std::vector<TaskRecord> records(suite.size());
    parallel_for(suite.size(), cfg.threads, [&](std::size_t idx) {
        const TaskSpec t = resolve_task(suite[idx], p);
        TaskRecord& rec = records[idx];
        rec.name = t.name;
        const TimeSeries y = stage("target " + t.name, [&] { return make_target(t, p, cfg); });
        const Eigen::VectorXd chi = detail::series_chi(basis, y);
        rec.nu = nonlinearity(chi, bins);
        rec.mem = memory(y, p.input_trim, cfg.metrics.memory_max_delay);
        const SplitData split = split_train_test(p.states, y, cfg.pipeline.train_fraction);
        const ReadoutModel model = stage("train " + t.name, [&] {
            return train(split.train_x, split.train_y, cfg.ridge_lambda);
        });
        rec.r2_test = r_squared(split.test_y, predict(model, split.test_x));
        if (t.kind == TaskSpec::Kind::strain_rate) {
            rec.has_snr = true;
            rec.snr_db = detail::derivative_snr(basis, p.states.values,
                                                p.states.sensor_index(t.sensor_id),
                                                p.states.sample_rate);
        }
    });

    nlohmann::json task_records = nlohmann::json::array();
    std::ostringstream tasks_csv;
    tasks_csv << "task,nu,memory,tau_opt,r2_test,snr_db,high_snr\n";
    tasks_csv << "input_signal,0,0,0,,,\n";
    for (const TaskRecord& rec : records) {
        nlohmann::json row = {{"task", rec.name},
                              {"nu", rec.nu},
                              {"memory", rec.mem.m},
                              {"tau_opt", rec.mem.tau_opt},
                              {"r2_test", rec.r2_test}};
        tasks_csv << rec.name << ',' << format_double(rec.nu) << ',' << format_double(rec.mem.m)
                  << ',' << rec.mem.tau_opt << ',' << format_double(rec.r2_test) << ',';
        if (rec.has_snr) {
            row["snr_db"] = rec.snr_db;
            row["high_snr"] = rec.snr_db >= cfg.metrics.high_snr_db;
            tasks_csv << format_double(rec.snr_db) << ','
                      << (rec.snr_db >= cfg.metrics.high_snr_db ? 1 : 0);
        } else {
            row["snr_db"] = nullptr;
            row["high_snr"] = nullptr;
            tasks_csv << ',';
        }
        tasks_csv << '\n';
        task_records.push_back(row);
    }
    writer.write_text("atlas/tasks.csv", tasks_csv.str());

    nlohmann::json report;
    report["command"] = "atlas";
    report["seed"] = cfg.seed;
    report["dataset"] = detail::dataset_record(cfg, p);
    // The drive itself is the reference point of the map: zero nonlinearity,
    // zero memory, by definition.
    report["input"] = {{"nu", 0.0}, {"memory", 0.0}};
    report["sensors"] = sensor_records;
    report["tasks"] = task_records;
    writer.write_json("atlas/report.json", report);
    writer.finish(
        {{"command", "atlas"}, {"seed", cfg.seed}, {"config_sha256", config_sha256(cfg)}});
    return report;
}

}  // namespace metares
