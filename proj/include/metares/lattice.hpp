#pragma once

#include <cmath>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "metares/rng.hpp"
#include "metares/types.hpp"

namespace metares {

/// Bilinear edge moment law. Rotation is measured in the edge's own frame
/// (theta' = orientation * theta); the soft branch applies up to the gap
/// angle, beyond it the slope stiffens by slope_ratio.
struct EdgeLaw {
    double k_soft = 0.0;      ///< soft-branch stiffness, N m / rad
    double slope_ratio = 10.0;  ///< stiff/soft slope ratio, >= 1
    double gap_rad = 0.0;     ///< gap closing angle, rad
};

inline double edge_moment(const EdgeLaw& law, int orientation, double theta) {
    const double tp = orientation * theta;
    double m;
    if (tp <= law.gap_rad)
        m = law.k_soft * tp;
    else
        m = law.k_soft * law.gap_rad + law.slope_ratio * law.k_soft * (tp - law.gap_rad);
    return orientation * m;
}

/// Elastic energy stored in one edge (integral of the moment law).
inline double edge_energy(const EdgeLaw& law, int orientation, double theta) {
    const double tp = orientation * theta;
    if (tp <= law.gap_rad) return 0.5 * law.k_soft * tp * tp;
    const double ex = tp - law.gap_rad;
    return 0.5 * law.k_soft * law.gap_rad * law.gap_rad + law.k_soft * law.gap_rad * ex +
           0.5 * law.slope_ratio * law.k_soft * ex * ex;
}

struct Edge {
    int node_i = 0;       ///< lower/left node
    int node_j = 0;       ///< upper/right node
    int orientation = 1;  ///< +1 or -1, fixed at build time
    bool horizontal = true;
    int row = 0;  ///< grid position of node_i
    int col = 0;
};

struct LatticeConfig {
    int rows = 5;
    int cols = 5;
    double mass_kg = 1.0e-3;
    double spacing_m = 0.02;
    double slope_ratio = 10.0;
    double gap_deg = 2.0;
    /// Soft-branch stiffness; <= 0 means "tune so the fundamental mode sits
    /// at target_fundamental_hz".
    double k_soft = 0.0;
    double target_fundamental_hz = 10.0;
    /// Modal damping ratio realised at the fundamental frequency, split
    /// evenly between the mass and stiffness Rayleigh terms.
    double damping_ratio = 0.02;
    std::uint64_t seed = 1;
};

/// Point-mass grid with bilinear bending edges, clamped along the first and
/// last columns. Nodes carry one out-of-plane displacement each.
struct LatticeModel {
    int rows = 0;
    int cols = 0;
    double mass_kg = 0.0;
    double spacing_m = 0.0;
    EdgeLaw law;
    double alpha_m = 0.0;  ///< Rayleigh mass-proportional coefficient, 1/s
    double beta_k = 0.0;   ///< Rayleigh stiffness-proportional coefficient, s
    std::vector<Edge> edges;
    std::vector<bool> clamped;
    std::uint64_t seed = 0;
    double fundamental_hz = 0.0;   ///< lowest soft-branch modal frequency
    double max_mode_hz = 0.0;      ///< highest soft-branch modal frequency

    int node(int r, int c) const { return r * cols + c; }
    int node_count() const { return rows * cols; }
    int free_count() const {
        int n = 0;
        for (bool c : clamped)
            if (!c) ++n;
        return n;
    }
    int default_drive_node() const { return node(rows / 2, cols / 2); }
};

struct LatticeState {
    Eigen::VectorXd w;  ///< displacements, m
    Eigen::VectorXd v;  ///< velocities, m/s
};

/// Node displacement/velocity history sampled at output times.
struct NodeTrajectory {
    Eigen::MatrixXd w;  ///< rows: samples, cols: nodes
    Eigen::MatrixXd v;
    double sample_rate = 0.0;
};

/// Soft-branch modal frequencies of the free nodes, ascending (Hz).
inline Eigen::VectorXd linearized_frequencies(const LatticeModel& model) {
    std::vector<int> free_index(model.node_count(), -1);
    int nf = 0;
    for (int i = 0; i < model.node_count(); ++i)
        if (!model.clamped[i]) free_index[i] = nf++;
    if (nf == 0) throw std::invalid_argument("linearized_frequencies: every node is clamped");
    Eigen::MatrixXd lap = Eigen::MatrixXd::Zero(nf, nf);
    for (const Edge& e : model.edges) {
        const int fi = free_index[e.node_i];
        const int fj = free_index[e.node_j];
        if (fi >= 0) lap(fi, fi) += 1.0;
        if (fj >= 0) lap(fj, fj) += 1.0;
        if (fi >= 0 && fj >= 0) {
            lap(fi, fj) -= 1.0;
            lap(fj, fi) -= 1.0;
        }
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(lap);
    const double scale = model.law.k_soft / (model.mass_kg * model.spacing_m * model.spacing_m);
    Eigen::VectorXd freqs(nf);
    for (int i = 0; i < nf; ++i) {
        const double mu = std::max(solver.eigenvalues()[i], 0.0);
        freqs[i] = std::sqrt(scale * mu) / (2.0 * M_PI);
    }
    return freqs;
}

inline LatticeModel build_lattice(const LatticeConfig& cfg) {
    if (cfg.rows < 1 || cfg.cols < 3)
        throw std::invalid_argument("build_lattice: need rows >= 1 and cols >= 3, got " +
                                    std::to_string(cfg.rows) + "x" + std::to_string(cfg.cols));
    if (cfg.mass_kg <= 0.0 || cfg.spacing_m <= 0.0)
        throw std::invalid_argument("build_lattice: mass and spacing must be positive");
    if (cfg.slope_ratio < 1.0)
        throw std::invalid_argument("build_lattice: slope_ratio must be >= 1");
    if (cfg.gap_deg < 0.0)
        throw std::invalid_argument("build_lattice: gap angle must be >= 0");
    if (cfg.damping_ratio < 0.0)
        throw std::invalid_argument("build_lattice: damping ratio must be >= 0");

    LatticeModel m;
    m.rows = cfg.rows;
    m.cols = cfg.cols;
    m.mass_kg = cfg.mass_kg;
    m.spacing_m = cfg.spacing_m;
    m.seed = cfg.seed;
    m.law.slope_ratio = cfg.slope_ratio;
    m.law.gap_rad = cfg.gap_deg * M_PI / 180.0;

    m.clamped.assign(static_cast<std::size_t>(m.node_count()), false);
    for (int r = 0; r < m.rows; ++r) {
        m.clamped[static_cast<std::size_t>(m.node(r, 0))] = true;
        m.clamped[static_cast<std::size_t>(m.node(r, m.cols - 1))] = true;
    }

    std::mt19937_64 gen(cfg.seed);
    auto draw_sign = [&gen]() { return (gen() & 1ull) ? 1 : -1; };
    for (int r = 0; r < m.rows; ++r)
        for (int c = 0; c + 1 < m.cols; ++c)
            m.edges.push_back({m.node(r, c), m.node(r, c + 1), draw_sign(), true, r, c});
    for (int r = 0; r + 1 < m.rows; ++r)
        for (int c = 0; c < m.cols; ++c)
            m.edges.push_back({m.node(r, c), m.node(r + 1, c), draw_sign(), false, r, c});

    // Stiffness: either as given, or scaled so the softest mode lands on the
    // requested fundamental (modal frequency grows as sqrt(k_soft)).
    m.law.k_soft = cfg.k_soft > 0.0 ? cfg.k_soft : 1.0;
    Eigen::VectorXd freqs = linearized_frequencies(m);
    if (freqs[0] <= 0.0)
        throw std::runtime_error("build_lattice: lattice has a zero-frequency mode");
    if (cfg.k_soft <= 0.0) {
        if (cfg.target_fundamental_hz <= 0.0)
            throw std::invalid_argument("build_lattice: target fundamental must be positive");
        const double ratio = cfg.target_fundamental_hz / freqs[0];
        m.law.k_soft *= ratio * ratio;
        freqs *= ratio;
    }
    m.fundamental_hz = freqs[0];
    m.max_mode_hz = freqs[freqs.size() - 1];

    const double omega1 = 2.0 * M_PI * m.fundamental_hz;
    m.alpha_m = cfg.damping_ratio * omega1;
    m.beta_k = cfg.damping_ratio / omega1;
    return m;
}

/// Same lattice with the bilinear law flattened to its soft branch
/// (slope_ratio = 1, zero gap).
inline LatticeModel linearize(LatticeModel m) {
    m.law.slope_ratio = 1.0;
    m.law.gap_rad = 0.0;
    return m;
}

/// Internal substep count per output sample so the integrator resolves the
/// stiffest branch: internal rate >= 20 * sqrt(slope_ratio) * f_max.
inline int default_substeps(const LatticeModel& model, double output_rate) {
    const double needed = 20.0 * std::sqrt(model.law.slope_ratio) * model.max_mode_hz;
    return std::max(1, static_cast<int>(std::ceil(needed / output_rate)));
}

/// Semi-implicit Euler integration of m w'' = F_elastic + F_damping + F_ext.
/// The forcing acts at drive_node and is linearly interpolated between its
/// samples; states are recorded at the forcing sample times starting with the
/// initial state. substeps = 0 picks default_substeps().
inline NodeTrajectory integrate(const LatticeModel& model, const TimeSeries& forcing,
                                int drive_node, double output_rate, int substeps = 0,
                                const LatticeState* initial = nullptr) {
    if (forcing.sample_rate <= 0.0 || output_rate <= 0.0)
        throw std::invalid_argument("integrate: sample rates must be positive");
    if (std::abs(forcing.sample_rate - output_rate) > 1e-9 * output_rate)
        throw std::invalid_argument("integrate: forcing rate " + format_double(forcing.sample_rate) +
                                    " Hz does not match output rate " + format_double(output_rate) +
                                    " Hz");
    const int nodes = model.node_count();
    if (drive_node < 0 || drive_node >= nodes)
        throw std::invalid_argument("integrate: drive node " + std::to_string(drive_node) +
                                    " outside lattice");
    if (model.clamped[static_cast<std::size_t>(drive_node)])
        throw std::invalid_argument("integrate: drive node " + std::to_string(drive_node) +
                                    " is clamped");
    const Eigen::Index samples = forcing.size();
    if (samples < 1) throw std::invalid_argument("integrate: empty forcing");
    if (substeps <= 0) substeps = default_substeps(model, output_rate);

    Eigen::VectorXd w = Eigen::VectorXd::Zero(nodes);
    Eigen::VectorXd v = Eigen::VectorXd::Zero(nodes);
    if (initial != nullptr) {
        if (initial->w.size() != nodes || initial->v.size() != nodes)
            throw std::invalid_argument("integrate: initial state size mismatch");
        w = initial->w;
        v = initial->v;
        for (int i = 0; i < nodes; ++i)
            if (model.clamped[static_cast<std::size_t>(i)] && (w[i] != 0.0 || v[i] != 0.0))
                throw std::invalid_argument("integrate: initial state moves clamped node " +
                                            std::to_string(i));
    }

    NodeTrajectory traj;
    traj.sample_rate = output_rate;
    traj.w.resize(samples, nodes);
    traj.v.resize(samples, nodes);
    traj.w.row(0) = w.transpose();
    traj.v.row(0) = v.transpose();

    const double dt = 1.0 / (output_rate * substeps);
    const double inv_l = 1.0 / model.spacing_m;
    const double blowup = 1.0e3 * model.spacing_m;
    Eigen::VectorXd force(nodes);

    for (Eigen::Index k = 0; k + 1 < samples; ++k) {
        const double f0 = forcing.values[k];
        const double f1 = forcing.values[k + 1];
        for (int s = 0; s < substeps; ++s) {
            const double frac = static_cast<double>(s) / substeps;
            const double fext = f0 + (f1 - f0) * frac;

            force.setZero();
            for (const Edge& e : model.edges) {
                const double theta = (w[e.node_j] - w[e.node_i]) * inv_l;
                const double theta_dot = (v[e.node_j] - v[e.node_i]) * inv_l;
                const double moment = edge_moment(model.law, e.orientation, theta) +
                                      model.beta_k * model.law.k_soft * theta_dot;
                const double f = moment * inv_l;
                force[e.node_i] += f;
                force[e.node_j] -= f;
            }
            force -= model.alpha_m * model.mass_kg * v;
            force[drive_node] += fext;

            for (int i = 0; i < nodes; ++i) {
                if (model.clamped[static_cast<std::size_t>(i)]) continue;
                v[i] += dt * force[i] / model.mass_kg;
                w[i] += dt * v[i];
            }
        }
        if (w.cwiseAbs().maxCoeff() > blowup)
            throw std::runtime_error(
                "integrate: displacement exceeded 1000 x spacing at output sample " +
                std::to_string(k + 1) + "; reduce the step (substeps = " +
                std::to_string(substeps) + ") or the forcing amplitude");
        traj.w.row(k + 1) = w.transpose();
        traj.v.row(k + 1) = v.transpose();
    }
    return traj;
}

/// Kinetic plus elastic energy of one sampled state.
inline double mechanical_energy(const LatticeModel& model, const Eigen::VectorXd& w,
                                const Eigen::VectorXd& v) {
    double e = 0.5 * model.mass_kg * v.squaredNorm();
    const double inv_l = 1.0 / model.spacing_m;
    for (const Edge& edge : model.edges)
        e += edge_energy(model.law, edge.orientation, (w[edge.node_j] - w[edge.node_i]) * inv_l);
    return e;
}

/// Readout channels derived from a node trajectory: every edge rotation
/// angle plus discrete curvature proxies at interior nodes.
///   edge angle  theta_e = (w_j - w_i) / L
///   kxx(r, c)   = (w(r, c-1) - 2 w(r, c) + w(r, c+1)) / L^2, 0 < c < cols-1
///   kyy(r, c)   = (w(r-1, c) - 2 w(r, c) + w(r+1, c)) / L^2, 0 < r < rows-1
inline StateMatrix extract_readouts(const LatticeModel& model, const NodeTrajectory& traj) {
    if (traj.w.cols() != model.node_count())
        throw std::invalid_argument("extract_readouts: trajectory has " +
                                    std::to_string(traj.w.cols()) + " nodes, lattice has " +
                                    std::to_string(model.node_count()));
    StateMatrix x;
    x.sample_rate = traj.sample_rate;
    const Eigen::Index t_n = traj.w.rows();
    const double inv_l = 1.0 / model.spacing_m;
    const double inv_l2 = inv_l * inv_l;

    std::vector<SensorInfo> sensors;
    for (const Edge& e : model.edges) {
        SensorInfo s;
        s.kind = e.horizontal ? SensorKind::edge_x : SensorKind::edge_y;
        s.row = e.row;
        s.col = e.col;
        s.id = std::string(to_string(s.kind)) + "_" + std::to_string(e.row) + "_" +
               std::to_string(e.col);
        sensors.push_back(s);
    }
    for (int r = 0; r < model.rows; ++r)
        for (int c = 1; c + 1 < model.cols; ++c)
            sensors.push_back({"kxx_" + std::to_string(r) + "_" + std::to_string(c),
                               SensorKind::kxx, r, c});
    for (int r = 1; r + 1 < model.rows; ++r)
        for (int c = 0; c < model.cols; ++c)
            sensors.push_back({"kyy_" + std::to_string(r) + "_" + std::to_string(c),
                               SensorKind::kyy, r, c});

    x.sensors = sensors;
    x.values.resize(t_n, static_cast<Eigen::Index>(sensors.size()));
    Eigen::Index col = 0;
    for (const Edge& e : model.edges) {
        x.values.col(col++) = (traj.w.col(e.node_j) - traj.w.col(e.node_i)) * inv_l;
    }
    for (int r = 0; r < model.rows; ++r)
        for (int c = 1; c + 1 < model.cols; ++c)
            x.values.col(col++) = (traj.w.col(model.node(r, c - 1)) -
                                   2.0 * traj.w.col(model.node(r, c)) +
                                   traj.w.col(model.node(r, c + 1))) *
                                  inv_l2;
    for (int r = 1; r + 1 < model.rows; ++r)
        for (int c = 0; c < model.cols; ++c)
            x.values.col(col++) = (traj.w.col(model.node(r - 1, c)) -
                                   2.0 * traj.w.col(model.node(r, c)) +
                                   traj.w.col(model.node(r + 1, c))) *
                                  inv_l2;
    check_state_matrix(x, "extract_readouts");
    return x;
}

/// Convenience wrapper: integrate and extract readouts in one call.
inline StateMatrix simulate(const LatticeModel& model, const TimeSeries& forcing, int drive_node,
                            double output_rate, int substeps = 0,
                            const LatticeState* initial = nullptr) {
    return extract_readouts(model, integrate(model, forcing, drive_node, output_rate, substeps,
                                             initial));
}

/// Self-describing model document: grid, edge law, damping, and the explicit
/// per-edge orientation list in build order.
inline nlohmann::json lattice_to_json(const LatticeModel& m) {
    std::vector<int> orientations;
    orientations.reserve(m.edges.size());
    for (const Edge& e : m.edges) orientations.push_back(e.orientation);
    return {{"rows", m.rows},
            {"cols", m.cols},
            {"mass_kg", m.mass_kg},
            {"spacing_m", m.spacing_m},
            {"k_soft", m.law.k_soft},
            {"slope_ratio", m.law.slope_ratio},
            {"gap_rad", m.law.gap_rad},
            {"alpha_m", m.alpha_m},
            {"beta_k", m.beta_k},
            {"seed", m.seed},
            {"fundamental_hz", m.fundamental_hz},
            {"max_mode_hz", m.max_mode_hz},
            {"orientations", orientations}};
}

inline LatticeModel lattice_from_json(const nlohmann::json& j) {
    LatticeConfig cfg;
    cfg.rows = j.at("rows").get<int>();
    cfg.cols = j.at("cols").get<int>();
    cfg.mass_kg = j.at("mass_kg").get<double>();
    cfg.spacing_m = j.at("spacing_m").get<double>();
    cfg.slope_ratio = j.at("slope_ratio").get<double>();
    cfg.k_soft = j.at("k_soft").get<double>();
    cfg.seed = j.at("seed").get<std::uint64_t>();
    LatticeModel m = build_lattice(cfg);
    // Stored values win over anything recomputed, so files round-trip exactly.
    m.law.k_soft = j.at("k_soft").get<double>();
    m.law.slope_ratio = j.at("slope_ratio").get<double>();
    m.law.gap_rad = j.at("gap_rad").get<double>();
    m.alpha_m = j.at("alpha_m").get<double>();
    m.beta_k = j.at("beta_k").get<double>();
    m.fundamental_hz = j.at("fundamental_hz").get<double>();
    m.max_mode_hz = j.at("max_mode_hz").get<double>();
    const nlohmann::json& orientations = j.at("orientations");
    if (orientations.size() != m.edges.size())
        throw std::invalid_argument("lattice_from_json: " + std::to_string(orientations.size()) +
                                    " orientations for " + std::to_string(m.edges.size()) +
                                    " edges");
    for (std::size_t k = 0; k < m.edges.size(); ++k) {
        const int o = orientations[k].get<int>();
        if (o != 1 && o != -1)
            throw std::invalid_argument("lattice_from_json: orientation " + std::to_string(o) +
                                        " at edge " + std::to_string(k) + " is not +1/-1");
        m.edges[k].orientation = o;
    }
    return m;
}

}  // namespace metares
