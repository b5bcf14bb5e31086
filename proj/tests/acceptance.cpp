// Acceptance gate: nine end-to-end criteria, one verdict line each.
// Exit status is 0 only when every criterion holds.

#include <metares/experiment.hpp>

#include <chrono>
#include <cstdarg>
#include <cstdio>
#include <filesystem>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

using namespace metares;

namespace {

// --- tolerances ------------------------------------------------------------
constexpr double kChiTol = 1e-9;          // closed-form content values
constexpr double kMemoryTol = 1e-9;       // delay-recovery sharpness
constexpr double kSnrTolDb = 0.01;        // 100:1 power split
constexpr double kR2RefTol = 1e-15;       // 0.2 reference point, one-ulp headroom
constexpr double kOracleBudgetS = 10.0;
constexpr double kWeightRelTol = 1e-8;    // vs. SVD pseudo-inverse
constexpr double kR2MatchTol = 1e-10;
constexpr double kPhaseMeanTol = 0.02;    // mean probe R^2 vs. chi
constexpr double kMarginR2 = 0.05;        // nonlinear over linearized
constexpr double kLinearNuMax = 0.05;
constexpr double kHarmonicNuMin = 0.10;
constexpr int kHarmonicSensorsMin = 5;
constexpr double kDelayR2Min = 0.8;
constexpr double kAlignmentMin = 0.8;
constexpr double kOrderedFractionMin = 0.9;
constexpr double kEnergySlack = 1.0 + 1e-12;
constexpr double kDtDriftMax = 0.01;      // step-halving RMS change

std::string strf(const char* fmt, ...) {
    char buf[1024];
    va_list args;
    va_start(args, fmt);
    std::vsnprintf(buf, sizeof buf, fmt, args);
    va_end(args);
    return buf;
}

struct Verdict {
    bool pass = false;
    std::string detail;
};

ExperimentConfig default_config(int tones) {
    ExperimentConfig cfg;
    cfg.input.frequencies_hz = detail::ladder_prefix(tones);
    return cfg;
}

Eigen::VectorXd bin_cosine(Eigen::Index t_n, double cycles, double phase) {
    Eigen::VectorXd v(t_n);
    for (Eigen::Index t = 0; t < t_n; ++t)
        v[t] = std::cos(2.0 * M_PI * cycles * static_cast<double>(t) /
                            static_cast<double>(t_n) +
                        phase);
    return v;
}

StateMatrix live_submatrix(const StateMatrix& x) {
    StateMatrix live;
    live.sample_rate = x.sample_rate;
    live.start_index = x.start_index;
    std::vector<Eigen::Index> keep;
    for (Eigen::Index j = 0; j < x.sensor_count(); ++j) {
        const auto& col = x.values.col(j);
        if ((col.array() - col.mean()).abs().maxCoeff() > 0.0) keep.push_back(j);
    }
    live.values.resize(x.samples(), static_cast<Eigen::Index>(keep.size()));
    for (std::size_t j = 0; j < keep.size(); ++j) {
        live.values.col(static_cast<Eigen::Index>(j)) = x.values.col(keep[j]);
        live.sensors.push_back(x.sensors[static_cast<std::size_t>(keep[j])]);
    }
    return live;
}

// --- criterion 1: closed-form metric oracles -------------------------------
Verdict criterion_closed_forms() {
    const auto t0 = std::chrono::steady_clock::now();
    bool ok = true;
    std::string why;

    {  // content of pure tones
        const Eigen::Index t_n = 200;
        Eigen::MatrixXd pair(t_n, 2);
        pair.col(0) = bin_cosine(t_n, 5.0, 0.0);
        pair.col(1) = bin_cosine(t_n, 5.0, -M_PI / 2.0);  // the sine partner
        const Eigen::VectorXd chi2 = frequency_content(dft_basis(pair, 100.0, 1.0));
        const Eigen::VectorXd chi1 =
            frequency_content(dft_basis(pair.col(0).eval(), 100.0, 1.0));
        if (std::abs(chi2[5] - 1.0) > kChiTol || std::abs(chi1[5] - 0.5) > kChiTol) {
            ok = false;
            why += strf(" chi %.3e/%.3e off;", chi2[5] - 1.0, chi1[5] - 0.5);
        }
    }
    {  // nonlinearity fractions, exact
        Eigen::VectorXd chi = Eigen::VectorXd::Zero(10);
        chi[2] = 0.5;
        chi[3] = 0.5;
        Eigen::VectorXd split_chi = Eigen::VectorXd::Zero(10);
        split_chi[0] = 0.5;
        split_chi[5] = 0.5;
        if (nonlinearity(chi, {2, 3}) != 0.0 || nonlinearity(chi, {7}) != 1.0 ||
            nonlinearity(split_chi, {0}) != 0.5) {
            ok = false;
            why += " nu fractions off;";
        }
    }
    {  // memory of a pure five-step delay
        MultiToneSpec spec;
        spec.frequencies_hz = detail::ladder_prefix(4);
        const TimeSeries input = make_multitone(spec);
        const MemoryResult m = memory(delay_target(input, 5), input);
        if (m.tau_opt != 5 || std::abs(m.m - 5.0) > kMemoryTol) {
            ok = false;
            why += strf(" memory tau=%d M=%.12f;", m.tau_opt, m.m);
        }
    }
    {  // snr of a 100:1 power split
        const Eigen::MatrixXd f = detail::trig_basis(64);
        Eigen::MatrixXd x(64, 2);
        x.col(0) = 10.0 * f.col(3) + f.col(7);
        x.col(1) = 10.0 * f.col(3) - f.col(7);
        const Eigen::VectorXd s = snr(dft_basis(x, 64.0, 0.95));
        if (std::abs(s[0] - 20.0) > kSnrTolDb || std::abs(s[1] - 20.0) > kSnrTolDb) {
            ok = false;
            why += strf(" snr %.4f/%.4f dB;", s[0], s[1]);
        }
    }
    double r2 = 0.0;
    {  // fit quality reference point
        TimeSeries y;
        y.sample_rate = 1.0;
        y.values.resize(4);
        y.values << 1.0, 2.0, 3.0, 4.0;
        TimeSeries pred = y;
        pred.values[0] += 1.0;
        pred.values[1] -= 1.0;
        pred.values[2] += 1.0;
        pred.values[3] -= 1.0;
        r2 = r_squared(y, pred);
        if (std::abs(r2 - 0.2) > kR2RefTol) {
            ok = false;
            why += strf(" r2 %.17f;", r2);
        }
    }
    const double elapsed =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (elapsed >= kOracleBudgetS) {
        ok = false;
        why += strf(" %.1f s over budget;", elapsed);
    }
    return {ok, ok ? strf("all closed forms hit (r2 ref %.17f, %.2f s)", r2, elapsed)
                   : "off:" + why};
}

// --- criterion 2: pseudo-inverse agreement ---------------------------------
Verdict criterion_pinv() {
    std::mt19937_64 meta(2024);
    double worst_w = 0.0;
    double worst_r2 = 0.0;
    for (int instance = 0; instance < 20; ++instance) {
        const Eigen::Index t_n = 30 + static_cast<Eigen::Index>(meta() % 171);
        const Eigen::Index n_s = 2 + static_cast<Eigen::Index>(meta() % 19);
        StateMatrix x;
        x.sample_rate = 500.0;
        x.values.resize(t_n, n_s);
        std::mt19937_64 feed(meta());
        std::normal_distribution<double> nd;
        for (Eigen::Index t = 0; t < t_n; ++t)
            for (Eigen::Index j = 0; j < n_s; ++j) x.values(t, j) = nd(feed);
        for (Eigen::Index j = 0; j < n_s; ++j)
            x.sensors.push_back(
                {"s" + std::to_string(j), SensorKind::edge_x, 0, static_cast<int>(j)});

        std::mt19937_64 gen(meta());
        Eigen::VectorXd w_true(n_s);
        for (Eigen::Index j = 0; j < n_s; ++j) w_true[j] = nd(gen);
        TimeSeries y;
        y.sample_rate = 500.0;
        y.label = "y";
        y.values = x.values * w_true;
        for (Eigen::Index t = 0; t < t_n; ++t) y.values[t] += 0.1 * nd(gen);

        const ReadoutModel model = train(x, y, 0.0);

        const Eigen::RowVectorXd x_mean = x.values.colwise().mean();
        const Eigen::MatrixXd xc = x.values.rowwise() - x_mean;
        const Eigen::VectorXd yc = y.values.array() - y.values.mean();
        const Eigen::VectorXd w_ref =
            Eigen::JacobiSVD<Eigen::MatrixXd>(xc, Eigen::ComputeThinU | Eigen::ComputeThinV)
                .solve(yc);

        worst_w = std::max(worst_w, (model.weights - w_ref).norm() / w_ref.norm());
        TimeSeries ref_pred = y;
        ref_pred.values = (x.values * w_ref).array() + (y.values.mean() - x_mean * w_ref);
        worst_r2 = std::max(worst_r2, std::abs(r_squared(y, predict(model, x)) -
                                               r_squared(y, ref_pred)));
    }
    const bool ok = worst_w <= kWeightRelTol && worst_r2 <= kR2MatchTol;
    return {ok, strf("20 instances, worst relative weight error %.2e, worst R^2 gap %.2e",
                     worst_w, worst_r2)};
}

// --- criterion 3: probe phases vs. content ---------------------------------
Verdict criterion_probe_phases() {
    const ExperimentConfig cfg = default_config(2);
    const PreparedData p = prepare_data(cfg);
    const TimeSeries y = make_target(parse_task("relu10"), p, cfg);
    const SplitData split = split_train_test(p.states, y, cfg.pipeline.train_fraction);
    const StateMatrix live = live_submatrix(split.train_x);

    const SpectralBasis basis = dft_basis(live, 1.0);
    const Eigen::VectorXd chi = frequency_content(basis);
    Eigen::Index bin = 0;
    double best_dist = 2.0;
    for (Eigen::Index i = 1; i < basis.n; ++i)
        if (std::abs(chi[i] - 0.5) < best_dist) {
            best_dist = std::abs(chi[i] - 0.5);
            bin = i;
        }
    const double f_hz = basis.bin_frequency(bin);

    // 100 probes as 50 quadrature pairs: the phase-dependent error cancels
    // pairwise, leaving the subspace content itself.
    std::mt19937_64 gen(3);
    const Eigen::Index t_n = live.samples();
    double acc = 0.0;
    for (int pair = 0; pair < 50; ++pair) {
        const double base = uniform_unit(gen) * 2.0 * M_PI;
        for (double phi : {base, base + M_PI / 2.0}) {
            TimeSeries probe;
            probe.sample_rate = live.sample_rate;
            probe.label = "probe";
            probe.values.resize(t_n);
            for (Eigen::Index s = 0; s < t_n; ++s)
                probe.values[s] = std::cos(2.0 * M_PI * f_hz * static_cast<double>(s) /
                                               live.sample_rate +
                                           phi);
            const ReadoutModel model = train(live, probe, 0.0);
            acc += r_squared(probe, predict(model, live));
        }
    }
    const double mean_r2 = acc / 100.0;
    const double diff = std::abs(mean_r2 - chi[bin]);
    return {diff < kPhaseMeanTol,
            strf("bin %lld (%.2f Hz): chi %.6f, mean probe R^2 %.6f, diff %.4f",
                 static_cast<long long>(bin), f_hz, chi[bin], mean_r2, diff)};
}

// --- criterion 4: nonlinear margin over the linearized lattice -------------
Verdict criterion_nonlinear_margin() {
    bool ok = true;
    std::string detail;
    for (int k : {2, 4, 6}) {
        const ExperimentConfig cfg = default_config(k);
        double r2[2] = {0.0, 0.0};
        double lin_worst_nu = 0.0;
        int harmonic_sensors = 0;
        for (int variant = 0; variant < 2; ++variant) {
            const bool linear = variant == 1;
            const PreparedData p = prepare_data(
                cfg, linear ? LatticeVariant::linearized : LatticeVariant::nonlinear);
            const TimeSeries y = make_target(parse_task("relu10"), p, cfg);
            const SplitData split = split_train_test(p.states, y, cfg.pipeline.train_fraction);
            const ReadoutModel model = train(split.train_x, split.train_y, cfg.ridge_lambda);
            r2[variant] = r_squared(split.test_y, predict(model, split.test_x));

            const SpectralBasis basis = dft_basis(p.states, cfg.metrics.variance_capture);
            const Eigen::VectorXd s = snr(basis);
            const Eigen::MatrixXd chi = frequency_content_per_sensor(basis);
            const auto bins = input_bin_set(basis.n, basis.sample_rate,
                                            cfg.input.frequencies_hz, cfg.metrics.guard_bins);
            for (Eigen::Index j = 0; j < p.states.sensor_count(); ++j) {
                if (s[j] < cfg.metrics.high_snr_db) continue;
                const double nu = nonlinearity(chi.col(j), bins);
                if (linear)
                    lin_worst_nu = std::max(lin_worst_nu, nu);
                else if (nu > kHarmonicNuMin)
                    ++harmonic_sensors;
            }
        }
        const double margin = r2[0] - r2[1];
        const bool k_ok = margin >= kMarginR2 && lin_worst_nu < kLinearNuMax &&
                          harmonic_sensors >= kHarmonicSensorsMin;
        ok = ok && k_ok;
        detail += strf("%sk=%d margin %+.4f (nl %.4f lin %.4f), lin max nu %.4f, "
                       "harmonic sensors %d%s",
                       detail.empty() ? "" : "; ", k, margin, r2[0], r2[1], lin_worst_nu,
                       harmonic_sensors, k_ok ? "" : " <-");
    }
    return {ok, detail};
}

// --- criterion 5: greedy subsets vs. random baseline -----------------------
Verdict criterion_greedy_baseline() {
    const ExperimentConfig cfg = default_config(4);
    const PreparedData p = prepare_data(cfg);
    const TaskSpec t = resolve_task(parse_task("strain_rate"), p);
    const TimeSeries y = make_target(t, p, cfg);
    const SplitData split = split_train_test(p.states, y, cfg.pipeline.train_fraction);

    const SelectionResult res = greedy_select(split);
    bool monotone = true;
    for (Eigen::Index k = 1; k < res.alignment_trace.size(); ++k)
        if (res.alignment_trace[k] < res.alignment_trace[k - 1] - 1e-12) monotone = false;

    const Eigen::Index size = res.best_size;
    const std::uint64_t seed =
        derive_seed(derive_seed(cfg.seed, kSeedBaseline), static_cast<std::uint64_t>(size));
    const Eigen::VectorXd scores = random_baseline(split, size, 200, seed);
    const BaselineSummary base = summarize_baseline(size, scores);
    const double greedy_r2 = res.r2_by_size[size - 1];

    const bool ok = monotone && greedy_r2 >= base.r2_median;
    return {ok, strf("%s: best size %lld, greedy R^2 %.4f vs median %.4f of 200 draws "
                     "(max %.4f), trace %s",
                     t.name.c_str(), static_cast<long long>(size), greedy_r2, base.r2_median,
                     base.r2_max, monotone ? "monotone" : "NOT monotone")};
}

// --- criterion 6: delay tasks and their alignment flag ---------------------
Verdict criterion_delay_alignment() {
    const ExperimentConfig cfg = default_config(2);
    const PreparedData p = prepare_data(cfg);
    bool ok = true;
    std::string detail;
    for (int d : {2, 5}) {
        const TimeSeries y = make_target(parse_task("delay" + std::to_string(d)), p, cfg);
        const SplitData split = split_train_test(p.states, y, cfg.pipeline.train_fraction);

        Eigen::Index window = split.train_x.samples();
        if (window % 2 != 0) --window;
        const SpectralBasis basis =
            dft_basis(split.train_x.values.topRows(window), split.train_x.sample_rate,
                      cfg.metrics.variance_capture);
        TimeSeries yw = split.train_y;
        yw.values = yw.values.head(window).eval();
        const double align = frequency_alignment(basis, frequency_content(basis), yw);

        const ReadoutModel model = train(split.train_x, split.train_y, cfg.ridge_lambda);
        const double r2 = r_squared(split.test_y, predict(model, split.test_x));

        const bool d_ok = r2 >= kDelayR2Min && align >= kAlignmentMin;
        ok = ok && d_ok;
        detail += strf("%sdelay%d: R^2 %.4f, alignment %.4f%s", detail.empty() ? "" : "; ", d,
                       r2, align, d_ok ? "" : " <-");
    }
    return {ok, detail};
}

// --- criterion 7: atlas ordering -------------------------------------------
Verdict criterion_atlas_order(const std::filesystem::path& dir) {
    ExperimentConfig cfg;  // no explicit input: the atlas picks its four-tone drive
    BundleWriter writer(dir);
    const nlohmann::json report = run_task_atlas(cfg, writer);

    const bool input_pinned = report.at("input").at("nu").get<double>() == 0.0 &&
                              report.at("input").at("memory").get<double>() == 0.0;

    std::unordered_map<std::string, double> task_memory;
    for (const nlohmann::json& t : report.at("tasks")) {
        const std::string name = t.at("task").get<std::string>();
        if (name.rfind("strain_rate:", 0) == 0)
            task_memory[name.substr(std::string("strain_rate:").size())] =
                t.at("memory").get<double>();
    }
    int considered = 0;
    int ordered = 0;
    for (const nlohmann::json& s : report.at("sensors")) {
        if (!s.at("high_snr").get<bool>()) continue;
        const auto it = task_memory.find(s.at("id").get<std::string>());
        if (it == task_memory.end()) continue;
        ++considered;
        if (it->second > s.at("memory").get<double>()) ++ordered;
    }
    const double fraction = considered > 0 ? static_cast<double>(ordered) / considered : 0.0;
    const bool ok = input_pinned && fraction >= kOrderedFractionMin;
    return {ok, strf("input at (0, 0): %s; rate task above its sensor on %d/%d "
                     "high-snr sensors (%.1f%%)",
                     input_pinned ? "yes" : "NO", ordered, considered, 100.0 * fraction)};
}

// --- criterion 8: reproducible bundles -------------------------------------
Verdict criterion_reproducible(const std::filesystem::path& base) {
    const ExperimentConfig cfg = default_config(2);
    const auto dir_a = base / "run_a";
    const auto dir_b = base / "run_b";
    BundleWriter wa(dir_a);
    run_pipeline(cfg, wa);
    BundleWriter wb(dir_b);
    run_pipeline(cfg, wb);

    const nlohmann::json ma = detail::read_json_file((dir_a / "manifest.json").string());
    const nlohmann::json mb = detail::read_json_file((dir_b / "manifest.json").string());
    const bool same_files = ma.at("files") == mb.at("files");

    const auto rex = base / "reexport";
    std::filesystem::create_directories(rex);
    const StateMatrix st =
        ingest_csv((dir_a / "states.csv").string(), (dir_a / "states.meta.json").string());
    export_state(st, (rex / "states.csv").string(), (rex / "states.meta.json").string());
    const TimeSeries in = import_timeseries((dir_a / "input.csv").string(),
                                            (dir_a / "input.meta.json").string());
    export_timeseries(in, (rex / "input.csv").string(), (rex / "input.meta.json").string());

    bool round_trip = true;
    for (const char* name : {"states.csv", "states.meta.json", "input.csv", "input.meta.json"})
        round_trip = round_trip && detail::read_binary_file(dir_a / name) ==
                                       detail::read_binary_file(rex / name);

    const bool ok = same_files && round_trip;
    return {ok, strf("two runs share %zu file hashes: %s; ingest/re-export byte-stable: %s",
                     ma.at("files").size(), same_files ? "yes" : "NO",
                     round_trip ? "yes" : "NO")};
}

// --- criterion 9: integrator sanity ----------------------------------------
Verdict criterion_integrator() {
    LatticeConfig lc;
    lc.seed = derive_seed(42, kSeedLattice);
    const LatticeModel model = build_lattice(lc);
    const int drive = model.default_drive_node();
    bool ok = true;
    std::string detail;

    {  // silence in, silence out
        TimeSeries zero;
        zero.sample_rate = 500.0;
        zero.values = Eigen::VectorXd::Zero(3000);
        const StateMatrix x = simulate(model, zero, drive, 500.0);
        const double peak = x.values.cwiseAbs().maxCoeff();
        if (peak != 0.0) ok = false;
        detail += strf("silent peak %.1e", peak);
    }
    {  // free vibration can only lose energy
        LatticeState init;
        init.w = Eigen::VectorXd::Zero(model.node_count());
        init.v = Eigen::VectorXd::Zero(model.node_count());
        init.w[model.node(2, 2)] = 1e-4;
        init.w[model.node(1, 2)] = -5e-5;
        TimeSeries zero;
        zero.sample_rate = 500.0;
        zero.values = Eigen::VectorXd::Zero(400);
        const NodeTrajectory traj = integrate(model, zero, drive, 500.0, 0, &init);
        int breaks = 0;
        double prev = mechanical_energy(model, traj.w.row(0).transpose(),
                                        traj.v.row(0).transpose());
        const double e0 = prev;
        double last = prev;
        for (Eigen::Index t = 1; t < traj.w.rows(); ++t) {
            const double e = mechanical_energy(model, traj.w.row(t).transpose(),
                                               traj.v.row(t).transpose());
            if (e > prev * kEnergySlack) ++breaks;
            prev = e;
            last = e;
        }
        if (breaks != 0 || last >= 0.5 * e0) ok = false;
        detail += strf("; energy rises %d/399, decay to %.4f of start", breaks, last / e0);
    }
    {  // halving the step barely moves the solution
        MultiToneSpec spec;
        spec.frequencies_hz = detail_ladder2();
        TimeSeries forcing = make_multitone(spec);
        forcing.values *= 0.005;
        const int sub = default_substeps(model, 500.0);
        const StateMatrix a = simulate(model, forcing, drive, 500.0, sub);
        const StateMatrix b = simulate(model, forcing, drive, 500.0, 2 * sub);
        const double drift = (a.values - b.values).norm() / b.values.norm();
        if (drift >= kDtDriftMax) ok = false;
        detail += strf("; step halving moves the response %.3f%%", 100.0 * drift);
    }
    return {ok, detail};
}

}  // namespace

int main() {
    const std::filesystem::path scratch =
        std::filesystem::temp_directory_path() / "metares_acceptance";
    std::filesystem::remove_all(scratch);
    std::filesystem::create_directories(scratch);

    struct Entry {
        int id;
        const char* text;
        Verdict (*fn)(const std::filesystem::path&);
    };
    // wrap the two signatures uniformly
    static const std::filesystem::path& scratch_ref = scratch;
    const std::vector<std::pair<const char*, std::function<Verdict()>>> criteria = {
        {"metric oracles agree with closed forms", criterion_closed_forms},
        {"training matches the pseudo-inverse reference", criterion_pinv},
        {"mean probe fit reproduces the content value", criterion_probe_phases},
        {"rectified harmonics separate the lattice from its linearization",
         criterion_nonlinear_margin},
        {"greedy sensor subsets beat the random baseline", criterion_greedy_baseline},
        {"delay tasks are solvable and flagged by alignment", criterion_delay_alignment},
        {"the task atlas orders rate tasks above their sensors",
         [] { return criterion_atlas_order(scratch_ref / "atlas"); }},
        {"identical configurations give byte-identical bundles",
         [] { return criterion_reproducible(scratch_ref); }},
        {"integrator sanity: silence, damping, step control", criterion_integrator},
    };

    int passed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Verdict v;
        try {
            v = criteria[i].second();
        } catch (const std::exception& e) {
            v = {false, strf("exception: %s", e.what())};
        }
        if (v.pass) ++passed;
        std::printf("[%s] %zu. %s — %s\n", v.pass ? "PASS" : "FAIL", i + 1,
                    criteria[i].first, v.detail.c_str());
        std::fflush(stdout);
    }
    std::printf("%d/9 criteria hold\n", passed);
    return passed == 9 ? 0 : 1;
}
