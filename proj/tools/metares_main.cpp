// Command-line front end: every subcommand reads one JSON config and writes
// a self-verifying output bundle.

#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <exception>
#include <string>

#include <CLI11.hpp>

#include <metares/experiment.hpp>

namespace {

struct CommonArgs {
    std::string config_path;
    std::string out_dir = "out";
    std::uint64_t seed = 0;
    bool seed_given = false;
    unsigned threads = 0;
};

void add_common(CLI::App* cmd, CommonArgs& args, bool config_required) {
    auto* config = cmd->add_option("--config", args.config_path, "experiment config JSON");
    if (config_required) config->required();
    cmd->add_option("--out", args.out_dir, "output bundle directory");
    cmd->add_option("--seed", args.seed, "master seed override")
        ->each([&args](const std::string&) { args.seed_given = true; });
    cmd->add_option("--threads", args.threads, "worker threads for independent cells");
}

std::uint64_t parse_env_seed(const char* text) {
    char* end = nullptr;
    errno = 0;
    const unsigned long long value = std::strtoull(text, &end, 10);
    if (errno != 0 || end == text || *end != '\0')
        throw std::invalid_argument(std::string("METARES_SEED is not a u64: '") + text + "'");
    return static_cast<std::uint64_t>(value);
}

metares::ExperimentConfig load_config(const CommonArgs& args) {
    metares::ExperimentConfig cfg = metares::stage("config", [&] {
        return metares::config_from_json(metares::detail::read_json_file(args.config_path));
    });
    // Seed precedence: --seed flag, then METARES_SEED, then the config value.
    if (args.seed_given) {
        cfg.seed = args.seed;
    } else if (const char* env = std::getenv("METARES_SEED")) {
        cfg.seed = metares::stage("config", [&] { return parse_env_seed(env); });
    }
    if (args.threads > 0) cfg.threads = args.threads;
    if (cfg.threads == 0) cfg.threads = 1;
    return cfg;
}

void report_scores(const std::vector<metares::TaskScore>& scores) {
    for (const metares::TaskScore& s : scores)
        std::printf("  %-28s r2_train %8.4f   r2_test %8.4f\n", s.name.c_str(), s.r2_train,
                    s.r2_test);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"nonlinear lattice reservoir computing toolkit"};
    app.require_subcommand(1);

    CommonArgs args;
    CLI::App* cmd_simulate =
        app.add_subcommand("simulate", "generate the dataset without training");
    CLI::App* cmd_run = app.add_subcommand("run", "full pipeline over the configured tasks");
    CLI::App* cmd_sweep = app.add_subcommand("sweep", "input complexity vs lattice variant");
    CLI::App* cmd_select = app.add_subcommand("select", "greedy sensor ranking and baseline");
    CLI::App* cmd_atlas = app.add_subcommand("atlas", "nonlinearity-memory map");
    CLI::App* cmd_metrics = app.add_subcommand("metrics", "per-sensor metric report");
    CLI::App* cmd_verify = app.add_subcommand("verify", "check a bundle against its manifest");
    for (CLI::App* cmd : {cmd_simulate, cmd_run, cmd_sweep, cmd_select, cmd_atlas, cmd_metrics})
        add_common(cmd, args, true);
    add_common(cmd_verify, args, false);

    CLI11_PARSE(app, argc, argv);

    std::string fingerprint = "unconfigured";
    try {
        if (cmd_verify->parsed()) {
            const metares::VerifyResult result = metares::verify_bundle(args.out_dir);
            for (const std::string& problem : result.problems)
                std::fprintf(stderr, "verify: %s\n", problem.c_str());
            if (result.ok)
                std::printf("bundle ok: %zu files match the manifest\n", result.files_checked);
            return result.ok ? 0 : 1;
        }

        const metares::ExperimentConfig cfg = load_config(args);
        fingerprint = metares::config_fingerprint(cfg);
        metares::BundleWriter writer(args.out_dir);

        if (cmd_simulate->parsed()) {
            metares::run_simulate(cfg, writer);
        } else if (cmd_run->parsed()) {
            report_scores(metares::run_pipeline(cfg, writer));
        } else if (cmd_sweep->parsed()) {
            const auto rows = metares::run_complexity_sweep(cfg, writer);
            std::printf("  %zu sweep rows\n", rows.size());
        } else if (cmd_select->parsed()) {
            const nlohmann::json report = metares::run_selection(cfg, writer);
            std::printf("  best size %lld, r2 %.4f (full set %.4f)\n",
                        static_cast<long long>(report.at("best_size").get<std::int64_t>()),
                        report.at("r2_best").get<double>(), report.at("r2_full").get<double>());
        } else if (cmd_atlas->parsed()) {
            metares::run_task_atlas(cfg, writer);
        } else if (cmd_metrics->parsed()) {
            metares::run_metrics(cfg, writer);
        }
        std::printf("wrote %zu files to %s\n", writer.file_count() + 1,
                    writer.root().string().c_str());
        return 0;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "metares: %s (config %s)\n", e.what(), fingerprint.c_str());
        return 1;
    }
}
