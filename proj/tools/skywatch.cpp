// skywatch: synthetic data generation, training, detection and robustness
// evaluation driven by one JSON config.

#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "skywatch/pipeline.hpp"

namespace {

struct Overrides {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> work_dir;
    std::optional<std::size_t> threads;
};

skywatch::RunConfig load_config(const Overrides& o) {
    skywatch::RunConfig c = o.config_path.empty() ? skywatch::RunConfig{} : skywatch::RunConfig::load(o.config_path);
    if (o.seed) c.seed = *o.seed;
    if (o.work_dir) c.work_dir = *o.work_dir;
    if (o.threads) c.ensemble.threads = *o.threads;
    return c;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Ground-station anomaly detection for a UAV camera and IMU stream"};
    app.require_subcommand(1);

    Overrides o;
    app.add_option("-c,--config", o.config_path, "JSON run config (defaults are used when omitted)")
        ->check(CLI::ExistingFile);
    app.add_option("--seed", o.seed, "master seed mixed into every component seed");
    app.add_option("--work-dir", o.work_dir, "directory for corpora, models and reports");
    app.add_option("--threads", o.threads, "worker threads for scoring and attacks (0 = hardware)");

    using Cmd = int (*)(const skywatch::RunConfig&);
    auto add = [&](const char* name, const char* help, Cmd fn) {
        app.add_subcommand(name, help)->callback([&o, fn] {
            const int rc = fn(load_config(o));
            if (rc != 0) throw CLI::RuntimeError(rc);
        });
    };

    add("gen-data", "write the normal-only training corpus and the labeled evaluation corpus",
        [](const skywatch::RunConfig& c) {
            skywatch::cmd_gen_data(c, std::cout);
            return 0;
        });
    add("train", "pretrain and fine-tune AngleNet, train the IMU autoencoders",
        [](const skywatch::RunConfig& c) {
            skywatch::cmd_train(c, std::cout);
            return 0;
        });
    add("detect", "score the evaluation stream and write per-timestamp verdicts",
        [](const skywatch::RunConfig& c) {
            skywatch::cmd_detect(c, std::cout);
            return 0;
        });
    add("eval", "compare verdicts with ground-truth labels", [](const skywatch::RunConfig& c) {
        skywatch::cmd_eval(c, std::cout);
        return 0;
    });
    add("attack", "measure AngleNet under FGSM, PGD, universal and patch attacks",
        [](const skywatch::RunConfig& c) {
            skywatch::cmd_attack(c, std::cout);
            return 0;
        });
    add("defend", "adversarially retrain AngleNet and compare against the baseline",
        [](const skywatch::RunConfig& c) {
            skywatch::cmd_defend(c, std::cout);
            return 0;
        });
    add("show-config", "print the effective config as JSON", [](const skywatch::RunConfig& c) {
        c.validate();
        std::cout << c.to_json().dump(2) << '\n';
        return 0;
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const skywatch::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
