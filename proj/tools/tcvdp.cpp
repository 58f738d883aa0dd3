#include <cstdlib>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "tcvdp/experiments.hpp"

namespace {

int default_workers() {
    if (const char* env = std::getenv("TCVDP_WORKERS")) {
        int w = std::atoi(env);
        if (w >= 1) return w;
        std::cerr << "warning: ignoring invalid TCVDP_WORKERS=" << env << "\n";
    }
    return 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Stochastic and quantum simulation of dissipatively coupled "
                 "van der Pol oscillator arrays"};
    app.require_subcommand(1);

    tcvdp::ExperimentSpec spec;
    spec.workers = default_workers();

    struct SubDesc {
        const char* name;
        const char* help;
    };
    const SubDesc subs[] = {
        {"langevin-decay", "order-parameter decay and Gamma vs 1/N fits"},
        {"spectrum", "power spectrum of the order parameter"},
        {"sync-sweep", "synchronization measure S_c over an N sweep"},
        {"histograms", "phase-space histograms of oscillator 1 and error mode"},
        {"liouville-spectrum", "Liouvillian eigenvalues and steady states"},
        {"oracle-suite", "independent calibration checks"},
    };
    for (const auto& sd : subs) {
        CLI::App* sub = app.add_subcommand(sd.name, sd.help);
        sub->add_option("--config", spec.config_path, "config file (key = value lines)");
        sub->add_option("--out", spec.out_dir, "output directory");
        sub->add_option("--set", spec.overrides,
                        "config override key=value (repeatable)");
        sub->add_option("--workers", spec.workers, "trajectory worker threads");
        sub->add_flag("--force", spec.force, "allow existing output directory");
        sub->add_flag("--dry-run", spec.dry_run,
                      "print dimensions and planned outputs, write nothing");
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    spec.kind = app.get_subcommands().at(0)->get_name();
    try {
        tcvdp::RunOutcome out = tcvdp::run_experiment(spec);
        std::cout << out.summary.dump(2) << std::endl;
        if (out.partial) {
            std::cerr << "completed with partial results\n";
            return 4;
        }
        return 0;
    } catch (const tcvdp::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
}
