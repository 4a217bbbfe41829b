#include "commands.hpp"
#include "config.hpp"

#include "modred/parallel.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <functional>
#include <iostream>
#include <map>

int main(int argc, char** argv) {
    using namespace modred::cli;

    CLI::App app{"modred: model reduction for inverse problems by projecting out approximation error"};
    app.require_subcommand(1);
    app.fallthrough();

    std::string config_path;
    std::vector<std::string> assignments;
    int threads = 0;
    std::map<std::string, std::string> flags;
    app.add_option("--config", config_path, "INI configuration file")->check(CLI::ExistingFile);
    app.add_option("--set", assignments, "Override one key, section.key=value (repeatable)");
    app.add_option("--threads", threads, "Worker threads (default: MODRED_THREADS or hardware)")
        ->check(CLI::NonNegativeNumber);
    const std::vector<std::pair<std::string, std::string>> shortcuts = {
        {"--out", "io.out"},           {"--method", "solver.method"}, {"--sinogram", "io.sinogram"},
        {"--sample", "io.sample"},     {"--projector", "io.projector"}, {"--data", "io.data"},
        {"--phantom", "io.phantom"},   {"--experiment", "io.experiment"},
    };
    for (const auto& [flag, key] : shortcuts) app.add_option(flag, flags[key], "Same as --set " + key + "=...");

    const std::map<std::string, std::function<int(const Config&)>> commands = {
        {"tomo-simulate", tomo_simulate},     {"tomo-reconstruct", tomo_reconstruct},
        {"eit-simulate", eit_simulate},       {"eit-reconstruct", eit_reconstruct},
        {"bae-sample", bae_sample},           {"spotlight-basis", spotlight_basis},
    };
    const std::map<std::string, std::string> help = {
        {"tomo-simulate", "Simulate a fan-beam sinogram of the lotus phantom"},
        {"tomo-reconstruct", "Reconstruct with --method fine|naive|bae|spotlight"},
        {"eit-simulate", "Simulate CEM voltages on a randomly shaped domain"},
        {"eit-reconstruct", "Gauss-Newton EIT reconstruction, projected when --sample is given"},
        {"bae-sample", "Draw an approximation-error sample (--experiment tomo|eit)"},
        {"spotlight-basis", "Error-subspace projector and clutter spectrum from a sample"},
    };
    for (const auto& [name, text] : help) app.add_subcommand(name, text);
    app.add_subcommand("check", "Run the built-in invariant suite");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (threads == 0) {
            if (const char* env = std::getenv("MODRED_THREADS")) {
                try {
                    threads = std::stoi(env);
                } catch (const std::exception&) {
                    throw UsageError(std::string("MODRED_THREADS must be an integer, got '") + env + "'");
                }
                if (threads < 0) throw UsageError("MODRED_THREADS must be >= 0");
            }
        }
        if (threads > 0) modred::set_thread_count(static_cast<unsigned>(threads));

        const std::string name = app.get_subcommands().front()->get_name();
        if (name == "check") return run_checks(std::cout);

        Config cfg;
        if (!config_path.empty()) cfg.load_ini(config_path);
        for (const auto& a : assignments) cfg.apply_assignment(a);
        for (const auto& [key, value] : flags)
            if (!value.empty()) cfg.set(key, value);
        return commands.at(name)(cfg);
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
