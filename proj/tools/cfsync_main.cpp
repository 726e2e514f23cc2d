#include <cstdint>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "commands.hpp"

namespace {

struct Flags {
    double dt = 0.0;
    double t_end = 0.0;
    std::string out;
    std::string format = "json";
    bool plot = false;
    std::uint64_t seed = 1;
};

void add_common(CLI::App* sub, Flags& f) {
    sub->add_option("--dt", f.dt, "integration step (s)")->check(CLI::PositiveNumber);
    sub->add_option("--t-end", f.t_end, "simulated horizon (s)")->check(CLI::PositiveNumber);
    sub->add_option("--out", f.out, "directory for CSV, SVG and report files");
    sub->add_option("--format", f.format, "stdout format")->check(CLI::IsMember({"csv", "json"}));
    sub->add_flag("--plot", f.plot, "write SVG plots (needs --out)");
    sub->add_option("--seed", f.seed, "seed for randomized initial states");
}

cfsync::cli::RunOptions options_of(const Flags& f, const CLI::App* sub) {
    cfsync::cli::RunOptions opt;
    if (sub->count("--dt")) opt.dt = f.dt;
    if (sub->count("--t-end")) opt.t_end = f.t_end;
    opt.out_dir = f.out;
    opt.format = f.format;
    opt.plot = f.plot;
    opt.seed = f.seed;
    return opt;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Complex-frequency synchronization analysis of grid-forming converter networks"};
    app.set_version_flag("--version", std::string(cfsync::cli::kToolVersion));
    app.require_subcommand(1);

    Flags flags;
    std::string scenario;
    std::string all_dir;
    const char* commands[] = {"analyze-fast", "analyze-slow", "simulate", "nyquist", "check"};
    const char* help[] = {"Conditions 1-2 and the fast spectrum", "equilibrium, steady-state frequency, error spectrum",
                          "integrate a model and export the trajectory", "synchronization and voltage Nyquist criteria",
                          "run every applicable analysis and cross-check the verdicts"};
    for (int i = 0; i < 5; ++i) {
        CLI::App* sub = app.add_subcommand(commands[i], help[i]);
        add_common(sub, flags);
        if (std::string(commands[i]) == "check") {
            auto* file = sub->add_option("scenario", scenario, "scenario file");
            auto* dir = sub->add_option("--all", all_dir, "check every *.yaml in a directory")->check(CLI::ExistingDirectory);
            file->excludes(dir);
            sub->require_option(1);
        } else {
            sub->add_option("scenario", scenario, "scenario file")->required();
        }
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : cfsync::cli::kError;
    }

    const CLI::App* sub = app.get_subcommands().front();
    const std::string command = sub->get_name();
    const cfsync::cli::RunOptions opt = options_of(flags, sub);
    if (opt.plot && opt.out_dir.empty()) {
        std::cerr << "error: --plot needs --out <dir>\n";
        return cfsync::cli::kError;
    }

    const cfsync::cli::CommandResult r =
        all_dir.empty() ? cfsync::cli::run_one(command, scenario, opt) : cfsync::cli::check_all(all_dir, opt);
    if (r.report.contains("error")) std::cerr << "error: " << r.report["error"].get<std::string>() << "\n";
    if (opt.format == "csv" && !r.csv.empty()) {
        std::cout << r.csv;
    } else {
        std::cout << r.report.dump(2) << "\n";
    }
    return r.exit_code;
}
