#include <CLI11.hpp>

#include <iostream>

#include "qthermal/runner.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Exact-diagonalization thermalization laboratory for translation-invariant qubit lattices"};
    app.require_subcommand(1);
    app.set_version_flag("--version", qthermal::kArtifactVersion);

    std::string config_path, out_dir = "out";
    std::optional<std::uint64_t> seed;
    std::optional<int> workers, cap_n;
    const std::vector<std::pair<std::string, std::string>> commands = {
        {"spectrum", "diagonalize and check for nondegenerate gaps"},
        {"thermalize", "ensemble thermalization and equilibration experiment"},
        {"ipr-scan", "average IPR and approximate periodicity"},
        {"weak-eth", "eigenstate deviations from the Gibbs state"},
        {"correlations", "Gibbs-state correlation decay and subsystem purity"},
        {"unravel", "stabilizer-product unraveling of the Gibbs state"},
        {"gge", "generalized Gibbs state and its tilt identity"}};
    for (const auto& [name, help] : commands) {
        auto* sub = app.add_subcommand(name, help);
        sub->add_option("--config", config_path, "JSON experiment config")->required()->check(CLI::ExistingFile);
        sub->add_option("--seed", seed, "master seed override");
        sub->add_option("--workers", workers, "worker threads")->check(CLI::PositiveNumber);
        sub->add_option("--out", out_dir, "output directory")->capture_default_str();
        sub->add_option("--cap-n", cap_n, "maximum number of sites")->check(CLI::PositiveNumber);
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    const std::string command = app.get_subcommands().front()->get_name();
    try {
        auto config = qthermal::parse_json(qthermal::read_file(config_path), config_path);
        qthermal::Runner runner(command, std::move(config), out_dir, {seed, workers, cap_n});
        const auto outcome = runner.run();
        if (!outcome.message.empty()) std::cerr << "qthermal " << command << ": " << outcome.message << "\n";
        return outcome.exit_code;
    } catch (const std::exception& e) {
        std::cerr << "qthermal " << command << ": " << e.what() << "\n";
        return qthermal::Runner::error_code(e);
    }
}
