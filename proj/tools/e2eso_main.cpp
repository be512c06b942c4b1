// Command line front end: picks an experiment, merges the JSON config
// with command line overrides, runs it, and writes the output bundle.
//
// Exit codes: 0 success, 2 configuration error, 3 data error,
// 4 training divergence, 1 unexpected failure.

#include <e2eso/evalcli.hpp>

#include <CLI11.hpp>

#include <cstdint>
#include <fstream>
#include <iostream>
#include <string>

int main(int argc, char** argv) {
    using nlohmann::json;
    namespace evalcli = e2eso::evalcli;

    CLI::App app{"End-to-end trained decision maps: benchmark experiments"};
    std::string experiment;
    std::string config_path;
    std::string data_source;
    std::string out_dir;
    std::uint64_t seed = 0;
    double eps = 0.0;
    bool paper_scale = false;
    app.add_option("experiment", experiment,
                   "one of: mean-est, newsvendor, grad-proj, dispatch")
        ->required();
    app.add_option("--config", config_path, "JSON configuration file");
    const CLI::Option* seed_opt = app.add_option("--seed", seed, "master seed override");
    const CLI::Option* eps_opt =
        app.add_option("--eps", eps, "ambiguity radius override (newsvendor)");
    app.add_flag("--paper-scale", paper_scale,
                 "full-size sampling budgets instead of the desk-scale defaults");
    const CLI::Option* data_opt = app.add_option(
        "--data", data_source, "data source: 'synthetic' or 'csv:<path>' (dispatch)");
    const CLI::Option* out_opt = app.add_option("--out", out_dir, "output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        json config = json::object();
        if (!config_path.empty()) {
            std::ifstream in(config_path);
            if (!in)
                throw e2eso::ConfigError("cannot open config file: " + config_path);
            try {
                in >> config;
            } catch (const json::parse_error& e) {
                throw e2eso::ConfigError("config file is not valid JSON: " +
                                         std::string(e.what()));
            }
        }
        if (seed_opt->count() > 0)
            config["seed"] = seed;
        if (eps_opt->count() > 0)
            config["eps"] = eps;
        if (paper_scale)
            config["paper_scale"] = true;
        if (data_opt->count() > 0)
            config["data"] = data_source;
        if (out_opt->count() > 0)
            config["out_dir"] = out_dir;

        const evalcli::RunConfig cfg = evalcli::parse_run_config(config, experiment);
        std::cout << "running " << cfg.experiment << " (seed " << cfg.seed
                  << (cfg.paper_scale ? ", paper scale" : "") << ")\n";
        const evalcli::EvalReport report = evalcli::run_experiment(cfg);
        evalcli::emit_outputs(report, cfg.out_dir);
        std::cout << "wrote " << cfg.out_dir << "/summary.json\n";
        return 0;
    } catch (const e2eso::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const e2eso::IoError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 3;
    } catch (const e2eso::FormatError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 3;
    } catch (const e2eso::DivergenceError& e) {
        std::cerr << "training diverged: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
