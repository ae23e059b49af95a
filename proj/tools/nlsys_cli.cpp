// Command-line driver: one experiment per process.

#include <iostream>
#include <map>

#include <CLI11.hpp>

#include "nlsys/nlsys.hpp"

namespace {

struct Options {
    std::string config_path;
    std::map<std::string, std::string> flags;
};

void add_config_flags(CLI::App* sub, Options& opt) {
    sub->add_option("--config", opt.config_path, "flat JSON config file; flags override its keys");
    for (const auto& key : nlsys::config_keys()) {
        if (key.name == "experiment") continue;
        const std::string name = key.name;
        sub->add_option_function<std::string>(
               "--" + nlsys::flag_name(name), [&opt, name](const std::string& v) { opt.flags[name] = v; }, key.help)
            ->type_name("VALUE");
    }
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Coupled defocusing NLS systems: simulation, virial identities, scattering and GN checks"};
    app.require_subcommand(1);
    Options opt;
    bool quiet = false;
    app.add_flag("-q,--quiet", quiet, "only print the final status line");
    for (const auto& name : nlsys::experiments()) {
        auto* sub = app.add_subcommand(name, "run the " + name + " experiment");
        sub->fallthrough();
        add_config_flags(sub, opt);
    }
    CLI11_PARSE(app, argc, argv);

    const std::string experiment = app.get_subcommands().front()->get_name();
    nlsys::RunConfig cfg;
    try {
        const auto file = opt.config_path.empty() ? nlsys::json::object() : nlsys::read_config_file(opt.config_path);
        auto overrides = nlsys::overrides_from_flags(opt.flags);
        overrides["experiment"] = experiment;
        cfg = nlsys::build_config(file, overrides);
    } catch (const nlsys::UsageError& e) {
        std::cerr << e.what() << "\n";
        return nlsys::exit_check_failed;
    }

    std::ostringstream sink;
    std::ostream& log = quiet ? sink : std::cerr;
    nlsys::RunOutcome out;
    try {
        out = nlsys::run(cfg, log);
    } catch (const nlsys::UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return nlsys::exit_check_failed;
    }
    if (!quiet)
        for (const auto& c : out.checks)
            std::cerr << "  " << (c.passed ? "ok  " : "FAIL") << " " << c.name << " " << nlsys::format_double(c.value)
                      << " (limit " << nlsys::format_double(c.limit) << ")\n";
    std::cout << (out.exit_code == 0 ? "PASS" : "FAIL") << " " << experiment;
    if (!out.message.empty()) std::cout << ": " << out.message;
    std::cout << "\n";
    for (const auto& f : out.files) std::cout << "wrote " << f << "\n";
    return out.exit_code;
}
