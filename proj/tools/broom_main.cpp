// broom: validate, simulate, rehearse, generate and serve models.

#include <csignal>
#include <filesystem>
#include <iostream>

#include "CLI11.hpp"
#include "broom/codegen.hpp"
#include "broom/dsl.hpp"
#include "broom/model.hpp"
#include "broom/scenario.hpp"
#include "broom/server.hpp"
#include "broom/sim.hpp"

namespace {

using namespace broom;

enum Exit { kOk = 0, kDiagnostics = 1, kRehearsal = 2, kRuntime = 3, kUsage = 4 };

struct Failure {
    int code;
};

void print(const std::vector<Diagnostic>& diags) {
    for (const auto& d : diags) std::cerr << format_diagnostic(d) << "\n";
}

ModelUnit load(const std::string& path) {
    auto r = dsl::parse_file(path);
    if (!r.ok()) {
        print(r.diagnostics);
        throw Failure{kDiagnostics};
    }
    auto diags = validate(*r.model);
    print(diags);
    for (const auto& d : diags) {
        if (!d.is_warning()) throw Failure{kDiagnostics};
    }
    return std::move(*r.model);
}

InstanceTree tree_of(const std::string& path) { return instantiate(load(path)); }

void check(const InstanceTree& tree, const SimConfig& cfg) {
    auto diags = check_config(tree, cfg);
    print(diags);
    for (const auto& d : diags) {
        if (!d.is_warning()) throw Failure{kUsage};
    }
}

struct RunFlags {
    double dt = 0.010;
    std::int64_t snapshot_every = 1;
    std::int64_t drain_cap = 10000;

    void add(CLI::App* app) {
        app->add_option("--dt", dt, "Step size in seconds")->capture_default_str();
        app->add_option("--snapshot-every", snapshot_every, "Sample every N ticks")->capture_default_str();
        app->add_option("--drain-cap", drain_cap, "Messages per tick before E_LIVELOCK")->capture_default_str();
    }
    SimConfig config(double duration) const {
        SimConfig c;
        c.dt = dt;
        c.duration = duration;
        c.snapshot_every = snapshot_every;
        c.drain_cap = drain_cap;
        return c;
    }
};

std::unique_ptr<experiment::Server> g_server;

void on_signal(int) {
    if (g_server) g_server->stop();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Hierarchical actor models: validate, simulate, rehearse, generate C, serve experiments."};
    app.require_subcommand(0, 1);
    app.set_version_flag("--version", std::string("broom ") + BROOM_VERSION);

    std::string model;
    RunFlags flags;

    auto* validate_cmd = app.add_subcommand("validate", "Check a model; diagnostics go to stderr");
    validate_cmd->add_option("model", model, "Model file")->required();

    double duration = 0.0;
    std::string stimuli_path, trace_path;
    auto* sim_cmd = app.add_subcommand("sim", "Run a model and write its NDJSON trace");
    sim_cmd->add_option("model", model, "Model file")->required();
    sim_cmd->add_option("--duration", duration, "Simulated seconds")->required();
    sim_cmd->add_option("--stimuli", stimuli_path, "Stimulus script (JSON)");
    sim_cmd->add_option("--trace", trace_path, "Trace file (default: stdout)");
    flags.add(sim_cmd);

    std::string package_path, report_path;
    auto* rehearse_cmd = app.add_subcommand("rehearse", "Rehearse a scenario package");
    rehearse_cmd->add_option("model", model, "Model file")->required();
    rehearse_cmd->add_option("--package", package_path, "Scenario package (JSON)")->required();
    rehearse_cmd->add_option("--report", report_path, "Report file (default: stdout)");
    double rehearse_duration = 10.0;
    rehearse_cmd->add_option("--duration", rehearse_duration, "Seconds per scenario unless the package says otherwise")
        ->capture_default_str();
    flags.add(rehearse_cmd);

    std::string out_dir;
    bool trace_shim = false;
    double codegen_duration = 100.0;
    auto* codegen_cmd = app.add_subcommand("codegen", "Generate C89 sources");
    codegen_cmd->add_option("model", model, "Model file")->required();
    codegen_cmd->add_option("-o,--output", out_dir, "Output directory")->required();
    codegen_cmd->add_flag("--trace-shim", trace_shim, "Also emit trace_shim.c and a driver.c replaying --stimuli");
    codegen_cmd->add_option("--duration", codegen_duration, "Seconds the driver runs (MODEL_TICKS)")->capture_default_str();
    codegen_cmd->add_option("--stimuli", stimuli_path, "Stimulus script compiled into driver.c");
    flags.add(codegen_cmd);

    experiment::ServeOptions serve_opts;
    auto* serve_cmd = app.add_subcommand("serve", "Serve an on-line experiment at ws://host:port/experiment");
    serve_cmd->add_option("model", model, "Model file")->required();
    serve_cmd->add_option("--port", serve_opts.port, "TCP port")->required();
    serve_cmd->add_option("--host", serve_opts.host, "Listen address")->capture_default_str();
    serve_cmd->add_option("--speed", serve_opts.speed, "Wall-clock speed multiplier")->capture_default_str()->check(
        CLI::PositiveNumber);
    serve_cmd->add_option("--static", serve_opts.static_dir, "Directory of console assets (default: ui/dist if present)");
    serve_cmd->add_flag("--paused", serve_opts.start_paused, "Start paused");
    flags.add(serve_cmd);

    bool write = false;
    auto* fmt_cmd = app.add_subcommand("fmt", "Print the canonical rendering of a model");
    fmt_cmd->add_option("model", model, "Model file")->required();
    fmt_cmd->add_flag("--write", write, "Rewrite the file in place");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kUsage;
    }
    if (app.get_subcommands().empty()) {
        std::cerr << app.help();
        return kUsage;
    }

    try {
        if (*validate_cmd) {
            tree_of(model);
            return kOk;
        }
        if (*sim_cmd) {
            const auto tree = tree_of(model);
            const auto cfg = flags.config(duration);
            check(tree, cfg);
            const auto stimuli = stimuli_path.empty() ? std::vector<Stimulus>{} : load_stimuli(stimuli_path);
            const Trace t = run(tree, cfg, stimuli);
            const std::string text = to_ndjson(t);
            if (trace_path.empty()) {
                std::cout << text;
            } else {
                write_file(trace_path, text);
            }
            if (const auto* err = t.error()) {
                std::cerr << err->name << " at tick " << err->tick << " in " << err->src << ": "
                          << std::get<std::string>(err->payload.at(0)) << "\n";
                return kRuntime;
            }
            return kOk;
        }
        if (*rehearse_cmd) {
            const auto tree = tree_of(model);
            const auto cfg = flags.config(rehearse_duration);
            check(tree, cfg);
            const auto pkg = load_package(package_path);
            const auto results = rehearse_package(tree, cfg, pkg);
            const auto conflicts = detect_conflicts(pkg);
            const std::string report = report_json(pkg, results, conflicts);
            if (report_path.empty()) {
                std::cout << report;
            } else {
                write_file(report_path, report);
            }
            bool ok = true;
            for (const auto& r : results) {
                std::cerr << (r.ok() ? "pass " : "FAIL ") << priority_name(r.priority) << " " << r.name;
                if (r.verdict.divergence) {
                    const auto& d = *r.verdict.divergence;
                    for (const auto& e : pkg.entries) {
                        if (e.scenario.name == r.name && d.arrow < e.scenario.arrows.size()) {
                            std::cerr << ": arrow " << d.arrow << " (" << arrow_text(e.scenario.arrows[d.arrow]) << ") "
                                      << reason_name(d.reason) << " at event " << d.trace_position;
                        }
                    }
                }
                for (const auto& v : r.timeliness.violations) {
                    std::cerr << "; " << v.instance << " took " << v.actual_ticks << " ticks for " << v.trigger << " (deadline "
                              << v.deadline_ticks << ")";
                }
                if (r.error) std::cerr << ": " << *r.error;
                std::cerr << "\n";
                ok = ok && r.ok();
            }
            for (const auto& c : conflicts) {
                std::cerr << "warning: scenarios '" << c.first << "' and '" << c.second << "' diverge after "
                          << c.shared_prefix.size() << " shared arrows: " << arrow_text(c.next_first) << " vs "
                          << arrow_text(c.next_second) << "\n";
            }
            return ok ? kOk : kRehearsal;
        }
        if (*codegen_cmd) {
            const auto tree = tree_of(model);
            const auto cfg = flags.config(codegen_duration);
            check(tree, cfg);
            const auto fp = codegen::flatten(tree, cfg);
            auto files = codegen::emit(fp, codegen::CodegenConfig{trace_shim});
            if (trace_shim) {
                const auto stimuli = stimuli_path.empty() ? std::vector<Stimulus>{} : load_stimuli(stimuli_path);
                files["driver.c"] = codegen::emit_driver(fp, stimuli);
            }
            codegen::write_sources(out_dir, files);
            return kOk;
        }
        if (*serve_cmd) {
            const auto tree = tree_of(model);
            const auto cfg = flags.config(0.0);
            check(tree, cfg);
            if (serve_opts.static_dir.empty() && std::filesystem::is_directory("ui/dist")) serve_opts.static_dir = "ui/dist";
            g_server = std::make_unique<experiment::Server>(tree, cfg, serve_opts);
            std::signal(SIGINT, on_signal);
            std::signal(SIGTERM, on_signal);
            std::cerr << "serving " << tree.program->model_name << " at ws://" << serve_opts.host << ":" << g_server->port()
                      << "/experiment\n";
            g_server->start();
            g_server->wait();
            g_server.reset();
            return kOk;
        }
        if (*fmt_cmd) {
            auto r = dsl::parse_file(model);
            if (!r.ok()) {
                print(r.diagnostics);
                return kDiagnostics;
            }
            const std::string text = dsl::render(*r.model);
            if (write) {
                write_file(model, text);
            } else {
                std::cout << text;
            }
            return kOk;
        }
    } catch (const Failure& f) {
        return f.code;
    } catch (const DiagnosticError& e) {
        print(e.diagnostics());
        return kDiagnostics;
    } catch (const Error& e) {
        std::cerr << e.what() << "\n";
        if (e.code() == code::runtime || e.code() == code::livelock || e.code() == code::halted) return kRuntime;
        if (e.code() == code::unsupported) return kDiagnostics;
        return kUsage;
    }
    return kOk;
}
