// afcsim: scenario runner for the AFC memory simulator.
//
// Exit codes: 0 success, 1 configuration or input error, 2 fit did not
// converge, 3 physics validation failure, 4 manifest mismatch.

#include <afcsim/analysis.hpp>
#include <afcsim/config.hpp>
#include <afcsim/csv.hpp>
#include <afcsim/errors.hpp>
#include <afcsim/scenario.hpp>

#include <CLI11.hpp>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

namespace {

using namespace afcsim;

enum Exit { ok = 0, config_error = 1, not_converged = 2, physics_error = 3, manifest_mismatch = 4 };

std::string default_out_dir(const config::Config& c) { return "out/" + c.scenario(); }

void print_written(const std::vector<std::string>& paths)
{
    for (const auto& p : paths) {
        std::cout << "wrote " << p << '\n';
    }
}

io::Report fit_report(const analysis::FitResult& f)
{
    io::Report r;
    r.set("model", f.model);
    r.set("converged", f.converged);
    for (std::size_t i = 0; i < f.names.size(); ++i) {
        r.set(f.names[i], f.values[i]);
        r.set(f.names[i] + "_sigma", f.sigmas[i]);
    }
    r.set("residual_rms", f.residual_rms);
    for (std::size_t i = 0; i < f.notes.size(); ++i) {
        r.set("note" + std::to_string(i + 1), f.notes[i]);
    }
    return r;
}

io::Table load_table(const std::string& path)
{
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot open '" + path + "'");
    }
    return io::read_table(in, path);
}

/// Trace from a time_us column and a signal column (absorption or intensity).
Trace signal_trace(const io::Table& t, const std::string& path)
{
    const int ct = t.column("time_us");
    int cs = t.column("absorption");
    if (cs < 0) {
        cs = t.column("intensity");
    }
    if (ct < 0 || cs < 0) {
        throw ConfigError(path + ": rabi fit needs columns time_us and absorption (or intensity)");
    }
    if (t.rows.size() < 5) {
        throw ConfigError(path + ": too few samples");
    }
    Trace tr;
    tr.t0_us = t.rows[0][static_cast<std::size_t>(ct)];
    tr.dt_us = t.rows[1][static_cast<std::size_t>(ct)] - tr.t0_us;
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
        const double expect = tr.t0_us + static_cast<double>(i) * tr.dt_us;
        if (std::abs(t.rows[i][static_cast<std::size_t>(ct)] - expect) > 1e-6 * std::abs(tr.dt_us)) {
            throw ConfigError(path + ": time grid is not uniform at row " + std::to_string(i + 2),
                              static_cast<int>(i + 2));
        }
        tr.intensity.push_back(t.rows[i][static_cast<std::size_t>(cs)]);
    }
    return tr;
}

int run_fit(const std::string& path, const std::string& model, std::optional<double> notch, const std::string& output)
{
    const auto table = load_table(path);
    analysis::FitResult result;
    if (model == "rabi") {
        const auto x = analysis::extract_rabi(signal_trace(table, path), notch);
        result = x.t_pi;
        if (x.j1.converged) {
            result.add("omega_j1", x.j1.value("omega"), x.j1.sigma("omega"));
        }
        if (x.model_mismatch) {
            result.notes.push_back("model mismatch: full-curve J1 fit rejected");
        }
    } else {
        if (table.columns.size() < 2) {
            throw ConfigError(path + ": point fits need two columns (x, y)");
        }
        std::vector<analysis::Point> pts;
        for (const auto& row : table.rows) {
            pts.push_back({row[0], row[1]});
        }
        result = model == "exponential" ? analysis::fit_exponential_decay(pts) : analysis::fit_gaussian_decay(pts);
    }
    const auto report = fit_report(result);
    std::cout << report.str();
    if (!output.empty()) {
        std::ofstream os(output);
        if (!os) {
            throw ConfigError("cannot write '" + output + "'");
        }
        report.write(os);
    }
    return result.converged ? ok : not_converged;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"afcsim: atomic frequency comb memory simulator"};
    app.require_subcommand(1);
    app.fallthrough();

    std::string out_dir;
    int threads = 1;
    std::uint64_t seed = 0;
    app.add_option("--out-dir", out_dir, "artifact directory (default out/<scenario>)");
    app.add_option("--threads", threads, "worker threads; results do not depend on it")->check(CLI::PositiveNumber);
    app.add_option("--seed", seed, "recorded in the report; all scenarios are noiseless");

    std::string config_path;
    auto* prepare = app.add_subcommand("prepare", "run the spectral preparation only and write profiles");
    prepare->add_option("config", config_path, "scenario config")->required();
    auto* run = app.add_subcommand("run", "run a scenario and write its artifacts with a manifest");
    run->add_option("config", config_path, "scenario config")->required();
    auto* validate = app.add_subcommand("validate", "check a config and list effective values");
    validate->add_option("config", config_path, "scenario config")->required();

    std::string fit_path;
    std::string model;
    std::optional<double> notch;
    std::string fit_output;
    auto* fit = app.add_subcommand("fit", "fit a point or trace CSV");
    fit->add_option("csv", fit_path, "input CSV")->required();
    fit->add_option("--model", model, "exponential | gaussian | rabi")
        ->required()
        ->check(CLI::IsMember({"exponential", "gaussian", "rabi"}));
    fit->add_option("--notch-mhz", notch, "beat frequency removed before the rabi fit");
    fit->add_option("--output", fit_output, "also write the report to this file");

    std::string report_dir;
    auto* report = app.add_subcommand("report", "verify a manifest and print the scenario report");
    report->add_option("dir", report_dir, "artifact directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? ok : config_error;
    }

    try {
        const scenario::RunOptions opts{threads, seed};
        if (*prepare || *run) {
            const auto cfg = config::Config::load(config_path);
            const auto artifacts = *run ? scenario::run(cfg, opts) : scenario::prepare(cfg, opts);
            print_written(scenario::write_artifacts(artifacts, out_dir.empty() ? default_out_dir(cfg) : out_dir));
            return ok;
        }
        if (*validate) {
            const auto cfg = config::Config::load(config_path);
            std::cout << scenario::validate(cfg).str();
            return ok;
        }
        if (*fit) {
            return run_fit(fit_path, model, notch, fit_output);
        }
        if (*report) {
            const auto check = scenario::verify_manifest(report_dir);
            std::ifstream in(std::filesystem::path(report_dir) / "report.txt");
            std::cout << in.rdbuf();
            std::cout << "manifest.entries=" << check.entries << '\n';
            for (const auto& m : check.missing) {
                std::cout << "manifest.missing=" << m << '\n';
            }
            for (const auto& m : check.mismatched) {
                std::cout << "manifest.mismatch=" << m << '\n';
            }
            std::cout << "manifest.status=" << (check.ok() ? "verified" : "failed") << '\n';
            return check.ok() ? ok : manifest_mismatch;
        }
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return config_error;
    } catch (const PhysicsError& e) {
        std::cerr << "physics error: " << e.what() << '\n';
        return physics_error;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return config_error;
    }
    return ok;
}
