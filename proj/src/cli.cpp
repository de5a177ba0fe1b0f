#include "effenv/cli.hpp"

#include "effenv/config_error.hpp"
#include "effenv/experiments.hpp"
#include "effenv/io.hpp"
#include "effenv/version.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>

namespace effenv {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct Flags {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string out_dir{"out"};
    std::optional<std::string> engine;
    std::optional<std::string> reset;
    std::optional<std::string> scenario;
};

// Splits the document into the scenario part and the per-command sections.
struct RunConfig {
    json scenario = json::object();
    json grid = json::object();
    json sweep = json::object();
};

json load_config(const std::string& path) {
    if (path.empty()) return json::object();
    std::ifstream in(path);
    if (!in) throw ConfigError("--config", "cannot open '" + path + "'");
    json doc;
    try {
        in >> doc;
    } catch (const json::parse_error& e) {
        throw ConfigError("--config", std::string("invalid JSON: ") + e.what());
    }
    if (!doc.is_object()) throw ConfigError("--config", "top level must be a JSON object");
    return doc;
}

RunConfig split_config(json doc, const Flags& flags) {
    RunConfig rc;
    for (const char* key : {"grid", "sweep"}) {
        if (doc.contains(key)) {
            (std::string(key) == "grid" ? rc.grid : rc.sweep) = doc.at(key);
            doc.erase(key);
        }
    }
    if (doc.contains("out")) {
        if (!doc.at("out").is_string()) throw ConfigError("out", "expected a string");
        doc.erase("out");
    }
    if (flags.scenario) doc["scenario"] = *flags.scenario;
    if (flags.seed) doc["seed"] = *flags.seed;
    if (flags.engine) doc["engine"] = *flags.engine;
    if (flags.reset) doc["reset"] = *flags.reset;
    rc.scenario = std::move(doc);
    return rc;
}

fs::path prepare_out(const std::string& dir) {
    fs::path p(dir);
    std::error_code ec;
    fs::create_directories(p, ec);
    if (ec) throw ConfigError("--out", "cannot create directory '" + dir + "': " + ec.message());
    return p;
}

std::string fmt(double v) { return format_number(v); }

int cmd_attractor_map(const RunConfig& rc, const fs::path& out_dir, std::ostream& out) {
    AttractorGrid grid;
    if (!rc.grid.empty()) from_json(rc.grid, grid);
    grid.validate();
    const auto cells = attractor_map(grid);
    const json config = {{"command", "attractor-map"}, {"version", kVersion}, {"grid", grid}};
    std::ostringstream csv;
    write_attractor_csv(csv, cells, config);
    const auto path = out_dir / "attractor_map.csv";
    write_text_file(path, csv.str());
    std::size_t frozen = 0;
    for (const auto& c : cells) frozen += c.freezing ? 1 : 0;
    out << "attractor-map: " << cells.size() << " cells (" << frozen << " without attractor) -> " << path.string()
        << '\n';
    return kExitOk;
}

void print_report(const ScenarioReport& r, std::ostream& out) {
    out << r.id << ": steps=" << r.steps << " engine=" << to_string(r.series.engine)
        << " reset=" << to_string(r.series.reset) << " beta=" << fmt(r.beta.beta) << " (bands " << r.beta.k_low
        << "-" << r.beta.k_high << ")\n";
    out << "  plateau rho00 = " << fmt(r.plateau);
    if (r.target) out << "  target = " << fmt(*r.target) << " +/- " << fmt(r.tolerance);
    out << "  T_eff = " << fmt(r.plateau_temperature.value) << '\n';
    for (const auto& [k, v] : r.metrics) out << "  " << k << " = " << fmt(v) << '\n';
    out << "  result: " << (r.pass ? "PASS" : "FAIL") << '\n';
}

void write_scenario_outputs(const ScenarioReport& r, const fs::path& out_dir, const std::string& stem) {
    json config = r.config;
    config["command"] = stem;
    config["version"] = kVersion;
    std::ostringstream csv;
    write_series_csv(csv, r.series, config);
    write_text_file(out_dir / (r.id + "_series.csv"), csv.str());
    write_json_file(out_dir / (r.id + "_report.json"), report_to_json(r));
}

int cmd_relax(const RunConfig& rc, const fs::path& out_dir, std::ostream& out, std::ostream& err) {
    const auto cfg = resolve_scenario(rc.scenario, "fig2");
    const auto report = run_relaxation(cfg);
    if (report.metrics.count("R") && report.metrics.at("R") > kSecondOrderLimit) {
        err << "warning: relaxation rate R = " << fmt(report.metrics.at("R"))
            << " per step exceeds the weak-coupling range\n";
    }
    write_scenario_outputs(report, out_dir, "relax");
    print_report(report, out);
    return report.pass ? kExitOk : kExitTolerance;
}

int cmd_freeze(const RunConfig& rc, const fs::path& out_dir, std::ostream& out) {
    const auto cfg = resolve_scenario(rc.scenario, "freeze");
    const auto report = verify_freezing(cfg);
    write_scenario_outputs(report, out_dir, "freeze");
    print_report(report, out);
    return report.pass ? kExitOk : kExitTolerance;
}

int cmd_sweep(const RunConfig& rc, const fs::path& out_dir, std::ostream& out) {
    SweepConfig s;
    if (rc.scenario.contains("params")) from_json(rc.scenario.at("params"), s.base);
    if (!rc.sweep.empty()) from_json(rc.sweep, s);
    const auto rows = sweep(s);
    const json config = {{"command", "sweep"}, {"version", kVersion}, {"sweep", s}};
    std::ostringstream csv;
    write_sweep_csv(csv, s, rows, config);
    const auto path = out_dir / ("sweep_" + s.quantity + ".csv");
    write_text_file(path, csv.str());
    out << "sweep: " << rows.size() << " rows of " << s.quantity << " -> " << path.string() << '\n';
    return kExitOk;
}

int cmd_env_inspect(const RunConfig& rc, std::ostream& out) {
    const auto cfg = resolve_scenario(rc.scenario, "custom");
    cfg.validate();
    const auto& spec = cfg.environment;
    out << "effenv " << kVersion << '\n';
    out << "config: " << json(cfg).dump() << '\n';
    out << "band  energy  degeneracy  in_range\n";
    for (int k = 0; k <= spec.n; ++k) {
        char line[128];
        std::snprintf(line, sizeof line, "%4d  %6.3f  %10lld  %s\n", k, k * spec.deltaB,
                      static_cast<long long>(binomial_degeneracy(spec.n, k)), spec.band_range.contains(k) ? "yes" : "no");
        out << line;
    }

    std::size_t dim = 0;
    for (int k = spec.band_range.lo; k <= spec.band_range.hi; ++k) {
        dim += 2 * static_cast<std::size_t>(binomial_degeneracy(spec.n, k));
    }
    out << "joint dimension: " << dim << '\n';
    if (dim <= kMaxHilbertDim) {
        const auto env = build_environment(spec);
        out << "coupling blocks (mean |C|^2 vs (N_k+1 N_k)^-1/2):\n";
        for (int k = spec.band_range.lo; k < spec.band_range.hi; ++k) {
            const auto& c = env.coupling(k);
            const double mean = c.cwiseAbs2().mean();
            const double expected = 1.0 / std::sqrt(static_cast<double>(c.rows()) * static_cast<double>(c.cols()));
            out << "  " << k << "->" << k + 1 << "  " << c.rows() << "x" << c.cols() << "  " << fmt(mean) << "  "
                << fmt(expected) << '\n';
        }
    }
    if (cfg.k0 > 0 && cfg.k0 < spec.n) {
        out << "beta at k0=" << cfg.k0 << ": log-approx "
            << fmt(beta_working_point(spec.n, cfg.k0, spec.deltaB, BetaMethod::log_approx)) << ", digamma "
            << fmt(beta_working_point(spec.n, cfg.k0, spec.deltaB, BetaMethod::digamma)) << '\n';
    }
    if (cfg.k0 > 0) out << "beta_eff(k0-1,k0) = " << fmt(effective_beta(spec.n, cfg.k0 - 1, cfg.k0, spec.deltaB)) << '\n';
    if (cfg.k0 < spec.n) {
        out << "beta_eff(k0,k0+1) = " << fmt(effective_beta(spec.n, cfg.k0, cfg.k0 + 1, spec.deltaB)) << '\n';
    }
    return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Measurement-controlled relaxation of a two-level system coupled to a banded spin environment",
                 "effenv"};
    app.set_version_flag("--version", std::string(kVersion));
    app.require_subcommand(1);
    app.fallthrough();

    Flags flags;
    app.add_option("--config", flags.config_path, "JSON configuration file");
    app.add_option("--seed", flags.seed, "master seed for sampled trajectories");
    app.add_option("--out", flags.out_dir, "output directory")->capture_default_str();
    app.add_option("--engine", flags.engine, "sampled | nonselective");
    app.add_option("--reset", flags.reset, "exact | coarse");
    app.add_option("--scenario", flags.scenario, "fig2 | fig3 | freeze | custom");

    auto* attractor_cmd = app.add_subcommand("attractor-map", "attractor over a (dt, detuning) grid");
    auto* relax_cmd = app.add_subcommand("relax", "run a relaxation scenario against its target plateau");
    auto* freeze_cmd = app.add_subcommand("freeze", "check state freezing at a freezing point");
    auto* sweep_cmd = app.add_subcommand("sweep", "1-D or 2-D sweep of an analytic quantity");
    auto* inspect_cmd = app.add_subcommand("env-inspect", "band table, degeneracies and beta estimates");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::CallForVersion&) {
        out << kVersion << '\n';
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << '\n';
        return kExitUsage;
    }

    try {
        const RunConfig rc = split_config(load_config(flags.config_path), flags);
        if (inspect_cmd->parsed()) return cmd_env_inspect(rc, out);
        const fs::path out_dir = prepare_out(flags.out_dir);
        if (attractor_cmd->parsed()) return cmd_attractor_map(rc, out_dir, out);
        if (relax_cmd->parsed()) return cmd_relax(rc, out_dir, out, err);
        if (freeze_cmd->parsed()) return cmd_freeze(rc, out_dir, out);
        if (sweep_cmd->parsed()) return cmd_sweep(rc, out_dir, out);
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const std::invalid_argument& e) {
        err << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitUsage;
    }
    err << "error: no subcommand\n";
    return kExitUsage;
}

}  // namespace effenv
