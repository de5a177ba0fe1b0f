#include "effenv/io.hpp"

#include "effenv/version.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace effenv {

std::string format_number(double v) {
    if (std::isnan(v)) return "";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

void write_metadata_lines(std::ostream& os, const nlohmann::json& config) {
    os << "# effenv " << kVersion << '\n';
    os << "# config: " << config.dump() << '\n';
}

void write_series_csv(std::ostream& os, const EnsembleSeries& series, const nlohmann::json& config) {
    write_metadata_lines(os, config);
    os << "j,k,rho00,re_rho10,im_rho10,stderr\n";
    for (std::size_t j = 0; j < series.points.size(); ++j) {
        const auto& p = series.points[j];
        os << j << ",-," << format_number(p.mean.rho00) << ',' << format_number(p.mean.rho10.real()) << ','
           << format_number(p.mean.rho10.imag()) << ',' << format_number(p.stderr00) << '\n';
    }
}

void write_trajectory_csv(std::ostream& os, const Trajectory& trajectory, const nlohmann::json& config) {
    write_metadata_lines(os, config);
    os << "j,k,rho00,re_rho10,im_rho10,stderr\n";
    for (std::size_t j = 0; j < trajectory.points.size(); ++j) {
        const auto& p = trajectory.points[j];
        os << j << ',' << p.k << ',' << format_number(p.rho.rho00) << ',' << format_number(p.rho.rho10.real())
           << ',' << format_number(p.rho.rho10.imag()) << ",\n";
    }
}

void write_attractor_csv(std::ostream& os, const std::vector<AttractorCell>& cells, const nlohmann::json& config) {
    write_metadata_lines(os, config);
    os << "dt,detuning,rho00_star,is_freezing\n";
    for (const auto& c : cells) {
        os << format_number(c.dt) << ',' << format_number(c.detuning) << ','
           << (c.rho00_star ? format_number(*c.rho00_star) : std::string{}) << ',' << (c.freezing ? 1 : 0) << '\n';
    }
}

void write_sweep_csv(std::ostream& os, const SweepConfig& sweep, const std::vector<SweepRow>& rows,
                     const nlohmann::json& config) {
    write_metadata_lines(os, config);
    for (const auto& a : sweep.axes) os << a.param << ',';
    os << sweep.quantity << '\n';
    for (const auto& r : rows) {
        for (double c : r.coords) os << format_number(c) << ',';
        os << format_number(r.value) << '\n';
    }
}

nlohmann::json series_to_json(const EnsembleSeries& series, const nlohmann::json& config, double wall_seconds) {
    nlohmann::json j;
    j["version"] = kVersion;
    j["config"] = config;
    j["engine"] = to_string(series.engine);
    j["reset"] = to_string(series.reset);
    j["trajectories"] = series.trajectories;
    j["master_seed"] = series.master_seed;
    j["max_leak"] = series.max_leak;
    nlohmann::json points = nlohmann::json::array();
    for (std::size_t i = 0; i < series.points.size(); ++i) {
        const auto& p = series.points[i];
        points.push_back({{"j", i},
                          {"rho00", p.mean.rho00},
                          {"re_rho10", p.mean.rho10.real()},
                          {"im_rho10", p.mean.rho10.imag()},
                          {"stderr", p.stderr00},
                          {"stderr_re_rho10", p.stderr_re10},
                          {"stderr_im_rho10", p.stderr_im10}});
    }
    j["points"] = points;
    j["metadata"] = {{"wall_time_seconds", wall_seconds}};
    return j;
}

nlohmann::json trajectory_to_json(const Trajectory& trajectory, const nlohmann::json& config, double wall_seconds) {
    nlohmann::json j;
    j["version"] = kVersion;
    j["config"] = config;
    j["seed"] = trajectory.seed;
    j["reset"] = to_string(trajectory.reset);
    j["max_leak"] = trajectory.max_leak;
    nlohmann::json points = nlohmann::json::array();
    for (std::size_t i = 0; i < trajectory.points.size(); ++i) {
        const auto& p = trajectory.points[i];
        points.push_back({{"j", i},
                          {"k", p.k},
                          {"rho00", p.rho.rho00},
                          {"re_rho10", p.rho.rho10.real()},
                          {"im_rho10", p.rho.rho10.imag()},
                          {"probability", p.probability}});
    }
    j["points"] = points;
    j["metadata"] = {{"wall_time_seconds", wall_seconds}};
    return j;
}

void write_text_file(const std::filesystem::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
    out << content;
    if (!out) throw std::runtime_error("failed writing '" + path.string() + "'");
}

void write_json_file(const std::filesystem::path& path, const nlohmann::json& doc) {
    write_text_file(path, doc.dump(2) + "\n");
}

}  // namespace effenv
