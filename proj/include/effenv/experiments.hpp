// experiments.hpp: scenario runners, attractor grids, sweeps and engine comparison

#pragma once

#include "effenv/analytics.hpp"
#include "effenv/dynamics.hpp"
#include "effenv/model.hpp"

#include <json.hpp>

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace effenv {

// Everything needed to run one relaxation (or freezing) experiment.
struct ScenarioConfig {
    std::string id{"custom"};
    ModelParams params;
    EnvironmentSpec environment;
    int k0{2};
    QubitState rho0 = QubitState::ground();
    int steps{0};  // 0: ceil(8/R)
    Engine engine{Engine::nonselective};
    ResetMode reset{ResetMode::coarse};
    int trajectories{1000};
    std::uint64_t seed{1};
    std::optional<double> analytic_beta;  // unset: derived from the participating band pair
    std::optional<double> target;
    std::string target_source;
    double tolerance{0.03};

    // Throws ConfigError naming the offending key.
    void validate() const;
};

void to_json(nlohmann::json& j, const ScenarioConfig& c);
// Reads onto the existing value, so callers start from a scenario's defaults.
void from_json(const nlohmann::json& j, ScenarioConfig& c);

ScenarioConfig fig2_defaults();
ScenarioConfig fig3_defaults();
ScenarioConfig freeze_defaults();
// "fig2", "fig3", "freeze" or "custom"; throws ConfigError("scenario") otherwise.
ScenarioConfig scenario_defaults(const std::string& name);
// Defaults for overrides["scenario"] (or `fallback`) with the remaining keys applied.
ScenarioConfig resolve_scenario(const nlohmann::json& overrides, const std::string& fallback = "custom");

// Inverse temperature seen by the dominant transition channel from band k0.
struct AnalyticBeta {
    double beta{0.0};
    int k_low{0};
    int k_high{0};
    bool overridden{false};
};

AnalyticBeta analytic_beta(const ScenarioConfig& c);
// ceil(8/R); throws when R vanishes.
int default_steps(const ModelParams& p, double beta);

struct ScenarioReport {
    std::string id;
    ScenarioConfig config;  // resolved: steps, beta and band range filled in
    AnalyticBeta beta;
    int steps{0};
    EnsembleSeries series;
    std::vector<double> analytic_rho00;  // closed form, one entry per step
    double plateau{0.0};
    double plateau_stderr{0.0};
    std::optional<double> target;
    std::string target_source;
    double tolerance{0.03};
    bool pass{true};
    double max_analytic_gap{0.0};
    EffectiveTemperature plateau_temperature;
    std::map<std::string, double> metrics;
    double wall_seconds{0.0};
};

nlohmann::json report_to_json(const ScenarioReport& r);

ScenarioReport run_relaxation(const ScenarioConfig& c);
ScenarioReport reproduce_fig2(const nlohmann::json& overrides = nlohmann::json::object());
ScenarioReport reproduce_fig3(const nlohmann::json& overrides = nlohmann::json::object());

// Freezing check from the configured initial state; throws std::invalid_argument
// ("not a freezing point") away from the freezing lattice.
ScenarioReport verify_freezing(const ScenarioConfig& c);

struct EngineComparison {
    double max_gap{0.0};      // max_j |recursion - exact|
    double plateau_gap{0.0};  // |plateau(recursion) - plateau(exact)|
    double analytic_plateau{0.0};
    double exact_plateau{0.0};
    int steps{0};
    bool pass{false};
};

EngineComparison compare_engines(const ScenarioConfig& c, double tolerance);

struct ZenoRow {
    double dt{0.0};
    double R{0.0};
    std::optional<double> analytic_half_life;  // ln 2 / R
    std::optional<int> exact_half_life;         // steps to cover half the way to the attractor
};

struct ZenoExactOptions {
    EnvironmentSpec environment;
    int k0{2};
    int max_steps{20000};
};

std::vector<ZenoRow> zeno_scan(const std::vector<double>& dts, const ModelParams& params, double beta,
                               const std::optional<ZenoExactOptions>& exact = std::nullopt);

struct AttractorGrid {
    double dt_max{4.0 * 3.141592653589793};  // dt_i = dt_max * i / dt_count, i = 1..dt_count
    int dt_count{400};
    double detuning_min{-0.9};
    double detuning_max{3.0};
    int detuning_count{400};
    double deltaS{1.0};
    double beta{0.75};
    double lambda{0.05};

    void validate() const;
};

void to_json(nlohmann::json& j, const AttractorGrid& g);
void from_json(const nlohmann::json& j, AttractorGrid& g);

struct AttractorCell {
    double dt{0.0};
    double detuning{0.0};
    std::optional<double> rho00_star;  // empty at freezing points
    bool freezing{false};
};

// Row-major over detuning (outer) and dt (inner).
std::vector<AttractorCell> attractor_map(const AttractorGrid& grid);

// Named analytic quantities evaluated at a parameter point (beta from params.beta).
const std::vector<std::string>& sweep_quantities();
const std::vector<std::string>& sweep_parameters();
// NaN where the quantity is undefined (no attractor, unreachable bound).
double evaluate_quantity(const std::string& name, const ModelParams& p);

struct SweepAxis {
    std::string param{"dt"};
    double min{0.0};
    double max{1.0};
    int count{11};

    std::vector<double> values() const;
};

struct SweepConfig {
    std::string quantity{"R"};
    std::vector<SweepAxis> axes{SweepAxis{}};
    ModelParams base = [] {
        ModelParams p;
        p.beta = 0.75;
        return p;
    }();

    void validate() const;
};

void to_json(nlohmann::json& j, const SweepConfig& s);
void from_json(const nlohmann::json& j, SweepConfig& s);

struct SweepRow {
    std::vector<double> coords;
    double value{0.0};
};

std::vector<SweepRow> sweep(const SweepConfig& s);

}  // namespace effenv
