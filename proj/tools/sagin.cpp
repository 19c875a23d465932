// sagin: run experiments, compare summaries, export orbits, dump scenario presets.
#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "sagin/harness.hpp"
#include "sagin/orbital.hpp"
#include "sagin/scenario.hpp"

namespace {

// Exit codes.
constexpr int kUsage = 2;
constexpr int kIo = 3;
constexpr int kCompare = 4;

using namespace sagin;

int run_cmd(harness::ExperimentManifest m, const std::string& algo, const std::string& seeds, const std::string& shift,
            const std::string& critic) {
    try {
        m.algorithm = agents::parse_algorithm(algo);
        m.seeds = harness::parse_seeds(seeds);
        m.training.seeds = m.seeds;
        if (shift == "half") m.training.shift_rule = qc::ShiftRule::Half;
        else if (shift == "verbatim") m.training.shift_rule = qc::ShiftRule::Verbatim;
        else throw std::invalid_argument("--shift must be half or verbatim");
        if (critic == "quantum") m.training.critic = agents::CriticKind::quantum;
        else if (critic == "classical") m.training.critic = agents::CriticKind::classical;
        else throw std::invalid_argument("--critic must be quantum or classical");
        m.validate();
    } catch (const std::invalid_argument& e) {
        std::cerr << "usage error: " << e.what() << '\n';
        return kUsage;
    }
    if (!std::ifstream(m.scenario_path)) {
        std::cerr << "I/O error: cannot read scenario " << m.scenario_path << '\n';
        return kIo;
    }
    try {
        const auto s = harness::run(m);
        const auto& r = s.metrics.at("normalized_reward");
        std::cout << s.algorithm << " on " << s.scenario << " (2^" << s.action_bits << "), " << s.seeds.size() << " seed(s) x "
                  << s.epochs << " epochs: final normalized reward " << r.final_mean << " +/- " << r.final_std << '\n'
                  << "wrote " << m.output_dir << "/epochs.csv and summary.csv\n";
    } catch (const std::invalid_argument& e) {
        std::cerr << "usage error: " << e.what() << '\n';
        return kUsage;
    }
    return 0;
}

int compare_cmd(const std::vector<std::string>& dirs, const std::string& out) {
    std::vector<harness::MetricSummary> sums;
    for (const auto& d : dirs) {
        const auto p = std::filesystem::is_directory(d) ? (std::filesystem::path(d) / "summary.csv").string() : d;
        try {
            sums.push_back(harness::read_summary_csv(p));
        } catch (const std::exception& e) {
            std::cerr << "I/O error: " << e.what() << '\n';
            return kIo;
        }
    }
    try {
        const auto t = harness::compare(sums);
        harness::write_comparison(std::cout, t);
        if (!out.empty()) {
            std::filesystem::create_directories(out);
            std::ofstream table(std::filesystem::path(out) / "comparison.csv");
            std::ofstream rank(std::filesystem::path(out) / "ranking.csv");
            if (!table || !rank) {
                std::cerr << "I/O error: cannot write into " << out << '\n';
                return kIo;
            }
            harness::write_comparison(table, t);
            harness::write_ranking(rank, t);
        }
    } catch (const harness::ComparisonError& e) {
        std::cerr << "comparison error: " << e.what() << '\n';
        return kCompare;
    }
    return 0;
}

int orbits_cmd(const std::string& tle, const std::string& gs, double span, double step, bool newton, const std::string& out) {
    std::vector<orbital::TleRecord> recs;
    std::vector<env::GroundStation> stations;
    try {
        recs = orbital::load_tle_file(tle);
        stations = harness::load_ground_stations(gs);
    } catch (const std::exception& e) {
        std::cerr << "I/O error: " << e.what() << '\n';
        return kIo;
    }
    const auto mode = newton ? orbital::AnomalyMode::Newton : orbital::AnomalyMode::FirstOrder;
    try {
        if (out.empty() || out == "-") {
            harness::export_orbits(recs, stations, span, step, std::cout, {}, mode);
        } else {
            std::ofstream os(out);
            if (!os) {
                std::cerr << "I/O error: cannot write " << out << '\n';
                return kIo;
            }
            harness::export_orbits(recs, stations, span, step, os, {}, mode);
        }
    } catch (const std::invalid_argument& e) {
        std::cerr << "usage error: " << e.what() << '\n';
        return kUsage;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"SAGIN scheduling experiments"};
    app.require_subcommand(1);

    harness::ExperimentManifest m;
    std::string algo, seeds = "0", shift = "half", critic = "quantum";
    auto* run = app.add_subcommand("run", "train one algorithm over a seed list");
    run->add_option("--scenario", m.scenario_path, "scenario YAML file")->required();
    run->add_option("--algo", algo, "qmarl, marl, iql, dqn or random")->required();
    run->add_option("--preset", m.action_preset, "action dimension 2^k, or custom");
    run->add_option("--seeds", seeds, "e.g. 0-4 or 1,2,7");
    run->add_option("--out", m.output_dir, "output directory")->required();
    run->add_option("--epochs", m.training.epochs);
    run->add_option("--layers", m.training.actor_layers, "actor circuit layers");
    run->add_option("--actor-rate", m.training.actor_rate);
    run->add_option("--critic-rate", m.training.critic_rate);
    run->add_option("--update-chunk", m.training.update_chunk, "actor-critic transitions per optimizer step");
    run->add_option("--critic", critic, "quantum or classical centralized critic (qmarl, marl)");
    run->add_option("--shift", shift, "half or verbatim");
    run->add_option("--checkpoint-every", m.checkpoint_every, "epochs between checkpoints");
    run->add_flag("--resume", m.resume, "continue from checkpoints in --out");
    run->add_flag("--step-csv", m.step_csv, "also write per-step link CSVs");
    run->add_flag("!--no-plots", m.plots, "skip SVG plots");
    run->add_option("--threads", m.threads, "worker threads (default SAGIN_THREADS or cores)");

    std::vector<std::string> dirs;
    std::string cmp_out;
    auto* cmp = app.add_subcommand("compare", "final-decile table across run directories");
    cmp->add_option("--in", dirs, "run directories or summary.csv files")->required()->expected(1, -1);
    cmp->add_option("--out", cmp_out, "directory for comparison.csv and ranking.csv");

    std::string tle, gs, orb_out;
    double span = 0, step = 60;
    bool newton = false;
    auto* orb = app.add_subcommand("orbits", "export subpoints and slant ranges from a TLE file");
    orb->add_option("--tle", tle)->required();
    orb->add_option("--gs", gs, "ground stations, YAML or CSV")->required();
    orb->add_option("--span", span, "seconds")->required();
    orb->add_option("--step", step, "seconds");
    orb->add_flag("--newton", newton, "solve Kepler's equation instead of the first-order anomaly");
    orb->add_option("--out", orb_out, "CSV path (default stdout)");

    std::string preset, scen_out;
    auto* scen = app.add_subcommand("scenario", "write a built-in scenario preset as YAML");
    scen->add_option("--preset", preset, "tiny, small, extended or paper")->required();
    scen->add_option("--out", scen_out, "YAML path (default stdout)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : kUsage;
    }

    try {
        if (*run) return run_cmd(m, algo, seeds, shift, critic);
        if (*cmp) return compare_cmd(dirs, cmp_out);
        if (*orb) return orbits_cmd(tle, gs, span, step, newton, orb_out);
        if (*scen) {
            env::ScenarioConfig cfg;
            try {
                cfg = env::make_preset(preset);
            } catch (const std::invalid_argument& e) {
                std::cerr << "usage error: " << e.what() << '\n';
                return kUsage;
            }
            if (scen_out.empty()) std::cout << env::dump_scenario(cfg);
            else env::save_scenario(cfg, scen_out);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
