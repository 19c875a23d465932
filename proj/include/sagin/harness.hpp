#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "sagin/agents.hpp"
#include "sagin/scenario.hpp"

namespace sagin::harness {

/// Seed lists: "1,2,7", "0-4", or a mix such as "0-2,9".
std::vector<std::uint64_t> parse_seeds(const std::string& text);

/// Worker count from SAGIN_THREADS, else the hardware concurrency (at least 1).
int thread_count();

struct ExperimentManifest {
    std::string scenario_path;
    agents::Algorithm algorithm = agents::Algorithm::qmarl;
    std::string action_preset = "custom";  // "2^k" or "custom"
    std::vector<std::uint64_t> seeds;
    std::string output_dir;
    agents::TrainingConfig training;
    int checkpoint_every = 0;  // epochs between checkpoints, 0 = never
    bool resume = false;
    bool step_csv = false;
    bool plots = true;
    int threads = 0;  // 0 = thread_count()

    void validate() const;
};

struct EpochRow {
    std::uint64_t seed = 0;
    agents::EpochMetrics metrics;
};

struct MetricStats {
    double mean = 0.0;          // over every epoch of every seed
    double final_mean = 0.0;    // mean over seeds of the per-seed final-decile mean
    double final_std = 0.0;     // population std-dev of those per-seed values
    double final_min = 0.0;
    double final_max = 0.0;
};

struct MetricSummary {
    std::string algorithm;
    std::string scenario;
    int action_bits = 0;
    int epochs = 0;
    std::vector<std::uint64_t> seeds;
    std::map<std::string, MetricStats> metrics;

    double final_reward() const { return metrics.at("normalized_reward").final_mean; }
};

/// Metric columns summarized, in CSV order.
const std::vector<std::string>& metric_names();
/// Last max(1, epochs / 10) epochs.
int final_window(int epochs);

MetricSummary summarize(const std::string& algorithm, const std::string& scenario, int action_bits,
                        const std::vector<EpochRow>& rows);

void write_epoch_header(std::ostream& os);
void write_epoch_row(std::ostream& os, const std::string& algorithm, const std::string& scenario, int action_bits,
                     const EpochRow& row);

struct EpochTable {
    std::string algorithm;
    std::string scenario;
    int action_bits = 0;
    std::vector<EpochRow> rows;
};
EpochTable read_epochs_csv(const std::string& path);

void write_summary_csv(const std::string& path, const MetricSummary& s);
MetricSummary read_summary_csv(const std::string& path);

/// Trains every seed (in parallel) and writes epochs.csv, summary.csv, manifest.txt and plots into output_dir.
MetricSummary run(const ExperimentManifest& manifest);

struct ComparisonTable {
    std::vector<std::string> algorithms;   // name order
    std::vector<int> action_bits;          // ascending
    /// raw[d][a] and normalized[d][a]; NaN where no summary exists.
    std::vector<std::vector<double>> raw;
    std::vector<std::vector<double>> normalized;
    /// ranking[d] lists algorithm indices, best first, ties by name.
    std::vector<std::vector<int>> ranking;
};

class ComparisonError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Final-decile normalized rewards per action dimension (rows) and algorithm (columns); each row is divided by
/// its maximum so the leader reads 1.0.
ComparisonTable compare(const std::vector<MetricSummary>& summaries);
void write_comparison(std::ostream& os, const ComparisonTable& t);
void write_ranking(std::ostream& os, const ComparisonTable& t);

struct Series {
    std::string label;
    std::vector<double> values;
};
/// Static line chart, epochs on x.
void write_svg_plot(const std::string& path, const std::string& title, const std::string& y_label,
                    const std::vector<Series>& series);

/// Ground stations from a scenario-style YAML file (the `ground_stations` list) or a CSV with
/// name,latitude_deg,longitude_deg,altitude_m.
std::vector<env::GroundStation> load_ground_stations(const std::string& path);

/// CSV of time_s, object, latitude_deg, longitude_deg, altitude_m, then slant_m_<station> per station.
/// Time is measured from the earliest TLE epoch.
void export_orbits(const std::vector<orbital::TleRecord>& tles, const std::vector<env::GroundStation>& stations,
                   double span, double step, std::ostream& os, const orbital::EarthConstants& earth = {},
                   orbital::AnomalyMode mode = orbital::AnomalyMode::FirstOrder);

}  // namespace sagin::harness
