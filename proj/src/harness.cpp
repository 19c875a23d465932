#include "sagin/harness.hpp"

#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <limits>
#include <mutex>
#include <set>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace sagin::harness {

namespace fs = std::filesystem;

namespace {

std::string num(double v) {
    char buf[32];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, end);
}

double to_double(const std::string& s, const std::string& what) {
    double v = 0.0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) throw std::runtime_error("bad number '" + s + "' in " + what);
    return v;
}

std::uint64_t to_u64(const std::string& s, const std::string& what) {
    std::uint64_t v = 0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) throw std::runtime_error("bad integer '" + s + "' in " + what);
    return v;
}

std::vector<std::string> split(const std::string& line, char sep) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream is(line);
    while (std::getline(is, cur, sep)) out.push_back(cur);
    if (!line.empty() && line.back() == sep) out.emplace_back();
    return out;
}

std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return {};
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

std::ifstream open_in(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot read " + path);
    return is;
}

std::ofstream open_out(const std::string& path) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write " + path);
    return os;
}

const char* const kEpochHeader =
    "algorithm,scenario,action_bits,seed,epoch,reward,normalized_reward,qos,capacity,residual_cubesat,residual_uav,critic_loss";

double metric_value(const agents::EpochMetrics& m, const std::string& name) {
    if (name == "normalized_reward") return m.normalized_reward;
    if (name == "reward") return m.reward;
    if (name == "qos") return m.qos;
    if (name == "capacity") return m.capacity;
    if (name == "residual_cubesat") return m.residual_cubesat;
    if (name == "residual_uav") return m.residual_uav;
    throw std::invalid_argument("unknown metric " + name);
}

std::string seed_list(const std::vector<std::uint64_t>& seeds) {
    std::string s;
    for (std::size_t k = 0; k < seeds.size(); ++k) s += (k ? ";" : "") + std::to_string(seeds[k]);
    return s;
}

std::string bits_label(int bits) { return "2^" + std::to_string(bits); }

std::string xml(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

}  // namespace

std::vector<std::uint64_t> parse_seeds(const std::string& text) {
    std::vector<std::uint64_t> out;
    for (const auto& raw : split(text, ',')) {
        const auto part = trim(raw);
        if (part.empty()) throw std::invalid_argument("empty entry in seed list '" + text + "'");
        const auto dash = part.find('-');
        if (dash == std::string::npos) {
            out.push_back(to_u64(part, "seed list"));
            continue;
        }
        const auto lo = to_u64(trim(part.substr(0, dash)), "seed list");
        const auto hi = to_u64(trim(part.substr(dash + 1)), "seed list");
        if (hi < lo || hi - lo > 100000) throw std::invalid_argument("bad seed range '" + part + "'");
        for (auto s = lo; s <= hi; ++s) out.push_back(s);
    }
    if (out.empty()) throw std::invalid_argument("seed list is empty");
    return out;
}

int thread_count() {
    if (const char* env = std::getenv("SAGIN_THREADS")) {
        const int n = std::atoi(env);
        if (n >= 1) return n;
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

void ExperimentManifest::validate() const {
    if (scenario_path.empty()) throw std::invalid_argument("manifest: scenario path is required");
    if (output_dir.empty()) throw std::invalid_argument("manifest: output directory is required");
    if (seeds.empty()) throw std::invalid_argument("manifest: seed list is empty");
    if (std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() != seeds.size())
        throw std::invalid_argument("manifest: duplicate seeds");
    if (checkpoint_every < 0) throw std::invalid_argument("manifest: checkpoint interval must be non-negative");
    if (action_preset != "custom" && action_preset.rfind("2^", 0) != 0)
        throw std::invalid_argument("manifest: action preset must be 2^k or custom");
    training.validate();
}

const std::vector<std::string>& metric_names() {
    static const std::vector<std::string> names{"normalized_reward", "reward", "qos", "capacity", "residual_cubesat", "residual_uav"};
    return names;
}

int final_window(int epochs) { return std::max(1, epochs / 10); }

MetricSummary summarize(const std::string& algorithm, const std::string& scenario, int action_bits,
                        const std::vector<EpochRow>& rows) {
    MetricSummary s;
    s.algorithm = algorithm;
    s.scenario = scenario;
    s.action_bits = action_bits;
    std::map<std::uint64_t, std::vector<const agents::EpochMetrics*>> by_seed;
    for (const auto& r : rows) {
        if (!by_seed.count(r.seed)) s.seeds.push_back(r.seed);
        by_seed[r.seed].push_back(&r.metrics);
    }
    if (rows.empty()) {
        for (const auto& m : metric_names()) s.metrics[m] = {};
        return s;
    }
    s.epochs = static_cast<int>(by_seed.at(s.seeds.front()).size());
    for (const auto& seed : s.seeds) {
        if (static_cast<int>(by_seed[seed].size()) != s.epochs) throw std::runtime_error("seeds have different epoch counts");
    }
    const int window = final_window(s.epochs);
    for (const auto& name : metric_names()) {
        MetricStats st;
        double all = 0.0;
        std::vector<double> finals;
        for (const auto& seed : s.seeds) {
            const auto& ms = by_seed[seed];
            double tail = 0.0;
            for (int e = 0; e < s.epochs; ++e) {
                const double v = metric_value(*ms[static_cast<std::size_t>(e)], name);
                all += v;
                if (e >= s.epochs - window) tail += v;
            }
            finals.push_back(tail / window);
        }
        st.mean = all / static_cast<double>(rows.size());
        for (double f : finals) st.final_mean += f;
        st.final_mean /= static_cast<double>(finals.size());
        for (double f : finals) st.final_std += (f - st.final_mean) * (f - st.final_mean);
        st.final_std = std::sqrt(st.final_std / static_cast<double>(finals.size()));
        st.final_min = *std::min_element(finals.begin(), finals.end());
        st.final_max = *std::max_element(finals.begin(), finals.end());
        s.metrics[name] = st;
    }
    return s;
}

void write_epoch_header(std::ostream& os) { os << kEpochHeader << '\n'; }

void write_epoch_row(std::ostream& os, const std::string& algorithm, const std::string& scenario, int action_bits,
                     const EpochRow& row) {
    const auto& m = row.metrics;
    os << algorithm << ',' << scenario << ',' << action_bits << ',' << row.seed << ',' << m.epoch << ',' << num(m.reward) << ','
       << num(m.normalized_reward) << ',' << num(m.qos) << ',' << num(m.capacity) << ',' << num(m.residual_cubesat) << ','
       << num(m.residual_uav) << ',' << num(m.critic_loss) << '\n';
}

EpochTable read_epochs_csv(const std::string& path) {
    auto is = open_in(path);
    std::string line;
    if (!std::getline(is, line) || line != kEpochHeader) throw std::runtime_error(path + ": unexpected header");
    EpochTable t;
    bool first = true;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        const auto f = split(line, ',');
        if (f.size() != 12) throw std::runtime_error(path + ": expected 12 columns");
        if (first) {
            t.algorithm = f[0];
            t.scenario = f[1];
            t.action_bits = static_cast<int>(to_u64(f[2], path));
            first = false;
        } else if (f[0] != t.algorithm || f[1] != t.scenario || static_cast<int>(to_u64(f[2], path)) != t.action_bits) {
            throw std::runtime_error(path + ": mixed experiments in one file");
        }
        EpochRow r;
        r.seed = to_u64(f[3], path);
        r.metrics.epoch = static_cast<int>(to_u64(f[4], path));
        r.metrics.reward = to_double(f[5], path);
        r.metrics.normalized_reward = to_double(f[6], path);
        r.metrics.qos = to_double(f[7], path);
        r.metrics.capacity = to_double(f[8], path);
        r.metrics.residual_cubesat = to_double(f[9], path);
        r.metrics.residual_uav = to_double(f[10], path);
        r.metrics.critic_loss = to_double(f[11], path);
        t.rows.push_back(r);
    }
    return t;
}

void write_summary_csv(const std::string& path, const MetricSummary& s) {
    auto os = open_out(path);
    os << "algorithm,scenario,action_bits,epochs,seeds,metric,mean,final_mean,final_std,final_min,final_max\n";
    for (const auto& name : metric_names()) {
        const auto& m = s.metrics.at(name);
        os << s.algorithm << ',' << s.scenario << ',' << s.action_bits << ',' << s.epochs << ',' << seed_list(s.seeds) << ','
           << name << ',' << num(m.mean) << ',' << num(m.final_mean) << ',' << num(m.final_std) << ',' << num(m.final_min)
           << ',' << num(m.final_max) << '\n';
    }
}

MetricSummary read_summary_csv(const std::string& path) {
    auto is = open_in(path);
    std::string line;
    std::getline(is, line);
    if (line.rfind("algorithm,scenario,action_bits,epochs,seeds,metric", 0) != 0) throw std::runtime_error(path + ": not a summary file");
    MetricSummary s;
    bool first = true;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        const auto f = split(line, ',');
        if (f.size() != 11) throw std::runtime_error(path + ": expected 11 columns");
        if (first) {
            s.algorithm = f[0];
            s.scenario = f[1];
            s.action_bits = static_cast<int>(to_u64(f[2], path));
            s.epochs = static_cast<int>(to_u64(f[3], path));
            for (const auto& seed : split(f[4], ';')) s.seeds.push_back(to_u64(seed, path));
            first = false;
        }
        MetricStats m{to_double(f[6], path), to_double(f[7], path), to_double(f[8], path), to_double(f[9], path),
                      to_double(f[10], path)};
        s.metrics[f[5]] = m;
    }
    if (!s.metrics.count("normalized_reward")) throw std::runtime_error(path + ": missing normalized_reward");
    return s;
}

// ---- run ----------------------------------------------------------------------------------------

namespace {

struct SeedJob {
    std::uint64_t seed;
    std::string csv, checkpoint, steps;
};

void run_seed(const SeedJob& job, const env::ScenarioConfig& cfg, const ExperimentManifest& m, int bits) {
    const std::string algo = agents::algorithm_name(m.algorithm);
    agents::Trainer trainer(cfg, m.algorithm, m.training, job.seed);

    std::vector<std::string> kept;
    if (m.resume && fs::exists(job.checkpoint)) {
        trainer.load(job.checkpoint);
        auto is = open_in(job.csv);
        std::string line;
        std::getline(is, line);
        while (static_cast<int>(kept.size()) < trainer.epoch() && std::getline(is, line)) kept.push_back(line);
        if (static_cast<int>(kept.size()) != trainer.epoch()) throw std::runtime_error(job.csv + ": fewer rows than the checkpoint epoch");
    }
    auto os = open_out(job.csv);
    write_epoch_header(os);
    for (const auto& l : kept) os << l << '\n';

    std::ofstream steps;
    if (m.step_csv) {
        steps.open(job.steps, kept.empty() ? std::ios::trunc : std::ios::app);
        if (!steps) throw std::runtime_error("cannot write " + job.steps);
        if (kept.empty()) env::write_step_header(steps);
    }
    while (trainer.epoch() < m.training.epochs) {
        EpochRow row{job.seed, trainer.run_epoch(m.step_csv ? &steps : nullptr)};
        write_epoch_row(os, algo, cfg.name, bits, row);
        if (m.checkpoint_every > 0 && trainer.epoch() % m.checkpoint_every == 0) {
            os.flush();
            if (m.step_csv) steps.flush();
            trainer.save(job.checkpoint);
        }
    }
    if (!os) throw std::runtime_error("write failed: " + job.csv);
}

std::vector<double> mean_curve(const std::vector<EpochRow>& rows, const std::string& metric, int epochs) {
    std::vector<double> sum(static_cast<std::size_t>(epochs), 0.0);
    std::vector<int> n(static_cast<std::size_t>(epochs), 0);
    for (const auto& r : rows) {
        const auto e = static_cast<std::size_t>(r.metrics.epoch);
        if (e >= sum.size()) continue;
        sum[e] += metric_value(r.metrics, metric);
        ++n[e];
    }
    for (std::size_t e = 0; e < sum.size(); ++e) sum[e] = n[e] ? sum[e] / n[e] : 0.0;
    return sum;
}

}  // namespace

MetricSummary run(const ExperimentManifest& m) {
    m.validate();
    auto cfg = env::load_scenario(m.scenario_path);
    const int bits = env::parse_action_preset(m.action_preset, cfg);
    if (bits != cfg.device_count()) cfg = env::with_action_bits(cfg, bits);
    const std::string algo = agents::algorithm_name(m.algorithm);
    // Shape errors surface here, before any worker starts.
    { agents::Trainer probe(cfg, m.algorithm, m.training, m.seeds.front()); }

    fs::create_directories(m.output_dir);
    const fs::path out(m.output_dir);
    std::vector<SeedJob> jobs;
    for (auto s : m.seeds) {
        const auto tag = std::to_string(s);
        jobs.push_back({s, (out / ("seed-" + tag + ".csv")).string(), (out / ("checkpoint-seed-" + tag + ".txt")).string(),
                        (out / ("steps-seed-" + tag + ".csv")).string()});
    }

    const int workers = std::max(1, std::min<int>(m.threads > 0 ? m.threads : thread_count(), static_cast<int>(jobs.size())));
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(jobs.size());
    auto work = [&] {
        for (std::size_t k = next++; k < jobs.size(); k = next++) {
            try {
                run_seed(jobs[k], cfg, m, bits);
            } catch (...) {
                errors[k] = std::current_exception();
            }
        }
    };
    std::vector<std::thread> pool;
    for (int w = 1; w < workers; ++w) pool.emplace_back(work);
    work();
    for (auto& t : pool) t.join();
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }

    // Single-writer merge in seed-list order.
    const std::string merged = (out / "epochs.csv").string();
    {
        auto os = open_out(merged);
        write_epoch_header(os);
        for (const auto& job : jobs) {
            auto is = open_in(job.csv);
            std::string line;
            std::getline(is, line);
            while (std::getline(is, line)) {
                if (!line.empty()) os << line << '\n';
            }
        }
    }
    const auto table = read_epochs_csv(merged);
    const auto summary = summarize(algo, cfg.name, bits, table.rows);
    write_summary_csv((out / "summary.csv").string(), summary);

    {
        auto os = open_out((out / "manifest.txt").string());
        os << "scenario_path " << m.scenario_path << "\nscenario " << cfg.name << "\nalgorithm " << algo << "\naction_preset "
           << m.action_preset << "\naction_bits " << bits << "\nseeds " << seed_list(m.seeds) << "\nepochs " << m.training.epochs
           << "\n";
    }

    if (m.plots) {
        const int epochs = m.training.epochs;
        write_svg_plot((out / "reward.svg").string(), cfg.name + " " + algo + ": normalized reward", "normalized reward",
                       {{algo, mean_curve(table.rows, "normalized_reward", epochs)}});
        write_svg_plot((out / "qos.svg").string(), cfg.name + " " + algo + ": QoS", "QoS", {{algo, mean_curve(table.rows, "qos", epochs)}});
        write_svg_plot((out / "capacity.svg").string(), cfg.name + " " + algo + ": capacity", "capacity",
                       {{algo, mean_curve(table.rows, "capacity", epochs)}});
        write_svg_plot((out / "energy.svg").string(), cfg.name + " " + algo + ": residual energy", "residual energy",
                       {{"CubeSat", mean_curve(table.rows, "residual_cubesat", epochs)},
                        {"UAV", mean_curve(table.rows, "residual_uav", epochs)}});
    }
    return summary;
}

// ---- compare ------------------------------------------------------------------------------------

ComparisonTable compare(const std::vector<MetricSummary>& summaries) {
    if (summaries.size() < 2) throw ComparisonError("compare needs at least two summaries");
    const auto& scenario = summaries.front().scenario;
    std::set<std::string> algos;
    std::set<int> dims;
    std::set<std::pair<std::string, int>> seen;
    for (const auto& s : summaries) {
        if (s.scenario != scenario) throw ComparisonError("scenario mismatch: '" + scenario + "' vs '" + s.scenario + "'");
        if (!seen.insert({s.algorithm, s.action_bits}).second)
            throw ComparisonError("duplicate summary for " + s.algorithm + " at " + bits_label(s.action_bits));
        algos.insert(s.algorithm);
        dims.insert(s.action_bits);
    }
    ComparisonTable t;
    t.algorithms.assign(algos.begin(), algos.end());
    t.action_bits.assign(dims.begin(), dims.end());
    const double nan = std::numeric_limits<double>::quiet_NaN();
    t.raw.assign(t.action_bits.size(), std::vector<double>(t.algorithms.size(), nan));
    for (const auto& s : summaries) {
        const auto d = static_cast<std::size_t>(std::find(t.action_bits.begin(), t.action_bits.end(), s.action_bits) - t.action_bits.begin());
        const auto a = static_cast<std::size_t>(std::find(t.algorithms.begin(), t.algorithms.end(), s.algorithm) - t.algorithms.begin());
        t.raw[d][a] = s.final_reward();
    }
    t.normalized = t.raw;
    for (std::size_t d = 0; d < t.raw.size(); ++d) {
        double best = 0.0;
        for (double v : t.raw[d]) {
            if (!std::isnan(v)) best = std::max(best, v);
        }
        for (auto& v : t.normalized[d]) {
            if (!std::isnan(v)) v = best > 0.0 ? v / best : 0.0;
        }
        std::vector<int> order;
        for (std::size_t a = 0; a < t.algorithms.size(); ++a) {
            if (!std::isnan(t.raw[d][a])) order.push_back(static_cast<int>(a));
        }
        // Algorithms are in name order already; a stable sort keeps that order among ties.
        std::stable_sort(order.begin(), order.end(), [&](int x, int y) { return t.normalized[d][x] > t.normalized[d][y]; });
        t.ranking.push_back(order);
    }
    return t;
}

void write_comparison(std::ostream& os, const ComparisonTable& t) {
    os << "action_dimension";
    for (const auto& a : t.algorithms) os << ',' << a;
    os << '\n';
    char buf[32];
    for (std::size_t d = 0; d < t.action_bits.size(); ++d) {
        os << bits_label(t.action_bits[d]);
        for (double v : t.normalized[d]) {
            if (std::isnan(v)) {
                os << ',';
                continue;
            }
            std::snprintf(buf, sizeof buf, "%.4f", v);
            os << ',' << buf;
        }
        os << '\n';
    }
}

void write_ranking(std::ostream& os, const ComparisonTable& t) {
    os << "action_dimension,rank,algorithm,final_normalized_reward,relative\n";
    for (std::size_t d = 0; d < t.action_bits.size(); ++d) {
        int rank = 1;
        for (int a : t.ranking[d]) {
            os << bits_label(t.action_bits[d]) << ',' << rank++ << ',' << t.algorithms[static_cast<std::size_t>(a)] << ','
               << num(t.raw[d][static_cast<std::size_t>(a)]) << ',' << num(t.normalized[d][static_cast<std::size_t>(a)]) << '\n';
        }
    }
}

// ---- plots ----------------------------------------------------------------------------------------

void write_svg_plot(const std::string& path, const std::string& title, const std::string& y_label,
                    const std::vector<Series>& series) {
    const double W = 720, H = 400, left = 70, right = 20, top = 40, bottom = 50;
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    std::size_t n = 0;
    for (const auto& s : series) {
        for (double v : s.values) {
            if (!std::isfinite(v)) continue;
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        n = std::max(n, s.values.size());
    }
    if (!std::isfinite(lo)) lo = 0.0, hi = 1.0;
    if (lo >= 0.0 && hi <= 1.0) lo = 0.0, hi = 1.0;
    if (hi - lo < 1e-12) hi = lo + 1.0;
    const double pw = W - left - right, ph = H - top - bottom;
    auto X = [&](std::size_t k) { return left + (n > 1 ? pw * static_cast<double>(k) / static_cast<double>(n - 1) : 0.0); };
    auto Y = [&](double v) { return top + ph * (1.0 - (v - lo) / (hi - lo)); };
    static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd"};

    auto os = open_out(path);
    char buf[128];
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    os << "<text x=\"" << W / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << xml(title) << "</text>\n";
    std::snprintf(buf, sizeof buf, "<rect x=\"%.1f\" y=\"%.1f\" width=\"%.1f\" height=\"%.1f\" fill=\"none\" stroke=\"#444\"/>\n", left, top, pw, ph);
    os << buf;
    for (int k = 0; k <= 4; ++k) {
        const double v = lo + (hi - lo) * k / 4.0;
        std::snprintf(buf, sizeof buf, "<text x=\"%.1f\" y=\"%.1f\" text-anchor=\"end\">%.3g</text>\n", left - 6, Y(v) + 4, v);
        os << buf;
        std::snprintf(buf, sizeof buf, "<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"#ddd\"/>\n", left, Y(v), left + pw, Y(v));
        os << buf;
    }
    for (int k = 0; k <= 4 && n > 1; ++k) {
        const auto e = static_cast<std::size_t>(std::lround(static_cast<double>(n - 1) * k / 4.0));
        std::snprintf(buf, sizeof buf, "<text x=\"%.1f\" y=\"%.1f\" text-anchor=\"middle\">%zu</text>\n", X(e), top + ph + 18, e);
        os << buf;
    }
    os << "<text x=\"" << left + pw / 2 << "\" y=\"" << H - 10 << "\" text-anchor=\"middle\">epoch</text>\n";
    os << "<text transform=\"rotate(-90)\" x=\"" << -(top + ph / 2) << "\" y=\"16\" text-anchor=\"middle\">" << xml(y_label) << "</text>\n";
    for (std::size_t s = 0; s < series.size(); ++s) {
        const char* color = colors[s % 5];
        os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
        for (std::size_t k = 0; k < series[s].values.size(); ++k) {
            std::snprintf(buf, sizeof buf, "%s%.2f,%.2f", k ? " " : "", X(k), Y(series[s].values[k]));
            os << buf;
        }
        os << "\"/>\n";
        const double ly = top + 16 + 16 * static_cast<double>(s);
        std::snprintf(buf, sizeof buf, "<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"%s\" stroke-width=\"2\"/>\n",
                      left + pw - 110, ly - 4, left + pw - 90, ly - 4, color);
        os << buf;
        os << "<text x=\"" << left + pw - 84 << "\" y=\"" << ly << "\">" << xml(series[s].label) << "</text>\n";
    }
    os << "</svg>\n";
}

// ---- orbital export ----------------------------------------------------------------------------

std::vector<env::GroundStation> load_ground_stations(const std::string& path) {
    std::vector<env::GroundStation> out;
    const auto ext = fs::path(path).extension().string();
    if (ext == ".yaml" || ext == ".yml") {
        YAML::Node root;
        try {
            root = YAML::LoadFile(path);
        } catch (const YAML::Exception& e) {
            throw std::runtime_error("cannot read " + path + ": " + e.what());
        }
        const auto list = root.IsSequence() ? root : root["ground_stations"];
        if (!list || !list.IsSequence()) throw std::runtime_error(path + ": no ground_stations list");
        for (const auto& n : list) {
            env::GroundStation g;
            g.name = n["name"] ? n["name"].as<std::string>() : "gs" + std::to_string(out.size());
            if (!n["latitude_deg"] || !n["longitude_deg"]) throw std::runtime_error(path + ": station needs latitude_deg and longitude_deg");
            g.position = {orbital::deg2rad(n["latitude_deg"].as<double>()), orbital::deg2rad(n["longitude_deg"].as<double>()),
                          n["altitude_m"] ? n["altitude_m"].as<double>() : 0.0};
            out.push_back(g);
        }
    } else {
        auto is = open_in(path);
        std::string line;
        while (std::getline(is, line)) {
            line = trim(line);
            if (line.empty() || line[0] == '#') continue;
            const auto f = split(line, ',');
            if (f.size() < 3) throw std::runtime_error(path + ": expected name,latitude_deg,longitude_deg[,altitude_m]");
            if (trim(f[1]) == "latitude_deg") continue;  // header
            env::GroundStation g;
            g.name = trim(f[0]);
            g.position = {orbital::deg2rad(to_double(trim(f[1]), path)), orbital::deg2rad(to_double(trim(f[2]), path)),
                          f.size() > 3 ? to_double(trim(f[3]), path) : 0.0};
            out.push_back(g);
        }
    }
    if (out.empty()) throw std::runtime_error(path + ": no ground stations");
    return out;
}

void export_orbits(const std::vector<orbital::TleRecord>& tles, const std::vector<env::GroundStation>& stations,
                   double span, double step, std::ostream& os, const orbital::EarthConstants& earth, orbital::AnomalyMode mode) {
    if (tles.empty()) throw std::invalid_argument("orbits: no TLE records");
    if (!(step > 0.0) || !(span >= 0.0)) throw std::invalid_argument("orbits: span must be >= 0 and step > 0");
    double start = tles.front().epoch;
    for (const auto& t : tles) start = std::min(start, t.epoch);
    std::vector<orbital::OrbitalElements> el;
    for (const auto& t : tles) el.push_back(orbital::elements_from_tle(t, earth));

    os << "time_s,object,latitude_deg,longitude_deg,altitude_m";
    for (const auto& g : stations) os << ",slant_m_" << g.name;
    os << '\n';
    const auto steps = static_cast<long>(std::floor(span / step + 1e-9));
    for (long k = 0; k <= steps; ++k) {
        const double t = static_cast<double>(k) * step;
        for (std::size_t j = 0; j < tles.size(); ++j) {
            const auto st = orbital::propagate(el[j], start + t - tles[j].epoch, earth, mode);
            os << num(t) << ',' << (tles[j].name.empty() ? std::to_string(tles[j].catalog_number) : tles[j].name) << ','
               << num(orbital::rad2deg(st.subpoint.latitude)) << ',' << num(orbital::rad2deg(st.subpoint.longitude)) << ','
               << num(st.subpoint.altitude);
            for (const auto& g : stations) os << ',' << num(orbital::slant_distance(g.position, st.subpoint, earth));
            os << '\n';
        }
    }
}

}  // namespace sagin::harness
