#include "dfg/resiliency.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "dfg/parallel.hpp"
#include "json.hpp"

namespace dfg {

namespace {
constexpr int kEnumerationGuard = 20;  // 2^20 per-combination evaluations at most

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}
}  // namespace

void ReliabilitySetting::validate() const {
    if (node_ids.size() != survival.size())
        throw std::invalid_argument("reliability setting: id/probability length mismatch");
    if (node_ids.empty()) throw std::invalid_argument("reliability setting: empty");
    for (double r : survival)
        if (!(r >= 0.0 && r <= 1.0))
            throw std::invalid_argument("reliability setting: survival probability outside [0,1]");
}

FailureCombination FailureCombination::from_mask(uint64_t mask, int n) {
    FailureCombination b;
    b.alive.resize(n);
    for (int i = 0; i < n; ++i) b.alive[i] = (mask >> i) & 1u;
    return b;
}

uint64_t FailureCombination::to_mask() const {
    uint64_t mask = 0;
    for (size_t i = 0; i < alive.size(); ++i)
        if (alive[i]) mask |= uint64_t(1) << i;
    return mask;
}

std::string FailureCombination::bits() const {
    std::string s;
    for (uint8_t b : alive) s.push_back(b ? '1' : '0');
    return s;
}

double combination_probability(const FailureCombination& b, const ReliabilitySetting& r) {
    r.validate();
    if (b.alive.size() != r.survival.size())
        throw std::invalid_argument("combination length != reliability setting length");
    double p = 1.0;
    for (size_t i = 0; i < b.alive.size(); ++i)
        p *= b.alive[i] ? r.survival[i] : 1.0 - r.survival[i];
    return p;
}

void fill_combination_cache(const DistributedNet<float>& net,
                            const std::vector<std::string>& node_ids,
                            const std::map<std::string, Mat<float>>& iot_inputs,
                            const std::vector<int>& labels, const GuessMode& guess,
                            const std::vector<uint64_t>& masks, CombinationCache& cache,
                            int threads) {
    std::vector<uint64_t> missing;
    for (uint64_t m : masks)
        if (!cache.count(m)) missing.push_back(m);
    std::sort(missing.begin(), missing.end());
    missing.erase(std::unique(missing.begin(), missing.end()), missing.end());
    if (missing.empty()) return;

    if (threads <= 0) threads = default_thread_count();
    std::vector<double> acc(missing.size());
    parallel_for(static_cast<int>(missing.size()), threads, [&](int i) {
        std::set<std::string> failed;
        for (size_t j = 0; j < node_ids.size(); ++j)
            if (!((missing[i] >> j) & 1u)) failed.insert(node_ids[j]);
        acc[i] = accuracy(net, iot_inputs, labels, failed, guess);
    });
    for (size_t i = 0; i < missing.size(); ++i) cache[missing[i]] = acc[i];
}

ResiliencyReport average_accuracy(const DistributedNet<float>& net, const ReliabilitySetting& r,
                                  const std::map<std::string, Mat<float>>& iot_inputs,
                                  const std::vector<int>& labels, const GuessMode& guess,
                                  CombinationCache* cache, int threads) {
    r.validate();
    const int n = r.size();
    if (n > kEnumerationGuard)
        throw std::invalid_argument(
            "exact enumeration over " + std::to_string(n) +
            " fallible nodes exceeds the 2^" + std::to_string(kEnumerationGuard) +
            " guard; use monte_carlo_average_accuracy");

    CombinationCache local;
    CombinationCache& store = cache ? *cache : local;
    std::vector<uint64_t> masks;
    masks.reserve(size_t(1) << n);
    for (uint64_t m = 0; m < (uint64_t(1) << n); ++m) masks.push_back(m);
    fill_combination_cache(net, r.node_ids, iot_inputs, labels, guess, masks, store, threads);

    ResiliencyReport report;
    report.node_ids = r.node_ids;
    report.method = ResiliencyMethod::Exact;
    double avg = 0;
    for (uint64_t m : masks) {
        CombinationRow row;
        row.combination = FailureCombination::from_mask(m, n);
        row.probability = combination_probability(row.combination, r);
        row.accuracy = store.at(m);
        avg += row.probability * row.accuracy;
        report.rows.push_back(std::move(row));
    }
    report.average_accuracy = avg;
    return report;
}

ResiliencyReport monte_carlo_average_accuracy(const DistributedNet<float>& net,
                                              const ReliabilitySetting& r,
                                              const std::map<std::string, Mat<float>>& iot_inputs,
                                              const std::vector<int>& labels, const GuessMode& guess,
                                              long samples, uint64_t seed, CombinationCache* cache,
                                              int threads) {
    r.validate();
    if (samples < 1) throw std::invalid_argument("monte carlo: samples must be >= 1");
    const int n = r.size();

    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::vector<uint64_t> draws(samples);
    for (long s = 0; s < samples; ++s) {
        uint64_t mask = 0;
        for (int i = 0; i < n; ++i)
            if (unit(rng) < r.survival[i]) mask |= uint64_t(1) << i;
        draws[s] = mask;
    }

    CombinationCache local;
    CombinationCache& store = cache ? *cache : local;
    fill_combination_cache(net, r.node_ids, iot_inputs, labels, guess, draws, store, threads);

    double sum = 0, sq = 0;
    std::map<uint64_t, long> counts;
    for (uint64_t m : draws) {
        const double a = store.at(m);
        sum += a;
        sq += a * a;
        ++counts[m];
    }
    const double mean = sum / samples;
    const double var = std::max(0.0, sq / samples - mean * mean);

    ResiliencyReport report;
    report.node_ids = r.node_ids;
    report.method = ResiliencyMethod::MonteCarlo;
    report.samples = samples;
    report.sample_seed = seed;
    report.average_accuracy = mean;
    report.std_error = samples > 1 ? std::sqrt(var / (samples - 1)) : 0.0;
    for (const auto& [mask, count] : counts) {
        CombinationRow row;
        row.combination = FailureCombination::from_mask(mask, n);
        row.probability = static_cast<double>(count) / samples;  // empirical frequency
        row.accuracy = store.at(mask);
        report.rows.push_back(std::move(row));
    }
    return report;
}

const char* tier_label(ReliabilityTier t) {
    switch (t) {
        case ReliabilityTier::NoFailure: return "no_failure";
        case ReliabilityTier::Normal: return "normal";
        case ReliabilityTier::Poor: return "poor";
        case ReliabilityTier::Hazardous: return "hazardous";
    }
    return "?";
}

ReliabilityTier tier_from_label(const std::string& s) {
    if (s == "no_failure") return ReliabilityTier::NoFailure;
    if (s == "normal") return ReliabilityTier::Normal;
    if (s == "poor") return ReliabilityTier::Poor;
    if (s == "hazardous") return ReliabilityTier::Hazardous;
    throw std::invalid_argument("unknown reliability tier: " + s);
}

ReliabilitySetting table1_settings(Experiment experiment, ReliabilityTier tier) {
    ReliabilitySetting r;
    if (experiment == Experiment::Health) {
        r.node_ids = {"f1", "f2", "e1"};
        switch (tier) {
            case ReliabilityTier::NoFailure: r.survival = {1.0, 1.0, 1.0}; break;
            case ReliabilityTier::Normal: r.survival = {0.99, 0.98, 0.96}; break;
            case ReliabilityTier::Poor: r.survival = {0.98, 0.96, 0.92}; break;
            case ReliabilityTier::Hazardous: r.survival = {0.90, 0.85, 0.80}; break;
        }
    } else {
        r.node_ids = {"f1", "f2", "f3", "f4", "e1", "e2", "e3", "e4"};
        switch (tier) {
            case ReliabilityTier::NoFailure: r.survival.assign(8, 1.0); break;
            case ReliabilityTier::Normal:
                r.survival = {0.995, 0.99, 0.98, 0.97, 0.95, 0.95, 0.95, 0.95};
                break;
            case ReliabilityTier::Poor:
                r.survival = {0.99, 0.98, 0.94, 0.93, 0.90, 0.90, 0.87, 0.87};
                break;
            case ReliabilityTier::Hazardous:
                r.survival = {0.90, 0.90, 0.80, 0.80, 0.70, 0.60, 0.70, 0.66};
                break;
        }
    }
    return r;
}

void write_report_tsv(const ResiliencyReport& report, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write " + path);
    for (const auto& [k, v] : report.meta) os << "# " << k << "\t" << v << "\n";
    os << "# nodes\t";
    for (size_t i = 0; i < report.node_ids.size(); ++i)
        os << (i ? "," : "") << report.node_ids[i];
    os << "\n";
    os << "# method\t"
       << (report.method == ResiliencyMethod::Exact ? "exact" : "monte_carlo") << "\n";
    if (report.method == ResiliencyMethod::MonteCarlo) {
        os << "# samples\t" << report.samples << "\n";
        os << "# sample_seed\t" << report.sample_seed << "\n";
        os << "# std_error\t" << fmt_double(report.std_error) << "\n";
    }
    os << "# average_accuracy\t" << fmt_double(report.average_accuracy) << "\n";
    os << "combination\tprobability\taccuracy\n";
    for (const auto& row : report.rows)
        os << row.combination.bits() << "\t" << fmt_double(row.probability) << "\t"
           << fmt_double(row.accuracy) << "\n";
    if (!os) throw std::runtime_error("write failed: " + path);
}

ResiliencyReport read_report_tsv(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open " + path);
    ResiliencyReport report;
    std::string line;
    bool in_rows = false;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        if (line[0] == '#') {
            std::istringstream ss(line.substr(2));
            std::string key, value;
            std::getline(ss, key, '\t');
            std::getline(ss, value);
            if (key == "nodes") {
                std::istringstream ns(value);
                std::string id;
                while (std::getline(ns, id, ',')) report.node_ids.push_back(id);
            } else if (key == "method") {
                report.method = value == "exact" ? ResiliencyMethod::Exact
                                                 : ResiliencyMethod::MonteCarlo;
            } else if (key == "samples") {
                report.samples = std::stol(value);
            } else if (key == "sample_seed") {
                report.sample_seed = std::stoull(value);
            } else if (key == "std_error") {
                report.std_error = std::stod(value);
            } else if (key == "average_accuracy") {
                report.average_accuracy = std::stod(value);
            } else {
                report.meta[key] = value;
            }
            continue;
        }
        if (!in_rows) {  // header row
            in_rows = true;
            continue;
        }
        std::istringstream ss(line);
        std::string bits, p, a;
        std::getline(ss, bits, '\t');
        std::getline(ss, p, '\t');
        std::getline(ss, a);
        CombinationRow row;
        for (char c : bits) row.combination.alive.push_back(c == '1');
        row.probability = std::stod(p);
        row.accuracy = std::stod(a);
        report.rows.push_back(std::move(row));
    }
    return report;
}

void write_report_json(const ResiliencyReport& report, const std::string& path) {
    nlohmann::json j;
    j["nodes"] = report.node_ids;
    j["method"] = report.method == ResiliencyMethod::Exact ? "exact" : "monte_carlo";
    j["average_accuracy"] = report.average_accuracy;
    if (report.method == ResiliencyMethod::MonteCarlo) {
        j["samples"] = report.samples;
        j["sample_seed"] = report.sample_seed;
        j["std_error"] = report.std_error;
    }
    for (const auto& [k, v] : report.meta) j["meta"][k] = v;
    j["combinations"] = nlohmann::json::array();
    for (const auto& row : report.rows)
        j["combinations"].push_back({{"bits", row.combination.bits()},
                                     {"probability", row.probability},
                                     {"accuracy", row.accuracy}});
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write " + path);
    os << j.dump(2) << "\n";
}

}  // namespace dfg
