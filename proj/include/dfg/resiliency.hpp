#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "dfg/inference.hpp"
#include "dfg/net.hpp"

namespace dfg {

// Per-node survival probabilities at inference time, over the fallible nodes
// only (iot and cloud nodes never fail here).
struct ReliabilitySetting {
    std::vector<std::string> node_ids;
    std::vector<double> survival;

    void validate() const;
    int size() const { return static_cast<int>(node_ids.size()); }
};

// Which fallible nodes survive a round: 1 = survives, 0 = failed. Aligned with
// a ReliabilitySetting's node order.
struct FailureCombination {
    std::vector<uint8_t> alive;

    static FailureCombination from_mask(uint64_t mask, int n);
    uint64_t to_mask() const;
    std::string bits() const;  // "101..." in node order
};

// Probability of one combination under independent per-node survival.
double combination_probability(const FailureCombination& b, const ReliabilitySetting& r);

struct CombinationRow {
    FailureCombination combination;
    double probability = 0;
    double accuracy = 0;
};

enum class ResiliencyMethod : uint8_t { Exact, MonteCarlo };

struct ResiliencyReport {
    std::vector<std::string> node_ids;
    std::vector<CombinationRow> rows;  // exact: all 2^n; MC: distinct sampled combinations
    double average_accuracy = 0;
    ResiliencyMethod method = ResiliencyMethod::Exact;
    long samples = 0;        // MC only
    uint64_t sample_seed = 0;
    double std_error = 0;    // MC only
    std::map<std::string, std::string> meta;  // config hash, variant, tier, ...
};

// Shared per-combination accuracy store, reusable across reliability tiers
// since A(G ∅ B) does not depend on R.
using CombinationCache = std::map<uint64_t, double>;

// Evaluates any combinations missing from the cache, in parallel.
void fill_combination_cache(const DistributedNet<float>& net,
                            const std::vector<std::string>& node_ids,
                            const std::map<std::string, Mat<float>>& iot_inputs,
                            const std::vector<int>& labels, const GuessMode& guess,
                            const std::vector<uint64_t>& masks, CombinationCache& cache,
                            int threads);

// Exhaustive weighted average over all 2^n combinations. Refuses n beyond the
// enumeration guard and points at the Monte Carlo estimator instead.
ResiliencyReport average_accuracy(const DistributedNet<float>& net, const ReliabilitySetting& r,
                                  const std::map<std::string, Mat<float>>& iot_inputs,
                                  const std::vector<int>& labels, const GuessMode& guess,
                                  CombinationCache* cache = nullptr, int threads = 0);

// Bernoulli-sampled estimate of the same average, with its standard error.
// Repeated combinations are deduplicated through the cache.
ResiliencyReport monte_carlo_average_accuracy(const DistributedNet<float>& net,
                                              const ReliabilitySetting& r,
                                              const std::map<std::string, Mat<float>>& iot_inputs,
                                              const std::vector<int>& labels, const GuessMode& guess,
                                              long samples, uint64_t seed,
                                              CombinationCache* cache = nullptr, int threads = 0);

enum class Experiment : uint8_t { Health, Camera };
enum class ReliabilityTier : uint8_t { NoFailure, Normal, Poor, Hazardous };

const char* tier_label(ReliabilityTier t);
ReliabilityTier tier_from_label(const std::string& s);

// The published reliability settings for both experiments; no_failure sets
// every survival probability to 1.
ReliabilitySetting table1_settings(Experiment experiment, ReliabilityTier tier);

// Delimited-text emission: "# key\tvalue" aggregate block, a header row, one
// row per combination. Values use %.17g so a parse round-trips exactly.
void write_report_tsv(const ResiliencyReport& report, const std::string& path);
ResiliencyReport read_report_tsv(const std::string& path);
void write_report_json(const ResiliencyReport& report, const std::string& path);

}  // namespace dfg
