#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "ethseq/rng.hpp"
#include "ethseq/seqgen.hpp"

namespace ethseq::negsample {

// Counterparty frequencies ranked descending; specials are never ranked.
struct FrequencyTable {
    std::vector<std::int32_t> rank_to_id;
    std::vector<std::uint64_t> rank_to_freq;  // non-increasing
    std::unordered_map<std::int32_t, std::int32_t> id_to_rank;

    std::int32_t max_rank() const { return static_cast<std::int32_t>(rank_to_id.size()); }
    std::int32_t rank_of(std::int32_t id) const;  // -1 if unranked
};

// Occurrence count as counterparty across all sequences (heads excluded),
// ranks by descending frequency, ties by ascending id.
FrequencyTable build_frequency_table(std::span<const seqgen::TxSequence> corpus);

// From a vocab whose counterparty_freq is already counted.
FrequencyTable build_frequency_table(const seqgen::AddressVocab& vocab);

// P(rank) = (log(rank+2) - log(rank+1)) / log(max_rank+1); telescopes to 1.
double zipfan_prob(std::int32_t rank, std::int32_t max_rank);

// p_i = f_i^b / sum_j f_j^b. b = 0 is uniform.
std::vector<double> frequent_prob(std::span<const std::uint64_t> freqs, double b);

enum class Strategy : std::uint8_t { Uniform = 0, Frequent = 1, Zipfan = 2 };

struct SamplerConfig {
    Strategy strategy = Strategy::Zipfan;
    double b = 1.0;  // Frequent only
};

// Parses uniform | freq<b> | zipfan, e.g. "freq0.5". Throws DataError.
SamplerConfig parse_strategy(const std::string& name);
std::string strategy_name(const SamplerConfig& config);

struct NegativePool {
    std::vector<std::int32_t> ids;  // vocab ids, drawn with replacement
    SamplerConfig strategy;
};

class NegativeSampler {
public:
    NegativeSampler(const FrequencyTable& table, SamplerConfig config);

    NegativePool sample_pool(std::size_t pool_size, Rng& rng) const;

    // Target probability of drawing the address at `rank`; used by tests.
    double prob_of_rank(std::int32_t rank) const;

    const SamplerConfig& config() const { return config_; }

private:
    const FrequencyTable& table_;
    SamplerConfig config_;
    std::vector<double> cdf_;  // Frequent/Uniform: inclusive prefix sums
};

}  // namespace ethseq::negsample
