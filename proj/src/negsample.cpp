#include "ethseq/negsample.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace ethseq::negsample {

std::int32_t FrequencyTable::rank_of(std::int32_t id) const {
    auto it = id_to_rank.find(id);
    return it == id_to_rank.end() ? -1 : it->second;
}

FrequencyTable build_frequency_table(std::span<const seqgen::TxSequence> corpus) {
    if (corpus.empty()) throw DataError("frequency table: empty corpus");

    std::map<std::int32_t, std::uint64_t> counts;
    for (const auto& seq : corpus) {
        for (const auto& rec : seq.records) {
            if (rec.is_self()) continue;
            if (rec.counterparty < seqgen::kFirstAddressId) continue;
            ++counts[rec.counterparty];
        }
    }
    if (counts.empty()) throw DataError("frequency table: no counterparty occurrences");

    std::vector<std::pair<std::int32_t, std::uint64_t>> entries(counts.begin(), counts.end());
    std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });

    FrequencyTable table;
    table.rank_to_id.reserve(entries.size());
    table.rank_to_freq.reserve(entries.size());
    for (std::size_t r = 0; r < entries.size(); ++r) {
        table.rank_to_id.push_back(entries[r].first);
        table.rank_to_freq.push_back(entries[r].second);
        table.id_to_rank.emplace(entries[r].first, static_cast<std::int32_t>(r));
    }
    return table;
}

FrequencyTable build_frequency_table(const seqgen::AddressVocab& vocab) {
    std::vector<std::pair<std::int32_t, std::uint64_t>> entries;
    for (std::int32_t id = seqgen::kFirstAddressId; id < vocab.size(); ++id) {
        const auto f = vocab.counterparty_freq[static_cast<std::size_t>(id)];
        if (f >= 1) entries.emplace_back(id, f);
    }
    if (entries.empty()) throw DataError("frequency table: vocab has no ranked addresses");
    std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });

    FrequencyTable table;
    for (std::size_t r = 0; r < entries.size(); ++r) {
        table.rank_to_id.push_back(entries[r].first);
        table.rank_to_freq.push_back(entries[r].second);
        table.id_to_rank.emplace(entries[r].first, static_cast<std::int32_t>(r));
    }
    return table;
}

double zipfan_prob(std::int32_t rank, std::int32_t max_rank) {
    if (max_rank < 1) throw NumericError("zipfan_prob: max_rank must be >= 1");
    if (rank < 0 || rank >= max_rank) throw NumericError("zipfan_prob: rank out of range");
    const double num = std::log(static_cast<double>(rank) + 2.0) -
                       std::log(static_cast<double>(rank) + 1.0);
    return num / std::log(static_cast<double>(max_rank) + 1.0);
}

std::vector<double> frequent_prob(std::span<const std::uint64_t> freqs, double b) {
    if (freqs.empty()) throw NumericError("frequent_prob: empty frequency vector");
    std::vector<double> probs(freqs.size());
    double total = 0.0;
    for (std::size_t i = 0; i < freqs.size(); ++i) {
        if (freqs[i] == 0) throw NumericError("frequent_prob: frequencies must be positive");
        probs[i] = std::pow(static_cast<double>(freqs[i]), b);
        total += probs[i];
    }
    for (double& p : probs) p /= total;
    return probs;
}

SamplerConfig parse_strategy(const std::string& name) {
    SamplerConfig config;
    if (name == "uniform") {
        config.strategy = Strategy::Uniform;
        return config;
    }
    if (name == "zipfan") {
        config.strategy = Strategy::Zipfan;
        return config;
    }
    if (name.rfind("freq", 0) == 0) {
        config.strategy = Strategy::Frequent;
        try {
            config.b = std::stod(name.substr(4));
        } catch (const std::exception&) {
            throw DataError("bad negative-sampling strategy '" + name + "'");
        }
        if (config.b < 0.0) throw DataError("frequent sampling exponent must be >= 0");
        return config;
    }
    throw DataError("unknown negative-sampling strategy '" + name +
                    "' (expected uniform | freq<b> | zipfan)");
}

std::string strategy_name(const SamplerConfig& config) {
    switch (config.strategy) {
        case Strategy::Uniform: return "uniform";
        case Strategy::Zipfan: return "zipfan";
        case Strategy::Frequent: {
            char buf[32];
            std::snprintf(buf, sizeof buf, "freq%g", config.b);
            return buf;
        }
    }
    return "uniform";
}

NegativeSampler::NegativeSampler(const FrequencyTable& table, SamplerConfig config)
    : table_(table), config_(config) {
    if (table_.max_rank() < 1) throw NumericError("negative sampler: empty frequency table");
    if (config_.strategy != Strategy::Zipfan) {
        const double b = config_.strategy == Strategy::Uniform ? 0.0 : config_.b;
        const auto probs = frequent_prob(table_.rank_to_freq, b);
        cdf_.resize(probs.size());
        double acc = 0.0;
        for (std::size_t i = 0; i < probs.size(); ++i) {
            acc += probs[i];
            cdf_[i] = acc;
        }
        cdf_.back() = 1.0;
    }
}

double NegativeSampler::prob_of_rank(std::int32_t rank) const {
    if (config_.strategy == Strategy::Zipfan) return zipfan_prob(rank, table_.max_rank());
    if (rank == 0) return cdf_[0];
    return cdf_[static_cast<std::size_t>(rank)] - cdf_[static_cast<std::size_t>(rank) - 1];
}

NegativePool NegativeSampler::sample_pool(std::size_t pool_size, Rng& rng) const {
    NegativePool pool;
    pool.strategy = config_;
    pool.ids.reserve(pool_size);
    const auto max_rank = table_.max_rank();

    for (std::size_t i = 0; i < pool_size; ++i) {
        std::int32_t rank;
        if (config_.strategy == Strategy::Zipfan) {
            // Inverse CDF: smallest r with log(r+2)/log(max+1) >= u, i.e.
            // r = ceil((max+1)^u) - 2.
            const double u = rng.u01();
            const double x = std::pow(static_cast<double>(max_rank) + 1.0, u);
            auto r = static_cast<std::int64_t>(std::ceil(x)) - 2;
            rank = static_cast<std::int32_t>(std::clamp<std::int64_t>(r, 0, max_rank - 1));
        } else {
            const double u = rng.u01();
            const auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
            rank = static_cast<std::int32_t>(std::min<std::ptrdiff_t>(
                it - cdf_.begin(), static_cast<std::ptrdiff_t>(cdf_.size()) - 1));
        }
        pool.ids.push_back(table_.rank_to_id[static_cast<std::size_t>(rank)]);
    }
    return pool;
}

}  // namespace ethseq::negsample
