#include "ethseq/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <vector>

#include "ethseq/common.hpp"
#include "ethseq/csv.hpp"
#include "ethseq/rng.hpp"

namespace ethseq::synthgen {

SynthConfig SynthConfig::tiny() {
    SynthConfig c;
    c.n_accounts = 200;
    c.n_tx = 1800;
    c.n_pairs = 8;
    c.pair_shared_counterparties = 3;
    c.phisher_fraction = 0.06;
    return c;
}

SynthConfig SynthConfig::desk() {
    SynthConfig c;
    c.n_accounts = 10000;
    c.n_tx = 60000;
    c.n_pairs = 150;
    c.pair_shared_counterparties = 4;
    c.phisher_fraction = 0.05;
    c.excluded_fraction = 0.01;
    return c;
}

void SynthConfig::validate() const {
    if (n_accounts < 20) throw DataError("synthgen: need at least 20 accounts");
    if (powerlaw_exponent <= 1.0) throw DataError("synthgen: power-law exponent must exceed 1");
    for (double f : {burst_rate, phisher_fraction, token_event_rate, excluded_fraction, failed_rate}) {
        if (f < 0.0 || f > 1.0) throw DataError("synthgen: fractions must lie in [0, 1]");
    }
    if (burst_rate > 0.95) throw DataError("synthgen: burst_rate too close to 1");
    if (n_pairs < 0 || pair_shared_counterparties < 1) throw DataError("synthgen: bad pair settings");
    const auto n_phish = static_cast<long>(std::llround(phisher_fraction * n_accounts));
    const long reserved = static_cast<long>(n_pairs) * (2 + pair_shared_counterparties);
    const auto n_excl = static_cast<long>(std::llround(excluded_fraction * n_accounts));
    if (n_phish + reserved + n_excl + 10 > n_accounts) {
        throw DataError("synthgen: roles exceed account budget (reduce n_pairs or fractions)");
    }
    if (n_tx < n_accounts) throw DataError("synthgen: n_tx must be at least n_accounts");
}

namespace {

struct Tx {
    Hash32 hash{};
    Address from{};
    Address to{};
    u128 value = 0;
    std::int64_t ts = 0;
    bool failed = false;
    // ERC-20 transfer events carried by this transaction
    std::vector<Address> token_recipients;
    Address token_contract{};
};

Address make_address(std::uint64_t seed, const char* space, std::uint64_t index) {
    Rng rng(derive_seed(seed, space, index));
    Address a{};
    for (auto& byte : a) byte = static_cast<std::uint8_t>(rng.next() & 0xff);
    return a;
}

Hash32 make_hash(std::uint64_t seed, std::uint64_t counter) {
    Rng rng(derive_seed(seed, "txhash", counter));
    Hash32 h{};
    for (auto& byte : h) byte = static_cast<std::uint8_t>(rng.next() & 0xff);
    return h;
}

u128 lognormal_wei(Rng& rng) {
    if (rng.u01() < 0.01) return 0;  // plain contract calls
    const double ln_v = std::log(1e17) + 1.5 * rng.normal();
    const double v = std::exp(std::min(ln_v, 80.0));
    return static_cast<u128>(v);
}

}  // namespace

SynthOutput generate(const SynthConfig& config) {
    config.validate();
    Rng rng(derive_seed(config.seed, "synthgen"));

    const int n = config.n_accounts;
    const int n_service = std::max(3, n / 300);
    const auto n_phish = static_cast<int>(std::llround(config.phisher_fraction * n));
    const int n_cash = std::max(1, n_phish / 5);
    const auto n_excl_extra = static_cast<int>(std::llround(config.excluded_fraction * n));
    const int s_shared = config.pair_shared_counterparties;

    // Addresses.
    std::vector<Address> account(n);
    for (int i = 0; i < n; ++i) account[static_cast<std::size_t>(i)] = make_address(config.seed, "eoa", static_cast<std::uint64_t>(i));
    std::vector<Address> service(n_service);
    for (int i = 0; i < n_service; ++i) {
        service[static_cast<std::size_t>(i)] = make_address(config.seed, "svc", static_cast<std::uint64_t>(i));
    }

    // Role assignment over a shuffled account order.
    std::vector<int> idx(n);
    for (int i = 0; i < n; ++i) idx[static_cast<std::size_t>(i)] = i;
    for (std::size_t i = idx.size(); i > 1; --i) std::swap(idx[i - 1], idx[rng.below(i)]);

    enum class Role { Normal, Phisher, PairA, PairB, Reserved, CashOut, Excluded };
    std::vector<Role> role(n, Role::Normal);
    std::size_t cursor = 0;
    auto take = [&](int count, Role r) {
        std::vector<int> out;
        for (int i = 0; i < count; ++i) {
            role[static_cast<std::size_t>(idx[cursor])] = r;
            out.push_back(idx[cursor++]);
        }
        return out;
    };
    const auto phishers = take(n_phish, Role::Phisher);
    const auto pair_a = take(config.n_pairs, Role::PairA);
    const auto pair_b = take(config.n_pairs, Role::PairB);
    const auto reserved = take(config.n_pairs * s_shared, Role::Reserved);
    const auto cashouts = take(n_cash, Role::CashOut);
    take(n_excl_extra, Role::Excluded);

    // Susceptible users: a small pool of otherwise-normal accounts that
    // phishing campaigns draw their victims from. Phishers are then tied
    // together by whom they receive from, not by an account-shape give-away.
    std::vector<int> susceptible;
    {
        const int want = std::max(8, 3 * n_phish / 5);
        for (std::size_t i = cursor; i < idx.size() && static_cast<int>(susceptible.size()) < want;
             ++i) {
            if (role[static_cast<std::size_t>(idx[i])] == Role::Normal) susceptible.push_back(idx[i]);
        }
    }

    // Popularity weights: Pareto draws, the largest handed to the service
    // contracts so hubs are genuinely the most popular counterparties.
    const double alpha = config.powerlaw_exponent;
    std::vector<double> weights;
    weights.reserve(static_cast<std::size_t>(n + n_service));
    for (int i = 0; i < n + n_service; ++i) {
        double u;
        do {
            u = rng.u01();
        } while (u <= 0.0);
        weights.push_back(std::pow(u, -1.0 / (alpha - 1.0)));
    }
    std::sort(weights.begin(), weights.end(), std::greater<>());

    // Popularity targets: services first (top weights), then eligible normals.
    struct Target {
        Address address;
        bool is_service;
    };
    std::vector<Target> targets;
    std::vector<double> cdf;
    for (int i = 0; i < n_service; ++i) targets.push_back({service[static_cast<std::size_t>(i)], true});
    for (int i = 0; i < n; ++i) {
        if (role[static_cast<std::size_t>(i)] == Role::Normal) targets.push_back({account[static_cast<std::size_t>(i)], false});
    }
    {
        double acc = 0.0;
        cdf.reserve(targets.size());
        for (std::size_t i = 0; i < targets.size(); ++i) {
            // Services take the head of the sorted weights, amplified so a
            // handful of hubs dominates traffic the way exchanges do.
            const double boost = targets[i].is_service ? 6.0 : 1.0;
            acc += weights[i] * boost;
            cdf.push_back(acc);
        }
        for (double& c : cdf) c /= acc;
    }
    auto popularity_draw = [&](const Address& exclude) {
        for (int attempt = 0; attempt < 64; ++attempt) {
            const double u = rng.u01();
            const auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
            const auto k = static_cast<std::size_t>(
                std::min<std::ptrdiff_t>(it - cdf.begin(), static_cast<std::ptrdiff_t>(cdf.size()) - 1));
            if (targets[k].address != exclude) return targets[k];
        }
        return targets[0];
    };

    // Timeline: one year.
    const std::int64_t t0 = 1640995200;
    const std::int64_t year = 365LL * 86400;

    std::vector<Tx> txs;
    std::uint64_t hash_counter = 0;
    auto emit = [&](const Address& from, const Address& to, std::int64_t ts, bool may_fail) {
        Tx tx;
        tx.hash = make_hash(config.seed, hash_counter++);
        tx.from = from;
        tx.to = to;
        tx.value = lognormal_wei(rng);
        tx.ts = std::min(ts, t0 + year - 1);
        tx.failed = may_fail && rng.u01() < config.failed_rate;
        txs.push_back(std::move(tx));
        return static_cast<std::size_t>(txs.size() - 1);
    };

    // Base out-transaction budget for normal accounts, sized so the expanded
    // (burst) corpus lands near n_tx.
    int n_normal = 0;
    for (int i = 0; i < n; ++i) {
        if (role[static_cast<std::size_t>(i)] == Role::Normal ||
            role[static_cast<std::size_t>(i)] == Role::Excluded) {
            ++n_normal;
        }
    }
    const double planted_estimate =
        n_phish * (3.0 + 1.5 * config.phisher_in_out_ratio) +
        config.n_pairs * 2.0 * (s_shared + 2.0);
    const double base_budget =
        std::max(2.0 * n_normal,
                 config.n_tx * (1.0 - config.burst_rate) - planted_estimate);
    const double mean_out = std::max(2.0, base_budget / std::max(1, n_normal));

    for (int a = 0; a < n; ++a) {
        const Role r = role[static_cast<std::size_t>(a)];
        const Address& self = account[static_cast<std::size_t>(a)];
        switch (r) {
            case Role::Normal:
            case Role::Excluded: {
                double u;
                do {
                    u = rng.u01();
                } while (u <= 0.0);
                int n_out = 1 + static_cast<int>(std::floor(-(mean_out - 1.0) * std::log(u)));
                n_out = std::min(n_out, 60);
                // A slice of normal users also touches a cash-out account
                // (ordinary exchange withdrawals), so that counterparty alone
                // does not give phishers away.
                if (r == Role::Normal && rng.u01() < 0.03) {
                    const std::int64_t ts =
                        t0 + static_cast<std::int64_t>(rng.u01() * 0.8 * static_cast<double>(year));
                    emit(self,
                         account[static_cast<std::size_t>(cashouts[rng.below(cashouts.size())])],
                         ts, false);
                }
                // Merchant-like normals receive one-shot payments from many
                // accounts, so an in-heavy shape alone does not flag fraud.
                if (r == Role::Normal && rng.u01() < 0.06) {
                    const int n_in = 3 + static_cast<int>(rng.below(4));
                    for (int i = 0; i < n_in; ++i) {
                        int payer = idx[rng.below(static_cast<std::uint64_t>(n))];
                        for (int attempt = 0;
                             attempt < 64 && (role[static_cast<std::size_t>(payer)] != Role::Normal ||
                                              payer == a);
                             ++attempt) {
                            payer = idx[rng.below(static_cast<std::uint64_t>(n))];
                        }
                        const std::int64_t ts =
                            t0 + static_cast<std::int64_t>(rng.u01() * 0.9 * static_cast<double>(year));
                        emit(account[static_cast<std::size_t>(payer)], self, ts, false);
                    }
                }
                std::int64_t t = t0 + static_cast<std::int64_t>(rng.u01() * 0.3 * static_cast<double>(year));
                Address last{};
                for (int i = 0; i < n_out; ++i) {
                    // Fresh draws avoid the previous receiver so bursts are
                    // the only deliberate source of consecutive repetition.
                    Target target = popularity_draw(self);
                    for (int attempt = 0; attempt < 64 && target.address == last; ++attempt) {
                        target = popularity_draw(self);
                    }
                    last = target.address;
                    t += 86400 + static_cast<std::int64_t>(rng.u01() * 30.0 * 86400.0);
                    std::size_t ti = emit(self, target.address, t, true);
                    if (target.is_service && !txs[ti].failed && rng.u01() < config.token_event_rate) {
                        auto& tx = txs[ti];
                        tx.token_contract = target.address;
                        const int n_recip = 1 + static_cast<int>(rng.below(3));
                        for (int k = 0; k < n_recip; ++k) {
                            if (rng.u01() < 0.5) {
                                tx.token_recipients.push_back(self);
                            } else {
                                const int v = idx[rng.below(static_cast<std::uint64_t>(n))];
                                tx.token_recipients.push_back(account[static_cast<std::size_t>(v)]);
                            }
                        }
                    }
                    // Burst continuation: same receiver within minutes-hours.
                    while (rng.u01() < config.burst_rate) {
                        t += 600 + static_cast<std::int64_t>(rng.u01() * 21000.0);
                        emit(self, target.address, t, true);
                    }
                }
                break;
            }
            case Role::Phisher: {
                const int n_out = 3 + static_cast<int>(rng.below(3));
                std::int64_t t = t0 + static_cast<std::int64_t>(rng.u01() * 0.5 * static_cast<double>(year));
                const Address& cash =
                    account[static_cast<std::size_t>(cashouts[rng.below(cashouts.size())])];
                const std::int64_t window = 120LL * 86400;
                for (int i = 0; i < n_out; ++i) {
                    t += 5 * 86400 + static_cast<std::int64_t>(rng.u01() * 20.0 * 86400.0);
                    // Cash-out transfers are mixed with ordinary traffic so
                    // the pattern is a signal, not a give-away.
                    if (i == 0 || rng.u01() < 0.5) {
                        emit(self, cash, t, false);
                    } else {
                        emit(self, popularity_draw(self).address, t, false);
                    }
                }
                const int n_in = std::max(
                    1, static_cast<int>(std::llround(config.phisher_in_out_ratio * n_out)) +
                           static_cast<int>(rng.below(2)));
                for (int i = 0; i < n_in; ++i) {
                    const int victim =
                        susceptible[rng.below(static_cast<std::uint64_t>(susceptible.size()))];
                    const std::int64_t ts =
                        t - window + static_cast<std::int64_t>(rng.u01() * static_cast<double>(window));
                    emit(account[static_cast<std::size_t>(victim)], self, ts, false);
                }
                break;
            }
            case Role::PairA:
            case Role::PairB: {
                // Emitted when processing PairA; skip B here.
                if (r == Role::PairB) break;
                const auto pi = static_cast<std::size_t>(
                    std::find(pair_a.begin(), pair_a.end(), a) - pair_a.begin());
                const Address& addr_a = self;
                const Address& addr_b = account[static_cast<std::size_t>(pair_b[pi])];
                std::vector<Address> shared;
                for (int k = 0; k < s_shared; ++k) {
                    shared.push_back(account[static_cast<std::size_t>(
                        reserved[pi * static_cast<std::size_t>(s_shared) + static_cast<std::size_t>(k)])]);
                }
                std::int64_t ta = t0 + static_cast<std::int64_t>(rng.u01() * 0.3 * static_cast<double>(year));
                // Deposit side: repeated two-way traffic with every shared
                // counterparty, so their embeddings get enough occurrences
                // to train.
                auto burst_with = [&](const Address& owner, const Address& member,
                                      std::int64_t& t) {
                    t += 4 * 86400 + static_cast<std::int64_t>(rng.u01() * 8.0 * 86400.0);
                    emit(owner, member, t, false);
                    t += 4 * 86400 + static_cast<std::int64_t>(rng.u01() * 8.0 * 86400.0);
                    emit(owner, member, t, false);
                    t += 4 * 86400 + static_cast<std::int64_t>(rng.u01() * 8.0 * 86400.0);
                    emit(member, owner, t, false);
                };
                for (int k = 0; k < s_shared; ++k) {
                    burst_with(addr_a, shared[static_cast<std::size_t>(k)], ta);
                }
                // Withdraw side starts strictly after the deposit side ends.
                std::int64_t tb = ta + 10 * 86400 +
                                  static_cast<std::int64_t>(rng.u01() * 20.0 * 86400.0);
                for (int k = 0; k < s_shared; ++k) {
                    burst_with(addr_b, shared[static_cast<std::size_t>(k)], tb);
                }
                break;
            }
            case Role::Reserved:
            case Role::CashOut:
                break;  // traffic arrives from partners/phishers only
        }
    }

    std::sort(txs.begin(), txs.end(), [](const Tx& x, const Tx& y) {
        if (x.ts != y.ts) return x.ts < y.ts;
        return x.hash < y.hash;
    });

    // transactions.csv
    std::ostringstream tx_out;
    {
        CsvWriter w(tx_out);
        w.write_row({"hash", "from_address", "to_address", "value", "block_timestamp",
                     "receipt_status"});
        for (const Tx& tx : txs) {
            w.write_row({to_hex(tx.hash), to_hex(tx.from), to_hex(tx.to), to_string(tx.value),
                         std::to_string(tx.ts), tx.failed ? "0" : "1"});
        }
    }

    // token_transfers.csv
    std::ostringstream ev_out;
    {
        CsvWriter w(ev_out);
        w.write_row({"token_address", "from_address", "to_address", "value", "transaction_hash"});
        for (const Tx& tx : txs) {
            for (const Address& recipient : tx.token_recipients) {
                w.write_row({to_hex(tx.token_contract), to_hex(tx.to), to_hex(recipient),
                             to_string(static_cast<u128>(1000000)), to_hex(tx.hash)});
            }
        }
    }

    // labels.csv
    std::ostringstream label_out;
    {
        CsvWriter w(label_out);
        w.write_row({"address", "label"});
        for (int i = 0; i < n; ++i) {
            const char* label = "Normal";
            switch (role[static_cast<std::size_t>(i)]) {
                case Role::Phisher: label = "Phishing"; break;
                case Role::PairA: label = "PairedA"; break;
                case Role::PairB: label = "PairedB"; break;
                case Role::CashOut:
                case Role::Excluded: label = "Excluded"; break;
                default: break;
            }
            w.write_row({to_hex(account[static_cast<std::size_t>(i)]), label});
        }
    }

    // kinds.csv: service contracts; everything else defaults to EOA.
    std::ostringstream kind_out;
    {
        CsvWriter w(kind_out);
        w.write_row({"address", "kind"});
        for (const Address& svc : service) w.write_row({to_hex(svc), "Contract"});
    }

    // pairs.csv: withdraw account queries the deposit account; candidates are
    // restricted to accounts active before the withdrawal started.
    std::ostringstream pair_out;
    {
        CsvWriter w(pair_out);
        w.write_row({"query", "target", "cutoff_timestamp"});
        for (std::size_t pi = 0; pi < pair_b.size(); ++pi) {
            const Address& qa = account[static_cast<std::size_t>(pair_b[pi])];
            const Address& ta = account[static_cast<std::size_t>(pair_a[pi])];
            std::int64_t first_b = 0;
            for (const Tx& tx : txs) {
                if (tx.from == qa) {
                    first_b = tx.ts;
                    break;
                }
            }
            w.write_row({to_hex(qa), to_hex(ta), std::to_string(first_b)});
        }
    }

    SynthOutput out;
    out.transactions_csv = tx_out.str();
    out.token_transfers_csv = ev_out.str();
    out.labels_csv = label_out.str();
    out.kinds_csv = kind_out.str();
    out.pairs_csv = pair_out.str();
    return out;
}

void write_files(const SynthOutput& output, const std::string& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    auto write = [&](const std::string& name, const std::string& content) {
        std::ofstream out(fs::path(dir) / name, std::ios::binary);
        if (!out) throw DataError("cannot write " + name + " in " + dir);
        out << content;
    };
    write("transactions.csv", output.transactions_csv);
    write("token_transfers.csv", output.token_transfers_csv);
    write("labels.csv", output.labels_csv);
    write("kinds.csv", output.kinds_csv);
    write("pairs.csv", output.pairs_csv);
}

}  // namespace ethseq::synthgen
