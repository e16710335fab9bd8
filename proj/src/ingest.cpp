#include "ethseq/ingest.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <ostream>

#include "ethseq/csv.hpp"
#include "ethseq/io.hpp"

namespace ethseq::ingest {

const char* label_name(AccountLabel label) {
    switch (label) {
        case AccountLabel::Normal: return "Normal";
        case AccountLabel::Phishing: return "Phishing";
        case AccountLabel::PairedA: return "PairedA";
        case AccountLabel::PairedB: return "PairedB";
        case AccountLabel::Excluded: return "Excluded";
    }
    return "Normal";
}

AccountLabel parse_label(std::string_view name) {
    std::string low = lower_copy(trim(name));
    if (low == "normal") return AccountLabel::Normal;
    if (low == "phishing") return AccountLabel::Phishing;
    if (low == "paireda") return AccountLabel::PairedA;
    if (low == "pairedb") return AccountLabel::PairedB;
    if (low == "excluded") return AccountLabel::Excluded;
    throw DataError("unknown account label '" + std::string(name) + "'");
}

void ParseDiagnostics::warn(std::size_t line, const std::string& what) {
    ++rows_bad;
    if (messages.size() < kMaxMessages) {
        messages.push_back("line " + std::to_string(line) + ": " + what);
    }
}

void parse_transactions(std::istream& in,
                        const std::function<void(const RawTransaction&)>& sink,
                        ParseDiagnostics* diag_in) {
    ParseDiagnostics local_diag;
    ParseDiagnostics& diag = diag_in ? *diag_in : local_diag;
    CsvReader reader(in);
    reader.read_header();
    const int c_hash = reader.require_column("hash");
    const int c_from = reader.require_column("from_address");
    const int c_to = reader.require_column("to_address");
    const int c_value = reader.require_column("value");
    const int c_ts = reader.require_column("block_timestamp");
    const int c_status = reader.require_column("receipt_status");
    const int max_col = std::max({c_hash, c_from, c_to, c_value, c_ts, c_status});

    std::vector<std::string> row;
    while (reader.next(row)) {
        if (static_cast<int>(row.size()) <= max_col) {
            diag.warn(reader.line_number(), "too few fields");
            continue;
        }
        RawTransaction tx;
        auto hash = parse_hash32(trim(row[c_hash]));
        if (!hash) {
            diag.warn(reader.line_number(), "bad tx hash '" + row[c_hash] + "'");
            continue;
        }
        tx.tx_hash = *hash;
        auto from = parse_address(trim(row[c_from]));
        if (!from) {
            diag.warn(reader.line_number(), "bad from_address '" + row[c_from] + "'");
            continue;
        }
        tx.from_address = *from;
        std::string_view to_field = trim(row[c_to]);
        if (to_field.empty()) {
            tx.has_to = false;
        } else {
            auto to = parse_address(to_field);
            if (!to) {
                diag.warn(reader.line_number(), "bad to_address '" + row[c_to] + "'");
                continue;
            }
            tx.to_address = *to;
            tx.has_to = true;
        }
        auto value = parse_u128(trim(row[c_value]));
        if (!value) {
            diag.warn(reader.line_number(), "bad value '" + row[c_value] + "'");
            continue;
        }
        tx.value_wei = *value;
        std::string_view ts = trim(row[c_ts]);
        std::int64_t seconds = 0;
        bool ts_ok = !ts.empty();
        for (char c : ts) {
            if (c < '0' || c > '9') {
                ts_ok = false;
                break;
            }
            seconds = seconds * 10 + (c - '0');
        }
        if (!ts_ok || seconds <= 0) {
            diag.warn(reader.line_number(), "bad block_timestamp '" + row[c_ts] + "'");
            continue;
        }
        tx.block_timestamp = seconds;
        std::string_view status = trim(row[c_status]);
        // Pre-Byzantium rows have no receipt status; treat empty as success.
        tx.status = (status == "0") ? TxStatus::Failed : TxStatus::Success;
        ++diag.rows_ok;
        sink(tx);
    }
}

std::vector<RawTransaction> parse_transactions(std::istream& in, ParseDiagnostics* diag) {
    std::vector<RawTransaction> out;
    parse_transactions(in, [&](const RawTransaction& tx) { out.push_back(tx); }, diag);
    return out;
}

void parse_token_transfers(std::istream& in, const AddressSet& contracts,
                           const std::function<void(const TokenTransferEvent&)>& sink,
                           ParseDiagnostics* diag_in) {
    ParseDiagnostics local_diag;
    ParseDiagnostics& diag = diag_in ? *diag_in : local_diag;
    CsvReader reader(in);
    reader.read_header();
    const int c_hash = reader.require_column("transaction_hash");
    const int c_token = reader.require_column("token_address");
    const int c_to = reader.require_column("to_address");
    const int c_value = reader.require_column("value");
    const int max_col = std::max({c_hash, c_token, c_to, c_value});

    std::vector<std::string> row;
    while (reader.next(row)) {
        if (static_cast<int>(row.size()) <= max_col) {
            diag.warn(reader.line_number(), "too few fields");
            continue;
        }
        TokenTransferEvent ev;
        auto hash = parse_hash32(trim(row[c_hash]));
        auto token = parse_address(trim(row[c_token]));
        auto to = parse_address(trim(row[c_to]));
        auto value = parse_u128(trim(row[c_value]));
        if (!hash || !token || !to || !value) {
            diag.warn(reader.line_number(), "malformed token transfer row");
            continue;
        }
        ev.tx_hash = *hash;
        ev.contract_address = *token;
        ev.recipient_eoa = *to;
        ev.value_raw = *value;
        ++diag.rows_ok;
        if (contracts.count(ev.recipient_eoa)) continue;  // EOA recipients only
        if (ev.recipient_eoa == ev.contract_address) continue;
        sink(ev);
    }
}

std::vector<TokenTransferEvent> parse_token_transfers(std::istream& in, const AddressSet& contracts,
                                                      ParseDiagnostics* diag) {
    std::vector<TokenTransferEvent> out;
    parse_token_transfers(in, contracts, [&](const TokenTransferEvent& ev) { out.push_back(ev); },
                          diag);
    return out;
}

std::unordered_map<Address, AccountLabel, AddressHash> parse_labels(std::istream& in,
                                                                    ParseDiagnostics* diag_in) {
    ParseDiagnostics local_diag;
    ParseDiagnostics& diag = diag_in ? *diag_in : local_diag;
    CsvReader reader(in);
    reader.read_header();
    const int c_addr = reader.require_column("address");
    const int c_label = reader.require_column("label");

    std::unordered_map<Address, AccountLabel, AddressHash> out;
    std::vector<std::string> row;
    while (reader.next(row)) {
        if (static_cast<int>(row.size()) <= std::max(c_addr, c_label)) {
            diag.warn(reader.line_number(), "too few fields");
            continue;
        }
        auto addr = parse_address(trim(row[c_addr]));
        if (!addr) {
            diag.warn(reader.line_number(), "bad address '" + row[c_addr] + "'");
            continue;
        }
        try {
            out[*addr] = parse_label(row[c_label]);
            ++diag.rows_ok;
        } catch (const DataError&) {
            diag.warn(reader.line_number(), "unknown label '" + row[c_label] + "'");
        }
    }
    return out;
}

AddressSet parse_contract_set(std::istream& in, ParseDiagnostics* diag_in) {
    ParseDiagnostics local_diag;
    ParseDiagnostics& diag = diag_in ? *diag_in : local_diag;
    CsvReader reader(in);
    reader.read_header();
    const int c_addr = reader.require_column("address");
    const int c_kind = reader.require_column("kind");

    AddressSet contracts;
    std::vector<std::string> row;
    while (reader.next(row)) {
        if (static_cast<int>(row.size()) <= std::max(c_addr, c_kind)) {
            diag.warn(reader.line_number(), "too few fields");
            continue;
        }
        auto addr = parse_address(trim(row[c_addr]));
        if (!addr) {
            diag.warn(reader.line_number(), "bad address '" + row[c_addr] + "'");
            continue;
        }
        std::string kind = lower_copy(trim(row[c_kind]));
        ++diag.rows_ok;
        if (kind == "contract") contracts.insert(*addr);
    }
    return contracts;
}

AddressSet filter_accounts(const std::vector<AccountMeta>& accounts, const TxCountMap& tx_counts,
                           std::uint64_t min_tx, std::uint64_t max_tx,
                           const std::unordered_set<AccountLabel>& excluded_labels) {
    AddressSet kept;
    for (const AccountMeta& acct : accounts) {
        if (excluded_labels.count(acct.label)) continue;
        auto it = tx_counts.find(acct.address);
        std::uint64_t count = it == tx_counts.end() ? 0 : it->second;
        if (count < min_tx || count > max_tx) continue;
        kept.insert(acct.address);
    }
    return kept;
}

TxCountMap Corpus::involved_tx_counts() const {
    TxCountMap counts;
    for (const RawTransaction& tx : transactions) {
        ++counts[tx.from_address];
        if (tx.has_to) ++counts[tx.to_address];
    }
    return counts;
}

const AccountMeta* Corpus::find_account(const Address& a) const {
    for (const AccountMeta& m : accounts) {
        if (m.address == a) return &m;
    }
    return nullptr;
}

namespace {

constexpr std::uint8_t kTagTransaction = 1;
constexpr std::uint8_t kTagTokenEvent = 2;
constexpr std::uint8_t kTagAccountMeta = 3;

constexpr std::size_t kTxPayload = 32 + 20 + 1 + 20 + 16 + 8 + 1;
constexpr std::size_t kEventPayload = 32 + 20 + 20 + 16;
constexpr std::size_t kMetaPayload = 20 + 1 + 1;

}  // namespace

void save_corpus(std::ostream& out, const Corpus& corpus) {
    out.write(kCorpusMagic, 8);
    io::put<std::uint32_t>(out, 1);  // version
    for (const RawTransaction& tx : corpus.transactions) {
        io::put<std::uint8_t>(out, kTagTransaction);
        io::put<std::uint32_t>(out, kTxPayload);
        io::put_bytes(out, tx.tx_hash);
        io::put_bytes(out, tx.from_address);
        io::put<std::uint8_t>(out, tx.has_to ? 1 : 0);
        io::put_bytes(out, tx.to_address);
        io::put<u128>(out, tx.value_wei);
        io::put<std::uint64_t>(out, static_cast<std::uint64_t>(tx.block_timestamp));
        io::put<std::uint8_t>(out, static_cast<std::uint8_t>(tx.status));
    }
    for (const TokenTransferEvent& ev : corpus.token_events) {
        io::put<std::uint8_t>(out, kTagTokenEvent);
        io::put<std::uint32_t>(out, kEventPayload);
        io::put_bytes(out, ev.tx_hash);
        io::put_bytes(out, ev.contract_address);
        io::put_bytes(out, ev.recipient_eoa);
        io::put<u128>(out, ev.value_raw);
    }
    for (const AccountMeta& m : corpus.accounts) {
        io::put<std::uint8_t>(out, kTagAccountMeta);
        io::put<std::uint32_t>(out, kMetaPayload);
        io::put_bytes(out, m.address);
        io::put<std::uint8_t>(out, static_cast<std::uint8_t>(m.kind));
        io::put<std::uint8_t>(out, static_cast<std::uint8_t>(m.label));
    }
    if (!out) throw DataError("corpus: write failed");
}

Corpus load_corpus(std::istream& in) {
    io::expect_magic(in, std::string_view(kCorpusMagic, 8), "corpus");
    const auto version = io::get<std::uint32_t>(in);
    if (version != 1) throw DataError("corpus: unsupported version " + std::to_string(version));

    Corpus corpus;
    while (true) {
        int tag = in.get();
        if (tag == EOF) break;
        const auto len = io::get<std::uint32_t>(in);
        switch (tag) {
            case kTagTransaction: {
                if (len != kTxPayload) throw DataError("corpus: bad transaction record length");
                RawTransaction tx;
                tx.tx_hash = io::get_bytes<32>(in);
                tx.from_address = io::get_bytes<20>(in);
                tx.has_to = io::get<std::uint8_t>(in) != 0;
                tx.to_address = io::get_bytes<20>(in);
                tx.value_wei = io::get<u128>(in);
                tx.block_timestamp = static_cast<std::int64_t>(io::get<std::uint64_t>(in));
                tx.status = static_cast<TxStatus>(io::get<std::uint8_t>(in));
                corpus.transactions.push_back(tx);
                break;
            }
            case kTagTokenEvent: {
                if (len != kEventPayload) throw DataError("corpus: bad token event record length");
                TokenTransferEvent ev;
                ev.tx_hash = io::get_bytes<32>(in);
                ev.contract_address = io::get_bytes<20>(in);
                ev.recipient_eoa = io::get_bytes<20>(in);
                ev.value_raw = io::get<u128>(in);
                corpus.token_events.push_back(ev);
                break;
            }
            case kTagAccountMeta: {
                if (len != kMetaPayload) throw DataError("corpus: bad account record length");
                AccountMeta m;
                m.address = io::get_bytes<20>(in);
                m.kind = static_cast<AccountKind>(io::get<std::uint8_t>(in));
                m.label = static_cast<AccountLabel>(io::get<std::uint8_t>(in));
                corpus.accounts.push_back(m);
                break;
            }
            default:
                throw DataError("corpus: unknown record tag " + std::to_string(tag));
        }
    }
    return corpus;
}

void save_corpus_file(const std::string& path, const Corpus& corpus) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot open for writing: " + path);
    save_corpus(out, corpus);
}

Corpus load_corpus_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open corpus file: " + path);
    return load_corpus(in);
}

Corpus build_corpus(std::istream& transactions_csv, std::istream* token_transfers_csv,
                    std::istream* labels_csv, std::istream* kinds_csv, IngestStats* stats,
                    ParseDiagnostics* diag) {
    Corpus corpus;
    IngestStats local_stats;
    IngestStats& st = stats ? *stats : local_stats;

    AddressSet contracts;
    if (kinds_csv) contracts = parse_contract_set(*kinds_csv, diag);

    std::unordered_map<Address, AccountLabel, AddressHash> labels;
    if (labels_csv) labels = parse_labels(*labels_csv, diag);

    AddressSet seen;
    parse_transactions(transactions_csv, [&](const RawTransaction& tx) {
        if (!tx.has_to) {
            ++st.dropped_contract_creation;
            return;
        }
        corpus.transactions.push_back(tx);
        seen.insert(tx.from_address);
        seen.insert(tx.to_address);
    }, diag);
    st.transactions = corpus.transactions.size();

    if (token_transfers_csv) {
        ParseDiagnostics event_diag;
        parse_token_transfers(*token_transfers_csv, contracts, [&](const TokenTransferEvent& ev) {
            corpus.token_events.push_back(ev);
        }, &event_diag);
        st.token_events = corpus.token_events.size();
        st.dropped_contract_recipient = event_diag.rows_ok - st.token_events;
        if (diag) {
            diag->rows_ok += event_diag.rows_ok;
            diag->rows_bad += event_diag.rows_bad;
            for (auto& m : event_diag.messages) diag->messages.push_back(std::move(m));
        }
    }

    // One meta per address seen anywhere, so downstream joins are total.
    std::vector<Address> ordered(seen.begin(), seen.end());
    for (const auto& [addr, _] : labels) {
        if (!seen.count(addr)) ordered.push_back(addr);
    }
    std::sort(ordered.begin(), ordered.end());
    corpus.accounts.reserve(ordered.size());
    for (const Address& addr : ordered) {
        AccountMeta m;
        m.address = addr;
        m.kind = contracts.count(addr) ? AccountKind::Contract : AccountKind::EOA;
        auto it = labels.find(addr);
        m.label = it == labels.end() ? AccountLabel::Normal : it->second;
        corpus.accounts.push_back(m);
    }
    st.accounts = corpus.accounts.size();
    return corpus;
}

}  // namespace ethseq::ingest
