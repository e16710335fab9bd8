#include "ethseq/seqgen.hpp"

#include <algorithm>
#include <bit>
#include <fstream>
#include <map>

#include "ethseq/csv.hpp"
#include "ethseq/io.hpp"

namespace ethseq::seqgen {

namespace {

TxRecord make_head(std::int32_t owner) {
    TxRecord head;
    head.counterparty = owner;
    head.direction = Direction::Self;
    head.counterparty_kind = PartyKind::Null;
    head.amount_bin = kAmountNullBin;
    head.count_bin = kCountNullBin;
    head.time_bin = kTimeNullBin;
    head.position = 0;
    return head;
}

void reindex_positions(TxSequence& seq) {
    for (std::size_t i = 0; i < seq.records.size(); ++i) {
        seq.records[i].position = static_cast<std::int32_t>(i);
    }
}

}  // namespace

TxSequence build_sequence(std::int32_t owner, std::vector<InvolvedTx> involved) {
    std::sort(involved.begin(), involved.end(), [](const InvolvedTx& a, const InvolvedTx& b) {
        if (a.timestamp != b.timestamp) return a.timestamp > b.timestamp;  // descending
        return a.tx_hash < b.tx_hash;
    });

    TxSequence seq;
    seq.owner = owner;
    seq.records.reserve(involved.size() + 1);
    seq.records.push_back(make_head(owner));
    for (const InvolvedTx& tx : involved) {
        TxRecord r;
        r.counterparty = tx.counterparty;
        r.direction = tx.direction;
        r.counterparty_kind = tx.counterparty_kind;
        r.raw_timestamp = tx.timestamp;
        r.raw_amount_wei = tx.amount_wei;
        r.agg_count = 1;
        r.failed = tx.failed;
        r.source_hashes.push_back(tx.tx_hash);
        seq.records.push_back(std::move(r));
    }
    reindex_positions(seq);
    return seq;
}

TxSequence deduplicate(const TxSequence& seq, std::int64_t window_hours) {
    const std::int64_t window = window_hours * 3600;

    // Work in chronological order: oldest first.
    std::vector<TxRecord> chrono;
    chrono.reserve(seq.records.size());
    for (auto it = seq.records.rbegin(); it != seq.records.rend(); ++it) {
        if (it->is_self() || it->failed) continue;
        chrono.push_back(*it);
    }

    std::vector<TxRecord> merged;
    merged.reserve(chrono.size());
    for (TxRecord& rec : chrono) {
        if (!merged.empty()) {
            TxRecord& run = merged.back();
            const bool same_key = run.counterparty == rec.counterparty &&
                                  run.direction == rec.direction;
            // run.raw_timestamp is the run's first (oldest) timestamp.
            if (same_key && rec.raw_timestamp - run.raw_timestamp <= window) {
                run.raw_amount_wei += rec.raw_amount_wei;
                run.agg_count += rec.agg_count;
                run.source_hashes.insert(run.source_hashes.end(), rec.source_hashes.begin(),
                                         rec.source_hashes.end());
                continue;
            }
        }
        merged.push_back(std::move(rec));
    }

    TxSequence out;
    out.owner = seq.owner;
    out.records.reserve(merged.size() + 1);
    out.records.push_back(seq.records.empty() ? make_head(seq.owner) : seq.records.front());
    for (auto it = merged.rbegin(); it != merged.rend(); ++it) {
        out.records.push_back(std::move(*it));
    }
    reindex_positions(out);
    return out;
}

double repetitiveness_ratio(std::span<const TxSequence> corpus) {
    std::uint64_t pairs = 0;
    std::uint64_t repeats = 0;
    for (const TxSequence& seq : corpus) {
        const TxRecord* prev = nullptr;
        for (const TxRecord& rec : seq.records) {
            if (rec.is_self()) continue;
            if (prev) {
                ++pairs;
                if (prev->counterparty == rec.counterparty) ++repeats;
            }
            prev = &rec;
        }
    }
    if (pairs == 0) return 0.0;
    return static_cast<double>(repeats) / static_cast<double>(pairs);
}

std::int16_t amount_bin_of(u128 wei) {
    if (wei == 0) return 0;
    // floor(log10(wei/1e18)) + 10 == decimal_digits(wei) - 9, exactly.
    int digits = 0;
    while (wei > 0) {
        wei /= 10;
        ++digits;
    }
    return static_cast<std::int16_t>(std::clamp(digits - 9, 1, 20));
}

std::int16_t count_bin_of(std::uint32_t agg_count) {
    if (agg_count == 0) agg_count = 1;
    const int bin = std::bit_width(agg_count) - 1;  // floor(log2)
    return static_cast<std::int16_t>(std::clamp(bin, 0, 10));
}

std::int16_t time_bin_of(std::int64_t days_before_newest) {
    if (days_before_newest < 0) days_before_newest = 0;
    const auto v = static_cast<std::uint64_t>(days_before_newest) + 1;  // 1 + delta
    const int bin = std::bit_width(v) - 1;
    return static_cast<std::int16_t>(std::clamp(bin, 0, 15));
}

void apply_bins(TxSequence& seq) {
    std::int64_t newest = 0;
    for (const TxRecord& rec : seq.records) {
        if (!rec.is_self()) newest = std::max(newest, rec.raw_timestamp);
    }
    for (TxRecord& rec : seq.records) {
        if (rec.is_self()) {
            rec.amount_bin = kAmountNullBin;
            rec.count_bin = kCountNullBin;
            rec.time_bin = kTimeNullBin;
            continue;
        }
        rec.amount_bin = amount_bin_of(rec.raw_amount_wei);
        rec.count_bin = count_bin_of(rec.agg_count);
        rec.time_bin = time_bin_of((newest - rec.raw_timestamp) / 86400);
    }
}

std::size_t attach_token_recipients(TxSequence& seq, const EventsByHash& events_by_hash) {
    std::size_t attached = 0;
    for (TxRecord& rec : seq.records) {
        if (rec.direction != Direction::Out) continue;
        std::vector<std::int32_t> recipients;
        for (const Hash32& hash : rec.source_hashes) {
            auto it = events_by_hash.find(hash);
            if (it == events_by_hash.end()) continue;
            recipients.insert(recipients.end(), it->second.begin(), it->second.end());
        }
        if (!recipients.empty()) {
            rec.token_recipients = std::move(recipients);
            ++attached;
        }
    }
    return attached;
}

std::pair<TxSequence, TxSequence> separate_in_out(const TxSequence& seq) {
    TxSequence in_seq, out_seq;
    in_seq.owner = out_seq.owner = seq.owner;
    in_seq.records.push_back(make_head(seq.owner));
    out_seq.records.push_back(make_head(seq.owner));
    for (const TxRecord& rec : seq.records) {
        if (rec.is_self()) continue;
        if (rec.direction == Direction::In) {
            in_seq.records.push_back(rec);
        } else {
            out_seq.records.push_back(rec);
        }
    }
    reindex_positions(in_seq);
    reindex_positions(out_seq);
    return {std::move(in_seq), std::move(out_seq)};
}

std::vector<TxSequence> split_long(const TxSequence& seq, std::size_t max_len) {
    if (max_len < 2) throw NumericError("split_long: max_len must be >= 2");
    const std::size_t chunk = max_len - 1;
    std::vector<const TxRecord*> body;
    for (const TxRecord& rec : seq.records) {
        if (!rec.is_self()) body.push_back(&rec);
    }

    std::vector<TxSequence> pieces;
    if (body.empty()) {
        TxSequence piece;
        piece.owner = seq.owner;
        piece.records.push_back(make_head(seq.owner));
        pieces.push_back(std::move(piece));
        return pieces;
    }
    for (std::size_t start = 0; start < body.size(); start += chunk) {
        TxSequence piece;
        piece.owner = seq.owner;
        piece.records.push_back(make_head(seq.owner));
        const std::size_t end = std::min(start + chunk, body.size());
        for (std::size_t i = start; i < end; ++i) {
            piece.records.push_back(*body[i]);
        }
        reindex_positions(piece);
        pieces.push_back(std::move(piece));
    }
    return pieces;
}

MaskedSequence mask_sequence(const TxSequence& seq, double ratio, Rng& rng) {
    const std::size_t len = seq.records.size();
    if (len < 2) throw NumericError("mask_sequence: head-only sequence has nothing to mask");
    if (ratio <= 0.0 || ratio > 1.0) throw NumericError("mask_sequence: ratio must be in (0, 1]");

    const auto maskable = static_cast<std::int64_t>(len - 1);
    auto m = static_cast<std::int64_t>(std::llround(ratio * static_cast<double>(maskable)));
    m = std::clamp<std::int64_t>(m, 1, maskable);

    // Partial Fisher-Yates over positions 1..len-1.
    std::vector<std::int32_t> candidates(maskable);
    for (std::int64_t i = 0; i < maskable; ++i) candidates[i] = static_cast<std::int32_t>(i + 1);
    for (std::int64_t i = 0; i < m; ++i) {
        const auto j = i + static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(maskable - i)));
        std::swap(candidates[i], candidates[j]);
    }
    candidates.resize(m);
    std::sort(candidates.begin(), candidates.end());

    MaskedSequence out;
    out.seq = seq;
    out.masked_positions = std::move(candidates);
    out.positives.reserve(out.masked_positions.size());
    for (std::int32_t pos : out.masked_positions) {
        out.positives.push_back(out.seq.records[pos].counterparty);
        out.seq.records[pos].counterparty = kMaskId;
    }
    return out;
}

// --- vocabulary -------------------------------------------------------------

std::int32_t AddressVocab::id_of(const Address& a) const {
    auto it = address_to_id.find(a);
    return it == address_to_id.end() ? kUnkId : it->second;
}

std::string AddressVocab::token_of(std::int32_t id) const {
    switch (id) {
        case kPadId: return "[PAD]";
        case kMaskId: return "[MASK]";
        case kUnkId: return "[UNK]";
        default: break;
    }
    if (id < 0 || id >= size()) return "[UNK]";
    return to_hex(id_to_address[static_cast<std::size_t>(id)]);
}

std::uint64_t AddressVocab::hash() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (std::size_t i = 0; i < id_to_address.size(); ++i) {
        h = fnv1a64(id_to_address[i].data(), id_to_address[i].size(), h);
        const std::uint64_t f = counterparty_freq[i];
        h = fnv1a64(&f, sizeof f, h);
    }
    return h;
}

void save_vocab_csv(std::ostream& out, const AddressVocab& vocab) {
    CsvWriter writer(out);
    writer.write_row({"id", "address", "frequency"});
    for (std::int32_t id = 0; id < vocab.size(); ++id) {
        writer.write_row({std::to_string(id), vocab.token_of(id),
                          std::to_string(vocab.counterparty_freq[static_cast<std::size_t>(id)])});
    }
}

AddressVocab load_vocab_csv(std::istream& in) {
    CsvReader reader(in);
    reader.read_header();
    const int c_id = reader.require_column("id");
    const int c_addr = reader.require_column("address");
    const int c_freq = reader.require_column("frequency");

    AddressVocab vocab;
    std::vector<std::string> row;
    while (reader.next(row)) {
        const auto id = std::stoll(row[c_id]);
        if (id != static_cast<std::int64_t>(vocab.id_to_address.size())) {
            throw DataError("vocab: ids must be dense and ordered");
        }
        Address addr{};
        const std::string& token = row[c_addr];
        if (token != "[PAD]" && token != "[MASK]" && token != "[UNK]") {
            auto parsed = parse_address(token);
            if (!parsed) throw DataError("vocab: bad address '" + token + "'");
            addr = *parsed;
        }
        vocab.id_to_address.push_back(addr);
        vocab.counterparty_freq.push_back(std::stoull(row[c_freq]));
    }
    if (vocab.size() < kFirstAddressId) throw DataError("vocab: missing special tokens");
    for (std::int32_t id = kFirstAddressId; id < vocab.size(); ++id) {
        vocab.address_to_id.emplace(vocab.id_to_address[static_cast<std::size_t>(id)], id);
    }
    return vocab;
}

// --- corpus-level build ------------------------------------------------------

namespace {

struct OwnerWork {
    Address address{};
    std::vector<InvolvedTx> involved;
};

}  // namespace

BuildResult build_sequences(const ingest::Corpus& corpus, const BuildOptions& options) {
    using ingest::AccountKind;
    using ingest::AccountLabel;

    BuildResult result;

    std::unordered_map<Address, const ingest::AccountMeta*, AddressHash> meta_by_addr;
    for (const auto& meta : corpus.accounts) meta_by_addr.emplace(meta.address, &meta);
    auto kind_of = [&](const Address& a) {
        auto it = meta_by_addr.find(a);
        if (it == meta_by_addr.end()) return PartyKind::EOA;
        return it->second->kind == AccountKind::Contract ? PartyKind::Contract : PartyKind::EOA;
    };

    const auto counts = corpus.involved_tx_counts();
    const auto kept = ingest::filter_accounts(corpus.accounts, counts, options.min_tx,
                                              options.max_tx, {AccountLabel::Excluded});

    // Owners: kept EOAs, processed in address order for determinism.
    std::map<Address, OwnerWork> owners;
    for (const auto& meta : corpus.accounts) {
        if (meta.kind != AccountKind::EOA) continue;
        if (!kept.count(meta.address)) continue;
        owners[meta.address].address = meta.address;
    }

    for (const auto& tx : corpus.transactions) {
        if (!tx.has_to) continue;
        if (auto it = owners.find(tx.from_address); it != owners.end()) {
            InvolvedTx inv;
            inv.tx_hash = tx.tx_hash;
            inv.direction = Direction::Out;
            inv.amount_wei = tx.value_wei;
            inv.timestamp = tx.block_timestamp;
            inv.failed = tx.status == ingest::TxStatus::Failed;
            it->second.involved.push_back(inv);  // counterparty id filled later
        }
        if (tx.to_address != tx.from_address) {
            if (auto it = owners.find(tx.to_address); it != owners.end()) {
                InvolvedTx inv;
                inv.tx_hash = tx.tx_hash;
                inv.direction = Direction::In;
                inv.amount_wei = tx.value_wei;
                inv.timestamp = tx.block_timestamp;
                inv.failed = tx.status == ingest::TxStatus::Failed;
                it->second.involved.push_back(inv);
            }
        }
    }

    // Counterparty addresses per involved tx, resolved from the raw corpus.
    std::unordered_map<Hash32, const ingest::RawTransaction*, Hash32Hash> tx_by_hash;
    for (const auto& tx : corpus.transactions) tx_by_hash.emplace(tx.tx_hash, &tx);

    EventsByHash raw_events;  // recipient addresses in temp space, resolved below
    std::unordered_map<Hash32, std::vector<Address>, Hash32Hash> event_addrs;
    for (const auto& ev : corpus.token_events) {
        event_addrs[ev.tx_hash].push_back(ev.recipient_eoa);
    }

    // The address universe: owners, counterparties, token recipients of
    // transactions initiated by owners.
    std::map<Address, std::int32_t> address_ids;  // temp ids, dense
    auto temp_id = [&](const Address& a) {
        auto [it, inserted] = address_ids.emplace(a, 0);
        return &it->second;
    };
    for (auto& [addr, work] : owners) {
        temp_id(addr);
        for (auto& inv : work.involved) {
            const auto* tx = tx_by_hash.at(inv.tx_hash);
            const Address& other = inv.direction == Direction::Out ? tx->to_address : tx->from_address;
            temp_id(other);
            if (inv.direction == Direction::Out) {
                if (auto evit = event_addrs.find(inv.tx_hash); evit != event_addrs.end()) {
                    for (const Address& r : evit->second) temp_id(r);
                }
            }
        }
    }
    {
        std::int32_t next = kFirstAddressId;
        for (auto& [addr, id] : address_ids) id = next++;
    }
    std::vector<Address> temp_addr(address_ids.size() + kFirstAddressId);
    for (const auto& [addr, id] : address_ids) temp_addr[static_cast<std::size_t>(id)] = addr;

    // Build + dedup per owner in temp-id space.
    std::vector<TxSequence> full_raw;
    std::vector<TxSequence> full_final;
    full_raw.reserve(owners.size());
    full_final.reserve(owners.size());
    result.activity.reserve(owners.size());

    for (auto& [addr, work] : owners) {
        AccountActivity act;
        act.address = addr;
        act.involved_tx = work.involved.size();
        act.first_timestamp = work.involved.empty() ? 0 : work.involved.front().timestamp;
        act.last_timestamp = act.first_timestamp;
        for (auto& inv : work.involved) {
            const auto* tx = tx_by_hash.at(inv.tx_hash);
            const Address& other = inv.direction == Direction::Out ? tx->to_address : tx->from_address;
            inv.counterparty = address_ids.at(other);
            inv.counterparty_kind = kind_of(other);
            act.first_timestamp = std::min(act.first_timestamp, inv.timestamp);
            act.last_timestamp = std::max(act.last_timestamp, inv.timestamp);
        }
        result.activity.push_back(act);

        TxSequence raw = build_sequence(address_ids.at(addr), std::move(work.involved));
        // A negative window disables run-merging; failed records are still
        // dropped with the ablation flag off.
        TxSequence final_seq = deduplicate(raw, options.dedup ? options.dedup_window_hours : -1);
        apply_bins(final_seq);
        full_raw.push_back(std::move(raw));
        full_final.push_back(std::move(final_seq));
    }

    result.raw_repetitiveness = repetitiveness_ratio(full_raw);
    result.final_repetitiveness = repetitiveness_ratio(full_final);
    result.accounts_kept = owners.size();
    full_raw.clear();

    // Counterparty frequencies over the final full sequences.
    std::vector<std::uint64_t> temp_freq(temp_addr.size(), 0);
    for (const TxSequence& seq : full_final) {
        for (const TxRecord& rec : seq.records) {
            if (!rec.is_self()) ++temp_freq[static_cast<std::size_t>(rec.counterparty)];
        }
    }

    // Final vocab ids: descending frequency, ties by ascending address bytes.
    std::vector<std::int32_t> order;
    for (std::int32_t id = kFirstAddressId; id < static_cast<std::int32_t>(temp_addr.size()); ++id) {
        order.push_back(id);
    }
    std::sort(order.begin(), order.end(), [&](std::int32_t a, std::int32_t b) {
        const auto fa = temp_freq[static_cast<std::size_t>(a)];
        const auto fb = temp_freq[static_cast<std::size_t>(b)];
        if (fa != fb) return fa > fb;
        return temp_addr[static_cast<std::size_t>(a)] < temp_addr[static_cast<std::size_t>(b)];
    });

    std::vector<std::int32_t> remap(temp_addr.size(), kUnkId);
    result.vocab.id_to_address.assign(static_cast<std::size_t>(kFirstAddressId), Address{});
    result.vocab.counterparty_freq.assign(static_cast<std::size_t>(kFirstAddressId), 0);
    for (std::size_t i = 0; i < order.size(); ++i) {
        const std::int32_t old_id = order[i];
        const auto new_id = static_cast<std::int32_t>(kFirstAddressId + i);
        remap[static_cast<std::size_t>(old_id)] = new_id;
        result.vocab.id_to_address.push_back(temp_addr[static_cast<std::size_t>(old_id)]);
        result.vocab.counterparty_freq.push_back(temp_freq[static_cast<std::size_t>(old_id)]);
        result.vocab.address_to_id.emplace(temp_addr[static_cast<std::size_t>(old_id)], new_id);
    }

    // Token events in final-id space.
    EventsByHash events_final;
    for (const auto& [hash, addrs] : event_addrs) {
        auto& ids = events_final[hash];
        ids.reserve(addrs.size());
        for (const Address& a : addrs) {
            auto it = result.vocab.address_to_id.find(a);
            ids.push_back(it == result.vocab.address_to_id.end() ? kUnkId : it->second);
        }
    }

    std::unordered_set<Hash32, Hash32Hash> consumed;
    for (TxSequence& seq : full_final) {
        seq.owner = remap[static_cast<std::size_t>(seq.owner)];
        for (TxRecord& rec : seq.records) {
            rec.counterparty = remap[static_cast<std::size_t>(rec.counterparty)];
        }
        attach_token_recipients(seq, events_final);
        for (const TxRecord& rec : seq.records) {
            if (rec.direction != Direction::Out) continue;
            for (const Hash32& h : rec.source_hashes) {
                if (events_final.count(h)) consumed.insert(h);
            }
        }
    }
    result.unmatched_token_events = events_final.size() - consumed.size();

    // Views and splitting.
    for (TxSequence& seq : full_final) {
        auto emit_view = [&](const TxSequence& view_seq, View view) {
            auto pieces = split_long(view_seq, options.max_seq_len);
            for (std::size_t p = 0; p < pieces.size(); ++p) {
                StoredSequence stored;
                stored.owner = view_seq.owner;
                stored.view = view;
                stored.piece = static_cast<std::uint16_t>(p);
                stored.seq = std::move(pieces[p]);
                // Drop build-only fields before storage.
                for (TxRecord& rec : stored.seq.records) {
                    rec.failed = false;
                    rec.source_hashes.clear();
                }
                result.sequences.push_back(std::move(stored));
            }
        };
        emit_view(seq, View::Full);
        if (options.emit_in_out_views) {
            auto [in_seq, out_seq] = separate_in_out(seq);
            emit_view(in_seq, View::In);
            emit_view(out_seq, View::Out);
        }
    }

    return result;
}

// --- sequence file -----------------------------------------------------------

void save_sequences(std::ostream& out, const SequenceFile& file) {
    out.write(kSequenceMagic, 10);
    io::put<std::uint32_t>(out, 1);  // version
    io::put<std::uint32_t>(out, file.max_seq_len);
    io::put<std::uint8_t>(out, file.dedup_applied ? 1 : 0);
    io::put<std::uint64_t>(out, file.sequences.size());
    for (const StoredSequence& stored : file.sequences) {
        io::put<std::int32_t>(out, stored.owner);
        io::put<std::uint8_t>(out, static_cast<std::uint8_t>(stored.view));
        io::put<std::uint16_t>(out, stored.piece);
        io::put<std::uint32_t>(out, static_cast<std::uint32_t>(stored.seq.records.size()));
        for (const TxRecord& rec : stored.seq.records) {
            io::put<std::int32_t>(out, rec.counterparty);
            io::put<std::uint8_t>(out, static_cast<std::uint8_t>(rec.direction));
            io::put<std::uint8_t>(out, static_cast<std::uint8_t>(rec.counterparty_kind));
            io::put<std::int16_t>(out, rec.amount_bin);
            io::put<std::int16_t>(out, rec.count_bin);
            io::put<std::int16_t>(out, rec.time_bin);
            io::put<std::int32_t>(out, rec.position);
            io::put<std::uint64_t>(out, static_cast<std::uint64_t>(rec.raw_timestamp));
            io::put<u128>(out, rec.raw_amount_wei);
            io::put<std::uint32_t>(out, rec.agg_count);
            io::put<std::uint16_t>(out, static_cast<std::uint16_t>(rec.token_recipients.size()));
            for (std::int32_t id : rec.token_recipients) io::put<std::int32_t>(out, id);
        }
    }
    if (!out) throw DataError("sequence file: write failed");
}

SequenceFile load_sequences(std::istream& in) {
    io::expect_magic(in, std::string_view(kSequenceMagic, 10), "sequence file");
    const auto version = io::get<std::uint32_t>(in);
    if (version != 1) throw DataError("sequence file: unsupported version");

    SequenceFile file;
    file.max_seq_len = io::get<std::uint32_t>(in);
    file.dedup_applied = io::get<std::uint8_t>(in) != 0;
    const auto count = io::get<std::uint64_t>(in);
    file.sequences.reserve(count);
    for (std::uint64_t i = 0; i < count; ++i) {
        StoredSequence stored;
        stored.owner = io::get<std::int32_t>(in);
        stored.view = static_cast<View>(io::get<std::uint8_t>(in));
        stored.piece = io::get<std::uint16_t>(in);
        stored.seq.owner = stored.owner;
        const auto n = io::get<std::uint32_t>(in);
        stored.seq.records.reserve(n);
        for (std::uint32_t r = 0; r < n; ++r) {
            TxRecord rec;
            rec.counterparty = io::get<std::int32_t>(in);
            rec.direction = static_cast<Direction>(io::get<std::uint8_t>(in));
            rec.counterparty_kind = static_cast<PartyKind>(io::get<std::uint8_t>(in));
            rec.amount_bin = io::get<std::int16_t>(in);
            rec.count_bin = io::get<std::int16_t>(in);
            rec.time_bin = io::get<std::int16_t>(in);
            rec.position = io::get<std::int32_t>(in);
            rec.raw_timestamp = static_cast<std::int64_t>(io::get<std::uint64_t>(in));
            rec.raw_amount_wei = io::get<u128>(in);
            rec.agg_count = io::get<std::uint32_t>(in);
            const auto nr = io::get<std::uint16_t>(in);
            rec.token_recipients.reserve(nr);
            for (std::uint16_t t = 0; t < nr; ++t) {
                rec.token_recipients.push_back(io::get<std::int32_t>(in));
            }
            stored.seq.records.push_back(std::move(rec));
        }
        file.sequences.push_back(std::move(stored));
    }
    return file;
}

void save_sequences_file(const std::string& path, const SequenceFile& file) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot open for writing: " + path);
    save_sequences(out, file);
}

SequenceFile load_sequences_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open sequence file: " + path);
    return load_sequences(in);
}

void save_activity_csv(std::ostream& out, std::span<const AccountActivity> activity) {
    CsvWriter writer(out);
    writer.write_row({"address", "involved_tx", "first_timestamp", "last_timestamp"});
    for (const AccountActivity& act : activity) {
        writer.write_row({to_hex(act.address), std::to_string(act.involved_tx),
                          std::to_string(act.first_timestamp), std::to_string(act.last_timestamp)});
    }
}

std::vector<AccountActivity> load_activity_csv(std::istream& in) {
    CsvReader reader(in);
    reader.read_header();
    const int c_addr = reader.require_column("address");
    const int c_n = reader.require_column("involved_tx");
    const int c_first = reader.require_column("first_timestamp");
    const int c_last = reader.require_column("last_timestamp");

    std::vector<AccountActivity> out;
    std::vector<std::string> row;
    while (reader.next(row)) {
        AccountActivity act;
        auto addr = parse_address(row[c_addr]);
        if (!addr) throw DataError("activity: bad address '" + row[c_addr] + "'");
        act.address = *addr;
        act.involved_tx = std::stoull(row[c_n]);
        act.first_timestamp = std::stoll(row[c_first]);
        act.last_timestamp = std::stoll(row[c_last]);
        out.push_back(act);
    }
    return out;
}

}  // namespace ethseq::seqgen
