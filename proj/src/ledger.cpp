#include "ocrr/ledger.hpp"

#include <cstring>
#include <fstream>
#include <iterator>

namespace ocrr {

namespace {

template <typename T>
void put(std::vector<std::uint8_t>& out, T value) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(&value);
    out.insert(out.end(), p, p + sizeof(T));
}

template <typename T>
bool take(std::span<const std::uint8_t>& in, T& value) {
    if (in.size() < sizeof(T)) {
        return false;
    }
    std::memcpy(&value, in.data(), sizeof(T));
    in = in.subspan(sizeof(T));
    return true;
}

constexpr std::uint8_t kRecordTag = 0x01;
constexpr std::uint8_t kFooterTag = 0x02;

// Decodes canonical bytes back into an entry. Does not check anything beyond layout.
bool decode_canonical(std::span<const std::uint8_t> in, LedgerEntry& e) {
    std::uint32_t label_len = 0;
    std::uint32_t dim = 0;
    if (!take(in, e.index) || in.size() < 32) {
        return false;
    }
    std::memcpy(e.prev_hash.data(), in.data(), 32);
    in = in.subspan(32);
    if (!take(in, label_len) || in.size() < label_len) {
        return false;
    }
    e.label.assign(reinterpret_cast<const char*>(in.data()), label_len);
    in = in.subspan(label_len);
    if (!take(in, dim) || in.size() != std::size_t{dim} * sizeof(float)) {
        return false;
    }
    std::vector<float> values(dim);
    std::memcpy(values.data(), in.data(), in.size());
    // Raw bits: a tampered vector must hash as stored, not re-normalized.
    e.embedding = EmbeddingVector::from_raw(std::move(values));
    return true;
}

}  // namespace

std::vector<std::uint8_t> canonical_bytes(std::uint64_t index, const Digest& prev_hash, std::string_view label,
                                          std::span<const float> embedding) {
    std::vector<std::uint8_t> out;
    out.reserve(8 + 32 + 4 + label.size() + 4 + embedding.size() * 4);
    put(out, index);
    out.insert(out.end(), prev_hash.begin(), prev_hash.end());
    put(out, static_cast<std::uint32_t>(label.size()));
    out.insert(out.end(), label.begin(), label.end());
    put(out, static_cast<std::uint32_t>(embedding.size()));
    const auto* p = reinterpret_cast<const std::uint8_t*>(embedding.data());
    out.insert(out.end(), p, p + embedding.size() * sizeof(float));
    return out;
}

Digest entry_hash(std::uint64_t index, const Digest& prev_hash, std::string_view label,
                  std::span<const float> embedding) {
    return sha256(canonical_bytes(index, prev_hash, label, embedding));
}

VerifyResult verify_chain(std::span<const LedgerEntry> entries, const Digest& head_hash) {
    const Digest* prev = &kGenesisHash;
    for (std::size_t i = 0; i < entries.size(); ++i) {
        const LedgerEntry& e = entries[i];
        if (e.index != i || e.prev_hash != *prev || entry_hash(e) != e.content_hash) {
            return VerifyResult::bad_at(i);
        }
        prev = &e.content_hash;
    }
    if (*prev != head_hash) {
        return VerifyResult::bad_at(entries.size());
    }
    return VerifyResult::valid();
}

bool is_tombstone(const LedgerEntry& e) {
    return e.embedding.empty() && e.label.rfind(kTombstonePrefix, 0) == 0;
}

const LedgerEntry& Ledger::append(EmbeddingVector embedding, ClassLabel label) {
    if (label.empty()) {
        throw std::invalid_argument("ledger labels must be non-empty");
    }
    LedgerEntry e;
    e.index = entries_.size();
    e.prev_hash = head_;
    e.embedding = std::move(embedding);
    e.label = std::move(label);
    e.content_hash = entry_hash(e);
    head_ = e.content_hash;
    entries_.push_back(std::move(e));
    return entries_.back();
}

const LedgerEntry& Ledger::append_tombstone(std::uint64_t evicted_index) {
    return append(EmbeddingVector{}, std::string(kTombstonePrefix) + std::to_string(evicted_index));
}

Ledger Ledger::from_entries(std::vector<LedgerEntry> entries) {
    Ledger l;
    const Digest head = entries.empty() ? kGenesisHash : entries.back().content_hash;
    if (auto r = verify_chain(entries, head); !r) {
        throw Error("ledger chain broken at entry " + std::to_string(r.first_bad_index));
    }
    l.entries_ = std::move(entries);
    l.head_ = head;
    return l;
}

VerifyResult verify_integrity(const Ledger& ledger) {
    return verify_chain(ledger.entries(), ledger.head_hash());
}

void save_ledger(const std::filesystem::path& path, const Ledger& ledger) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw Error("cannot write " + path.string());
    }
    out.write(kLedgerMagic, 8);
    for (const auto& e : ledger.entries()) {
        const auto bytes = canonical_bytes(e.index, e.prev_hash, e.label, e.embedding.components());
        const auto len = static_cast<std::uint32_t>(bytes.size());
        out.put(static_cast<char>(kRecordTag));
        out.write(reinterpret_cast<const char*>(&len), 4);
        out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        out.write(reinterpret_cast<const char*>(e.content_hash.data()), 32);
    }
    if (!ledger.empty()) {
        out.put(static_cast<char>(kFooterTag));
        out.write(reinterpret_cast<const char*>(ledger.head_hash().data()), 32);
    }
    if (!out) {
        throw Error("write failed for " + path.string());
    }
}

LedgerFile read_ledger_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error("cannot open " + path.string());
    }
    const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (bytes.size() < 8 || std::memcmp(bytes.data(), kLedgerMagic, 8) != 0) {
        throw Error(path.string() + " is not a ledger file");
    }
    LedgerFile f;
    std::span<const std::uint8_t> rest(bytes.data() + 8, bytes.size() - 8);
    auto fail = [&f] {
        f.parse_failed = true;
        f.parse_failed_at = f.entries.size();
        return f;
    };
    while (!rest.empty()) {
        const std::uint8_t tag = rest[0];
        rest = rest.subspan(1);
        if (tag == kFooterTag) {
            if (rest.size() != 32) {
                return fail();
            }
            std::memcpy(f.footer_head.data(), rest.data(), 32);
            f.has_footer = true;
            return f;
        }
        std::uint32_t len = 0;
        if (tag != kRecordTag || !take(rest, len) || rest.size() < std::size_t{len} + 32) {
            return fail();
        }
        LedgerEntry e;
        if (!decode_canonical(rest.first(len), e)) {
            return fail();
        }
        rest = rest.subspan(len);
        std::memcpy(e.content_hash.data(), rest.data(), 32);
        rest = rest.subspan(32);
        f.entries.push_back(std::move(e));
    }
    return f;
}

VerifyResult verify_ledger_file(const std::filesystem::path& path) {
    const LedgerFile f = read_ledger_file(path);
    if (f.parse_failed) {
        // Everything before the undecodable record may still be broken earlier.
        const Digest head = f.entries.empty() ? kGenesisHash : f.entries.back().content_hash;
        if (auto r = verify_chain(f.entries, head); !r) {
            return r;
        }
        return VerifyResult::bad_at(f.parse_failed_at);
    }
    if (!f.has_footer) {
        return f.entries.empty() ? VerifyResult::valid() : VerifyResult::bad_at(f.entries.size());
    }
    return verify_chain(f.entries, f.footer_head);
}

Ledger load_ledger(const std::filesystem::path& path) {
    LedgerFile f = read_ledger_file(path);
    if (f.parse_failed) {
        throw Error("ledger record " + std::to_string(f.parse_failed_at) + " is malformed");
    }
    if (auto r = verify_chain(f.entries, f.has_footer ? f.footer_head : kGenesisHash); !r) {
        throw Error("ledger chain broken at entry " + std::to_string(r.first_bad_index));
    }
    return Ledger::from_entries(std::move(f.entries));
}

}  // namespace ocrr
