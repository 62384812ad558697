#include <gtest/gtest.h>

#include <cstring>
#include <fstream>
#include <random>

#include "ocrr/ledger.hpp"
#include "ocrr/substrate.hpp"
#include "ocrr/vote.hpp"
#include "test_util.hpp"

using namespace ocrr;

namespace {

Ledger random_ledger(std::size_t n, std::size_t dim, std::mt19937_64& rng) {
    Ledger l;
    for (std::size_t i = 0; i < n; ++i) {
        l.append(random_unit(dim, rng), "label_" + std::to_string(rng() % 7));
    }
    return l;
}

std::vector<Neighbour> neighbours(std::vector<std::string_view> labels, std::vector<float> sims,
                                  std::vector<std::uint64_t> idx = {}) {
    std::vector<Neighbour> out;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        out.push_back({labels[i], sims[i], idx.empty() ? i : idx[i]});
    }
    return out;
}

VoteConfig variant(VoteVariant v) {
    VoteConfig c;
    c.variant = v;
    return c;
}

}  // namespace

TEST(Ledger, GenesisAndChainRule) {
    std::mt19937_64 rng(1);
    Ledger l;
    EXPECT_EQ(l.head_hash(), kGenesisHash);
    const auto& e0 = l.append(random_unit(4, rng), "a");
    EXPECT_EQ(e0.index, 0u);
    EXPECT_EQ(e0.prev_hash, kGenesisHash);
    const auto h0 = e0.content_hash;
    const auto& e1 = l.append(random_unit(4, rng), "b");
    EXPECT_EQ(e1.index, 1u);
    EXPECT_EQ(e1.prev_hash, h0);
    EXPECT_EQ(l.head_hash(), e1.content_hash);
    EXPECT_EQ(entry_hash(e1), e1.content_hash);
}

TEST(Ledger, IdenticalContentHashesDifferently) {
    Ledger l;
    const auto v = EmbeddingVector::normalized({1, 2, 3});
    l.append(v, "same");
    l.append(v, "same");
    EXPECT_NE(l[0].content_hash, l[1].content_hash);
}

TEST(Ledger, CanonicalLayout) {
    Digest prev{};
    prev[0] = 0xAB;
    const std::vector<float> v{1.0f, -2.0f};
    const auto bytes = canonical_bytes(0x0102, prev, "ab", v);
    ASSERT_EQ(bytes.size(), 8u + 32 + 4 + 2 + 4 + 8);
    EXPECT_EQ(bytes[0], 0x02);
    EXPECT_EQ(bytes[1], 0x01);
    EXPECT_EQ(bytes[8], 0xAB);
    EXPECT_EQ(bytes[40], 2);  // label length
    EXPECT_EQ(bytes[44], 'a');
    EXPECT_EQ(bytes[46], 2);  // dim
    EXPECT_EQ(bytes[50 + 3], 0x3F);  // 1.0f = 0x3F800000 little-endian
    EXPECT_EQ(bytes[54 + 3], 0xC0);  // -2.0f = 0xC0000000
}

TEST(Ledger, KnownDigest) {
    // Independent oracle: hash of the canonical bytes for an empty-label dim-0
    // record at index 0 is SHA-256 of 48 zero bytes.
    const auto d = entry_hash(0, kGenesisHash, "", std::span<const float>{});
    EXPECT_EQ(to_hex(d), "17b0761f87b081d5cf10757ccc89f12be355c70e2e29df288b65b30710dcbcd1");
}

TEST(Ledger, RejectsEmptyLabel) {
    Ledger l;
    EXPECT_THROW(l.append(EmbeddingVector::normalized({1}), ""), std::invalid_argument);
}

TEST(VerifyIntegrity, UntamperedIsOk) {
    std::mt19937_64 rng(2);
    const auto l = random_ledger(1000, 8, rng);
    EXPECT_TRUE(verify_integrity(l).ok);
    EXPECT_TRUE(verify_integrity(Ledger{}).ok);
}

TEST(VerifyIntegrity, FlippedLabelBitAt500) {
    std::mt19937_64 rng(3);
    const auto l = random_ledger(1000, 8, rng);
    std::vector<LedgerEntry> copy(l.entries().begin(), l.entries().end());
    copy[500].label[0] ^= 0x01;
    const auto r = verify_chain(copy, l.head_hash());
    EXPECT_FALSE(r.ok);
    EXPECT_EQ(r.first_bad_index, 500u);
}

TEST(VerifyIntegrity, SwapOfTenAndEleven) {
    std::mt19937_64 rng(4);
    const auto l = random_ledger(1000, 8, rng);
    std::vector<LedgerEntry> copy(l.entries().begin(), l.entries().end());
    std::swap(copy[10], copy[11]);
    const auto r = verify_chain(copy, l.head_hash());
    EXPECT_FALSE(r.ok);
    EXPECT_LE(r.first_bad_index, 11u);
}

TEST(VerifyIntegrity, ThreeEntryHandWalk) {
    // Swapping entries 1 and 2 of a 3-entry chain: position 1 now holds index 2,
    // so the walk stops at 1.
    std::mt19937_64 rng(5);
    const auto l = random_ledger(3, 4, rng);
    std::vector<LedgerEntry> copy(l.entries().begin(), l.entries().end());
    std::swap(copy[1], copy[2]);
    EXPECT_EQ(verify_chain(copy, l.head_hash()).first_bad_index, 1u);
    // Even with indices rewritten to match positions, the prev link at 1 is wrong.
    copy[1].index = 1;
    copy[2].index = 2;
    EXPECT_EQ(verify_chain(copy, l.head_hash()).first_bad_index, 1u);
}

TEST(VerifyIntegrity, TamperCompletenessProperty) {
    std::mt19937_64 rng(6);
    const auto l = random_ledger(1000, 8, rng);
    const std::vector<LedgerEntry> base(l.entries().begin(), l.entries().end());
    for (int trial = 0; trial < 300; ++trial) {
        auto copy = base;
        const std::size_t pos = rng() % (copy.size() - 1);
        switch (trial % 4) {
            case 0: {  // embedding bit flip
                auto comps = std::vector<float>(copy[pos].embedding.components().begin(),
                                                copy[pos].embedding.components().end());
                auto* bytes = reinterpret_cast<unsigned char*>(comps.data());
                bytes[rng() % (comps.size() * 4)] ^= static_cast<unsigned char>(1u << (rng() % 8));
                copy[pos].embedding = EmbeddingVector::from_raw(std::move(comps));
                break;
            }
            case 1:
                copy[pos].label += "x";
                break;
            case 2:
                copy.erase(copy.begin() + static_cast<long>(pos));
                break;
            case 3:
                std::swap(copy[pos], copy[pos + 1]);
                break;
        }
        const auto r = verify_chain(copy, l.head_hash());
        ASSERT_FALSE(r.ok) << "trial " << trial;
        EXPECT_LE(r.first_bad_index, pos + (trial % 4 == 3 ? 1 : 0)) << "trial " << trial;
    }
}

TEST(VerifyIntegrity, TruncatedTailDetectedByHead) {
    std::mt19937_64 rng(7);
    const auto l = random_ledger(10, 4, rng);
    const auto r = verify_chain(l.entries().first(9), l.head_hash());
    EXPECT_FALSE(r.ok);
    EXPECT_EQ(r.first_bad_index, 9u);
}

TEST(LedgerFile, SaveLoadAndVerify) {
    TempDir dir;
    std::mt19937_64 rng(8);
    const auto l = random_ledger(50, 6, rng);
    const auto path = dir.path() / "l.ocrrl";
    save_ledger(path, l);
    EXPECT_TRUE(verify_ledger_file(path).ok);
    const auto back = load_ledger(path);
    ASSERT_EQ(back.size(), 50u);
    EXPECT_EQ(back.head_hash(), l.head_hash());
    EXPECT_EQ(back[17].label, l[17].label);
    EXPECT_EQ(back[17].embedding, l[17].embedding);
}

TEST(LedgerFile, EmptyLedgerIsValid) {
    TempDir dir;
    const auto path = dir.path() / "empty.ocrrl";
    {
        std::ofstream out(path, std::ios::binary);
        out.write(kLedgerMagic, 8);
    }
    EXPECT_TRUE(verify_ledger_file(path).ok);
    save_ledger(dir.path() / "empty2.ocrrl", Ledger{});
    EXPECT_TRUE(verify_ledger_file(dir.path() / "empty2.ocrrl").ok);
}

TEST(LedgerFile, FlippedByteIsReported) {
    TempDir dir;
    std::mt19937_64 rng(9);
    const auto l = random_ledger(20, 4, rng);
    const auto path = dir.path() / "l.ocrrl";
    save_ledger(path, l);
    std::string bytes;
    {
        std::ifstream in(path, std::ios::binary);
        bytes.assign(std::istreambuf_iterator<char>(in), {});
    }
    // Each record: tag + u32 len + canonical (8+32+4+label+4+16) + 32 hash.
    // Flip a float byte well inside record 5.
    std::size_t off = 8;
    for (int i = 0; i < 5; ++i) {
        std::uint32_t len;
        std::memcpy(&len, bytes.data() + off + 1, 4);
        off += 1 + 4 + len + 32;
    }
    std::uint32_t len5;
    std::memcpy(&len5, bytes.data() + off + 1, 4);
    bytes[off + 1 + 4 + len5 - 2] ^= 0x10;
    {
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        out << bytes;
    }
    const auto r = verify_ledger_file(path);
    EXPECT_FALSE(r.ok);
    EXPECT_EQ(r.first_bad_index, 5u);
}

TEST(Vote, MarginBandKeepsStrongPair) {
    const auto n = neighbours({"A", "A", "B", "B", "B"}, {0.99f, 0.98f, 0.93f, 0.92f, 0.91f});
    EXPECT_EQ(vote(n, {}), "A");
    EXPECT_EQ(vote(n, variant(VoteVariant::count_only)), "A");
    EXPECT_EQ(vote(n, variant(VoteVariant::no_recency)), "A");
    EXPECT_EQ(vote(n, variant(VoteVariant::k1)), "A");
}

TEST(Vote, SumSimLetsMediocreMatchesWin) {
    const auto n = neighbours({"A", "A", "B", "B", "B"}, {0.99f, 0.98f, 0.93f, 0.92f, 0.91f});
    EXPECT_EQ(vote(n, variant(VoteVariant::sumsim)), "B");
}

TEST(Vote, SingleNeighbourAnyVariant) {
    const auto n = neighbours({"X"}, {0.5f}, {7});
    for (auto v : {VoteVariant::full, VoteVariant::count_only, VoteVariant::no_recency, VoteVariant::k1,
                   VoteVariant::sumsim}) {
        EXPECT_EQ(vote(n, variant(v)), "X");
    }
}

TEST(Vote, RecencyBreaksFullTie) {
    const auto n = neighbours({"A", "B"}, {0.90f, 0.90f}, {3, 9});
    EXPECT_EQ(vote(n, {}), "B");
    EXPECT_EQ(vote(neighbours({"A", "B"}, {0.90f, 0.90f}, {9, 3}), {}), "A");
    // Without recency the first encountered survives the max-sim tie.
    EXPECT_EQ(vote(n, variant(VoteVariant::no_recency)), "A");
    EXPECT_EQ(vote(n, variant(VoteVariant::count_only)), "A");
}

TEST(Vote, MaxSimBreaksCountTie) {
    // A and B have two survivors each; B holds the top hit.
    const auto n = neighbours({"B", "A", "A", "B"}, {0.95f, 0.94f, 0.93f, 0.92f});
    EXPECT_EQ(vote(n, {}), "B");
    EXPECT_EQ(vote(n, variant(VoteVariant::no_recency)), "B");
}

TEST(Vote, EmptyIsNoEvidence) {
    EXPECT_THROW(vote({}, {}), NoEvidenceError);
}

TEST(Vote, ConfigValidation) {
    VoteConfig c;
    c.k = 0;
    EXPECT_THROW(c.validate(), ConfigError);
    c.k = 5;
    c.margin = -0.1;
    EXPECT_THROW(c.validate(), ConfigError);
    EXPECT_EQ(variant(VoteVariant::k1).effective_k(), 1u);
    EXPECT_EQ(parse_vote_variant("sumsim"), VoteVariant::sumsim);
    EXPECT_THROW(parse_vote_variant("bogus"), ConfigError);
}

TEST(Vote, IsPure) {
    const auto n = neighbours({"A", "B", "C", "A", "B"}, {0.8f, 0.79f, 0.78f, 0.77f, 0.7f});
    const auto first = vote(n, {});
    for (int i = 0; i < 10; ++i) EXPECT_EQ(vote(n, {}), first);
}

TEST(Substrate, ExactMatchPrediction) {
    Substrate s(3);
    const auto e = EmbeddingVector::normalized({1, 2, 3});
    s.append(e, "pay");
    const auto p = s.predict(e.components());
    EXPECT_EQ(p.label, "pay");
    ASSERT_EQ(p.neighbour_similarities.size(), 1u);
    EXPECT_NEAR(p.neighbour_similarities[0], 1.0f, 1e-6f);
}

TEST(Substrate, KCappedAtLedgerSize) {
    Substrate s(2);
    s.append(EmbeddingVector::normalized({1, 0}), "a");
    s.append(EmbeddingVector::normalized({0, 1}), "b");
    const auto p = s.predict(EmbeddingVector::normalized({1, 0.1f}).components());
    EXPECT_EQ(p.neighbour_indices.size(), 2u);
    EXPECT_GE(p.neighbour_similarities[0], p.neighbour_similarities[1]);
}

TEST(Substrate, ThreeVersusTwoWithinMargin) {
    // Five entries at nearly equal similarity to the query: 3 x A, 2 x B.
    Substrate s(3);
    const float eps[] = {0.010f, 0.011f, 0.012f, 0.0105f, 0.0115f};
    const char* labels[] = {"B", "A", "A", "B", "A"};
    for (int i = 0; i < 5; ++i) {
        const float a = eps[i];
        s.append(EmbeddingVector::normalized({1.0f, a * (i % 2 ? 1.0f : -1.0f), a}), labels[i]);
    }
    const auto q = EmbeddingVector::normalized({1, 0, 0});
    const auto p = s.predict(q.components());
    EXPECT_EQ(p.neighbour_indices.size(), 5u);
    EXPECT_LT(p.neighbour_similarities.front() - p.neighbour_similarities.back(), 0.05f);
    EXPECT_EQ(p.label, "A");
}

TEST(Substrate, EmptyAndSeeding) {
    Substrate s(2);
    EXPECT_THROW(s.predict(EmbeddingVector::normalized({1, 0}).components()), NoEvidenceError);
    std::vector<LabeledExample> seed = {{EmbeddingVector::normalized({1, 0}), "a", Split::train},
                                        {EmbeddingVector::normalized({0, 1}), "b", Split::train}};
    s.seed(seed);
    EXPECT_EQ(s.ledger().size(), 2u);
    EXPECT_EQ(s.ledger()[1].label, "b");
    EXPECT_TRUE(verify_integrity(s.ledger()).ok);
    EXPECT_THROW(s.seed(seed), Error);
}

TEST(Substrate, NeverForget) {
    std::mt19937_64 rng(10);
    Substrate s(8);
    for (int i = 0; i < 100; ++i) s.append(random_unit(8, rng), "old_" + std::to_string(i % 5));
    std::vector<Digest> before;
    for (const auto& e : s.ledger().entries()) before.push_back(e.content_hash);
    for (int i = 0; i < 50; ++i) s.append(random_unit(8, rng), "new_" + std::to_string(i % 3));
    for (std::size_t i = 0; i < before.size(); ++i) EXPECT_EQ(s.ledger()[i].content_hash, before[i]);
    EXPECT_TRUE(verify_integrity(s.ledger()).ok);
}

TEST(Substrate, HnswBackendPredicts) {
    std::mt19937_64 rng(11);
    IndexConfig ic;
    ic.backend = Backend::hnsw;
    Substrate s(16, {}, ic);
    std::vector<EmbeddingVector> kept;
    for (int i = 0; i < 300; ++i) {
        kept.push_back(random_unit(16, rng));
        s.append(kept.back(), "c" + std::to_string(i));
    }
    EXPECT_EQ(s.predict(kept[123].components()).label, "c123");
    EXPECT_EQ(s.predict_batch(std::vector<const float*>{kept[5].data()})[0].label, "c5");
}
