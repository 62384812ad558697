#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ocrr/baselines.hpp"
#include "ocrr/bounded_store.hpp"
#include "ocrr/corpus.hpp"
#include "ocrr/index.hpp"
#include "ocrr/vote.hpp"

namespace ocrr {

struct Footprint {
    std::uint64_t entries = 0;     // stored examples
    std::uint64_t parameters = 0;  // stored float parameters (head plus auxiliary state)
    std::uint64_t bytes = 0;
};

/// Per-entry storage charged to ledger-style systems: vector + label + two hashes.
std::uint64_t entry_bytes(std::size_t dim, std::size_t label_bytes);

/// Anything the protocol can stream through. correct() performs at most one
/// update step; predict() never changes state.
class SystemUnderTest {
public:
    virtual ~SystemUnderTest() = default;

    virtual const std::string& name() const = 0;
    /// May throw NoEvidenceError; the harness scores that as a wrong answer.
    virtual ClassLabel predict(const EmbeddingVector& x) const = 0;
    /// predict() over many examples; nullopt where predict() would throw
    /// NoEvidenceError. Systems override it when batching is cheaper.
    virtual std::vector<std::optional<ClassLabel>> predict_batch(std::span<const LabeledExample> examples) const;
    virtual void correct(const EmbeddingVector& x, const ClassLabel& label) = 0;
    virtual Footprint footprint() const = 0;
    /// Named event counts worth recording in run metadata (e.g. A-GEM fallbacks).
    virtual std::map<std::string, std::uint64_t> counters() const { return {}; }
};

/// Every tunable knob, defaulted to the reference hyperparameters.
struct Hyperparameters {
    VoteConfig vote;
    IndexConfig index;

    std::size_t seed_epochs = 30;
    float seed_lr = 0.05f;
    float online_lr = 0.05f;

    float lambda_ewc = 1000.0f;
    std::size_t fisher_samples = 2000;

    std::size_t agem_memory = 1000;
    std::size_t agem_batch = 64;

    float lambda_distill = 1.0f;
    float temperature = 2.0f;

    HybridConfig hybrid;

    float ovr_lr = 0.01f;
    std::size_t ovr_seed_subsample = 3000;
    std::size_t ovr_seed_passes = 1;

    std::size_t budget = 1000;
    Eviction eviction = Eviction::reservoir;
    bool record_chain = false;
};

enum class SystemKind {
    substrate,
    static_knn,
    static_linear,
    online_linear,
    ewc,
    a_gem,
    lwf,
    knn_lm,
    river_logreg,
    bounded_substrate,
};

const char* to_string(SystemKind k);

struct SystemSpec {
    std::string name;
    SystemKind kind = SystemKind::substrate;
    Hyperparameters hp;
};

/// Resolves a system name (e.g. "substrate_sumsim", "bounded_fifo_100") to a
/// spec with its default hyperparameters. Throws ConfigError on unknown names.
SystemSpec system_spec_from_name(const std::string& name);

bool is_linear_head_kind(SystemKind k);

/// Seed-trained heads shared by all linear-head systems of one (dataset, seed).
class SeedHeadCache {
public:
    std::shared_ptr<const LinearHead> get_or_train(const std::string& key, const std::vector<ClassLabel>& classes,
                                                   std::span<const LabeledExample> seed_set, std::size_t epochs,
                                                   float lr, std::uint64_t seed);

private:
    std::mutex mutex_;
    std::map<std::string, std::shared_ptr<const LinearHead>> heads_;
};

struct SeedContext {
    const HeldOutSplit* split = nullptr;
    std::uint64_t seed = 0;
    std::string dataset;              // cache key component
    SeedHeadCache* cache = nullptr;   // optional
};

/// Builds and seeds a system on ctx.split->seed_set by its own seeding rule.
std::unique_ptr<SystemUnderTest> make_system(const SystemSpec& spec, const SeedContext& ctx);

}  // namespace ocrr
