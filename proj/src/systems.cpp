#include "ocrr/systems.hpp"

#include <algorithm>
#include <charconv>
#include <numeric>

#include "ocrr/substrate.hpp"

namespace ocrr {

std::uint64_t entry_bytes(std::size_t dim, std::size_t label_bytes) {
    return 4 * dim + label_bytes + 64;
}

const char* to_string(SystemKind k) {
    switch (k) {
        case SystemKind::substrate: return "substrate";
        case SystemKind::static_knn: return "static_knn";
        case SystemKind::static_linear: return "static_linear";
        case SystemKind::online_linear: return "online_linear";
        case SystemKind::ewc: return "ewc";
        case SystemKind::a_gem: return "a_gem";
        case SystemKind::lwf: return "lwf";
        case SystemKind::knn_lm: return "knn_lm";
        case SystemKind::river_logreg: return "river_logreg";
        case SystemKind::bounded_substrate: return "bounded_substrate";
    }
    return "?";
}

std::vector<std::optional<ClassLabel>> SystemUnderTest::predict_batch(std::span<const LabeledExample> examples) const {
    std::vector<std::optional<ClassLabel>> out;
    out.reserve(examples.size());
    for (const auto& ex : examples) {
        try {
            out.emplace_back(predict(ex.embedding));
        } catch (const NoEvidenceError&) {
            out.emplace_back(std::nullopt);
        }
    }
    return out;
}

bool is_linear_head_kind(SystemKind k) {
    switch (k) {
        case SystemKind::static_linear:
        case SystemKind::online_linear:
        case SystemKind::ewc:
        case SystemKind::a_gem:
        case SystemKind::lwf:
            return true;
        default:
            return false;
    }
}

namespace {

std::vector<const float*> query_pointers(std::span<const LabeledExample> examples) {
    std::vector<const float*> q;
    q.reserve(examples.size());
    for (const auto& ex : examples) {
        q.push_back(ex.embedding.data());
    }
    return q;
}

std::size_t dim_of(const HeldOutSplit& split) {
    for (const auto* set : {&split.seed_set, &split.stream_set, &split.original_test, &split.novel_test}) {
        if (!set->empty()) {
            return set->front().embedding.dim();
        }
    }
    throw InvalidSplitError("split holds no examples");
}

// ---------------------------------------------------------------------------

class SubstrateSystem final : public SystemUnderTest {
public:
    SubstrateSystem(std::string name, const HeldOutSplit& split, const Hyperparameters& hp, bool learns)
        : name_(std::move(name)), substrate_(dim_of(split), hp.vote, hp.index), learns_(learns) {
        substrate_.seed(split.seed_set);
        for (const auto& ex : split.seed_set) {
            label_bytes_ += ex.label.size();
        }
    }

    const std::string& name() const override { return name_; }
    ClassLabel predict(const EmbeddingVector& x) const override { return substrate_.predict(x.components()).label; }
    std::vector<std::optional<ClassLabel>> predict_batch(std::span<const LabeledExample> examples) const override {
        std::vector<std::optional<ClassLabel>> out(examples.size());
        if (substrate_.ledger().empty() || examples.empty()) {
            return out;
        }
        const auto preds = substrate_.predict_batch(query_pointers(examples));
        for (std::size_t i = 0; i < preds.size(); ++i) {
            out[i] = preds[i].label;
        }
        return out;
    }
    void correct(const EmbeddingVector& x, const ClassLabel& label) override {
        if (!learns_) {
            return;
        }
        substrate_.append(x, label);
        label_bytes_ += label.size();
    }
    Footprint footprint() const override {
        const auto n = substrate_.ledger().size();
        return {n, 0, n * entry_bytes(substrate_.dim(), 0) + label_bytes_};
    }

private:
    std::string name_;
    Substrate substrate_;
    bool learns_;
    std::uint64_t label_bytes_ = 0;
};

class BoundedSystem final : public SystemUnderTest {
public:
    BoundedSystem(std::string name, const HeldOutSplit& split, const Hyperparameters& hp, std::uint64_t seed)
        : name_(std::move(name)),
          store_(dim_of(split), BudgetConfig{hp.budget, hp.eviction, derive_seed(seed, "bounded_store"), hp.record_chain},
                 hp.vote) {
        for (const auto& ex : split.seed_set) {
            store_.insert(ex.embedding, ex.label);
        }
    }

    const std::string& name() const override { return name_; }
    ClassLabel predict(const EmbeddingVector& x) const override { return store_.predict(x.components()).label; }
    void correct(const EmbeddingVector& x, const ClassLabel& label) override { store_.insert(x, label); }
    Footprint footprint() const override {
        const auto n = store_.live_size();
        return {n, 0, n * entry_bytes(store_.dim(), 0) + store_.live_label_bytes()};
    }

private:
    std::string name_;
    BoundedStore store_;
};

class LinearSystem final : public SystemUnderTest {
public:
    LinearSystem(std::string name, SystemKind kind, const SeedContext& ctx, const Hyperparameters& hp)
        : name_(std::move(name)), kind_(kind), hp_(hp), head_(seed_head(ctx, hp)), rng_(derive_seed(ctx.seed, "linear_correct")) {
        const HeldOutSplit& split = *ctx.split;
        if (kind_ == SystemKind::static_linear) {
            allowed_size_ = head_.classes();
            allowed_ = std::make_unique<bool[]>(allowed_size_);
            for (const auto& c : split.known_classes) {
                allowed_[head_.require_row(c)] = true;
            }
        } else if (kind_ == SystemKind::ewc) {
            fisher_ = fisher_estimate(head_, split.seed_set, hp.fisher_samples, ctx.seed);
            anchor_.assign(head_.parameters().begin(), head_.parameters().end());
        } else if (kind_ == SystemKind::a_gem) {
            memory_.capacity = hp.agem_memory;
            memory_.batch_size = hp.agem_batch;
            memory_.fill(split.seed_set, ctx.seed);
        } else if (kind_ == SystemKind::lwf) {
            teacher_ = std::make_unique<LinearHead>(head_);
        }
    }

    const std::string& name() const override { return name_; }

    ClassLabel predict(const EmbeddingVector& x) const override {
        return head_.class_order()[argmax_row(head_, x.components(), std::span<const bool>(allowed_.get(), allowed_size_))];
    }

    void correct(const EmbeddingVector& x, const ClassLabel& label) override {
        const auto v = x.components();
        switch (kind_) {
            case SystemKind::static_linear:
                return;
            case SystemKind::online_linear:
                ce_sgd_step(head_, v, label, hp_.online_lr);
                return;
            case SystemKind::ewc:
                ewc_step(head_, v, label, hp_.online_lr, hp_.lambda_ewc, fisher_, anchor_);
                return;
            case SystemKind::a_gem:
                switch (agem_step(head_, v, label, hp_.online_lr, memory_, rng_)) {
                    case AgemOutcome::plain: ++agem_plain_; break;
                    case AgemOutcome::projected: ++agem_projected_; break;
                    case AgemOutcome::empty_memory: ++agem_empty_; break;
                }
                return;
            case SystemKind::lwf:
                lwf_step(head_, *teacher_, v, label, hp_.online_lr, hp_.lambda_distill, hp_.temperature);
                return;
            default:
                return;
        }
    }

    Footprint footprint() const override {
        std::uint64_t params = head_.parameter_count();
        if (kind_ == SystemKind::ewc) {
            params += fisher_.values.size() + anchor_.size();
        } else if (kind_ == SystemKind::lwf) {
            params += teacher_->parameter_count();
        }
        Footprint f{0, params, params * 4};
        if (kind_ == SystemKind::a_gem) {
            f.entries = memory_.examples.size();
            for (const auto& ex : memory_.examples) {
                f.bytes += entry_bytes(head_.dim(), ex.label.size());
            }
        }
        return f;
    }

    std::map<std::string, std::uint64_t> counters() const override {
        if (kind_ != SystemKind::a_gem) {
            return {};
        }
        return {{"agem_plain_steps", agem_plain_},
                {"agem_projected_steps", agem_projected_},
                {"agem_empty_memory_fallbacks", agem_empty_}};
    }

private:
    static LinearHead seed_head(const SeedContext& ctx, const Hyperparameters& hp) {
        const auto classes = ctx.split->all_classes();
        if (ctx.cache != nullptr) {
            return *ctx.cache->get_or_train(ctx.dataset, classes, ctx.split->seed_set, hp.seed_epochs, hp.seed_lr,
                                            ctx.seed);
        }
        LinearHead head(classes, dim_of(*ctx.split));
        seed_train(head, ctx.split->seed_set, hp.seed_epochs, hp.seed_lr, ctx.seed);
        return head;
    }

    std::string name_;
    SystemKind kind_;
    Hyperparameters hp_;
    LinearHead head_;
    Rng rng_;
    std::unique_ptr<bool[]> allowed_;  // static_linear only: rows of seed classes
    std::size_t allowed_size_ = 0;
    FisherDiagonal fisher_;
    std::vector<float> anchor_;
    MemoryBuffer memory_;
    std::unique_ptr<LinearHead> teacher_;
    std::uint64_t agem_plain_ = 0;
    std::uint64_t agem_projected_ = 0;
    std::uint64_t agem_empty_ = 0;
};

class KnnLmSystem final : public SystemUnderTest {
public:
    KnnLmSystem(std::string name, const SeedContext& ctx, const Hyperparameters& hp)
        : name_(std::move(name)),
          hybrid_(hp.hybrid),
          head_(make_head(ctx, hp)),
          datastore_(dim_of(*ctx.split), hp.vote, hp.index) {
        hybrid_.validate();
        datastore_.seed(ctx.split->seed_set);
        for (const auto& ex : ctx.split->seed_set) {
            label_bytes_ += ex.label.size();
        }
    }

    const std::string& name() const override { return name_; }
    ClassLabel predict(const EmbeddingVector& x) const override {
        return knnlm_predict(head_, datastore_, x.components(), hybrid_);
    }
    std::vector<std::optional<ClassLabel>> predict_batch(std::span<const LabeledExample> examples) const override {
        std::vector<std::optional<ClassLabel>> out;
        out.reserve(examples.size());
        std::vector<std::vector<Hit>> all_hits(examples.size());
        if (!datastore_.ledger().empty() && !examples.empty()) {
            all_hits = datastore_.retrieve_batch(query_pointers(examples), hybrid_.k);
        }
        for (std::size_t i = 0; i < examples.size(); ++i) {
            std::vector<LabeledHit> hits;
            for (const Hit& h : all_hits[i]) {
                hits.push_back({datastore_.ledger()[h.id].label, h.similarity});
            }
            out.emplace_back(knnlm_predict(head_, examples[i].embedding.components(), hits, hybrid_));
        }
        return out;
    }
    void correct(const EmbeddingVector& x, const ClassLabel& label) override {
        datastore_.append(x, label);
        label_bytes_ += label.size();
    }
    Footprint footprint() const override {
        const auto n = datastore_.ledger().size();
        const auto params = head_.parameter_count();
        return {n, params, n * entry_bytes(datastore_.dim(), 0) + label_bytes_ + params * 4};
    }

private:
    static LinearHead make_head(const SeedContext& ctx, const Hyperparameters& hp) {
        const auto classes = ctx.split->all_classes();
        if (ctx.cache != nullptr) {
            return *ctx.cache->get_or_train(ctx.dataset, classes, ctx.split->seed_set, hp.seed_epochs, hp.seed_lr,
                                            ctx.seed);
        }
        LinearHead head(classes, dim_of(*ctx.split));
        seed_train(head, ctx.split->seed_set, hp.seed_epochs, hp.seed_lr, ctx.seed);
        return head;
    }

    std::string name_;
    HybridConfig hybrid_;
    LinearHead head_;
    Substrate datastore_;
    std::uint64_t label_bytes_ = 0;
};

class RiverLogRegSystem final : public SystemUnderTest {
public:
    RiverLogRegSystem(std::string name, const SeedContext& ctx, const Hyperparameters& hp)
        : name_(std::move(name)), model_(dim_of(*ctx.split), hp.ovr_lr) {
        const auto& seed_set = ctx.split->seed_set;
        std::vector<std::size_t> order(seed_set.size());
        std::iota(order.begin(), order.end(), 0);
        Rng rng = make_rng(ctx.seed, "ovr_subsample");
        std::shuffle(order.begin(), order.end(), rng);
        order.resize(std::min(order.size(), hp.ovr_seed_subsample));
        for (std::size_t pass = 0; pass < hp.ovr_seed_passes; ++pass) {
            for (std::size_t i : order) {
                model_.update(seed_set[i].embedding.components(), seed_set[i].label);
            }
        }
    }

    const std::string& name() const override { return name_; }
    ClassLabel predict(const EmbeddingVector& x) const override { return model_.predict(x.components()); }
    void correct(const EmbeddingVector& x, const ClassLabel& label) override { model_.update(x.components(), label); }
    Footprint footprint() const override {
        const auto p = model_.parameter_count();
        return {0, p, p * 4};
    }

private:
    std::string name_;
    OvrLogisticRegression model_;
};

bool parse_size(std::string_view s, std::size_t& out) {
    if (s.empty()) {
        return false;
    }
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc{} && p == s.data() + s.size();
}

}  // namespace

SystemSpec system_spec_from_name(const std::string& name) {
    SystemSpec spec;
    spec.name = name;
    static const std::map<std::string, SystemKind, std::less<>> kPlain = {
        {"substrate", SystemKind::substrate},         {"static_knn", SystemKind::static_knn},
        {"static_linear", SystemKind::static_linear}, {"online_linear", SystemKind::online_linear},
        {"ewc", SystemKind::ewc},                     {"a_gem", SystemKind::a_gem},
        {"lwf", SystemKind::lwf},                     {"knn_lm", SystemKind::knn_lm},
        {"river_logreg", SystemKind::river_logreg},
    };
    if (auto it = kPlain.find(name); it != kPlain.end()) {
        spec.kind = it->second;
        return spec;
    }
    constexpr std::string_view kVariantPrefix = "substrate_";
    if (name.rfind(kVariantPrefix, 0) == 0) {
        spec.kind = SystemKind::substrate;
        spec.hp.vote.variant = parse_vote_variant(std::string_view(name).substr(kVariantPrefix.size()));
        return spec;
    }
    for (auto ev : {Eviction::reservoir, Eviction::fifo}) {
        const std::string prefix = std::string("bounded_") + to_string(ev) + "_";
        std::size_t budget = 0;
        if (name.rfind(prefix, 0) == 0 && parse_size(std::string_view(name).substr(prefix.size()), budget) &&
            budget >= 1) {
            spec.kind = SystemKind::bounded_substrate;
            spec.hp.budget = budget;
            spec.hp.eviction = ev;
            return spec;
        }
    }
    throw ConfigError("unknown system '" + name + "'");
}

std::shared_ptr<const LinearHead> SeedHeadCache::get_or_train(const std::string& key,
                                                              const std::vector<ClassLabel>& classes,
                                                              std::span<const LabeledExample> seed_set,
                                                              std::size_t epochs, float lr, std::uint64_t seed) {
    const std::string full = key + "|" + std::to_string(seed) + "|" + std::to_string(epochs) + "|" +
                             std::to_string(lr) + "|" + std::to_string(seed_set.size());
    std::lock_guard lock(mutex_);
    auto it = heads_.find(full);
    if (it != heads_.end()) {
        return it->second;
    }
    auto head = std::make_shared<LinearHead>(classes, seed_set.empty() ? 1 : seed_set.front().embedding.dim());
    seed_train(*head, seed_set, epochs, lr, seed);
    heads_.emplace(full, head);
    return head;
}

std::unique_ptr<SystemUnderTest> make_system(const SystemSpec& spec, const SeedContext& ctx) {
    if (ctx.split == nullptr) {
        throw std::invalid_argument("make_system needs a split");
    }
    switch (spec.kind) {
        case SystemKind::substrate:
            return std::make_unique<SubstrateSystem>(spec.name, *ctx.split, spec.hp, true);
        case SystemKind::static_knn:
            return std::make_unique<SubstrateSystem>(spec.name, *ctx.split, spec.hp, false);
        case SystemKind::bounded_substrate:
            return std::make_unique<BoundedSystem>(spec.name, *ctx.split, spec.hp, ctx.seed);
        case SystemKind::knn_lm:
            return std::make_unique<KnnLmSystem>(spec.name, ctx, spec.hp);
        case SystemKind::river_logreg:
            return std::make_unique<RiverLogRegSystem>(spec.name, ctx, spec.hp);
        default:
            return std::make_unique<LinearSystem>(spec.name, spec.kind, ctx, spec.hp);
    }
}

}  // namespace ocrr
