#include "ocrr/corpus.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

namespace ocrr {

static_assert(std::endian::native == std::endian::little, "embedding files assume a little-endian host");

namespace {

constexpr std::uint32_t kMaxLabelBytes = 1u << 16;

template <typename T>
void put(std::ostream& out, T value) {
    out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

class Reader {
public:
    explicit Reader(std::vector<char> bytes) : bytes_(std::move(bytes)) {}

    bool read(void* dst, std::size_t n) {
        if (bytes_.size() - pos_ < n) {
            return false;
        }
        std::memcpy(dst, bytes_.data() + pos_, n);
        pos_ += n;
        return true;
    }
    std::size_t remaining() const { return bytes_.size() - pos_; }

private:
    std::vector<char> bytes_;
    std::size_t pos_ = 0;
};

std::vector<char> slurp(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw LoadError(LoadErrorKind::io, 0, "cannot open " + path.string());
    }
    return std::vector<char>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

}  // namespace

std::vector<ClassLabel> HeldOutSplit::all_classes() const {
    std::vector<ClassLabel> all = known_classes;
    all.insert(all.end(), held_out_classes.begin(), held_out_classes.end());
    std::sort(all.begin(), all.end());
    return all;
}

void SyntheticSpec::validate() const {
    if (num_classes < 2) {
        throw std::invalid_argument("synthetic spec needs at least 2 classes");
    }
    if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma)) {
        throw std::invalid_argument("synthetic noise_sigma must be finite and >= 0");
    }
    if (dim == 0) {
        throw std::invalid_argument("synthetic dim must be positive");
    }
}

std::vector<LabeledExample> load_embedding_file(const std::filesystem::path& path) {
    Reader in(slurp(path));

    char magic[8];
    std::uint32_t dim = 0;
    std::uint64_t count = 0;
    if (!in.read(magic, 8) || std::memcmp(magic, kEmbeddingMagic, 8) != 0) {
        throw LoadError(LoadErrorKind::malformed_header, 0, "bad magic");
    }
    if (!in.read(&dim, 4) || !in.read(&count, 8) || dim == 0) {
        throw LoadError(LoadErrorKind::malformed_header, 0, "truncated header or zero dim");
    }

    std::vector<LabeledExample> out;
    out.reserve(static_cast<std::size_t>(std::min<std::uint64_t>(count, 1u << 20)));
    std::vector<float> values(dim);
    for (std::uint64_t i = 0; i < count; ++i) {
        std::uint32_t len = 0;
        if (!in.read(&len, 4) || len == 0 || len > kMaxLabelBytes || len > in.remaining()) {
            throw LoadError(LoadErrorKind::malformed_record, i, "bad label length");
        }
        std::string label(len, '\0');
        in.read(label.data(), len);
        std::uint8_t flag = 0;
        if (!in.read(&flag, 1) || flag > 1) {
            throw LoadError(LoadErrorKind::malformed_record, i, "bad split flag");
        }
        if (!in.read(values.data(), std::size_t{dim} * sizeof(float))) {
            throw LoadError(LoadErrorKind::dimension_mismatch, i,
                            "record holds fewer than " + std::to_string(dim) + " components");
        }
        for (float v : values) {
            if (!std::isfinite(v)) {
                throw LoadError(LoadErrorKind::non_finite, i, "");
            }
        }
        std::vector<float> copy(values);
        if (!normalize_in_place(copy)) {
            throw LoadError(LoadErrorKind::non_finite, i, "zero-norm embedding");
        }
        out.push_back({EmbeddingVector::normalized(std::move(copy)), std::move(label), static_cast<Split>(flag)});
    }
    if (in.remaining() != 0) {
        throw LoadError(LoadErrorKind::trailing_data, count,
                        std::to_string(in.remaining()) + " bytes after the last record");
    }
    return out;
}

void save_embedding_file(const std::filesystem::path& path, std::span<const LabeledExample> examples) {
    const std::uint32_t dim = examples.empty() ? 1 : static_cast<std::uint32_t>(examples.front().embedding.dim());
    for (const auto& ex : examples) {
        if (ex.embedding.dim() != dim) {
            throw std::invalid_argument("mixed embedding dimensions");
        }
        if (ex.label.empty() || ex.label.size() > kMaxLabelBytes) {
            throw std::invalid_argument("label must be non-empty and at most 64 KiB");
        }
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw Error("cannot write " + path.string());
    }
    out.write(kEmbeddingMagic, 8);
    put<std::uint32_t>(out, dim);
    put<std::uint64_t>(out, examples.size());
    for (const auto& ex : examples) {
        put<std::uint32_t>(out, static_cast<std::uint32_t>(ex.label.size()));
        out.write(ex.label.data(), static_cast<std::streamsize>(ex.label.size()));
        put<std::uint8_t>(out, static_cast<std::uint8_t>(ex.split));
        out.write(reinterpret_cast<const char*>(ex.embedding.data()),
                  static_cast<std::streamsize>(ex.embedding.dim() * sizeof(float)));
    }
    if (!out) {
        throw Error("write failed for " + path.string());
    }
}

std::filesystem::path manifest_path_for(const std::filesystem::path& embedding_path) {
    auto p = embedding_path;
    p += ".classes.txt";
    return p;
}

void write_class_manifest(const std::filesystem::path& path, std::span<const LabeledExample> examples) {
    std::ofstream out(path, std::ios::trunc);
    std::unordered_set<std::string> seen;
    for (const auto& ex : examples) {
        if (seen.insert(ex.label).second) {
            out << ex.label << '\n';
        }
    }
}

std::vector<LabeledExample> read_embedding_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw LoadError(LoadErrorKind::io, 0, "cannot open " + path.string());
    }
    std::vector<LabeledExample> out;
    std::string line;
    std::size_t dim = 0;
    bool first = true;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line.empty()) {
            continue;
        }
        std::vector<std::string> fields;
        std::stringstream ss(line);
        std::string field;
        while (std::getline(ss, field, ',')) {
            fields.push_back(field);
        }
        const bool is_header = fields.size() < 2 || (fields[1] != "train" && fields[1] != "test");
        if (first && is_header) {
            first = false;
            continue;
        }
        first = false;
        const std::uint64_t rec = out.size();
        if (fields.size() < 3 || is_header || fields[0].empty()) {
            throw LoadError(LoadErrorKind::malformed_record, rec, "expected label,split,values...");
        }
        std::vector<float> values;
        values.reserve(fields.size() - 2);
        for (std::size_t i = 2; i < fields.size(); ++i) {
            char* end = nullptr;
            const float v = std::strtof(fields[i].c_str(), &end);
            if (end == fields[i].c_str()) {
                throw LoadError(LoadErrorKind::malformed_record, rec, "unparsable value '" + fields[i] + "'");
            }
            if (!std::isfinite(v)) {
                throw LoadError(LoadErrorKind::non_finite, rec, "");
            }
            values.push_back(v);
        }
        if (dim == 0) {
            dim = values.size();
        } else if (values.size() != dim) {
            throw LoadError(LoadErrorKind::dimension_mismatch, rec,
                            "expected " + std::to_string(dim) + " values, got " + std::to_string(values.size()));
        }
        if (!normalize_in_place(values)) {
            throw LoadError(LoadErrorKind::non_finite, rec, "zero-norm embedding");
        }
        out.push_back({EmbeddingVector::normalized(std::move(values)), fields[0],
                       fields[1] == "train" ? Split::train : Split::test});
    }
    return out;
}

HeldOutSplit split_held_out(std::span<const LabeledExample> corpus, std::size_t held_out, std::uint64_t seed) {
    std::map<ClassLabel, std::pair<bool, bool>> presence;  // has train, has test
    for (const auto& ex : corpus) {
        auto& p = presence[ex.label];
        (ex.split == Split::train ? p.first : p.second) = true;
    }
    if (held_out >= presence.size()) {
        throw InvalidSplitError("held-out count " + std::to_string(held_out) + " must be below the class count " +
                                std::to_string(presence.size()));
    }
    for (const auto& [label, p] : presence) {
        if (!p.first || !p.second) {
            throw InvalidSplitError("class '" + label + "' lacks train or test examples");
        }
    }

    std::vector<ClassLabel> classes;
    for (const auto& kv : presence) {
        classes.push_back(kv.first);
    }
    Rng class_rng = make_rng(seed, "held_out_classes");
    std::shuffle(classes.begin(), classes.end(), class_rng);

    HeldOutSplit split;
    split.held_out_classes.assign(classes.begin(), classes.begin() + static_cast<std::ptrdiff_t>(held_out));
    split.known_classes.assign(classes.begin() + static_cast<std::ptrdiff_t>(held_out), classes.end());
    std::sort(split.held_out_classes.begin(), split.held_out_classes.end());
    std::sort(split.known_classes.begin(), split.known_classes.end());

    const std::set<ClassLabel> held(split.held_out_classes.begin(), split.held_out_classes.end());
    for (const auto& ex : corpus) {
        const bool novel = held.count(ex.label) != 0;
        if (ex.split == Split::train) {
            (novel ? split.stream_set : split.seed_set).push_back(ex);
        } else {
            (novel ? split.novel_test : split.original_test).push_back(ex);
        }
    }
    Rng stream_rng = make_rng(seed, "stream_order");
    std::shuffle(split.stream_set.begin(), split.stream_set.end(), stream_rng);
    return split;
}

std::string synthetic_label(std::size_t class_index) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "class_%04zu", class_index);
    return buf;
}

SyntheticGenerator::SyntheticGenerator(const SyntheticSpec& spec) : spec_(spec) {
    spec_.validate();
    centroids_.resize(spec_.num_classes * spec_.dim);
    Rng rng = make_rng(spec_.centroid_seed, "synthetic_centroids");
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (std::size_t c = 0; c < spec_.num_classes; ++c) {
        std::span<float> row(centroids_.data() + c * spec_.dim, spec_.dim);
        do {
            for (float& v : row) {
                v = static_cast<float>(gauss(rng));
            }
        } while (!normalize_in_place(row));
    }
}

std::span<const float> SyntheticGenerator::centroid(std::size_t class_index) const {
    return {centroids_.data() + class_index * spec_.dim, spec_.dim};
}

void SyntheticGenerator::sample_into(std::size_t class_index, Rng& rng, std::span<float> out) const {
    const auto mu = centroid(class_index);
    if (spec_.noise_sigma == 0.0) {
        std::copy(mu.begin(), mu.end(), out.begin());
        return;
    }
    std::normal_distribution<double> gauss(0.0, spec_.noise_sigma);
    do {
        for (std::size_t j = 0; j < spec_.dim; ++j) {
            out[j] = static_cast<float>(mu[j] + gauss(rng));
        }
    } while (!normalize_in_place(out));
}

EmbeddingVector SyntheticGenerator::sample(std::size_t class_index, Rng& rng) const {
    std::vector<float> v(spec_.dim);
    sample_into(class_index, rng, v);
    return EmbeddingVector::normalized(std::move(v));
}

std::vector<LabeledExample> generate_synthetic(const SyntheticSpec& spec, std::uint64_t sample_seed) {
    SyntheticGenerator gen(spec);
    Rng rng = make_rng(sample_seed, "synthetic_samples");
    std::vector<LabeledExample> out;
    out.reserve(spec.num_classes * (spec.samples_per_class + spec.test_per_class));
    for (std::size_t c = 0; c < spec.num_classes; ++c) {
        const std::string label = synthetic_label(c);
        for (std::size_t i = 0; i < spec.samples_per_class + spec.test_per_class; ++i) {
            out.push_back({gen.sample(c, rng), label, i < spec.samples_per_class ? Split::train : Split::test});
        }
    }
    return out;
}

}  // namespace ocrr
