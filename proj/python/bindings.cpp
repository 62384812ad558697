#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "ocrr/corpus.hpp"
#include "ocrr/errors.hpp"
#include "ocrr/index.hpp"
#include "ocrr/ledger.hpp"
#include "ocrr/scale_study.hpp"
#include "ocrr/substrate.hpp"
#include "ocrr/sweep.hpp"

namespace py = pybind11;
using namespace ocrr;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

std::span<const float> as_vector(const FloatArray& a) {
    if (a.ndim() != 1) throw std::invalid_argument("expected a 1-d float array");
    return {a.data(), static_cast<std::size_t>(a.shape(0))};
}

// (labels, splits, matrix) with splits as "train"/"test"
py::tuple to_python(const std::vector<LabeledExample>& corpus) {
    const std::size_t dim = corpus.empty() ? 0 : corpus.front().embedding.dim();
    py::array_t<float> m({corpus.size(), dim});
    auto out = m.mutable_unchecked<2>();
    py::list labels, splits;
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        const auto c = corpus[i].embedding.components();
        for (std::size_t j = 0; j < dim; ++j) out(i, j) = c[j];
        labels.append(corpus[i].label);
        splits.append(corpus[i].split == Split::train ? "train" : "test");
    }
    return py::make_tuple(labels, splits, m);
}

std::vector<LabeledExample> from_python(const std::vector<std::string>& labels, const std::vector<std::string>& splits,
                                        const FloatArray& m) {
    if (m.ndim() != 2 || static_cast<std::size_t>(m.shape(0)) != labels.size()) {
        throw std::invalid_argument("matrix must be (len(labels), dim)");
    }
    if (!splits.empty() && splits.size() != labels.size()) throw std::invalid_argument("splits/labels length mismatch");
    const auto dim = static_cast<std::size_t>(m.shape(1));
    std::vector<LabeledExample> out;
    out.reserve(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) {
        std::vector<float> v(m.data(i, 0), m.data(i, 0) + dim);
        Split s = Split::train;
        if (!splits.empty()) {
            if (splits[i] == "test") s = Split::test;
            else if (splits[i] != "train") throw std::invalid_argument("split must be 'train' or 'test'");
        }
        out.push_back({EmbeddingVector::normalized(std::move(v)), labels[i], s});
    }
    return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "C++ core of the ocrr package";

    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<LoadError>(m, "LoadError", PyExc_IOError);
    py::register_exception<NoEvidenceError>(m, "NoEvidenceError", PyExc_LookupError);

    py::class_<Substrate>(m, "Substrate")
        .def(py::init([](std::size_t dim, std::size_t k, double margin, const std::string& variant,
                         const std::string& backend) {
                 VoteConfig vote{k, margin, parse_vote_variant(variant)};
                 IndexConfig index;
                 index.backend = parse_backend(backend);
                 index.dim = dim;
                 return std::make_unique<Substrate>(dim, vote, index);
             }),
             py::arg("dim"), py::arg("k") = 5, py::arg("margin") = 0.05, py::arg("variant") = "full",
             py::arg("backend") = "brute")
        .def(
            "append",
            [](Substrate& s, const FloatArray& x, const std::string& label) {
                const auto v = as_vector(x);
                return s.append(EmbeddingVector::normalized({v.begin(), v.end()}), label).index;
            },
            py::arg("embedding"), py::arg("label"), "Append one correction; returns its ledger index.")
        .def(
            "predict",
            [](const Substrate& s, const FloatArray& x) {
                const auto v = as_vector(x);
                const auto q = EmbeddingVector::normalized({v.begin(), v.end()});
                return s.predict(q.components()).label;
            },
            py::arg("query"))
        .def(
            "neighbours",
            [](const Substrate& s, const FloatArray& x, std::size_t k) {
                const auto v = as_vector(x);
                const auto q = EmbeddingVector::normalized({v.begin(), v.end()});
                std::vector<std::pair<std::uint64_t, float>> out;
                for (const auto& h : s.retrieve(q.components(), k)) out.emplace_back(h.id, h.similarity);
                return out;
            },
            py::arg("query"), py::arg("k") = 5)
        .def("verify",
             [](const Substrate& s) {
                 const auto r = verify_integrity(s.ledger());
                 return py::make_tuple(r.ok, r.ok ? py::object(py::none()) : py::int_(r.first_bad_index));
             })
        .def("save_ledger", [](const Substrate& s, const std::filesystem::path& p) { save_ledger(p, s.ledger()); })
        .def_property_readonly("head_hash", [](const Substrate& s) { return to_hex(s.ledger().head_hash()); })
        .def("label",
             [](const Substrate& s, std::size_t i) {
                 if (i >= s.ledger().size()) throw py::index_error("ledger index out of range");
                 return s.ledger()[i].label;
             })
        .def("__len__", [](const Substrate& s) { return s.ledger().size(); })
        .def_property_readonly("dim", &Substrate::dim);

    // Index handles take float32 rows already normalized by the caller.
    auto add_rows = [](VectorIndex& index, const FloatArray& matrix, std::uint64_t first_id) {
        if (matrix.ndim() != 2 || static_cast<std::size_t>(matrix.shape(1)) != index.dim()) {
            throw std::invalid_argument("matrix must be (n, dim)");
        }
        const auto dim = index.dim();
        for (py::ssize_t i = 0; i < matrix.shape(0); ++i) {
            index.insert(first_id + static_cast<std::uint64_t>(i), {matrix.data(i, 0), dim});
        }
    };
    auto hits_to_python = [](const std::vector<Hit>& hits) {
        py::array_t<std::uint64_t> ids(hits.size());
        py::array_t<float> sims(hits.size());
        for (std::size_t i = 0; i < hits.size(); ++i) {
            ids.mutable_at(i) = hits[i].id;
            sims.mutable_at(i) = hits[i].similarity;
        }
        return py::make_tuple(ids, sims);
    };

    py::class_<BruteForceIndex>(m, "BruteForceIndex")
        .def(py::init<std::size_t>(), py::arg("dim"))
        .def(
            "add", [=](BruteForceIndex& ix, const FloatArray& rows, std::uint64_t first_id) { add_rows(ix, rows, first_id); },
            py::arg("rows"), py::arg("first_id") = 0)
        .def(
            "top_k", [=](const BruteForceIndex& ix, const FloatArray& q, std::size_t k) { return hits_to_python(ix.top_k(as_vector(q), k)); },
            py::arg("query"), py::arg("k") = 5)
        .def("__len__", &BruteForceIndex::size);

    py::class_<HnswIndex>(m, "HnswIndex")
        .def(py::init([](std::size_t dim, std::size_t M, std::size_t ef_construction, std::size_t ef_search) {
                 return std::make_unique<HnswIndex>(dim, HnswParams{M, ef_construction, ef_search});
             }),
             py::arg("dim"), py::arg("M") = 16, py::arg("ef_construction") = 200, py::arg("ef_search") = 64)
        .def(
            "add",
            [=](HnswIndex& ix, const FloatArray& rows, std::uint64_t first_id) {
                py::gil_scoped_release release;
                add_rows(ix, rows, first_id);
            },
            py::arg("rows"), py::arg("first_id") = 0)
        .def(
            "top_k",
            [=](const HnswIndex& ix, const FloatArray& q, std::size_t k, std::size_t ef) {
                return hits_to_python(ef == 0 ? ix.top_k(as_vector(q), k) : ix.top_k(as_vector(q), k, ef));
            },
            py::arg("query"), py::arg("k") = 5, py::arg("ef") = 0)
        .def("__len__", &HnswIndex::size)
        .def_property_readonly("max_level", &HnswIndex::max_level);

    m.def(
        "generate_synthetic",
        [](std::size_t dim, std::size_t num_classes, std::size_t samples_per_class, std::size_t test_per_class,
           double noise_sigma, std::uint64_t centroid_seed, std::uint64_t sample_seed) {
            SyntheticSpec spec{dim, num_classes, centroid_seed, noise_sigma, samples_per_class, test_per_class};
            return to_python(generate_synthetic(spec, sample_seed));
        },
        py::arg("dim") = 384, py::arg("num_classes") = 100, py::arg("samples_per_class") = 100,
        py::arg("test_per_class") = 0, py::arg("noise_sigma") = 0.05, py::arg("centroid_seed") = 0,
        py::arg("sample_seed") = 0, "Returns (labels, splits, float32 matrix).");

    m.def(
        "load_embedding_file", [](const std::filesystem::path& p) { return to_python(load_embedding_file(p)); },
        py::arg("path"));
    m.def(
        "save_embedding_file",
        [](const std::filesystem::path& p, const std::vector<std::string>& labels, const FloatArray& matrix,
           const std::vector<std::string>& splits) {
            const auto corpus = from_python(labels, splits, matrix);
            save_embedding_file(p, corpus);
            write_class_manifest(manifest_path_for(p), corpus);
        },
        py::arg("path"), py::arg("labels"), py::arg("matrix"), py::arg("splits") = std::vector<std::string>{});

    m.def(
        "verify_ledger_file",
        [](const std::filesystem::path& p) {
            const auto r = verify_ledger_file(p);
            return py::make_tuple(r.ok, r.ok ? py::object(py::none()) : py::int_(r.first_bad_index));
        },
        py::arg("path"), "Returns (ok, first_bad_index or None).");

    m.def(
        "recall_at_k",
        [](const std::vector<std::uint64_t>& exact, const std::vector<std::uint64_t>& approx, std::size_t k) {
            return recall_at_k(exact, approx, k);
        },
        py::arg("exact_ids"), py::arg("approx_ids"), py::arg("k"));

    m.def(
        "run_sweep",
        [](const std::filesystem::path& config, const std::filesystem::path& out_dir, std::size_t jobs, bool storage) {
            const auto cfg = load_sweep_config(config);
            SweepOptions opts;
            opts.out_dir = out_dir;
            opts.jobs = jobs;
            SweepResult r;
            {
                py::gil_scoped_release release;
                r = storage ? run_storage_sweep(cfg, opts) : run_sweep(cfg, opts);
            }
            py::dict d;
            d["results_csv"] = r.results_csv;
            d["summary_csv"] = r.summary_csv;
            d["metadata_json"] = r.metadata_json;
            d["cells_run"] = r.cells_run;
            d["cells_skipped"] = r.cells_skipped;
            return d;
        },
        py::arg("config"), py::arg("out_dir"), py::arg("jobs") = 1, py::arg("storage") = false);

    m.def(
        "run_scale_study",
        [](const std::vector<std::size_t>& scales, std::size_t dim, std::size_t num_classes, double noise_sigma,
           std::size_t test_queries, std::uint64_t sample_seed) {
            ScaleStudyConfig cfg;
            cfg.scales = scales;
            cfg.spec.dim = dim;
            cfg.spec.num_classes = num_classes;
            cfg.spec.noise_sigma = noise_sigma;
            cfg.test_queries = test_queries;
            cfg.sample_seed = sample_seed;
            std::vector<ScaleStudyRow> rows;
            {
                py::gil_scoped_release release;
                rows = run_scale_study(cfg);
            }
            py::list out;
            for (const auto& r : rows) {
                py::dict d;
                d["scale"] = r.scale;
                d["skipped"] = r.skipped;
                d["brute_acc"] = r.brute_acc;
                d["hnsw_acc"] = r.hnsw_acc;
                d["gap"] = r.gap;
                d["recall_at_5"] = r.recall_at_5;
                d["agreement"] = r.agreement;
                d["hnsw_ms_per_query"] = r.hnsw_ms_per_query;
                out.append(d);
            }
            return out;
        },
        py::arg("scales"), py::arg("dim") = 384, py::arg("num_classes") = 100, py::arg("noise_sigma") = 0.05,
        py::arg("test_queries") = 1000, py::arg("sample_seed") = 0);
}
