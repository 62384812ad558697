#include "ocrr/embedding.hpp"

#include <cmath>
#include <stdexcept>

#include "ocrr/errors.hpp"

namespace ocrr {

bool normalize_in_place(std::span<float> v) {
    double sq = 0.0;
    for (float c : v) {
        if (!std::isfinite(c)) {
            return false;
        }
        sq += static_cast<double>(c) * c;
    }
    if (sq == 0.0) {
        return false;
    }
    if (std::abs(sq - 1.0) <= 1e-6) {
        return true;
    }
    const double norm = std::sqrt(sq);
    for (float& c : v) {
        c = static_cast<float>(c / norm);
    }
    return true;
}

EmbeddingVector EmbeddingVector::normalized(std::vector<float> components) {
    if (!normalize_in_place(components)) {
        throw std::invalid_argument("embedding has a non-finite component or zero norm");
    }
    return EmbeddingVector(std::move(components));
}

const char* to_string(LoadErrorKind kind) {
    switch (kind) {
        case LoadErrorKind::io: return "io";
        case LoadErrorKind::malformed_header: return "malformed header";
        case LoadErrorKind::malformed_record: return "malformed record";
        case LoadErrorKind::dimension_mismatch: return "dimension mismatch";
        case LoadErrorKind::non_finite: return "non-finite component";
        case LoadErrorKind::trailing_data: return "trailing data";
    }
    return "unknown";
}

LoadError::LoadError(LoadErrorKind kind, std::uint64_t record, const std::string& detail)
    : Error(std::string(to_string(kind)) + " at record " + std::to_string(record) +
            (detail.empty() ? "" : ": " + detail)),
      kind_(kind),
      record_(record) {}

}  // namespace ocrr
