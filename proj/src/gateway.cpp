#include "ilmtr/gateway.hpp"

#include <algorithm>
#include <cmath>

namespace ilmtr {

int ChatRequest::max_tokens() const {
    if (const auto* a = std::get_if<AnswerModelParams>(&params)) return a->max_tokens;
    return std::get<SummaryModelParams>(params).n_predict;
}

Embedding make_embedding(std::vector<double> raw) {
    double sq = 0.0;
    for (double v : raw) {
        if (!std::isfinite(v)) throw GatewayError(GatewayError::Kind::bad_response, "embedding has non-finite component");
        sq += v * v;
    }
    const double norm = std::sqrt(sq);
    if (norm == 0.0) throw GatewayError(GatewayError::Kind::bad_response, "embedding is the zero vector");
    for (double& v : raw) v /= norm;
    return Embedding{std::move(raw), norm};
}

double cosine(std::span<const double> a, std::span<const double> b) {
    double dot = 0.0, na = 0.0, nb = 0.0;
    const std::size_t n = std::min(a.size(), b.size());
    for (std::size_t i = 0; i < n; ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0.0 || nb == 0.0) return 0.0;
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

const char* to_string(GatewayError::Kind kind) {
    switch (kind) {
        case GatewayError::Kind::transport: return "transport";
        case GatewayError::Kind::http_status: return "http-status";
        case GatewayError::Kind::empty_completion: return "empty-completion";
        case GatewayError::Kind::bad_response: return "bad-response";
        case GatewayError::Kind::dimension_mismatch: return "dimension-mismatch";
        case GatewayError::Kind::script_exhausted: return "script-exhausted";
        case GatewayError::Kind::invalid_request: return "invalid-request";
    }
    return "?";
}

}  // namespace ilmtr
