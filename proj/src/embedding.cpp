#include "gbt/embedding.hpp"

#include <cctype>
#include <cmath>

#include "gbt/util.hpp"

namespace gbt {

double l2_norm(const Vec& v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

void l2_normalize(Vec& v) {
    const double n = l2_norm(v);
    if (n <= 0.0) return;  // all-zero stays all-zero
    for (double& x : v) x /= n;
}

double cosine(const Vec& a, const Vec& b) {
    if (a.size() != b.size() || a.empty()) return 0.0;
    double dot = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) dot += a[i] * b[i];
    const double na = l2_norm(a), nb = l2_norm(b);
    if (na <= 0.0 || nb <= 0.0) return 0.0;
    return dot / (na * nb);
}

Vec TrigramEmbedder::embed(const std::string& text) const {
    // Lowercase, squeeze non-alphanumerics to single spaces, pad ends.
    std::string norm;
    norm.reserve(text.size() + 2);
    norm.push_back(' ');
    bool prev_space = true;
    for (char c : text) {
        unsigned char u = static_cast<unsigned char>(c);
        if (std::isalnum(u)) {
            norm.push_back(static_cast<char>(std::tolower(u)));
            prev_space = false;
        } else if (!prev_space) {
            norm.push_back(' ');
            prev_space = true;
        }
    }
    if (!prev_space) norm.push_back(' ');

    Vec v(dim_, 0.0);
    if (norm.size() < 3) return v;
    for (std::size_t i = 0; i + 3 <= norm.size(); ++i) {
        const std::uint64_t h = fnv1a64(std::string_view(norm).substr(i, 3));
        const std::size_t bucket = static_cast<std::size_t>(h % dim_);
        const double sign = ((h >> 60) & 1u) ? 1.0 : -1.0;
        v[bucket] += sign;
    }
    l2_normalize(v);
    return v;
}

std::shared_ptr<const TextEmbedder> default_embedder() {
    static const auto inst = std::make_shared<const TrigramEmbedder>(256);
    return inst;
}

}  // namespace gbt
