#pragma once

#include <memory>
#include <string>
#include <vector>

namespace gbt {

using Vec = std::vector<double>;

double cosine(const Vec& a, const Vec& b);
double l2_norm(const Vec& v);
void l2_normalize(Vec& v);

/// Port for text embeddings used in description matching, routing and
/// retrieval. Implementations must be deterministic.
class TextEmbedder {
public:
    virtual ~TextEmbedder() = default;
    virtual Vec embed(const std::string& text) const = 0;
    virtual std::size_t dim() const = 0;
};

/// Reference embedder: signed feature hashing of character trigrams,
/// L2-normalized. Order-free of any model state; identical strings map to
/// identical vectors across processes.
class TrigramEmbedder final : public TextEmbedder {
public:
    explicit TrigramEmbedder(std::size_t dim = 256) : dim_(dim) {}
    Vec embed(const std::string& text) const override;
    std::size_t dim() const override { return dim_; }

private:
    std::size_t dim_;
};

std::shared_ptr<const TextEmbedder> default_embedder();

}  // namespace gbt
