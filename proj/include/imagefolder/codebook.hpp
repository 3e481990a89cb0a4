#pragma once

#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "imagefolder/error.hpp"
#include "imagefolder/grid.hpp"
#include "imagefolder/nn.hpp"
#include "imagefolder/rng.hpp"

namespace imagefolder {

class Codebook {
public:
    Codebook() = default;
    Codebook(int size, int dim) : size_(size), dim_(dim) {
        detail::require_arg(size > 0 && dim > 0, "codebook size and dim must be positive");
        codewords_.assign(static_cast<std::size_t>(size) * dim, 0.0);
        grads_.assign(codewords_.size(), 0.0);
        usage_.assign(size, 0);
    }

    int size() const { return size_; }
    int dim() const { return dim_; }

    std::span<const double> codeword(int j) const {
        return {codewords_.data() + static_cast<std::size_t>(j) * dim_, static_cast<std::size_t>(dim_)};
    }
    std::span<double> codeword(int j) {
        return {codewords_.data() + static_cast<std::size_t>(j) * dim_, static_cast<std::size_t>(dim_)};
    }
    std::span<double> codeword_grad(int j) {
        return {grads_.data() + static_cast<std::size_t>(j) * dim_, static_cast<std::size_t>(dim_)};
    }

    std::vector<double>& codewords() { return codewords_; }
    const std::vector<double>& codewords() const { return codewords_; }
    std::vector<double>& grads() { return grads_; }
    std::vector<std::uint64_t>& usage_counts() { return usage_; }
    const std::vector<std::uint64_t>& usage_counts() const { return usage_; }

    void reset_usage() { std::fill(usage_.begin(), usage_.end(), 0); }

    /// argmin_j ||z - e_j||^2, lowest index on ties. Does not count usage.
    int nearest(std::span<const double> z) const {
        detail::require_arg(static_cast<int>(z.size()) == dim_, "codebook lookup: dimension mismatch");
        int best = 0;
        double best_d = std::numeric_limits<double>::infinity();
        for (int j = 0; j < size_; ++j) {
            const double d = squared_distance(z, codeword(j));
            if (d < best_d) {
                best_d = d;
                best = j;
            }
        }
        return best;
    }

    void append_params(ParamList& out, const std::string& name) { out.push_back({name, codewords_, grads_}); }

    friend bool operator==(const Codebook&, const Codebook&) = default;

private:
    int size_ = 0;
    int dim_ = 0;
    std::vector<double> codewords_;
    std::vector<double> grads_;
    std::vector<std::uint64_t> usage_;
};

struct LookupResult {
    int index = 0;
    std::vector<double> codeword;
};

/// Nearest-codeword lookup; increments the chosen code's usage count.
inline LookupResult lookup(Codebook& cb, std::span<const double> z) {
    const int j = cb.nearest(z);
    ++cb.usage_counts()[j];
    auto e = cb.codeword(j);
    return {j, std::vector<double>(e.begin(), e.end())};
}

/// Square map of token ids.
struct IndexGrid {
    int size = 0;
    std::vector<std::int32_t> indices;  // row-major size x size

    IndexGrid() = default;
    explicit IndexGrid(int k) : size(k), indices(static_cast<std::size_t>(k) * k, 0) {}

    std::int32_t& at(int y, int x) { return indices[static_cast<std::size_t>(y) * size + x]; }
    std::int32_t at(int y, int x) const { return indices[static_cast<std::size_t>(y) * size + x]; }

    friend bool operator==(const IndexGrid&, const IndexGrid&) = default;
};

struct BatchLookup {
    IndexGrid indices;
    Grid quantized;
};

/// Cellwise nearest-codeword quantization. Usage is added to `usage` when given.
inline BatchLookup quantize_cells(const Codebook& cb, const Grid& grid, std::vector<std::uint64_t>* usage) {
    detail::require_arg(grid.channels == cb.dim(), "lookup_batch: channel count must equal codebook dim");
    detail::require_arg(grid.is_square(), "lookup_batch: grid must be square");
    BatchLookup out{IndexGrid(grid.height), Grid(grid.height, grid.width, grid.channels)};
    for (std::size_t i = 0; i < grid.cells(); ++i) {
        const int j = cb.nearest(grid.cell(i));
        if (usage) ++(*usage)[j];
        out.indices.indices[i] = j;
        auto e = cb.codeword(j);
        std::copy(e.begin(), e.end(), out.quantized.cell(i).begin());
    }
    return out;
}

/// Cellwise lookup over a square grid; counts usage on the codebook.
inline BatchLookup lookup_batch(Codebook& cb, const Grid& grid) { return quantize_cells(cb, grid, &cb.usage_counts()); }

/// Replaces every cell by its codeword; throws corrupt-token on a bad index.
inline Grid gather_codewords(const Codebook& cb, const IndexGrid& idx) {
    Grid out = Grid::square(idx.size, cb.dim());
    for (std::size_t i = 0; i < idx.indices.size(); ++i) {
        const int j = idx.indices[i];
        if (j < 0 || j >= cb.size()) throw Error(ErrorCode::corrupt_token, "token index out of codebook range");
        auto e = cb.codeword(j);
        std::copy(e.begin(), e.end(), out.cell(i).begin());
    }
    return out;
}

struct VqLossGrads {
    Grid encoder;   // d/dz (commitment term, flows to the encoder)
    Grid codebook;  // d/dzq (codebook term, flows to codewords)
};

/// ||sg(z) - zq||^2 + beta * ||z - sg(zq)||^2, summed over channels and
/// averaged over cells. Both terms share a value; the stop-gradients decide
/// which side each term's gradient reaches.
inline double vq_loss(const Grid& z, const Grid& zq, double beta, VqLossGrads* grads = nullptr) {
    detail::require_arg(z.same_shape(zq), "vq_loss: shape mismatch");
    const double inv_cells = 1.0 / static_cast<double>(z.cells());
    double sq = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) {
        const double d = z.data[i] - zq.data[i];
        sq += d * d;
    }
    if (grads) {
        grads->encoder = Grid(z.height, z.width, z.channels);
        grads->codebook = Grid(z.height, z.width, z.channels);
        for (std::size_t i = 0; i < z.size(); ++i) {
            const double d = z.data[i] - zq.data[i];
            grads->encoder.data[i] = 2.0 * beta * d * inv_cells;
            grads->codebook.data[i] = -2.0 * d * inv_cells;
        }
    }
    return (1.0 + beta) * sq * inv_cells;
}

/// Fraction of codewords with nonzero usage.
inline double utilization(const Codebook& cb) {
    std::size_t used = 0;
    for (auto u : cb.usage_counts()) used += u > 0;
    return static_cast<double>(used) / static_cast<double>(cb.size());
}

/// Resets every unused codeword to a random batch feature plus Gaussian noise
/// of the given scale, then clears usage counts. Returns the number revived.
inline int revive_dead_codes(Codebook& cb, std::span<const std::vector<double>> batch_features, Rng& rng,
                             double noise = 1e-3) {
    detail::require_arg(!batch_features.empty(), "revive_dead_codes: empty batch");
    // Features are drawn without replacement while the pool lasts.
    std::vector<std::size_t> pool(batch_features.size());
    for (std::size_t i = 0; i < pool.size(); ++i) pool[i] = i;
    std::size_t remaining = pool.size();
    int revived = 0;
    for (int j = 0; j < cb.size(); ++j) {
        if (cb.usage_counts()[j] > 0) continue;
        if (remaining == 0) remaining = pool.size();
        const std::size_t pick = rng.below(remaining);
        const auto& f = batch_features[pool[pick]];
        std::swap(pool[pick], pool[--remaining]);
        detail::require_arg(static_cast<int>(f.size()) == cb.dim(), "revive_dead_codes: feature dim mismatch");
        auto e = cb.codeword(j);
        for (int c = 0; c < cb.dim(); ++c) e[c] = f[c] + noise * rng.normal();
        ++revived;
    }
    if (revived > 0) cb.reset_usage();
    return revived;
}

/// Lloyd's k-means over `features` (seeded from distinct random samples).
/// Clusters that empty out keep their previous centre.
inline void kmeans_init(Codebook& cb, std::span<const std::vector<double>> features, Rng& rng, int iterations = 50) {
    detail::require_arg(!features.empty(), "kmeans_init: no features");
    const int J = cb.size(), C = cb.dim();
    const std::size_t n = features.size();
    // Seed with a random permutation prefix; wrap around (with jitter) if J > n.
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    for (int j = 0; j < J; ++j) {
        const auto& f = features[order[j % n]];
        auto e = cb.codeword(j);
        const double jitter = static_cast<std::size_t>(j) < n ? 0.0 : 1e-3;
        for (int c = 0; c < C; ++c) e[c] = f[c] + jitter * rng.normal();
    }
    std::vector<int> assign(n, -1);
    std::vector<double> sums(static_cast<std::size_t>(J) * C);
    std::vector<std::size_t> counts(J);
    for (int it = 0; it < iterations; ++it) {
        bool changed = false;
        for (std::size_t i = 0; i < n; ++i) {
            const int j = cb.nearest(features[i]);
            if (j != assign[i]) {
                assign[i] = j;
                changed = true;
            }
        }
        if (!changed && it > 0) break;
        std::fill(sums.begin(), sums.end(), 0.0);
        std::fill(counts.begin(), counts.end(), 0);
        for (std::size_t i = 0; i < n; ++i) {
            ++counts[assign[i]];
            for (int c = 0; c < C; ++c) sums[static_cast<std::size_t>(assign[i]) * C + c] += features[i][c];
        }
        for (int j = 0; j < J; ++j) {
            if (counts[j] == 0) continue;
            auto e = cb.codeword(j);
            for (int c = 0; c < C; ++c) e[c] = sums[static_cast<std::size_t>(j) * C + c] / counts[j];
        }
    }
}

}  // namespace imagefolder
