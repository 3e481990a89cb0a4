#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <string>
#include <map>
#include <set>
#include <span>
#include <utility>
#include <vector>

#include "imagefolder/error.hpp"
#include "imagefolder/generator.hpp"
#include "imagefolder/tokenizer.hpp"

namespace imagefolder {

struct SequenceLength {
    std::size_t positions = 0;
    std::size_t tokens = 0;
    friend bool operator==(const SequenceLength&, const SequenceLength&) = default;
};

/// positions = sum K_i^2, tokens = branches * positions.
inline SequenceLength sequence_length(std::span<const int> schedule, int branches) {
    detail::require_arg(!schedule.empty(), "sequence_length: empty schedule");
    detail::require_arg(branches >= 1, "sequence_length: need at least one branch");
    std::size_t n = 0;
    for (int k : schedule) n += static_cast<std::size_t>(k) * k;
    return {n, n * static_cast<std::size_t>(branches)};
}

/// Plug-in mutual information of the empirical joint histogram, in bits.
inline double mutual_information(std::span<const TokenPair> pairs) {
    if (pairs.size() < 100) throw Error(ErrorCode::insufficient_data, "mutual_information: need at least 100 pairs");
    std::map<std::pair<int, int>, std::size_t> joint;
    std::map<int, std::size_t> ms, md;
    for (const auto& p : pairs) {
        ++joint[{p.semantic, p.detail}];
        ++ms[p.semantic];
        ++md[p.detail];
    }
    const double n = static_cast<double>(pairs.size());
    double mi = 0.0;
    for (const auto& [key, c] : joint) {
        const double pxy = c / n;
        const double px = ms[key.first] / n, py = md[key.second] / n;
        mi += pxy * std::log2(pxy / (px * py));
    }
    return std::max(mi, 0.0);
}

/// One-vs-all ridge regression on [features, 1] with +-1 targets, fitted in
/// closed form on `train`, scored by argmax on `val`.
inline double linear_probe(std::span<const std::vector<double>> features, std::span<const int> labels,
                           std::span<const std::size_t> train, std::span<const std::size_t> val, double ridge) {
    detail::require_arg(features.size() == labels.size() && !features.empty(), "linear_probe: features/labels mismatch");
    detail::require_arg(!train.empty() && !val.empty(), "linear_probe: empty split");
    detail::require_arg(ridge >= 0.0, "linear_probe: ridge must be non-negative");
    std::set<std::size_t> train_set(train.begin(), train.end());
    for (auto v : val) detail::require_arg(!train_set.count(v), "linear_probe: train and val splits overlap");
    int classes = 0;
    for (int l : labels) {
        detail::require_arg(l >= 0, "linear_probe: negative label");
        classes = std::max(classes, l + 1);
    }
    detail::require_arg(classes >= 2, "linear_probe: need at least two classes");

    const Eigen::Index d = static_cast<Eigen::Index>(features[0].size()) + 1;
    Eigen::MatrixXd X(static_cast<Eigen::Index>(train.size()), d);
    Eigen::MatrixXd Y = -Eigen::MatrixXd::Ones(static_cast<Eigen::Index>(train.size()), classes);
    for (std::size_t r = 0; r < train.size(); ++r) {
        const auto& f = features[train[r]];
        for (Eigen::Index c = 0; c + 1 < d; ++c) X(r, c) = f[c];
        X(r, d - 1) = 1.0;
        Y(r, labels[train[r]]) = 1.0;
    }
    Eigen::MatrixXd A = X.transpose() * X;
    A.diagonal().array() += ridge;
    Eigen::MatrixXd W;
    if (ridge == 0.0) {
        Eigen::FullPivLU<Eigen::MatrixXd> lu(A);
        if (lu.rank() < A.rows()) throw Error(ErrorCode::regularization_required, "linear_probe: singular system");
        W = lu.solve(X.transpose() * Y);
    } else {
        W = A.ldlt().solve(X.transpose() * Y);
    }
    std::size_t correct = 0;
    Eigen::VectorXd x(d);
    for (auto v : val) {
        const auto& f = features[v];
        for (Eigen::Index c = 0; c + 1 < d; ++c) x(c) = f[c];
        x(d - 1) = 1.0;
        Eigen::VectorXd scores = W.transpose() * x;
        Eigen::Index best = 0;
        scores.maxCoeff(&best);
        correct += best == labels[v];
    }
    return static_cast<double>(correct) / static_cast<double>(val.size());
}

struct PqCodewordCount {
    std::size_t joint = 0;
    std::vector<std::size_t> per_subspace;
    friend bool operator==(const PqCodewordCount&, const PqCodewordCount&) = default;
};

/// Smallest codebooks with zero quantization error: a joint codebook needs one
/// codeword per distinct point; a product codebook needs one per distinct
/// projection in each subspace. `subspaces` lists the coordinate indices of each.
inline PqCodewordCount min_pq_codewords(std::span<const std::vector<double>> points,
                                        std::span<const std::vector<int>> subspaces) {
    if (points.size() > 64) throw Error(ErrorCode::instance_too_large, "min_pq_codewords: at most 64 points");
    detail::require_arg(!points.empty(), "min_pq_codewords: no points");
    detail::require_arg(!subspaces.empty(), "min_pq_codewords: no subspaces");
    const std::size_t D = points[0].size();
    for (const auto& p : points) detail::require_arg(p.size() == D, "min_pq_codewords: points differ in dimension");
    for (const auto& s : subspaces)
        for (int c : s) detail::require_arg(c >= 0 && static_cast<std::size_t>(c) < D, "min_pq_codewords: bad coordinate");
    PqCodewordCount out;
    out.joint = std::set<std::vector<double>>(points.begin(), points.end()).size();
    for (const auto& s : subspaces) {
        std::set<std::vector<double>> proj;
        for (const auto& p : points) {
            std::vector<double> v;
            for (int c : s) v.push_back(p[c]);
            proj.insert(std::move(v));
        }
        out.per_subspace.push_back(proj.size());
    }
    return out;
}

struct DepthMse {
    int depth = 0;
    double mse = 0.0;
};

/// Mean reconstruction MSE over `images` for every kept depth n_start..N.
inline std::vector<DepthMse> depth_sweep(const TokenizerModel& m, std::span<const Grid> images) {
    detail::require_arg(!images.empty(), "depth_sweep: no images");
    std::vector<DepthMse> out;
    for (int d = m.quant.n_start; d <= m.quant.steps(); ++d) out.push_back({d, 0.0});
    for (const auto& img : images) {
        const auto z = encode(m, img);
        for (auto& row : out) row.mse += recon_loss(img, decode(m, quantize_frozen(m, z, row.depth).concat));
    }
    for (auto& row : out) row.mse /= static_cast<double>(images.size());
    return out;
}

/// Mean-pooled full-depth quantized features of one branch, one vector per image.
inline std::vector<std::vector<double>> pooled_branch_features(const TokenizerModel& m, std::span<const Grid> images,
                                                               Branch branch) {
    std::vector<std::vector<double>> out;
    out.reserve(images.size());
    for (const auto& img : images) {
        const auto q = tokenize(m, img);
        out.push_back(mean_pool(branch == Branch::semantic ? q.semantic.quantized : q.detail.quantized));
    }
    return out;
}

/// Long-format metrics table with columns run_id, step, metric, value.
/// Values are printed with 17 significant digits so files compare byte-for-byte.
class MetricsTable {
public:
    explicit MetricsTable(std::string run_id) : run_id_(std::move(run_id)) {}

    void add(std::uint64_t step, const std::string& metric, double value) {
        detail::require_arg(metric.find_first_of(",\n\"") == std::string::npos, "metrics: metric name needs quoting");
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.17g", value);
        text_ += run_id_ + "," + std::to_string(step) + "," + metric + "," + buf + "\n";
        ++rows_;
    }

    std::size_t rows() const { return rows_; }
    std::string csv() const { return "run_id,step,metric,value\n" + text_; }

private:
    std::string run_id_;
    std::string text_;
    std::size_t rows_ = 0;
};

}  // namespace imagefolder
