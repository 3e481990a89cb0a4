#pragma once

// In-memory image datasets, teacher embeddings, and the class-conditional
// synthetic generator used at desk scale.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <utility>
#include <vector>

#include "imagefolder/error.hpp"
#include "imagefolder/grid.hpp"
#include "imagefolder/rng.hpp"

namespace imagefolder {

struct Dataset {
    int height = 0;
    int width = 0;
    int channels = 0;
    int label_count = 0;
    std::vector<Grid> images;
    std::vector<std::uint16_t> labels;

    std::size_t size() const { return images.size(); }

    friend bool operator==(const Dataset&, const Dataset&) = default;
};

/// One unit-norm embedding per image, aligned with a Dataset.
struct TeacherFeatures {
    int dim = 0;
    std::vector<std::vector<double>> features;

    std::size_t size() const { return features.size(); }

    friend bool operator==(const TeacherFeatures&, const TeacherFeatures&) = default;
};

inline void normalize_in_place(std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    s = std::sqrt(s);
    detail::require_arg(s > 0.0, "cannot normalize a zero vector");
    for (double& x : v) x /= s;
}

struct SyntheticSpec {
    int classes = 8;
    int count = 512;
    int image_size = 16;
    int teacher_dim = 8;
    std::uint64_t seed = 0;
    double teacher_noise = 0.15;
};

struct SyntheticData {
    Dataset dataset;
    TeacherFeatures teachers;
};

/// Grayscale images of one Gaussian blob over an oriented stripe texture.
/// Each class owns a blob anchor on a ring and a stripe orientation; every
/// image jitters the anchor, blob width, amplitudes and texture phase.
/// Teachers are the class prototype (a random unit vector) plus isotropic
/// noise, renormalized. Labels are balanced to within one per class.
inline SyntheticData make_synthetic(const SyntheticSpec& spec) {
    detail::require_arg(spec.classes >= 1 && spec.classes <= 65535, "synthetic: classes must be in [1, 65535]");
    detail::require_arg(spec.count >= 0, "synthetic: count must be non-negative");
    detail::require_arg(spec.image_size >= 2, "synthetic: image size must be at least 2");
    detail::require_arg(spec.teacher_dim >= 1, "synthetic: teacher dim must be positive");
    Rng rng(spec.seed);
    Rng proto_rng = rng.split(1);
    Rng image_rng = rng.split(2);

    std::vector<std::vector<double>> prototypes(spec.classes, std::vector<double>(spec.teacher_dim));
    for (auto& p : prototypes) {
        for (double& v : p) v = proto_rng.normal();
        normalize_in_place(p);
    }

    const int S = spec.image_size;
    const double pi = std::numbers::pi;
    SyntheticData out;
    auto& ds = out.dataset;
    ds.height = ds.width = S;
    ds.channels = 1;
    ds.label_count = spec.classes;
    out.teachers.dim = spec.teacher_dim;
    // balanced labels in shuffled order
    std::vector<std::uint16_t> labels(spec.count);
    for (int n = 0; n < spec.count; ++n) labels[n] = static_cast<std::uint16_t>(n % spec.classes);
    for (std::size_t i = labels.size(); i > 1; --i) std::swap(labels[i - 1], labels[image_rng.below(i)]);
    for (int n = 0; n < spec.count; ++n) {
        const auto label = labels[n];
        const double angle = 2.0 * pi * label / spec.classes;
        const double cx = 0.5 * (S - 1) + 0.28 * S * std::cos(angle) + image_rng.normal(0.0, 0.06 * S);
        const double cy = 0.5 * (S - 1) + 0.28 * S * std::sin(angle) + image_rng.normal(0.0, 0.06 * S);
        const double sigma = S * image_rng.uniform(0.12, 0.2);
        const double amp = image_rng.uniform(0.6, 1.0);
        const double theta = pi * label / spec.classes;
        const double freq = 2.0 * pi / (S / 4.0);
        const double phase = image_rng.uniform(0.0, 2.0 * pi);
        const double tex = image_rng.uniform(0.15, 0.3);
        Grid img(S, S, 1);
        for (int y = 0; y < S; ++y)
            for (int x = 0; x < S; ++x) {
                const double dx = x - cx, dy = y - cy;
                const double blob = amp * std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
                const double stripe = tex * std::sin(freq * (x * std::cos(theta) + y * std::sin(theta)) + phase);
                img.at(y, x, 0) = blob + stripe + image_rng.normal(0.0, 0.02);
            }
        ds.images.push_back(std::move(img));
        ds.labels.push_back(label);

        std::vector<double> t = prototypes[label];
        for (double& v : t) v += image_rng.normal(0.0, spec.teacher_noise);
        normalize_in_place(t);
        out.teachers.features.push_back(std::move(t));
    }
    return out;
}

}  // namespace imagefolder
