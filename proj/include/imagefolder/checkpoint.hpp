#pragma once

// Training checkpoints: named f64 parameter blobs plus everything needed to
// resume (rng state, optimizer moments, step and epoch counters).

#include <cstdint>
#include <string>
#include <vector>

#include "imagefolder/formats.hpp"
#include "imagefolder/nn.hpp"
#include "imagefolder/rng.hpp"

namespace imagefolder {

struct Blob {
    std::string name;
    std::vector<std::uint64_t> shape;
    std::vector<double> data;
    friend bool operator==(const Blob&, const Blob&) = default;
};

struct Checkpoint {
    std::string kind;    // "tokenizer" or "ar"
    std::string run_id;
    std::string config;  // resolved config text
    std::vector<Blob> blobs;
    RngState rng;
    AdamState adam;
    std::uint64_t step = 0;
    std::int64_t epoch = 0;

    const Blob& blob(const std::string& name) const {
        for (const auto& b : blobs)
            if (b.name == name) return b;
        throw Error(ErrorCode::io_error, "checkpoint: missing blob " + name);
    }
};

inline bool operator==(const AdamState& a, const AdamState& b) {
    return a.learning_rate == b.learning_rate && a.beta1 == b.beta1 && a.beta2 == b.beta2 && a.epsilon == b.epsilon &&
           a.step == b.step && a.first_moment == b.first_moment && a.second_moment == b.second_moment;
}

inline bool operator==(const Checkpoint& a, const Checkpoint& b) {
    return a.kind == b.kind && a.run_id == b.run_id && a.config == b.config && a.blobs == b.blobs && a.rng == b.rng &&
           a.adam == b.adam && a.step == b.step && a.epoch == b.epoch;
}

inline std::vector<Blob> blobs_from(const ParamList& params) {
    std::vector<Blob> out;
    for (const auto& p : params) out.push_back({p.name, {p.value.size()}, {p.value.begin(), p.value.end()}});
    return out;
}

/// Copies blob values into matching parameters; names and sizes must agree.
inline void load_blobs(const Checkpoint& ck, const ParamList& params) {
    for (const auto& p : params) {
        const auto& b = ck.blob(p.name);
        if (b.data.size() != p.value.size())
            throw Error(ErrorCode::config_error, "checkpoint: blob " + p.name + " has a different size than the model");
        std::copy(b.data.begin(), b.data.end(), p.value.begin());
    }
}

namespace detail {

inline void put_doubles(ByteWriter& w, const std::vector<double>& v) {
    w.u64(v.size());
    for (double x : v) w.f64(x);
}

inline std::vector<double> get_doubles(ByteReader& r) {
    std::vector<double> v(r.count(8));
    for (double& x : v) x = r.f64();
    return v;
}

}  // namespace detail

inline std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ck) {
    ByteWriter w;
    w.header(magic::checkpoint);
    w.str(ck.kind);
    w.str(ck.run_id);
    w.str(ck.config);
    w.u64(ck.blobs.size());
    for (const auto& b : ck.blobs) {
        w.str(b.name);
        w.u32(static_cast<std::uint32_t>(b.shape.size()));
        for (auto d : b.shape) w.u64(d);
        detail::put_doubles(w, b.data);
    }
    w.u64(ck.rng.key);
    w.u64(ck.rng.counter);
    w.f64(ck.adam.learning_rate);
    w.f64(ck.adam.beta1);
    w.f64(ck.adam.beta2);
    w.f64(ck.adam.epsilon);
    w.u64(ck.adam.step);
    w.u64(ck.adam.first_moment.size());
    for (const auto& m : ck.adam.first_moment) detail::put_doubles(w, m);
    w.u64(ck.adam.second_moment.size());
    for (const auto& m : ck.adam.second_moment) detail::put_doubles(w, m);
    w.u64(ck.step);
    w.u64(static_cast<std::uint64_t>(ck.epoch));
    return w.bytes();
}

inline Checkpoint decode_checkpoint(std::vector<std::uint8_t> bytes) {
    ByteReader r(std::move(bytes), "checkpoint");
    r.header(magic::checkpoint);
    Checkpoint ck;
    ck.kind = r.str();
    ck.run_id = r.str();
    ck.config = r.str();
    const auto nb = r.count(8);
    for (std::uint64_t i = 0; i < nb; ++i) {
        Blob b;
        b.name = r.str();
        const auto rank = r.u32();
        if (rank > 8) r.fail("blob rank too large");
        std::uint64_t elems = 1;
        for (std::uint32_t d = 0; d < rank; ++d) {
            b.shape.push_back(r.u64());
            elems *= b.shape.back();
        }
        b.data = detail::get_doubles(r);
        if (elems != b.data.size()) r.fail("blob " + b.name + " shape does not match its length");
        ck.blobs.push_back(std::move(b));
    }
    ck.rng.key = r.u64();
    ck.rng.counter = r.u64();
    ck.adam.learning_rate = r.f64();
    ck.adam.beta1 = r.f64();
    ck.adam.beta2 = r.f64();
    ck.adam.epsilon = r.f64();
    ck.adam.step = r.u64();
    ck.adam.first_moment.resize(r.count(8));
    for (auto& m : ck.adam.first_moment) m = detail::get_doubles(r);
    ck.adam.second_moment.resize(r.count(8));
    for (auto& m : ck.adam.second_moment) m = detail::get_doubles(r);
    ck.step = r.u64();
    ck.epoch = static_cast<std::int64_t>(r.u64());
    r.expect_end();
    return ck;
}

inline void save_checkpoint(const std::string& path, const Checkpoint& ck) { write_file(path, encode_checkpoint(ck)); }
inline Checkpoint load_checkpoint(const std::string& path) { return decode_checkpoint(read_file(path)); }

}  // namespace imagefolder
