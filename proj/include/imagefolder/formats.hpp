#pragma once

// Little-endian binary file formats. Every file begins with a four-byte magic
// and a u32 version; readers reject anything else.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>
#include <string_view>
#include <vector>

#include "imagefolder/dataset.hpp"
#include "imagefolder/error.hpp"
#include "imagefolder/generator.hpp"
#include "imagefolder/grid.hpp"
#include "imagefolder/quantizer.hpp"

namespace imagefolder {

namespace magic {
inline constexpr std::string_view dataset = "IFDS";
inline constexpr std::string_view teachers = "IFTF";
inline constexpr std::string_view pyramid = "IFTP";
inline constexpr std::string_view sequence = "IFSQ";
inline constexpr std::string_view sequence_set = "IFSS";
inline constexpr std::string_view grid = "IFGR";
inline constexpr std::string_view checkpoint = "IFCK";
}  // namespace magic

inline constexpr std::uint32_t format_version = 1;

class ByteWriter {
public:
    void u8(std::uint8_t v) { buf_.push_back(v); }
    void u16(std::uint16_t v) { put(v, 2); }
    void u32(std::uint32_t v) { put(v, 4); }
    void u64(std::uint64_t v) { put(v, 8); }
    void i32(std::int32_t v) { u32(static_cast<std::uint32_t>(v)); }
    void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
    void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
    void raw(std::string_view s) { buf_.insert(buf_.end(), s.begin(), s.end()); }
    void str(std::string_view s) {
        u64(s.size());
        raw(s);
    }
    void header(std::string_view m) {
        raw(m);
        u32(format_version);
    }
    const std::vector<std::uint8_t>& bytes() const { return buf_; }

private:
    void put(std::uint64_t v, int n) {
        for (int i = 0; i < n; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    std::vector<std::uint8_t> buf_;
};

class ByteReader {
public:
    explicit ByteReader(std::vector<std::uint8_t> bytes, std::string what = "file")
        : buf_(std::move(bytes)), what_(std::move(what)) {}

    std::uint8_t u8() { return static_cast<std::uint8_t>(get(1)); }
    std::uint16_t u16() { return static_cast<std::uint16_t>(get(2)); }
    std::uint32_t u32() { return static_cast<std::uint32_t>(get(4)); }
    std::uint64_t u64() { return get(8); }
    std::int32_t i32() { return static_cast<std::int32_t>(u32()); }
    float f32() { return std::bit_cast<float>(u32()); }
    double f64() { return std::bit_cast<double>(u64()); }
    std::string raw(std::size_t n) {
        need(n);
        std::string s(reinterpret_cast<const char*>(buf_.data() + pos_), n);
        pos_ += n;
        return s;
    }
    std::string str() { return raw(count(1)); }

    /// Reads a length field and checks that `elem_bytes` per element fit in what remains.
    std::uint64_t count(std::size_t elem_bytes) {
        const auto n = u64();
        if (elem_bytes > 0 && n > (buf_.size() - pos_) / elem_bytes) fail("length field exceeds file size");
        return n;
    }
    void header(std::string_view m) {
        if (raw(m.size()) != m) fail("bad magic, expected " + std::string(m));
        const auto v = u32();
        if (v != format_version) fail("unsupported format version " + std::to_string(v));
    }
    void expect_end() {
        if (pos_ != buf_.size()) fail("trailing bytes");
    }
    [[noreturn]] void fail(const std::string& msg) const { throw Error(ErrorCode::io_error, what_ + ": " + msg); }

private:
    void need(std::size_t n) const {
        if (buf_.size() - pos_ < n) fail("truncated");
    }
    std::uint64_t get(int n) {
        need(static_cast<std::size_t>(n));
        std::uint64_t v = 0;
        for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(buf_[pos_ + i]) << (8 * i);
        pos_ += n;
        return v;
    }
    std::vector<std::uint8_t> buf_;
    std::string what_;
    std::size_t pos_ = 0;
};

inline std::vector<std::uint8_t> read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::io_error, "cannot open " + path);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::string& path, const std::vector<std::uint8_t>& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::io_error, "cannot write " + path);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorCode::io_error, "write failed for " + path);
}

inline void write_text_file(const std::string& path, std::string_view text) {
    write_file(path, std::vector<std::uint8_t>(text.begin(), text.end()));
}

// ---- dataset and teachers ------------------------------------------------

inline std::vector<std::uint8_t> encode_dataset(const Dataset& d) {
    ByteWriter w;
    w.header(magic::dataset);
    w.u64(d.size());
    w.u32(d.height);
    w.u32(d.width);
    w.u32(d.channels);
    w.u32(d.label_count);
    for (const auto& img : d.images) {
        detail::require_arg(img.height == d.height && img.width == d.width && img.channels == d.channels,
                            "dataset: image shape differs from header");
        for (double v : img.data) w.f32(static_cast<float>(v));
    }
    for (auto l : d.labels) w.u16(l);
    return w.bytes();
}

inline Dataset decode_dataset(std::vector<std::uint8_t> bytes) {
    ByteReader r(std::move(bytes), "dataset");
    r.header(magic::dataset);
    Dataset d;
    const auto n = r.u64();
    d.height = static_cast<int>(r.u32());
    d.width = static_cast<int>(r.u32());
    d.channels = static_cast<int>(r.u32());
    d.label_count = static_cast<int>(r.u32());
    const std::uint64_t per = static_cast<std::uint64_t>(d.height) * d.width * d.channels;
    if (n > 0 && (per == 0 || n * (4 * per + 2) > (std::uint64_t{1} << 40))) r.fail("implausible header");
    for (std::uint64_t i = 0; i < n; ++i) {
        Grid g(d.height, d.width, d.channels);
        for (double& v : g.data) v = r.f32();
        d.images.push_back(std::move(g));
    }
    for (std::uint64_t i = 0; i < n; ++i) {
        d.labels.push_back(r.u16());
        if (d.labels.back() >= d.label_count) r.fail("label out of range");
    }
    r.expect_end();
    return d;
}

inline std::vector<std::uint8_t> encode_teachers(const TeacherFeatures& t) {
    ByteWriter w;
    w.header(magic::teachers);
    w.u64(t.size());
    w.u32(t.dim);
    for (const auto& f : t.features) {
        detail::require_arg(static_cast<int>(f.size()) == t.dim, "teachers: feature dim differs from header");
        for (double v : f) w.f32(static_cast<float>(v));
    }
    return w.bytes();
}

inline TeacherFeatures decode_teachers(std::vector<std::uint8_t> bytes) {
    ByteReader r(std::move(bytes), "teachers");
    r.header(magic::teachers);
    TeacherFeatures t;
    const auto n = r.u64();
    t.dim = static_cast<int>(r.u32());
    for (std::uint64_t i = 0; i < n; ++i) {
        std::vector<double> f(t.dim);
        for (double& v : f) v = r.f32();
        t.features.push_back(std::move(f));
    }
    r.expect_end();
    return t;
}

// ---- tokens --------------------------------------------------------------

namespace detail {

inline void put_schedule(ByteWriter& w, const std::vector<int>& s) {
    w.u32(static_cast<std::uint32_t>(s.size()));
    for (int k : s) w.u32(static_cast<std::uint32_t>(k));
}

inline std::vector<int> get_schedule(ByteReader& r) {
    const auto n = r.u32();
    if (n == 0 || n > 64) r.fail("bad schedule length");
    std::vector<int> s(n);
    for (auto& k : s) {
        k = static_cast<int>(r.u32());
        if (k <= 0 || k > 4096) r.fail("bad scale");
    }
    return s;
}

inline void put_sequence_body(ByteWriter& w, const FoldedSequence& s) {
    put_schedule(w, s.scales);
    w.u32(s.class_label);
    w.u32(s.codebook_semantic);
    w.u32(s.codebook_detail);
    w.u64(s.pairs.size());
    for (const auto& p : s.pairs) {
        w.u16(p.semantic);
        w.u16(p.detail);
    }
}

inline FoldedSequence get_sequence_body(ByteReader& r) {
    FoldedSequence s;
    s.scales = get_schedule(r);
    s.class_label = r.u32();
    s.codebook_semantic = r.u32();
    s.codebook_detail = r.u32();
    const auto n = r.count(4);
    if (n != scale_offsets(s.scales).back()) r.fail("position count does not match schedule");
    s.pairs.resize(n);
    for (auto& p : s.pairs) {
        p.semantic = r.u16();
        p.detail = r.u16();
        if (p.semantic >= s.codebook_semantic || p.detail >= s.codebook_detail)
            throw Error(ErrorCode::corrupt_token, "sequence: token index out of codebook range");
    }
    return s;
}

}  // namespace detail

inline std::vector<std::uint8_t> encode_pyramid(const TokenPyramid& p) {
    ByteWriter w;
    w.header(magic::pyramid);
    detail::put_schedule(w, p.scales);
    w.u32(static_cast<std::uint32_t>(p.grids.size()));
    for (const auto& g : p.grids) {
        w.u64(g.indices.size());
        for (auto v : g.indices) w.i32(v);
    }
    return w.bytes();
}

inline TokenPyramid decode_pyramid(std::vector<std::uint8_t> bytes) {
    ByteReader r(std::move(bytes), "token pyramid");
    r.header(magic::pyramid);
    TokenPyramid p;
    p.scales = detail::get_schedule(r);
    const auto kept = r.u32();
    if (kept > p.scales.size()) r.fail("more grids than scales");
    for (std::uint32_t i = 0; i < kept; ++i) {
        const auto n = r.count(4);
        const int k = p.scales[i];
        if (n != static_cast<std::uint64_t>(k) * k) r.fail("grid length does not match scale");
        IndexGrid g(k);
        for (auto& v : g.indices) v = r.i32();
        p.grids.push_back(std::move(g));
    }
    r.expect_end();
    return p;
}

inline std::vector<std::uint8_t> encode_sequence(const FoldedSequence& s) {
    ByteWriter w;
    w.header(magic::sequence);
    detail::put_sequence_body(w, s);
    return w.bytes();
}

inline FoldedSequence decode_sequence(std::vector<std::uint8_t> bytes) {
    ByteReader r(std::move(bytes), "sequence");
    r.header(magic::sequence);
    auto s = detail::get_sequence_body(r);
    r.expect_end();
    return s;
}

inline std::vector<std::uint8_t> encode_sequence_set(std::span<const FoldedSequence> seqs) {
    ByteWriter w;
    w.header(magic::sequence_set);
    w.u64(seqs.size());
    for (const auto& s : seqs) detail::put_sequence_body(w, s);
    return w.bytes();
}

inline std::vector<FoldedSequence> decode_sequence_set(std::vector<std::uint8_t> bytes) {
    ByteReader r(std::move(bytes), "sequence set");
    r.header(magic::sequence_set);
    const auto n = r.count(16);
    std::vector<FoldedSequence> out;
    out.reserve(n);
    for (std::uint64_t i = 0; i < n; ++i) out.push_back(detail::get_sequence_body(r));
    r.expect_end();
    return out;
}

// ---- images --------------------------------------------------------------

/// Raw grid: header, u32 height/width/channels, then row-major f64 values.
inline std::vector<std::uint8_t> encode_grid(const Grid& g) {
    ByteWriter w;
    w.header(magic::grid);
    w.u32(g.height);
    w.u32(g.width);
    w.u32(g.channels);
    for (double v : g.data) w.f64(v);
    return w.bytes();
}

inline Grid decode_grid(std::vector<std::uint8_t> bytes) {
    ByteReader r(std::move(bytes), "grid");
    r.header(magic::grid);
    const auto h = r.u32(), wd = r.u32(), c = r.u32();
    if (static_cast<std::uint64_t>(h) * wd * c > (std::uint64_t{1} << 32)) r.fail("implausible shape");
    Grid g(static_cast<int>(h), static_cast<int>(wd), static_cast<int>(c));
    for (double& v : g.data) v = r.f64();
    r.expect_end();
    return g;
}

/// Binary 8-bit PGM of channel 0, values clamped to [0, 1].
inline std::vector<std::uint8_t> encode_pgm(const Grid& g) {
    const std::string head = "P5\n" + std::to_string(g.width) + " " + std::to_string(g.height) + "\n255\n";
    std::vector<std::uint8_t> out(head.begin(), head.end());
    for (int y = 0; y < g.height; ++y)
        for (int x = 0; x < g.width; ++x) {
            const double v = std::clamp(g.at(y, x, 0), 0.0, 1.0);
            out.push_back(static_cast<std::uint8_t>(std::lround(v * 255.0)));
        }
    return out;
}

}  // namespace imagefolder
