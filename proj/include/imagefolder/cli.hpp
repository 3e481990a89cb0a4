#pragma once

// Command implementations behind the imagefolder executable. Each command
// takes a resolved Config and an output directory, writes the config there
// first, then its artifacts. Errors surface as imagefolder::Error and are
// mapped to process exit codes by exit_code().

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "imagefolder/checkpoint.hpp"
#include "imagefolder/config.hpp"
#include "imagefolder/dataset.hpp"
#include "imagefolder/eval.hpp"
#include "imagefolder/formats.hpp"
#include "imagefolder/generator.hpp"
#include "imagefolder/trainer.hpp"

namespace imagefolder::cli {

inline int exit_code(ErrorCode c) {
    switch (c) {
        case ErrorCode::config_error:
        case ErrorCode::invalid_argument: return 2;
        case ErrorCode::io_error:
        case ErrorCode::corrupt_token: return 3;
        case ErrorCode::training_diverged: return 4;
        default: return 1;
    }
}

struct Runtime {
    std::filesystem::path out_dir = ".";
    int threads = 1;
};

inline const std::set<std::string>& known_keys() {
    static const std::set<std::string> keys = {
        "seed",
        "data.classes", "data.count", "data.image_size", "data.teacher_dim", "data.teacher_noise",
        "tokenizer.patch", "tokenizer.channels", "tokenizer.encoder_hidden", "tokenizer.decoder_hidden",
        "tokenizer.codebook_semantic", "tokenizer.codebook_detail", "tokenizer.image_channels",
        "quantizer.preset", "quantizer.scales", "quantizer.n_start", "quantizer.dropout", "quantizer.gamma",
        "loss.recon", "loss.vq", "loss.adversarial", "loss.perceptual", "loss.clip", "loss.beta", "loss.tau",
        "train.epochs", "train.max_steps", "train.batch_size", "train.learning_rate", "train.init_std",
        "train.kmeans_iterations", "train.revive", "train.revive_noise",
        "ar.hidden", "ar.steps", "ar.batch_size", "ar.learning_rate", "ar.label_dropout", "ar.init_std",
        "sample.class", "sample.top_k", "sample.top_p", "sample.temperature", "sample.guidance",
        "eval.probes", "eval.ridge",
        "input.dataset", "input.teachers", "input.tokenizer", "input.ar", "input.reference", "input.resume",
    };
    return keys;
}

/// File values, then key=value overrides, then the seed flag.
inline Config resolve_config(const std::string& config_path, const std::vector<std::string>& overrides,
                             std::optional<std::uint64_t> seed) {
    Config c;
    if (!config_path.empty()) {
        const auto bytes = read_file(config_path);
        c = Config::parse(std::string(bytes.begin(), bytes.end()));
    }
    c.apply_overrides(overrides);
    if (seed) c.set("seed", std::to_string(*seed));
    c.require_known(known_keys());
    return c;
}

/// FNV-1a over the command name and canonical config.
inline std::string run_id(const std::string& command, const Config& c) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : command + "\n" + c.dump()) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

// ---- config -> typed settings ------------------------------------------

inline std::uint64_t seed_of(const Config& c) { return c.get_u64("seed", 7); }

inline QuantizerConfig quantizer_from(const Config& c) {
    const auto preset = c.get_string("quantizer.preset", "desk");
    QuantizerConfig q;
    if (preset == "desk") q = QuantizerConfig::desk();
    else if (preset == "full") q = QuantizerConfig::full();
    else if (preset == "var") q = QuantizerConfig::var_baseline();
    else detail::config_fail("quantizer.preset must be desk, full or var");
    q.scales = c.get_int_list("quantizer.scales", q.scales);
    q.n_start = static_cast<int>(c.get_int("quantizer.n_start", q.n_start));
    q.dropout_p = c.get_double("quantizer.dropout", q.dropout_p);
    q.gamma = c.get_double("quantizer.gamma", q.gamma);
    q.branches = 2;
    return q;
}

inline SyntheticSpec data_spec_from(const Config& c) {
    SyntheticSpec s;
    s.classes = static_cast<int>(c.get_int("data.classes", s.classes));
    s.count = static_cast<int>(c.get_int("data.count", s.count));
    s.image_size = static_cast<int>(c.get_int("data.image_size", s.image_size));
    s.teacher_dim = static_cast<int>(c.get_int("data.teacher_dim", c.get_int("tokenizer.channels", s.teacher_dim)));
    s.teacher_noise = c.get_double("data.teacher_noise", s.teacher_noise);
    s.seed = seed_of(c);
    return s;
}

inline TokenizerShape shape_from(const Config& c) {
    TokenizerShape s;
    s.image_size = static_cast<int>(c.get_int("data.image_size", s.image_size));
    s.image_channels = static_cast<int>(c.get_int("tokenizer.image_channels", s.image_channels));
    s.patch = static_cast<int>(c.get_int("tokenizer.patch", s.patch));
    s.channels = static_cast<int>(c.get_int("tokenizer.channels", s.channels));
    s.encoder_hidden = static_cast<int>(c.get_int("tokenizer.encoder_hidden", s.encoder_hidden));
    s.decoder_hidden = static_cast<int>(c.get_int("tokenizer.decoder_hidden", s.decoder_hidden));
    s.codebook_semantic = static_cast<int>(c.get_int("tokenizer.codebook_semantic", s.codebook_semantic));
    s.codebook_detail = static_cast<int>(c.get_int("tokenizer.codebook_detail", s.codebook_detail));
    return s;
}

inline TokenizerTrainConfig tokenizer_config_from(const Config& c) {
    TokenizerTrainConfig t;
    t.shape = shape_from(c);
    t.quant = quantizer_from(c);
    auto& w = t.loss.weights;
    w.recon = c.get_double("loss.recon", w.recon);
    w.vq = c.get_double("loss.vq", w.vq);
    w.adversarial = c.get_double("loss.adversarial", w.adversarial);
    w.perceptual = c.get_double("loss.perceptual", w.perceptual);
    w.clip = c.get_double("loss.clip", w.clip);
    t.loss.beta = c.get_double("loss.beta", t.loss.beta);
    t.loss.tau = c.get_double("loss.tau", t.loss.tau);
    t.epochs = static_cast<int>(c.get_int("train.epochs", t.epochs));
    t.max_steps = static_cast<int>(c.get_int("train.max_steps", t.max_steps));
    t.batch_size = static_cast<int>(c.get_int("train.batch_size", t.batch_size));
    t.learning_rate = c.get_double("train.learning_rate", t.learning_rate);
    t.init_std = c.get_double("train.init_std", t.init_std);
    t.kmeans_iterations = static_cast<int>(c.get_int("train.kmeans_iterations", t.kmeans_iterations));
    t.revive = c.get_bool("train.revive", t.revive);
    t.revive_noise = c.get_double("train.revive_noise", t.revive_noise);
    t.seed = seed_of(c);
    try {
        t.validate();
    } catch (const Error& e) {
        detail::config_fail(e.what());
    }
    return t;
}

struct ArSettings {
    ArTrainConfig train;
    int hidden = 128;
    double init_std = 0.02;
};

inline ArSettings ar_settings_from(const Config& c) {
    ArSettings a;
    a.hidden = static_cast<int>(c.get_int("ar.hidden", a.hidden));
    a.init_std = c.get_double("ar.init_std", a.init_std);
    a.train.steps = static_cast<int>(c.get_int("ar.steps", a.train.steps));
    a.train.batch_size = static_cast<int>(c.get_int("ar.batch_size", a.train.batch_size));
    a.train.learning_rate = c.get_double("ar.learning_rate", a.train.learning_rate);
    a.train.label_dropout = c.get_double("ar.label_dropout", a.train.label_dropout);
    a.train.seed = seed_of(c);
    if (a.hidden < 1 || a.train.steps < 0 || a.train.learning_rate <= 0.0 || a.train.label_dropout < 0.0 ||
        a.train.label_dropout > 1.0)
        detail::config_fail("ar: hidden >= 1, steps >= 0, learning_rate > 0 and label_dropout in [0, 1] required");
    return a;
}

inline SamplerConfig sampler_from(const Config& c) {
    SamplerConfig s;
    s.top_k = static_cast<int>(c.get_int("sample.top_k", s.top_k));
    s.top_p = c.get_double("sample.top_p", s.top_p);
    s.temperature = c.get_double("sample.temperature", s.temperature);
    s.guidance = c.get_double("sample.guidance", s.guidance);
    s.seed = seed_of(c);
    try {
        s.validate();
    } catch (const Error& e) {
        detail::config_fail(e.what());
    }
    return s;
}

// ---- shared helpers ------------------------------------------------------

inline std::string require_path(const Config& c, const std::string& key) {
    const auto p = c.get_string(key, "");
    if (p.empty()) detail::config_fail("missing required input: " + key);
    return p;
}

/// Runs fn(i) for i in [0, n) on up to `threads` workers. Each index is
/// handled by exactly one worker, so results written per index are
/// independent of the thread count.
template <class Fn>
void parallel_for(std::size_t n, int threads, Fn fn) {
    const std::size_t t = std::clamp<std::size_t>(threads, 1, std::max<std::size_t>(n, 1));
    if (t == 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(t);
    for (std::size_t w = 0; w < t; ++w)
        pool.emplace_back([&, w] {
            try {
                for (std::size_t i = w; i < n; i += t) fn(i);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    for (auto& th : pool) th.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

inline void begin_run(const Runtime& rt, const Config& c) {
    std::error_code ec;
    std::filesystem::create_directories(rt.out_dir, ec);
    if (ec) throw Error(ErrorCode::io_error, "cannot create output directory " + rt.out_dir.string());
    write_text_file((rt.out_dir / "config.txt").string(), c.dump());
}

inline Checkpoint load_kind(const std::string& path, const std::string& kind) {
    auto ck = load_checkpoint(path);
    if (ck.kind != kind) detail::config_fail(path + " is a " + ck.kind + " checkpoint, expected " + kind);
    return ck;
}

inline TokenizerModel tokenizer_from_checkpoint(const Checkpoint& ck) {
    const auto c = Config::parse(ck.config);
    Rng dummy(0);
    auto m = TokenizerModel::create(shape_from(c), quantizer_from(c), dummy, 0.0);
    load_blobs(ck, m.parameters());
    return m;
}

inline Checkpoint tokenizer_checkpoint(TokenizerTrainState& st, const std::string& id, const Config& c) {
    return {"tokenizer", id, c.dump(), blobs_from(st.model.parameters()), st.rng.state(), st.adam, st.step, st.epoch};
}

inline ArModel ar_from_checkpoint(const Checkpoint& ar, const Checkpoint& tok_ck, const TokenizerModel& tok) {
    const auto c = Config::parse(ar.config);
    if (c.get_string("ar.tokenizer_run_id", "") != tok_ck.run_id)
        detail::config_fail("generator checkpoint was trained on a different tokenizer");
    if (quantizer_from(c).scales != tok.quant.scales)
        detail::config_fail("generator and tokenizer checkpoints use different scale schedules");
    Rng dummy(0);
    auto m = ArModel::create(TokenSpace::from_tokenizer(tok), static_cast<int>(c.get_int("ar.classes", 1)),
                             static_cast<int>(c.get_int("ar.hidden", 128)), dummy, 0.0);
    load_blobs(ar, m.parameters());
    return m;
}

/// Tokenizer-side keys that must agree between a checkpoint and a new run.
inline void check_schedule(const Config& current, const TokenizerModel& tok) {
    if ((current.has("quantizer.scales") || current.has("quantizer.preset")) &&
        quantizer_from(current).scales != tok.quant.scales)
        detail::config_fail("configured scale schedule does not match the tokenizer checkpoint");
}

inline std::vector<ProductOutput> tokenize_all(const TokenizerModel& m, std::span<const Grid> images, int threads) {
    std::vector<ProductOutput> out(images.size());
    parallel_for(images.size(), threads, [&](std::size_t i) { out[i] = tokenize(m, images[i]); });
    return out;
}

// ---- commands ------------------------------------------------------------

inline void cmd_make_data(const Config& c, const Runtime& rt) {
    begin_run(rt, c);
    const auto spec = data_spec_from(c);
    if (spec.classes < 2 || spec.classes > 65535 || spec.count < 0 || spec.image_size < 4 || spec.teacher_dim < 2)
        detail::config_fail("data: need classes in [2, 65535], count >= 0, image_size >= 4, teacher_dim >= 2");
    const auto d = make_synthetic(spec);
    write_file((rt.out_dir / "dataset.bin").string(), encode_dataset(d.dataset));
    write_file((rt.out_dir / "teachers.bin").string(), encode_teachers(d.teachers));
}

inline void cmd_train_tokenizer(const Config& c, const Runtime& rt) {
    begin_run(rt, c);
    const auto cfg = tokenizer_config_from(c);
    const auto data = decode_dataset(read_file(require_path(c, "input.dataset")));
    const auto teachers = decode_teachers(read_file(require_path(c, "input.teachers")));
    auto id = run_id("train-tokenizer", c);

    TokenizerTrainState st;
    const auto resume = c.get_string("input.resume", "");
    // The resumed run continues under the checkpoint's settings; only the
    // stopping point may change.
    Config snapshot = c;
    if (!resume.empty()) {
        const auto ck = load_kind(resume, "tokenizer");
        auto strip = [](Config x) {
            Config y;
            for (const auto& [k, v] : x.values())
                if (k != "train.epochs" && k != "train.max_steps" && k != "input.resume") y.set(k, v);
            return y;
        };
        if (strip(Config::parse(ck.config)) != strip(c))
            detail::config_fail("resume: configuration differs from the checkpoint beyond train.epochs/max_steps");
        st.model = tokenizer_from_checkpoint(ck);
        st.adam = ck.adam;
        st.rng = Rng(ck.rng);
        st.step = ck.step;
        st.epoch = static_cast<int>(ck.epoch);
        snapshot = Config::parse(ck.config);
        id = ck.run_id;
        for (const char* k : {"train.epochs", "train.max_steps"})
            if (c.has(k)) snapshot.set(k, c.get_string(k, ""));
    } else {
        st = init_tokenizer_training(cfg, data, teachers);
    }
    MetricsTable metrics(id);
    const auto ckpt_path = (rt.out_dir / "tokenizer.ckpt").string();
    run_tokenizer_training(
        st, cfg, data, teachers,
        [&](std::uint64_t step, const StepReport& r) {
            metrics.add(step, "recon", r.parts.recon);
            metrics.add(step, "vq", r.parts.vq);
            metrics.add(step, "clip", r.parts.clip);
            metrics.add(step, "total", r.total);
        },
        [&](const EpochSummary& e) {
            metrics.add(st.step, "utilization_semantic", e.utilization_semantic);
            metrics.add(st.step, "utilization_detail", e.utilization_detail);
            metrics.add(st.step, "revived_semantic", e.revived_semantic);
            metrics.add(st.step, "revived_detail", e.revived_detail);
            for (std::size_t n = 0; n < e.kept_histogram.size(); ++n)
                metrics.add(st.step, "kept_steps_" + std::to_string(n + 1), static_cast<double>(e.kept_histogram[n]));
            // One file per epoch so any epoch boundary can be resumed from.
            save_checkpoint((rt.out_dir / ("tokenizer.epoch" + std::to_string(st.epoch) + ".ckpt")).string(),
                            tokenizer_checkpoint(st, id, snapshot));
        });
    const auto u = measure_utilization(st.model, data.images);
    metrics.add(st.step, "final_utilization_semantic", u.semantic);
    metrics.add(st.step, "final_utilization_detail", u.detail);
    save_checkpoint(ckpt_path, tokenizer_checkpoint(st, id, snapshot));
    write_text_file((rt.out_dir / "metrics.csv").string(), metrics.csv());
}

inline void cmd_train_ar(const Config& c, const Runtime& rt) {
    begin_run(rt, c);
    const auto tok_ck = load_kind(require_path(c, "input.tokenizer"), "tokenizer");
    const auto tok = tokenizer_from_checkpoint(tok_ck);
    check_schedule(c, tok);
    const auto settings = ar_settings_from(c);
    const auto data = decode_dataset(read_file(require_path(c, "input.dataset")));
    if (data.height != tok.shape.image_size || data.width != tok.shape.image_size ||
        data.channels != tok.shape.image_channels)
        detail::config_fail("train-ar: dataset images do not match the tokenizer");

    const auto q = tokenize_all(tok, data.images, rt.threads);
    std::vector<FoldedSequence> seqs;
    for (std::size_t i = 0; i < q.size(); ++i)
        seqs.push_back(fold(q[i].semantic.pyramid, q[i].detail.pyramid, data.labels[i], tok.shape.codebook_semantic,
                            tok.shape.codebook_detail));
    write_file((rt.out_dir / "sequences.bin").string(), encode_sequence_set(seqs));

    const auto id = run_id("train-ar", c);
    Rng rng = Rng(seed_of(c)).split(1);
    Rng init = rng.split(0);
    auto m = ArModel::create(TokenSpace::from_tokenizer(tok), data.label_count, settings.hidden, init,
                             settings.init_std);
    AdamState adam(settings.train.learning_rate);
    const auto curve = train_ar(m, seqs, settings.train, adam, rng);
    MetricsTable metrics(id);
    for (std::size_t s = 0; s < curve.size(); ++s) metrics.add(s + 1, "ar_loss", curve[s]);

    Config snapshot = c;
    snapshot.set("ar.tokenizer_run_id", tok_ck.run_id);
    snapshot.set("ar.classes", std::to_string(data.label_count));
    snapshot.set("quantizer.scales", [&] {
        std::string s;
        for (int k : tok.quant.scales) s += (s.empty() ? "" : ",") + std::to_string(k);
        return s;
    }());
    save_checkpoint((rt.out_dir / "ar.ckpt").string(),
                    {"ar", id, snapshot.dump(), blobs_from(m.parameters()), rng.state(), adam,
                     static_cast<std::uint64_t>(curve.size()), 0});
    write_text_file((rt.out_dir / "metrics.csv").string(), metrics.csv());
}

inline void cmd_sample(const Config& c, const Runtime& rt) {
    begin_run(rt, c);
    const auto tok_ck = load_kind(require_path(c, "input.tokenizer"), "tokenizer");
    const auto tok = tokenizer_from_checkpoint(tok_ck);
    check_schedule(c, tok);
    const auto ar = ar_from_checkpoint(load_kind(require_path(c, "input.ar"), "ar"), tok_ck, tok);
    const auto sampler = sampler_from(c);
    const auto label = c.get_int("sample.class", 0);
    if (label < 0 || label >= ar.classes) detail::config_fail("sample.class out of range");
    Rng rng = Rng(seed_of(c)).split(2);

    FoldedSequence seq;
    const auto ref = c.get_string("input.reference", "");
    if (!ref.empty()) {
        const auto image = decode_grid(read_file(ref));
        if (image.height != tok.shape.image_size || image.width != tok.shape.image_size ||
            image.channels != tok.shape.image_channels)
            detail::config_fail("reference image does not match the tokenizer input size");
        seq = generate_teacher_forced(ar, static_cast<int>(label), tokenize(tok, image).detail.pyramid, sampler, rng);
    } else {
        seq = generate(ar, static_cast<int>(label), sampler, rng);
    }
    write_file((rt.out_dir / "tokens.bin").string(), encode_sequence(seq));
    const auto [ps, pd] = unfold(seq);
    const Grid image = decode(tok, dequantize(ps, pd, tok.codebook_semantic, tok.codebook_detail, tok.quant,
                                              tok.conv_semantic, tok.conv_detail));
    write_file((rt.out_dir / "image.grid").string(), encode_grid(image));
    write_file((rt.out_dir / "image.pgm").string(), encode_pgm(image));
}

inline std::vector<std::string> probe_list(const Config& c) {
    const auto raw = c.get_string("eval.probes", "sequence_length,min_pq_codewords,depth_sweep,linear_probe,mutual_information");
    std::vector<std::string> out;
    std::string_view rest = raw;
    while (!rest.empty()) {
        const auto comma = rest.find(',');
        const auto item = detail::trim(rest.substr(0, comma));
        if (!item.empty()) out.emplace_back(item);
        if (comma == std::string_view::npos) break;
        rest = rest.substr(comma + 1);
    }
    static const std::set<std::string> valid = {"sequence_length", "min_pq_codewords", "depth_sweep", "linear_probe",
                                                "mutual_information"};
    for (const auto& p : out)
        if (!valid.count(p)) detail::config_fail("eval: unknown probe '" + p + "'");
    return out;
}

inline void cmd_eval(const Config& c, const Runtime& rt) {
    begin_run(rt, c);
    const auto probes = probe_list(c);
    MetricsTable metrics(run_id("eval", c));
    std::optional<Checkpoint> tok_ck;
    std::optional<TokenizerModel> tok;
    std::optional<Dataset> data;
    std::vector<ProductOutput> q;
    auto need_model = [&] {
        if (tok) return;
        tok_ck = load_kind(require_path(c, "input.tokenizer"), "tokenizer");
        tok = tokenizer_from_checkpoint(*tok_ck);
        check_schedule(c, *tok);
        data = decode_dataset(read_file(require_path(c, "input.dataset")));
        q = tokenize_all(*tok, data->images, rt.threads);
    };

    for (const auto& probe : probes) {
        if (probe == "sequence_length") {
            const auto qc = tok ? tok->quant : quantizer_from(c);
            const auto L = sequence_length(qc.scales, qc.branches);
            metrics.add(0, "sequence_length.positions", static_cast<double>(L.positions));
            metrics.add(0, "sequence_length.tokens", static_cast<double>(L.tokens));
            const auto lp = sequence_length(QuantizerConfig::full().scales, 2);
            const auto lv = sequence_length(QuantizerConfig::var_baseline().scales, 1);
            metrics.add(0, "sequence_length.full_positions", static_cast<double>(lp.positions));
            metrics.add(0, "sequence_length.var_positions", static_cast<double>(lv.positions));
        } else if (probe == "min_pq_codewords") {
            const std::vector<std::vector<int>> halves = {{0}, {1}};
            const std::vector<std::vector<double>> grid = {{-1, -1}, {-1, 1}, {1, -1}, {1, 1}};
            const std::vector<std::vector<double>> general = {{0.0, 0.1}, {0.3, 0.7}, {0.6, 0.2}, {0.9, 0.5}};
            for (const auto& [name, pts] : {std::pair{"grid", &grid}, std::pair{"general", &general}}) {
                const auto r = min_pq_codewords(*pts, halves);
                metrics.add(0, std::string("min_pq.") + name + ".joint", static_cast<double>(r.joint));
                for (std::size_t s = 0; s < r.per_subspace.size(); ++s)
                    metrics.add(0, std::string("min_pq.") + name + ".subspace_" + std::to_string(s),
                                static_cast<double>(r.per_subspace[s]));
            }
        } else if (probe == "depth_sweep") {
            need_model();
            for (const auto& r : depth_sweep(*tok, data->images))
                metrics.add(0, "depth_sweep.mse_m" + std::to_string(r.depth), r.mse);
        } else if (probe == "linear_probe") {
            need_model();
            std::vector<std::vector<double>> fs, fd;
            for (const auto& p : q) {
                fs.push_back(mean_pool(p.semantic.quantized));
                fd.push_back(mean_pool(p.detail.quantized));
            }
            std::vector<int> labels(data->labels.begin(), data->labels.end());
            std::vector<std::size_t> train, val;
            for (std::size_t i = 0; i < labels.size(); ++i) (i % 4 == 3 ? val : train).push_back(i);
            const double ridge = c.get_double("eval.ridge", 1e-3);
            metrics.add(0, "linear_probe.semantic", linear_probe(fs, labels, train, val, ridge));
            metrics.add(0, "linear_probe.detail", linear_probe(fd, labels, train, val, ridge));
        } else if (probe == "mutual_information") {
            need_model();
            std::vector<TokenPair> pairs;
            for (std::size_t i = 0; i < q.size(); ++i) {
                const auto s = fold(q[i].semantic.pyramid, q[i].detail.pyramid, 0, tok->shape.codebook_semantic,
                                    tok->shape.codebook_detail);
                pairs.insert(pairs.end(), s.pairs.begin(), s.pairs.end());
            }
            metrics.add(0, "mutual_information.bits", mutual_information(pairs));
        }
    }
    write_text_file((rt.out_dir / "metrics.csv").string(), metrics.csv());
}

}  // namespace imagefolder::cli
