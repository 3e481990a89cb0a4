// imagefolder: make-data | train-tokenizer | train-ar | sample | eval

#include <CLI11.hpp>

#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include "imagefolder/cli.hpp"

namespace {

struct Flags {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out = ".";
    int threads = 1;
    std::vector<std::string> set;
    // command inputs, folded into the config as input.* keys
    std::string dataset, teachers, tokenizer, ar, reference, resume, probes;
    std::optional<int> label;
};

}  // namespace

int main(int argc, char** argv) {
    using namespace imagefolder;
    CLI::App app{"ImageFolder tokenizer and next-scale generator at desk scale"};
    app.require_subcommand(1);
    app.fallthrough();
    Flags f;
    app.add_option("--config", f.config, "config file (key = value, [section] headers)");
    app.add_option("--seed", f.seed, "master seed, overrides the config");
    app.add_option("--out", f.out, "output directory");
    app.add_option("--threads", f.threads, "worker threads for per-image work")->check(CLI::Range(1, 256));
    app.add_option("--set", f.set, "config override key=value (repeatable)");

    auto* make_data = app.add_subcommand("make-data", "write the synthetic dataset and teacher features");
    auto* train_tok = app.add_subcommand("train-tokenizer", "train the product-quantized tokenizer");
    train_tok->add_option("--dataset", f.dataset, "dataset file");
    train_tok->add_option("--teachers", f.teachers, "teacher feature file");
    train_tok->add_option("--resume", f.resume, "continue from a tokenizer checkpoint");
    auto* train_ar = app.add_subcommand("train-ar", "tokenize the dataset and train the generator");
    train_ar->add_option("--tokenizer", f.tokenizer, "tokenizer checkpoint");
    train_ar->add_option("--dataset", f.dataset, "dataset file");
    auto* sample = app.add_subcommand("sample", "generate one image");
    sample->add_option("--tokenizer", f.tokenizer, "tokenizer checkpoint");
    sample->add_option("--ar", f.ar, "generator checkpoint");
    sample->add_option("--force-detail", f.reference, "raw grid image whose detail tokens are teacher-forced");
    sample->add_option("--class", f.label, "class label");
    auto* eval = app.add_subcommand("eval", "run evaluation probes");
    eval->add_option("--tokenizer", f.tokenizer, "tokenizer checkpoint");
    eval->add_option("--dataset", f.dataset, "dataset file");
    eval->add_option("--probes", f.probes, "comma-separated probe names");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    auto overrides = f.set;
    auto flag = [&](const char* key, const std::string& v) {
        if (!v.empty()) overrides.push_back(std::string(key) + "=" + v);
    };
    flag("input.dataset", f.dataset);
    flag("input.teachers", f.teachers);
    flag("input.tokenizer", f.tokenizer);
    flag("input.ar", f.ar);
    flag("input.reference", f.reference);
    flag("input.resume", f.resume);
    flag("eval.probes", f.probes);
    if (f.label) overrides.push_back("sample.class=" + std::to_string(*f.label));

    try {
        const auto config = cli::resolve_config(f.config, overrides, f.seed);
        const cli::Runtime rt{f.out, f.threads};
        if (*make_data) cli::cmd_make_data(config, rt);
        else if (*train_tok) cli::cmd_train_tokenizer(config, rt);
        else if (*train_ar) cli::cmd_train_ar(config, rt);
        else if (*sample) cli::cmd_sample(config, rt);
        else if (*eval) cli::cmd_eval(config, rt);
    } catch (const Error& e) {
        std::fprintf(stderr, "imagefolder: %s\n", e.what());
        return cli::exit_code(e.code());
    } catch (const std::exception& e) {
        std::fprintf(stderr, "imagefolder: %s\n", e.what());
        return 1;
    }
    return 0;
}
