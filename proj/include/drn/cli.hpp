#pragma once
// Command-line front end. Kept in a header so tests can drive it in-process;
// tools/drn_cli.cpp only forwards argv.
//
// Exit codes: 0 success, 1 usage error, 2 runtime failure.

#include <algorithm>
#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "drn/checkpoint.hpp"
#include "drn/config.hpp"
#include "drn/degradation.hpp"
#include "drn/evaluation.hpp"
#include "drn/gradcheck.hpp"
#include "drn/model.hpp"
#include "drn/png.hpp"
#include "drn/training.hpp"

namespace drn {

namespace cli_detail {

namespace fs = std::filesystem;

/// Usage problems detected after parsing (missing directories and the like).
class UsageError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

inline std::string dashed(std::string key) {
    std::replace(key.begin(), key.end(), '_', '-');
    return key;
}

/// Every config key as a `--dashed-name` string option on `sub`.
struct ConfigFlags {
    std::string config_file;
    std::map<std::string, std::string> values;
    std::map<std::string, CLI::Option*> options;

    void attach(CLI::App* sub) {
        sub->add_option("--config", config_file, "key=value config file, applied before other flags");
        for (const auto& k : config_keys()) {
            std::string help = k.help;
            if (!k.default_value.empty()) help += " [default: " + k.default_value + "]";
            options[k.key] = sub->add_option("--" + dashed(k.key), values[k.key], help);
        }
    }

    [[nodiscard]] RunConfig resolve() const {
        RunConfig cfg;
        if (!config_file.empty()) cfg.load_file(config_file);
        for (const auto& k : config_keys()) {
            auto it = options.find(k.key);
            if (it != options.end() && it->second->count() > 0) cfg.set(k.key, values.at(k.key));
        }
        // Pin the effective seed so the echo records what actually ran.
        cfg.set("seed", std::to_string(cfg.seed()));
        return cfg;
    }
};

inline std::string timestamp() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    std::ostringstream os;
    os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
    return os.str();
}

inline void require_dir(const std::string& value, const char* flag) {
    if (value.empty()) throw UsageError(std::string(flag) + " is required");
    if (!fs::is_directory(value)) throw IoError(std::string(flag) + ": '" + value + "' is not a directory");
}

inline void write_text_atomic(const fs::path& path, const std::string& text) { write_file_atomic(path, text); }

inline std::vector<std::pair<std::string, std::string>> run_metadata(const RunConfig& cfg, const std::string& command,
                                                                     std::int64_t iteration) {
    auto meta = cfg.as_metadata();
    meta.emplace_back("run.command", command);
    meta.emplace_back("run.seed", std::to_string(cfg.seed()));
    meta.emplace_back("run.iteration", std::to_string(iteration));
    return meta;
}

/// Loads HR images, degrades them, and reports skipped files.
inline std::vector<ImagePair> load_pairs(const std::string& dir, const DegradationKernel& kernel, std::ostream& err) {
    PairSet set = make_pairs(dir, kernel);
    for (const auto& w : set.warnings) err << "warning: " << w << '\n';
    return std::move(set.pairs);
}

struct RunOutputs {
    fs::path dir;
    std::ofstream metrics;

    RunOutputs(const std::string& out, const RunConfig& cfg, const std::string& command) : dir(out) {
        if (out.empty()) throw UsageError("--out is required");
        fs::create_directories(dir);
        write_text_atomic(dir / "config.txt", cfg.echo());
        metrics.open(dir / "metrics.log", std::ios::trunc);
        if (!metrics) throw IoError("cannot open '" + (dir / "metrics.log").string() + "'");
        metrics << "# " << command << " started " << timestamp() << '\n';
    }
};

inline int cmd_train(const ConfigFlags& flags, const std::string& out, std::ostream& os, std::ostream& err) {
    const RunConfig cfg = flags.resolve();
    const DrnConfig mc = cfg.model();
    const TrainConfig tc = cfg.train();
    const LossConfig lc = cfg.loss();
    const DegradationKernel kernel = cfg.kernel("kernel", mc.scale);
    require_dir(cfg.get("hr_dir"), "--hr-dir");
    const auto pairs = load_pairs(cfg.get("hr_dir"), kernel, err);
    std::vector<ImagePair> val;
    if (!cfg.get("val_dir").empty()) val = load_pairs(cfg.get("val_dir"), kernel, err);

    RunOutputs run(out, cfg, "train");
    DrnModel model = build(mc, tc.seed);
    os << "train: " << pairs.size() << " images, " << count_params(model) << " parameters, " << tc.iterations
       << " iterations\n";
    TrainHooks hooks;
    hooks.log = &run.metrics;
    hooks.on_checkpoint = [&](std::int64_t it) {
        checkpoint_save(model, run.dir / ("model_" + std::to_string(it) + ".ckpt"), run_metadata(cfg, "train", it));
    };
    const std::int64_t progress = std::max<std::int64_t>(1, tc.iterations / 20);
    hooks.on_step = [&](const LogRecord& rec) {
        if (rec.iter % progress == 0 || rec.iter == tc.iterations) os << rec.format() << '\n';
    };
    const TrainResult result = train_paired(pairs, model, tc, lc, val, hooks);
    checkpoint_save(model, run.dir / "model.ckpt", run_metadata(cfg, "train", tc.iterations));
    if (result.final_psnr) os << "final validation Y-PSNR: " << *result.final_psnr << " dB\n";
    os << "wrote " << (run.dir / "model.ckpt").string() << '\n';
    return 0;
}

inline int cmd_adapt(const ConfigFlags& flags, const std::string& out, std::ostream& os, std::ostream& err) {
    const RunConfig cfg = flags.resolve();
    const AdaptConfig ac = cfg.adapt();
    const LossConfig lc = cfg.loss();

    DrnModel model;
    if (cfg.get_bool("scratch")) {
        model = build(cfg.model(), ac.seed);
    } else {
        if (cfg.get("pretrained").empty()) throw UsageError("--pretrained is required unless --scratch is set");
        model = model_from_checkpoint(cfg.get("pretrained"));
    }
    const std::int64_t s = model.config.scale;

    std::vector<Tensor> unpaired;
    if (ac.unpaired_batch > 0) {
        require_dir(cfg.get("unpaired_dir"), "--unpaired-dir");
        for (const auto& f : list_images(cfg.get("unpaired_dir"))) {
            try {
                unpaired.push_back(png_read(f));
            } catch (const IoError& e) {
                err << "warning: " << e.what() << '\n';
            }
        }
        if (unpaired.empty()) throw IoError("no readable images in '" + cfg.get("unpaired_dir") + "'");
    }
    std::vector<ImagePair> paired;
    if (ac.paired_batch > 0) {
        require_dir(cfg.get("hr_dir"), "--hr-dir");
        paired = load_pairs(cfg.get("hr_dir"), cfg.kernel("kernel", s), err);
    }
    std::vector<ImagePair> val;
    if (!cfg.get("val_dir").empty()) val = load_pairs(cfg.get("val_dir"), cfg.kernel("val_kernel", s), err);

    RunOutputs run(out, cfg, "adapt");
    os << "adapt: " << unpaired.size() << " unpaired, " << paired.size() << " paired images, rho=" << ac.rho()
       << ", " << ac.iterations << " iterations\n";
    if (!val.empty()) os << "before adaptation: validation Y-PSNR " << validation_psnr(model, val) << " dB\n";
    TrainHooks hooks;
    hooks.log = &run.metrics;
    hooks.on_checkpoint = [&](std::int64_t it) {
        checkpoint_save(model, run.dir / ("model_" + std::to_string(it) + ".ckpt"), run_metadata(cfg, "adapt", it));
    };
    const TrainResult result = adapt_unpaired(unpaired, paired, model, ac, lc, val, hooks);
    checkpoint_save(model, run.dir / "model.ckpt", run_metadata(cfg, "adapt", ac.iterations));
    if (result.final_psnr) os << "after adaptation: validation Y-PSNR " << *result.final_psnr << " dB\n";
    os << "wrote " << (run.dir / "model.ckpt").string() << '\n';
    return 0;
}

inline int infer_dir(const DrnModel& model, const std::string& in, const std::string& out, std::ostream& os,
                     std::ostream& err) {
    require_dir(in, "--in");
    if (out.empty()) throw UsageError("--out is required");
    fs::create_directories(out);
    NoGradGuard guard;
    int written = 0;
    for (const auto& f : list_images(in)) {
        Tensor lr;
        try {
            lr = png_read(f);
        } catch (const IoError& e) {
            err << "warning: " << e.what() << '\n';
            continue;
        }
        const auto outputs = forward_primal(model.primal, lr);
        png_write(outputs.back(), fs::path(out) / f.filename());
        ++written;
    }
    if (written == 0) throw IoError("no readable images in '" + in + "'");
    os << "wrote " << written << " images to " << out << '\n';
    return 0;
}

inline int cmd_infer(const std::string& checkpoint, const std::string& in, const std::string& out, std::ostream& os,
                     std::ostream& err) {
    if (checkpoint.empty()) throw UsageError("--checkpoint is required");
    return infer_dir(model_from_checkpoint(checkpoint), in, out, os, err);
}

inline int cmd_eval(const ConfigFlags& flags, const std::string& sr_dir, const std::string& checkpoint,
                    const std::string& lr_dir, const std::string& csv, std::ostream& os, std::ostream& err) {
    const RunConfig cfg = flags.resolve();
    std::int64_t scale = cfg.get_int("scale");
    if (!checkpoint.empty()) {
        const DrnModel model = model_from_checkpoint(checkpoint);
        scale = model.config.scale;
        if (lr_dir.empty()) throw UsageError("--lr-dir is required with --checkpoint");
        if (sr_dir.empty()) throw UsageError("--sr-dir is required (inference output directory)");
        infer_dir(model, lr_dir, sr_dir, os, err);
    }
    require_dir(sr_dir, "--sr-dir");
    require_dir(cfg.get("hr_dir"), "--hr-dir");
    const EvalReport report = evaluate_dataset(sr_dir, cfg.get("hr_dir"), cfg.protocol(scale));
    os << format_table(report);
    if (!csv.empty()) write_text_atomic(csv, format_csv(report));
    return 0;
}

inline int cmd_degrade(const ConfigFlags& flags, const std::string& in, const std::string& out, std::ostream& os,
                       std::ostream& err) {
    const RunConfig cfg = flags.resolve();
    const DegradationKernel kernel = cfg.kernel("kernel", cfg.get_int("scale"));
    require_dir(in, "--in");
    if (out.empty()) throw UsageError("--out is required");
    fs::create_directories(out);
    const PairSet set = make_pairs(in, kernel);
    for (const auto& w : set.warnings) err << "warning: " << w << '\n';
    for (const auto& p : set.pairs) png_write(p.lr, fs::path(out) / p.name);
    os << "degraded " << set.pairs.size() << " images with " << to_string(kernel.kind) << " x" << kernel.scale
       << " into " << out << '\n';
    return 0;
}

inline int cmd_count(const ConfigFlags& flags, std::int64_t input_size, std::ostream& os) {
    const RunConfig cfg = flags.resolve();
    const DrnConfig mc = cfg.model();
    if (input_size < 1) throw UsageError("--input-size must be >= 1");
    const DrnModel model = build(mc, 0);
    const std::int64_t primal = count_params(model.primal_parameters());
    const std::int64_t dual = count_params(model.dual_parameters());
    const double madds = static_cast<double>(count_madds(model, input_size, input_size));
    char buf[256];
    os << "model: " << cfg.get("preset") << " scale=" << mc.scale << " blocks=" << mc.blocks
       << " channels=" << mc.channels << " reduction=" << mc.reduction << '\n';
    std::snprintf(buf, sizeof buf, "%-16s %14s\n", "component", "params");
    os << buf;
    std::snprintf(buf, sizeof buf, "%-16s %14lld\n", "primal", static_cast<long long>(primal));
    os << buf;
    std::snprintf(buf, sizeof buf, "%-16s %14lld\n", "dual", static_cast<long long>(dual));
    os << buf;
    std::snprintf(buf, sizeof buf, "%-16s %14lld  (%.2fM)\n", "total", static_cast<long long>(primal + dual),
                  static_cast<double>(primal + dual) / 1e6);
    os << buf;
    std::snprintf(buf, sizeof buf, "MAdds @ %lldx%lld LR input: %.2fG\n", static_cast<long long>(input_size),
                  static_cast<long long>(input_size), madds / 1e9);
    os << buf;
    return 0;
}

inline int cmd_gradcheck(int instances, std::ostream& os) {
    GradcheckOptions opt;
    opt.instances = instances;
    const auto start = std::chrono::steady_clock::now();
    const auto results = run_gradcheck(opt);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    bool ok = true;
    char buf[256];
    for (const auto& r : results) {
        std::snprintf(buf, sizeof buf, "%-18s %s  instances=%d failures=%d max_rel_err=%.3e\n", r.op.c_str(),
                      r.passed() ? "ok  " : "FAIL", r.instances, r.failures, r.max_rel_error);
        os << buf;
        ok = ok && r.passed();
    }
    std::snprintf(buf, sizeof buf, "gradcheck %s in %.2fs (tolerance %.0e)\n", ok ? "passed" : "FAILED", secs,
                  opt.tolerance);
    os << buf;
    return ok ? 0 : 2;
}

}  // namespace cli_detail

inline int run_cli(int argc, const char* const* argv, std::ostream& os = std::cout, std::ostream& err = std::cerr) {
    using namespace cli_detail;
    CLI::App app{"Dual regression super-resolution toolkit", "drn"};
    app.require_subcommand(1);

    ConfigFlags train_flags, adapt_flags, eval_flags, degrade_flags, count_flags;
    std::string out, in, checkpoint, sr_dir, lr_dir, csv;
    std::int64_t input_size = 48;
    int instances = 20;

    auto* train = app.add_subcommand("train", "train on HR images with synthesized LR pairs");
    train_flags.attach(train);
    train->add_option("--out", out, "run directory (config.txt, metrics.log, model.ckpt)");

    auto* adapt = app.add_subcommand("adapt", "adapt a model to unpaired LR images");
    adapt_flags.attach(adapt);
    adapt->add_option("--out", out, "run directory");

    auto* infer = app.add_subcommand("infer", "super-resolve every PNG in a directory");
    infer->add_option("--checkpoint", checkpoint, "model checkpoint");
    infer->add_option("--in", in, "LR input directory");
    infer->add_option("--out", out, "SR output directory");

    auto* eval = app.add_subcommand("eval", "score SR images against HR references");
    eval_flags.attach(eval);
    eval->add_option("--sr-dir", sr_dir, "directory of SR images to score");
    eval->add_option("--checkpoint", checkpoint, "run inference on --lr-dir into --sr-dir first");
    eval->add_option("--lr-dir", lr_dir, "LR inputs for --checkpoint");
    eval->add_option("--csv", csv, "also write a CSV report");

    auto* degrade = app.add_subcommand("degrade", "synthesize LR images from HR images");
    degrade_flags.attach(degrade);
    degrade->add_option("--in", in, "HR input directory");
    degrade->add_option("--out", out, "LR output directory");

    auto* count = app.add_subcommand("count", "parameter and MAdds table for a model configuration");
    count_flags.attach(count);
    count->add_option("--input-size", input_size, "square LR input side for MAdds [default: 48]");

    auto* grad = app.add_subcommand("gradcheck", "finite-difference audit of every differentiable op");
    grad->add_option("--instances", instances, "random instances per op [default: 20]");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        os << app.help();
        return 0;
    } catch (const CLI::CallForAllHelp&) {
        os << app.help("", CLI::AppFormatMode::All);
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n\n" << app.help();
        return 1;
    }

    try {
        if (train->parsed()) return cmd_train(train_flags, out, os, err);
        if (adapt->parsed()) return cmd_adapt(adapt_flags, out, os, err);
        if (infer->parsed()) return cmd_infer(checkpoint, in, out, os, err);
        if (eval->parsed()) return cmd_eval(eval_flags, sr_dir, checkpoint, lr_dir, csv, os, err);
        if (degrade->parsed()) return cmd_degrade(degrade_flags, in, out, os, err);
        if (count->parsed()) return cmd_count(count_flags, input_size, os);
        if (grad->parsed()) return cmd_gradcheck(instances, os);
    } catch (const UsageError& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return 2;
    }
    return 1;
}

}  // namespace drn
