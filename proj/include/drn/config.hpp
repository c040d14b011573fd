#pragma once
// Run configuration: sectioned key=value files with a fixed key set.
//
//   # comment
//   [train]
//   iterations = 2000
//
// Key names are unique across sections, so command-line flags can use the
// bare key (`--iterations`, `--lr-start`).

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "drn/degradation.hpp"
#include "drn/evaluation.hpp"
#include "drn/model.hpp"
#include "drn/training.hpp"

namespace drn {

class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

struct ConfigKey {
    std::string section;
    std::string key;
    std::string default_value;
    std::string help;
};

inline const std::vector<ConfigKey>& config_keys() {
    static const std::vector<ConfigKey> keys{
        {"model", "preset", "drn-t", "architecture preset: drn-s | drn-l | drn-t"},
        {"model", "scale", "2", "upscaling factor (2, 4 or 8)"},
        {"model", "blocks", "preset", "RCABs per up module (integer, or 'preset')"},
        {"model", "channels", "preset", "base feature channels F (integer, or 'preset')"},
        {"model", "reduction", "16", "channel attention reduction ratio"},
        {"model", "slope", "0.2", "LeakyReLU negative slope"},
        {"train", "seed", "0", "global seed; DRN_SEED is used when neither file nor flag sets it"},
        {"train", "iterations", "2000", "paired training iterations"},
        {"train", "batch", "8", "paired minibatch size"},
        {"train", "patch", "24", "LR patch size in pixels"},
        {"train", "lr_start", "1e-4", "initial learning rate of the cosine schedule"},
        {"train", "lr_end", "1e-7", "final learning rate of the cosine schedule"},
        {"train", "lambda", "0.1", "weight of the dual regression term"},
        {"train", "dual_scales", "all", "dual terms at every scale (all) or only the top one (final)"},
        {"train", "augment", "true", "random flips and quarter turns"},
        {"train", "val_every", "100", "validation cadence in iterations (0 = off)"},
        {"train", "checkpoint_every", "0", "intermediate checkpoint cadence (0 = final only)"},
        {"train", "kernel", "bicubic", "degradation for synthesized pairs: bicubic | nearest | bd"},
        {"train", "bd_size", "7", "BD Gaussian kernel size"},
        {"train", "bd_sigma", "1.6", "BD Gaussian standard deviation"},
        {"train", "hr_dir", "", "directory of HR training images"},
        {"train", "val_dir", "", "directory of held-out HR images"},
        {"adapt", "unpaired_dir", "", "directory of unpaired LR images"},
        {"adapt", "unpaired_batch", "5", "unpaired samples per iteration (m)"},
        {"adapt", "paired_batch", "11", "paired samples per iteration (n)"},
        {"adapt", "adapt_iterations", "1000", "adaptation iterations"},
        {"adapt", "adapt_lr", "1e-4", "adaptation learning rate"},
        {"adapt", "pretrained", "", "checkpoint to adapt"},
        {"adapt", "scratch", "false", "adapt a freshly initialized model instead of a checkpoint"},
        {"adapt", "val_kernel", "bicubic", "degradation applied to val_dir images for adaptation validation"},
        {"eval", "channel", "y", "scored channels: y | rgb"},
        {"eval", "shave", "auto", "border pixels removed before scoring (integer, or 'auto' = scale)"},
    };
    return keys;
}

inline const ConfigKey* find_config_key(const std::string& key) {
    for (const auto& k : config_keys())
        if (k.key == key) return &k;
    return nullptr;
}

class RunConfig {
    // bad values are the user's to fix, so report them like any other config problem
    template <class F>
    static auto as_config_error(F&& f) {
        try {
            return f();
        } catch (const ConfigError&) {
            throw;
        } catch (const std::invalid_argument& e) {
            throw ConfigError(e.what());
        }
    }

public:
    RunConfig() {
        for (const auto& k : config_keys()) values_[k.key] = k.default_value;
    }

    void set(const std::string& key, const std::string& value) {
        if (!find_config_key(key)) throw ConfigError("unknown config key '" + key + "'");
        values_[key] = value;
        explicit_.push_back(key);
    }

    [[nodiscard]] bool is_explicit(const std::string& key) const {
        return std::find(explicit_.begin(), explicit_.end(), key) != explicit_.end();
    }

    [[nodiscard]] const std::string& get(const std::string& key) const {
        auto it = values_.find(key);
        if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
        return it->second;
    }

    [[nodiscard]] std::int64_t get_int(const std::string& key) const {
        const std::string& v = get(key);
        try {
            std::size_t used = 0;
            const long long out = std::stoll(v, &used);
            if (used != v.size()) throw std::invalid_argument(v);
            return out;
        } catch (const std::logic_error&) {
            throw ConfigError("config key '" + key + "' expects an integer, got '" + v + "'");
        }
    }

    [[nodiscard]] double get_double(const std::string& key) const {
        const std::string& v = get(key);
        try {
            std::size_t used = 0;
            const double out = std::stod(v, &used);
            if (used != v.size()) throw std::invalid_argument(v);
            return out;
        } catch (const std::logic_error&) {
            throw ConfigError("config key '" + key + "' expects a number, got '" + v + "'");
        }
    }

    [[nodiscard]] bool get_bool(const std::string& key) const {
        const std::string& v = get(key);
        if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
        if (v == "false" || v == "0" || v == "no" || v == "off") return false;
        throw ConfigError("config key '" + key + "' expects a boolean, got '" + v + "'");
    }

    /// Parses a config file; keys must appear under their own section.
    void load_file(const std::filesystem::path& path) {
        std::ifstream f(path);
        if (!f) throw IoError("cannot open config '" + path.string() + "'");
        std::string section;
        int lineno = 0;
        for (std::string line; std::getline(f, line);) {
            ++lineno;
            const auto hash = line.find('#');
            if (hash != std::string::npos) line.erase(hash);
            line = trim(line);
            if (line.empty()) continue;
            const std::string where = path.string() + ":" + std::to_string(lineno);
            if (line.front() == '[') {
                if (line.back() != ']') throw ConfigError(where + ": malformed section header");
                section = trim(line.substr(1, line.size() - 2));
                if (section != "model" && section != "train" && section != "adapt" && section != "eval")
                    throw ConfigError(where + ": unknown section [" + section + "]");
                continue;
            }
            const auto eq = line.find('=');
            if (eq == std::string::npos) throw ConfigError(where + ": expected key = value");
            const std::string key = trim(line.substr(0, eq));
            const ConfigKey* spec = find_config_key(key);
            if (!spec) throw ConfigError(where + ": unknown key '" + key + "'");
            if (spec->section != section)
                throw ConfigError(where + ": key '" + key + "' belongs in [" + spec->section + "]");
            set(key, trim(line.substr(eq + 1)));
        }
    }

    /// Every effective key exactly once, grouped by section.
    [[nodiscard]] std::string echo() const {
        std::ostringstream os;
        std::string section;
        for (const auto& k : config_keys()) {
            if (k.section != section) {
                if (!section.empty()) os << '\n';
                section = k.section;
                os << '[' << section << "]\n";
            }
            os << k.key << " = " << values_.at(k.key) << '\n';
        }
        return os.str();
    }

    /// Flattened "section.key" pairs for checkpoint metadata.
    [[nodiscard]] std::vector<std::pair<std::string, std::string>> as_metadata() const {
        std::vector<std::pair<std::string, std::string>> out;
        for (const auto& k : config_keys()) out.emplace_back("config." + k.section + "." + k.key, values_.at(k.key));
        return out;
    }

    [[nodiscard]] std::uint64_t seed() const {
        if (!is_explicit("seed")) {
            if (const char* env = std::getenv("DRN_SEED")) {
                try {
                    return std::stoull(env);
                } catch (const std::logic_error&) {
                    throw ConfigError(std::string("DRN_SEED must be an unsigned integer, got '") + env + "'");
                }
            }
        }
        return static_cast<std::uint64_t>(get_int("seed"));
    }

    [[nodiscard]] DrnConfig model() const {
        return as_config_error([&] {
            DrnConfig c = DrnConfig::preset(get("preset"), get_int("scale"));
            if (get("blocks") != "preset") c.blocks = get_int("blocks");
            if (get("channels") != "preset") c.channels = get_int("channels");
            c.reduction = get_int("reduction");
            c.slope = static_cast<float>(get_double("slope"));
            c.validate();
            return c;
        });
    }

    [[nodiscard]] TrainConfig train() const {
        TrainConfig t;
        t.iterations = get_int("iterations");
        t.batch = get_int("batch");
        t.patch = get_int("patch");
        t.lr_start = get_double("lr_start");
        t.lr_end = get_double("lr_end");
        t.seed = seed();
        t.augment = get_bool("augment");
        t.val_every = get_int("val_every");
        t.checkpoint_every = get_int("checkpoint_every");
        as_config_error([&] { t.validate(); });
        return t;
    }

    [[nodiscard]] AdaptConfig adapt() const {
        AdaptConfig a;
        a.unpaired_batch = get_int("unpaired_batch");
        a.paired_batch = get_int("paired_batch");
        a.iterations = get_int("adapt_iterations");
        a.patch = get_int("patch");
        a.lr = get_double("adapt_lr");
        a.seed = seed();
        a.augment = get_bool("augment");
        a.val_every = get_int("val_every");
        a.checkpoint_every = get_int("checkpoint_every");
        as_config_error([&] { a.validate(); });
        return a;
    }

    [[nodiscard]] LossConfig loss() const {
        LossConfig l;
        l.lambda = get_double("lambda");
        const std::string& mode = get("dual_scales");
        if (mode == "all")
            l.dual_scales = LossConfig::DualScales::All;
        else if (mode == "final")
            l.dual_scales = LossConfig::DualScales::Final;
        else
            throw ConfigError("dual_scales must be all|final, got '" + mode + "'");
        as_config_error([&] { l.validate(); });
        return l;
    }

    [[nodiscard]] DegradationKernel kernel(const std::string& key, std::int64_t scale) const {
        DegradationKernel k;
        k.kind = as_config_error([&] { return parse_kernel_kind(get(key)); });
        k.scale = scale;
        k.size = get_int("bd_size");
        k.sigma = get_double("bd_sigma");
        as_config_error([&] { k.validate(); });
        return k;
    }

    [[nodiscard]] EvalProtocol protocol(std::int64_t scale) const {
        EvalProtocol p;
        const std::string& ch = get("channel");
        if (ch == "y")
            p.channel = EvalProtocol::Channel::Y;
        else if (ch == "rgb")
            p.channel = EvalProtocol::Channel::RGB;
        else
            throw ConfigError("channel must be y|rgb, got '" + ch + "'");
        p.shave = get("shave") == "auto" ? scale : get_int("shave");
        if (p.shave < 0) throw ConfigError("shave must be >= 0");
        return p;
    }

private:
    static std::string trim(const std::string& s) {
        const auto b = s.find_first_not_of(" \t\r");
        if (b == std::string::npos) return {};
        const auto e = s.find_last_not_of(" \t\r");
        return s.substr(b, e - b + 1);
    }

    std::map<std::string, std::string> values_;
    std::vector<std::string> explicit_;
};

}  // namespace drn
