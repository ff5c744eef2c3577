#include "modforge/config.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

namespace modforge {

using nlohmann::json;

// --- dataset source -----------------------------------------------------------

Dataset DatasetSource::load() const {
    switch (kind) {
        case Kind::Builtin: return generate(builtin_benchmark(builtin_name, builtin_seed));
        case Kind::File: return load_dataset(path);
        case Kind::Synthetic: return generate(synthetic);
    }
    throw UsageError("invalid DatasetSource");
}

std::string DatasetSource::describe() const {
    switch (kind) {
        case Kind::Builtin:
            return "builtin:" + builtin_name + "@" + std::to_string(builtin_seed);
        case Kind::File: return path;
        case Kind::Synthetic: return "synthetic@" + std::to_string(synthetic.seed);
    }
    return "?";
}

// --- model config ---------------------------------------------------------------

std::vector<ModalitySpec> ModelConfig::resolve(const Dataset& ds) const {
    for (const auto& [name, hidden] : encoder_hidden_overrides)
        ds.modality_index(name);  // unknown names fail loudly
    std::vector<ModalitySpec> specs;
    specs.reserve(ds.modalities.size());
    for (const auto& m : ds.modalities) {
        ModalitySpec spec;
        spec.name = m.name;
        spec.input_dim = m.dim;
        spec.encoder_hidden = encoder_hidden;
        for (const auto& [name, hidden] : encoder_hidden_overrides)
            if (name == m.name) spec.encoder_hidden = hidden;
        specs.push_back(std::move(spec));
    }
    return specs;
}

FusionSpec ModelConfig::fusion_spec() const {
    return FusionSpec{fusion, fusion_hidden_dim, maxout_pieces};
}

// --- experiment config -------------------------------------------------------------

void ExperimentConfig::validate() const {
    if (output_dir.empty()) throw ConfigError("output_dir must be non-empty");
    if (seeds.empty()) throw ConfigError("seeds must be non-empty");
    if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
    if (alpha < 0.0) throw ConfigError("alpha must be non-negative");
    if (lambda < 0.0) throw ConfigError("lambda must be non-negative");
    sgd.validate();
    if (dataset.kind == DatasetSource::Kind::Synthetic) dataset.synthetic.validate();
    const double fr[4] = {splits.train, splits.val, splits.probe_fit, splits.probe_eval};
    double sum = 0.0;
    for (double f : fr) {
        if (f < 0.0) throw ConfigError("splits fractions must be non-negative");
        sum += f;
    }
    if (sum > 1.0 + 1e-9) throw ConfigError("splits fractions sum to more than 1");
    if (splits.train <= 0.0) throw ConfigError("splits.train must be positive");
    if (splits.val <= 0.0) throw ConfigError("splits.val must be positive");
}

// --- JSON parsing helpers -------------------------------------------------------------

namespace {

[[noreturn]] void bad_key(const std::string& key, const std::string& why) {
    throw ConfigError("config key '" + key + "': " + why);
}

void check_keys(const json& obj, const std::string& ctx,
                std::initializer_list<const char*> allowed) {
    if (!obj.is_object()) throw ConfigError("config key '" + ctx + "': expected an object");
    for (const auto& [key, _] : obj.items()) {
        bool ok = false;
        for (const char* a : allowed)
            if (key == a) ok = true;
        if (!ok) throw ConfigError("unknown config key '" + (ctx.empty() ? key : ctx + "." + key) + "'");
    }
}

std::string join_key(const std::string& ctx, const std::string& key) {
    return ctx.empty() ? key : ctx + "." + key;
}

double get_number(const json& obj, const std::string& ctx, const std::string& key, double dflt) {
    if (!obj.contains(key)) return dflt;
    if (!obj[key].is_number()) bad_key(join_key(ctx, key), "expected a number");
    return obj[key].get<double>();
}

std::uint64_t get_uint(const json& obj, const std::string& ctx, const std::string& key,
                       std::uint64_t dflt) {
    if (!obj.contains(key)) return dflt;
    if (!obj[key].is_number_unsigned()) bad_key(join_key(ctx, key), "expected a non-negative integer");
    return obj[key].get<std::uint64_t>();
}

std::string get_string(const json& obj, const std::string& ctx, const std::string& key,
                       const std::string& dflt, bool required = false) {
    if (!obj.contains(key)) {
        if (required) bad_key(join_key(ctx, key), "is required");
        return dflt;
    }
    if (!obj[key].is_string()) bad_key(join_key(ctx, key), "expected a string");
    return obj[key].get<std::string>();
}

bool get_bool(const json& obj, const std::string& ctx, const std::string& key, bool dflt) {
    if (!obj.contains(key)) return dflt;
    if (!obj[key].is_boolean()) bad_key(join_key(ctx, key), "expected a boolean");
    return obj[key].get<bool>();
}

std::vector<std::size_t> get_uint_array(const json& arr, const std::string& key) {
    if (!arr.is_array()) bad_key(key, "expected an array of positive integers");
    std::vector<std::size_t> out;
    for (const auto& v : arr) {
        if (!v.is_number_unsigned() || v == 0) bad_key(key, "expected positive integers");
        out.push_back(v.get<std::size_t>());
    }
    return out;
}

SyntheticSpec parse_synthetic(const json& j, const std::string& ctx) {
    check_keys(j, ctx,
               {"num_classes", "num_samples", "modalities", "shared_fraction", "seed"});
    SyntheticSpec spec;
    spec.num_classes = get_uint(j, ctx, "num_classes", spec.num_classes);
    spec.num_samples = get_uint(j, ctx, "num_samples", spec.num_samples);
    spec.shared_fraction = get_number(j, ctx, "shared_fraction", spec.shared_fraction);
    spec.seed = get_uint(j, ctx, "seed", spec.seed);
    if (!j.contains("modalities") || !j["modalities"].is_array())
        bad_key(join_key(ctx, "modalities"), "is required and must be an array");
    for (const auto& m : j["modalities"]) {
        const std::string mctx = join_key(ctx, "modalities[]");
        check_keys(m, mctx, {"name", "dim", "snr"});
        ModalityGenSpec g;
        g.name = get_string(m, mctx, "name", "", /*required=*/true);
        g.dim = get_uint(m, mctx, "dim", 0);
        if (g.dim == 0) bad_key(mctx + ".dim", "is required and must be positive");
        g.snr = get_number(m, mctx, "snr", 1.0);
        spec.modalities.push_back(std::move(g));
    }
    spec.validate();
    return spec;
}

DatasetSource parse_dataset(const json& j) {
    DatasetSource src;
    if (j.is_string()) {
        const std::string s = j.get<std::string>();
        if (s.rfind("builtin:", 0) == 0) {
            src.kind = DatasetSource::Kind::Builtin;
            src.builtin_name = s.substr(8);
            builtin_benchmark(src.builtin_name, 0);  // name check
        } else {
            src.kind = DatasetSource::Kind::File;
            src.path = s;
        }
        return src;
    }
    if (!j.is_object()) bad_key("dataset", "expected a string or object");
    check_keys(j, "dataset", {"builtin", "seed", "path", "synthetic"});
    const bool has_builtin = j.contains("builtin"), has_path = j.contains("path"),
               has_synth = j.contains("synthetic");
    if (has_builtin + has_path + has_synth != 1)
        bad_key("dataset", "exactly one of builtin/path/synthetic is required");
    if (has_builtin) {
        src.kind = DatasetSource::Kind::Builtin;
        src.builtin_name = get_string(j, "dataset", "builtin", "", /*required=*/true);
        builtin_benchmark(src.builtin_name, 0);  // name check
        src.builtin_seed = get_uint(j, "dataset", "seed", src.builtin_seed);
    } else if (has_path) {
        if (j.contains("seed")) bad_key("dataset.seed", "only applies to builtin datasets");
        src.kind = DatasetSource::Kind::File;
        src.path = get_string(j, "dataset", "path", "", /*required=*/true);
    } else {
        if (j.contains("seed")) bad_key("dataset.seed", "set synthetic.seed instead");
        src.kind = DatasetSource::Kind::Synthetic;
        src.synthetic = parse_synthetic(j["synthetic"], "dataset.synthetic");
    }
    return src;
}

ModelConfig parse_model(const json& j) {
    check_keys(j, "model",
               {"fusion", "encoder_hidden", "encoder_hidden_overrides", "fusion_hidden_dim",
                "maxout_pieces"});
    ModelConfig mc;
    mc.fusion = fusion_kind_from_name(get_string(j, "model", "fusion", "", /*required=*/true));
    if (j.contains("encoder_hidden"))
        mc.encoder_hidden = get_uint_array(j["encoder_hidden"], "model.encoder_hidden");
    if (j.contains("encoder_hidden_overrides")) {
        const auto& ov = j["encoder_hidden_overrides"];
        if (!ov.is_object()) bad_key("model.encoder_hidden_overrides", "expected an object");
        for (const auto& [name, arr] : ov.items())
            mc.encoder_hidden_overrides.emplace_back(
                name, get_uint_array(arr, "model.encoder_hidden_overrides." + name));
    }
    mc.fusion_hidden_dim = get_uint(j, "model", "fusion_hidden_dim", mc.fusion_hidden_dim);
    mc.maxout_pieces = get_uint(j, "model", "maxout_pieces", mc.maxout_pieces);
    return mc;
}

SgdConfig parse_sgd(const json& j) {
    check_keys(j, "sgd",
               {"learning_rate", "momentum", "weight_decay", "lr_decay_factor", "lr_decay_every"});
    SgdConfig sgd;
    sgd.learning_rate = get_number(j, "sgd", "learning_rate", sgd.learning_rate);
    sgd.momentum = get_number(j, "sgd", "momentum", sgd.momentum);
    sgd.weight_decay = get_number(j, "sgd", "weight_decay", sgd.weight_decay);
    sgd.lr_decay_factor = get_number(j, "sgd", "lr_decay_factor", sgd.lr_decay_factor);
    sgd.lr_decay_every = get_uint(j, "sgd", "lr_decay_every", sgd.lr_decay_every);
    return sgd;
}

}  // namespace

ExperimentConfig parse_experiment_config(const std::string& json_text) {
    json j = json::parse(json_text, nullptr, /*allow_exceptions=*/false);
    if (j.is_discarded()) throw ConfigError("config is not valid JSON");
    check_keys(j, "",
               {"dataset", "model", "method", "alpha", "epochs", "batch_size", "sgd", "lambda",
                "seeds", "output_dir", "probe_every", "splits", "split_seed", "save_checkpoints"});

    ExperimentConfig cfg;
    if (!j.contains("dataset")) bad_key("dataset", "is required");
    cfg.dataset = parse_dataset(j["dataset"]);
    if (!j.contains("model")) bad_key("model", "is required");
    cfg.model = parse_model(j["model"]);
    cfg.method = train_method_from_name(get_string(j, "", "method", "", /*required=*/true));
    cfg.alpha = get_number(j, "", "alpha", cfg.alpha);
    cfg.epochs = get_uint(j, "", "epochs", cfg.epochs);
    cfg.batch_size = get_uint(j, "", "batch_size", cfg.batch_size);
    if (j.contains("sgd")) cfg.sgd = parse_sgd(j["sgd"]);
    cfg.lambda = get_number(j, "", "lambda", cfg.lambda);
    if (j.contains("seeds")) {
        if (!j["seeds"].is_array() || j["seeds"].empty())
            bad_key("seeds", "expected a non-empty array of non-negative integers");
        cfg.seeds.clear();
        for (const auto& s : j["seeds"]) {
            if (!s.is_number_unsigned()) bad_key("seeds", "expected non-negative integers");
            cfg.seeds.push_back(s.get<std::uint64_t>());
        }
    }
    cfg.output_dir = get_string(j, "", "output_dir", "", /*required=*/true);
    cfg.probe_every = get_uint(j, "", "probe_every", cfg.probe_every);
    if (j.contains("splits")) {
        check_keys(j["splits"], "splits", {"train", "val", "probe_fit", "probe_eval"});
        cfg.splits.train = get_number(j["splits"], "splits", "train", cfg.splits.train);
        cfg.splits.val = get_number(j["splits"], "splits", "val", cfg.splits.val);
        cfg.splits.probe_fit = get_number(j["splits"], "splits", "probe_fit", cfg.splits.probe_fit);
        cfg.splits.probe_eval =
            get_number(j["splits"], "splits", "probe_eval", cfg.splits.probe_eval);
    }
    cfg.split_seed = get_uint(j, "", "split_seed", cfg.split_seed);
    cfg.save_checkpoints = get_bool(j, "", "save_checkpoints", cfg.save_checkpoints);
    cfg.validate();
    return cfg;
}

ExperimentConfig load_experiment_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_experiment_config(ss.str());
}

SyntheticSpec parse_synthetic_spec(const std::string& json_text) {
    json j = json::parse(json_text, nullptr, /*allow_exceptions=*/false);
    if (j.is_discarded()) throw ConfigError("spec is not valid JSON");
    if (!j.is_object()) throw ConfigError("spec: expected a JSON object");
    return parse_synthetic(j, "");
}

SyntheticSpec load_synthetic_spec(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open spec file '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_synthetic_spec(ss.str());
}

std::string experiment_config_to_json(const ExperimentConfig& cfg) {
    json j;
    switch (cfg.dataset.kind) {
        case DatasetSource::Kind::Builtin:
            j["dataset"] = {{"builtin", cfg.dataset.builtin_name}, {"seed", cfg.dataset.builtin_seed}};
            break;
        case DatasetSource::Kind::File:
            j["dataset"] = {{"path", cfg.dataset.path}};
            break;
        case DatasetSource::Kind::Synthetic: {
            json s;
            s["num_classes"] = cfg.dataset.synthetic.num_classes;
            s["num_samples"] = cfg.dataset.synthetic.num_samples;
            s["shared_fraction"] = cfg.dataset.synthetic.shared_fraction;
            s["seed"] = cfg.dataset.synthetic.seed;
            s["modalities"] = json::array();
            for (const auto& m : cfg.dataset.synthetic.modalities)
                s["modalities"].push_back({{"name", m.name}, {"dim", m.dim}, {"snr", m.snr}});
            j["dataset"] = {{"synthetic", s}};
            break;
        }
    }
    j["model"]["fusion"] = fusion_kind_name(cfg.model.fusion);
    j["model"]["encoder_hidden"] = cfg.model.encoder_hidden;
    if (!cfg.model.encoder_hidden_overrides.empty()) {
        json ov = json::object();
        for (const auto& [name, hidden] : cfg.model.encoder_hidden_overrides) ov[name] = hidden;
        j["model"]["encoder_hidden_overrides"] = ov;
    }
    if (cfg.model.fusion == FusionKind::EarlyMaxout) {
        j["model"]["fusion_hidden_dim"] = cfg.model.fusion_hidden_dim;
        j["model"]["maxout_pieces"] = cfg.model.maxout_pieces;
    }
    j["method"] = train_method_name(cfg.method);
    // α only modulates AGM variants; recorded as null for joint training.
    if (cfg.method == TrainMethod::JointTrain)
        j["alpha"] = nullptr;
    else
        j["alpha"] = cfg.alpha;
    j["epochs"] = cfg.epochs;
    j["batch_size"] = cfg.batch_size;
    j["sgd"] = {{"learning_rate", cfg.sgd.learning_rate},
                {"momentum", cfg.sgd.momentum},
                {"weight_decay", cfg.sgd.weight_decay},
                {"lr_decay_factor", cfg.sgd.lr_decay_factor},
                {"lr_decay_every", cfg.sgd.lr_decay_every}};
    j["lambda"] = cfg.lambda;
    j["seeds"] = cfg.seeds;
    j["output_dir"] = cfg.output_dir;
    j["probe_every"] = cfg.probe_every;
    j["splits"] = {{"train", cfg.splits.train},
                   {"val", cfg.splits.val},
                   {"probe_fit", cfg.splits.probe_fit},
                   {"probe_eval", cfg.splits.probe_eval}};
    j["split_seed"] = cfg.split_seed;
    j["save_checkpoints"] = cfg.save_checkpoints;
    return j.dump(2);
}

std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
    std::vector<std::uint64_t> seeds;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        try {
            std::size_t pos = 0;
            const unsigned long long v = std::stoull(item, &pos);
            if (pos != item.size()) throw std::invalid_argument(item);
            seeds.push_back(v);
        } catch (const std::exception&) {
            throw ConfigError("MODFORGE_SEED: '" + item + "' is not a non-negative integer");
        }
    }
    if (seeds.empty()) throw ConfigError("MODFORGE_SEED: no seeds given");
    return seeds;
}

}  // namespace modforge
