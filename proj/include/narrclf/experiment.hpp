#pragma once

// Experiment configuration (TOML) and the pipeline stages fronted by the CLI.
// Every stage reads its inputs from, and writes its artifacts to, the
// configured output directory; each artifact carries the config hash.

#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>
#include <toml.hpp>

#include "narrclf/corpus.hpp"
#include "narrclf/ensemble.hpp"
#include "narrclf/error.hpp"
#include "narrclf/eval.hpp"
#include "narrclf/features.hpp"
#include "narrclf/remote.hpp"
#include "narrclf/svm.hpp"
#include "narrclf/vote.hpp"

namespace narrclf {

inline constexpr std::string_view kVersion = "0.1.0";

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// TOML -> JSON and overrides

inline json toml_to_json(const toml::node& node) {
    if (const auto* t = node.as_table()) {
        json j = json::object();
        for (const auto& [k, v] : *t) j[std::string(k.str())] = toml_to_json(v);
        return j;
    }
    if (const auto* a = node.as_array()) {
        json j = json::array();
        for (const auto& v : *a) j.push_back(toml_to_json(v));
        return j;
    }
    if (const auto* v = node.as_string()) return v->get();
    if (const auto* v = node.as_integer()) return v->get();
    if (const auto* v = node.as_floating_point()) return v->get();
    if (const auto* v = node.as_boolean()) return v->get();
    if (const auto* v = node.as_date()) {
        std::ostringstream s;
        s << *v;
        return s.str();
    }
    if (const auto* v = node.as_time()) {
        std::ostringstream s;
        s << *v;
        return s.str();
    }
    if (const auto* v = node.as_date_time()) {
        std::ostringstream s;
        s << *v;
        return s.str();
    }
    return nullptr;
}

// "a.b.c=value"; the value is read as a TOML value, falling back to a bare string.
inline void apply_override(json& cfg, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + assignment + "' is not key=value");
    const auto key = assignment.substr(0, eq);
    const auto raw = assignment.substr(eq + 1);
    json value;
    try {
        auto tbl = toml::parse("v = " + raw);
        value = toml_to_json(*tbl.get("v"));
    } catch (const toml::parse_error&) {
        value = raw;
    }
    json* node = &cfg;
    std::size_t start = 0;
    while (true) {
        const auto dot = key.find('.', start);
        const auto part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
        if (part.empty()) throw ConfigError("override key '" + key + "' has an empty component");
        if (!node->is_object()) throw ConfigError("override key '" + key + "' descends into a non-table");
        if (dot == std::string::npos) {
            (*node)[part] = value;
            break;
        }
        node = &(*node)[part];
        if (node->is_null()) *node = json::object();
        start = dot + 1;
    }
}

inline std::string fnv1a_hex(std::string_view data) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : data) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    std::ostringstream s;
    s << std::hex << std::setw(16) << std::setfill('0') << h;
    return s.str();
}

// ---------------------------------------------------------------------------
// Config

struct SynthSettings {
    std::size_t n = 441;
    double pos_ratio = 224.0 / 441.0;
    std::uint64_t seed = 0;
    double signal = 1.0;
};

enum class SvmMode { Fixed, Grid };

struct ExperimentConfig {
    fs::path corpus;
    fs::path output_dir;

    std::array<double, 3> ratios{0.6, 0.2, 0.2};
    std::uint64_t split_seed = 0;

    FeatureConfig features;

    SvmMode svm_mode = SvmMode::Grid;
    SvmConfig svm;
    GridSpec grid;
    std::uint64_t grid_seed = 0;

    RemoteEndpoint llm;
    LlmOptions llm_options;
    std::optional<PromptTemplate> prompt;
    RemoteEndpoint transformer;
    TransformerOptions transformer_options;

    std::size_t n_boot = 1000;
    double alpha = 0.05;
    std::uint64_t eval_seed = 0;

    std::vector<ModelKind> models{ModelKind::Llm, ModelKind::Transformer, ModelKind::Svm};
    std::optional<SynthSettings> synth;

    json canonical;  // merged config after overrides
    std::string hash;

    bool enabled(ModelKind k) const { return std::find(models.begin(), models.end(), k) != models.end(); }
    bool ensemble_enabled() const { return models.size() == 3; }
    const PromptTemplate& prompt_template() const {
        if (!prompt) throw ConfigError("no prompt template configured");
        return *prompt;
    }
};

namespace detail {

inline void check_keys(const json& section, const std::string& name, std::initializer_list<std::string_view> allowed) {
    if (!section.is_object()) throw ConfigError("[" + name + "] must be a table");
    for (const auto& [k, v] : section.items())
        if (std::find(allowed.begin(), allowed.end(), k) == allowed.end())
            throw ConfigError("unknown key '" + name + "." + k + "'");
}

template <typename T>
T get_or(const json& section, const char* key, T fallback, const std::string& name) {
    auto it = section.find(key);
    if (it == section.end()) return fallback;
    try {
        return it->get<T>();
    } catch (const json::exception&) {
        throw ConfigError("'" + name + "." + key + "' has the wrong type");
    }
}

template <typename T>
T require(const json& section, const char* key, const std::string& name) {
    if (!section.contains(key)) throw ConfigError("missing required '" + name + "." + key + "'");
    return get_or<T>(section, key, T{}, name);
}

inline std::uint64_t require_seed(const json& section, const std::string& name) {
    if (!section.contains("seed")) throw ConfigError("missing seed '" + name + ".seed' (seeds have no default)");
    const auto& s = section["seed"];
    if (!s.is_number_integer() || s.get<std::int64_t>() < 0) throw ConfigError("'" + name + ".seed' must be a non-negative integer");
    return s.get<std::uint64_t>();
}

inline RemoteEndpoint endpoint_from(const json& s, const std::string& name) {
    RemoteEndpoint ep;
    ep.base_url = get_or<std::string>(s, "base_url", "", name);
    ep.timeout = std::chrono::milliseconds(get_or<std::int64_t>(s, "timeout_ms", 60'000, name));
    ep.retries = get_or<int>(s, "retries", 2, name);
    ep.backoff = std::chrono::milliseconds(get_or<std::int64_t>(s, "backoff_ms", 250, name));
    ep.auth_token_env = get_or<std::string>(s, "auth_token_env", "", name);
    ep.concurrency = get_or<std::size_t>(s, "concurrency", 4, name);
    if (ep.retries < 0) throw ConfigError("'" + name + ".retries' must be >= 0");
    if (ep.concurrency == 0) throw ConfigError("'" + name + ".concurrency' must be >= 1");
    return ep;
}

inline fs::path resolve(const fs::path& base, const std::string& p) {
    fs::path path(p);
    return path.is_absolute() ? path : base / path;
}

}  // namespace detail

enum class ConfigUse { Pipeline, Synth };

// Builds the config from merged JSON. `base_dir` anchors relative paths.
inline ExperimentConfig config_from_json(const json& raw, const fs::path& base_dir, ConfigUse use = ConfigUse::Pipeline) {
    using detail::get_or;
    detail::check_keys(raw, "root",
                       {"paths", "split", "features", "svm", "grid", "llm", "transformer", "eval", "models", "synth"});
    auto section = [&](const char* name) -> json {
        auto it = raw.find(name);
        return it == raw.end() ? json::object() : *it;
    };

    ExperimentConfig c;
    c.canonical = raw;

    const auto paths = section("paths");
    detail::check_keys(paths, "paths", {"corpus", "output_dir"});
    c.corpus = detail::resolve(base_dir, detail::require<std::string>(paths, "corpus", "paths"));
    c.output_dir = detail::resolve(base_dir, get_or<std::string>(paths, "output_dir", "out", "paths"));

    if (use == ConfigUse::Synth) {
        const auto s = section("synth");
        detail::check_keys(s, "synth", {"n", "pos_ratio", "seed", "signal"});
        SynthSettings synth;
        synth.n = get_or<std::size_t>(s, "n", synth.n, "synth");
        synth.pos_ratio = get_or<double>(s, "pos_ratio", synth.pos_ratio, "synth");
        synth.seed = detail::require_seed(s, "synth");
        synth.signal = get_or<double>(s, "signal", synth.signal, "synth");
        c.synth = synth;
        c.hash = fnv1a_hex(raw.dump());
        return c;
    }

    if (!fs::exists(c.corpus)) throw ConfigError("corpus '" + c.corpus.string() + "' does not exist");

    const auto split = section("split");
    detail::check_keys(split, "split", {"seed", "ratios"});
    c.split_seed = detail::require_seed(split, "split");
    if (split.contains("ratios")) {
        const auto r = get_or<std::vector<double>>(split, "ratios", {}, "split");
        if (r.size() != 3) throw ConfigError("'split.ratios' needs three values");
        c.ratios = {r[0], r[1], r[2]};
    }

    const auto features = section("features");
    detail::check_keys(features, "features",
                       {"ngram_min", "ngram_max", "max_features", "lowercase", "use_engineered", "ranking", "text"});
    try {
        c.features = feature_config_from_json(features);
    } catch (const json::exception&) {
        throw ConfigError("[features] has a value of the wrong type");
    }

    const auto models = section("models");
    detail::check_keys(models, "models", {"enabled"});
    if (models.contains("enabled")) {
        c.models.clear();
        for (const auto& m : get_or<std::vector<std::string>>(models, "enabled", {}, "models")) {
            const auto kind = model_kind_from_string(m);
            if (c.enabled(kind)) throw ConfigError("model '" + m + "' listed twice");
            c.models.push_back(kind);
        }
        if (c.models.empty()) throw ConfigError("no models enabled");
        std::sort(c.models.begin(), c.models.end());
    }

    if (c.enabled(ModelKind::Svm)) {
        const auto svm = section("svm");
        detail::check_keys(svm, "svm", {"mode", "C", "kernel", "gamma", "tol", "max_passes", "max_iter", "seed"});
        const auto mode = get_or<std::string>(svm, "mode", "grid", "svm");
        if (mode == "grid") c.svm_mode = SvmMode::Grid;
        else if (mode == "fixed") c.svm_mode = SvmMode::Fixed;
        else throw ConfigError("'svm.mode' must be 'grid' or 'fixed'");
        c.svm.C = get_or<double>(svm, "C", 1024.0, "svm");
        c.svm.kernel.kind = kernel_kind_from_string(get_or<std::string>(svm, "kernel", "rbf", "svm"));
        if (svm.contains("gamma")) c.svm.kernel.gamma = get_or<double>(svm, "gamma", 0.0, "svm");
        c.svm.tol = get_or<double>(svm, "tol", c.svm.tol, "svm");
        c.svm.max_passes = get_or<int>(svm, "max_passes", c.svm.max_passes, "svm");
        if (svm.contains("max_iter")) c.svm.max_iter = get_or<std::size_t>(svm, "max_iter", 0, "svm");
        c.svm.seed = detail::require_seed(svm, "svm");
        c.svm.validate();

        if (c.svm_mode == SvmMode::Grid) {
            const auto grid = section("grid");
            detail::check_keys(grid, "grid", {"C_values", "kernels", "gamma", "folds", "mode", "seed", "threads"});
            if (grid.contains("C_values")) c.grid.C_values = get_or<std::vector<double>>(grid, "C_values", {}, "grid");
            if (grid.contains("kernels")) {
                c.grid.kernels.clear();
                std::optional<double> gamma;
                if (grid.contains("gamma")) gamma = get_or<double>(grid, "gamma", 0.0, "grid");
                for (const auto& k : get_or<std::vector<std::string>>(grid, "kernels", {}, "grid"))
                    c.grid.kernels.push_back(kernel_kind_from_string(k) == KernelKind::Linear ? KernelSpec::linear()
                                                                                              : KernelSpec::rbf(gamma));
            }
            c.grid.folds = get_or<std::size_t>(grid, "folds", c.grid.folds, "grid");
            const auto gmode = get_or<std::string>(grid, "mode", "kfold", "grid");
            if (gmode == "kfold") c.grid.mode = CvMode::KFold;
            else if (gmode == "dev") c.grid.mode = CvMode::Dev;
            else throw ConfigError("'grid.mode' must be 'kfold' or 'dev'");
            c.grid.threads = get_or<std::size_t>(grid, "threads", 0, "grid");
            c.grid_seed = detail::require_seed(grid, "grid");
            c.grid.validate();
        }
    }

    std::string template_digest;
    if (c.enabled(ModelKind::Llm)) {
        const auto llm = section("llm");
        detail::check_keys(llm, "llm", {"base_url", "timeout_ms", "retries", "backoff_ms", "auth_token_env", "concurrency",
                                        "template", "max_tokens", "participant_only"});
        c.llm = detail::endpoint_from(llm, "llm");
        c.llm.validate();
        c.llm_options.max_tokens = get_or<std::size_t>(llm, "max_tokens", c.llm_options.max_tokens, "llm");
        c.llm_options.participant_only = get_or<bool>(llm, "participant_only", false, "llm");
        if (llm.contains("template")) {
            const auto path = detail::resolve(base_dir, get_or<std::string>(llm, "template", "", "llm"));
            if (!fs::exists(path)) throw ConfigError("template '" + path.string() + "' does not exist");
            c.prompt = PromptTemplate::load(path.string(), path.filename().string());
        } else {
            c.prompt = PromptTemplate::default_template();
        }
        template_digest = c.prompt->name() + "\n" + c.prompt->text();
    }

    if (c.enabled(ModelKind::Transformer)) {
        const auto tr = section("transformer");
        detail::check_keys(tr, "transformer", {"base_url", "timeout_ms", "retries", "backoff_ms", "auth_token_env",
                                               "concurrency", "window", "stride", "tokenization"});
        c.transformer = detail::endpoint_from(tr, "transformer");
        c.transformer.validate();
        c.transformer_options.window = get_or<std::size_t>(tr, "window", 512, "transformer");
        c.transformer_options.stride = get_or<std::size_t>(tr, "stride", 256, "transformer");
        if (c.transformer_options.stride == 0 || c.transformer_options.stride > c.transformer_options.window)
            throw ConfigError("transformer needs 0 < stride <= window");
        const auto tok = get_or<std::string>(tr, "tokenization", "remote", "transformer");
        if (tok == "remote") c.transformer_options.tokenization = TokenizationMode::Remote;
        else if (tok == "plain") c.transformer_options.tokenization = TokenizationMode::Plain;
        else throw ConfigError("'transformer.tokenization' must be 'remote' or 'plain'");
    }

    const auto ev = section("eval");
    detail::check_keys(ev, "eval", {"n_boot", "alpha", "seed"});
    c.n_boot = get_or<std::size_t>(ev, "n_boot", c.n_boot, "eval");
    c.alpha = get_or<double>(ev, "alpha", c.alpha, "eval");
    c.eval_seed = detail::require_seed(ev, "eval");
    if (c.n_boot == 0 || !(c.alpha > 0.0 && c.alpha < 1.0)) throw ConfigError("[eval] needs n_boot >= 1 and 0 < alpha < 1");

    c.hash = fnv1a_hex(raw.dump() + "\n" + template_digest);
    return c;
}

inline ExperimentConfig load_config(const fs::path& path, const std::vector<std::string>& overrides = {},
                                    ConfigUse use = ConfigUse::Pipeline) {
    json raw;
    try {
        raw = toml_to_json(toml::parse_file(path.string()));
    } catch (const toml::parse_error& e) {
        std::ostringstream s;
        s << e.description() << " at " << e.source().begin;
        throw ConfigError("cannot parse '" + path.string() + "': " + s.str());
    }
    for (const auto& o : overrides) apply_override(raw, o);
    return config_from_json(raw, fs::absolute(path).parent_path(), use);
}

// ---------------------------------------------------------------------------
// Artifact I/O

namespace artifacts {

inline constexpr const char* kSplit = "split.json";
inline constexpr const char* kVocab = "vocab.json";
inline constexpr const char* kScaler = "scaler.json";
inline constexpr const char* kFeatures = "features.jsonl";
inline constexpr const char* kCvReport = "cv_report.json";
inline constexpr const char* kModel = "model.json";
inline constexpr const char* kDecisions = "decisions.jsonl";
inline constexpr const char* kReportJson = "report.json";
inline constexpr const char* kReportText = "report.txt";

inline std::string votes(ModelKind k) { return "votes_" + std::string(to_string(k)) + ".jsonl"; }

}  // namespace artifacts

// Writes via a temporary file and rename so a failed stage never leaves a
// partial artifact behind.
inline void write_file(const fs::path& path, const std::string& content) {
    fs::create_directories(path.parent_path());
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw ArtifactError("cannot write '" + tmp.string() + "'");
        out << content;
        if (!out) throw ArtifactError("write failed for '" + tmp.string() + "'");
    }
    fs::rename(tmp, path);
}

inline std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ArtifactError("missing artifact '" + path.string() + "'");
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

// Reads a JSON artifact and checks that it was produced under `hash`.
inline json read_json_artifact(const fs::path& path, const std::string& hash) {
    json j;
    try {
        j = json::parse(read_file(path));
    } catch (const json::exception& e) {
        throw ArtifactError("'" + path.string() + "' is not valid JSON: " + e.what());
    }
    if (j.value("config_hash", std::string()) != hash)
        throw ArtifactError("'" + path.string() + "' was produced under a different config (hash mismatch)");
    return j;
}

inline std::vector<json> read_jsonl_artifact(const fs::path& path, const std::string& hash) {
    std::istringstream in(read_file(path));
    std::vector<json> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw ArtifactError("'" + path.string() + "' line " + std::to_string(lineno) + ": " + e.what());
        }
        if (j.value("config_hash", std::string()) != hash)
            throw ArtifactError("'" + path.string() + "' line " + std::to_string(lineno) +
                                " was produced under a different config (hash mismatch)");
        out.push_back(std::move(j));
    }
    return out;
}

inline std::string dump_jsonl(const std::vector<json>& rows) {
    std::string out;
    for (const auto& r : rows) out += r.dump() + "\n";
    return out;
}

inline void write_manifest(const ExperimentConfig& c, const std::string& command, const std::vector<std::string>& produced) {
    json seeds{{"split", c.split_seed}, {"eval", c.eval_seed}};
    if (c.enabled(ModelKind::Svm)) {
        seeds["svm"] = c.svm.seed;
        if (c.svm_mode == SvmMode::Grid) seeds["grid"] = c.grid_seed;
    }
    if (c.synth) seeds = {{"synth", c.synth->seed}};
    json m{{"command", command},
           {"config_hash", c.hash},
           {"version", kVersion},
           {"seeds", seeds},
           {"artifacts", produced},
           {"config", c.canonical}};
    write_file(c.output_dir / ("manifest_" + command + ".json"), m.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// Stages

inline std::vector<Transcript> load_corpus(const ExperimentConfig& c) {
    std::ifstream in(c.corpus, std::ios::binary);
    if (!in) throw ArtifactError("cannot read corpus '" + c.corpus.string() + "'");
    return parse_transcripts(in);
}

inline DatasetSplit load_split(const ExperimentConfig& c) {
    return split_from_manifest(read_json_artifact(c.output_dir / artifacts::kSplit, c.hash), load_corpus(c));
}

inline void cmd_synth(const ExperimentConfig& c) {
    if (!c.synth) throw ConfigError("[synth] section required");
    const auto data = generate_synthetic(c.synth->n, c.synth->pos_ratio, c.synth->seed, SynthSignal{c.synth->signal});
    std::ostringstream out;
    write_transcripts(out, data);
    write_file(c.corpus, out.str());
}

inline DatasetSplit cmd_split(const ExperimentConfig& c) {
    auto split = stratified_split(load_corpus(c), c.ratios, c.split_seed);
    auto j = split_manifest(split);
    j["config_hash"] = c.hash;
    write_file(c.output_dir / artifacts::kSplit, j.dump(2) + "\n");
    write_manifest(c, "split", {artifacts::kSplit});
    return split;
}

struct FeatureSet {
    std::vector<std::string> ids;
    std::vector<FeatureVector> X;
    std::vector<int> y;
};

inline void cmd_featurize(const ExperimentConfig& c) {
    const auto split = load_split(c);
    const auto featurizer = Featurizer::fit(split.train, c.features);

    auto vocab = to_json(featurizer.vocab);
    vocab["config_hash"] = c.hash;
    write_file(c.output_dir / artifacts::kVocab, vocab.dump() + "\n");
    std::vector<std::string> produced{artifacts::kVocab, artifacts::kFeatures};
    if (featurizer.scaler) {
        auto scaler = to_json(*featurizer.scaler);
        scaler["config_hash"] = c.hash;
        write_file(c.output_dir / artifacts::kScaler, scaler.dump(2) + "\n");
        produced.push_back(artifacts::kScaler);
    }
    std::vector<json> rows;
    auto emit = [&](const char* part, const std::vector<Transcript>& items) {
        for (const auto& t : items)
            rows.push_back({{"id", t.id}, {"split", part}, {"label", *t.label}, {"vector", to_json(featurizer(t))},
                            {"config_hash", c.hash}});
    };
    emit("train", split.train);
    emit("dev", split.dev);
    emit("test", split.test);
    write_file(c.output_dir / artifacts::kFeatures, dump_jsonl(rows));
    write_manifest(c, "featurize", produced);
}

inline FeatureSet load_features(const ExperimentConfig& c, const std::string& part) {
    FeatureSet fs;
    for (const auto& row : read_jsonl_artifact(c.output_dir / artifacts::kFeatures, c.hash)) {
        if (row.at("split").get<std::string>() != part) continue;
        fs.ids.push_back(row.at("id").get<std::string>());
        fs.X.push_back(feature_vector_from_json(row.at("vector")));
        fs.y.push_back(row.at("label").get<int>());
    }
    return fs;
}

inline CvReport cmd_grid_search(const ExperimentConfig& c) {
    const auto train = load_features(c, "train");
    FeatureSet dev;
    if (c.grid.mode == CvMode::Dev) dev = load_features(c, "dev");
    auto report = grid_search(train.X, train.y, c.grid, c.grid_seed, c.svm, dev.X, dev.y);
    auto j = to_json(report);
    j["config_hash"] = c.hash;
    write_file(c.output_dir / artifacts::kCvReport, j.dump(2) + "\n");
    write_manifest(c, "grid-search", {artifacts::kCvReport});
    return report;
}

inline SvmModel cmd_train_svm(const ExperimentConfig& c) {
    SvmConfig cfg = c.svm;
    if (c.svm_mode == SvmMode::Grid) {
        const auto cv = read_json_artifact(c.output_dir / artifacts::kCvReport, c.hash);
        cfg = svm_config_from_json(cv.at("selected"));
    }
    const auto train = load_features(c, "train");
    auto model = train_smo(train.X, train.y, cfg);
    auto j = to_json(model);
    j["config_hash"] = c.hash;
    write_file(c.output_dir / artifacts::kModel, j.dump() + "\n");
    write_manifest(c, "train-svm", {artifacts::kModel});
    return model;
}

inline std::vector<ModelVote> cmd_predict(const ExperimentConfig& c, ModelKind kind) {
    if (!c.enabled(kind)) throw ConfigError("model '" + std::string(to_string(kind)) + "' is not enabled");
    std::vector<ModelVote> votes;
    if (kind == ModelKind::Svm) {
        const auto model = svm_model_from_json(read_json_artifact(c.output_dir / artifacts::kModel, c.hash));
        const auto test = load_features(c, "test");
        for (std::size_t i = 0; i < test.X.size(); ++i) {
            const double dv = decision_value(model, test.X[i]);
            votes.push_back({test.ids[i], ModelKind::Svm, dv >= 0.0 ? 1 : 0, SvmProvenance{dv}});
        }
        std::sort(votes.begin(), votes.end(), [](const auto& a, const auto& b) { return a.transcript_id < b.transcript_id; });
    } else {
        const auto split = load_split(c);
        if (kind == ModelKind::Llm) {
            const auto& tmpl = c.prompt_template();
            votes = classify_all(split.test, c.llm.concurrency,
                                 [&](const Transcript& t) { return classify_llm(t, c.llm, tmpl, c.llm_options); });
        } else {
            votes = classify_all(split.test, c.transformer.concurrency, [&](const Transcript& t) {
                return classify_transformer(t, c.transformer, c.transformer_options);
            });
        }
    }
    std::vector<json> rows;
    for (const auto& v : votes) {
        auto j = to_json(v);
        j["config_hash"] = c.hash;
        rows.push_back(std::move(j));
    }
    write_file(c.output_dir / artifacts::votes(kind), dump_jsonl(rows));
    write_manifest(c, "predict-" + std::string(to_string(kind)), {artifacts::votes(kind)});
    return votes;
}

inline std::vector<ModelVote> load_votes(const ExperimentConfig& c, ModelKind kind) {
    std::vector<ModelVote> votes;
    for (const auto& row : read_jsonl_artifact(c.output_dir / artifacts::votes(kind), c.hash)) {
        auto v = model_vote_from_json(row);
        if (v.model != kind) throw ArtifactError(artifacts::votes(kind) + " contains a vote from another model");
        votes.push_back(std::move(v));
    }
    return votes;
}

inline std::vector<EnsembleDecision> cmd_ensemble(const ExperimentConfig& c) {
    if (!c.ensemble_enabled()) throw ConfigError("the ensemble needs all three models enabled");
    std::map<std::string, std::vector<ModelVote>> by_id;
    std::set<std::string> ids_of_first;
    bool first = true;
    for (auto kind : {ModelKind::Llm, ModelKind::Transformer, ModelKind::Svm}) {
        std::set<std::string> ids;
        for (auto& v : load_votes(c, kind)) {
            ids.insert(v.transcript_id);
            by_id[v.transcript_id].push_back(std::move(v));
        }
        if (first) ids_of_first = ids;
        else if (ids != ids_of_first) throw MismatchedIds("vote files cover different transcripts");
        first = false;
    }
    std::vector<EnsembleDecision> decisions;
    std::vector<json> rows;
    for (auto& [id, votes] : by_id) {
        decisions.push_back(decide(std::move(votes)));
        auto j = to_json(decisions.back());
        j["config_hash"] = c.hash;
        rows.push_back(std::move(j));
    }
    write_file(c.output_dir / artifacts::kDecisions, dump_jsonl(rows));
    write_manifest(c, "ensemble", {artifacts::kDecisions});
    return decisions;
}

inline EvalReport cmd_evaluate(const ExperimentConfig& c) {
    const auto split = load_split(c);
    std::map<std::string, int> gold;
    for (const auto& t : split.test) gold[t.id] = *t.label;

    EvalReport report;
    report.seed = c.eval_seed;
    report.n_boot = c.n_boot;
    report.config_hash = c.hash;

    auto add_row = [&](const std::string& name, const std::map<std::string, int>& preds_by_id) {
        std::vector<int> preds, golds;
        for (const auto& [id, g] : gold) {
            auto it = preds_by_id.find(id);
            if (it == preds_by_id.end()) throw ArtifactError(name + " has no prediction for test transcript '" + id + "'");
            preds.push_back(it->second);
            golds.push_back(g);
        }
        if (preds_by_id.size() != gold.size()) throw ArtifactError(name + " predicts transcripts outside the test split");
        report.rows.push_back(evaluate_row(name, preds, golds, c.n_boot, c.alpha, c.eval_seed));
    };

    for (auto kind : c.models) {
        std::map<std::string, int> preds;
        for (const auto& v : load_votes(c, kind)) preds[v.transcript_id] = v.label;
        add_row(std::string(to_string(kind)), preds);
    }
    if (c.ensemble_enabled()) {
        std::map<std::string, int> preds;
        for (const auto& row : read_jsonl_artifact(c.output_dir / artifacts::kDecisions, c.hash))
            preds[row.at("id").get<std::string>()] = row.at("label").get<int>();
        add_row("ensemble", preds);
    }
    write_file(c.output_dir / artifacts::kReportJson, render_report(report, ReportFormat::Json));
    write_file(c.output_dir / artifacts::kReportText, render_report(report, ReportFormat::Text));
    write_manifest(c, "evaluate", {artifacts::kReportJson, artifacts::kReportText});
    return report;
}

// Re-raises `e` with the failing stage name prepended, keeping its category.
[[noreturn]] inline void rethrow_in_stage(const std::string& stage, const Error& e) {
    throw Error(e.kind(), e.code(), "stage '" + stage + "': " + e.what());
}

inline EvalReport cmd_experiment(const ExperimentConfig& c) {
    auto stage = [&](const std::string& name, auto&& fn) {
        try {
            fn();
        } catch (const Error& e) {
            rethrow_in_stage(name, e);
        }
    };
    stage("split", [&] { cmd_split(c); });
    if (c.enabled(ModelKind::Svm)) {
        stage("featurize", [&] { cmd_featurize(c); });
        if (c.svm_mode == SvmMode::Grid) stage("grid-search", [&] { cmd_grid_search(c); });
        stage("train-svm", [&] { cmd_train_svm(c); });
    }
    for (auto kind : c.models) stage("predict-" + std::string(to_string(kind)), [&] { cmd_predict(c, kind); });
    if (c.ensemble_enabled()) stage("ensemble", [&] { cmd_ensemble(c); });
    EvalReport report;
    stage("evaluate", [&] { report = cmd_evaluate(c); });
    return report;
}

}  // namespace narrclf
