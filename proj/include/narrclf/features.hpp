#pragma once

// Tokenization, n-gram TF-IDF vocabulary, engineered-feature scaling and
// feature-vector assembly.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "narrclf/corpus.hpp"
#include "narrclf/error.hpp"

namespace narrclf {

struct TokenizerConfig {
    bool lowercase = false;
};

enum class VocabRanking { DocumentFrequency, TfidfMass };
enum class TextSource { Participant, Full };

struct FeatureConfig {
    int ngram_min = 1;
    int ngram_max = 4;
    std::size_t max_features = 1000;
    bool lowercase = false;
    bool use_engineered = true;
    VocabRanking ranking = VocabRanking::DocumentFrequency;
    TextSource text = TextSource::Participant;

    void validate() const {
        if (ngram_min < 1 || ngram_max < ngram_min) throw ConfigError("need 1 <= ngram_min <= ngram_max");
        if (max_features < 1) throw ConfigError("max_features must be >= 1");
    }
    TokenizerConfig tokenizer() const { return {lowercase}; }
};

inline nlohmann::json to_json(const FeatureConfig& c) {
    return {{"ngram_min", c.ngram_min},
            {"ngram_max", c.ngram_max},
            {"max_features", c.max_features},
            {"lowercase", c.lowercase},
            {"use_engineered", c.use_engineered},
            {"ranking", c.ranking == VocabRanking::DocumentFrequency ? "doc_freq" : "tfidf_mass"},
            {"text", c.text == TextSource::Participant ? "participant" : "full"}};
}

inline FeatureConfig feature_config_from_json(const nlohmann::json& j) {
    FeatureConfig c;
    c.ngram_min = j.value("ngram_min", c.ngram_min);
    c.ngram_max = j.value("ngram_max", c.ngram_max);
    c.max_features = j.value("max_features", c.max_features);
    c.lowercase = j.value("lowercase", c.lowercase);
    c.use_engineered = j.value("use_engineered", c.use_engineered);
    const auto ranking = j.value("ranking", std::string("doc_freq"));
    if (ranking == "doc_freq") c.ranking = VocabRanking::DocumentFrequency;
    else if (ranking == "tfidf_mass") c.ranking = VocabRanking::TfidfMass;
    else throw ConfigError("unknown vocabulary ranking '" + ranking + "'");
    const auto text = j.value("text", std::string("participant"));
    if (text == "participant") c.text = TextSource::Participant;
    else if (text == "full") c.text = TextSource::Full;
    else throw ConfigError("unknown text source '" + text + "'");
    c.validate();
    return c;
}

// ---------------------------------------------------------------------------
// Tokenizer

namespace detail {

// Decodes one UTF-8 code point starting at `pos`, advancing it. Invalid bytes
// decode as themselves so the tokenizer never throws.
inline char32_t next_code_point(std::string_view s, std::size_t& pos) {
    const auto b0 = static_cast<unsigned char>(s[pos]);
    auto cont = [&](std::size_t k) -> int {
        if (pos + k >= s.size()) return -1;
        const auto b = static_cast<unsigned char>(s[pos + k]);
        return (b & 0xC0) == 0x80 ? (b & 0x3F) : -1;
    };
    if (b0 < 0x80) {
        ++pos;
        return b0;
    }
    int len = (b0 & 0xE0) == 0xC0 ? 2 : (b0 & 0xF0) == 0xE0 ? 3 : (b0 & 0xF8) == 0xF0 ? 4 : 1;
    char32_t cp = len == 2 ? (b0 & 0x1F) : len == 3 ? (b0 & 0x0F) : (b0 & 0x07);
    for (int k = 1; k < len; ++k) {
        const int c = cont(static_cast<std::size_t>(k));
        if (c < 0) {
            len = 1;
            cp = b0;
            break;
        }
        cp = (cp << 6) | static_cast<char32_t>(c);
    }
    pos += static_cast<std::size_t>(len);
    return cp;
}

inline bool is_space_cp(char32_t c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f' || c == 0xA0 ||
           c == 0x2028 || c == 0x2029 || (c >= 0x2000 && c <= 0x200A) || c == 0x3000;
}

inline bool is_apostrophe_cp(char32_t c) { return c == '\'' || c == 0x2019; }

// Letters and digits; non-ASCII code points count as letters apart from the
// general punctuation block.
inline bool is_word_cp(char32_t c) {
    if (c < 0x80) return std::isalnum(static_cast<int>(c)) != 0;
    if (c >= 0x2000 && c <= 0x206F) return false;
    if (c == 0xA0 || c == 0xAB || c == 0xBB || c == 0xBF || c == 0xA1) return false;
    return !is_space_cp(c);
}

}  // namespace detail

// Maximal runs of letters/digits (apostrophes allowed between word
// characters), or single non-space punctuation characters.
inline std::vector<std::string> tokenize(std::string_view text, TokenizerConfig cfg = {}) {
    std::string lowered;
    if (cfg.lowercase) {
        lowered.assign(text);
        for (auto& ch : lowered) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
        text = lowered;
    }

    struct Cp {
        char32_t cp;
        std::size_t begin, end;
    };
    std::vector<Cp> cps;
    for (std::size_t pos = 0; pos < text.size();) {
        const auto begin = pos;
        const auto cp = detail::next_code_point(text, pos);
        cps.push_back({cp, begin, pos});
    }

    std::vector<std::string> tokens;
    for (std::size_t i = 0; i < cps.size();) {
        const auto c = cps[i].cp;
        if (detail::is_space_cp(c)) {
            ++i;
        } else if (detail::is_word_cp(c)) {
            std::size_t j = i + 1;
            while (j < cps.size()) {
                if (detail::is_word_cp(cps[j].cp)) {
                    ++j;
                } else if (detail::is_apostrophe_cp(cps[j].cp) && j + 1 < cps.size() &&
                           detail::is_word_cp(cps[j + 1].cp)) {
                    j += 2;
                } else {
                    break;
                }
            }
            tokens.emplace_back(text.substr(cps[i].begin, cps[j - 1].end - cps[i].begin));
            i = j;
        } else {
            tokens.emplace_back(text.substr(cps[i].begin, cps[i].end - cps[i].begin));
            ++i;
        }
    }
    return tokens;
}

// Visits every n-gram of `tokens` for n in [n_min, n_max], joined by spaces.
template <typename Fn>
void for_each_ngram(const std::vector<std::string>& tokens, int n_min, int n_max, Fn&& fn) {
    std::string gram;
    for (std::size_t start = 0; start < tokens.size(); ++start) {
        gram.clear();
        for (int n = 1; n <= n_max && start + static_cast<std::size_t>(n) <= tokens.size(); ++n) {
            if (n > 1) gram += ' ';
            gram += tokens[start + static_cast<std::size_t>(n) - 1];
            if (n >= n_min) fn(std::string_view(gram));
        }
    }
}

// ---------------------------------------------------------------------------
// Feature vectors

struct SparseEntry {
    std::uint32_t index = 0;
    double weight = 0.0;

    bool operator==(const SparseEntry&) const = default;
};

// Sparse lexical block, optionally followed by three engineered values that
// occupy the trailing indices dim-3 .. dim-1.
struct FeatureVector {
    std::vector<SparseEntry> sparse;
    std::optional<std::array<double, 3>> engineered;
    std::size_t dim = 0;

    bool operator==(const FeatureVector&) const = default;

    std::size_t sparse_dim() const { return engineered ? dim - 3 : dim; }

    static FeatureVector dense(const std::vector<double>& values) {
        FeatureVector v;
        v.dim = values.size();
        for (std::size_t i = 0; i < values.size(); ++i)
            if (values[i] != 0.0) v.sparse.push_back({static_cast<std::uint32_t>(i), values[i]});
        return v;
    }
};

namespace detail {

inline double sparse_dot(const std::vector<SparseEntry>& a, const std::vector<SparseEntry>& b) {
    double sum = 0.0;
    auto ia = a.begin(), ib = b.begin();
    while (ia != a.end() && ib != b.end()) {
        if (ia->index < ib->index) {
            ++ia;
        } else if (ib->index < ia->index) {
            ++ib;
        } else {
            sum += ia->weight * ib->weight;
            ++ia;
            ++ib;
        }
    }
    return sum;
}

inline double squared_norm(const FeatureVector& v) {
    double s = 0.0;
    for (const auto& e : v.sparse) s += e.weight * e.weight;
    if (v.engineered)
        for (double x : *v.engineered) s += x * x;
    return s;
}

}  // namespace detail

inline void require_same_dim(const FeatureVector& a, const FeatureVector& b) {
    if (a.dim != b.dim || a.engineered.has_value() != b.engineered.has_value())
        throw DimensionMismatch(std::to_string(a.dim) + " vs " + std::to_string(b.dim));
}

inline double dot(const FeatureVector& a, const FeatureVector& b) {
    require_same_dim(a, b);
    double s = detail::sparse_dot(a.sparse, b.sparse);
    if (a.engineered)
        for (std::size_t k = 0; k < 3; ++k) s += (*a.engineered)[k] * (*b.engineered)[k];
    return s;
}

inline double squared_distance(const FeatureVector& a, const FeatureVector& b) {
    const double d = detail::squared_norm(a) + detail::squared_norm(b) - 2.0 * dot(a, b);
    return std::max(0.0, d);
}

inline nlohmann::json to_json(const FeatureVector& v) {
    nlohmann::json sparse = nlohmann::json::array();
    for (const auto& e : v.sparse) sparse.push_back({e.index, e.weight});
    return {{"dim", v.dim},
            {"sparse", std::move(sparse)},
            {"engineered", v.engineered ? nlohmann::json(*v.engineered) : nlohmann::json(nullptr)}};
}

inline FeatureVector feature_vector_from_json(const nlohmann::json& j) {
    FeatureVector v;
    v.dim = j.at("dim").get<std::size_t>();
    for (const auto& e : j.at("sparse")) v.sparse.push_back({e.at(0).get<std::uint32_t>(), e.at(1).get<double>()});
    if (auto eng = j.find("engineered"); eng != j.end() && !eng->is_null())
        v.engineered = eng->get<std::array<double, 3>>();
    for (std::size_t k = 1; k < v.sparse.size(); ++k)
        if (v.sparse[k].index <= v.sparse[k - 1].index) throw ArtifactError("sparse indices not strictly increasing");
    if (!v.sparse.empty() && v.sparse.back().index >= v.sparse_dim()) throw ArtifactError("sparse index out of range");
    return v;
}

// ---------------------------------------------------------------------------
// Vocabulary

class Vocabulary {
public:
    struct Entry {
        std::string ngram;
        std::size_t doc_freq = 0;
        double idf = 0.0;
    };

    Vocabulary() = default;
    Vocabulary(FeatureConfig config, std::size_t n_docs, std::vector<Entry> entries)
        : config_(config), n_docs_(n_docs), entries_(std::move(entries)) {
        for (std::size_t i = 0; i < entries_.size(); ++i) {
            if (!(entries_[i].idf > 0.0)) throw VocabularyError("idf must be positive");
            if (!index_.emplace(entries_[i].ngram, static_cast<std::uint32_t>(i)).second)
                throw VocabularyError("duplicate n-gram '" + entries_[i].ngram + "'");
        }
    }

    const FeatureConfig& config() const { return config_; }
    std::size_t n_docs() const { return n_docs_; }
    std::size_t size() const { return entries_.size(); }
    const std::vector<Entry>& entries() const { return entries_; }
    const Entry& operator[](std::size_t i) const { return entries_[i]; }

    std::optional<std::uint32_t> find(std::string_view ngram) const {
        auto it = index_.find(std::string(ngram));
        if (it == index_.end()) return std::nullopt;
        return it->second;
    }

private:
    FeatureConfig config_;
    std::size_t n_docs_ = 0;
    std::vector<Entry> entries_;
    std::unordered_map<std::string, std::uint32_t> index_;
};

inline double smoothed_idf(std::size_t n_docs, std::size_t doc_freq) {
    return std::log((1.0 + static_cast<double>(n_docs)) / (1.0 + static_cast<double>(doc_freq))) + 1.0;
}

inline Vocabulary fit_vocabulary(const std::vector<std::vector<std::string>>& train_docs, const FeatureConfig& cfg) {
    cfg.validate();
    if (std::all_of(train_docs.begin(), train_docs.end(), [](const auto& d) { return d.empty(); }))
        throw VocabularyError("all training documents are empty");

    struct Stats {
        std::size_t df = 0;
        std::size_t total = 0;
    };
    std::unordered_map<std::string, Stats> stats;
    std::unordered_set<std::string> seen_in_doc;
    for (const auto& doc : train_docs) {
        seen_in_doc.clear();
        for_each_ngram(doc, cfg.ngram_min, cfg.ngram_max, [&](std::string_view g) {
            auto& s = stats[std::string(g)];
            ++s.total;
            if (seen_in_doc.emplace(g).second) ++s.df;
        });
    }

    const std::size_t n_docs = train_docs.size();
    struct Candidate {
        const std::string* ngram;
        double score;
        std::size_t df;
    };
    std::vector<Candidate> ranked;
    ranked.reserve(stats.size());
    for (const auto& [gram, s] : stats) {
        const double score = cfg.ranking == VocabRanking::DocumentFrequency
                                 ? static_cast<double>(s.df)
                                 : static_cast<double>(s.total) * smoothed_idf(n_docs, s.df);
        ranked.push_back({&gram, score, s.df});
    }
    const auto keep = std::min(cfg.max_features, ranked.size());
    auto by_rank = [](const Candidate& a, const Candidate& b) {
        if (a.score != b.score) return a.score > b.score;
        return *a.ngram < *b.ngram;
    };
    std::partial_sort(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(keep), ranked.end(), by_rank);

    std::vector<Vocabulary::Entry> entries;
    entries.reserve(keep);
    for (std::size_t i = 0; i < keep; ++i)
        entries.push_back({*ranked[i].ngram, ranked[i].df, smoothed_idf(n_docs, ranked[i].df)});
    return Vocabulary(cfg, n_docs, std::move(entries));
}

// TF-IDF sparse block: raw count times idf, then L2-normalised.
inline FeatureVector transform(const std::vector<std::string>& doc, const Vocabulary& vocab) {
    const auto& cfg = vocab.config();
    std::map<std::uint32_t, std::size_t> counts;
    for_each_ngram(doc, cfg.ngram_min, cfg.ngram_max, [&](std::string_view g) {
        if (auto idx = vocab.find(g)) ++counts[*idx];
    });

    FeatureVector v;
    v.dim = vocab.size();
    double norm2 = 0.0;
    for (const auto& [idx, count] : counts) {
        const double w = static_cast<double>(count) * vocab[idx].idf;
        v.sparse.push_back({idx, w});
        norm2 += w * w;
    }
    if (norm2 > 0.0) {
        const double inv = 1.0 / std::sqrt(norm2);
        for (auto& e : v.sparse) e.weight *= inv;
    }
    return v;
}

inline nlohmann::json to_json(const Vocabulary& vocab) {
    nlohmann::json entries = nlohmann::json::array();
    for (std::size_t i = 0; i < vocab.size(); ++i)
        entries.push_back({{"ngram", vocab[i].ngram}, {"index", i}, {"df", vocab[i].doc_freq}, {"idf", vocab[i].idf}});
    return {{"version", 1}, {"config", to_json(vocab.config())}, {"n_docs", vocab.n_docs()}, {"entries", std::move(entries)}};
}

inline Vocabulary vocabulary_from_json(const nlohmann::json& j) {
    try {
        if (j.at("version").get<int>() != 1) throw ArtifactError("unsupported vocabulary version");
        const auto& jentries = j.at("entries");
        std::vector<Vocabulary::Entry> entries(jentries.size());
        std::vector<bool> filled(jentries.size(), false);
        for (const auto& e : jentries) {
            const auto idx = e.at("index").get<std::size_t>();
            if (idx >= entries.size() || filled[idx]) throw ArtifactError("vocabulary indices are not a bijection");
            filled[idx] = true;
            entries[idx] = {e.at("ngram").get<std::string>(), e.at("df").get<std::size_t>(), e.at("idf").get<double>()};
        }
        return Vocabulary(feature_config_from_json(j.at("config")), j.at("n_docs").get<std::size_t>(), std::move(entries));
    } catch (const nlohmann::json::exception& e) {
        throw ArtifactError(std::string("malformed vocabulary: ") + e.what());
    }
}

// ---------------------------------------------------------------------------
// Engineered features

// Population z-scoring fitted on the training split. A zero stddev marks a
// constant dimension, which always maps to 0.
struct EngineeredScaler {
    std::array<double, 3> mean{};
    std::array<double, 3> stddev{};

    bool is_constant(std::size_t k) const { return !(stddev[k] > 0.0); }

    std::array<double, 3> standardize(const std::array<double, 3>& x) const {
        std::array<double, 3> z{};
        for (std::size_t k = 0; k < 3; ++k) z[k] = is_constant(k) ? 0.0 : (x[k] - mean[k]) / stddev[k];
        return z;
    }

    std::array<double, 3> unstandardize(const std::array<double, 3>& z) const {
        std::array<double, 3> x{};
        for (std::size_t k = 0; k < 3; ++k) x[k] = is_constant(k) ? mean[k] : z[k] * stddev[k] + mean[k];
        return x;
    }
};

inline EngineeredScaler fit_scaler(const std::vector<EngineeredFeatures>& train) {
    if (train.size() < 2) throw ScalerError("need at least 2 training instances");
    EngineeredScaler s;
    const auto n = static_cast<double>(train.size());
    for (const auto& f : train) {
        const auto a = f.as_array();
        for (std::size_t k = 0; k < 3; ++k) s.mean[k] += a[k];
    }
    for (auto& m : s.mean) m /= n;
    std::array<double, 3> var{};
    for (const auto& f : train) {
        const auto a = f.as_array();
        for (std::size_t k = 0; k < 3; ++k) var[k] += (a[k] - s.mean[k]) * (a[k] - s.mean[k]);
    }
    for (std::size_t k = 0; k < 3; ++k) {
        const double sd = std::sqrt(var[k] / n);
        s.stddev[k] = sd > 1e-12 * std::max(1.0, std::abs(s.mean[k])) ? sd : 0.0;
    }
    return s;
}

inline nlohmann::json to_json(const EngineeredScaler& s) { return {{"mean", s.mean}, {"stddev", s.stddev}}; }

inline EngineeredScaler scaler_from_json(const nlohmann::json& j) {
    try {
        EngineeredScaler s;
        s.mean = j.at("mean").get<std::array<double, 3>>();
        s.stddev = j.at("stddev").get<std::array<double, 3>>();
        return s;
    } catch (const nlohmann::json::exception& e) {
        throw ArtifactError(std::string("malformed scaler: ") + e.what());
    }
}

inline FeatureVector assemble(const FeatureVector& sparse, const EngineeredFeatures& eng,
                              const EngineeredScaler* scaler, const FeatureConfig& cfg) {
    if (!cfg.use_engineered) return sparse;
    if (scaler == nullptr) throw ScalerError("engineered features enabled but no scaler fitted");
    FeatureVector out = sparse;
    out.engineered = scaler->standardize(eng.as_array());
    out.dim = sparse.dim + 3;
    return out;
}

// ---------------------------------------------------------------------------

inline std::string feature_text(const Transcript& t, TextSource source) {
    if (source == TextSource::Participant) return participant_text(t);
    std::string out;
    for (const auto& turn : t.turns) {
        if (!out.empty()) out += ' ';
        out += turn.text;
    }
    return out;
}

// Fitted vocabulary plus optional scaler; maps transcripts to model inputs.
struct Featurizer {
    Vocabulary vocab;
    std::optional<EngineeredScaler> scaler;

    static Featurizer fit(const std::vector<Transcript>& train, const FeatureConfig& cfg) {
        std::vector<std::vector<std::string>> docs;
        std::vector<EngineeredFeatures> eng;
        for (const auto& t : train) {
            docs.push_back(tokenize(feature_text(t, cfg.text), cfg.tokenizer()));
            eng.push_back(engineered_features(t));
        }
        Featurizer f{fit_vocabulary(docs, cfg), std::nullopt};
        if (cfg.use_engineered) f.scaler = fit_scaler(eng);
        return f;
    }

    FeatureVector operator()(const Transcript& t) const {
        const auto& cfg = vocab.config();
        const auto sparse = transform(tokenize(feature_text(t, cfg.text), cfg.tokenizer()), vocab);
        return assemble(sparse, engineered_features(t), scaler ? &*scaler : nullptr, cfg);
    }
};

}  // namespace narrclf
