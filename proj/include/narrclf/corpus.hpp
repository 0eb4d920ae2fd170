#pragma once

// Transcript data model, JSONL ingestion, engineered narrative features,
// stratified splitting and the synthetic corpus generator.

#include <algorithm>
#include <cctype>
#include <array>
#include <cmath>
#include <cstdint>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "narrclf/error.hpp"
#include "narrclf/random.hpp"

namespace narrclf {

enum class Speaker { Interviewer, Participant };

inline std::string_view to_string(Speaker s) {
    return s == Speaker::Interviewer ? "interviewer" : "participant";
}

struct Turn {
    Speaker speaker = Speaker::Participant;
    std::string text;

    bool operator==(const Turn&) const = default;
};

struct Transcript {
    std::string id;
    std::vector<Turn> turns;
    std::optional<int> label;  // 1 = positive, 0 = negative

    bool operator==(const Transcript&) const = default;
};

struct EngineeredFeatures {
    double mean_response_len = 0.0;
    std::size_t num_responses = 0;
    double mean_question_len = 0.0;

    std::array<double, 3> as_array() const {
        return {mean_response_len, static_cast<double>(num_responses), mean_question_len};
    }
};

struct DatasetSplit {
    std::vector<Transcript> train, dev, test;
    std::uint64_t seed = 0;
};

namespace detail {

inline bool is_blank(std::string_view s) {
    return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c); });
}

inline std::size_t count_words(std::string_view text) {
    std::size_t words = 0;
    bool in_word = false;
    for (unsigned char c : text) {
        if (std::isspace(c)) {
            in_word = false;
        } else if (!in_word) {
            in_word = true;
            ++words;
        }
    }
    return words;
}

}  // namespace detail

// Throws InvalidTranscript if `t` breaks a data-model invariant.
inline void validate(const Transcript& t) {
    if (t.id.empty()) throw InvalidTranscript("empty id");
    if (t.turns.empty()) throw InvalidTranscript("transcript '" + t.id + "' has no turns");
    bool has_participant = false;
    for (const auto& turn : t.turns) {
        if (detail::is_blank(turn.text))
            throw InvalidTranscript("transcript '" + t.id + "' has a blank turn");
        has_participant |= turn.speaker == Speaker::Participant;
    }
    if (!has_participant)
        throw InvalidTranscript("transcript '" + t.id + "' has no participant turn");
    if (t.label && *t.label != 0 && *t.label != 1)
        throw InvalidTranscript("transcript '" + t.id + "' label must be 0, 1 or null");
}

inline nlohmann::json to_json(const Transcript& t) {
    nlohmann::json turns = nlohmann::json::array();
    for (const auto& turn : t.turns)
        turns.push_back({{"speaker", to_string(turn.speaker)}, {"text", turn.text}});
    nlohmann::json j;
    j["id"] = t.id;
    j["label"] = t.label ? nlohmann::json(*t.label) : nlohmann::json(nullptr);
    j["turns"] = std::move(turns);
    return j;
}

// Decodes one JSONL record. `line` is used only for diagnostics.
inline Transcript transcript_from_json(const nlohmann::json& j, std::size_t line) {
    if (!j.is_object()) throw ParseError(line, "record is not a JSON object");
    Transcript t;
    auto id = j.find("id");
    if (id == j.end() || !id->is_string()) throw ParseError(line, "missing string field 'id'");
    t.id = id->get<std::string>();

    if (auto label = j.find("label"); label != j.end() && !label->is_null()) {
        if (!label->is_number_integer() || (label->get<int>() != 0 && label->get<int>() != 1))
            throw ParseError(line, "'label' must be 0, 1 or null");
        t.label = label->get<int>();
    }

    auto turns = j.find("turns");
    if (turns == j.end() || !turns->is_array()) throw ParseError(line, "missing array field 'turns'");
    for (const auto& jt : *turns) {
        if (!jt.is_object()) throw ParseError(line, "turn is not an object");
        auto speaker = jt.find("speaker");
        auto text = jt.find("text");
        if (speaker == jt.end() || !speaker->is_string() || text == jt.end() || !text->is_string())
            throw ParseError(line, "turn needs string fields 'speaker' and 'text'");
        const auto tag = speaker->get<std::string>();
        Turn turn;
        if (tag == "interviewer") {
            turn.speaker = Speaker::Interviewer;
        } else if (tag == "participant") {
            turn.speaker = Speaker::Participant;
        } else {
            throw UnknownSpeaker("line " + std::to_string(line) + ": '" + tag + "'");
        }
        turn.text = text->get<std::string>();
        t.turns.push_back(std::move(turn));
    }
    try {
        validate(t);
    } catch (const InvalidTranscript& e) {
        throw ParseError(line, e.what());
    }
    return t;
}

// Reads a JSONL transcript stream. Blank lines are skipped.
inline std::vector<Transcript> parse_transcripts(std::istream& in) {
    std::vector<Transcript> out;
    std::unordered_set<std::string> seen;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (detail::is_blank(line)) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(lineno, e.what());
        }
        auto t = transcript_from_json(j, lineno);
        if (!seen.insert(t.id).second)
            throw DuplicateId("line " + std::to_string(lineno) + ": '" + t.id + "'");
        out.push_back(std::move(t));
    }
    return out;
}

inline std::vector<Transcript> parse_transcripts(std::string_view text) {
    std::istringstream in{std::string(text)};
    return parse_transcripts(in);
}

inline void write_transcripts(std::ostream& out, const std::vector<Transcript>& data) {
    for (const auto& t : data) out << to_json(t).dump() << '\n';
}

inline std::string participant_text(const Transcript& t) {
    std::string out;
    for (const auto& turn : t.turns) {
        if (turn.speaker != Speaker::Participant) continue;
        if (!out.empty()) out += ' ';
        out += turn.text;
    }
    return out;
}

// Every turn rendered as "SPEAKER: text" on its own line.
inline std::string render_transcript(const Transcript& t) {
    std::string out;
    for (const auto& turn : t.turns) {
        if (!out.empty()) out += '\n';
        out += turn.speaker == Speaker::Interviewer ? "INTERVIEWER: " : "PARTICIPANT: ";
        out += turn.text;
    }
    return out;
}

inline EngineeredFeatures engineered_features(const Transcript& t) {
    std::size_t p_words = 0, p_turns = 0, i_words = 0, i_turns = 0;
    for (const auto& turn : t.turns) {
        const auto w = detail::count_words(turn.text);
        if (turn.speaker == Speaker::Participant) {
            p_words += w;
            ++p_turns;
        } else {
            i_words += w;
            ++i_turns;
        }
    }
    EngineeredFeatures f;
    f.num_responses = p_turns;
    f.mean_response_len = p_turns ? static_cast<double>(p_words) / static_cast<double>(p_turns) : 0.0;
    f.mean_question_len = i_turns ? static_cast<double>(i_words) / static_cast<double>(i_turns) : 0.0;
    return f;
}

// Per-partition sizes for one class: floor of n*ratio, then the leftover
// units go to the largest fractional remainders. Equal remainders favour the
// later partition, which reproduces the 264/88/89 split of a 224/217 corpus.
inline std::array<std::size_t, 3> allocate_counts(std::size_t n, const std::array<double, 3>& ratios) {
    std::array<std::size_t, 3> counts{};
    std::array<double, 3> frac{};
    std::size_t assigned = 0;
    for (std::size_t k = 0; k < 3; ++k) {
        const double raw = static_cast<double>(n) * ratios[k];
        counts[k] = static_cast<std::size_t>(std::floor(raw));
        frac[k] = raw - std::floor(raw);
        assigned += counts[k];
    }
    std::array<std::size_t, 3> order{2, 1, 0};
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return frac[a] > frac[b]; });
    for (std::size_t i = 0; assigned < n; ++i, ++assigned) ++counts[order[i % 3]];
    return counts;
}

inline DatasetSplit stratified_split(const std::vector<Transcript>& data,
                                     std::array<double, 3> ratios, std::uint64_t seed) {
    for (double r : ratios)
        if (!(r >= 0.0) || !std::isfinite(r)) throw SplitError("ratios must be non-negative");
    if (std::abs(ratios[0] + ratios[1] + ratios[2] - 1.0) > 1e-9)
        throw SplitError("ratios must sum to 1");

    std::array<std::vector<std::size_t>, 2> by_class;
    for (std::size_t i = 0; i < data.size(); ++i) {
        if (!data[i].label) throw SplitError("transcript '" + data[i].id + "' is unlabeled");
        by_class[static_cast<std::size_t>(*data[i].label)].push_back(i);
    }
    if (by_class[0].empty() || by_class[1].empty()) throw SplitError("a class has no instances");

    // partition[i] in {0,1,2} for train/dev/test
    std::vector<int> partition(data.size(), -1);
    auto rng = make_rng(seed);
    for (int cls : {1, 0}) {
        auto members = by_class[static_cast<std::size_t>(cls)];
        shuffle_in_place(members, rng);
        const auto counts = allocate_counts(members.size(), ratios);
        std::size_t pos = 0;
        for (int k = 0; k < 3; ++k)
            for (std::size_t c = 0; c < counts[static_cast<std::size_t>(k)]; ++c) partition[members[pos++]] = k;
    }

    DatasetSplit split;
    split.seed = seed;
    for (std::size_t i = 0; i < data.size(); ++i) {
        auto& dest = partition[i] == 0 ? split.train : partition[i] == 1 ? split.dev : split.test;
        dest.push_back(data[i]);
    }
    return split;
}

inline nlohmann::json split_manifest(const DatasetSplit& split) {
    auto ids = [](const std::vector<Transcript>& part) {
        nlohmann::json a = nlohmann::json::array();
        for (const auto& t : part) a.push_back(t.id);
        return a;
    };
    return {{"seed", split.seed}, {"train", ids(split.train)}, {"dev", ids(split.dev)}, {"test", ids(split.test)}};
}

// Rebuilds a split from a manifest and the corpus it was computed on.
inline DatasetSplit split_from_manifest(const nlohmann::json& manifest, const std::vector<Transcript>& corpus) {
    std::unordered_map<std::string, const Transcript*> by_id;
    for (const auto& t : corpus) by_id.emplace(t.id, &t);
    DatasetSplit split;
    try {
        split.seed = manifest.at("seed").get<std::uint64_t>();
        auto fill = [&](const char* key, std::vector<Transcript>& dest) {
            for (const auto& id : manifest.at(key)) {
                auto it = by_id.find(id.get<std::string>());
                if (it == by_id.end())
                    throw ArtifactError("split manifest references unknown id '" + id.get<std::string>() + "'");
                dest.push_back(*it->second);
            }
        };
        fill("train", split.train);
        fill("dev", split.dev);
        fill("test", split.test);
    } catch (const nlohmann::json::exception& e) {
        throw ArtifactError(std::string("malformed split manifest: ") + e.what());
    }
    return split;
}

// ---------------------------------------------------------------------------
// Synthetic corpus

// strength = 0 makes both classes draw from identical distributions; at 1
// positives get frequent marker phrases, shorter and more numerous responses.
struct SynthSignal {
    double strength = 1.0;
};

inline const std::vector<std::string>& synthetic_positive_markers() {
    static const std::vector<std::string> markers{
        "I don't know", "what about you", "um like", "wait what", "I forgot"};
    return markers;
}

inline const std::vector<std::string>& synthetic_negative_markers() {
    static const std::vector<std::string> markers{
        "and then", "because he", "at the end", "so he decided"};
    return markers;
}

namespace detail {

inline const std::vector<std::string>& synth_words() {
    static const std::vector<std::string> words{
        "boy",     "dog",    "box",     "mom",      "game",    "door",   "ball",    "leg",
        "puppy",   "couch",  "video",   "gift",     "happy",   "sad",    "angry",   "played",
        "opened",  "looked", "threw",   "ran",      "outside", "inside", "house",   "room",
        "little",  "small",  "three",   "legs",     "missing", "red",    "kicked",  "jumped",
        "smiled",  "cried",  "walked",  "sat",      "watched", "tv",     "screen",  "mother",
        "came",    "home",   "brought", "present",  "wanted",  "liked",  "felt",    "really",
        "very",    "kind",   "nice",    "funny",    "weird",   "movie",  "story",   "part",
        "first",   "last",   "later",   "again",    "together", "with",  "the",     "a",
        "his",     "it",     "was",     "were",     "they",    "she",    "he",      "to",
        "on",      "in",     "of",      "out",      "up",      "down",   "over",    "friend",
        "window",  "chair",  "toy",     "bark",     "tail",    "paw",    "carpet",  "floor",
        "surprise", "noticed", "realized", "cartoon", "animated", "short", "film",  "scene"};
    return words;
}

inline const std::vector<std::string>& synth_questions() {
    static const std::vector<std::string> questions{
        "What happened in the movie?",
        "Can you tell me more about that?",
        "How do you think the boy felt?",
        "Why do you think he did that?",
        "What happened at the end?",
        "How did the dog feel?",
        "What was your favorite part?",
        "Anything else you remember?"};
    return questions;
}

inline double draw_range(Rng& rng, double lo, double hi) { return lo + (hi - lo) * uniform_real(rng); }

template <typename T>
const T& pick(Rng& rng, const std::vector<T>& items) {
    return items[static_cast<std::size_t>(uniform_index(rng, items.size()))];
}

inline std::string synth_response(Rng& rng, int label, double strength) {
    const double length_mean = label == 1 ? 10.0 * (1.0 - 0.45 * strength) : 10.0;
    const auto n_words = std::max<long>(1, std::lround(draw_range(rng, 0.6 * length_mean, 1.4 * length_mean)));
    std::vector<std::string> words;
    for (long i = 0; i < n_words; ++i) words.push_back(pick(rng, synth_words()));

    constexpr double base_rate = 0.05;
    const double pos_rate = base_rate + (label == 1 ? 0.6 * strength : 0.0);
    const double neg_rate = base_rate + (label == 0 ? 0.6 * strength : 0.0);
    auto plant = [&](const std::vector<std::string>& markers) {
        const auto at = static_cast<std::size_t>(uniform_index(rng, words.size() + 1));
        words.insert(words.begin() + static_cast<std::ptrdiff_t>(at), pick(rng, markers));
    };
    if (uniform_real(rng) < pos_rate) plant(synthetic_positive_markers());
    if (uniform_real(rng) < neg_rate) plant(synthetic_negative_markers());

    std::string text;
    for (const auto& w : words) {
        if (!text.empty()) text += ' ';
        text += w;
    }
    text[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(text[0])));
    text += uniform_real(rng) < 0.15 ? "..." : ".";
    return text;
}

}  // namespace detail

inline std::vector<Transcript> generate_synthetic(std::size_t n, double pos_ratio, std::uint64_t seed,
                                                  SynthSignal signal = {}) {
    if (n < 4) throw InvalidArgument("synthetic corpus needs n >= 4");
    if (!(pos_ratio > 0.0 && pos_ratio < 1.0)) throw InvalidArgument("pos_ratio must lie in (0, 1)");
    if (!(signal.strength >= 0.0 && signal.strength <= 1.0))
        throw InvalidArgument("signal strength must lie in [0, 1]");

    const auto n_pos = static_cast<std::size_t>(std::lround(static_cast<double>(n) * pos_ratio));
    std::vector<int> labels(n, 0);
    std::fill(labels.begin(), labels.begin() + static_cast<std::ptrdiff_t>(n_pos), 1);
    auto rng = make_rng(seed);
    shuffle_in_place(labels, rng);

    std::vector<Transcript> out;
    out.reserve(n);
    const int width = static_cast<int>(std::to_string(n).size());
    for (std::size_t i = 0; i < n; ++i) {
        const int label = labels[i];
        Transcript t;
        auto num = std::to_string(i + 1);
        t.id = "synth-" + std::string(static_cast<std::size_t>(std::max(0, width - static_cast<int>(num.size()))), '0') + num;
        t.label = label;
        const double turns_mean = label == 1 ? 8.0 * (1.0 + 0.5 * signal.strength) : 8.0;
        const auto n_turns = std::max<long>(1, std::lround(detail::draw_range(rng, turns_mean - 2.0, turns_mean + 2.0)));
        for (long k = 0; k < n_turns; ++k) {
            if (k == 0 || uniform_real(rng) < 0.8)
                t.turns.push_back({Speaker::Interviewer, detail::pick(rng, detail::synth_questions())});
            t.turns.push_back({Speaker::Participant, detail::synth_response(rng, label, signal.strength)});
        }
        out.push_back(std::move(t));
    }
    return out;
}

}  // namespace narrclf
