#pragma once

// Remote classifiers: a prompt-driven LLM endpoint (one call per transcript,
// verdict read from the first word of the reply) and a transformer endpoint
// driven through overlapping token windows with per-segment voting.

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "narrclf/corpus.hpp"
#include "narrclf/error.hpp"
#include "narrclf/features.hpp"
#include "narrclf/parallel.hpp"
#include "narrclf/vote.hpp"

namespace narrclf {

inline constexpr std::string_view kTranscriptPlaceholder = "{{transcript}}";
inline constexpr std::size_t kPromptTokenBudget = 8000;

inline constexpr std::string_view kDefaultPromptText =
    R"(You are a psychiatrist specializing in DSM-5 ADHD diagnosis. You will read the
transcript of a structured interview in which a young person recalls a short
animated film they have just watched.

Judge whether the participant's narrative shows signs consistent with ADHD
(inattention or hyperactivity-impulsivity), for example fragmented or disjointed
recall, missing or confused plot events, frequent "I don't know" answers,
failure to answer the question asked, or redirecting questions back to the
interviewer.

Base your judgement only on the participant's answers: disregard interviewer
questions when assessing the narrative.

Respond with "YES." or "NO." at the start of your answer (YES = ADHD,
NO = not ADHD), then give a brief justification.

Transcript:
{{transcript}}
)";

class PromptTemplate {
public:
    PromptTemplate(std::string name, std::string text) : name_(std::move(name)), text_(std::move(text)) {
        const auto first = text_.find(kTranscriptPlaceholder);
        if (first == std::string::npos) throw TemplateError("template '" + name_ + "' lacks " + std::string(kTranscriptPlaceholder));
        if (text_.find(kTranscriptPlaceholder, first + 1) != std::string::npos)
            throw TemplateError("template '" + name_ + "' repeats " + std::string(kTranscriptPlaceholder));
    }

    static PromptTemplate default_template() { return {"default-v1", std::string(kDefaultPromptText)}; }

    static PromptTemplate load(const std::string& path, std::string name = {}) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw ConfigError("cannot read template '" + path + "'");
        std::ostringstream ss;
        ss << in.rdbuf();
        return {name.empty() ? path : std::move(name), ss.str()};
    }

    const std::string& name() const { return name_; }
    const std::string& text() const { return text_; }

private:
    std::string name_;
    std::string text_;
};

inline std::size_t count_code_points(std::string_view s) {
    std::size_t n = 0;
    for (unsigned char c : s) n += (c & 0xC0) != 0x80;
    return n;
}

// Conservative prompt-size estimate: one token per three characters.
inline std::size_t estimate_tokens(std::string_view s) { return (count_code_points(s) + 2) / 3; }

inline std::string build_prompt(const PromptTemplate& tmpl, const Transcript& t, bool participant_only = false,
                                std::size_t budget = kPromptTokenBudget) {
    std::string body;
    if (participant_only) {
        for (const auto& turn : t.turns) {
            if (turn.speaker != Speaker::Participant) continue;
            if (!body.empty()) body += '\n';
            body += "PARTICIPANT: " + turn.text;
        }
    } else {
        body = render_transcript(t);
    }
    std::string out = tmpl.text();
    out.replace(out.find(kTranscriptPlaceholder), kTranscriptPlaceholder.size(), body);
    if (const auto est = estimate_tokens(out); est > budget) throw PromptTooLong(est, budget);
    return out;
}

// YES -> 1, NO -> 0, judged on the first maximal run of ASCII letters,
// ignoring case. Anything else is an error, never a default label.
inline int parse_llm_reply(std::string_view text, const std::string& transcript_id = {}) {
    auto is_alpha = [](char c) { return std::isalpha(static_cast<unsigned char>(c)) != 0; };
    const auto begin = std::find_if(text.begin(), text.end(), is_alpha);
    const auto end = std::find_if_not(begin, text.end(), is_alpha);
    std::string word(begin, end);
    for (auto& c : word) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    if (word == "yes") return 1;
    if (word == "no") return 0;
    throw UnparseableVerdict(transcript_id, std::string(text.substr(0, 200)));
}

// ---------------------------------------------------------------------------
// HTTP plumbing

struct RemoteEndpoint {
    std::string base_url;
    std::chrono::milliseconds timeout{60'000};
    int retries = 2;
    std::chrono::milliseconds backoff{250};  // doubled after each failed attempt
    std::string auth_token_env;              // empty: no bearer token
    std::size_t concurrency = 4;

    void validate() const {
        if (base_url.empty()) throw ConfigError("endpoint base_url is empty");
        if (retries < 0) throw ConfigError("retries must be >= 0");
        if (timeout.count() <= 0) throw ConfigError("timeout must be positive");
    }
};

// POSTs JSON to base_url + path. Transport failures and 5xx replies are
// retried; anything else is final.
inline nlohmann::json post_json(const RemoteEndpoint& ep, const std::string& path, const nlohmann::json& body,
                                const std::string& transcript_id) {
    ep.validate();
    httplib::Headers headers;
    if (!ep.auth_token_env.empty()) {
        if (const char* token = std::getenv(ep.auth_token_env.c_str()); token && *token)
            headers.emplace("Authorization", std::string("Bearer ") + token);
    }
    const auto payload = body.dump();
    auto delay = ep.backoff;
    std::string last_error;
    for (int attempt = 0; attempt <= ep.retries; ++attempt) {
        if (attempt > 0) {
            std::this_thread::sleep_for(delay);
            delay *= 2;
        }
        httplib::Client client(ep.base_url);
        const auto secs = std::chrono::duration_cast<std::chrono::seconds>(ep.timeout);
        const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(ep.timeout - secs);
        client.set_connection_timeout(secs.count(), usecs.count());
        client.set_read_timeout(secs.count(), usecs.count());
        client.set_write_timeout(secs.count(), usecs.count());
        auto res = client.Post(path, headers, payload, "application/json");
        if (!res) {
            last_error = path + ": " + httplib::to_string(res.error());
            continue;
        }
        if (res->status >= 500) {
            last_error = path + ": HTTP " + std::to_string(res->status);
            continue;
        }
        if (res->status != 200)
            throw TransportError(transcript_id, path + ": HTTP " + std::to_string(res->status) + " " + res->body);
        try {
            return nlohmann::json::parse(res->body);
        } catch (const nlohmann::json::exception&) {
            throw ProtocolViolation(transcript_id, path + ": reply is not JSON");
        }
    }
    throw TransportError(transcript_id, last_error + " after " + std::to_string(ep.retries + 1) + " attempt(s)");
}

inline bool healthz(const RemoteEndpoint& ep) {
    httplib::Client client(ep.base_url);
    client.set_connection_timeout(std::chrono::duration_cast<std::chrono::seconds>(ep.timeout).count(), 0);
    auto res = client.Get("/healthz");
    return res && res->status == 200;
}

// Classifies every transcript with up to `concurrency` requests in flight.
// The result is ordered by transcript id; the first failure (by id order)
// is rethrown and no partial result is returned.
template <typename Classify>
std::vector<ModelVote> classify_all(const std::vector<Transcript>& data, std::size_t concurrency, Classify&& classify) {
    std::vector<const Transcript*> ordered;
    for (const auto& t : data) ordered.push_back(&t);
    std::sort(ordered.begin(), ordered.end(), [](auto* a, auto* b) { return a->id < b->id; });
    std::vector<ModelVote> votes(ordered.size());
    parallel_for(ordered.size(), std::max<std::size_t>(1, concurrency),
                 [&](std::size_t i) { votes[i] = classify(*ordered[i]); });
    return votes;
}

// ---------------------------------------------------------------------------
// LLM

struct LlmOptions {
    std::size_t max_tokens = 64;
    bool participant_only = false;
};

inline ModelVote classify_llm(const Transcript& t, const RemoteEndpoint& ep, const PromptTemplate& tmpl,
                              const LlmOptions& opts = {}) {
    const auto prompt = build_prompt(tmpl, t, opts.participant_only);
    const auto reply = post_json(ep, "/generate", {{"prompt", prompt}, {"max_tokens", opts.max_tokens}}, t.id);
    if (!reply.is_object() || !reply.contains("text") || !reply["text"].is_string())
        throw ProtocolViolation(t.id, "/generate reply lacks string field 'text'");
    const auto text = reply["text"].get<std::string>();
    return {t.id, ModelKind::Llm, parse_llm_reply(text, t.id), LlmProvenance{text, tmpl.name()}};
}

// ---------------------------------------------------------------------------
// Sliding windows

struct TokenWindow {
    std::size_t start = 0, end = 0;  // half-open token indices

    bool operator==(const TokenWindow&) const = default;
};

// Windows start at 0, stride, 2*stride, ... and stop at the first one that
// reaches token_count.
inline std::vector<TokenWindow> plan_windows(std::size_t token_count, std::size_t window = 512, std::size_t stride = 256) {
    if (window == 0 || stride == 0 || stride > window) throw InvalidArgument("need 0 < stride <= window");
    std::vector<TokenWindow> out;
    for (std::size_t start = 0; token_count > 0; start += stride) {
        const auto end = std::min(start + window, token_count);
        out.push_back({start, end});
        if (end == token_count) break;
    }
    return out;
}

// Strict majority; an exact tie goes to mean probability >= 0.5, or to the
// positive class when no probabilities are given.
inline int aggregate_segments(std::span<const int> labels, std::span<const double> probs = {}) {
    if (labels.empty()) throw EmptyInput("no segment labels");
    if (!probs.empty() && probs.size() != labels.size()) throw LengthMismatch("labels and probabilities differ in length");
    std::size_t pos = 0;
    for (int l : labels) pos += l == 1;
    const std::size_t neg = labels.size() - pos;
    if (pos != neg) return pos > neg ? 1 : 0;
    if (probs.empty()) return 1;
    double sum = 0.0;
    for (double p : probs) sum += p;
    return sum / static_cast<double>(probs.size()) >= 0.5 ? 1 : 0;
}

struct TokenSpan {
    std::size_t start = 0, end = 0;  // code-point offsets
};

// Whitespace tokens with code-point offsets; stands in for /tokenize offline.
inline std::vector<TokenSpan> whitespace_token_spans(std::string_view text) {
    std::vector<TokenSpan> out;
    std::size_t cp = 0, start = 0;
    bool in_token = false;
    for (std::size_t pos = 0; pos < text.size();) {
        const auto c = detail::next_code_point(text, pos);
        if (detail::is_space_cp(c)) {
            if (in_token) out.push_back({start, cp});
            in_token = false;
        } else if (!in_token) {
            in_token = true;
            start = cp;
        }
        ++cp;
    }
    if (in_token) out.push_back({start, cp});
    return out;
}

enum class TokenizationMode { Remote, Plain };

struct TransformerOptions {
    std::size_t window = 512;
    std::size_t stride = 256;
    TokenizationMode tokenization = TokenizationMode::Remote;
};

namespace detail {

// Byte offset of every code point, plus one past the end.
inline std::vector<std::size_t> code_point_byte_offsets(std::string_view s) {
    std::vector<std::size_t> offs;
    for (std::size_t pos = 0; pos < s.size();) {
        offs.push_back(pos);
        next_code_point(s, pos);
    }
    offs.push_back(s.size());
    return offs;
}

}  // namespace detail

inline ModelVote classify_transformer(const Transcript& t, const RemoteEndpoint& ep, const TransformerOptions& opts = {}) {
    const auto text = participant_text(t);
    const auto byte_at = detail::code_point_byte_offsets(text);
    const std::size_t n_cp = byte_at.size() - 1;

    std::vector<TokenSpan> tokens;
    if (opts.tokenization == TokenizationMode::Plain) {
        tokens = whitespace_token_spans(text);
    } else {
        const auto reply = post_json(ep, "/tokenize", {{"text", text}}, t.id);
        if (!reply.is_object() || !reply.contains("tokens") || !reply["tokens"].is_array())
            throw ProtocolViolation(t.id, "/tokenize reply lacks array field 'tokens'");
        for (const auto& tok : reply["tokens"]) {
            if (!tok.is_object() || !tok.contains("start") || !tok.contains("end") ||
                !tok["start"].is_number_unsigned() || !tok["end"].is_number_unsigned())
                throw ProtocolViolation(t.id, "/tokenize token needs non-negative 'start' and 'end'");
            tokens.push_back({tok["start"].get<std::size_t>(), tok["end"].get<std::size_t>()});
        }
        for (std::size_t k = 0; k < tokens.size(); ++k) {
            const auto& tk = tokens[k];
            if (tk.start >= tk.end || tk.end > n_cp)
                throw ProtocolViolation(t.id, "/tokenize offsets out of range at token " + std::to_string(k));
            if (k > 0 && tk.start < tokens[k - 1].end)
                throw ProtocolViolation(t.id, "/tokenize offsets not monotone at token " + std::to_string(k));
        }
    }
    if (tokens.empty()) throw EmptyInput("transcript '" + t.id + "' has no model tokens");

    SegmentProvenance prov;
    std::vector<int> labels;
    std::vector<double> probs;
    for (const auto& w : plan_windows(tokens.size(), opts.window, opts.stride)) {
        const auto cs = tokens[w.start].start, ce = tokens[w.end - 1].end;
        const auto segment = text.substr(byte_at[cs], byte_at[ce] - byte_at[cs]);
        const auto reply = post_json(ep, "/predict", {{"text", segment}}, t.id);
        if (!reply.is_object() || !reply.contains("label") || !reply.contains("p_positive") ||
            !reply["label"].is_number_integer() || !reply["p_positive"].is_number())
            throw ProtocolViolation(t.id, "/predict reply needs 'label' and 'p_positive'");
        const int label = reply["label"].get<int>();
        const double p = reply["p_positive"].get<double>();
        if ((label != 0 && label != 1) || !(p >= 0.0 && p <= 1.0))
            throw ProtocolViolation(t.id, "/predict returned label/p_positive out of range");
        prov.segments.push_back({w.start, w.end, cs, ce, label, p});
        labels.push_back(label);
        probs.push_back(p);
    }
    const int label = aggregate_segments(labels, probs);
    return {t.id, ModelKind::Transformer, label, std::move(prov)};
}

}  // namespace narrclf
