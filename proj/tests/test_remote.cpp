#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "narrclf/remote.hpp"
#include "narrclf/testing/mock_servers.hpp"

using namespace narrclf;
using narrclf::testing::FailurePlan;
using narrclf::testing::MockLlmServer;
using narrclf::testing::MockServer;
using narrclf::testing::MockTransformerServer;

namespace {

Transcript make(std::string id, std::vector<Turn> turns, std::optional<int> label = std::nullopt) {
    return Transcript{std::move(id), std::move(turns), label};
}

// Participant text of exactly `n` whitespace tokens; token k is "w<k>" unless
// listed in `special`.
Transcript tokens_transcript(std::size_t n, const std::map<std::size_t, std::string>& special = {}) {
    std::string text;
    for (std::size_t k = 0; k < n; ++k) {
        if (k) text += ' ';
        auto it = special.find(k);
        text += it != special.end() ? it->second : "w" + std::to_string(k);
    }
    return make("long", {{Speaker::Interviewer, "tell me"}, {Speaker::Participant, text}});
}

RemoteEndpoint endpoint(const MockServer& s) {
    RemoteEndpoint ep;
    ep.base_url = s.base_url();
    ep.timeout = std::chrono::milliseconds(2000);
    ep.backoff = std::chrono::milliseconds(5);
    return ep;
}

}  // namespace

TEST(Prompt, SubstitutesTranscript) {
    const PromptTemplate tmpl("t", "Q: {{transcript}}");
    const auto t = make("a", {{Speaker::Participant, "hi"}});
    EXPECT_EQ(build_prompt(tmpl, t), "Q: PARTICIPANT: hi");

    const auto both = make("b", {{Speaker::Interviewer, "what happened?"}, {Speaker::Participant, "he ran"}});
    EXPECT_EQ(build_prompt(tmpl, both), "Q: INTERVIEWER: what happened?\nPARTICIPANT: he ran");
    EXPECT_EQ(build_prompt(tmpl, both, true), "Q: PARTICIPANT: he ran");
}

TEST(Prompt, TemplateNeedsExactlyOnePlaceholder) {
    EXPECT_THROW(PromptTemplate("t", "no slot"), TemplateError);
    EXPECT_THROW(PromptTemplate("t", "{{transcript}} {{transcript}}"), TemplateError);
    EXPECT_NO_THROW(PromptTemplate("t", "x {{transcript}} y"));
}

TEST(Prompt, DefaultTemplateContent) {
    const auto tmpl = PromptTemplate::default_template();
    EXPECT_EQ(tmpl.name(), "default-v1");
    const auto& text = tmpl.text();
    EXPECT_NE(text.find("DSM-5"), std::string::npos);
    EXPECT_NE(text.find("YES."), std::string::npos);
    EXPECT_NE(text.find("NO."), std::string::npos);
    EXPECT_NE(text.find("{{transcript}}"), std::string::npos);
}

TEST(Prompt, LoadFromFile) {
    const auto path = std::filesystem::temp_directory_path() / "narrclf_prompt_test.txt";
    {
        std::ofstream(path) << "Judge: {{transcript}}\n";
    }
    const auto tmpl = PromptTemplate::load(path.string(), "mine");
    EXPECT_EQ(tmpl.name(), "mine");
    EXPECT_EQ(build_prompt(tmpl, make("a", {{Speaker::Participant, "x"}})), "Judge: PARTICIPANT: x\n");
    std::filesystem::remove(path);
    EXPECT_THROW(PromptTemplate::load(path.string()), ConfigError);
}

TEST(Prompt, TooLongIsRejected) {
    const auto t = make("big", {{Speaker::Participant, std::string(30000, 'a')}});
    EXPECT_THROW(build_prompt(PromptTemplate::default_template(), t), PromptTooLong);
    EXPECT_NO_THROW(build_prompt(PromptTemplate::default_template(), t, false, 20000));
}

TEST(LlmReply, Examples) {
    EXPECT_EQ(parse_llm_reply("YES."), 1);
    EXPECT_EQ(parse_llm_reply("  no, because the story is coherent"), 0);
    EXPECT_EQ(parse_llm_reply("Yes"), 1);
    EXPECT_EQ(parse_llm_reply("\n**NO**"), 0);
    EXPECT_THROW(parse_llm_reply("Maybe"), UnparseableVerdict);
    EXPECT_THROW(parse_llm_reply("YESNO"), UnparseableVerdict);
    EXPECT_THROW(parse_llm_reply("Nope"), UnparseableVerdict);
    EXPECT_THROW(parse_llm_reply(""), UnparseableVerdict);
    try {
        parse_llm_reply("I think yes", "t-7");
        FAIL();
    } catch (const UnparseableVerdict& e) {
        EXPECT_EQ(e.transcript_id(), "t-7");
        EXPECT_EQ(e.raw(), "I think yes");
    }
}

TEST(LlmReply, RoundTripWithArbitrarySuffix) {
    auto rng = make_rng(99);
    const std::string alphabet = " .,;:!?\n0123456789abcXYZ";
    for (int i = 0; i < 500; ++i) {
        std::string suffix;
        // the suffix must not begin with a letter or it would extend the word
        suffix += " .,!\n"[uniform_index(rng, 5)];
        const auto len = uniform_index(rng, 40);
        for (std::size_t k = 0; k < len; ++k) suffix += alphabet[uniform_index(rng, alphabet.size())];
        std::string lead(uniform_index(rng, 4), ' ');
        EXPECT_EQ(parse_llm_reply(lead + "YES" + suffix), 1);
        EXPECT_EQ(parse_llm_reply(lead + "no" + suffix), 0);
    }
}

TEST(LlmClient, MockVerdictsAndProvenance) {
    MockLlmServer server;
    server.start();
    const auto ep = endpoint(server);
    const auto yes = make("p1", {{Speaker::Interviewer, "and then?"}, {Speaker::Participant, "um like I forgot"}});
    const auto no = make("n1", {{Speaker::Interviewer, "I don't know"}, {Speaker::Participant, "and then he left"}});
    const auto v1 = classify_llm(yes, ep, PromptTemplate::default_template());
    EXPECT_EQ(v1.label, 1);
    EXPECT_EQ(v1.model, ModelKind::Llm);
    EXPECT_EQ(std::get<LlmProvenance>(v1.provenance).template_name, "default-v1");
    EXPECT_EQ(std::get<LlmProvenance>(v1.provenance).reply.substr(0, 4), "YES.");
    // interviewer markers do not count
    EXPECT_EQ(classify_llm(no, ep, PromptTemplate::default_template()).label, 0);
    EXPECT_EQ(server.count("/generate"), 2u);
}

TEST(LlmClient, RetriesAfterTimeouts) {
    MockLlmServer server;
    server.start();
    server.set_failure({FailurePlan::Mode::Delay, 2, std::chrono::milliseconds(400)});
    auto ep = endpoint(server);
    ep.timeout = std::chrono::milliseconds(100);
    ep.retries = 2;
    const auto t = make("n", {{Speaker::Participant, "he went to the store"}});
    EXPECT_EQ(classify_llm(t, ep, PromptTemplate::default_template()).label, 0);
    EXPECT_EQ(server.count("/generate"), 3u);
}

TEST(LlmClient, PersistentFailureCarriesId) {
    MockLlmServer server;
    server.start();
    server.set_failure({FailurePlan::Mode::Http500, SIZE_MAX, {}});
    auto ep = endpoint(server);
    ep.retries = 1;
    const auto t = make("t-42", {{Speaker::Participant, "x"}});
    try {
        classify_llm(t, ep, PromptTemplate::default_template());
        FAIL();
    } catch (const TransportError& e) {
        EXPECT_EQ(e.transcript_id(), "t-42");
    }
    EXPECT_EQ(server.count("/generate"), 2u);
}

TEST(LlmClient, UnparseableReplyIsAnError) {
    MockLlmServer server;
    server.reply = [](const std::string&) { return "Perhaps."; };
    server.start();
    const auto t = make("u", {{Speaker::Participant, "x"}});
    EXPECT_THROW(classify_llm(t, endpoint(server), PromptTemplate::default_template()), UnparseableVerdict);
}

TEST(LlmClient, OneRequestPerTranscript) {
    MockLlmServer server;
    server.start();
    const auto data = generate_synthetic(40, 0.5, 3);
    auto ep = endpoint(server);
    const auto votes = classify_all(data, 4, [&](const Transcript& t) {
        return classify_llm(t, ep, PromptTemplate::default_template());
    });
    ASSERT_EQ(votes.size(), data.size());
    EXPECT_EQ(server.count("/generate"), data.size());
    for (std::size_t i = 1; i < votes.size(); ++i) EXPECT_LT(votes[i - 1].transcript_id, votes[i].transcript_id);
}

TEST(LlmClient, UnreachableEndpoint) {
    RemoteEndpoint ep;
    ep.base_url = "http://127.0.0.1:1";
    ep.timeout = std::chrono::milliseconds(200);
    ep.retries = 0;
    EXPECT_THROW(classify_llm(make("x", {{Speaker::Participant, "a"}}), ep, PromptTemplate::default_template()),
                 TransportError);
    EXPECT_FALSE(healthz(ep));
}

TEST(Windows, Examples) {
    EXPECT_EQ(plan_windows(100), (std::vector<TokenWindow>{{0, 100}}));
    EXPECT_EQ(plan_windows(512), (std::vector<TokenWindow>{{0, 512}}));
    EXPECT_EQ(plan_windows(513), (std::vector<TokenWindow>{{0, 512}, {256, 513}}));
    EXPECT_EQ(plan_windows(1000), (std::vector<TokenWindow>{{0, 512}, {256, 768}, {512, 1000}}));
    EXPECT_EQ(plan_windows(1300),
              (std::vector<TokenWindow>{{0, 512}, {256, 768}, {512, 1024}, {768, 1280}, {1024, 1300}}));
    EXPECT_TRUE(plan_windows(0).empty());
    EXPECT_THROW(plan_windows(10, 4, 5), InvalidArgument);
    EXPECT_THROW(plan_windows(10, 0, 0), InvalidArgument);
}

TEST(Windows, CoverageProperties) {
    auto rng = make_rng(1);
    for (int i = 0; i < 1000; ++i) {
        const auto window = 1 + uniform_index(rng, 600);
        const auto stride = 1 + uniform_index(rng, window);
        const auto n = 1 + uniform_index(rng, 3000);
        const auto ws = plan_windows(n, window, stride);
        ASSERT_FALSE(ws.empty());
        EXPECT_EQ(ws.front().start, 0u);
        EXPECT_EQ(ws.back().end, n);
        for (std::size_t k = 0; k < ws.size(); ++k) {
            EXPECT_LT(ws[k].start, ws[k].end);
            EXPECT_LE(ws[k].end - ws[k].start, window);
            EXPECT_EQ(ws[k].start, k * stride);
            if (k + 1 < ws.size()) {
                EXPECT_EQ(ws[k].end - ws[k].start, window);
                EXPECT_LE(ws[k + 1].start, ws[k].end);  // no gaps
            }
        }
        const auto expected = n <= window ? 1 : 1 + (n - window + stride - 1) / stride;
        EXPECT_EQ(ws.size(), expected);
    }
}

TEST(Segments, AggregationExamples) {
    EXPECT_EQ(aggregate_segments(std::vector<int>{1}), 1);
    EXPECT_EQ(aggregate_segments(std::vector<int>{0}), 0);
    EXPECT_EQ(aggregate_segments(std::vector<int>{1, 1, 0}), 1);
    EXPECT_EQ(aggregate_segments(std::vector<int>{0, 0, 1}), 0);
    EXPECT_EQ(aggregate_segments(std::vector<int>{1, 0}, std::vector<double>{0.9, 0.2}), 1);
    EXPECT_EQ(aggregate_segments(std::vector<int>{1, 0}, std::vector<double>{0.6, 0.3}), 0);
    EXPECT_EQ(aggregate_segments(std::vector<int>{1, 0}, std::vector<double>{0.5, 0.5}), 1);
    EXPECT_EQ(aggregate_segments(std::vector<int>{1, 0}), 1);
    EXPECT_THROW(aggregate_segments(std::vector<int>{}), EmptyInput);
    EXPECT_THROW(aggregate_segments(std::vector<int>{1, 0}, std::vector<double>{0.5}), LengthMismatch);
}

TEST(Segments, PermutationInvariant) {
    auto rng = make_rng(17);
    for (int i = 0; i < 300; ++i) {
        const auto n = 1 + uniform_index(rng, 9);
        std::vector<std::pair<int, double>> segs;
        for (std::size_t k = 0; k < n; ++k) {
            const double p = uniform_real(rng);
            segs.push_back({p >= 0.5 ? 1 : 0, p});
        }
        auto split = [](const auto& s) {
            std::vector<int> l;
            std::vector<double> p;
            for (auto [a, b] : s) {
                l.push_back(a);
                p.push_back(b);
            }
            return std::pair{l, p};
        };
        const auto [l0, p0] = split(segs);
        const int expected = aggregate_segments(l0, p0);
        shuffle_in_place(segs, rng);
        const auto [l1, p1] = split(segs);
        EXPECT_EQ(aggregate_segments(l1, p1), expected);
    }
}

TEST(Tokens, WhitespaceSpansUseCodePoints) {
    const auto spans = whitespace_token_spans("  h\xC3\xA9 llo\tw\n");
    ASSERT_EQ(spans.size(), 3u);
    EXPECT_EQ(spans[0].start, 2u);
    EXPECT_EQ(spans[0].end, 4u);
    EXPECT_EQ(spans[1].start, 5u);
    EXPECT_EQ(spans[1].end, 8u);
    EXPECT_EQ(spans[2].start, 9u);
    EXPECT_EQ(spans[2].end, 10u);
}

TEST(TransformerClient, ShortTranscriptIsOneSegment) {
    MockTransformerServer server;
    server.start();
    const auto t = tokens_transcript(40);
    const auto v = classify_transformer(t, endpoint(server));
    const auto& prov = std::get<SegmentProvenance>(v.provenance);
    ASSERT_EQ(prov.segments.size(), 1u);
    EXPECT_EQ(prov.segments[0].token_start, 0u);
    EXPECT_EQ(prov.segments[0].token_end, 40u);
    EXPECT_EQ(server.count("/tokenize"), 1u);
    EXPECT_EQ(server.count("/predict"), 1u);
}

TEST(TransformerClient, ThreeSegmentsMajority) {
    MockTransformerServer server;
    server.score = [](const std::string& text) { return text.find("zzz") != std::string::npos ? 0.9 : 0.1; };
    server.start();
    // token 300 lies in windows [0,512) and [256,768) but not [512,1000)
    const auto t = tokens_transcript(1000, {{300, "zzz"}});
    const auto v = classify_transformer(t, endpoint(server));
    const auto& prov = std::get<SegmentProvenance>(v.provenance);
    ASSERT_EQ(prov.segments.size(), 3u);
    EXPECT_EQ(prov.segments[0].label, 1);
    EXPECT_EQ(prov.segments[1].label, 1);
    EXPECT_EQ(prov.segments[2].label, 0);
    EXPECT_EQ(v.label, 1);
    EXPECT_EQ(server.count("/predict"), 3u);
}

TEST(TransformerClient, TieUsesMeanProbability) {
    for (auto [low, expected] : {std::pair{0.2, 1}, std::pair{0.05, 0}}) {
        MockTransformerServer server;
        server.score = [low](const std::string& text) { return text.find("zzz") != std::string::npos ? 0.9 : low; };
        server.start();
        const auto t = tokens_transcript(700, {{100, "zzz"}});
        const auto v = classify_transformer(t, endpoint(server));
        ASSERT_EQ(std::get<SegmentProvenance>(v.provenance).segments.size(), 2u);
        EXPECT_EQ(v.label, expected);
    }
}

TEST(TransformerClient, SegmentsSentVerbatimWithMultibyteText) {
    MockTransformerServer server;
    server.start();
    auto t = tokens_transcript(600, {{0, "caf\xC3\xA9"}, {599, "\xE2\x80\x9C" "end\xE2\x80\x9D"}});
    const auto v = classify_transformer(t, endpoint(server));
    const auto& prov = std::get<SegmentProvenance>(v.provenance);
    ASSERT_EQ(prov.segments.size(), 2u);
    const auto reqs = server.requests();
    std::vector<std::string> segments;
    for (const auto& r : reqs)
        if (r.path == "/predict") segments.push_back(nlohmann::json::parse(r.body)["text"].get<std::string>());
    ASSERT_EQ(segments.size(), 2u);
    EXPECT_EQ(segments[0].substr(0, 5), "caf\xC3\xA9");
    EXPECT_EQ(segments[1].substr(segments[1].size() - 9), "\xE2\x80\x9C" "end\xE2\x80\x9D");
    EXPECT_EQ(whitespace_token_spans(segments[0]).size(), 512u);
    EXPECT_EQ(whitespace_token_spans(segments[1]).size(), 600u - 256u);
}

namespace {

class BadTokenizer : public MockServer {
public:
    nlohmann::json tokens;

    ~BadTokenizer() override { stop(); }

protected:
    void install_routes(httplib::Server& server) override {
        server.Post("/tokenize", [this](const httplib::Request& req, httplib::Response& res) {
            if (!admit(req, res)) return;
            res.set_content(nlohmann::json{{"tokens", tokens}}.dump(), "application/json");
        });
        server.Post("/predict", [this](const httplib::Request& req, httplib::Response& res) {
            if (!admit(req, res)) return;
            res.set_content(R"({"label":1,"p_positive":0.7})", "application/json");
        });
    }
};

}  // namespace

TEST(TransformerClient, RejectsBadTokenizerReplies) {
    const auto t = make("bad", {{Speaker::Participant, "one two three"}});
    auto check = [&](nlohmann::json tokens) {
        BadTokenizer server;
        server.tokens = std::move(tokens);
        server.start();
        return classify_transformer(t, endpoint(server));
    };
    EXPECT_EQ(check(nlohmann::json::parse(R"([{"start":0,"end":3},{"start":4,"end":7}])")).label, 1);
    EXPECT_THROW(check(nlohmann::json::parse(R"([{"start":4,"end":7},{"start":0,"end":3}])")), ProtocolViolation);
    EXPECT_THROW(check(nlohmann::json::parse(R"([{"start":0,"end":99}])")), ProtocolViolation);
    EXPECT_THROW(check(nlohmann::json::parse(R"([{"start":2,"end":2}])")), ProtocolViolation);
    EXPECT_THROW(check(nlohmann::json::parse(R"([{"start":-1,"end":2}])")), ProtocolViolation);
    EXPECT_THROW(check(nlohmann::json::parse(R"(7)")), ProtocolViolation);
    EXPECT_THROW(check(nlohmann::json::array()), EmptyInput);
}

TEST(TransformerClient, PlainTokenizationSkipsTokenize) {
    MockTransformerServer server;
    server.start();
    TransformerOptions opts;
    opts.tokenization = TokenizationMode::Plain;
    const auto v = classify_transformer(tokens_transcript(30), endpoint(server), opts);
    EXPECT_EQ(std::get<SegmentProvenance>(v.provenance).segments.size(), 1u);
    EXPECT_EQ(server.count("/tokenize"), 0u);
    EXPECT_EQ(server.count("/predict"), 1u);
}

TEST(TransformerClient, MockRejectsOversizedSegments) {
    MockTransformerServer server;
    server.start();
    TransformerOptions opts;
    opts.window = 600;
    opts.stride = 300;
    EXPECT_THROW(classify_transformer(tokens_transcript(700), endpoint(server), opts), TransportError);
}
