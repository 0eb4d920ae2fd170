#pragma once

#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <json.hpp>

#include "narrclf/error.hpp"

namespace narrclf {

enum class ModelKind { Llm, Transformer, Svm };

inline constexpr std::string_view to_string(ModelKind k) {
    switch (k) {
        case ModelKind::Llm: return "llm";
        case ModelKind::Transformer: return "transformer";
        case ModelKind::Svm: return "svm";
    }
    return "?";
}

inline ModelKind model_kind_from_string(std::string_view s) {
    if (s == "llm") return ModelKind::Llm;
    if (s == "transformer") return ModelKind::Transformer;
    if (s == "svm") return ModelKind::Svm;
    throw ConfigError("unknown model '" + std::string(s) + "'");
}

struct LlmProvenance {
    std::string reply;
    std::string template_name;

    bool operator==(const LlmProvenance&) const = default;
};

struct SegmentResult {
    std::size_t token_start = 0, token_end = 0;
    std::size_t char_start = 0, char_end = 0;
    int label = 0;
    double p_positive = 0.0;

    bool operator==(const SegmentResult&) const = default;
};

struct SegmentProvenance {
    std::vector<SegmentResult> segments;

    bool operator==(const SegmentProvenance&) const = default;
};

struct SvmProvenance {
    double decision_value = 0.0;

    bool operator==(const SvmProvenance&) const = default;
};

using Provenance = std::variant<LlmProvenance, SegmentProvenance, SvmProvenance>;

struct ModelVote {
    std::string transcript_id;
    ModelKind model = ModelKind::Svm;
    int label = 0;
    Provenance provenance;

    bool operator==(const ModelVote&) const = default;
};

inline nlohmann::json to_json(const ModelVote& v) {
    nlohmann::json prov = std::visit(
        [](const auto& p) -> nlohmann::json {
            using P = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<P, LlmProvenance>) {
                return {{"reply", p.reply}, {"template", p.template_name}};
            } else if constexpr (std::is_same_v<P, SegmentProvenance>) {
                nlohmann::json segs = nlohmann::json::array();
                for (const auto& s : p.segments)
                    segs.push_back({{"tokens", {s.token_start, s.token_end}},
                                    {"chars", {s.char_start, s.char_end}},
                                    {"label", s.label},
                                    {"p_positive", s.p_positive}});
                return {{"segments", std::move(segs)}};
            } else {
                return {{"decision_value", p.decision_value}};
            }
        },
        v.provenance);
    return {{"id", v.transcript_id}, {"model", to_string(v.model)}, {"label", v.label}, {"provenance", std::move(prov)}};
}

inline ModelVote model_vote_from_json(const nlohmann::json& j) {
    try {
        ModelVote v;
        v.transcript_id = j.at("id").get<std::string>();
        v.model = model_kind_from_string(j.at("model").get<std::string>());
        v.label = j.at("label").get<int>();
        if (v.label != 0 && v.label != 1) throw ArtifactError("vote label must be 0 or 1");
        const auto& p = j.at("provenance");
        switch (v.model) {
            case ModelKind::Llm:
                v.provenance = LlmProvenance{p.at("reply").get<std::string>(), p.value("template", std::string())};
                break;
            case ModelKind::Transformer: {
                SegmentProvenance sp;
                for (const auto& s : p.at("segments"))
                    sp.segments.push_back({s.at("tokens").at(0).get<std::size_t>(), s.at("tokens").at(1).get<std::size_t>(),
                                           s.at("chars").at(0).get<std::size_t>(), s.at("chars").at(1).get<std::size_t>(),
                                           s.at("label").get<int>(), s.at("p_positive").get<double>()});
                v.provenance = std::move(sp);
                break;
            }
            case ModelKind::Svm:
                v.provenance = SvmProvenance{p.at("decision_value").get<double>()};
                break;
        }
        return v;
    } catch (const nlohmann::json::exception& e) {
        throw ArtifactError(std::string("malformed vote: ") + e.what());
    }
}

}  // namespace narrclf
