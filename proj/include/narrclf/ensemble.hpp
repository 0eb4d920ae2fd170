#pragma once

// Unweighted majority vote over per-model binary predictions.

#include <algorithm>
#include <array>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "narrclf/error.hpp"
#include "narrclf/vote.hpp"

namespace narrclf {

// 1 iff a strict majority of the (odd number of) votes is 1.
inline int majority_vote(std::span<const int> votes) {
    if (votes.empty()) throw EmptyInput("no votes");
    if (votes.size() % 2 == 0) throw EvenVoteCount(std::to_string(votes.size()) + " votes");
    std::size_t positives = 0;
    for (int v : votes) {
        if (v != 0 && v != 1) throw InvalidArgument("votes must be 0 or 1");
        positives += static_cast<std::size_t>(v);
    }
    return positives >= (votes.size() + 1) / 2 ? 1 : 0;
}

inline int majority_vote(std::initializer_list<int> votes) {
    return majority_vote(std::span<const int>(votes.begin(), votes.size()));
}

struct EnsembleDecision {
    std::string transcript_id;
    std::vector<ModelVote> votes;  // ordered llm, transformer, svm
    int label = 0;
};

// strict: require exactly one vote from each of the three model kinds.
inline EnsembleDecision decide(std::vector<ModelVote> votes, bool strict = true) {
    if (votes.empty()) throw EmptyInput("no votes");
    std::array<bool, 3> present{};
    for (const auto& v : votes) {
        if (v.transcript_id != votes.front().transcript_id)
            throw MismatchedIds("'" + v.transcript_id + "' vs '" + votes.front().transcript_id + "'");
        auto& slot = present[static_cast<std::size_t>(v.model)];
        if (slot) throw DuplicateVote(std::string(to_string(v.model)) + " for '" + v.transcript_id + "'");
        slot = true;
    }
    if (strict) {
        for (auto k : {ModelKind::Llm, ModelKind::Transformer, ModelKind::Svm})
            if (!present[static_cast<std::size_t>(k)])
                throw MissingVote(std::string(to_string(k)) + " for '" + votes.front().transcript_id + "'");
    }
    std::sort(votes.begin(), votes.end(),
              [](const ModelVote& a, const ModelVote& b) { return a.model < b.model; });
    std::vector<int> labels;
    for (const auto& v : votes) labels.push_back(v.label);

    EnsembleDecision d;
    d.transcript_id = votes.front().transcript_id;
    d.label = majority_vote(labels);
    d.votes = std::move(votes);
    return d;
}

inline nlohmann::json to_json(const EnsembleDecision& d) {
    nlohmann::json votes = nlohmann::json::object();
    for (const auto& v : d.votes) votes[std::string(to_string(v.model))] = v.label;
    return {{"id", d.transcript_id}, {"label", d.label}, {"votes", std::move(votes)}};
}

}  // namespace narrclf
