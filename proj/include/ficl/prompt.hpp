#pragma once

#include "ficl/vocab.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace ficl {

enum class SegKind : uint8_t {
    DemoQuery,
    DemoResponse,
    FinalQuery,
    GeneratedResponse,
};

// demo is the 1-based demonstration ordinal; 0 for query-side tokens
struct SegmentLabel {
    SegKind kind = SegKind::FinalQuery;
    int demo = 0;
    bool operator==(const SegmentLabel&) const = default;
};

inline bool is_demo_label(const SegmentLabel& l) {
    return l.kind == SegKind::DemoQuery || l.kind == SegKind::DemoResponse;
}

inline bool is_response_label(const SegmentLabel& l) {
    return l.kind == SegKind::DemoResponse || l.kind == SegKind::GeneratedResponse;
}

struct Demo {
    std::string query;
    std::string response;
    bool operator==(const Demo&) const = default;
};

// Prompt template with literal {q}/{r} placeholders. One string defines both
// forms: a demonstration renders the full template, the final query renders
// the part before {r} with trailing spaces stripped, e.g. the default
//   "### Human: {q}\n\n### Assistant: {r}\n\n"
// renders a final query as "### Human: {q}\n\n### Assistant:".
class PromptTemplate {
public:
    static PromptTemplate default_template();
    static PromptTemplate from_string(std::string demo_form);
    // file bytes used verbatim (no trimming)
    static PromptTemplate load(const std::string& path);

    std::string render_demo(const Demo& demo) const;
    std::string render_final(const std::string& query) const;

    const std::string& demo_form() const { return demo_form_; }
    // pieces around the placeholders: prefix {q} mid {r} suffix
    const std::string& prefix() const { return prefix_; }
    const std::string& mid() const { return mid_; }
    const std::string& suffix() const { return suffix_; }
    const std::string& final_mid() const { return final_mid_; }

private:
    std::string demo_form_;
    std::string prefix_;
    std::string mid_;
    std::string suffix_;
    std::string final_mid_; // mid with trailing spaces stripped
};

struct TokenSpan {
    int begin = 0;
    int end = 0; // half-open
    int size() const { return end - begin; }
    bool empty() const { return end <= begin; }
    bool operator==(const TokenSpan&) const = default;
};

// Token sequence with parallel segment labels and position indices. Under the
// flat (non-hierarchical) layout positions are simply 0,1,2,...
struct PromptLayout {
    std::vector<Token> tokens;
    std::vector<SegmentLabel> labels;
    std::vector<int> positions;

    int demo_count = 0;
    std::vector<TokenSpan> demo_spans;     // whole segment of demo i (index i-1)
    std::vector<TokenSpan> response_spans; // rendered {r} content of demo i
    TokenSpan final_query_span;            // empty when assembled demos-only
    std::string text;

    int size() const { return static_cast<int>(tokens.size()); }
};

PromptLayout assemble_icl(const std::vector<Demo>& demos, const std::string& final_query,
                          const PromptTemplate& tpl, const CharVocab& vocab);

// Demonstrations only, no trailing query block (perplexity scans over
// demonstration responses use this form).
PromptLayout assemble_demos_only(const std::vector<Demo>& demos,
                                 const PromptTemplate& tpl, const CharVocab& vocab);

// Appends GeneratedResponse-labeled tokens (teacher forcing / generation).
void append_response_text(PromptLayout& layout, std::string_view text, const CharVocab& vocab);
void append_response_token(PromptLayout& layout, Token t);

// Adds k trailing spaces to every demonstration response; k = 0 is identity.
std::vector<Demo> pad_with_spaces(std::vector<Demo> demos, int k);

} // namespace ficl
