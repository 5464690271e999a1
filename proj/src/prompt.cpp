#include "ficl/prompt.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace ficl {

namespace {
constexpr const char* kDefaultTemplate = "### Human: {q}\n\n### Assistant: {r}\n\n";
} // namespace

PromptTemplate PromptTemplate::default_template() {
    return from_string(kDefaultTemplate);
}

PromptTemplate PromptTemplate::from_string(std::string demo_form) {
    const size_t q = demo_form.find("{q}");
    if (q == std::string::npos) {
        throw std::invalid_argument("prompt template: missing {q} placeholder");
    }
    const size_t r = demo_form.find("{r}", q + 3);
    if (r == std::string::npos) {
        throw std::invalid_argument("prompt template: missing {r} placeholder after {q}");
    }
    PromptTemplate tpl;
    tpl.demo_form_ = std::move(demo_form);
    tpl.prefix_ = tpl.demo_form_.substr(0, q);
    tpl.mid_ = tpl.demo_form_.substr(q + 3, r - (q + 3));
    tpl.suffix_ = tpl.demo_form_.substr(r + 3);
    tpl.final_mid_ = tpl.mid_;
    while (!tpl.final_mid_.empty() && tpl.final_mid_.back() == ' ') {
        tpl.final_mid_.pop_back();
    }
    return tpl;
}

PromptTemplate PromptTemplate::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::runtime_error("prompt template: cannot open " + path);
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return from_string(ss.str());
}

std::string PromptTemplate::render_demo(const Demo& demo) const {
    return prefix_ + demo.query + mid_ + demo.response + suffix_;
}

std::string PromptTemplate::render_final(const std::string& query) const {
    return prefix_ + query + final_mid_;
}

namespace {

void push_text(PromptLayout& layout, std::string_view text, SegmentLabel label,
               const CharVocab& vocab) {
    for (char c : text) {
        layout.tokens.push_back(Token{vocab.id(c)});
        layout.labels.push_back(label);
        layout.positions.push_back(static_cast<int>(layout.positions.size()));
    }
    layout.text.append(text);
}

PromptLayout assemble(const std::vector<Demo>& demos, const std::string* final_query,
                      const PromptTemplate& tpl, const CharVocab& vocab) {
    PromptLayout layout;
    layout.demo_count = static_cast<int>(demos.size());
    for (size_t i = 0; i < demos.size(); ++i) {
        const int ord = static_cast<int>(i) + 1;
        TokenSpan demo_span{layout.size(), 0};
        // template scaffolding inherits the label of the content it introduces
        push_text(layout, tpl.prefix(), {SegKind::DemoQuery, ord}, vocab);
        push_text(layout, demos[i].query, {SegKind::DemoQuery, ord}, vocab);
        push_text(layout, tpl.mid(), {SegKind::DemoResponse, ord}, vocab);
        TokenSpan resp_span{layout.size(), 0};
        push_text(layout, demos[i].response, {SegKind::DemoResponse, ord}, vocab);
        resp_span.end = layout.size();
        push_text(layout, tpl.suffix(), {SegKind::DemoResponse, ord}, vocab);
        demo_span.end = layout.size();
        layout.demo_spans.push_back(demo_span);
        layout.response_spans.push_back(resp_span);
    }
    if (final_query != nullptr) {
        TokenSpan span{layout.size(), 0};
        push_text(layout, tpl.prefix(), {SegKind::FinalQuery, 0}, vocab);
        push_text(layout, *final_query, {SegKind::FinalQuery, 0}, vocab);
        push_text(layout, tpl.final_mid(), {SegKind::FinalQuery, 0}, vocab);
        span.end = layout.size();
        layout.final_query_span = span;
    } else {
        layout.final_query_span = {layout.size(), layout.size()};
    }
    return layout;
}

} // namespace

PromptLayout assemble_icl(const std::vector<Demo>& demos, const std::string& final_query,
                          const PromptTemplate& tpl, const CharVocab& vocab) {
    return assemble(demos, &final_query, tpl, vocab);
}

PromptLayout assemble_demos_only(const std::vector<Demo>& demos,
                                 const PromptTemplate& tpl, const CharVocab& vocab) {
    if (demos.empty()) {
        throw std::invalid_argument("assemble_demos_only: need at least one demonstration");
    }
    return assemble(demos, nullptr, tpl, vocab);
}

void append_response_text(PromptLayout& layout, std::string_view text, const CharVocab& vocab) {
    for (char c : text) {
        append_response_token(layout, Token{vocab.id(c)});
        layout.text.push_back(c);
    }
}

void append_response_token(PromptLayout& layout, Token t) {
    layout.tokens.push_back(t);
    layout.labels.push_back({SegKind::GeneratedResponse, 0});
    layout.positions.push_back(static_cast<int>(layout.positions.size()));
}

std::vector<Demo> pad_with_spaces(std::vector<Demo> demos, int k) {
    if (k < 0) {
        throw std::invalid_argument("pad_with_spaces: k must be non-negative");
    }
    for (auto& d : demos) {
        d.response.append(static_cast<size_t>(k), ' ');
    }
    return demos;
}

} // namespace ficl
