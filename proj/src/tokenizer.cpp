#include "docdefend/tokenizer.hpp"

#include <algorithm>

#include "docdefend/common.hpp"

namespace docdefend {

namespace {

bool IsOpener(char c) { return c == '(' || c == '[' || c == '{'; }
bool IsCloser(char c) {
    switch (c) {
        case ')': case ']': case '}':
        case '.': case ',': case '!': case '?': case ';': case ':':
            return true;
        default:
            return false;
    }
}
bool IsQuote(char c) { return c == '"'; }

}  // namespace

std::vector<std::string> WordTokenize(const std::string& text) {
    std::vector<std::string> tokens;
    for (const auto& unit : SplitWhitespace(text)) {
        size_t begin = 0, end = unit.size();
        std::vector<std::string> leading, trailing;
        while (begin < end && (IsOpener(unit[begin]) || IsQuote(unit[begin]))) {
            leading.emplace_back(1, unit[begin]);
            ++begin;
        }
        while (end > begin && (IsCloser(unit[end - 1]) || IsQuote(unit[end - 1]))) {
            trailing.emplace_back(1, unit[end - 1]);
            --end;
        }
        for (auto& t : leading) tokens.push_back(std::move(t));
        if (end > begin) tokens.push_back(unit.substr(begin, end - begin));
        std::reverse(trailing.begin(), trailing.end());
        for (auto& t : trailing) tokens.push_back(std::move(t));
    }
    return tokens;
}

std::string Detokenize(const std::vector<std::string>& tokens) {
    std::string out;
    bool suppress_space = false;
    for (const auto& token : tokens) {
        bool closer = token.size() == 1 && IsCloser(token[0]);
        bool opener = token.size() == 1 && IsOpener(token[0]);
        if (!out.empty() && !closer && !suppress_space) out += ' ';
        out += token;
        suppress_space = opener;
    }
    return out;
}

Vocab::Vocab() : Vocab(std::vector<std::string>{}) {}

Vocab::Vocab(std::vector<std::string> tokens) {
    id_to_token_ = {"<unk>", "<bos>", "<sep>", "<eos>"};
    for (auto& token : tokens) id_to_token_.push_back(std::move(token));
    for (size_t i = 0; i < id_to_token_.size(); ++i) {
        token_to_id_[id_to_token_[i]] = static_cast<int>(i);
    }
    if (token_to_id_.size() != id_to_token_.size()) {
        ThrowValidation("vocab contains duplicate tokens");
    }
}

Vocab Vocab::Build(const std::vector<std::string>& texts, size_t max_size) {
    std::vector<std::string> tokens;
    std::unordered_map<std::string, bool> seen;
    for (const auto& text : texts) {
        for (auto& token : WordTokenize(text)) {
            if (tokens.size() >= max_size) break;
            if (seen.emplace(token, true).second) tokens.push_back(std::move(token));
        }
    }
    return Vocab(std::move(tokens));
}

int Vocab::IdOf(const std::string& token) const {
    auto it = token_to_id_.find(token);
    return it == token_to_id_.end() ? kUnk : it->second;
}

const std::string& Vocab::TokenOf(int id) const {
    if (id < 0 || id >= size()) ThrowValidation("token id out of range: " + std::to_string(id));
    return id_to_token_[static_cast<size_t>(id)];
}

std::vector<int> Vocab::Encode(const std::string& text) const {
    std::vector<int> ids;
    for (const auto& token : WordTokenize(text)) ids.push_back(IdOf(token));
    return ids;
}

std::string Vocab::Decode(const std::vector<int>& ids) const {
    std::vector<std::string> tokens;
    for (int id : ids) {
        if (id > kEos) tokens.push_back(TokenOf(id));
    }
    return Detokenize(tokens);
}

}  // namespace docdefend
