#ifndef DOCDEFEND_TOKENIZER_HPP
#define DOCDEFEND_TOKENIZER_HPP

#include <string>
#include <unordered_map>
#include <vector>

namespace docdefend {

// Word-level tokenizer for the tiny local model. Whitespace split with
// punctuation peeled into separate tokens; internal apostrophes and hyphens
// stay inside the word, so contractions survive round trips.

std::vector<std::string> WordTokenize(const std::string& text);
std::string Detokenize(const std::vector<std::string>& tokens);

class Vocab {
public:
    static constexpr int kUnk = 0;
    static constexpr int kBos = 1;
    static constexpr int kSep = 2;
    static constexpr int kEos = 3;

    Vocab();
    explicit Vocab(std::vector<std::string> tokens);  // without the specials

    // First-appearance order, capped at max_size non-special entries.
    static Vocab Build(const std::vector<std::string>& texts, size_t max_size);

    int size() const { return static_cast<int>(id_to_token_.size()); }
    int IdOf(const std::string& token) const;  // kUnk when absent
    const std::string& TokenOf(int id) const;

    std::vector<int> Encode(const std::string& text) const;
    std::string Decode(const std::vector<int>& ids) const;  // skips specials

    const std::vector<std::string>& tokens() const { return id_to_token_; }

private:
    std::vector<std::string> id_to_token_;
    std::unordered_map<std::string, int> token_to_id_;
};

}  // namespace docdefend

#endif  // DOCDEFEND_TOKENIZER_HPP
