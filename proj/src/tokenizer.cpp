#include "mhx/tokenizer.hpp"

#include <cctype>

namespace mhx {

namespace {

inline bool is_alnum(unsigned char c) { return std::isalnum(c) != 0; }
inline bool is_space(unsigned char c) { return std::isspace(c) != 0; }

void scan(std::string_view text, bool recognize_mask, std::vector<std::string>& out) {
    std::size_t i = 0;
    const std::size_t n = text.size();
    while (i < n) {
        const unsigned char c = static_cast<unsigned char>(text[i]);
        if (is_space(c)) {
            ++i;
            continue;
        }
        if (recognize_mask && text.compare(i, kMaskToken.size(), kMaskToken) == 0) {
            out.emplace_back(kMaskToken);
            i += kMaskToken.size();
            continue;
        }
        if (is_alnum(c)) {
            std::size_t start = i;
            while (i < n && is_alnum(static_cast<unsigned char>(text[i]))) ++i;
            std::string tok(text.substr(start, i - start));
            for (char& ch : tok) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
            out.push_back(std::move(tok));
        } else {
            out.emplace_back(1, text[i]);
            ++i;
        }
    }
}

} // namespace

std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> out;
    scan(text, false, out);
    return out;
}

std::vector<std::string> tokenize_template(std::string_view text) {
    std::vector<std::string> out;
    scan(text, true, out);
    return out;
}

std::size_t count_tokens(std::string_view text) { return tokenize(text).size(); }

} // namespace mhx
