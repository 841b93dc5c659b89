#include "mhx/segmenter.hpp"

#include <cctype>

namespace mhx {

std::string normalize_whitespace(std::string_view text) {
    std::string out(text);
    for (char& c : out) {
        if (std::isspace(static_cast<unsigned char>(c)) && c != ' ') c = ' ';
    }
    return out;
}

std::vector<Segment> segment_note(std::string_view raw) {
    const std::string text = normalize_whitespace(raw);
    std::vector<Segment> out;
    const std::size_t n = text.size();
    std::size_t pos = 0;
    while (pos < n) {
        while (pos < n && text[pos] == ' ') ++pos;
        if (pos >= n) break;
        const std::size_t start = pos;
        std::size_t end = pos;  // one past the last non-space seen
        std::size_t cursor = pos;
        while (cursor < n) {
            if (text[cursor] != ' ') {
                ++cursor;
                end = cursor;
                continue;
            }
            std::size_t run = cursor;
            while (run < n && text[run] == ' ') ++run;
            if (run - cursor >= 2) break;  // delimiter run
            cursor = run;
        }
        out.push_back(Segment{text.substr(start, end - start), start, out.size()});
        pos = end;
    }
    return out;
}

} // namespace mhx
