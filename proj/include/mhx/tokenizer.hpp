#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace mhx {

/// Reserved tokens. [MASK] is never produced from raw text; only template
/// tokenization injects it.
inline constexpr std::string_view kMaskToken = "[MASK]";
inline constexpr std::string_view kOovToken = "[OOV]";

/// Pipeline tokenizer: lowercase; a token is a maximal run of alphanumerics
/// or a single punctuation character. Whitespace separates tokens.
std::vector<std::string> tokenize(std::string_view text);

/// Template tokenizer: same rule, but each literal "[MASK]" in the input
/// becomes the reserved mask token.
std::vector<std::string> tokenize_template(std::string_view text);

std::size_t count_tokens(std::string_view text);

} // namespace mhx
