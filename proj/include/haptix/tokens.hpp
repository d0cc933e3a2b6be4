#pragma once

#include <string>
#include <vector>

namespace haptix {

enum class TokenizerKind { frequency, rvq };

// "freq" / "rvq"; also used as the registration tag in the vocabulary.
std::string to_string(TokenizerKind kind);
TokenizerKind tokenizer_kind_from_string(const std::string& s);

// Output of a haptic tokenizer. Ids are local to the source tokenizer's
// vocabulary; the prompt vocabulary offsets them into the shared id space.
struct HapticTokenSequence {
    TokenizerKind source = TokenizerKind::frequency;
    std::vector<int> ids;

    bool operator==(const HapticTokenSequence&) const = default;
};

} // namespace haptix
