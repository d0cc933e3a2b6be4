#include "haptix/tokens.hpp"

#include <stdexcept>

namespace haptix {

std::string to_string(TokenizerKind kind) {
    return kind == TokenizerKind::frequency ? "freq" : "rvq";
}

TokenizerKind tokenizer_kind_from_string(const std::string& s) {
    if (s == "freq" || s == "frequency") {
        return TokenizerKind::frequency;
    }
    if (s == "rvq") {
        return TokenizerKind::rvq;
    }
    throw std::invalid_argument("unknown tokenizer: " + s);
}

} // namespace haptix
