#pragma once

#include "haptix/tokens.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace haptix {

struct FreqTokenizerConfig;
struct RvqConfig;

enum class TokenClass { text, special, haptic };

enum class Category { sensory, emotional, associative };

constexpr Category kAllCategories[] = {Category::sensory, Category::emotional, Category::associative};

std::string to_string(Category c);
Category category_from_string(const std::string& s);

// Symbol table of one haptic tokenizer, in local-id order.
struct TokenizerSpec {
    TokenizerKind kind = TokenizerKind::frequency;
    std::vector<std::string> symbols;
    // Local id used in place of an empty haptic sequence, if the tokenizer has one.
    std::optional<int> empty_sentinel;
};

TokenizerSpec freq_tokenizer_spec(const FreqTokenizerConfig& cfg);
TokenizerSpec rvq_tokenizer_spec(const RvqConfig& cfg);

// Byte-level text ids 0..255, then BOS/EOS/PAD, then one contiguous block per
// registered haptic tokenizer.
class Vocabulary {
public:
    static constexpr int kTextSize = 256;
    static constexpr int kBos = 256;
    static constexpr int kEos = 257;
    static constexpr int kPad = 258;
    static constexpr int kBaseSize = 259;

    Vocabulary() = default;

    int size() const { return size_; }

    // Appends a new haptic block. Throws if the tag is already registered.
    void register_haptic_tokens(const TokenizerSpec& spec);
    bool has(TokenizerKind kind) const;
    int haptic_offset(TokenizerKind kind) const;
    int haptic_count(TokenizerKind kind) const;
    std::optional<int> empty_sentinel(TokenizerKind kind) const;

    TokenClass classify(int id) const;
    // Bare symbol: byte value for text ("0x41"), "EOS" for specials, the
    // tokenizer symbol for haptic ids.
    std::string symbol(int id) const;
    int id_of(const std::string& symbol) const;

    std::vector<int> encode_text(const std::string& text) const;
    // Text bytes verbatim; specials and haptic ids as "<SYMBOL>".
    std::string detokenize(const std::vector<int>& ids) const;

    std::string serialize() const;
    static Vocabulary deserialize(const std::string& text);
    void save(const std::filesystem::path& path) const;
    static Vocabulary load(const std::filesystem::path& path);

    bool operator==(const Vocabulary& o) const;

private:
    struct Block {
        TokenizerKind kind;
        int offset;
        TokenizerSpec spec;
    };
    const Block& block(TokenizerKind kind) const;
    const Block* block_of(int id) const;

    int size_ = kBaseSize;
    std::vector<Block> blocks_;
};

struct PromptSample {
    HapticTokenSequence haptic;
    Category category = Category::sensory;
    std::optional<std::string> caption;
    std::vector<int> ids;
    // [caption_begin, caption_end) covers caption ids and the closing EOS.
    // Empty in inference mode.
    size_t caption_begin = 0;
    size_t caption_end = 0;

    bool has_caption_span() const { return caption_end > caption_begin; }
    std::vector<int> prompt_ids() const { return {ids.begin(), ids.begin() + static_cast<long>(caption_begin)}; }
};

// "haptic signal: <tokens>, its <category> description is: <caption><EOS>".
// haptic_stride > 1 keeps every stride-th haptic token.
PromptSample assemble(const HapticTokenSequence& haptic, Category category,
                      const std::optional<std::string>& caption, const Vocabulary& vocab,
                      int haptic_stride = 1);

// "its <category> description is: <caption><EOS>" with no haptic input; the
// text-only form used to fit the stand-in backbone before adaptation.
PromptSample assemble_signal_agnostic(Category category, const std::optional<std::string>& caption,
                                      const Vocabulary& vocab);

} // namespace haptix
