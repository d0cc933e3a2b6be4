#include "haptix/prompt.hpp"

#include "haptix/freq_tokenizer.hpp"
#include "haptix/rvq.hpp"

#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

namespace haptix {

namespace {

const char* const kSpecialNames[] = {"BOS", "EOS", "PAD"};

std::string byte_symbol(int b) {
    std::ostringstream s;
    s << "0x" << std::hex << std::setw(2) << std::setfill('0') << b;
    return s.str();
}

} // namespace

std::string to_string(Category c) {
    switch (c) {
    case Category::sensory:
        return "sensory";
    case Category::emotional:
        return "emotional";
    case Category::associative:
        return "associative";
    }
    return "sensory";
}

Category category_from_string(const std::string& s) {
    if (s == "sensory") return Category::sensory;
    if (s == "emotional") return Category::emotional;
    if (s == "associative") return Category::associative;
    throw std::invalid_argument("unknown category: " + s);
}

TokenizerSpec freq_tokenizer_spec(const FreqTokenizerConfig& cfg) {
    TokenizerSpec spec;
    spec.kind = TokenizerKind::frequency;
    for (int id = 0; id < cfg.vocab_size(); ++id) {
        spec.symbols.push_back(freq_token_symbol(id, cfg));
    }
    spec.empty_sentinel = cfg.pad_id();
    return spec;
}

TokenizerSpec rvq_tokenizer_spec(const RvqConfig& cfg) {
    TokenizerSpec spec;
    spec.kind = TokenizerKind::rvq;
    for (int id = 0; id < cfg.codebook_size; ++id) {
        spec.symbols.push_back("RVQ_" + std::to_string(id));
    }
    return spec;
}

void Vocabulary::register_haptic_tokens(const TokenizerSpec& spec) {
    if (has(spec.kind)) {
        throw std::invalid_argument("haptic tokenizer already registered: " + to_string(spec.kind));
    }
    if (spec.symbols.empty()) {
        throw std::invalid_argument("haptic tokenizer has an empty vocabulary");
    }
    blocks_.push_back(Block{spec.kind, size_, spec});
    size_ += static_cast<int>(spec.symbols.size());
}

bool Vocabulary::has(TokenizerKind kind) const {
    for (const auto& b : blocks_) {
        if (b.kind == kind) {
            return true;
        }
    }
    return false;
}

const Vocabulary::Block& Vocabulary::block(TokenizerKind kind) const {
    for (const auto& b : blocks_) {
        if (b.kind == kind) {
            return b;
        }
    }
    throw std::invalid_argument("haptic tokenizer not registered: " + to_string(kind));
}

const Vocabulary::Block* Vocabulary::block_of(int id) const {
    for (const auto& b : blocks_) {
        if (id >= b.offset && id < b.offset + static_cast<int>(b.spec.symbols.size())) {
            return &b;
        }
    }
    return nullptr;
}

int Vocabulary::haptic_offset(TokenizerKind kind) const { return block(kind).offset; }

int Vocabulary::haptic_count(TokenizerKind kind) const {
    return static_cast<int>(block(kind).spec.symbols.size());
}

std::optional<int> Vocabulary::empty_sentinel(TokenizerKind kind) const {
    return block(kind).spec.empty_sentinel;
}

TokenClass Vocabulary::classify(int id) const {
    if (id < 0 || id >= size_) {
        throw std::out_of_range("token id out of vocabulary: " + std::to_string(id));
    }
    if (id < kTextSize) {
        return TokenClass::text;
    }
    if (id < kBaseSize) {
        return TokenClass::special;
    }
    return TokenClass::haptic;
}

std::string Vocabulary::symbol(int id) const {
    switch (classify(id)) {
    case TokenClass::text:
        return byte_symbol(id);
    case TokenClass::special:
        return kSpecialNames[id - kTextSize];
    case TokenClass::haptic: {
        const Block* b = block_of(id);
        return b->spec.symbols[static_cast<size_t>(id - b->offset)];
    }
    }
    return {};
}

int Vocabulary::id_of(const std::string& symbol) const {
    for (int i = 0; i < 3; ++i) {
        if (symbol == kSpecialNames[i]) {
            return kTextSize + i;
        }
    }
    if (symbol.size() == 4 && symbol.starts_with("0x")) {
        return std::stoi(symbol.substr(2), nullptr, 16);
    }
    for (const auto& b : blocks_) {
        for (size_t i = 0; i < b.spec.symbols.size(); ++i) {
            if (b.spec.symbols[i] == symbol) {
                return b.offset + static_cast<int>(i);
            }
        }
    }
    throw std::invalid_argument("unknown token symbol: " + symbol);
}

std::vector<int> Vocabulary::encode_text(const std::string& text) const {
    std::vector<int> ids;
    ids.reserve(text.size());
    for (unsigned char c : text) {
        ids.push_back(static_cast<int>(c));
    }
    return ids;
}

std::string Vocabulary::detokenize(const std::vector<int>& ids) const {
    std::string out;
    for (int id : ids) {
        if (classify(id) == TokenClass::text) {
            out.push_back(static_cast<char>(id));
        } else {
            out += "<" + symbol(id) + ">";
        }
    }
    return out;
}

std::string Vocabulary::serialize() const {
    std::ostringstream out;
    out << "haptix-vocab 1\n";
    for (const auto& b : blocks_) {
        out << "block " << to_string(b.kind) << ' ' << b.offset << ' ' << b.spec.symbols.size();
        if (b.spec.empty_sentinel) {
            out << " sentinel " << *b.spec.empty_sentinel;
        }
        out << '\n';
    }
    for (int id = 0; id < size_; ++id) {
        const auto cls = classify(id);
        std::string tag = cls == TokenClass::text ? "text" : cls == TokenClass::special ? "special" : "haptic:" + to_string(block_of(id)->kind);
        out << id << '\t' << tag << '\t' << symbol(id) << '\n';
    }
    return out.str();
}

Vocabulary Vocabulary::deserialize(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || line != "haptix-vocab 1") {
        throw std::runtime_error("not a haptix vocabulary (version 1) file");
    }
    struct Pending {
        TokenizerSpec spec;
        int offset;
        size_t count;
    };
    std::vector<Pending> pending;
    std::vector<std::string> rows;
    while (std::getline(in, line)) {
        if (line.starts_with("block ")) {
            std::istringstream ls(line.substr(6));
            std::string kind, word;
            Pending p{};
            ls >> kind >> p.offset >> p.count;
            p.spec.kind = tokenizer_kind_from_string(kind);
            if (ls >> word) {
                int sentinel = 0;
                if (word != "sentinel" || !(ls >> sentinel)) {
                    throw std::runtime_error("malformed vocabulary block line: " + line);
                }
                p.spec.empty_sentinel = sentinel;
            }
            pending.push_back(std::move(p));
        } else if (!line.empty()) {
            rows.push_back(line);
        }
    }
    Vocabulary v;
    size_t row = kBaseSize;
    for (auto& p : pending) {
        if (p.offset != v.size_) {
            throw std::runtime_error("vocabulary blocks are not contiguous");
        }
        for (size_t i = 0; i < p.count; ++i, ++row) {
            if (row >= rows.size()) {
                throw std::runtime_error("vocabulary table is truncated");
            }
            const auto& r = rows[row];
            const auto t1 = r.find('\t');
            const auto t2 = r.find('\t', t1 + 1);
            if (t1 == std::string::npos || t2 == std::string::npos ||
                std::stoi(r.substr(0, t1)) != static_cast<int>(row)) {
                throw std::runtime_error("malformed vocabulary row: " + r);
            }
            p.spec.symbols.push_back(r.substr(t2 + 1));
        }
        v.register_haptic_tokens(p.spec);
    }
    if (rows.size() != static_cast<size_t>(v.size_)) {
        throw std::runtime_error("vocabulary table size does not match its blocks");
    }
    return v;
}

void Vocabulary::save(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error("cannot write " + path.string());
    }
    out << serialize();
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot open " + path.string());
    }
    std::stringstream ss;
    ss << in.rdbuf();
    return deserialize(ss.str());
}

bool Vocabulary::operator==(const Vocabulary& o) const {
    if (size_ != o.size_ || blocks_.size() != o.blocks_.size()) {
        return false;
    }
    for (size_t i = 0; i < blocks_.size(); ++i) {
        const auto& a = blocks_[i];
        const auto& b = o.blocks_[i];
        if (a.kind != b.kind || a.offset != b.offset || a.spec.symbols != b.spec.symbols ||
            a.spec.empty_sentinel != b.spec.empty_sentinel) {
            return false;
        }
    }
    return true;
}

PromptSample assemble(const HapticTokenSequence& haptic, Category category,
                      const std::optional<std::string>& caption, const Vocabulary& vocab, int haptic_stride) {
    if (haptic_stride < 1) {
        throw std::invalid_argument("haptic_stride must be at least 1");
    }
    const int offset = vocab.haptic_offset(haptic.source);
    const int count = vocab.haptic_count(haptic.source);

    PromptSample p;
    p.haptic = haptic;
    p.category = category;
    p.caption = caption;

    auto append_text = [&](const std::string& s) {
        const auto ids = vocab.encode_text(s);
        p.ids.insert(p.ids.end(), ids.begin(), ids.end());
    };

    append_text("haptic signal: ");
    if (haptic.ids.empty()) {
        const auto sentinel = vocab.empty_sentinel(haptic.source);
        if (!sentinel) {
            throw std::invalid_argument("empty haptic sequence and the tokenizer has no sentinel token");
        }
        p.ids.push_back(offset + *sentinel);
    }
    for (size_t i = 0; i < haptic.ids.size(); i += static_cast<size_t>(haptic_stride)) {
        const int local = haptic.ids[i];
        if (local < 0 || local >= count) {
            throw std::out_of_range("haptic token id outside the registered vocabulary");
        }
        p.ids.push_back(offset + local);
    }
    append_text(", its " + to_string(category) + " description is: ");
    p.caption_begin = p.ids.size();
    if (caption) {
        append_text(*caption);
        p.ids.push_back(Vocabulary::kEos);
    }
    p.caption_end = p.ids.size();
    return p;
}

PromptSample assemble_signal_agnostic(Category category, const std::optional<std::string>& caption,
                                      const Vocabulary& vocab) {
    PromptSample p;
    p.haptic.source = TokenizerKind::frequency;
    p.category = category;
    p.caption = caption;
    p.ids = vocab.encode_text("its " + to_string(category) + " description is: ");
    p.caption_begin = p.ids.size();
    if (caption) {
        const auto ids = vocab.encode_text(*caption);
        p.ids.insert(p.ids.end(), ids.begin(), ids.end());
        p.ids.push_back(Vocabulary::kEos);
    }
    p.caption_end = p.ids.size();
    return p;
}

} // namespace haptix
