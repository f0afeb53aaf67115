#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace memrecall {

using TokenId = std::int32_t;

/// Byte-level BPE in the GPT-2 convention: text is split by the GPT-2
/// pre-tokenization pattern, each piece's bytes are mapped to printable
/// symbols, and merges are applied lowest rank first (leftmost on ties).
class Tokenizer {
public:
    Tokenizer() = default;
    Tokenizer(std::unordered_map<std::string, TokenId> vocab, std::vector<std::pair<std::string, std::string>> merges);

    static Tokenizer load(const std::filesystem::path& vocab_json, const std::filesystem::path& merges_txt);

    std::vector<TokenId> encode(std::string_view text) const;
    std::string decode(std::span<const TokenId> ids) const;

    std::size_t size() const { return id_to_token_.size(); }
    const std::string& token(TokenId id) const;
    // -1 when absent.
    TokenId lookup(std::string_view symbol) const;

    const std::unordered_map<std::string, TokenId>& vocab() const { return vocab_; }
    const std::vector<std::pair<std::string, std::string>>& merges() const { return merges_; }

    /// GPT-2 pre-tokenization (contractions, letter runs, digit runs, other
    /// runs, whitespace), returned as byte ranges of the input.
    static std::vector<std::string_view> pretokenize(std::string_view text);

    /// Printable symbol (UTF-8) standing for a raw byte.
    static const std::string& byte_symbol(std::uint8_t b);

private:
    void bpe(std::string_view piece, std::vector<TokenId>& out) const;

    std::unordered_map<std::string, TokenId> vocab_;
    std::vector<std::string> id_to_token_;
    std::vector<std::pair<std::string, std::string>> merges_;
    std::unordered_map<std::string, std::size_t> merge_rank_;  // key: a + '\x01' + b
    std::unordered_map<std::string, std::uint8_t> symbol_to_byte_;
};

}  // namespace memrecall
