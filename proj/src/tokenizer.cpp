#include "memrecall/tokenizer.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include <json.hpp>

#include "memrecall/errors.hpp"

namespace memrecall {

namespace {

struct CodepointRange {
    char32_t lo;
    char32_t hi;
};

#include "unicode_tables.inc"

template <std::size_t N>
bool in_ranges(const CodepointRange (&table)[N], char32_t cp) {
    auto it = std::upper_bound(std::begin(table), std::end(table), cp,
                               [](char32_t v, const CodepointRange& r) { return v < r.lo; });
    if (it == std::begin(table)) return false;
    --it;
    return cp >= it->lo && cp <= it->hi;
}

enum class CharClass { Letter, Number, Space, Other };

constexpr char32_t kInvalid = 0xFFFFFFFF;

struct DecodedChar {
    char32_t cp;
    std::size_t len;
};

DecodedChar decode_utf8(std::string_view s, std::size_t i) {
    const auto b0 = static_cast<unsigned char>(s[i]);
    if (b0 < 0x80) return {b0, 1};
    std::size_t len = 0;
    char32_t cp = 0;
    if ((b0 & 0xE0) == 0xC0) {
        len = 2;
        cp = b0 & 0x1F;
    } else if ((b0 & 0xF0) == 0xE0) {
        len = 3;
        cp = b0 & 0x0F;
    } else if ((b0 & 0xF8) == 0xF0) {
        len = 4;
        cp = b0 & 0x07;
    } else {
        return {kInvalid, 1};
    }
    if (i + len > s.size()) return {kInvalid, 1};
    for (std::size_t k = 1; k < len; ++k) {
        const auto b = static_cast<unsigned char>(s[i + k]);
        if ((b & 0xC0) != 0x80) return {kInvalid, 1};
        cp = (cp << 6) | (b & 0x3F);
    }
    // Overlong encodings and surrogates are treated as invalid bytes.
    static constexpr char32_t kMin[5] = {0, 0, 0x80, 0x800, 0x10000};
    if (cp < kMin[len] || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) return {kInvalid, 1};
    return {cp, len};
}

CharClass classify(char32_t cp) {
    if (cp == kInvalid) return CharClass::Other;
    if (cp < 0x80) {
        if ((cp >= 'a' && cp <= 'z') || (cp >= 'A' && cp <= 'Z')) return CharClass::Letter;
        if (cp >= '0' && cp <= '9') return CharClass::Number;
        if (cp == ' ' || (cp >= 0x09 && cp <= 0x0D) || (cp >= 0x1C && cp <= 0x1F)) return CharClass::Space;
        return CharClass::Other;
    }
    if (in_ranges(kLetterRanges, cp)) return CharClass::Letter;
    if (in_ranges(kNumberRanges, cp)) return CharClass::Number;
    if (in_ranges(kSpaceRanges, cp)) return CharClass::Space;
    return CharClass::Other;
}

std::string utf8_encode(char32_t cp) {
    std::string out;
    if (cp < 0x80) {
        out.push_back(static_cast<char>(cp));
    } else if (cp < 0x800) {
        out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else {
        out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    }
    return out;
}

const std::array<std::string, 256>& byte_symbols() {
    static const auto table = [] {
        std::array<std::string, 256> t;
        int extra = 0;
        for (int b = 0; b < 256; ++b) {
            const bool printable = (b >= '!' && b <= '~') || (b >= 0xA1 && b <= 0xAC) || (b >= 0xAE && b <= 0xFF);
            t[static_cast<std::size_t>(b)] = utf8_encode(printable ? static_cast<char32_t>(b) : 256 + extra++);
        }
        return t;
    }();
    return table;
}

std::string merge_key(std::string_view a, std::string_view b) {
    std::string k;
    k.reserve(a.size() + b.size() + 1);
    k.append(a);
    k.push_back(' ');
    k.append(b);
    return k;
}

}  // namespace

const std::string& Tokenizer::byte_symbol(std::uint8_t b) { return byte_symbols()[b]; }

Tokenizer::Tokenizer(std::unordered_map<std::string, TokenId> vocab,
                     std::vector<std::pair<std::string, std::string>> merges)
    : vocab_(std::move(vocab)), merges_(std::move(merges)) {
    id_to_token_.assign(vocab_.size(), std::string());
    std::vector<bool> seen(vocab_.size(), false);
    for (const auto& [tok, id] : vocab_) {
        if (id < 0 || static_cast<std::size_t>(id) >= vocab_.size() || seen[static_cast<std::size_t>(id)])
            throw DataError("malformed vocabulary: ids are not dense in [0, " + std::to_string(vocab_.size()) +
                            "), offending token '" + tok + "'");
        seen[static_cast<std::size_t>(id)] = true;
        id_to_token_[static_cast<std::size_t>(id)] = tok;
    }

    std::set<std::string> derivable;
    for (int b = 0; b < 256; ++b) {
        derivable.insert(byte_symbols()[static_cast<std::size_t>(b)]);
        symbol_to_byte_[byte_symbols()[static_cast<std::size_t>(b)]] = static_cast<std::uint8_t>(b);
    }
    for (std::size_t r = 0; r < merges_.size(); ++r) {
        const auto& [a, b] = merges_[r];
        if (!derivable.count(a) || !derivable.count(b))
            throw DataError("malformed merges: line " + std::to_string(r + 1) + " ('" + a + " " + b +
                            "') references a symbol not derivable from bytes and earlier merges");
        const std::string joined = a + b;
        if (!vocab_.count(joined))
            throw DataError("malformed merges: merged symbol '" + joined + "' is not in the vocabulary");
        derivable.insert(joined);
        merge_rank_.emplace(merge_key(a, b), r);
    }
}

Tokenizer Tokenizer::load(const std::filesystem::path& vocab_json, const std::filesystem::path& merges_txt) {
    std::ifstream vf(vocab_json);
    if (!vf) throw DataError("cannot open vocabulary file " + vocab_json.string());
    std::unordered_map<std::string, TokenId> vocab;
    try {
        const auto j = nlohmann::json::parse(vf);
        if (!j.is_object()) throw DataError("vocabulary file is not a JSON object: " + vocab_json.string());
        for (auto it = j.begin(); it != j.end(); ++it) {
            if (!it->is_number_integer())
                throw DataError("malformed vocabulary entry '" + it.key() + "' in " + vocab_json.string());
            vocab.emplace(it.key(), it->get<TokenId>());
        }
    } catch (const nlohmann::json::exception& e) {
        throw DataError("malformed vocabulary file " + vocab_json.string() + ": " + e.what());
    }

    std::ifstream mf(merges_txt);
    if (!mf) throw DataError("cannot open merges file " + merges_txt.string());
    std::vector<std::pair<std::string, std::string>> merges;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(mf, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || (lineno == 1 && line.rfind("#version", 0) == 0)) continue;
        const auto sp = line.find(' ');
        if (sp == std::string::npos || sp == 0 || sp + 1 == line.size() || line.find(' ', sp + 1) != std::string::npos)
            throw DataError("malformed merges file " + merges_txt.string() + " at line " + std::to_string(lineno));
        merges.emplace_back(line.substr(0, sp), line.substr(sp + 1));
    }
    return Tokenizer(std::move(vocab), std::move(merges));
}

const std::string& Tokenizer::token(TokenId id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= id_to_token_.size())
        throw DataError("token id " + std::to_string(id) + " out of range [0, " +
                        std::to_string(id_to_token_.size()) + ")");
    return id_to_token_[static_cast<std::size_t>(id)];
}

TokenId Tokenizer::lookup(std::string_view symbol) const {
    auto it = vocab_.find(std::string(symbol));
    return it == vocab_.end() ? -1 : it->second;
}

std::vector<std::string_view> Tokenizer::pretokenize(std::string_view s) {
    std::vector<std::string_view> pieces;
    const std::size_t n = s.size();
    auto cls_at = [&](std::size_t i) { return classify(decode_utf8(s, i).cp); };
    auto run_end = [&](std::size_t i, CharClass c) {
        while (i < n) {
            const auto d = decode_utf8(s, i);
            if (classify(d.cp) != c) break;
            i += d.len;
        }
        return i;
    };

    std::size_t i = 0;
    while (i < n) {
        // 's 't 're 've 'm 'll 'd
        if (s[i] == '\'' && i + 1 < n) {
            const char c1 = s[i + 1];
            if (c1 == 's' || c1 == 't' || c1 == 'm' || c1 == 'd') {
                pieces.push_back(s.substr(i, 2));
                i += 2;
                continue;
            }
            if (i + 2 < n) {
                const auto two = s.substr(i + 1, 2);
                if (two == "re" || two == "ve" || two == "ll") {
                    pieces.push_back(s.substr(i, 3));
                    i += 3;
                    continue;
                }
            }
        }
        // optional single space, then a letter / number / other run
        std::size_t j = (s[i] == ' ' && i + 1 < n) ? i + 1 : i;
        const CharClass c = cls_at(j);
        if (c != CharClass::Space) {
            const std::size_t e = run_end(j, c);
            pieces.push_back(s.substr(i, e - i));
            i = e;
            continue;
        }
        if (j != i) j = i;  // the space belongs to a whitespace run
        // whitespace: \s+(?!\S) then \s+
        std::size_t e = j;
        std::size_t last_start = j;
        while (e < n) {
            const auto d = decode_utf8(s, e);
            if (classify(d.cp) != CharClass::Space) break;
            last_start = e;
            e += d.len;
        }
        if (e < n && last_start > i) e = last_start;
        pieces.push_back(s.substr(i, e - i));
        i = e;
    }
    return pieces;
}

void Tokenizer::bpe(std::string_view piece, std::vector<TokenId>& out) const {
    std::vector<std::string> word;
    word.reserve(piece.size());
    for (unsigned char b : piece) word.push_back(byte_symbols()[b]);

    while (word.size() > 1) {
        std::size_t best_rank = std::numeric_limits<std::size_t>::max();
        std::size_t best_pos = 0;
        for (std::size_t p = 0; p + 1 < word.size(); ++p) {
            auto it = merge_rank_.find(merge_key(word[p], word[p + 1]));
            if (it != merge_rank_.end() && it->second < best_rank) {
                best_rank = it->second;
                best_pos = p;
            }
        }
        if (best_rank == std::numeric_limits<std::size_t>::max()) break;
        const std::string first = word[best_pos];
        const std::string second = word[best_pos + 1];
        std::vector<std::string> merged;
        merged.reserve(word.size());
        for (std::size_t p = 0; p < word.size();) {
            if (p + 1 < word.size() && word[p] == first && word[p + 1] == second) {
                merged.push_back(first + second);
                p += 2;
            } else {
                merged.push_back(std::move(word[p]));
                ++p;
            }
        }
        word = std::move(merged);
    }
    for (const auto& sym : word) {
        auto it = vocab_.find(sym);
        if (it == vocab_.end()) throw DataError("symbol '" + sym + "' is not in the vocabulary");
        out.push_back(it->second);
    }
}

std::vector<TokenId> Tokenizer::encode(std::string_view text) const {
    std::vector<TokenId> ids;
    for (auto piece : pretokenize(text)) bpe(piece, ids);
    return ids;
}

std::string Tokenizer::decode(std::span<const TokenId> ids) const {
    std::string out;
    for (TokenId id : ids) {
        const std::string& tok = token(id);
        for (std::size_t i = 0; i < tok.size();) {
            const auto d = decode_utf8(tok, i);
            auto it = symbol_to_byte_.find(std::string(tok.substr(i, d.len)));
            if (it == symbol_to_byte_.end())
                throw DataError("token " + std::to_string(id) + " contains a non-byte symbol");
            out.push_back(static_cast<char>(it->second));
            i += d.len;
        }
    }
    return out;
}

}  // namespace memrecall
