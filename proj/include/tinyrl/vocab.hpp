#pragma once

#include <nlohmann/json.hpp>

#include <string>
#include <vector>

#include "tinyrl/errors.hpp"

namespace tinyrl {

// Dense token-id vocabulary. Ids 0..size-1; pad and eos are fixed slots.
class Vocab {
public:
    static constexpr int kPadId = 0;
    static constexpr int kEosId = 1;

    explicit Vocab(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
        if (tokens_.size() < 3) throw ConfigError("Vocab: need pad, eos and at least one token");
        if (tokens_.size() > 64) throw ConfigError("Vocab: size > 64");
    }

    // Digits, arithmetic operators, '=', '.', boxed markers, eos, pad.
    static Vocab arithmetic() {
        std::vector<std::string> toks = {"<pad>", "<eos>"};
        for (char d = '0'; d <= '9'; ++d) toks.emplace_back(1, d);
        for (char c : {'+', '-', '*', '/', '=', '.'}) toks.emplace_back(1, c);
        toks.emplace_back("\\boxed{");
        toks.emplace_back("}");
        return Vocab(std::move(toks));
    }

    int size() const { return static_cast<int>(tokens_.size()); }
    const std::string& token(int id) const { return tokens_.at(static_cast<std::size_t>(id)); }

    // Greedy longest-match tokenization. Throws on untokenizable input.
    std::vector<int> encode(const std::string& text) const {
        std::vector<int> ids;
        std::size_t pos = 0;
        while (pos < text.size()) {
            int best = -1;
            std::size_t best_len = 0;
            for (int id = 0; id < size(); ++id) {
                const std::string& t = tokens_[static_cast<std::size_t>(id)];
                if (id == kPadId || id == kEosId) continue;
                if (t.size() > best_len && text.compare(pos, t.size(), t) == 0) {
                    best = id;
                    best_len = t.size();
                }
            }
            if (best < 0)
                throw DataError("Vocab::encode: untokenizable text at position " +
                                std::to_string(pos) + " in '" + text + "'");
            ids.push_back(best);
            pos += best_len;
        }
        return ids;
    }

    // Concatenates token strings, skipping pad and eos.
    std::string decode(const std::vector<int>& ids) const {
        std::string out;
        for (int id : ids) {
            if (id == kPadId || id == kEosId) continue;
            out += token(id);
        }
        return out;
    }

    nlohmann::json to_json() const { return nlohmann::json(tokens_); }

    static Vocab from_json(const nlohmann::json& j) {
        return Vocab(j.get<std::vector<std::string>>());
    }

private:
    std::vector<std::string> tokens_;
};

}  // namespace tinyrl
