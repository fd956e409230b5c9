#pragma once

#include <nlohmann/json.hpp>

#include <fstream>
#include <string>
#include <vector>

#include "tinyrl/errors.hpp"

namespace tinyrl {

// One verifiable prompt. After the curation pipeline, `answer` parses and
// `difficulty` is set (1..5); 0 means unset.
struct TaskItem {
    std::string id;
    std::string prompt;
    std::string answer;
    int difficulty = 0;
    std::string source;

    nlohmann::json to_json() const {
        nlohmann::json j{{"id", id}, {"prompt", prompt}, {"answer", answer}, {"source", source}};
        if (difficulty > 0) j["difficulty"] = difficulty;
        return j;
    }

    static TaskItem from_json(const nlohmann::json& j) {
        TaskItem t;
        t.id = j.at("id").get<std::string>();
        t.prompt = j.at("prompt").get<std::string>();
        t.answer = j.at("answer").get<std::string>();
        t.difficulty = j.value("difficulty", 0);
        t.source = j.value("source", "");
        return t;
    }
};

inline std::vector<TaskItem> read_jsonl(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw DataError("read_jsonl: cannot open " + path);
    std::vector<TaskItem> items;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            items.push_back(TaskItem::from_json(nlohmann::json::parse(line)));
        } catch (const nlohmann::json::exception& e) {
            throw DataError(path + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return items;
}

inline void write_jsonl(const std::vector<TaskItem>& items, const std::string& path) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw DataError("write_jsonl: cannot open " + path);
    for (const auto& t : items) os << t.to_json().dump() << '\n';
}

}  // namespace tinyrl
