// Copyright 2026 The SPI Authors
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstddef>
#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "spi/error.hpp"
#include "spi/model/checkpoint.hpp"
#include "spi/model/example.hpp"

namespace spi::data {

using Json = nlohmann::ordered_json;

inline Json to_json(const DialogueExample& ex) {
    Json j;
    j["id"] = ex.id;
    j["history"] = ex.history;
    j["candidates"] = ex.candidates;
    j["gold_index"] = ex.gold_index ? Json(*ex.gold_index) : Json(nullptr);
    j["response"] = ex.response;
    return j;
}

namespace detail {

inline Sequence tokens_of(const Json& j, const char* field) {
    if (!j.is_array()) {
        throw ContractError(std::string(field) + " must be an array of token ids");
    }
    Sequence out;
    for (const auto& t : j) {
        if (!t.is_number_unsigned()) {
            throw ContractError(std::string(field) + " holds a non-integer or negative token");
        }
        out.push_back(t.get<Token>());
    }
    return out;
}

} // namespace detail

inline DialogueExample from_json(const Json& j) {
    static const char* const fields[] = {"id", "history", "candidates", "gold_index", "response"};
    if (!j.is_object()) {
        throw ContractError("example must be a JSON object");
    }
    for (const auto& [key, value] : j.items()) {
        bool known = false;
        for (const char* f : fields) {
            known = known || key == f;
        }
        if (!known) {
            throw ContractError("unknown field '" + key + "'");
        }
    }
    for (const char* f : fields) {
        if (!j.contains(f) && std::string(f) != "gold_index") {
            throw ContractError(std::string("missing field '") + f + "'");
        }
    }
    DialogueExample ex;
    if (!j["id"].is_number_unsigned()) {
        throw ContractError("id must be a non-negative integer");
    }
    ex.id = j["id"].get<std::size_t>();
    ex.history = detail::tokens_of(j["history"], "history");
    if (!j["candidates"].is_array()) {
        throw ContractError("candidates must be an array");
    }
    for (const auto& c : j["candidates"]) {
        ex.candidates.push_back(detail::tokens_of(c, "candidate"));
    }
    if (j.contains("gold_index") && !j["gold_index"].is_null()) {
        if (!j["gold_index"].is_number_unsigned()) {
            throw ContractError("gold_index must be a non-negative integer or null");
        }
        ex.gold_index = j["gold_index"].get<std::size_t>();
    }
    ex.response = detail::tokens_of(j["response"], "response");
    return ex;
}

/// One compact JSON object per line, newline-terminated.
inline std::string serialize_corpus(const std::vector<DialogueExample>& corpus) {
    std::string out;
    for (const auto& ex : corpus) {
        out += to_json(ex).dump();
        out += '\n';
    }
    return out;
}

/// Parses and validates each line against vocabulary size `vocab`; errors name the 1-based line.
inline std::vector<DialogueExample> parse_corpus(const std::string& text, std::size_t vocab,
                                                 const std::string& source = "corpus") {
    std::vector<DialogueExample> out;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) {
            continue;
        }
        try {
            DialogueExample ex = from_json(Json::parse(line));
            validate(ex, vocab);
            out.push_back(std::move(ex));
        } catch (const std::exception& e) {
            throw ContractError(source + " line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    return out;
}

inline void save_corpus(const std::filesystem::path& path, const std::vector<DialogueExample>& corpus) {
    write_file_atomic(path, serialize_corpus(corpus));
}

inline std::vector<DialogueExample> load_corpus(const std::filesystem::path& path,
                                                std::size_t vocab = static_cast<std::size_t>(-1)) {
    return parse_corpus(read_file(path), vocab, path.string());
}

} // namespace spi::data
