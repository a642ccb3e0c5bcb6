#include "judgebench/io.hpp"

#include "judgebench/error.hpp"

#include <atomic>
#include <fstream>
#include <sstream>
#include <thread>

namespace judgebench::io {

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw DataError("cannot open " + path.string());
    }
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

void write_file_atomic(const std::filesystem::path& path, std::string_view content) {
    static std::atomic<unsigned> counter{0};
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    auto tmp = path;
    tmp += ".tmp." + std::to_string(std::hash<std::thread::id>{}(std::this_thread::get_id())) + "." +
           std::to_string(counter.fetch_add(1));
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw DataError("cannot write " + tmp.string());
        }
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!out) {
            throw DataError("short write to " + tmp.string());
        }
    }
    std::filesystem::rename(tmp, path);
}

void for_each_jsonl(const std::filesystem::path& path,
                    const std::function<void(std::size_t, const nlohmann::json&)>& fn) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw DataError("cannot open " + path.string());
    }
    std::string line;
    std::size_t number = 0;
    while (std::getline(in, line)) {
        ++number;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line.find_first_not_of(" \t") == std::string::npos) {
            continue;
        }
        nlohmann::json value;
        try {
            value = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw DataError("line " + std::to_string(number) + ": malformed JSON (" + e.what() + ")");
        }
        fn(number, value);
    }
}

std::string to_jsonl(const std::vector<nlohmann::json>& rows) {
    std::string out;
    for (const auto& row : rows) {
        out += row.dump();
        out.push_back('\n');
    }
    return out;
}

std::string require_string(const nlohmann::json& obj, std::string_view field, std::size_t line) {
    const std::string key(field);
    if (!obj.is_object() || !obj.contains(key) || obj.at(key).is_null()) {
        throw DataError("line " + std::to_string(line) + ": missing field " + key);
    }
    if (!obj.at(key).is_string()) {
        throw DataError("line " + std::to_string(line) + ": field " + key + " must be a string");
    }
    return obj.at(key).get<std::string>();
}

std::string csv_escape(std::string_view field) {
    if (field.find_first_of(",\"\n\r") == std::string_view::npos) {
        return std::string(field);
    }
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') {
            out.push_back('"');
        }
        out.push_back(c);
    }
    out.push_back('"');
    return out;
}

std::vector<std::vector<std::string>> parse_csv(std::string_view content) {
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> row;
    std::string field;
    bool quoted = false;
    bool row_has_data = false;
    for (std::size_t i = 0; i < content.size(); ++i) {
        const char c = content[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < content.size() && content[i + 1] == '"') {
                    field.push_back('"');
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                field.push_back(c);
            }
            continue;
        }
        switch (c) {
        case '"':
            quoted = true;
            row_has_data = true;
            break;
        case ',':
            row.push_back(std::move(field));
            field.clear();
            row_has_data = true;
            break;
        case '\r':
            break;
        case '\n':
            if (row_has_data || !field.empty()) {
                row.push_back(std::move(field));
                rows.push_back(std::move(row));
            }
            field.clear();
            row.clear();
            row_has_data = false;
            break;
        default:
            field.push_back(c);
            row_has_data = true;
        }
    }
    if (quoted) {
        throw DataError("csv: unterminated quoted field");
    }
    if (row_has_data || !field.empty()) {
        row.push_back(std::move(field));
        rows.push_back(std::move(row));
    }
    return rows;
}

} // namespace judgebench::io
