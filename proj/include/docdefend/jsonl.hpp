#ifndef DOCDEFEND_JSONL_HPP
#define DOCDEFEND_JSONL_HPP

#include <functional>
#include <string>

#include <json.hpp>

namespace docdefend {

// Reads a line-delimited JSON file. The callback receives the 1-based line
// number and the parsed object. Blank lines are skipped; a line that fails
// to parse or is not a JSON object raises an I/O error naming the line.
void ForEachJsonLine(const std::string& path,
                     const std::function<void(size_t, const nlohmann::json&)>& fn);

// Appends one compact JSON object per line.
class JsonlWriter {
public:
    explicit JsonlWriter(const std::string& path);
    ~JsonlWriter();
    JsonlWriter(const JsonlWriter&) = delete;
    JsonlWriter& operator=(const JsonlWriter&) = delete;

    void Write(const nlohmann::json& record);
    void Close();

private:
    struct Impl;
    Impl* impl_;
};

std::string ReadFileOrThrow(const std::string& path);
void WriteFileOrThrow(const std::string& path, const std::string& content);

}  // namespace docdefend

#endif  // DOCDEFEND_JSONL_HPP
