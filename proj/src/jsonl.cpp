#include "docdefend/jsonl.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "docdefend/common.hpp"

namespace docdefend {

void ForEachJsonLine(const std::string& path,
                     const std::function<void(size_t, const nlohmann::json&)>& fn) {
    std::ifstream in(path);
    if (!in) ThrowIo("cannot open file: " + path);
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (Trim(line).empty()) continue;
        nlohmann::json record = nlohmann::json::parse(line, nullptr, false);
        if (record.is_discarded() || !record.is_object()) {
            ThrowIo(path + ":" + std::to_string(line_no) + ": malformed record (expected one JSON object per line)");
        }
        fn(line_no, record);
    }
}

struct JsonlWriter::Impl {
    std::string path;
    std::ofstream out;
};

JsonlWriter::JsonlWriter(const std::string& path) : impl_(new Impl{path, std::ofstream(path)}) {
    if (!impl_->out) {
        std::string p = impl_->path;
        delete impl_;
        impl_ = nullptr;
        ThrowIo("cannot open file for writing: " + p);
    }
}

JsonlWriter::~JsonlWriter() { delete impl_; }

void JsonlWriter::Write(const nlohmann::json& record) {
    impl_->out << record.dump() << '\n';
    if (!impl_->out) ThrowIo("write failed: " + impl_->path);
}

void JsonlWriter::Close() {
    impl_->out.close();
    if (impl_->out.fail()) ThrowIo("close failed: " + impl_->path);
}

std::string ReadFileOrThrow(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) ThrowIo("cannot open file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void WriteFileOrThrow(const std::string& path, const std::string& content) {
    std::filesystem::path p(path);
    if (p.has_parent_path()) {
        std::error_code ec;
        std::filesystem::create_directories(p.parent_path(), ec);
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) ThrowIo("cannot open file for writing: " + path);
    out << content;
    if (!out) ThrowIo("write failed: " + path);
}

}  // namespace docdefend
